"""Topological-phase classification from restricted randomized measurements.

Pipeline: prepare trivial / toric-code ground states on the edges of an L x L
torus, scramble each with a low-depth random Clifford circuit, estimate every
3-qubit patch density matrix from random-Pauli (per-site) classical shadows,
estimate the 38 visible-space expectation values of each patch with global
SU(2) measurements, compare states through an exponentiated inner-product
kernel averaged over patches, and project onto the top principal axis of the
centered kernel. The 1-D coordinate separates the phases even though no
linear function of the visible data can.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import channels, ensembles, estimator, qcore, visible
from .errors import NumericalDegeneracyError


# ---------------------------------------------------------------------------
# Torus edge lattice and stabilizer states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeLattice:
    """Qubits on the 2 L^2 edges of an L x L torus.

    Edge ids: horizontal edge (row i, column j) -> 2 i L + j, vertical edge
    (i, j) -> (2 i + 1) L + j. Patch alpha holds qubits alpha, alpha + L,
    alpha + 2L (alpha indexes the topmost qubit of a 3-in-a-column window).
    """

    L: int

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("torus needs L >= 2")

    @property
    def n_qubits(self) -> int:
        return 2 * self.L * self.L

    @property
    def n_patches(self) -> int:
        return 2 * self.L * self.L - 2 * self.L

    def h_edge(self, i: int, j: int) -> int:
        return 2 * (i % self.L) * self.L + (j % self.L)

    def v_edge(self, i: int, j: int) -> int:
        return (2 * (i % self.L) + 1) * self.L + (j % self.L)

    def patch(self, alpha: int) -> tuple:
        if not 0 <= alpha < self.n_patches:
            raise ValueError(f"patch index {alpha} out of range")
        return (alpha, alpha + self.L, alpha + 2 * self.L)

    def patches(self) -> list:
        return [self.patch(a) for a in range(self.n_patches)]

    def star_sites(self, i: int, j: int) -> tuple:
        return (self.h_edge(i, j), self.h_edge(i, j - 1), self.v_edge(i, j),
                self.v_edge(i - 1, j))

    def plaquette_sites(self, i: int, j: int) -> tuple:
        return (self.h_edge(i, j), self.h_edge(i + 1, j), self.v_edge(i, j),
                self.v_edge(i, j + 1))

    def matching(self, layer: int) -> list:
        """Disjoint nearest-neighbour pairs; alternating tilings by parity."""
        pairs = []
        for i in range(self.L):
            for j in range(self.L):
                if layer % 2 == 0:
                    pairs.append((self.h_edge(i, j), self.v_edge(i, j)))
                else:
                    pairs.append((self.v_edge(i, j), self.h_edge(i + 1, j)))
        return pairs


def _pauli_on_sites(n: int, sites, letter: str) -> np.ndarray:
    x = z = 0
    for site in sites:
        bit = 1 << (n - 1 - site)
        if letter in ("X", "Y"):
            x |= bit
        if letter in ("Z", "Y"):
            z |= bit
    return qcore.pauli_dense(n, x, z)


def star_operator(lat: EdgeLattice, i: int, j: int) -> np.ndarray:
    return _pauli_on_sites(lat.n_qubits, lat.star_sites(i, j), "X")


def plaquette_operator(lat: EdgeLattice, i: int, j: int) -> np.ndarray:
    return _pauli_on_sites(lat.n_qubits, lat.plaquette_sites(i, j), "Z")


def product_state(L: int) -> np.ndarray:
    lat = EdgeLattice(L)
    return qcore.basis_state(lat.n_qubits, 0)


def toric_ground(L: int) -> np.ndarray:
    """Project |0...0> onto the +1 space of every star: Prod_v (1 + A_v)/2."""
    lat = EdgeLattice(L)
    qcore.check_qubit_count(lat.n_qubits)
    psi = product_state(L)
    for i in range(L):
        for j in range(L):
            psi = 0.5 * (psi + star_operator(lat, i, j) @ psi)
    norm = np.linalg.norm(psi)
    if norm < 1e-12:
        raise NumericalDegeneracyError("stabilizer projection annihilated the seed state")
    return psi / norm


# ---------------------------------------------------------------------------
# Random low-depth Clifford circuits
# ---------------------------------------------------------------------------


def _canonical_phase(u: np.ndarray) -> np.ndarray:
    flat = u.ravel()
    idx = int(np.argmax(np.abs(flat) > 1e-8))
    return u * (np.conj(flat[idx]) / abs(flat[idx]))


def _matrix_key(u: np.ndarray) -> bytes:
    # adding 0.0 collapses -0.0 to +0.0 so rounded duplicates share bytes
    return (np.round(u, 9) + 0.0).tobytes()


@lru_cache(maxsize=1)
def two_qubit_cliffords() -> tuple:
    """All 11520 two-qubit Cliffords (mod phase) by closure over generators."""
    h, s, eye2 = qcore.HADAMARD, qcore.S_GATE, np.eye(2)
    cz = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
    gens = [np.kron(h, eye2), np.kron(eye2, h), np.kron(s, eye2),
            np.kron(eye2, s), cz]
    start = _canonical_phase(np.eye(4, dtype=complex))
    seen = {_matrix_key(start): start}
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for g in gens:
                cand = _canonical_phase(g @ u)
                key = _matrix_key(cand)
                if key not in seen:
                    seen[key] = cand
                    nxt.append(cand)
        frontier = nxt
    members = tuple(seen.values())
    assert len(members) == 11520
    return members


def _embed_two(gate: np.ndarray, a: int, b: int, n: int) -> np.ndarray:
    """Dense n-qubit operator acting with `gate` on sites (a, b)."""
    rest = [q for q in range(n) if q not in (a, b)]
    order = [a, b] + rest
    big = np.kron(gate, np.eye(1 << (n - 2), dtype=complex))
    t = big.reshape([2] * (2 * n))
    inv = np.argsort(order)
    t = t.transpose(list(inv) + [n + k for k in inv])
    return t.reshape(1 << n, 1 << n)


def random_lowdepth_circuit(lat: EdgeLattice, depth: int,
                            rng: np.random.Generator) -> np.ndarray:
    """`depth` layers of random 2-qubit Cliffords on alternating matchings."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    n = lat.n_qubits
    qcore.check_qubit_count(n)
    u = np.eye(1 << n, dtype=complex)
    cliffords = two_qubit_cliffords()
    for layer in range(depth):
        for a, b in lat.matching(layer):
            gate = cliffords[int(rng.integers(len(cliffords)))]
            u = _embed_two(gate, a, b, n) @ u
    return u


# ---------------------------------------------------------------------------
# Patch density matrices from random-Pauli shadows
# ---------------------------------------------------------------------------


def _snapshot_factors() -> np.ndarray:
    """snap[basis, bit] = 3 u†|bit><bit|u - identity (single-site inverse)."""
    snap = np.empty((3, 2, 2, 2), dtype=complex)
    for w, letter in enumerate(ensembles.CL2_BASES):
        u = ensembles.basis_rotation(letter)
        for bit in (0, 1):
            proj = np.outer(u.conj().T[:, bit], u[bit, :])
            snap[w, bit] = 3.0 * proj - np.eye(2)
    return snap


def patch_rdms(lat: EdgeLattice, state: np.ndarray, n_rp: int,
               rng, threads: int = 1) -> list:
    """3-qubit RDM estimates for every patch from one random-Pauli campaign.

    Returned matrices are Hermitized and trace-normalized but NOT projected
    to the PSD cone — project before using them as sampling states.
    """
    n = lat.n_qubits
    ens = ensembles.local_clifford(n)
    records = estimator.run_campaign(state, ens, n_rp, rng, threads=threads)
    letters = {c: i for i, c in enumerate(ensembles.CL2_BASES)}
    words = np.array([[letters[c] for c in w] for w in records.words],
                     dtype=np.int8)
    bits = np.array([[(b >> (n - 1 - q)) & 1 for q in range(n)]
                     for b in records.b], dtype=np.int8)
    snap = _snapshot_factors()
    out = []
    for sites in lat.patches():
        factors = [snap[words[:, q], bits[:, q]] for q in sites]
        rho = np.einsum("nab,ncd,nef->acebdf", *factors).reshape(8, 8)
        rho /= len(records)
        rho = 0.5 * (rho + rho.conj().T)
        rho /= np.trace(rho).real
        out.append(rho)
    return out


def psd_project(rho: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues and renormalize the trace to 1."""
    evals, evecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    evals = np.clip(evals, 0.0, None)
    total = evals.sum()
    if total <= 0:
        raise NumericalDegeneracyError("density estimate has no positive weight")
    return (evecs * (evals / total)) @ evecs.conj().T


# ---------------------------------------------------------------------------
# Visible-space patch features under global SU(2)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4)
def _patch_inverse_ops(n: int = 3) -> tuple:
    """M^{-1}(B_S) for the fixed enumeration of visible basis elements."""
    return tuple(channels.inverse_msu2(visible.build_B(s))
                 for s in visible.enumerate_sets(n))


def feature_count(n: int = 3) -> int:
    return len(visible.enumerate_sets(n))


def patch_features(rdm: np.ndarray, n_su2: int, rng,
                   threads: int = 1) -> np.ndarray:
    """Estimates of tr(rho B_S) for all 38 visible basis elements of a patch.

    One global-SU(2) campaign is shared by every feature; each B_S is read
    out through its own inverted-channel kernel.
    """
    n = qcore.num_qubits(rdm)
    rho = psd_project(rdm)
    ens = ensembles.global_su2(n)
    records = estimator.run_campaign(rho, ens, n_su2, rng, threads=threads)
    u = estimator._su2_rotations(records.thetas, records.psis)
    bits = estimator._site_bits(records.b, n)
    count = len(records)
    phi = np.ones((count, 1), dtype=complex)
    idx = np.arange(count)
    for site in range(n):
        rows = np.conj(u[idx, bits[:, site], :])
        phi = (phi[:, :, None] * rows[:, None, :]).reshape(count, -1)
    feats = np.empty(feature_count(n))
    for f, inv_op in enumerate(_patch_inverse_ops(n)):
        feats[f] = float(np.real(
            np.einsum("ni,ij,nj->n", phi.conj(), inv_op, phi)).mean())
    return feats


# ---------------------------------------------------------------------------
# Exponentiated kernel and 1-D kernel PCA
# ---------------------------------------------------------------------------


@dataclass
class PhaseKernel:
    matrix: np.ndarray
    lam: float
    renormalized: bool = True


def default_lambda(features: np.ndarray) -> float:
    """1/lambda = 3/(#states #patches) * sum of raw feature inner products."""
    n_states, n_patches = features.shape[:2]
    total = float((features**2).sum())
    if total <= 0:
        raise ValueError("features are identically zero")
    return n_states * n_patches / (3.0 * total)


def build_kernel(features, lam: float | None = None) -> PhaseKernel:
    """K[s1,s2] = mean over patches of exp(lambda o_a^(s1) . o_a^(s2))."""
    f = np.asarray(features, dtype=float)
    if f.ndim != 3:
        raise ValueError("expected features shaped (states, patches, dims)")
    if lam is None:
        lam = default_lambda(f)
    inner = np.einsum("spf,tpf->stp", f, f)
    k = np.exp(lam * inner).mean(axis=2)
    k = 0.5 * (k + k.T)
    d = np.sqrt(np.diag(k))
    k = k / np.outer(d, d)
    np.fill_diagonal(k, 1.0)
    return PhaseKernel(matrix=k, lam=float(lam), renormalized=True)


def kernel_pca_1d(k: PhaseKernel) -> np.ndarray:
    """Coordinates along the top principal axis of the centered kernel.

    Rows of the renormalized kernel are treated as per-state data vectors
    and mean-centered across states before extracting the leading axis
    (plain PCA on the similarity profiles). Double-centering the kernel
    instead lets intra-class scatter dominate the top axis at this few-patch
    scale and loses the phase split for any depth > 0.
    """
    if not k.renormalized:
        raise ValueError("renormalize the kernel before PCA")
    m = k.matrix
    s = m.shape[0]
    centered = m - m.mean(axis=0, keepdims=True)
    u, sv, _ = np.linalg.svd(centered, full_matrices=False)
    coords = u[:, 0] * sv[0]
    nz = np.nonzero(np.abs(coords) > 1e-12)[0]
    if nz.size and coords[nz[0]] < 0:
        coords = -coords
    return coords


def separation_margin(coords: np.ndarray, labels) -> float:
    """Smallest signed gap between the two label classes (>0 iff separable)."""
    labels = np.asarray(labels)
    names = sorted(set(labels.tolist()))
    if len(names) != 2:
        raise ValueError("need exactly two classes")
    a = coords[labels == names[0]]
    b = coords[labels == names[1]]
    return float(max(a.min() - b.max(), b.min() - a.max()))


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


TRIVIAL, TORIC = "trivial", "toric"


@dataclass
class PhaseRunResult:
    labels: list
    depth: int
    coords: np.ndarray
    kernel: PhaseKernel
    features: np.ndarray  # (states, patches, dims)


def run_phase_classification(L: int = 2, depth: int = 0,
                             states_per_phase: int = 10, n_rp: int = 10_000,
                             n_su2: int = 1_000, rng=None, threads: int = 1,
                             lam: float | None = None) -> PhaseRunResult:
    """Generate both phases, extract features, and project to 1-D."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    lat = EdgeLattice(L)
    bases = {TRIVIAL: product_state(L), TORIC: toric_ground(L)}
    labels = [TRIVIAL] * states_per_phase + [TORIC] * states_per_phase
    all_feats = []
    for label in labels:
        state_rng = rng.spawn(1)[0]
        psi = bases[label]
        if depth > 0:
            circuit = random_lowdepth_circuit(lat, depth, state_rng)
            psi = circuit @ psi
        rdms = patch_rdms(lat, psi, n_rp, state_rng, threads=threads)
        feats = np.stack([patch_features(r, n_su2, state_rng, threads=threads)
                          for r in rdms])
        all_feats.append(feats)
    features = np.stack(all_feats)
    kernel = build_kernel(features, lam=lam)
    coords = kernel_pca_1d(kernel)
    return PhaseRunResult(labels=labels, depth=depth, coords=coords,
                          kernel=kernel, features=features)


def result_to_json(result: PhaseRunResult, metadata: dict | None = None) -> str:
    doc = dict(metadata or {})
    doc["states"] = [
        {"phase_label": label, "depth": result.depth,
         "coordinate": float(coord)}
        for label, coord in zip(result.labels, result.coords)
    ]
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def kernel_to_csv(k: PhaseKernel, metadata: dict | None = None) -> str:
    buf = io.StringIO()
    for key, value in (metadata or {}).items():
        buf.write(f"# {key}={value}\n")
    buf.write(f"# lambda={k.lam!r}\n")
    s = k.matrix.shape[0]
    buf.write(",".join(f"s{j}" for j in range(s)) + "\n")
    for row in k.matrix:
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()
