"""Randomized-measurement campaigns, kernel representations and estimates.

A kernel K(V, b) expresses an operator O over the outcome-projector family:

    O = sum_V p(V) sum_b K(V, b) V†|b><b|V          (reconstruction identity)

so that the empirical mean of K(V_s, b_s) over measurement records is an
unbiased estimator of tr(rho O). Discrete ensembles store K as a dense
(members x 2^n) table; the continuous global-SU(2) ensemble stores the
channel-inverted operator and evaluates <b|V M^{-1}(O) V†|b> on demand.

Campaign sampling is deterministic for a fixed seed independent of the worker
count: shots are cut into fixed-size chunks, each chunk gets its own child
generator spawned up-front from the caller's RNG, and threads only schedule
chunks.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import channels, ensembles, qcore
from .ensembles import (
    KIND_DISCRETE_SUBSAMPLE,
    KIND_GLOBAL_CL2,
    KIND_GLOBAL_SU2,
    KIND_LOCAL_CLIFFORD,
    Ensemble,
    SampledUnitary,
)
from .errors import RepresentabilityError

CHUNK = 4096

LSTSQ_RESIDUAL_TOL = 1e-6


# ---------------------------------------------------------------------------
# Measurement records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementRecord:
    v: SampledUnitary
    b: int
    shot_index: int
    campaign_id: str


class Records:
    """Columnar storage for a shot campaign; behaves like a list of records."""

    def __init__(self, kind: str, n: int, campaign_id: str, b: np.ndarray,
                 member_idx: np.ndarray | None = None,
                 thetas: np.ndarray | None = None,
                 phis: np.ndarray | None = None,
                 psis: np.ndarray | None = None,
                 words: list[str] | None = None):
        self.kind = kind
        self.n = n
        self.campaign_id = campaign_id
        self.b = np.asarray(b, dtype=np.int64)
        self.member_idx = member_idx
        self.thetas = thetas
        self.phis = phis
        self.psis = psis
        self.words = words

    def __len__(self) -> int:
        return self.b.size

    def unitary(self, i: int) -> SampledUnitary:
        if self.kind == KIND_GLOBAL_SU2:
            return SampledUnitary(self.kind, self.n, theta=float(self.thetas[i]),
                                  phi=float(self.phis[i]), psi=float(self.psis[i]))
        if self.kind == KIND_DISCRETE_SUBSAMPLE:
            return SampledUnitary(self.kind, self.n, theta=float(self.thetas[i]),
                                  phi=float(self.phis[i]), psi=float(self.psis[i]),
                                  index=int(self.member_idx[i]))
        if self.kind == KIND_GLOBAL_CL2:
            return SampledUnitary(self.kind, self.n,
                                  basis=ensembles.CL2_BASES[int(self.member_idx[i])],
                                  index=int(self.member_idx[i]))
        return SampledUnitary(self.kind, self.n, word=self.words[i])

    def __getitem__(self, i: int) -> MeasurementRecord:
        if not 0 <= i < len(self):
            raise IndexError(i)
        return MeasurementRecord(self.unitary(i), int(self.b[i]), i, self.campaign_id)

    def __iter__(self):
        return (self[i] for i in range(len(self)))


# ---------------------------------------------------------------------------
# Kernel tables
# ---------------------------------------------------------------------------


@dataclass
class KernelTable:
    """K(V, b) over an ensemble, satisfying the reconstruction identity.

    ``values`` is the dense table for discrete kinds; for the continuous
    global-SU(2) kind it is None and ``inv_op`` holds M^{-1}(O), evaluated
    lazily as <b|V inv_op V†|b>.
    """

    ens: Ensemble
    values: np.ndarray | None = None
    inv_op: np.ndarray | None = None
    residual: float = 0.0

    @property
    def density(self) -> np.ndarray:
        return self.ens.weights

    @property
    def n(self) -> int:
        return self.ens.n

    def evaluate(self, v: SampledUnitary, b: int) -> float:
        if self.values is not None:
            return float(self.values[v.index, b])
        u = ensembles.realize(v)
        return float(np.real(u @ self.inv_op @ u.conj().T)[b, b])

    def evaluate_records(self, records: Records) -> np.ndarray:
        if records.n != self.n or records.kind != self.ens.kind:
            raise ValueError("records were drawn from a different ensemble")
        if self.values is not None:
            return self.values[records.member_idx, records.b]
        return _su2_closure_values(self.inv_op, records.thetas, records.psis,
                                   records.b, self.n)


def _su2_rotations(thetas: np.ndarray, psis: np.ndarray) -> np.ndarray:
    """Batch of single-qubit Euler rotations with phi canonicalized to 0."""
    ct, st = np.cos(thetas / 2.0), np.sin(thetas / 2.0)
    right = np.exp(1j * psis / 2.0)
    u = np.empty((thetas.size, 2, 2), dtype=complex)
    u[:, 0, 0] = right * ct
    u[:, 0, 1] = np.conj(right) * st
    u[:, 1, 0] = -right * st
    u[:, 1, 1] = np.conj(right) * ct
    return u


def _site_bits(b: np.ndarray, n: int) -> np.ndarray:
    """(N, n) table of per-site bits, site 0 first."""
    shifts = np.arange(n - 1, -1, -1)
    return (b[:, None] >> shifts[None, :]) & 1


def _su2_closure_values(inv_op: np.ndarray, thetas, psis, b, n: int) -> np.ndarray:
    """<b|V A V†|b> for a batch of global rotations: phi_b† A phi_b."""
    u = _su2_rotations(np.asarray(thetas), np.asarray(psis))
    bits = _site_bits(np.asarray(b), n)
    count = u.shape[0]
    phi = np.ones((count, 1), dtype=complex)
    idx = np.arange(count)
    for site in range(n):
        rows = np.conj(u[idx, bits[:, site], :])  # V†|b> factors
        phi = (phi[:, :, None] * rows[:, None, :]).reshape(count, -1)
    return np.real(np.einsum("ni,ij,nj->n", phi.conj(), inv_op, phi))


# ---------------------------------------------------------------------------
# Stacked least-squares system for discrete subsamples
# ---------------------------------------------------------------------------


def _member_unitaries(ens: Ensemble) -> list[np.ndarray]:
    return [ensembles.realize(m) for m in ens.members]


def stacked_system(o: np.ndarray, ens: Ensemble):
    """Real-stacked system A y = o_vec with columns sqrt(p) * vec(V†|b><b|V).

    The substitution y = sqrt(p) K makes the minimum-norm solution of this
    system the kernel with the smallest variance under the maximally mixed
    state while keeping the p-weighted reconstruction identity exact.
    """
    if not ens.is_discrete:
        raise ValueError("stacked system needs a discrete ensemble")
    n = qcore.num_qubits(o)
    if n != ens.n:
        raise ValueError("operator/ensemble dimension mismatch")
    dim = 1 << n
    m = len(ens.members)
    cols = np.empty((m * dim, dim * dim), dtype=complex)
    sqrt_p = np.sqrt(ens.weights)
    for j, u in enumerate(_member_unitaries(ens)):
        rows = u  # row b of V is <b|V
        # vec(V†|b><b|V) = conj(row_b) outer row_b, flattened row-major
        outer = rows.conj()[:, :, None] * rows[:, None, :]
        cols[j * dim : (j + 1) * dim, :] = sqrt_p[j] * outer.reshape(dim, -1)
    a_real = np.concatenate([cols.real, cols.imag], axis=1).T
    b_real = np.concatenate([o.ravel().real, o.ravel().imag])
    return a_real, b_real, sqrt_p


def _solve_min_norm(a: np.ndarray, b: np.ndarray):
    y, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.linalg.norm(a @ y - b))
    return y, residual


def representability_residual(o: np.ndarray, ens: Ensemble) -> float:
    """Least-squares residual of the stacked system (0 when o is representable)."""
    a, b, _ = stacked_system(o, ens)
    return _solve_min_norm(a, b)[1]


def kernel_least_squares(o: np.ndarray, ens: Ensemble) -> KernelTable:
    """Minimum-norm kernel for a discrete subsample (unbiased when representable)."""
    a, b, sqrt_p = stacked_system(o, ens)
    y, residual = _solve_min_norm(a, b)
    if residual > LSTSQ_RESIDUAL_TOL:
        raise RepresentabilityError(
            f"operator is not representable by this unitary set "
            f"(residual {residual:.3e})", residual=residual)
    dim = 1 << ens.n
    values = (y.reshape(len(ens.members), dim) / sqrt_p[:, None])
    return KernelTable(ens, values=values, residual=residual)


def kernel_cs(o: np.ndarray, ens: Ensemble) -> KernelTable:
    """Classical-shadow kernel K(V,b) = <b|V M^{-1}(O) V†|b>."""
    if ens.kind == KIND_GLOBAL_SU2:
        inv = channels.inverse_msu2(o)
        return KernelTable(ens, inv_op=inv)
    if ens.kind == KIND_GLOBAL_CL2:
        inv = channels.inverse_mcl2(o)
        values = np.stack([
            np.real(np.diag(u @ inv @ u.conj().T))
            for u in _member_unitaries(ens)
        ])
        return KernelTable(ens, values=values)
    raise ValueError("kernel_cs needs an analytic channel (GlobalSU2 or GlobalCl2)")


# ---------------------------------------------------------------------------
# Campaigns
# ---------------------------------------------------------------------------


def _born_tables(rho: np.ndarray, ens: Ensemble) -> np.ndarray:
    """P(b | member) rows for every member of a discrete ensemble."""
    rows = []
    for u in _member_unitaries(ens):
        rows.append(qcore.born_probabilities(rho, u))
    return np.stack(rows)


def _su2_chunk(rho, n, count, rng):
    thetas, phis, psis = ensembles.haar_su2_angles(count, rng)
    u = _su2_rotations(thetas, psis)
    if rho.ndim == 1:
        t = np.broadcast_to(rho.reshape((1,) + (2,) * n), (count,) + (2,) * n).copy()
        for site in range(n):
            moved = np.moveaxis(t, 1 + site, -1)
            rotated = np.einsum("n...b,nab->n...a", moved, u)
            t = np.moveaxis(rotated, -1, 1 + site)
        probs = np.abs(t.reshape(count, -1)) ** 2
    else:
        dim = rho.shape[0]
        v = np.ones((count, 1, 1), dtype=complex)
        for _ in range(n):
            d = v.shape[1]
            v = np.einsum("nij,nab->niajb", v, u).reshape(count, d * 2, d * 2)
        probs = np.real(np.einsum("nij,jk,nik->ni", v, rho, v.conj()))
        del v
        probs = np.clip(probs, 0.0, None)
    probs /= probs.sum(axis=1, keepdims=True)
    b = qcore.sample_bits(probs, rng)
    return thetas, phis, psis, b


def _local_clifford_chunk(rho, n, count, rng):
    words = rng.integers(0, 3, size=(count, n))
    gates = np.stack([ensembles.basis_rotation(ch) for ch in ensembles.CL2_BASES])
    if rho.ndim == 1:
        t = np.broadcast_to(rho.reshape((1,) + (2,) * n), (count,) + (2,) * n).copy()
        for site in range(n):
            u = gates[words[:, site]]
            moved = np.moveaxis(t, 1 + site, -1)
            rotated = np.einsum("n...b,nab->n...a", moved, u)
            t = np.moveaxis(rotated, -1, 1 + site)
        probs = np.abs(t.reshape(count, -1)) ** 2
    else:
        probs = np.empty((count, rho.shape[0]))
        for i in range(count):
            u = qcore.kron_all(gates[w] for w in words[i])
            probs[i] = np.real(np.diag(u @ rho @ u.conj().T))
        probs = np.clip(probs, 0.0, None)
    probs /= probs.sum(axis=1, keepdims=True)
    b = qcore.sample_bits(probs, rng)
    return words, b


def run_campaign(rho: np.ndarray, ens: Ensemble, shots: int, rng,
                 campaign_id: str = "c0", threads: int = 1) -> Records:
    """Simulate `shots` randomized measurements of rho under the ensemble.

    ``rho`` may be a state vector or a density matrix. The result is
    deterministic for a fixed generator state regardless of ``threads``.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n = ens.n
    if qcore.num_qubits(rho) != n:
        raise ValueError("state/ensemble dimension mismatch")
    if shots < 1:
        raise ValueError("need at least one shot")
    sizes = [CHUNK] * (shots // CHUNK)
    if shots % CHUNK:
        sizes.append(shots % CHUNK)
    children = rng.spawn(len(sizes))

    if ens.is_discrete:
        tables = _born_tables(rho if rho.ndim == 2 else qcore.pure_density(rho), ens)
        weights = ens.weights

        def work(args):
            count, child = args
            idx = child.choice(len(ens.members), size=count, p=weights)
            b = qcore.sample_bits(tables[idx], child)
            return idx, b

    elif ens.kind == KIND_GLOBAL_SU2:

        def work(args):
            count, child = args
            return _su2_chunk(rho, n, count, child)

    elif ens.kind == KIND_LOCAL_CLIFFORD:

        def work(args):
            count, child = args
            return _local_clifford_chunk(rho, n, count, child)

    else:
        raise ValueError(f"cannot run campaigns over {ens.kind}")

    jobs = list(zip(sizes, children))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    if ens.is_discrete:
        idx = np.concatenate([r[0] for r in results])
        b = np.concatenate([r[1] for r in results])
        thetas = phis = psis = None
        if ens.kind == KIND_DISCRETE_SUBSAMPLE:
            th = np.array([m.theta for m in ens.members])
            ph = np.array([m.phi for m in ens.members])
            ps = np.array([m.psi for m in ens.members])
            thetas, phis, psis = th[idx], ph[idx], ps[idx]
        return Records(ens.kind, n, campaign_id, b, member_idx=idx,
                       thetas=thetas, phis=phis, psis=psis)
    if ens.kind == KIND_GLOBAL_SU2:
        thetas = np.concatenate([r[0] for r in results])
        phis = np.concatenate([r[1] for r in results])
        psis = np.concatenate([r[2] for r in results])
        b = np.concatenate([r[3] for r in results])
        return Records(ens.kind, n, campaign_id, b, thetas=thetas, phis=phis,
                       psis=psis)
    words_num = np.concatenate([r[0] for r in results])
    b = np.concatenate([r[1] for r in results])
    words = ["".join(ensembles.CL2_BASES[j] for j in row) for row in words_num]
    return Records(ens.kind, n, campaign_id, b, words=words)


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------


def default_batches(m_observables: int, delta: float) -> int:
    return math.ceil(2.0 * math.log(2.0 * m_observables / delta))


def estimate(records: Records, k: KernelTable, method: str = "mean",
             batches: int | None = None, m_observables: int = 1,
             delta: float = 0.1) -> float:
    """Empirical-average (or median-of-means) estimate of tr(rho O)."""
    if len(records) == 0:
        raise ValueError("no measurement records")
    vals = k.evaluate_records(records)
    if method == "mean":
        return float(vals.mean())
    if method == "median_of_means":
        if batches is None:
            batches = default_batches(m_observables, delta)
        batches = max(1, min(batches, vals.size))
        splits = np.array_split(vals, batches)
        return float(np.median([s.mean() for s in splits]))
    raise ValueError(f"unknown method {method!r}")


def var_max_bound(k: KernelTable) -> float:
    """State-independent variance bound sum_V p(V) max_b K(V,b)^2."""
    if k.values is not None:
        return float(np.dot(k.density, (k.values**2).max(axis=1)))
    nodes, weights = su2_quadrature_angles(k.n)
    vals = _su2_node_values(k.inv_op, nodes, k.n)
    return float(np.dot(weights, (vals**2).max(axis=1)))


def var_under_state(k: KernelTable, rho: np.ndarray) -> float:
    """Exact Var[K] under P_rho(V, b) = p(V) <b|V rho V†|b>."""
    rho = rho if rho.ndim == 2 else qcore.pure_density(rho)
    if k.values is not None:
        tables = _born_tables(rho, k.ens)
        mean = float(np.dot(k.density, (tables * k.values).sum(axis=1)))
        second = float(np.dot(k.density, (tables * k.values**2).sum(axis=1)))
        return second - mean**2
    nodes, weights = su2_quadrature_angles(k.n)
    vals = _su2_node_values(k.inv_op, nodes, k.n)
    probs = np.stack([
        qcore.born_probabilities(rho, _realize_node(node, k.n)) for node in nodes
    ])
    mean = float(np.dot(weights, (probs * vals).sum(axis=1)))
    second = float(np.dot(weights, (probs * vals**2).sum(axis=1)))
    return second - mean**2


def kernel_q(k: KernelTable, variant: str = "theorem") -> float:
    """The Q constant of the sampling-budget formula.

    ``theorem`` uses max|K| + the spectral norm of the represented operator;
    ``max_abs_k`` is the bare max|K| variant.
    """
    if k.values is not None:
        max_abs = float(np.abs(k.values).max())
    else:
        nodes, _ = su2_quadrature_angles(k.n)
        vals = _su2_node_values(k.inv_op, nodes, k.n)
        max_abs = float(np.abs(vals).max())
    if variant == "max_abs_k":
        return max_abs
    if variant == "theorem":
        return max_abs + qcore.spectral_norm(reconstruct(k))
    raise ValueError(f"unknown Q variant {variant!r}")


@dataclass
class Budget:
    """Inputs of the measurement-count formula for M observables."""

    m_observables: int
    epsilon: float
    delta: float
    var_bounds: tuple
    q_values: tuple
    biases: tuple = field(default_factory=tuple)
    q_variant: str = "theorem"

    def __post_init__(self):
        if not 0 < self.epsilon <= 1 or not 0 < self.delta <= 1:
            raise ValueError("epsilon and delta must lie in (0, 1]")
        if not self.biases:
            self.biases = tuple(0.0 for _ in self.var_bounds)
        if len(self.var_bounds) != len(self.q_values) or len(self.biases) != len(self.var_bounds):
            raise ValueError("per-observable lists must align")


def theorem1_shots(b: Budget) -> int:
    """N = ceil( 2 ln(M / 2 delta) * max_i (Var_i + eps_i Q_i / 3) / eps_i^2 )

    with eps_i = epsilon - bias_i (the error slack left for statistics).
    """
    worst = 0.0
    for var, q, bias in zip(b.var_bounds, b.q_values, b.biases):
        slack = b.epsilon - bias
        if slack <= 0:
            raise ValueError(f"bias {bias} consumes the whole error budget "
                             f"epsilon={b.epsilon}")
        worst = max(worst, (var + slack * q / 3.0) / slack**2)
    return math.ceil(2.0 * math.log(b.m_observables / (2.0 * b.delta)) * worst)


# ---------------------------------------------------------------------------
# Reconstruction (discrete sums and SU(2) quadrature)
# ---------------------------------------------------------------------------


def _realize_node(node, n: int) -> np.ndarray:
    theta, psi = node
    u = ensembles.su2_matrix(theta, 0.0, psi)
    out = np.array([[1.0 + 0.0j]])
    for _ in range(n):
        out = np.kron(out, u)
    return out


def su2_quadrature_angles(n: int):
    """(theta, psi) nodes and weights integrating the Haar measure exactly
    for the polynomial degrees that global-rotation kernels produce."""
    n_theta = 2 * n + 4
    n_psi = 4 * n + 4
    u_nodes, u_weights = np.polynomial.legendre.leggauss(n_theta)
    thetas = np.arccos(u_nodes)
    psi_nodes = 2.0 * np.pi * np.arange(n_psi) / n_psi
    nodes = [(t, p) for t in thetas for p in psi_nodes]
    weights = np.array([w / 2.0 / n_psi for w in u_weights for _ in range(n_psi)])
    return nodes, weights


def _su2_node_values(inv_op: np.ndarray, nodes, n: int) -> np.ndarray:
    dim = 1 << n
    out = np.empty((len(nodes), dim))
    for i, node in enumerate(nodes):
        v = _realize_node(node, n)
        out[i] = np.real(np.diag(v @ inv_op @ v.conj().T))
    return out


def reconstruct(k: KernelTable) -> np.ndarray:
    """sum_V p(V) sum_b K(V,b) V†|b><b|V (quadrature for the continuous kind)."""
    dim = 1 << k.n
    out = np.zeros((dim, dim), dtype=complex)
    if k.values is not None:
        for j, u in enumerate(_member_unitaries(k.ens)):
            out += k.density[j] * (u.conj().T * k.values[j]) @ u
        return out
    nodes, weights = su2_quadrature_angles(k.n)
    vals = _su2_node_values(k.inv_op, nodes, k.n)
    for w, node, row in zip(weights, nodes, vals):
        v = _realize_node(node, k.n)
        out += w * (v.conj().T * row) @ v
    return out


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------


def records_to_csv(records: Records, metadata: dict | None = None) -> str:
    buf = io.StringIO()
    for key, value in (metadata or {}).items():
        buf.write(f"# {key}={value}\n")
    buf.write(f"# n={records.n}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["campaign_id", "shot_index", "ensemble_kind", "v_params", "b"])
    for i in range(len(records)):
        v = records.unitary(i)
        writer.writerow([records.campaign_id, i, records.kind, v.params_text(),
                         format(int(records.b[i]), f"0{records.n}b")])
    return buf.getvalue()


def records_from_csv(text: str) -> tuple[Records, dict]:
    metadata: dict = {}
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            metadata[key.strip()] = value
        elif line:
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    if header != ["campaign_id", "shot_index", "ensemble_kind", "v_params", "b"]:
        raise ValueError("unrecognized record CSV header")
    n = int(metadata["n"])
    units, bs, campaign_id, kind = [], [], "c0", None
    for row in reader:
        campaign_id, _, kind, params, b_text = row
        units.append(SampledUnitary.from_params_text(kind, n, params))
        bs.append(int(b_text, 2))
    b = np.asarray(bs, dtype=np.int64)
    if kind in (KIND_GLOBAL_SU2, KIND_DISCRETE_SUBSAMPLE):
        thetas = np.array([u.theta for u in units])
        phis = np.array([u.phi for u in units])
        psis = np.array([u.psi for u in units])
        member_idx = None
        if kind == KIND_DISCRETE_SUBSAMPLE:
            member_idx = np.array([u.index for u in units], dtype=np.int64)
        recs = Records(kind, n, campaign_id, b, member_idx=member_idx,
                       thetas=thetas, phis=phis, psis=psis)
    elif kind == KIND_GLOBAL_CL2:
        member_idx = np.array([ensembles.CL2_BASES.index(u.basis) for u in units],
                              dtype=np.int64)
        recs = Records(kind, n, campaign_id, b, member_idx=member_idx)
    else:
        recs = Records(kind, n, campaign_id, b, words=[u.word for u in units])
    return recs, metadata
