"""Visible and invisible operator spaces under global SU(2) control.

The visible space (the span of V†|b><b|V) has an orthonormal basis indexed by
fixed-identity permutation-invariant Pauli families: all strings sharing the
identity positions R and the letter counts (n_X, n_Y, n_Z). For each family S

    B_S        = (1 / sqrt(2^n |S|)) * sum_j P_j
    Bperp_S_k  = (1 / sqrt(2^n k (k+1))) * (sum_{j<=k} P_j  -  k * P_{k+1})

with k = 1 .. |S|-1. The B_S span the visible space, the Bperp elements span
its orthogonal complement, and together they form an orthonormal basis of the
full operator space. Member ordering inside a family is lexicographic on the
Pauli word with X < Y < Z (identity positions fixed), which pins down the
Bperp elements.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import qcore
from .qcore import PauliString


@dataclass(frozen=True)
class FixedIdSet:
    """Family of Pauli words with identity exactly on ``r_mask`` and fixed counts."""

    n: int
    r_mask: int  # integer-bit-space mask of identity sites
    n_x: int
    n_y: int
    n_z: int

    def __post_init__(self):
        free = self.n - int(np.bitwise_count(self.r_mask))
        if self.n_x + self.n_y + self.n_z != free:
            raise ValueError("letter counts must fill the non-identity sites")
        if min(self.n_x, self.n_y, self.n_z) < 0:
            raise ValueError("negative letter count")

    @property
    def identity_sites(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if self.r_mask >> (self.n - 1 - i) & 1)

    @property
    def counts(self) -> tuple[int, int, int]:
        return (self.n_x, self.n_y, self.n_z)

    @property
    def size(self) -> int:
        """|S| = multinomial(n_free; n_X, n_Y, n_Z)."""
        from math import factorial

        free = self.n_x + self.n_y + self.n_z
        return factorial(free) // (
            factorial(self.n_x) * factorial(self.n_y) * factorial(self.n_z)
        )

    def members(self) -> list[PauliString]:
        """Family members in lexicographic word order (X < Y < Z)."""
        free_sites = [i for i in range(self.n) if not (self.r_mask >> (self.n - 1 - i) & 1)]
        letters = "X" * self.n_x + "Y" * self.n_y + "Z" * self.n_z
        out = []
        for perm in _multiset_permutations(sorted(letters)):
            word = ["I"] * self.n
            for site, ch in zip(free_sites, perm):
                word[site] = ch
            out.append(PauliString.from_word("".join(word)))
        return out


def _multiset_permutations(items: list[str]):
    """Distinct permutations of a sorted list, in lexicographic order."""
    if not items:
        yield []
        return
    seen = set()
    for i, item in enumerate(items):
        if item in seen:
            continue
        seen.add(item)
        rest = items[:i] + items[i + 1 :]
        for tail in _multiset_permutations(rest):
            yield [item] + tail


def classify(p: PauliString) -> FixedIdSet:
    """The unique family containing a given Pauli word."""
    full = (1 << p.n) - 1
    r_mask = full & ~(p.x | p.z)
    n_x = int(np.bitwise_count(p.x & ~p.z))
    n_y = int(np.bitwise_count(p.x & p.z))
    n_z = int(np.bitwise_count(p.z & ~p.x))
    return FixedIdSet(p.n, r_mask, n_x, n_y, n_z)


@lru_cache(maxsize=8)
def enumerate_sets(n: int) -> tuple[FixedIdSet, ...]:
    """All families for n sites; the count matches 2^n (n^2 + 7n + 8) / 8.

    Order is fixed (identity mask ascending, then counts) so that feature
    vectors indexed by this enumeration are stable.
    """
    qcore.check_qubit_count(n)
    sets = []
    for r_mask in range(1 << n):
        free = n - int(np.bitwise_count(r_mask))
        for n_x in range(free, -1, -1):
            for n_y in range(free - n_x, -1, -1):
                sets.append(FixedIdSet(n, r_mask, n_x, n_y, free - n_x - n_y))
    return tuple(sets)


def expected_set_count(n: int) -> int:
    return (1 << n) * (n * n + 7 * n + 8) // 8


def build_B(s: FixedIdSet) -> np.ndarray:
    """Visible basis element for the family."""
    dim = 1 << s.n
    out = np.zeros((dim, dim), dtype=complex)
    for p in s.members():
        out += p.to_dense()
    return out / np.sqrt(dim * s.size)


def build_Bperp(s: FixedIdSet, k: int) -> np.ndarray:
    """Invisible basis element number k (1 <= k <= |S|-1)."""
    size = s.size
    if size < 2:
        raise ValueError("family with a single member has no orthogonal complement")
    if not 1 <= k <= size - 1:
        raise ValueError(f"k must lie in 1..{size - 1}")
    members = s.members()
    dim = 1 << s.n
    out = np.zeros((dim, dim), dtype=complex)
    for p in members[:k]:
        out += p.to_dense()
    out -= k * members[k].to_dense()
    return out / np.sqrt(dim * k * (k + 1))


@lru_cache(maxsize=8)
def _family_index_table(n: int):
    """For each Pauli index pair (x, z): which family, and family member lists.

    Returns (set_id[x, z] table, list of flat Pauli indices per family) with
    flat index x * 2^n + z.
    """
    sets = enumerate_sets(n)
    lookup = {s: i for i, s in enumerate(sets)}
    dim = 1 << n
    table = np.empty((dim, dim), dtype=np.int64)
    members: list[list[int]] = [[] for _ in sets]
    full = dim - 1
    for x in range(dim):
        for z in range(dim):
            r_mask = full & ~(x | z)
            n_x = int(np.bitwise_count(x & ~z))
            n_y = int(np.bitwise_count(x & z))
            n_z = int(np.bitwise_count(z & ~x))
            sid = lookup[FixedIdSet(n, r_mask, n_x, n_y, n_z)]
            table[x, z] = sid
            members[sid].append(x * dim + z)
    return table, members


def family_coefficients(a: np.ndarray) -> np.ndarray:
    """tr(B_S a) for every family S, in enumerate_sets order."""
    n = qcore.num_qubits(a)
    coeffs = qcore.pauli_decompose(a).ravel()
    table, members = _family_index_table(n)
    del table
    dim = 1 << n
    sets = enumerate_sets(n)
    out = np.empty(len(sets), dtype=complex)
    for i, s in enumerate(sets):
        out[i] = np.sqrt(dim / s.size) * coeffs[members[i]].sum()
    return out


def visible_from_family_coefficients(n: int, amps: np.ndarray) -> np.ndarray:
    """Dense operator sum_S amps[S] * B_S."""
    dim = 1 << n
    sets = enumerate_sets(n)
    _, members = _family_index_table(n)
    coeffs = np.zeros(dim * dim, dtype=complex)
    for i, s in enumerate(sets):
        coeffs[members[i]] = amps[i] / np.sqrt(dim * s.size)
    return qcore.pauli_recompose(coeffs.reshape(dim, dim))


def project_visible(o: np.ndarray, n: int | None = None) -> np.ndarray:
    """Orthogonal projection onto span{B_S}.

    In Pauli-coefficient space this is simply averaging the coefficients
    within each family (every word belongs to exactly one family, and B_S is
    the flat unit vector over its members).
    """
    if n is None:
        n = qcore.num_qubits(o)
    elif n != qcore.num_qubits(o):
        raise ValueError("declared n does not match the operator dimension")
    dim = 1 << n
    coeffs = qcore.pauli_decompose(o).ravel()
    _, members = _family_index_table(n)
    out = np.zeros_like(coeffs)
    for idx in members:
        out[idx] = coeffs[idx].mean()
    return qcore.pauli_recompose(out.reshape(dim, dim))


def invisible_norm(o: np.ndarray) -> float:
    """Hilbert-Schmidt norm of the component outside the visible space."""
    return qcore.hs_norm(o - project_visible(o))
