"""Discretised transfer operator and exact trajectory measures."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, NumericalFailure, ResourceBudgetError
from .interval_map import PiecewiseLinearMap
from .partitioning import Partition

DEFAULT_PATH_BUDGET = 10**7


@dataclass(frozen=True)
class StochasticMatrix:
    """Sparse doubly stochastic matrix with exact rational entries.

    ``rows[j]`` lists ``(k, B_jk)`` pairs with nonzero entries, sorted by ``k``.
    """

    size: int
    rows: tuple

    def entry(self, j: int, k: int) -> Fraction:
        for col, val in self.rows[j]:
            if col == k:
                return val
        return Fraction(0)

    def support(self, j: int) -> tuple[int, ...]:
        return tuple(k for k, _ in self.rows[j])

    def row_sums(self) -> list[Fraction]:
        return [sum((v for _, v in row), Fraction(0)) for row in self.rows]

    def column_sums(self) -> list[Fraction]:
        sums = [Fraction(0)] * self.size
        for row in self.rows:
            for k, v in row:
                sums[k] += v
        return sums

    def nnz(self) -> int:
        return sum(len(r) for r in self.rows)

    def csr_structure(self) -> tuple[np.ndarray, np.ndarray]:
        indptr = np.zeros(self.size + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(r) for r in self.rows])
        indices = np.fromiter((k for row in self.rows for k, _ in row), dtype=np.int64,
                              count=int(indptr[-1]))
        return indptr, indices

    def to_sparse(self) -> sp.csr_matrix:
        indptr, indices = self.csr_structure()
        data = np.fromiter((float(v) for row in self.rows for _, v in row), dtype=float,
                           count=len(indices))
        return sp.csr_matrix((data, indices, indptr), shape=(self.size, self.size))

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def triples(self):
        """``(row, col, value)`` for every nonzero entry, row-major."""
        for j, row in enumerate(self.rows):
            for k, v in row:
                yield j, k, v


def transition_matrix(smap: PiecewiseLinearMap, partition: Partition) -> StochasticMatrix:
    """``B_jk = mu(E_j & S^-1 E_k) / mu(E_j)`` by exact interval intersection."""
    M = partition.atom_count
    per_branch = partition.atoms_per_branch()
    width = Fraction(1, M)
    rows = []
    for j in range(M):
        br = smap.branches[j // per_branch]
        a, b = br.at(Fraction(j, M)), br.at(Fraction(j + 1, M))
        lo, hi = (a, b) if a <= b else (b, a)
        span = hi - lo
        row = []
        for k in range(math.floor(lo * M), math.ceil(hi * M)):
            overlap = min(hi, (k + 1) * width) - max(lo, k * width)
            if overlap > 0:
                row.append((k, overlap / span))
        rows.append(tuple(row))
    B = StochasticMatrix(M, tuple(rows))
    _verify_stochastic(B, smap, partition)
    return B


def _verify_stochastic(B: StochasticMatrix, smap: PiecewiseLinearMap, partition: Partition):
    for j, s in enumerate(B.row_sums()):
        if s != 1:
            raise NumericalFailure(f"row {j} of B sums to {s}")
    for k, s in enumerate(B.column_sums()):
        if s != 1:
            raise NumericalFailure(f"column {k} of B sums to {s}")
    per_branch = partition.atoms_per_branch()
    for j, row in enumerate(B.rows):
        expected = 1 / abs(smap.branches[j // per_branch].slope)
        if any(v != expected for _, v in row):
            raise NumericalFailure(f"row {j} of B has entries other than {expected}")


def path_measure(B: StochasticMatrix, path: Sequence[int]) -> Fraction:
    """Product ``B[j0, j1] * ... * B[j_{k-1}, j_k]``; 1 for a single atom."""
    for j in path:
        if not 0 <= j < B.size:
            raise ContractError(f"atom {j} outside 0..{B.size - 1}")
    out = Fraction(1)
    for j, k in zip(path, path[1:]):
        out *= B.entry(j, k)
        if out == 0:
            break
    return out


@dataclass(frozen=True)
class EquivalenceClasses:
    classes: tuple[tuple[int, ...], ...]
    class_of: tuple[int, ...]

    def __len__(self):
        return len(self.classes)

    @property
    def max_size(self) -> int:
        return max(len(c) for c in self.classes)

    def columns(self, B: StochasticMatrix, c: int) -> tuple[int, ...]:
        """Sorted union of the row supports in class ``c``."""
        cols = set()
        for j in self.classes[c]:
            cols.update(B.support(j))
        return tuple(sorted(cols))


def equivalence_classes(B: StochasticMatrix) -> EquivalenceClasses:
    """Group atoms whose images overlap, closed under transitivity."""
    parent = list(range(B.size))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    first_row_of_col = {}
    for j, row in enumerate(B.rows):
        for k, _ in row:
            other = first_row_of_col.setdefault(k, j)
            ra, rb = find(j), find(other)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    groups: dict[int, list[int]] = {}
    for j in range(B.size):
        groups.setdefault(find(j), []).append(j)
    classes = sorted((tuple(g) for g in groups.values()), key=lambda g: g[0])
    class_of = [0] * B.size
    for c, members in enumerate(classes):
        for j in members:
            class_of[j] = c
    return EquivalenceClasses(tuple(classes), tuple(class_of))


# trajectory enumeration -------------------------------------------------------

@dataclass
class PathFrontier:
    """All length-``T`` paths as flat arrays, one entry per path."""

    start: np.ndarray
    current: np.ndarray
    weight: np.ndarray
    obs_sum: np.ndarray
    history: np.ndarray | None = None


def enumerate_paths(indptr, indices, data, starts, T, observable=None, *,
                    budget=DEFAULT_PATH_BUDGET, keep_history=False,
                    weight_dtype=float) -> PathFrontier:
    """Expand every path of length ``T`` leaving ``starts``.

    ``data`` holds per-entry step weights in CSR order; the path weight is
    their product.  ``observable`` (length ``M``) is summed over the visited
    atoms ``b_1 .. b_T``.  Raises :class:`ResourceBudgetError` before any
    allocation that would exceed ``budget`` paths.
    """
    starts = np.asarray(starts, dtype=np.int64)
    degree = np.diff(indptr)
    total = _path_total(degree, indptr, indices, starts, T)
    if total > budget:
        raise ResourceBudgetError(
            f"{total} paths of length {T} exceed the budget of {budget}"
        )
    cur = starts.copy()
    start = starts.copy()
    weight = np.ones(len(starts), dtype=weight_dtype)
    obs_sum = np.zeros(len(starts))
    history = starts[:, None].copy() if keep_history else None
    for _ in range(T):
        reps = degree[cur]
        offsets = np.repeat(indptr[cur], reps)
        within = np.arange(offsets.size) - np.repeat(np.cumsum(reps) - reps, reps)
        entry = offsets + within
        nxt = indices[entry]
        start = np.repeat(start, reps)
        weight = np.repeat(weight, reps) * data[entry]
        obs_sum = np.repeat(obs_sum, reps)
        if observable is not None:
            obs_sum = obs_sum + observable[nxt]
        if keep_history:
            history = np.column_stack([np.repeat(history, reps, axis=0), nxt])
        cur = nxt
    return PathFrontier(start, cur, weight, obs_sum, history)


def _path_total(degree, indptr, indices, starts, T) -> int:
    """Count paths without expanding them; saturates far above any budget."""
    M = len(degree)
    A = sp.csr_matrix((np.ones(len(indices), dtype=np.int64), indices, indptr), shape=(M, M))
    cap = 2**62 // max(1, int(degree.max(initial=1)))
    ways = np.ones(M, dtype=np.int64)
    for _ in range(T):
        ways = np.minimum(A @ ways, cap)
    return int(sum(int(ways[s]) for s in starts))


def classical_time_variance(smap: PiecewiseLinearMap, partition: Partition, observable,
                            T: int, *, matrix: StochasticMatrix | None = None,
                            budget: int = DEFAULT_PATH_BUDGET, exact: bool = False):
    """Time-averaged variance of the locally averaged observable.

    Sums ``(T^-1 sum_{t=1..T} O[b_t])**2`` over every length-``T`` path
    weighted by its exact path measure, with the observable centred first.
    With ``exact=True`` and an observable carrying rational atom averages the
    result is a ``Fraction``.
    """
    if T < 1:
        raise ContractError(f"T must be positive, got {T}")
    B = matrix if matrix is not None else transition_matrix(smap, partition)
    M = B.size
    if len(observable.diagonal) != M:
        raise ContractError(f"observable has {len(observable.diagonal)} atoms, B has {M}")
    centred = observable.centered()
    indptr, indices = B.csr_structure()
    # every nonzero entry is 1/|s|, so integer denominators keep the measure exact
    denom = np.fromiter((v.denominator for row in B.rows for _, v in row), dtype=np.int64,
                        count=len(indices))
    if exact:
        if centred.exact is None:
            raise ContractError("exact mode needs an observable with rational atom averages")
        return _exact_time_variance(B, centred.exact, T, budget)
    paths = enumerate_paths(indptr, indices, denom, np.arange(M), T, centred.diagonal,
                            budget=budget, weight_dtype=np.int64)
    phi = paths.obs_sum / T
    return float(np.sum(phi * phi / paths.weight)) / M


def _exact_time_variance(B, values, T, budget):
    M = B.size
    total_paths = _path_total(np.array([len(r) for r in B.rows]), *B.csr_structure(),
                              np.arange(M), T)
    if total_paths > budget:
        raise ResourceBudgetError(f"{total_paths} paths exceed the budget of {budget}")
    acc = Fraction(0)
    stack = [(j, Fraction(1), Fraction(0), 0) for j in range(M)]
    while stack:
        j, w, s, depth = stack.pop()
        if depth == T:
            acc += w * (s / T) ** 2
            continue
        for k, v in B.rows[j]:
            stack.append((k, w * v, s + values[k], depth + 1))
    return acc / M


def trajectory_counts(B: StochasticMatrix, T: int) -> sp.csr_matrix:
    """Sparse matrix whose ``(s, f)`` entry counts nonzero-measure paths of length ``T``."""
    indptr, indices = B.csr_structure()
    A = sp.csr_matrix((np.ones(len(indices), dtype=np.int64), indices, indptr),
                      shape=(B.size, B.size))
    out = sp.identity(B.size, dtype=np.int64, format="csr")
    for _ in range(T):
        out = out @ A
    return out
