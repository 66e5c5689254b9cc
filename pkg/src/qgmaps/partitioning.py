"""Uniform refinements of the unit interval adapted to a map.

Atoms are labelled ``0 .. M - 1``; atom ``j`` is the interval
``(j / M, (j + 1) / M)``.  They are never materialised as interval lists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import DomainError, PartitionError
from .interval_map import PiecewiseLinearMap, as_fraction, validate_map


@dataclass(frozen=True)
class Partition:
    level: int
    atom_count: int
    primary_atom_count: int
    refinement_factor: int

    @property
    def atom_measure(self) -> Fraction:
        return Fraction(1, self.atom_count)

    def endpoints(self):
        M = self.atom_count
        return (Fraction(k, M) for k in range(M + 1))

    def atom(self, j: int) -> tuple[Fraction, Fraction]:
        if not 0 <= j < self.atom_count:
            raise DomainError(f"atom {j} outside 0..{self.atom_count - 1}")
        return Fraction(j, self.atom_count), Fraction(j + 1, self.atom_count)

    def midpoint(self, j: int) -> Fraction:
        a, b = self.atom(j)
        return (a + b) / 2

    def atoms_per_branch(self) -> int:
        return self.atom_count // self.primary_atom_count

    def branch_of_atom(self, j: int) -> int:
        return j // self.atoms_per_branch()

    def contains(self, other: "Partition") -> bool:
        """True when every endpoint of ``other`` is an endpoint of ``self``."""
        return self.atom_count % other.atom_count == 0


def atom_index(partition: Partition, x) -> int:
    """Atom holding ``x``, with atoms closed on the right; ``x = 0`` is in atom 0."""
    x = as_fraction(x)
    if x < 0 or x > 1:
        raise DomainError(f"x = {x} outside [0, 1]")
    if x == 0:
        return 0
    return math.ceil(x * partition.atom_count) - 1


def _on_grid(x: Fraction, M: int) -> bool:
    return (x * M).denominator == 1


def _check_forward_invariance(smap: PiecewiseLinearMap, M: int) -> str | None:
    per_branch = M // smap.primary_atom_count
    for k, br in enumerate(smap.branches):
        for i in range(per_branch + 1):
            x = br.left + Fraction(i, M)
            v = br.at(x)
            if not _on_grid(v, M):
                return f"S({x}) = {v} on branch {k} is not an endpoint of the grid 1/{M}"
    return None


def _check_preimages(smap: PiecewiseLinearMap, n: int, M: int) -> str | None:
    m0 = smap.primary_atom_count
    layer = {Fraction(k, m0) for k in range(m0 + 1)}
    for depth in range(1, n + 1):
        nxt = set()
        for e in layer:
            for br in smap.branches:
                x = (e - br.intercept) / br.slope
                if br.left <= x <= br.right:
                    nxt.add(x)
        for x in nxt:
            if not _on_grid(x, M):
                return f"pre-image {x} of depth {depth} is not on the grid 1/{M}"
        layer = nxt
    return None


def build_partition(smap: PiecewiseLinearMap, n: int, *, verify: bool = True) -> Partition:
    """Level-``n`` partition with ``M0 * p**n`` atoms, ``p`` the lcm of |slopes|.

    With ``verify`` the two partition conditions are checked exactly:
    forward invariance of the endpoint set and containment of every
    ``j``-th pre-image (``j <= n``) of the primary endpoints.
    """
    if n < 0:
        raise DomainError(f"level must be nonnegative, got {n}")
    report = validate_map(smap)
    if not report.ok:
        raise PartitionError("map fails validation: " + "; ".join(report.failures))
    p = smap.lcm_slope
    M = smap.primary_atom_count * p**n
    if verify:
        problem = _check_forward_invariance(smap, M)
        if problem:
            raise PartitionError(f"forward invariance violated: {problem}")
        problem = _check_preimages(smap, n, M)
        if problem:
            raise PartitionError(f"pre-image containment violated: {problem}")
    return Partition(level=n, atom_count=M, primary_atom_count=smap.primary_atom_count,
                     refinement_factor=p)
