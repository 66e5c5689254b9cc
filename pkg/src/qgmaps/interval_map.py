"""Piecewise-linear maps of the unit interval with exact rational arithmetic."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DomainError, MapError


def as_fraction(x) -> Fraction:
    """Coerce ints, floats, ``Fraction`` and ``"p/q"`` strings to ``Fraction``."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise DomainError(f"not a rational: {x!r}") from exc
    if isinstance(x, (int, float)):
        return Fraction(x)
    raise DomainError(f"cannot interpret {x!r} as a rational")


def format_fraction(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class Branch:
    left: Fraction
    right: Fraction
    slope: Fraction
    intercept: Fraction

    def at(self, x: Fraction) -> Fraction:
        return self.slope * x + self.intercept

    @property
    def image(self) -> tuple[Fraction, Fraction]:
        a, b = self.at(self.left), self.at(self.right)
        return (a, b) if a <= b else (b, a)

    def preimage(self, lo: Fraction, hi: Fraction) -> tuple[Fraction, Fraction] | None:
        """Part of the branch interval mapped into ``[lo, hi]``, or None."""
        x0 = (lo - self.intercept) / self.slope
        x1 = (hi - self.intercept) / self.slope
        if x0 > x1:
            x0, x1 = x1, x0
        a, b = max(x0, self.left), min(x1, self.right)
        if a >= b:
            return None
        return a, b


@dataclass(frozen=True)
class PiecewiseLinearMap:
    """Interval map ``S(x) = slope * x + intercept`` on consecutive equal atoms.

    Branch ``k`` lives on ``(k / M0, (k + 1) / M0)``.  Construct with
    :meth:`from_slopes` unless the branch endpoints are already at hand.
    """

    branches: tuple[Branch, ...]
    primary_atom_count: int
    name: str = field(default="", compare=False)

    def __post_init__(self):
        m0 = self.primary_atom_count
        if not isinstance(m0, int) or m0 < 1:
            raise MapError(f"M0 must be a positive integer, got {m0!r}")
        if len(self.branches) != m0:
            raise MapError(f"expected {m0} branches, got {len(self.branches)}")
        width = Fraction(1, m0)
        for k, br in enumerate(self.branches):
            if br.left != k * width or br.right != (k + 1) * width:
                raise MapError(f"branch {k} does not cover atom [{k}/{m0}, {k + 1}/{m0}]")
            if br.slope == 0:
                raise MapError(f"branch {k}: slope must be nonzero")
            lo, hi = br.image
            if lo < 0 or hi > 1:
                raise MapError(
                    f"branch {k}: image [{lo}, {hi}] leaves the unit interval"
                )

    @classmethod
    def from_slopes(cls, spec: Iterable[tuple[int, object]], name: str = "") -> "PiecewiseLinearMap":
        """Build from ``(slope, intercept)`` pairs listed left to right.

        Non-integer or contracting slopes are accepted here so that
        :func:`validate_map` can report them; every later stage requires a
        passing validation.
        """
        spec = list(spec)
        m0 = len(spec)
        if m0 == 0:
            raise MapError("a map needs at least one branch")
        branches = []
        for k, (slope, intercept) in enumerate(spec):
            if isinstance(slope, bool):
                raise MapError(f"branch {k}: slope must be a number, got {slope!r}")
            branches.append(
                Branch(Fraction(k, m0), Fraction(k + 1, m0), as_fraction(slope), as_fraction(intercept))
            )
        return cls(tuple(branches), m0, name)

    @property
    def slopes(self) -> list:
        return [int(b.slope) if b.slope.denominator == 1 else b.slope for b in self.branches]

    @property
    def lcm_slope(self) -> int:
        # only meaningful for integer slopes; numerators keep it defined otherwise
        return math.lcm(*(abs(b.slope.numerator) for b in self.branches))

    def branch_index(self, x) -> int:
        """Index of the branch used at ``x``; breakpoints go to the right branch."""
        x = as_fraction(x)
        if x < 0 or x > 1:
            raise DomainError(f"x = {x} outside [0, 1]")
        k = math.floor(x * self.primary_atom_count)
        return min(k, self.primary_atom_count - 1)

    def __call__(self, x) -> Fraction:
        return evaluate(self, x)

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "M0": self.primary_atom_count,
            "branches": [
                {
                    "slope": int(b.slope) if b.slope.denominator == 1 else format_fraction(b.slope),
                    "intercept": format_fraction(b.intercept),
                }
                for b in self.branches
            ],
        }

    @classmethod
    def from_dict(cls, data: dict, name: str = "") -> "PiecewiseLinearMap":
        try:
            m0 = data["M0"]
            raw = data["branches"]
        except (KeyError, TypeError) as exc:
            raise MapError(f"map definition needs 'M0' and 'branches': {exc}") from exc
        if not isinstance(m0, int) or len(raw) != m0:
            raise MapError(f"'M0' = {m0!r} must equal the number of branches ({len(raw)})")
        try:
            pairs = [(b["slope"], b["intercept"]) for b in raw]
        except (KeyError, TypeError) as exc:
            raise MapError(f"branch entry missing field: {exc}") from exc
        return cls.from_slopes(pairs, name=data.get("name", name))

    @classmethod
    def from_json(cls, path) -> "PiecewiseLinearMap":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise MapError(f"cannot read map file {path}: {exc}") from exc
        return cls.from_dict(data, name=path.stem)


def evaluate(smap: PiecewiseLinearMap, x) -> Fraction:
    """Apply the map exactly.

    Interior breakpoints are resolved with the branch to their right and
    ``x = 1`` uses the last branch.
    """
    x = as_fraction(x)
    return smap.branches[smap.branch_index(x)].at(x)


@dataclass(frozen=True)
class ValidationReport:
    measure_preserving: bool
    endpoints_forward_invariant: bool
    integer_slopes: bool
    slopes: list
    lcm_slope: int
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "measure_preserving": self.measure_preserving,
            "endpoints_forward_invariant": self.endpoints_forward_invariant,
            "integer_slopes": self.integer_slopes,
            "slopes": list(self.slopes),
            "lcm_slope": self.lcm_slope,
            "failures": list(self.failures),
        }


def preimage_density(smap: PiecewiseLinearMap, y: Fraction) -> Fraction:
    """Sum of ``1/|slope|`` over branches whose open image contains ``y``."""
    total = Fraction(0)
    for br in smap.branches:
        lo, hi = br.image
        if lo < y < hi:
            total += 1 / abs(br.slope)
    return total


def validate_map(smap: PiecewiseLinearMap) -> ValidationReport:
    failures = []
    m0 = smap.primary_atom_count
    integer_ok = True
    for k, br in enumerate(smap.branches):
        if br.slope.denominator != 1:
            integer_ok = False
            failures.append(f"branch {k}: slope {br.slope} is not an integer")

    # The preimage density is constant between consecutive image endpoints,
    # so checking one interior point per cell of that refinement is exact.
    cuts = {Fraction(k, m0) for k in range(m0 + 1)}
    for br in smap.branches:
        cuts.update(br.image)
    cuts = sorted(c for c in cuts if 0 <= c <= 1)
    measure_ok = True
    for a, b in zip(cuts, cuts[1:]):
        density = preimage_density(smap, (a + b) / 2)
        if density != 1:
            measure_ok = False
            failures.append(
                f"Lebesgue measure not preserved on ({a}, {b}): preimage density {density}"
            )

    grid = {Fraction(k, m0) for k in range(m0 + 1)}
    endpoints_ok = True
    for k, br in enumerate(smap.branches):
        for side, x in (("left", br.left), ("right", br.right)):
            v = br.at(x)
            if v not in grid:
                endpoints_ok = False
                failures.append(
                    f"branch {k}: one-sided value S({x}{'+' if side == 'left' else '-'}) = {v} "
                    f"is not an endpoint of the primary partition"
                )
    return ValidationReport(
        measure_preserving=measure_ok,
        endpoints_forward_invariant=endpoints_ok,
        integer_slopes=integer_ok,
        slopes=smap.slopes,
        lcm_slope=smap.lcm_slope,
        failures=failures,
    )


def doubling_map() -> PiecewiseLinearMap:
    return PiecewiseLinearMap.from_slopes([(2, 0), (2, -1)], name="doubling")


def tent_map() -> PiecewiseLinearMap:
    return PiecewiseLinearMap.from_slopes([(2, 0), (-2, 2)], name="tent")


FIXTURES = {"doubling": doubling_map, "tent": tent_map}


def load_map(spec) -> PiecewiseLinearMap:
    """Resolve a fixture name, a path to a JSON file, or an inline dict."""
    if isinstance(spec, PiecewiseLinearMap):
        return spec
    if isinstance(spec, dict):
        return PiecewiseLinearMap.from_dict(spec)
    if isinstance(spec, str):
        if spec in FIXTURES:
            return FIXTURES[spec]()
        return PiecewiseLinearMap.from_json(spec)
    raise MapError(f"cannot interpret map spec {spec!r}")


def grid_values(points: Sequence[Fraction], denominator: int) -> bool:
    return all((p * denominator).denominator == 1 for p in points)
