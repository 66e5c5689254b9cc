"""Observables and their atom averages.

An observable spec knows how to average itself over an interval.  The
closed-form kinds do this analytically (exactly, as ``Fraction``, when the
result is rational); tables and plain callables fall back to composite
Gauss-Legendre quadrature.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .classical import StochasticMatrix
from .errors import ConfigError, ContractError, PrecisionError
from .interval_map import PiecewiseLinearMap, as_fraction, format_fraction
from .partitioning import Partition

QUADRATURE_ORDER = 16
QUADRATURE_TOLERANCE = 1e-10


# -- specs --------------------------------------------------------------------

class ObservableSpec:
    """Base class: a function on [0, 1] that can be averaged over intervals."""

    kind = "abstract"
    lipschitz: float | None = None

    def value(self, x: float) -> float:
        raise NotImplementedError

    def average(self, a: Fraction, b: Fraction):
        """Mean of the function over ``[a, b]``, ``a < b``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Cosine(ObservableSpec):
    """``cos(2 pi k x)``."""

    k: int = 1
    kind = "cosine"

    @property
    def lipschitz(self):
        return 2 * math.pi * abs(self.k)

    def value(self, x):
        return math.cos(2 * math.pi * self.k * float(x))

    def average(self, a, b):
        if self.k == 0:
            return Fraction(1)
        w = 2 * math.pi * self.k
        # sin(w b) - sin(w a) = 2 cos(w (a+b)/2) sin(w (b-a)/2), stable for short atoms
        mid, half = float(a + b) / 2, float(b - a) / 2
        return 2 * math.cos(w * mid) * math.sin(w * half) / (w * float(b - a))

    def to_dict(self):
        return {"kind": "cosine", "k": self.k}


@dataclass(frozen=True)
class Linear(ObservableSpec):
    """``slope * x + offset``."""

    slope: Fraction = Fraction(1)
    offset: Fraction = Fraction(0)
    kind = "linear"

    @property
    def lipschitz(self):
        return abs(float(self.slope))

    def value(self, x):
        return float(self.slope) * float(x) + float(self.offset)

    def average(self, a, b):
        return self.slope * (a + b) / 2 + self.offset

    def to_dict(self):
        return {"kind": "linear", "slope": format_fraction(self.slope),
                "offset": format_fraction(self.offset)}


@dataclass(frozen=True)
class Constant(ObservableSpec):
    c: Fraction = Fraction(1)
    kind = "constant"
    lipschitz = 0.0

    def value(self, x):
        return float(self.c)

    def average(self, a, b):
        return self.c

    def to_dict(self):
        return {"kind": "constant", "c": format_fraction(self.c)}


@dataclass(frozen=True)
class Indicator(ObservableSpec):
    """Indicator of ``(lo, hi)``; not continuous, so no Lipschitz bound."""

    lo: Fraction
    hi: Fraction
    kind = "indicator"
    lipschitz = None

    def value(self, x):
        return 1.0 if float(self.lo) < float(x) < float(self.hi) else 0.0

    def average(self, a, b):
        overlap = min(b, self.hi) - max(a, self.lo)
        return max(overlap, Fraction(0)) / (b - a)

    def to_dict(self):
        return {"kind": "indicator", "a": format_fraction(self.lo), "b": format_fraction(self.hi)}


@dataclass(frozen=True)
class Power(ObservableSpec):
    """``x ** alpha`` for ``alpha > 0``; Hölder but not Lipschitz when ``alpha < 1``."""

    alpha: float = 0.5
    kind = "power"

    @property
    def lipschitz(self):
        return float(self.alpha) if self.alpha >= 1 else None

    def value(self, x):
        return float(x) ** self.alpha

    def average(self, a, b):
        e = self.alpha + 1
        return (float(b) ** e - float(a) ** e) / (e * float(b - a))

    def to_dict(self):
        return {"kind": "power", "alpha": self.alpha}


class Sampled(ObservableSpec):
    """Arbitrary callable, averaged by composite Gauss quadrature.

    ``breakpoints`` lists interior points where the function is not smooth;
    quadrature panels are split there.
    """

    kind = "sampled"

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], lipschitz: float | None = None,
                 breakpoints: Sequence[float] = (), order: int = QUADRATURE_ORDER,
                 tolerance: float = QUADRATURE_TOLERANCE, label: str = "sampled"):
        self.func = func
        self.lipschitz = lipschitz
        self.breakpoints = np.asarray(sorted(breakpoints), dtype=float)
        self.order = order
        self.tolerance = tolerance
        self.label = label

    def value(self, x):
        return float(self.func(np.asarray([float(x)]))[0])

    def _panels(self, a, b):
        inner = self.breakpoints[(self.breakpoints > a) & (self.breakpoints < b)]
        edges = np.concatenate([[a], inner, [b]])
        return edges[:-1], edges[1:]

    def _gauss(self, a, b, order):
        nodes, weights = np.polynomial.legendre.leggauss(order)
        lo, hi = self._panels(a, b)
        half = (hi - lo)[:, None] / 2
        x = (lo + hi)[:, None] / 2 + half * nodes[None, :]
        return float(np.sum(self.func(x) * weights[None, :] * half))

    def average(self, a, b):
        a, b = float(a), float(b)
        coarse = self._gauss(a, b, self.order)
        fine = self._gauss(a, b, 2 * self.order)
        if abs(fine - coarse) > self.tolerance * max(1.0, abs(fine)):
            raise PrecisionError(
                f"quadrature on [{a}, {b}] did not converge", residual=abs(fine - coarse)
            )
        return fine / (b - a)

    def to_dict(self):
        return {"kind": self.label, "lipschitz": self.lipschitz}


class Table(Sampled):
    """Piecewise-linear interpolant of ``(x, y)`` samples."""

    kind = "table"

    def __init__(self, xs, ys, lipschitz: float | None = None, source: str | None = None):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        order = np.argsort(xs)
        xs, ys = xs[order], ys[order]
        if xs.size < 2 or xs[0] > 0 or xs[-1] < 1:
            raise ConfigError("table must cover [0, 1] with at least two samples")
        super().__init__(lambda x: np.interp(x, xs, ys), lipschitz=lipschitz,
                         breakpoints=xs[(xs > 0) & (xs < 1)], label="table")
        self.xs, self.ys, self.source = xs, ys, source

    @classmethod
    def from_csv(cls, path, lipschitz=None):
        xs, ys = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    xs.append(float(row[0]))
                    ys.append(float(row[1]))
                except (ValueError, IndexError):
                    continue  # header line
        return cls(xs, ys, lipschitz=lipschitz, source=str(path))

    def to_dict(self):
        d = {"kind": "table", "lipschitz": self.lipschitz}
        if self.source:
            d["path"] = self.source
        return d


def observable_from_dict(data: dict, base_dir=None) -> ObservableSpec:
    """Parse ``{"kind": "cosine", "k": 1}`` and friends."""
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError(f"observable spec needs a 'kind': {data!r}")
    kind = data["kind"]
    try:
        if kind in ("cosine", "cosine_k"):
            return Cosine(int(data.get("k", 1)))
        if kind == "linear":
            return Linear(as_fraction(data.get("slope", 1)), as_fraction(data.get("offset", 0)))
        if kind == "constant":
            return Constant(as_fraction(data.get("c", 1)))
        if kind == "indicator":
            return Indicator(as_fraction(data["a"]), as_fraction(data["b"]))
        if kind == "power":
            return Power(float(data.get("alpha", 0.5)))
        if kind in ("table", "user_table"):
            path = Path(data["path"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            lip = data.get("lipschitz")
            return Table.from_csv(path, lipschitz=None if lip is None else float(lip))
    except KeyError as exc:
        raise ConfigError(f"observable '{kind}' is missing field {exc}") from exc
    raise ConfigError(f"unknown observable kind {kind!r}")


# -- discretised observables --------------------------------------------------

@dataclass(frozen=True)
class Observable:
    """Diagonal matrix of atom averages.

    ``exact`` carries the same values as ``Fraction`` when they are rational.
    """

    kind: str
    diagonal: np.ndarray
    mean: float
    exact: tuple | None = None
    lipschitz_bound: float | None = None
    spec: ObservableSpec | None = field(default=None, compare=False, repr=False)

    @property
    def size(self) -> int:
        return len(self.diagonal)

    @property
    def exact_mean(self):
        if self.exact is None:
            return None
        return sum(self.exact, Fraction(0)) / len(self.exact)

    def centered(self) -> "Observable":
        if self.exact is not None:
            m = self.exact_mean
            exact = tuple(v - m for v in self.exact)
            diag = np.array([float(v) for v in exact])
            return replace(self, exact=exact, diagonal=diag, mean=0.0)
        diag = self.diagonal - self.mean
        return replace(self, diagonal=diag, mean=float(np.mean(diag)) if diag.size else 0.0)

    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal)


def _build(spec: ObservableSpec, values: list, kind: str | None = None) -> Observable:
    if all(isinstance(v, (Fraction, int)) for v in values):
        exact = tuple(Fraction(v) for v in values)
        diag = np.array([float(v) for v in exact])
        mean = float(sum(exact, Fraction(0)) / len(exact))
    else:
        exact = None
        diag = np.array([float(v) for v in values])
        mean = float(np.mean(diag))
    return Observable(kind or spec.kind, diag, mean, exact, spec.lipschitz, spec)


def quantize_observable(spec: ObservableSpec, partition: Partition, *,
                        centered: bool = False) -> Observable:
    """``O_jj = M * integral of phi over atom j``."""
    M = partition.atom_count
    values = [spec.average(Fraction(j, M), Fraction(j + 1, M)) for j in range(M)]
    obs = _build(spec, values)
    return obs.centered() if centered else obs


def quantize_composed(spec: ObservableSpec, smap: PiecewiseLinearMap, partition: Partition, *,
                      centered: bool = False) -> Observable:
    """Atom averages of ``phi o S``.

    ``S`` is affine on every atom, so the average of ``phi o S`` over an atom
    is the average of ``phi`` over the atom's image.
    """
    M = partition.atom_count
    per_branch = partition.atoms_per_branch()
    values = []
    for j in range(M):
        br = smap.branches[j // per_branch]
        a, b = br.at(Fraction(j, M)), br.at(Fraction(j + 1, M))
        values.append(spec.average(min(a, b), max(a, b)))
    obs = _build(spec, values, kind=f"{spec.kind}_composed")
    lip = None if spec.lipschitz is None else spec.lipschitz * max(abs(float(s)) for s in smap.slopes)
    obs = replace(obs, lipschitz_bound=lip)
    return obs.centered() if centered else obs


def classical_pushforward(B: StochasticMatrix, O: Observable) -> Observable:
    """Diagonal ``B @ diag(O)``: the discretisation of ``phi o S``."""
    if B.size != O.size:
        raise ContractError(f"B has size {B.size}, observable has {O.size} atoms")
    if O.exact is not None:
        values = [sum((v * O.exact[k] for k, v in row), Fraction(0)) for row in B.rows]
        exact = tuple(values)
        diag = np.array([float(v) for v in exact])
        mean = float(sum(exact, Fraction(0)) / len(exact))
    else:
        exact = None
        diag = B.to_sparse() @ O.diagonal
        mean = float(np.mean(diag))
    return Observable(f"{O.kind}_pushforward", diag, mean, exact, None, O.spec)
