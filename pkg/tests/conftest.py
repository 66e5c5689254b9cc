"""Shared fixtures and independent oracles.

The oracles here work from the raw ``(slope, intercept)`` lists and never
call into the package, so agreement with them is a real cross-check.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from qgmaps.interval_map import PiecewiseLinearMap

DOUBLING = [(2, 0), (2, -1)]
TENT = [(2, 0), (-2, 2)]
# unequal slopes: rows of B carry 1/2 or 1/4, so only a hand-made block quantizes it
UNEQUAL = [(2, 0), (2, 0), (4, -2), (4, -3)]

ACCEPTANCE_LINES: dict[int, str] = {}


def affine_branches(spec):
    """``[(lo, hi, a, b)]``: branch ``k`` is ``x -> a x + b`` on ``[lo, hi]``."""
    m0 = len(spec)
    return [(Fraction(k, m0), Fraction(k + 1, m0), Fraction(a), Fraction(b))
            for k, (a, b) in enumerate(spec)]


def _clip(lo, hi, a, b, ylo, yhi):
    """Sub-interval of ``[lo, hi]`` where ``a x + b`` lies in ``[ylo, yhi]``."""
    x1, x2 = (ylo - b) / a, (yhi - b) / a
    if x1 > x2:
        x1, x2 = x2, x1
    lo, hi = max(lo, x1), min(hi, x2)
    return (lo, hi) if lo < hi else None


def start_pieces(M, j0):
    return [(Fraction(j0, M), Fraction(j0 + 1, M), Fraction(1), Fraction(0))]


def extend_pieces(branches, M, pieces, j):
    """Keep the points whose next image lies in atom ``j``.

    Pieces are ``(lo, hi, a, b)`` with ``S^t x = a x + b`` on ``[lo, hi]``;
    each step splits along the branches and intersects with the atom.
    """
    nxt = []
    for lo, hi, a, b in pieces:
        for blo, bhi, sa, sb in branches:
            # points whose current image lies in this branch ...
            cut = _clip(lo, hi, a, b, blo, bhi)
            if cut is None:
                continue
            # ... and whose next image lies in atom j
            na, nb = sa * a, sa * b + sb
            cut = _clip(cut[0], cut[1], na, nb, Fraction(j, M), Fraction(j + 1, M))
            if cut is not None:
                nxt.append((cut[0], cut[1], na, nb))
    return nxt


def pieces_measure(pieces):
    return sum((hi - lo for lo, hi, _, _ in pieces), Fraction(0))


def cylinder_measure(spec, M, path):
    """Lebesgue measure of ``{x in E_b0 : S^t x in E_bt for all t}``."""
    branches = affine_branches(spec)
    pieces = start_pieces(M, path[0])
    for j in path[1:]:
        pieces = extend_pieces(branches, M, pieces, j)
    return pieces_measure(pieces)


def oracle_path_measure(spec, M, path):
    return cylinder_measure(spec, M, path) * M


def oracle_B(spec, M):
    return [[oracle_path_measure(spec, M, (j, k)) for k in range(M)] for j in range(M)]


def correlation_variance(B_dense: np.ndarray, values, T: int):
    """``T^-2 sum_{t,t'} M^-1 <O, B^|t-t'| O>`` for a centred observable.

    Works with ``Fraction`` object arrays as well as floats.
    """
    M = len(values)
    mean = sum(values) / M
    o = np.array([v - mean for v in values], dtype=object)
    B = np.array(B_dense, dtype=object)
    corr = []
    v = o.copy()
    for _ in range(T):
        corr.append(sum(o * v) / M)
        v = B.dot(v)
    total = T * corr[0] + 2 * sum((T - k) * corr[k] for k in range(1, T))
    return total / (T * T)


def unequal_blocks(rows, cols, block):
    """Unitary with the moduli of a 4x4 class of the unequal-slope map.

    Rows supported on two columns get ``(1, 1)/sqrt 2``; the two rows spread
    over all four columns get ``(1, -1, +-1, -+1)/2``.
    """
    s = len(rows)
    U = np.zeros((s, s), dtype=complex)
    spread = [a for a in range(s) if np.count_nonzero(block[a]) == s]
    signs = [np.array([1, -1, 1, -1]), np.array([1, -1, -1, 1])]
    for a in range(s):
        nz = np.flatnonzero(block[a])
        if len(nz) == 2:
            U[a, nz] = 1 / np.sqrt(2)
    for a, sgn in zip(spread, signs):
        U[a] = sgn / 2
    return U


@pytest.fixture
def doubling():
    return PiecewiseLinearMap.from_slopes(DOUBLING, name="doubling")


@pytest.fixture
def tent():
    return PiecewiseLinearMap.from_slopes(TENT, name="tent")


@pytest.fixture
def unequal():
    return PiecewiseLinearMap.from_slopes(UNEQUAL, name="unequal")


@pytest.fixture(params=["doubling", "tent"])
def fixture_map(request):
    spec = {"doubling": DOUBLING, "tent": TENT}[request.param]
    return PiecewiseLinearMap.from_slopes(spec, name=request.param)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
