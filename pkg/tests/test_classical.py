import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import (DOUBLING, TENT, UNEQUAL, correlation_variance, oracle_B,
                      oracle_path_measure)
from test_interval_map import full_branch_maps

from qgmaps.classical import (StochasticMatrix, classical_time_variance, equivalence_classes,
                              path_measure, trajectory_counts, transition_matrix)
from qgmaps.errors import ContractError, ResourceBudgetError
from qgmaps.interval_map import PiecewiseLinearMap
from qgmaps.observables import Constant, Cosine, Linear, quantize_observable
from qgmaps.partitioning import build_partition

h = Fraction(1, 2)


def dense(B):
    return [[B.entry(j, k) for k in range(B.size)] for j in range(B.size)]


def test_doubling_B(doubling):
    B = transition_matrix(doubling, build_partition(doubling, 1))
    assert dense(B) == [[h, h, 0, 0], [0, 0, h, h], [h, h, 0, 0], [0, 0, h, h]]


def test_tent_B(tent):
    B = transition_matrix(tent, build_partition(tent, 1))
    assert dense(B) == [[h, h, 0, 0], [0, 0, h, h], [0, 0, h, h], [h, h, 0, 0]]


@pytest.mark.parametrize("spec", [DOUBLING, TENT, UNEQUAL], ids=["doubling", "tent", "unequal"])
@pytest.mark.parametrize("n", [0, 1, 2])
def test_B_matches_interval_oracle(spec, n):
    smap = PiecewiseLinearMap.from_slopes(spec)
    p = build_partition(smap, n)
    B = transition_matrix(smap, p)
    assert dense(B) == oracle_B(spec, p.atom_count)
    assert all(s == 1 for s in B.row_sums())
    assert all(s == 1 for s in B.column_sums())


def test_path_measure_examples(doubling):
    B = transition_matrix(doubling, build_partition(doubling, 1))
    assert path_measure(B, (0, 0, 1)) == Fraction(1, 4)
    assert oracle_path_measure(DOUBLING, 4, (0, 0, 1)) == Fraction(1, 4)
    assert path_measure(B, (0, 2)) == 0
    assert path_measure(B, (3,)) == 1
    with pytest.raises(ContractError):
        path_measure(B, (0, 4))


def test_path_measure_exhaustive_tent(tent):
    p = build_partition(tent, 1)
    B = transition_matrix(tent, p)
    for path in itertools.product(range(4), repeat=4):
        assert path_measure(B, path) == oracle_path_measure(TENT, 4, path)


def test_classes_doubling(doubling):
    B = transition_matrix(doubling, build_partition(doubling, 1))
    assert equivalence_classes(B).classes == ((0, 2), (1, 3))


def test_classes_tent_primary(tent):
    B = transition_matrix(tent, build_partition(tent, 0))
    assert equivalence_classes(B).classes == ((0, 1),)


def test_classes_two_of_size_four():
    # rows 0, 1, 2, 4 share columns 0..3 through the two spread rows
    q, r = Fraction(1, 4), Fraction(1, 2)
    rows = [
        ((0, r), (1, r)),
        ((2, r), (3, r)),
        ((0, q), (1, q), (2, q), (3, q)),
        ((4, r), (5, r)),
        ((0, q), (1, q), (2, q), (3, q)),
        ((4, r), (5, r)),
        ((6, r), (7, r)),
        ((6, r), (7, r)),
    ]
    B = StochasticMatrix(8, tuple(rows))
    classes = equivalence_classes(B).classes
    assert classes[0] == (0, 1, 2, 4)      # atoms 1, 2, 3, 5 counting from one
    assert sorted(map(len, classes)) == [2, 2, 4]


def test_unique_trajectories(doubling, tent):
    for smap in (doubling, tent):
        for n in range(1, 4):
            B = transition_matrix(smap, build_partition(smap, n))
            for T in range(1, n + 1):
                assert trajectory_counts(B, T).max() <= 1


def test_constant_variance_zero(doubling):
    p = build_partition(doubling, 3)
    O = quantize_observable(Constant(Fraction(3)), p)
    assert classical_time_variance(doubling, p, O, 3) == 0
    assert classical_time_variance(doubling, p, O, 3, exact=True) == 0


@pytest.mark.parametrize("T", [1, 2, 3, 4, 5])
def test_variance_matches_correlation_oracle(tent, T):
    p = build_partition(tent, 3)
    O = quantize_observable(Linear(), p)
    exact = classical_time_variance(tent, p, O, T, exact=True)
    B = transition_matrix(tent, p)
    assert exact == correlation_variance(dense(B), list(O.exact), T)
    assert classical_time_variance(tent, p, O, T) == pytest.approx(float(exact), rel=1e-12)


def test_T1_is_plain_variance(doubling):
    p = build_partition(doubling, 4)
    O = quantize_observable(Cosine(1), p)
    c = O.centered().diagonal
    assert classical_time_variance(doubling, p, O, 1) == pytest.approx(np.mean(c**2), rel=1e-13)


def test_doubling_cosine_half_over_T(doubling):
    # cos 2 pi 2^t x are orthogonal, so the variance is 1/(2T) up to the
    # sinc^2 loss of local averaging
    p = build_partition(doubling, 8)
    O = quantize_observable(Cosine(1), p)
    v = classical_time_variance(doubling, p, O, 4)
    assert v == pytest.approx(1 / 8, abs=1e-4)


def _birkhoff(spec_name, M, obs, T, samples, rng, bits=96):
    """Monte Carlo over dyadic starting points, iterated in exact integers."""
    N = 1 << bits
    acc = np.empty(samples)
    for i in range(samples):
        a = int.from_bytes(rng.bytes(bits // 8), "little")
        s = 0.0
        for _ in range(T):
            if spec_name == "doubling":
                a = (2 * a) % N
            else:
                a = 2 * a if a < N // 2 else 2 * N - 2 * a
            s += obs[min(a * M // N, M - 1)]
        acc[i] = (s / T) ** 2
    return acc.mean(), acc.std(ddof=1) / math.sqrt(samples)


@pytest.mark.parametrize("name", ["doubling", "tent"])
def test_monte_carlo_birkhoff(name):
    smap = PiecewiseLinearMap.from_slopes({"doubling": DOUBLING, "tent": TENT}[name])
    p = build_partition(smap, 4)
    O = quantize_observable(Cosine(1), p)
    T = 4
    exact = classical_time_variance(smap, p, O, T)
    mc, err = _birkhoff(name, p.atom_count, O.centered().diagonal, T, 20000,
                        np.random.default_rng(2024))
    assert abs(mc - exact) < 4 * err


def test_budget(doubling):
    p = build_partition(doubling, 2)
    O = quantize_observable(Linear(), p)
    with pytest.raises(ResourceBudgetError):
        classical_time_variance(doubling, p, O, 12, budget=1000)
    with pytest.raises(ResourceBudgetError):
        classical_time_variance(doubling, p, O, 12, budget=1000, exact=True)


def test_contract_errors(doubling):
    p = build_partition(doubling, 2)
    O = quantize_observable(Linear(), build_partition(doubling, 1))
    with pytest.raises(ContractError):
        classical_time_variance(doubling, p, O, 2)
    with pytest.raises(ContractError):
        classical_time_variance(doubling, p, quantize_observable(Linear(), p), 0)


@settings(max_examples=25, deadline=None)
@given(full_branch_maps(), st.integers(0, 2))
def test_generated_maps_doubly_stochastic(spec, n):
    smap = PiecewiseLinearMap.from_slopes(spec)
    p = build_partition(smap, n)
    if p.atom_count > 64:
        return
    B = transition_matrix(smap, p)
    assert all(s == 1 for s in B.row_sums())
    assert all(s == 1 for s in B.column_sums())
    assert dense(B) == oracle_B(spec, p.atom_count)
