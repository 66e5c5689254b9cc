import math

import numpy as np
import pytest

from qgmaps.errors import ConfigError, ContractError
from qgmaps.metric_graph import (MetricGraph, alternating_observable, check_variance_relation,
                                 ensemble_VU, random_graph, secular_eigenvalues, swap_graph,
                                 unitary_variance, variance_VS, variance_VU_avg)


def test_swap_graph_closed_form():
    g = swap_graph(1.0, math.sqrt(2))
    Lam = 60.0
    spec = secular_eigenvalues(g, Lam)
    L = 1 + math.sqrt(2)
    expected = 2 * math.pi * np.arange(1, int(Lam * L / (2 * math.pi)) + 1) / L
    assert np.allclose(spec.roots, expected, atol=1e-9)


def test_empty_spectrum():
    assert secular_eigenvalues(swap_graph(), 0.0).count == 0
    with pytest.raises(ConfigError):
        secular_eigenvalues(swap_graph(), -1.0)


def test_weights_match_phase_slopes():
    g = random_graph(4, 7)
    spec = secular_eigenvalues(g, 40 * g.mean_spacing)
    assert np.allclose(spec.phase_slopes, spec.weights, rtol=1e-5)
    assert np.all(spec.weights >= g.lengths.min() - 1e-12)
    assert np.all(spec.weights <= g.lengths.max() + 1e-12)


def test_root_count_near_weyl():
    g = random_graph(4, 7)
    spec = secular_eigenvalues(g, 100 * g.mean_spacing)
    assert abs(spec.count - spec.mean_count) <= g.bonds


def test_zero_observable():
    g = random_graph(4, 7)
    A = np.zeros((4, 4))
    Lam = 20 * g.mean_spacing
    assert variance_VS(g, A, Lam) == (0.0, 0.0)
    assert variance_VU_avg(g, A, Lam) == 0.0
    assert check_variance_relation(g, A, Lam).residual == 0.0


def test_traceless_required():
    g = random_graph(4, 7)
    with pytest.raises(ContractError):
        variance_VS(g, np.eye(4), 10.0)
    with pytest.raises(ContractError):
        variance_VU_avg(g, np.diag([1.0, 0, 0, 0]), 10.0)


def test_length_sandwich():
    g = random_graph(4, 3)
    A = alternating_observable(4)
    VS, VS_hat = variance_VS(g, A, 60 * g.mean_spacing)
    assert g.lengths.min() * VS_hat <= VS <= g.lengths.max() * VS_hat


def test_unitary_variance_stack():
    g = random_graph(4, 7)
    A = alternating_observable(4).astype(complex)
    lams = np.linspace(0, 3, 5)
    stacked, _ = unitary_variance(g.scattering(lams), A)
    single = [unitary_variance(g.scattering(l), A)[0] for l in lams]
    assert np.allclose(stacked, single)


def test_lambda_average_matches_phase_ensemble():
    # incommensurate lengths make e^{i lambda L} equidistribute on the torus;
    # near-unit lengths beat slowly, so the window average still wobbles by ~5%
    g = random_graph(4, 7)
    A = alternating_observable(4)
    avg = variance_VU_avg(g, A, 3200 * g.mean_spacing)
    mean, err = ensemble_VU(g, A, 20000, seed=1)
    assert abs(avg - mean) < 0.1 * mean


def test_relation_small_residual():
    g = random_graph(4, 7)
    rep = check_variance_relation(g, alternating_observable(4), 200 * g.mean_spacing)
    assert rep.residual < 0.15
    assert rep.matching_normalization == "1/Lambda"


def test_graph_validation():
    with pytest.raises(ContractError):
        MetricGraph(np.array([[1, 1], [0, 1]], dtype=complex), np.array([1.0, 1.0]))
    with pytest.raises(ContractError):
        MetricGraph(np.eye(2, dtype=complex), np.array([1.0, -1.0]))
