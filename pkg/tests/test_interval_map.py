import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from qgmaps.errors import DomainError, MapError
from qgmaps.interval_map import (PiecewiseLinearMap, evaluate, load_map, preimage_density,
                                 validate_map)


def test_doubling_validates(doubling):
    rep = validate_map(doubling)
    assert rep.ok
    assert rep.measure_preserving and rep.endpoints_forward_invariant and rep.integer_slopes
    assert rep.slopes == [2, 2]
    assert rep.lcm_slope == 2


def test_tent_validates(tent):
    rep = validate_map(tent)
    assert rep.ok
    assert rep.slopes == [2, -2]


def test_half_map_is_rejected():
    # x -> x/2 is neither expanding nor measure preserving
    smap = PiecewiseLinearMap.from_slopes([(Fraction(1, 2), 0)])
    rep = validate_map(smap)
    assert not rep.ok
    assert not rep.measure_preserving
    assert not rep.integer_slopes
    assert any("measure" in f for f in rep.failures)


def test_endpoint_off_grid_detected():
    # second branch lands on [1/4, 3/4], off the 1/2 grid
    smap = PiecewiseLinearMap.from_slopes([(2, 0), (1, Fraction(-1, 4))])
    rep = validate_map(smap)
    assert not rep.endpoints_forward_invariant
    assert any("endpoint" in f for f in rep.failures)


def test_image_outside_unit_interval():
    with pytest.raises(MapError):
        PiecewiseLinearMap.from_slopes([(3, 0)])


def test_zero_slope_rejected():
    with pytest.raises(MapError):
        PiecewiseLinearMap.from_slopes([(0, Fraction(1, 2))])


def test_evaluate_breakpoints(doubling, tent):
    assert evaluate(doubling, Fraction(1, 2)) == 0      # right branch
    assert evaluate(doubling, 1) == 1
    assert evaluate(doubling, Fraction(1, 4)) == Fraction(1, 2)
    assert evaluate(tent, Fraction(1, 2)) == 1
    assert evaluate(tent, Fraction(3, 4)) == Fraction(1, 2)
    with pytest.raises(DomainError):
        evaluate(doubling, Fraction(3, 2))


def test_preimage_density_is_one(doubling, tent):
    for smap in (doubling, tent):
        for y in (Fraction(1, 7), Fraction(1, 2) + Fraction(1, 99), Fraction(9, 10)):
            assert preimage_density(smap, y) == 1


def test_json_roundtrip(tmp_path, tent):
    path = tmp_path / "tent.json"
    path.write_text(json.dumps(tent.to_dict()))
    again = load_map(str(path))
    assert again == tent
    assert load_map("tent") == tent
    assert load_map({"M0": 2, "branches": [{"slope": 2, "intercept": "0"},
                                           {"slope": -2, "intercept": "2"}]}) == tent


@st.composite
def full_branch_maps(draw):
    """Maps whose ``s*m`` branches cover each of ``m`` blocks exactly ``s`` times."""
    s = draw(st.sampled_from([2, 3]))
    m = draw(st.integers(1, 2))
    targets = draw(st.permutations([b for b in range(m) for _ in range(s)]))
    signs = draw(st.lists(st.sampled_from([1, -1]), min_size=s * m, max_size=s * m))
    K = s * m
    spec = []
    for k, (blk, sg) in enumerate(zip(targets, signs)):
        slope = sg * s
        lo = Fraction(blk, m)
        x0 = Fraction(k, K)
        # increasing branches start at the block's left end, decreasing ones at its right
        start = lo if sg > 0 else lo + Fraction(1, m)
        spec.append((slope, start - slope * x0))
    return spec


@given(full_branch_maps())
def test_generated_maps_validate(spec):
    smap = PiecewiseLinearMap.from_slopes(spec)
    assert validate_map(smap).ok


@given(full_branch_maps(), st.fractions(min_value=0, max_value=1))
def test_evaluate_stays_in_unit_interval(spec, x):
    smap = PiecewiseLinearMap.from_slopes(spec)
    assert 0 <= evaluate(smap, x) <= 1
