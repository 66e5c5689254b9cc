from fractions import Fraction

import pytest

from qgmaps.errors import DomainError, PartitionError
from qgmaps.interval_map import PiecewiseLinearMap
from qgmaps.partitioning import atom_index, build_partition


@pytest.mark.parametrize("n, M", [(0, 2), (1, 4), (3, 16), (6, 128)])
def test_atom_counts(doubling, n, M):
    assert build_partition(doubling, n).atom_count == M


def test_unequal_counts(unequal):
    # M0 = 4, lcm of slopes 4
    assert [build_partition(unequal, n).atom_count for n in range(3)] == [4, 16, 64]


def test_refinement_chain(tent):
    parts = [build_partition(tent, n) for n in range(5)]
    for coarse, fine in zip(parts, parts[1:]):
        assert fine.contains(coarse)
        assert set(coarse.endpoints()) <= set(fine.endpoints())


def test_atom_index_right_closed(doubling):
    p = build_partition(doubling, 1)
    assert atom_index(p, 0) == 0
    assert atom_index(p, Fraction(1, 4)) == 0
    assert atom_index(p, Fraction(1, 4) + Fraction(1, 1000)) == 1
    assert atom_index(p, 1) == 3
    with pytest.raises(DomainError):
        atom_index(p, -Fraction(1, 3))


def test_atom_geometry(tent):
    p = build_partition(tent, 2)
    assert p.atom(3) == (Fraction(3, 8), Fraction(1, 2))
    assert p.midpoint(0) == Fraction(1, 16)
    assert p.branch_of_atom(3) == 0 and p.branch_of_atom(4) == 1
    with pytest.raises(DomainError):
        p.atom(8)


def test_invalid_map_rejected():
    with pytest.raises(PartitionError):
        build_partition(PiecewiseLinearMap.from_slopes([(Fraction(1, 2), 0)]), 1)


def test_negative_level(doubling):
    with pytest.raises(DomainError):
        build_partition(doubling, -1)
