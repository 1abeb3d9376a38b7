import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blockhcb.angular import (BLOCKED, IN_SECTOR, SIDELOBE, AngularInterval, AngularSet,
                              ArrayLayout, azimuth_to_u, dft_codebook, dft_directions,
                              direction_from_u, grid_sample, set_subtract, set_union,
                              steering_matrix, steering_vector, u_to_azimuth, ula_steering,
                              ula_steering_matrix, uniform_samples)

LAM = 0.005


# -- layouts and steering ----------------------------------------------------------------


def test_ula_layout_matches_closed_form():
    lay = ArrayLayout.ula(16, LAM)
    u = np.linspace(-1, 1, 37)
    np.testing.assert_allclose(steering_matrix(lay, u), ula_steering_matrix(16, u), atol=1e-12)


def test_steering_columns_have_unit_norm():
    lay = ArrayLayout(np.random.default_rng(0).uniform(0, 0.05, (9, 3)), LAM,
                      reference_point=np.zeros(3))
    A = steering_matrix(lay, np.linspace(-1, 1, 11))
    np.testing.assert_allclose(np.linalg.norm(A, axis=0), 1.0)


def test_single_element_steering_is_one():
    assert ula_steering(1, 0.3)[0] == pytest.approx(1.0)


def test_steering_vector_at_broadside_is_flat():
    v = steering_vector(ArrayLayout.ula(8, LAM), 0.0)
    np.testing.assert_allclose(v, np.full(8, 1 / math.sqrt(8)), atol=1e-12)


def test_direction_from_u_front_half_plane():
    d = direction_from_u([-1.0, 0.0, 0.5])
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0)
    assert np.all(d[:, 1] >= 0)


def test_layout_rejects_bad_input():
    with pytest.raises(ValueError):
        ArrayLayout(np.zeros((3, 3)), 0.0)
    with pytest.raises(ValueError):
        ArrayLayout(np.array([[0, 0, 0], [1, 0, 0]]), LAM, region=(np.zeros(3), np.full(3, 0.5)))


def test_layout_accepts_planar_positions_and_moves():
    lay = ArrayLayout([[0, 0], [LAM / 2, 0]], LAM, region=(np.zeros(3), np.full(3, 1.0)))
    assert lay.positions.shape == (2, 3)
    moved = lay.moved([[0.1, 0, 0], [0.2, 0, 0]])
    np.testing.assert_array_equal(moved.region[1], lay.region[1])
    with pytest.raises(ValueError):
        lay.moved([[2.0, 0, 0], [0, 0, 0]])


# -- DFT ---------------------------------------------------------------------------------


def test_dft_directions_small_case():
    np.testing.assert_allclose(dft_directions(4), [-0.75, -0.25, 0.25, 0.75])


@pytest.mark.parametrize("M", [2, 8, 64])
def test_dft_codebook_is_unitary(M):
    W = dft_codebook(M)
    np.testing.assert_allclose(W.conj().T @ W, np.eye(M), atol=1e-12)


def test_dft_codebook_with_layout_matches_ula():
    np.testing.assert_allclose(dft_codebook(8, ArrayLayout.ula(8, LAM)), dft_codebook(8),
                               atol=1e-12)


def test_dft_directions_rejects_zero():
    with pytest.raises(ValueError):
        dft_directions(0)


# -- interval algebra --------------------------------------------------------------------

pairs = st.lists(st.tuples(st.floats(-1, 1), st.floats(0, 0.6)).map(lambda p: (p[0], p[0] + p[1])),
                 max_size=5)
GRID = np.linspace(-1.2, 1.8, 6001)


def as_set(ps):
    return AngularSet.of(*ps)


def mask(ps):
    m = np.zeros(GRID.shape, bool)
    for lo, hi in ps:
        m |= (GRID >= lo) & (GRID < hi)
    return m


@given(pairs)
def test_set_is_sorted_and_disjoint(ps):
    s = as_set(ps)
    for a, b in zip(s.intervals, s.intervals[1:]):
        assert a.hi < b.lo
    assert all(iv.hi > iv.lo for iv in s)


@given(pairs, pairs)
def test_set_operations_match_pointwise_oracle(a, b):
    A, B = as_set(a), as_set(b)
    ma, mb = mask(a), mask(b)
    np.testing.assert_array_equal(A.union(B).contains(GRID), ma | mb)
    np.testing.assert_array_equal(A.intersect(B).contains(GRID), ma & mb)
    np.testing.assert_array_equal(A.subtract(B).contains(GRID), ma & ~mb)


@given(pairs, pairs)
def test_measure_inclusion_exclusion(a, b):
    A, B = as_set(a), as_set(b)
    lhs = A.union(B).measure
    assert lhs == pytest.approx(A.measure + B.measure - A.intersect(B).measure, abs=1e-12)


@given(pairs, pairs)
def test_subtract_and_intersect_partition(a, b):
    A, B = as_set(a), as_set(b)
    assert A.subtract(B).measure + A.intersect(B).measure == pytest.approx(A.measure, abs=1e-12)


def test_touching_intervals_merge():
    s = AngularSet.of((0, 1), (1, 2), (3, 3))
    assert s.to_pairs() == [(0.0, 2.0)]
    assert len(s) == 1


def test_half_open_membership():
    s = AngularSet.of((0.0, 1.0))
    assert s.contains([0.0, 0.5, 1.0]).tolist() == [True, True, False]
    assert not AngularSet.empty().contains(0.2)


def test_interval_validation_and_measure():
    with pytest.raises(ValueError):
        AngularInterval(1.0, 0.0)
    assert AngularInterval(0.25, 1.0).measure == 0.75


def test_bounds_and_empty():
    assert AngularSet.of((0.1, 0.2), (0.5, 0.7)).bounds == (0.1, 0.7)
    with pytest.raises(ValueError):
        AngularSet.empty().bounds


def test_expand_and_helpers():
    s = AngularSet.of((0.0, 0.1), (0.3, 0.4))
    assert s.expand(0.1).to_pairs() == [(-0.1, 0.5)]
    assert s.expand(0) is s
    fov = AngularSet.of((0.0, 1.0))
    assert set_subtract(fov, s).measure == pytest.approx(0.8)
    assert set_union(s.intervals + (AngularInterval(0.9, 1.0),)).measure == pytest.approx(0.3)


def test_azimuth_to_u_maps_quadrants():
    u = azimuth_to_u(AngularSet.of((0.0, math.pi / 2)))
    assert u.bounds == pytest.approx((0.0, 1.0))
    back = azimuth_to_u(AngularSet.of((-1.0, 0.0)))
    assert back.is_empty()


@given(st.floats(0.01, math.pi - 0.2), st.floats(0.01, 0.19))
def test_azimuth_u_round_trip(lo, width):
    s = AngularSet.of((lo, lo + width))
    r = u_to_azimuth(azimuth_to_u(s))
    assert r.bounds == pytest.approx(s.bounds, abs=1e-9)


# -- grids -------------------------------------------------------------------------------


def test_uniform_samples_are_cell_midpoints():
    u = uniform_samples(AngularSet.of((-1.0, 1.0)), 4.0)
    np.testing.assert_allclose(u, -1 + (np.arange(8) + 0.5) * 0.25)


def test_uniform_samples_keep_one_point_per_interval():
    u = uniform_samples(AngularSet.of((0.0, 0.01), (0.5, 0.51)), 1.0)
    assert len(u) == 2
    with pytest.raises(ValueError):
        uniform_samples(AngularSet.of((0, 1)), 0.0)


def test_grid_sample_tags_blocked_first():
    g = grid_sample(AngularSet.of((-0.5, 0.5)), AngularSet.of((0.0, 0.25)),
                    AngularSet.of((-1.0, 1.0)), 8.0)
    assert g.size == 16
    assert set(np.unique(g.tags)) == {IN_SECTOR, BLOCKED, SIDELOBE}
    assert np.all(g.tags[(g.samples >= 0) & (g.samples < 0.25)] == BLOCKED)
    assert len(g.indices(IN_SECTOR)) == 6
    with pytest.raises(ValueError):
        grid_sample(AngularSet.empty(), AngularSet.empty(), AngularSet.empty(), 1.0)
