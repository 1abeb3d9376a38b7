import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blockhcb.angular import AngularSet, ArrayLayout
from blockhcb.blockage import (FRONT_FOV, Blockage, BlockageScene, DegenerateGeometryError,
                               RisGeometry, available_angles, blocked_interval,
                               blocked_interval_u, detect_blockage, link_blocked,
                               link_blocked_matrix, oracle_is_blocked, perpendicular_distance,
                               place_blockages)

LAM = 0.005


def test_perpendicular_distance_simple():
    assert perpendicular_distance((0, 0, 0), (10, 0, 0), Blockage((5, 2, 0), 1.0)) == 2.0


def test_perpendicular_distance_degenerate():
    with pytest.raises(DegenerateGeometryError):
        perpendicular_distance((1, 1, 0), (1, 1, 5), Blockage((0, 0, 0), 1.0))


def test_link_blocked_cases():
    blk = Blockage((5, 0.5, 2.0), 1.0)
    assert link_blocked((0, 0, 0), (10, 0, 0), blk)
    # disc beyond the segment end
    assert not link_blocked((0, 0, 0), (3, 0, 0), Blockage((6, 0, 0), 1.0))
    # elevation gate: link above the obstacle top
    assert not link_blocked((0, 0, 5), (10, 0, 5), blk, elevation_gate=True)
    assert link_blocked((0, 0, 1), (10, 0, 1), blk, elevation_gate=True)


coord = st.floats(-10, 10)


@given(st.tuples(coord, coord, st.floats(0, 3)), st.tuples(coord, coord, st.floats(0, 3)),
       st.tuples(coord, coord, st.floats(0, 3)), st.floats(0.1, 3), st.booleans())
def test_link_matrix_matches_scalar_predicate(a, b, c, r, gate):
    if math.hypot(a[0] - b[0], a[1] - b[1]) < 1e-3:
        return
    blk = Blockage(c, r)
    d = perpendicular_distance(a, b, blk)
    if abs(d - r) < 1e-9:
        return  # tangent: either answer is acceptable
    m = link_blocked_matrix([a], [b], BlockageScene((blk,)), gate)
    assert m[0, 0, 0] == link_blocked(a, b, blk, gate)


def test_link_matrix_shapes_and_degenerate():
    scene = BlockageScene((Blockage((1, 1, 0), 0.2),))
    assert link_blocked_matrix(np.zeros((3, 3)), np.zeros((0, 3)), scene).shape == (3, 0, 1)
    with pytest.raises(DegenerateGeometryError):
        link_blocked_matrix([[0, 0, 0]], [[0, 0, 1]], scene)


def test_blocked_interval_half_angle():
    blk = Blockage((0, 4, 0), 2.0)
    s = blocked_interval((0, 0, 0), blk)
    lo, hi = s.bounds
    assert (hi - lo) / 2 == pytest.approx(math.asin(0.5))
    assert (lo + hi) / 2 == pytest.approx(math.pi / 2)


def test_blocked_interval_inside_disc_blocks_everything():
    assert blocked_interval((0, 0, 0), Blockage((0.1, 0, 0), 1.0)) == FRONT_FOV


def test_blocked_interval_wraps_and_clips():
    # a disc straddling the +x axis blocks azimuths near 0 on both sides; only
    # the front half-plane part survives
    s = blocked_interval((0, 0, 0), Blockage((5, 0, 0), 1.0))
    assert s.bounds[0] == 0.0
    assert s.bounds[1] == pytest.approx(math.asin(0.2))
    full = blocked_interval((0, 0, 0), Blockage((5, 0, 0), 1.0),
                            fov=AngularSet.of((-math.pi, math.pi)))
    assert full.measure == pytest.approx(2 * math.asin(0.2))


def test_guard_widens_cone():
    blk = Blockage((0, 4, 0), 1.0)
    assert blocked_interval((0, 0, 0), blk, guard=0.05).measure == pytest.approx(
        blocked_interval((0, 0, 0), blk).measure + 0.1)


@given(st.lists(st.tuples(st.floats(0.2, math.pi - 0.2), st.floats(1.5, 8), st.floats(0.1, 1.2)),
                min_size=1, max_size=4), st.floats(0.001, math.pi - 0.001))
def test_available_angles_agree_with_ray_oracle(discs, az):
    scene = BlockageScene(tuple(Blockage((d * math.cos(a), d * math.sin(a), 0.0), r)
                                for a, d, r in discs))
    avail = available_angles((0, 0, 0), FRONT_FOV, scene)
    edges = [e for iv in avail for e in (iv.lo, iv.hi)]
    if edges and min(abs(az - e) for e in edges) < 1e-9:
        return
    assert bool(avail.contains(az)) == (not oracle_is_blocked((0, 0, 0), az, scene))


def test_oracle_ignores_discs_behind():
    scene = BlockageScene((Blockage((0, -5, 0), 1.0),))
    assert not oracle_is_blocked((0, 0, 0), -math.pi / 2 + math.pi, scene)
    assert oracle_is_blocked((0, 0, 0), -math.pi / 2, scene)


def test_detect_blockage_empty_scene():
    lay = ArrayLayout.ula(8, LAM)
    rep = detect_blockage(lay, RisGeometry.ula(4, (3, 10, 0), LAM), BlockageScene())
    assert rep.available_u.to_pairs() == [(-1.0, 1.0)]
    assert rep.blocked_fraction == 0.0 and not rep.outage
    assert rep.link_blocked.shape == (8, 4, 0)


def test_detect_blockage_outage_and_counters():
    lay = ArrayLayout.ula(4, LAM)
    ris = RisGeometry.ula(3, (3, 10, 0), LAM)
    scene = BlockageScene((Blockage((0, 0, 3), 5.0), Blockage((1, 2, 3), 0.5)))
    rep = detect_blockage(lay, ris, scene)
    assert rep.outage
    assert rep.blocked_fraction_u == 1.0
    assert rep.predicate_evaluations == 4 * 3 * 2
    assert rep.merge_operations == 4 * 2


def test_detect_blockage_is_union_over_antennas():
    lay = ArrayLayout.ula(2, 1.0)  # elements 0.5 m apart
    blk = Blockage((0.25, 3.0, 0), 0.3)
    rep = detect_blockage(lay, None, BlockageScene((blk,)))
    expect = blocked_interval(lay.positions[0], blk).union(blocked_interval(lay.positions[1], blk))
    assert rep.blocked.to_pairs() == pytest.approx(expect.to_pairs())
    assert blocked_interval_u(lay.positions, blk).measure == pytest.approx(rep.blocked_u.measure)


def test_scene_round_trip_and_validation():
    scene = BlockageScene((Blockage((1, 2), 0.5),))
    assert scene.blockages[0].center == (1.0, 2.0, 0.0)
    assert BlockageScene.from_dicts(scene.to_dicts()) == scene
    with pytest.raises(ValueError):
        Blockage((0, 0, 0), 0.0)
    with pytest.raises(ValueError):
        RisGeometry(np.zeros((0, 3)))


def test_ris_ula_geometry():
    ris = RisGeometry.ula(4, (1, 2, 3), 0.02)
    assert ris.element_count == 4
    np.testing.assert_allclose(ris.center, [1, 2, 3])
    np.testing.assert_allclose(np.diff(ris.element_positions[:, 0]), 0.01)


@pytest.mark.parametrize("target", [0.1, 0.3, 0.5])
def test_place_blockages_hits_target_fraction(target):
    lay = ArrayLayout.ula(16, LAM)
    rng = np.random.default_rng(7)
    scene = place_blockages(lay.positions, target, rng)
    frac = detect_blockage(lay, None, scene).blocked_fraction_u
    assert abs(frac - target) <= 0.01


def test_place_blockages_extremes_and_protection():
    lay = ArrayLayout.ula(8, LAM)
    rng = np.random.default_rng(1)
    assert place_blockages(lay.positions, 0.0, rng).count == 0
    assert detect_blockage(lay, None, place_blockages(lay.positions, 1.0, rng)).outage
    protect = [(3.0, 10.0, 0.0)]
    scene = place_blockages(lay.positions, 0.4, rng, protect=protect)
    for b in scene.blockages:
        assert math.hypot(b.center[0] - 3.0, b.center[1] - 10.0) > b.radius
