import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blockhcb.angular import ArrayLayout
from blockhcb.blockage import RisGeometry
from blockhcb.channel import PathLossModel, synthesize_channels
from blockhcb.stage1 import (StatCsi, build_q, estimate_blockage_prob, estimate_covariances,
                             gap_bound_check, jstat, optimize_phases, quantized_exhaustive,
                             ris_phases_for, sector_energies)

LAM = 299_792_458.0 / 60e9


def snapshots(S, N=8, M=4, seed=0):
    lay = ArrayLayout.ula(M, LAM)
    ris = RisGeometry.ula(N, (3.0, 10.0, 0.0), LAM)
    ues = [(1.5, 13.0, 0.0), (4.5, 12.5, 0.0)]
    model = PathLossModel.default(LAM)
    return [synthesize_channels(lay, ris, ues, model, 3, 2, seed, small_scale_seed=s)
            for s in range(S)]


def random_psd(N, rank, rng):
    X = rng.normal(size=(N, rank)) + 1j * rng.normal(size=(N, rank))
    return X @ X.conj().T


def test_single_snapshot_covariance_is_outer_product():
    snap = snapshots(1)
    csi = estimate_covariances(snap)
    H = snap[0].h_bs_ris
    np.testing.assert_allclose(csi.raw_bs_ris, H @ H.conj().T, rtol=1e-10)
    h = snap[0].h_ris_ue[1]
    np.testing.assert_allclose(csi.raw_ris_ue(1), np.outer(h, h.conj()), rtol=1e-10)
    assert np.trace(csi.cov_bs_ris).real == pytest.approx(csi.N)


def test_estimate_uses_first_S_snapshots():
    snaps = snapshots(6)
    a = estimate_covariances(snaps, 3)
    b = estimate_covariances(snaps[:3])
    np.testing.assert_allclose(a.raw_bs_ris, b.raw_bs_ris)
    assert a.snapshots_used == 3
    with pytest.raises(ValueError):
        estimate_covariances(snaps, 7)


def test_statcsi_validation():
    R = np.eye(2)
    with pytest.raises(ValueError):
        StatCsi(R, (R,), 1.0, (1.0,), (-1.0,))
    with pytest.raises(ValueError):
        StatCsi(R, (R, R), 1.0, (1.0,), (1.0,))
    with pytest.raises(ValueError):
        StatCsi(R, (R,), 1.0, (1.0,), (1.0,), snapshots_used=0)


def test_q_is_hermitian_psd_schur_product():
    csi = estimate_covariances(snapshots(5))
    Q = build_q(csi)
    np.testing.assert_allclose(Q, Q.conj().T)
    assert np.linalg.eigvalsh(Q).min() > -1e-9 * np.abs(Q).max()
    expect = sum(csi.raw_bs_ris * csi.raw_ris_ue(k).T for k in range(2))
    np.testing.assert_allclose(Q, expect, rtol=1e-10, atol=1e-30)


def test_q_expectation_matches_cascaded_gain():
    """J(conj(phi)) equals the snapshot average of sum_k ||h_k^H diag(phi) H||^2."""
    snaps = snapshots(4)
    Q = build_q(estimate_covariances(snaps))
    phi = np.exp(1j * np.random.default_rng(0).uniform(0, 6.3, 8))
    direct = np.mean([np.sum(np.abs(s.effective(phi)) ** 2) for s in snaps])
    assert jstat(np.conj(phi), Q) == pytest.approx(direct, rel=1e-9)


def test_zero_user_weight_drops_user():
    csi = estimate_covariances(snapshots(3), user_weights=(1.0, 0.0))
    expect = csi.raw_bs_ris * csi.raw_ris_ue(0).T
    np.testing.assert_allclose(build_q(csi), expect, rtol=1e-10, atol=1e-30)


@given(st.integers(1, 12), st.integers(0, 10_000))
def test_rank_one_closed_form(N, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=N) + 1j * rng.normal(size=N)
    res = optimize_phases(np.outer(v, v.conj()), starts=1)
    assert res.objective == pytest.approx(np.sum(np.abs(v)) ** 2, rel=1e-9)
    np.testing.assert_allclose(np.abs(res.phases), 1.0)


@given(st.integers(2, 10), st.integers(0, 10_000))
def test_fixed_point_trace_is_monotone(N, seed):
    rng = np.random.default_rng(seed)
    res = optimize_phases(random_psd(N, 3, rng), starts=3, rng=rng)
    assert np.all(np.diff(res.trace) >= -1e-9 * abs(res.trace[-1]))
    assert res.objective >= 0
    assert res.starts == 3


def test_indefinite_q_is_handled():
    rng = np.random.default_rng(3)
    Q = random_psd(5, 2, rng) - 3 * np.eye(5)
    res = optimize_phases(Q)
    assert res.objective == pytest.approx(jstat(res.phases, Q))


def test_quantized_exhaustive_matches_brute_force():
    rng = np.random.default_rng(1)
    Q = random_psd(3, 2, rng)
    alphabet = np.exp(2j * np.pi * np.arange(8) / 8)
    best = max(jstat(np.array(p), Q) for p in itertools.product(alphabet, repeat=3))
    assert quantized_exhaustive(Q, 8) == pytest.approx(best)
    assert quantized_exhaustive(np.array([[2.0]]), 4) == 2.0


def test_optimizer_reaches_quantized_oracle_small_n():
    rng = np.random.default_rng(2)
    Q = random_psd(5, 2, rng)
    assert optimize_phases(Q, rng=rng).objective >= 0.98 * quantized_exhaustive(Q, 16)


def test_gap_bound_report():
    rng = np.random.default_rng(4)
    Q = random_psd(4, 2, rng)
    E = 0.01 * random_psd(4, 1, rng)
    star = optimize_phases(Q, starts=16).phases
    hat = optimize_phases(Q + E).phases
    rep = gap_bound_check(Q, Q + E, star, hat)
    assert rep.holds and rep.rhs == pytest.approx(5 * np.linalg.norm(E, 2))


def test_ris_phases_for_conjugates():
    csi = estimate_covariances(snapshots(3))
    Q = build_q(csi)
    a = ris_phases_for(csi, rng=np.random.default_rng(0))
    b = optimize_phases(Q, rng=np.random.default_rng(0)).phases
    np.testing.assert_allclose(a, np.conj(b))


def test_sector_energies_and_blockage_probability():
    snaps = snapshots(4)
    e = sector_energies(snaps[0].h_bs_ris, None, sectors=8)
    assert e.shape == (8,) and np.all(e >= 0)
    p = estimate_blockage_prob(snaps, sectors=8)
    assert len(p) == 8 and all(0 <= v <= 1 for v in p.values())
    assert min(k[0] for k in p) == -1.0
