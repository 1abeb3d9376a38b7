"""Stage-I: statistical CSI, the quadratic surrogate and unit-modulus RIS phases.

Covariances are stored normalised to trace ``N`` with the large-scale gain
kept separately (``R_hat = beta * R``).  The surrogate is

    Q = sum_k w_k beta_BR beta_RU,k (R_BR o R_RU,k^T)

and ``J(phi) = phi^H Q phi``.  With the cascade written as
``h^H diag(phi) H``, the expected cascaded gain equals ``J(conj(phi))``, so
:func:`ris_phases_for` conjugates the optimiser output before it is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .angular import ArrayLayout, steering_matrix


@dataclass(frozen=True)
class StatCsi:
    cov_bs_ris: np.ndarray
    cov_ris_ue: tuple
    gain_bs_ris: float
    gain_ris_ue: tuple
    user_weights: tuple
    blockage_prob: dict = field(default_factory=dict)
    snapshots_used: int = 1
    window: float = 0.0

    def __post_init__(self):
        if self.snapshots_used < 1:
            raise ValueError("snapshots_used must be >= 1")
        if any(w < 0 for w in self.user_weights):
            raise ValueError("user weights must be nonnegative")
        if len(self.cov_ris_ue) != len(self.gain_ris_ue) or len(self.cov_ris_ue) != len(self.user_weights):
            raise ValueError("per-user fields disagree in length")

    @property
    def N(self) -> int:
        return self.cov_bs_ris.shape[0]

    @property
    def raw_bs_ris(self) -> np.ndarray:
        return self.gain_bs_ris * self.cov_bs_ris

    def raw_ris_ue(self, k: int) -> np.ndarray:
        return self.gain_ris_ue[k] * self.cov_ris_ue[k]


def _split_gain(R: np.ndarray) -> tuple[np.ndarray, float]:
    N = R.shape[0]
    beta = float(np.trace(R).real) / N
    return (R / beta if beta > 0 else R), beta


def sector_energies(h_bs_ris: np.ndarray, layout: ArrayLayout | None, sectors: int = 16,
                    probes_per_sector: int = 4) -> np.ndarray:
    """BS-side energy of ``H_BR`` per equal-width u-sector."""
    M = h_bs_ris.shape[1]
    edges = np.linspace(-1, 1, sectors + 1)
    u = (edges[:-1, None] + (np.arange(probes_per_sector) + 0.5)[None, :]
         * (2.0 / sectors / probes_per_sector)).ravel()
    if layout is None:
        a = np.exp(1j * math.pi * np.outer(np.arange(M), u)) / math.sqrt(M)
    else:
        a = steering_matrix(layout, u)
    e = np.sum(np.abs(h_bs_ris @ a) ** 2, axis=0)
    return e.reshape(sectors, probes_per_sector).sum(axis=1)


def estimate_blockage_prob(snapshots, layout=None, sectors: int = 16,
                           threshold: float = 0.1) -> dict:
    """Fraction of snapshots in which each sector's energy drops below
    ``threshold`` times the median sector energy of all snapshots and sectors.

    Keys are ``(lo, hi)`` u-intervals.
    """
    E = np.array([sector_energies(ch.h_bs_ris, layout, sectors) for ch in snapshots])
    ref = float(np.median(E))
    drops = E < threshold * ref if ref > 0 else np.ones_like(E, bool)
    edges = np.linspace(-1, 1, sectors + 1)
    return {(float(edges[i]), float(edges[i + 1])): float(drops[:, i].mean())
            for i in range(sectors)}


def estimate_covariances(snapshots, S: int | None = None, *, user_weights=None,
                         layout: ArrayLayout | None = None, sectors: int = 16,
                         drop_threshold: float = 0.1, window: float = 0.0) -> StatCsi:
    """Sample covariances ``(1/S) sum_s H_s H_s^H`` over the first ``S`` snapshots."""
    snaps = list(snapshots)
    S = len(snaps) if S is None else S
    if S < 1 or S > len(snaps):
        raise ValueError("need 1 <= S <= number of snapshots")
    snaps = snaps[:S]
    N = snaps[0].N
    K = snaps[0].K
    R_br = np.zeros((N, N), complex)
    R_ru = np.zeros((K, N, N), complex)
    for ch in snaps:
        R_br += ch.h_bs_ris @ ch.h_bs_ris.conj().T
        R_ru += np.einsum("kn,km->knm", ch.h_ris_ue, ch.h_ris_ue.conj())
    R_br /= S
    R_ru /= S
    cb, bb = _split_gain(R_br)
    covs, gains = zip(*[_split_gain(R_ru[k]) for k in range(K)])
    w = tuple([1.0] * K) if user_weights is None else tuple(float(x) for x in user_weights)
    pb = estimate_blockage_prob(snaps, layout, sectors, drop_threshold)
    return StatCsi(cb, tuple(covs), bb, tuple(gains), w, pb, S, window)


def build_q(csi: StatCsi) -> np.ndarray:
    """Hermitian surrogate ``Q`` (Schur products of PSD matrices are PSD)."""
    Q = np.zeros((csi.N, csi.N), complex)
    for k, wk in enumerate(csi.user_weights):
        if wk == 0:
            continue
        Q += wk * csi.gain_bs_ris * csi.gain_ris_ue[k] * (csi.cov_bs_ris * csi.cov_ris_ue[k].T)
    return (Q + Q.conj().T) / 2


def jstat(phi, q: np.ndarray) -> float:
    phi = np.asarray(phi)
    return float(np.vdot(phi, q @ phi).real)


@dataclass
class PhaseResult:
    phases: np.ndarray
    objective: float
    trace: list
    starts: int


def _fixed_point(q: np.ndarray, phi: np.ndarray, max_iter: int, tol: float):
    tr = [jstat(phi, q)]
    for _ in range(max_iter):
        g = q @ phi
        new = np.where(np.abs(g) > 0, g / np.where(np.abs(g) > 0, np.abs(g), 1.0), phi)
        val = jstat(new, q)
        if val < tr[-1]:
            break  # cannot happen for PSD q; guards against roundoff
        phi = new
        tr.append(val)
        if val - tr[-2] <= tol * max(abs(tr[-2]), 1e-300):
            break
    return phi, tr


def optimize_phases(q: np.ndarray, max_iter: int = 500, tol: float = 1e-10, *,
                    starts: int = 8, rng=None) -> PhaseResult:
    """Maximise ``phi^H Q phi`` over unit-modulus ``phi``.

    Fixed-point updates ``phi <- exp(j arg(Q phi))`` from the principal
    eigenvector's phases plus ``starts - 1`` random starts; each run is
    monotone for PSD ``Q``.  An indefinite ``Q`` is shifted by ``-lambda_min I``,
    which changes the objective only by a constant on the torus.
    """
    q = np.asarray(q, complex)
    q = (q + q.conj().T) / 2
    N = q.shape[0]
    rng = np.random.default_rng(0) if rng is None else rng
    lam, V = np.linalg.eigh(q)
    shift = -lam[0] if lam[0] < 0 else 0.0
    qs = q + shift * np.eye(N)
    v = V[:, -1]
    inits = [np.where(np.abs(v) > 0, np.exp(1j * np.angle(v)), 1.0 + 0j)]
    inits += [np.exp(1j * rng.uniform(0, 2 * np.pi, N)) for _ in range(max(0, starts - 1))]
    best = None
    for p0 in inits:
        phi, tr = _fixed_point(qs, p0, max_iter, tol)
        tr = [t - shift * N for t in tr]
        if best is None or tr[-1] > best.objective:
            best = PhaseResult(phi, tr[-1], tr, len(inits))
    return best


def ris_phases_for(csi_or_q, **kw) -> np.ndarray:
    """RIS phase vector to apply in the cascade (conjugate of the optimiser output)."""
    q = build_q(csi_or_q) if isinstance(csi_or_q, StatCsi) else csi_or_q
    return np.conj(optimize_phases(q, **kw).phases)


@dataclass
class GapReport:
    lhs: float
    rhs: float
    holds: bool


def gap_bound_check(q_true, q_est, phi_star, phi_hat) -> GapReport:
    """``J(phi*; Q) - J(phi_hat; Q) <= (N + 1) ||Q - Q_hat||_2``."""
    N = q_true.shape[0]
    lhs = jstat(phi_star, q_true) - jstat(phi_hat, q_true)
    rhs = (N + 1) * float(np.linalg.norm(q_true - q_est, 2))
    return GapReport(lhs, rhs, lhs <= rhs + 1e-9)


def quantized_exhaustive(q: np.ndarray, levels: int = 16) -> float:
    """Best ``J`` over phases quantised to ``levels`` points per element.

    The first phase is fixed (``J`` is invariant to a common rotation) and the
    remaining elements are split in two halves; for each half the partial
    vectors are enumerated and the cross term is evaluated as one matrix
    product, so ``N = 8`` costs ``16^3 x 16^4`` entries in blocks.
    """
    q = np.asarray(q, complex)
    N = q.shape[0]
    if N == 1:
        return float(q[0, 0].real)
    alphabet = np.exp(2j * np.pi * np.arange(levels) / levels)
    free = N - 1
    n1 = free // 2
    n2 = free - n1

    def enum(n):
        if n == 0:
            return np.ones((1, 0), complex)
        grids = np.meshgrid(*([np.arange(levels)] * n), indexing="ij")
        idx = np.stack([g.ravel() for g in grids], axis=1)
        return alphabet[idx]

    X1 = np.column_stack([np.ones(levels**n1), enum(n1)])  # element 0 fixed to 1
    X2 = enum(n2)
    i1 = np.arange(1 + n1)
    i2 = np.arange(1 + n1, N)
    Q11 = q[np.ix_(i1, i1)]
    Q22 = q[np.ix_(i2, i2)]
    Q12 = q[np.ix_(i1, i2)]
    a = np.einsum("si,ij,sj->s", X1.conj(), Q11, X1).real
    b = np.einsum("si,ij,sj->s", X2.conj(), Q22, X2).real
    best = -np.inf
    C = X1.conj() @ Q12  # (n_1, |i2|)
    for start in range(0, len(X2), 4096):
        blk = X2[start:start + 4096]
        cross = 2 * (C @ blk.T).real
        tot = a[:, None] + b[None, start:start + 4096] + cross
        best = max(best, float(tot.max()))
    return best
