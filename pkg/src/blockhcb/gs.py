"""Blockage-aware codeword synthesis and the hierarchical codebook.

The canonical synthesis is a masked Gerchberg-Saxton loop on a grid of spatial
frequencies: evaluate the pattern, enforce target magnitudes per region,
back-project by Tikhonov least squares, project onto the null space of the
blocked steering vectors and finally onto the amplitude constraint.  The
one-shot projector LS, the soft-penalty LS and the reduced (Gram-Schmidt) LS
are provided as warm starts and baselines.

Layer ``s`` of the tree holds ``2**s`` nodes splitting ``[-1, 1)`` evenly, so
layer 1 has two unit-width beams and layer ``log2(M)`` matches the DFT bins.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .angular import (BLOCKED, IN_SECTOR, SIDELOBE, AngularGrid, AngularSet,
                      ArrayLayout, steering_matrix, uniform_samples)

FULL_U = AngularSet.of((-1.0, 1.0))


class InfeasibleSectorError(ValueError):
    """The sector's steering vectors are annihilated by the null-space projector."""


class OutageError(RuntimeError):
    """No usable direction is left for the codebook."""


@dataclass
class OpCounter:
    """Complex multiply tally for instrumented runs."""

    multiplies: int = 0

    def add(self, n: int) -> None:
        self.multiplies += int(n)


@dataclass(frozen=True)
class GsConfig:
    max_iter: int = 40
    tikhonov: float | None = None  # None: 1e-6 * trace(A A^H) / N_u
    rel_tol: float = 1e-4
    sidelobe_weight: float = 1.0
    blocked_weight: float = 1e3
    sidelobe_cap_db: float = -20.0
    blocked_cap_db: float = -40.0
    power_budget: float = 1.0
    amplitude_mode: str = "constant_modulus"
    null_mode: str = "hard"
    grid_factor: float = 8.0
    sidelobe_weighting: tuple | None = None
    null_rank_tol: float | None = None  # None: 10**(blocked_cap_db / 20); 0: numerical rank

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tikhonov is not None and self.tikhonov < 0:
            raise ValueError("tikhonov must be >= 0")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if not self.power_budget > 0:
            raise ValueError("power_budget must be positive")
        if self.sidelobe_weight < 0 or self.blocked_weight < 0:
            raise ValueError("weights must be nonnegative")
        if self.amplitude_mode not in ("constant_modulus", "total_power"):
            raise ValueError(f"unknown amplitude_mode {self.amplitude_mode!r}")
        if self.null_mode not in ("hard", "soft", "exclude"):
            raise ValueError(f"unknown null_mode {self.null_mode!r}")
        if not self.grid_factor > 0:
            raise ValueError("grid_factor must be positive")
        if self.null_rank_tol is not None and not 0 <= self.null_rank_tol < 1:
            raise ValueError("null_rank_tol must lie in [0, 1)")

    @property
    def projector_rank_tol(self) -> float:
        """Relative singular-value cut for the blocked dictionary.

        By default the null depth matches the blocked-region cap: directions
        of ``A_blk`` weaker than ``10**(blocked_cap_db/20) * s_max`` are kept.
        """
        if self.null_rank_tol is None:
            return 10 ** (self.blocked_cap_db / 20)
        return self.null_rank_tol

    def mu(self, A: np.ndarray) -> float:
        if self.tikhonov is not None:
            return self.tikhonov
        return 1e-6 * float(np.sum(np.abs(A) ** 2)) / A.shape[1]

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["sidelobe_weighting"] is not None:
            d["sidelobe_weighting"] = list(d["sidelobe_weighting"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GsConfig":
        d = dict(d)
        if d.get("sidelobe_weighting") is not None:
            d["sidelobe_weighting"] = tuple(d["sidelobe_weighting"])
        return cls(**d)


def flat_top_level(M: int, coverage: float, power: float = 1.0) -> float:
    """Flat-top power gain ``g0`` for a sector of u-measure ``coverage``.

    A half-wavelength ULA with ``||w||^2 = P`` radiates ``int |a(u)^H w|^2 du = 2P/M``
    over ``[-1, 1]``, so concentrating it uniformly on the sector gives
    ``2P / (M * coverage)``; the peak is capped at ``P`` (full array gain).
    """
    if coverage <= 0:
        raise ValueError("sector has zero measure")
    return min(power, 2.0 * power / (M * coverage))


@dataclass(frozen=True)
class SectorSpec:
    """Targets for one node on a tagged grid.

    ``desired_in`` and ``sidelobe_cap`` are power levels per sample (zero
    outside their regions); ``flat_level`` is ``g0``.
    """

    sector: AngularSet
    blocked: AngularSet
    fov: AngularSet
    grid: AngularGrid
    desired_in: np.ndarray
    sidelobe_cap: np.ndarray
    flat_level: float
    blocked_cap: float
    sidelobe_weights: np.ndarray

    @property
    def in_idx(self) -> np.ndarray:
        return self.grid.indices(IN_SECTOR)

    @property
    def blk_idx(self) -> np.ndarray:
        return self.grid.indices(BLOCKED)

    @property
    def sl_idx(self) -> np.ndarray:
        return self.grid.indices(SIDELOBE)

    @property
    def edge_level(self) -> float:
        """Minimum in-sector gain used for coverage (-3 dB of the flat top)."""
        return self.flat_level / 2.0


def tag_samples(samples, sector: AngularSet, blocked: AngularSet) -> AngularGrid:
    samples = np.asarray(samples, float)
    tags = np.full(samples.shape, SIDELOBE, dtype=np.int8)
    tags[sector.contains(samples)] = IN_SECTOR
    tags[blocked.contains(samples)] = BLOCKED
    return AngularGrid(samples, tags)


def make_sector_spec(sector: AngularSet, blocked: AngularSet, M: int,
                     cfg: GsConfig = GsConfig(), fov: AngularSet = FULL_U,
                     samples=None) -> SectorSpec:
    """Build the node targets; the effective sector is ``sector & fov - blocked``.

    ``samples`` defaults to a uniform grid of ``grid_factor * M`` points over
    ``fov``.  If the effective sector has positive measure but no grid point,
    its interval midpoints are added.
    """
    eff = sector.intersect(fov).subtract(blocked)
    if samples is None:
        samples = uniform_samples(fov, cfg.grid_factor * M / fov.measure)
    samples = np.asarray(samples, float)
    if eff.measure > 0 and not np.any(eff.contains(samples)):
        mids = [(iv.lo + iv.hi) / 2 for iv in eff]
        samples = np.unique(np.concatenate([samples, mids]))
    grid = tag_samples(samples, eff, blocked)
    P = cfg.power_budget
    g0 = flat_top_level(M, eff.measure, P) if eff.measure > 0 else 0.0
    desired = np.where(grid.tags == IN_SECTOR, g0, 0.0)
    sl_level = g0 * 10 ** (cfg.sidelobe_cap_db / 10)
    cap = np.where(grid.tags == SIDELOBE, sl_level, 0.0)
    if cfg.sidelobe_weighting is None:
        wsl = np.ones(grid.size)
    else:
        wsl = np.asarray(cfg.sidelobe_weighting, float)
        if wsl.shape != (grid.size,) or np.any(wsl < 0):
            raise ValueError("sidelobe_weighting must be nonnegative with one entry per sample")
    return SectorSpec(eff, blocked, fov, grid, desired, cap, g0,
                      g0 * 10 ** (cfg.blocked_cap_db / 10), wsl)


# ---------------------------------------------------------------------------
# null-space projector and one-shot solvers


@dataclass(frozen=True)
class NullSpaceProjector:
    projector: np.ndarray
    blocked_dictionary: np.ndarray
    ortho_basis_blocked: np.ndarray

    @property
    def rank(self) -> int:
        return self.ortho_basis_blocked.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``P_N x`` via the thin basis (cheaper than the dense product)."""
        Q = self.ortho_basis_blocked
        if Q.shape[1] == 0:
            return x
        return x - Q @ (Q.conj().T @ x)


def build_projector(blocked_dictionary: np.ndarray, rank_tol: float | None = None
                    ) -> NullSpaceProjector:
    """``P_N = I - Q Q^H`` with ``Q`` an orthonormal basis of ``range(A_blk)``.

    By default the rank cut is the usual ``max(shape) * eps * s_max``, so every
    numerically present direction is nulled and the leakage on the blocked
    dictionary is at roundoff level.  ``rank_tol`` instead keeps singular
    directions above ``rank_tol * s_max`` only; the residual leakage is then
    bounded by ``s_{r+1} ||x||`` but more degrees of freedom survive.
    """
    B = np.asarray(blocked_dictionary, complex)
    M = B.shape[0]
    if B.ndim != 2:
        raise ValueError("blocked dictionary must be a matrix")
    if B.shape[1] == 0:
        return NullSpaceProjector(np.eye(M, dtype=complex), B, np.zeros((M, 0), complex))
    U, s, _ = np.linalg.svd(B, full_matrices=False)
    if rank_tol is None:
        tol = max(B.shape) * np.finfo(float).eps * s[0] if s.size else 0.0
    else:
        tol = max(rank_tol, max(B.shape) * np.finfo(float).eps) * s[0] if s.size else 0.0
    r = int(np.sum(s > tol))
    Q = U[:, :r]
    P = np.eye(M, dtype=complex) - Q @ Q.conj().T
    P = (P + P.conj().T) / 2
    return NullSpaceProjector(P, B, Q)


def _target_vector(spec: SectorSpec, desired_phase=None) -> np.ndarray:
    d = np.sqrt(spec.desired_in[spec.in_idx]).astype(complex)
    if desired_phase is not None:
        d = d * np.exp(1j * np.asarray(desired_phase)[spec.in_idx])
    return d


@dataclass
class LsSolution:
    """Pre-amplitude-projection weights with the objective that produced them."""

    weights: np.ndarray
    objective: float
    coefficients: np.ndarray | None = None


def hard_objective(w, spec: SectorSpec, cfg: GsConfig, A: np.ndarray, d=None,
                   coef_norm2: float | None = None) -> float:
    """``||A_in^H w - d||^2 + lam_sl ||W A_sl^H w||^2 + mu ||z||^2``."""
    d = _target_vector(spec) if d is None else d
    fit = np.sum(np.abs(A[:, spec.in_idx].conj().T @ w - d) ** 2)
    sl = spec.sidelobe_weights[spec.sl_idx] * (A[:, spec.sl_idx].conj().T @ w)
    reg = float(np.vdot(w, w).real) if coef_norm2 is None else coef_norm2
    return float(fit + cfg.sidelobe_weight * np.sum(np.abs(sl) ** 2) + cfg.mu(A) * reg)


def solve_hard_ls(spec: SectorSpec, proj: NullSpaceProjector, cfg: GsConfig,
                  A: np.ndarray, d=None) -> LsSolution:
    """Regularised LS restricted to the null space of the blocked dictionary.

    Solves ``(P A_in A_in^H P + lam_sl P A_sl W^2 A_sl^H P + mu I) z = P A_in d``
    and returns ``w = P z``.
    """
    if spec.in_idx.size == 0:
        raise InfeasibleSectorError("no in-sector samples")
    d = _target_vector(spec) if d is None else np.asarray(d, complex)
    mu = cfg.mu(A)
    P = proj.projector
    At_in = P @ A[:, spec.in_idx]
    if np.linalg.norm(At_in) <= 1e-10 * np.linalg.norm(A[:, spec.in_idx]):
        raise InfeasibleSectorError("sector is annihilated by the null-space projector")
    At_sl = P @ (A[:, spec.sl_idx] * spec.sidelobe_weights[spec.sl_idx])
    N = At_in @ At_in.conj().T + cfg.sidelobe_weight * At_sl @ At_sl.conj().T
    N = N + mu * np.eye(len(N))
    try:
        z = sla.solve(N, At_in @ d, assume_a="her")
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise np.linalg.LinAlgError("singular normal matrix; use tikhonov > 0") from exc
    if mu == 0 and np.linalg.cond(N) > 1e14:
        raise np.linalg.LinAlgError("singular normal matrix; use tikhonov > 0")
    w = P @ z
    return LsSolution(w, hard_objective(w, spec, cfg, A, d, float(np.vdot(z, z).real)), z)


def solve_soft_ls(spec: SectorSpec, cfg: GsConfig, A: np.ndarray, d=None,
                  blocked_weight: float | None = None) -> LsSolution:
    """Penalised LS ``fit + lam_blk ||A_blk^H w||^2 + lam_sl ||W A_sl^H w||^2 + mu ||w||^2``
    subject to ``||w||^2 <= P``.

    The power cap is handled exactly: if the unconstrained optimum exceeds it,
    the extra ridge ``nu`` is found by bisection so that ``||w||^2 = P``.
    """
    if spec.in_idx.size == 0:
        raise InfeasibleSectorError("no in-sector samples")
    lam_blk = cfg.blocked_weight if blocked_weight is None else blocked_weight
    d = _target_vector(spec) if d is None else np.asarray(d, complex)
    mu = cfg.mu(A)
    A_in = A[:, spec.in_idx]
    A_sl = A[:, spec.sl_idx] * spec.sidelobe_weights[spec.sl_idx]
    A_b = A[:, spec.blk_idx]
    G = (A_in @ A_in.conj().T + cfg.sidelobe_weight * A_sl @ A_sl.conj().T
         + lam_blk * A_b @ A_b.conj().T)
    rhs = A_in @ d
    lam, V = np.linalg.eigh(G)
    b = V.conj().T @ rhs

    def solve(nu):
        return V @ (b / (lam + mu + nu))

    w = solve(0.0)
    P = cfg.power_budget
    if np.vdot(w, w).real > P:
        lo, hi = 0.0, max(1.0, float(np.linalg.norm(b)) / math.sqrt(P))
        while np.vdot(solve(hi), solve(hi)).real > P:
            hi *= 2
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.vdot(solve(mid), solve(mid)).real > P:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * max(hi, 1.0):
                break
        w = solve(hi)
    obj = hard_objective(w, spec, cfg, A, d) + lam_blk * float(
        np.sum(np.abs(A_b.conj().T @ w) ** 2))
    return LsSolution(w, obj)


def gs_basis(proj: NullSpaceProjector, target_dictionary: np.ndarray,
             tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ``span(P_N A)`` by Gram-Schmidt with reorthogonalisation.

    Columns are processed in order; a column whose residual falls below
    ``tol`` times the largest projected column norm is dropped.  Each kept
    residual is projected once more onto the null space before normalising,
    which keeps ``A_blk^H U`` at roundoff level even for weak directions.
    """
    X = proj.projector @ np.asarray(target_dictionary, complex)
    M = X.shape[0]
    norms = np.linalg.norm(X, axis=0)
    lead = float(norms.max()) if norms.size else 0.0
    scale = float(np.abs(target_dictionary).max()) if norms.size else 0.0
    if lead <= 1e-10 * scale or lead == 0.0:
        raise InfeasibleSectorError("sector is annihilated by the null-space projector")
    U = np.zeros((M, 0), complex)
    for j in range(X.shape[1]):
        v = X[:, j].copy()
        for _ in range(2):
            v -= U @ (U.conj().T @ v)
        if np.linalg.norm(v) <= tol * lead:
            continue
        v = proj.apply(v)
        v -= U @ (U.conj().T @ v)
        U = np.column_stack([U, v / np.linalg.norm(v)])
        if U.shape[1] == M:
            break
    if U.shape[1] == 0:
        raise InfeasibleSectorError("sector is annihilated by the null-space projector")
    return U


def solve_reduced(U: np.ndarray, spec: SectorSpec, cfg: GsConfig, A: np.ndarray,
                  d=None) -> LsSolution:
    """LS over ``w = U c``: ``min ||A_in^H U c - d||^2 + lam_sl ||W A_sl^H U c||^2 + mu ||c||^2``."""
    if U.shape[1] < 1:
        raise InfeasibleSectorError("empty basis")
    d = _target_vector(spec) if d is None else np.asarray(d, complex)
    mu = cfg.mu(A)
    B_in = A[:, spec.in_idx].conj().T @ U
    B_sl = (spec.sidelobe_weights[spec.sl_idx, None] * A[:, spec.sl_idx].conj().T) @ U
    G = B_in.conj().T @ B_in + cfg.sidelobe_weight * B_sl.conj().T @ B_sl
    c = sla.solve(G + mu * np.eye(len(G)), B_in.conj().T @ d, assume_a="her")
    w = U @ c
    return LsSolution(w, hard_objective(w, spec, cfg, A, d, float(np.vdot(c, c).real)), c)


# ---------------------------------------------------------------------------
# masked GS loop


def masked_target(grid: AngularGrid, spec: SectorSpec, current: np.ndarray,
                  null_mode: str = "hard") -> np.ndarray:
    """Enforce region magnitudes on the current pattern, keeping its phase.

    In-sector samples get ``sqrt(G_in)``; sidelobes are clamped to
    ``sqrt(G_sl)``; blocked samples are zeroed (``hard``), clamped to
    ``sqrt(eps_blk)`` (``soft``) or passed through (``exclude``, the caller
    drops them from the fit).
    """
    F = np.asarray(current, complex)
    mag = np.abs(F)
    ph = np.where(mag > 0, F / np.where(mag > 0, mag, 1.0), 1.0)
    out = F.copy()
    t = grid.tags
    inn = t == IN_SECTOR
    out[inn] = np.sqrt(spec.desired_in[inn]) * ph[inn]
    sl = t == SIDELOBE
    cap = np.sqrt(spec.sidelobe_cap[sl])
    out[sl] = np.where(mag[sl] > cap, cap * ph[sl], F[sl])
    blk = t == BLOCKED
    if null_mode == "hard":
        out[blk] = 0.0
    elif null_mode == "soft":
        c = math.sqrt(spec.blocked_cap)
        out[blk] = np.where(mag[blk] > c, c * ph[blk], F[blk])
    elif null_mode != "exclude":
        raise ValueError(f"unknown null_mode {null_mode!r}")
    return out


def amplitude_project(w: np.ndarray, cfg: GsConfig) -> np.ndarray:
    M = len(w)
    P = cfg.power_budget
    if cfg.amplitude_mode == "constant_modulus":
        mag = np.abs(w)
        ph = np.where(mag > 0, w / np.where(mag > 0, mag, 1.0), 1.0)
        return math.sqrt(P / M) * ph
    n = np.linalg.norm(w)
    if n == 0:
        return np.full(M, math.sqrt(P / M), complex)
    return w * (math.sqrt(P) / n)


def _sample_weights(spec: SectorSpec, cfg: GsConfig) -> np.ndarray:
    t = spec.grid.tags
    wt = np.ones(spec.grid.size)
    sl = t == SIDELOBE
    wt[sl] = cfg.sidelobe_weight * spec.sidelobe_weights[sl] ** 2
    blk = t == BLOCKED
    wt[blk] = {"hard": 1.0, "soft": cfg.blocked_weight, "exclude": 0.0}[cfg.null_mode]
    return wt


@dataclass
class GsTrace:
    """Per-iteration record of one masked GS run.

    ``residuals[t]`` is ``E_t`` for the iterate after ``t`` full steps
    (``residuals[0]`` is the initial point).  ``half_residuals[t]`` is the LS
    half-step value ``E_{t+1/2}``.  The counter tallies complex multiplies.
    """

    residuals: list = field(default_factory=list)
    half_residuals: list = field(default_factory=list)
    stopped_at: int | None = None
    best_index: int = 0
    multiplies: int = 0

    @property
    def iterations(self) -> int:
        return len(self.residuals) - 1

    @property
    def normalized(self) -> np.ndarray:
        r = np.asarray(self.residuals, float)
        return r / r[0] if r.size and r[0] > 0 else r

    @property
    def relative_decrease(self) -> np.ndarray:
        r = np.asarray(self.residuals, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r[:-1] > 0, (r[:-1] - r[1:]) / r[:-1], 0.0)

    def half_step_ok(self, slack: float = 1e-9) -> bool:
        r = np.asarray(self.residuals[:len(self.half_residuals)])
        h = np.asarray(self.half_residuals)
        return bool(np.all(h <= r * (1 + slack) + 1e-300))


@dataclass
class Codeword:
    weights: np.ndarray
    layer: int
    index: int
    coverage: AngularSet
    residual_trace: list = field(default_factory=list)
    pruned: bool = False
    sector: AngularSet | None = None

    def gain(self, layout_or_M, u) -> np.ndarray:
        if isinstance(layout_or_M, ArrayLayout):
            a = steering_matrix(layout_or_M, u)
        else:
            from .angular import ula_steering_matrix
            a = ula_steering_matrix(int(layout_or_M), u)
        return np.abs(a.conj().T @ self.weights) ** 2


class _Setup:
    """Per-node matrices shared across iterations."""

    def __init__(self, spec: SectorSpec, cfg: GsConfig, A: np.ndarray, counter: OpCounter):
        M, Nu = A.shape
        self.wt = _sample_weights(spec, cfg)
        self.mu = cfg.mu(A)
        G = (A * self.wt) @ A.conj().T + self.mu * np.eye(M)
        counter.add(M * M * Nu + M**3 // 3)
        self.chol = sla.cho_factor(G)
        self.A = A
        self.Aw = A * self.wt


def gs_iterate(w0, spec: SectorSpec, proj: NullSpaceProjector | None, cfg: GsConfig,
               A: np.ndarray, *, max_iter: int | None = None, early_stop: bool = True,
               counter: OpCounter | None = None, _setup: _Setup | None = None):
    """Masked GS loop: pattern, masked target, LS back-projection, null projection,
    amplitude projection.

    ``E_t`` is the weighted masked misfit ``sum wt |a_i^H w_t - F~_i(w_t)|^2``
    where ``F~`` is the masked target built from the pattern of ``w_t``.  The
    loop stops when the relative change ``|E_{t-1} - E_t| / E_{t-1}`` drops
    below ``rel_tol`` or after ``max_iter`` steps; among the iterates
    ``t >= 1`` the one with the smallest ``E`` is returned (the start point
    itself never is).

    Returns
    -------
    codeword : Codeword
        Best iterate; ``residual_trace`` is ``E_0`` followed by the running
        minimum of ``E_t`` for ``t >= 1``.
    trace : GsTrace
    """
    w = np.asarray(w0, complex)
    if not np.any(w):
        raise ValueError("w0 must be nonzero")
    if spec.in_idx.size == 0:
        raise InfeasibleSectorError("no in-sector samples")
    counter = OpCounter() if counter is None else counter
    start = counter.multiplies
    M, Nu = A.shape
    if proj is not None and spec.blk_idx.size and cfg.null_mode != "soft":
        if np.linalg.norm(proj.projector @ A[:, spec.in_idx]) <= 1e-10 * np.linalg.norm(
                A[:, spec.in_idx]):
            raise InfeasibleSectorError("sector is annihilated by the null-space projector")
    use_proj = proj is not None and proj.rank > 0 and cfg.null_mode != "soft"
    st = _setup or _Setup(spec, cfg, A, counter)
    n_iter = cfg.max_iter if max_iter is None else max_iter
    grid = spec.grid

    def residual(w):
        F = A.conj().T @ w
        Ft = masked_target(grid, spec, F, cfg.null_mode)
        counter.add(M * Nu)
        return float(np.sum(st.wt * np.abs(F - Ft) ** 2)), Ft

    trace = GsTrace()
    E, Ft = residual(w)
    trace.residuals.append(E)
    best_w, best_E = None, np.inf
    for t in range(n_iter):
        w_ls = sla.cho_solve(st.chol, st.Aw @ Ft)
        counter.add(M * Nu + 2 * M * M)
        trace.half_residuals.append(float(np.sum(st.wt * np.abs(A.conj().T @ w_ls - Ft) ** 2)))
        counter.add(M * Nu)
        if use_proj:
            w_ls = proj.apply(w_ls)
            counter.add(2 * M * proj.rank)
        w_new = amplitude_project(w_ls, cfg)
        counter.add(M)
        E_new, Ft = residual(w_new)
        trace.residuals.append(E_new)
        if E_new < best_E:
            best_w, best_E = w_new, E_new
            trace.best_index = t + 1
        rel = abs(E - E_new) / E if E > 0 else 0.0
        w, E = w_new, E_new
        if early_stop and rel < cfg.rel_tol:
            trace.stopped_at = t + 1
            break
    trace.multiplies = counter.multiplies - start
    if best_w is None:  # max_iter == 0
        best_w = w
    # w0 is never returned: the codeword is always a synthesized iterate
    r = np.asarray(trace.residuals)
    run_min = [float(r[0])] + np.minimum.accumulate(r[1:]).tolist()
    cw = Codeword(best_w, 0, 0, spec.sector, run_min, False, spec.sector)
    return cw, trace


def random_phase_weights(M: int, rng, power: float = 1.0) -> np.ndarray:
    return math.sqrt(power / M) * np.exp(1j * rng.uniform(0, 2 * np.pi, M))


def measured_coverage(w: np.ndarray, A: np.ndarray, samples: np.ndarray,
                      level: float) -> AngularSet:
    """Union of grid cells whose gain is at least ``level``."""
    g = np.abs(A.conj().T @ w) ** 2
    if samples.size < 2:
        return AngularSet.empty()
    edges = np.concatenate([[samples[0] - (samples[1] - samples[0]) / 2],
                            (samples[1:] + samples[:-1]) / 2,
                            [samples[-1] + (samples[-1] - samples[-2]) / 2]])
    on = g >= level
    return AngularSet.of(*[(edges[i], edges[i + 1]) for i in np.flatnonzero(on)])


# ---------------------------------------------------------------------------
# rotation


def _shift_set(s: AngularSet, delta: float, period: float | None) -> AngularSet:
    pieces = []
    for iv in s:
        lo, hi = iv.lo + delta, iv.hi + delta
        if period is None:
            pieces.append((lo, hi))
        else:
            for k in (-1, 0, 1):
                pieces.append((lo + k * period, hi + k * period))
    return AngularSet.of(*pieces).intersect(FULL_U)


def rotate_codeword(cw: Codeword, delta: float, layout: ArrayLayout | None = None) -> Codeword:
    """Shift a codeword's pattern by ``delta`` in spatial frequency.

    Weights are multiplied by the ramp ``exp(j k x_m delta)`` (``exp(j pi m
    delta)`` for the half-wavelength ULA), so the rotated gain at ``u`` equals
    the original gain at ``u - delta``.  Coverage wraps with period 2 for the
    half-wavelength ULA and is clipped otherwise.
    """
    M = len(cw.weights)
    if layout is None:
        ramp = np.exp(1j * math.pi * np.arange(M) * delta)
        period = 2.0
    else:
        x = (layout.positions - layout.reference_point)[:, 0]
        ramp = np.exp(1j * 2 * math.pi / layout.wavelength * x * delta)
        d = np.diff(np.sort(x))
        half = layout.wavelength / 2
        period = 2.0 if M == 1 or np.allclose(d, half, rtol=1e-9, atol=1e-15) else None
    sector = None if cw.sector is None else _shift_set(cw.sector, delta, period)
    return replace(cw, weights=cw.weights * ramp,
                   coverage=_shift_set(cw.coverage, delta, period), sector=sector)


# ---------------------------------------------------------------------------
# hierarchy


def node_sector(layer: int, index: int) -> AngularSet:
    width = 2.0 / 2**layer
    lo = -1.0 + index * width
    return AngularSet.of((lo, lo + width))


@dataclass
class HierarchicalCodebook:
    layers: list
    available: AngularSet
    config: GsConfig
    M: int
    traces: dict = field(default_factory=dict)
    multiplies: int = 0

    @property
    def S(self) -> int:
        return len(self.layers)

    def node(self, layer: int, index: int) -> Codeword:
        return self.layers[layer - 1][index]

    def children(self, layer: int, index: int) -> list:
        if layer >= self.S:
            return []
        return [self.layers[layer][2 * index], self.layers[layer][2 * index + 1]]

    @property
    def leaves(self) -> list:
        return self.layers[-1]

    def pruned_fraction(self, layer: int) -> float:
        nodes = self.layers[layer - 1]
        return sum(c.pruned for c in nodes) / len(nodes)

    def to_dict(self) -> dict:
        nodes = []
        for layer in self.layers:
            for cw in layer:
                lo, hi = cw.sector.bounds if cw.sector is not None and not cw.sector.is_empty() \
                    else node_sector(cw.layer, cw.index).bounds
                nodes.append({
                    "layer": cw.layer, "index": cw.index,
                    "sector_lo": lo, "sector_hi": hi, "pruned": bool(cw.pruned),
                    "weights": np.column_stack([cw.weights.real, cw.weights.imag]).ravel().tolist(),
                    "coverage": cw.coverage.to_pairs(),
                })
        return {"M": self.M, "available": self.available.to_pairs(),
                "config": self.config.to_dict(), "nodes": nodes}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "HierarchicalCodebook":
        M = int(d["M"])
        S = int(round(math.log2(M)))
        layers = [[None] * 2**s for s in range(1, S + 1)]
        for n in d["nodes"]:
            wv = np.asarray(n["weights"], float).reshape(-1, 2)
            cw = Codeword(wv[:, 0] + 1j * wv[:, 1], n["layer"], n["index"],
                          AngularSet.of(*n.get("coverage", [])), [], n["pruned"],
                          AngularSet.of((n["sector_lo"], n["sector_hi"])))
            layers[n["layer"] - 1][n["index"]] = cw
        return cls(layers, AngularSet.of(*d["available"]), GsConfig.from_dict(d["config"]), M)

    @classmethod
    def from_json(cls, text: str) -> "HierarchicalCodebook":
        return cls.from_dict(json.loads(text))


def build_hierarchy(available: AngularSet, layout: ArrayLayout | int, cfg: GsConfig = GsConfig(),
                    *, fov: AngularSet = FULL_U, rng=None, seed: int | None = 0,
                    counter: OpCounter | None = None, keep_traces: bool = False,
                    ) -> HierarchicalCodebook:
    """Synthesize the binary-tree codebook over ``fov`` avoiding ``fov - available``.

    Layer 1 starts from random phases; each child is warm-started from its
    parent's weights.  A node is pruned when its sector has no available
    measure, or when the null-space projector annihilates it.
    """
    if isinstance(layout, int):
        layout = ArrayLayout.ula(layout, 1.0)
    M = layout.element_count
    S = int(round(math.log2(M)))
    if M < 2 or 2**S != M:
        raise ValueError("M must be a power of two >= 2")
    available = available.intersect(fov)
    if available.is_empty():
        raise OutageError("no available direction")
    rng = np.random.default_rng(seed) if rng is None else rng
    counter = OpCounter() if counter is None else counter
    blocked = fov.subtract(available)
    samples = uniform_samples(fov, cfg.grid_factor * M / fov.measure)
    A = steering_matrix(layout, samples)
    blk = blocked.contains(samples)
    proj = build_projector(A[:, blk], cfg.projector_rank_tol) if cfg.null_mode != "soft" else None
    if proj is not None:
        counter.add(M * M * int(blk.sum()))

    shared = None
    layers: list[list[Codeword]] = []
    traces = {}
    for s in range(1, S + 1):
        row = []
        for l in range(2**s):
            sector = node_sector(s, l)
            eff = sector.intersect(available)
            parent = layers[-1][l // 2] if s > 1 else None
            if eff.measure <= 1e-12:
                row.append(Codeword(np.zeros(M, complex), s, l, AngularSet.empty(), [], True, sector))
                continue
            spec = make_sector_spec(sector, blocked, M, cfg, fov, samples)
            A_node = A if spec.grid.size == len(samples) else steering_matrix(layout, spec.grid.samples)
            if parent is not None and not parent.pruned:
                w0 = parent.weights
            else:
                w0 = random_phase_weights(M, rng, cfg.power_budget)
            setup = None
            if A_node is A and cfg.null_mode == "hard" and cfg.sidelobe_weight == 1.0 \
                    and cfg.sidelobe_weighting is None:
                if shared is None:
                    shared = _Setup(spec, cfg, A, counter)
                setup = shared
            try:
                cw, tr = gs_iterate(w0, spec, proj, cfg, A_node, counter=counter, _setup=setup)
            except InfeasibleSectorError:
                row.append(Codeword(np.zeros(M, complex), s, l, AngularSet.empty(), [], True, sector))
                continue
            cov = measured_coverage(cw.weights, A_node, spec.grid.samples, spec.edge_level)
            row.append(replace(cw, layer=s, index=l, coverage=cov, sector=sector))
            if keep_traces:
                traces[(s, l)] = tr
        layers.append(row)
    if all(c.pruned for c in layers[0]):
        raise OutageError("both layer-1 sectors are blocked")
    return HierarchicalCodebook(layers, available, cfg, M, traces, counter.multiplies)
