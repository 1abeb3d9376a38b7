"""Geometric BS-RIS-UE channels, RIS cascade, SNR and rate.

Channels follow the usual mmWave normalisation with unit-norm steering vectors
and explicit array-gain factors::

    H_BR   = sqrt(M*N / L_g) * sum_l rho_l  a_R(theta_l) a_B(phi_l)^H      (N x M)
    h_RU,k = sqrt(N / L_b)   * sum_l beta_l a_R(psi_l)                     (N,)

so that ``E||H_BR||_F^2 = M*N*sum|rho_l|^2 / L_g``.  Path power gains come from
the LOS/NLOS path-loss model; phases are uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .angular import AngularSet, ArrayLayout, steering_matrix
from .blockage import RisGeometry

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, float) - 30.0) / 10.0)


def watts_to_dbm(w):
    return 10.0 * np.log10(np.asarray(w, float)) + 30.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, float) / 10.0)


@dataclass(frozen=True)
class PathLossModel:
    """Two-branch LOS/NLOS path loss with ``p_L(d) = exp(-(d/L)^2)``.

    ``k_los``/``k_nlos`` are linear power gains at 1 m.
    """

    k_los: float
    k_nlos: float
    beta_los: float = 2.0
    beta_nlos: float = 3.3
    los_scale: float = 50.0

    def __post_init__(self):
        if not (self.k_los > 0 and self.k_nlos > 0):
            raise ValueError("attenuation constants must be positive")
        if not (self.beta_nlos >= self.beta_los > 0):
            raise ValueError("need beta_nlos >= beta_los > 0")
        if not self.los_scale > 0:
            raise ValueError("los_scale must be positive")

    @classmethod
    def default(cls, wavelength: float) -> "PathLossModel":
        k = (wavelength / (4 * math.pi)) ** 2
        return cls(k_los=k, k_nlos=0.01 * k)


def los_probability(model: PathLossModel, distance) -> np.ndarray | float:
    d = np.asarray(distance, float)
    if np.any(d < 0):
        raise ValueError("distance must be nonnegative")
    p = np.exp(-((d / model.los_scale) ** 2))
    return float(p) if p.ndim == 0 else p


def sample_path_gain(model: PathLossModel, distance: float, rng) -> tuple[float, bool]:
    """Draw one path power gain and whether the LOS branch was taken."""
    if not distance > 0:
        raise ValueError("distance must be positive")
    los = bool(rng.random() < los_probability(model, distance))
    if los:
        return model.k_los * distance ** (-model.beta_los), True
    return model.k_nlos * distance ** (-model.beta_nlos), False


@dataclass(frozen=True)
class LinkBudget:
    """Transmit power and noise in watts, bandwidth and carrier in Hz."""

    tx_power: float
    noise_power: float
    bandwidth: float = 1e9
    carrier: float = 60e9

    def __post_init__(self):
        for name in ("tx_power", "noise_power", "bandwidth", "carrier"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_dbm(cls, tx_power_dbm: float, noise_dbm: float = -90.0, **kw) -> "LinkBudget":
        return cls(float(dbm_to_watts(tx_power_dbm)), float(dbm_to_watts(noise_dbm)), **kw)

    @classmethod
    def from_snr_db(cls, snr_db: float, noise_dbm: float = -90.0, **kw) -> "LinkBudget":
        """Budget whose ``p / sigma^2`` equals ``snr_db``."""
        noise = float(dbm_to_watts(noise_dbm))
        return cls(noise * float(db_to_linear(snr_db)), noise, **kw)

    @property
    def snr(self) -> float:
        return self.tx_power / self.noise_power

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier


def check_ris_phase(phi, tol: float = 1e-12) -> np.ndarray:
    phi = np.asarray(phi, complex)
    if np.any(np.abs(np.abs(phi) - 1.0) > tol):
        raise ValueError("RIS phases must have unit modulus")
    return phi


@dataclass(frozen=True)
class ChannelRealization:
    """One cascaded-channel draw.

    ``h_ris_ue`` has shape ``(K, N)``; per-UE path data has shape ``(K, L_b)``.
    ``blocked_paths`` flags BS-RIS paths removed by blockage.
    """

    h_bs_ris: np.ndarray
    h_ris_ue: np.ndarray
    aod_bs: np.ndarray
    aoa_ris: np.ndarray
    aod_ris: np.ndarray
    gains_br: np.ndarray
    gains_ru: np.ndarray
    seed: int | None = None
    los_br: np.ndarray | None = None
    los_ru: np.ndarray | None = None
    blocked_paths: np.ndarray | None = None
    scale: float = 1.0

    @property
    def M(self) -> int:
        return self.h_bs_ris.shape[1]

    @property
    def N(self) -> int:
        return self.h_bs_ris.shape[0]

    @property
    def K(self) -> int:
        return self.h_ris_ue.shape[0]

    def effective(self, phi) -> np.ndarray:
        """Cascaded rows ``h_RU,k^H diag(phi) H_BR`` stacked as ``(K, M)``."""
        return (self.h_ris_ue.conj() * np.asarray(phi)[None, :]) @ self.h_bs_ris

    def scaled(self, factor: float) -> "ChannelRealization":
        """Scale the BS-RIS link amplitude by ``factor``."""
        return replace(self, h_bs_ris=self.h_bs_ris * factor,
                       gains_br=self.gains_br * factor, scale=self.scale * factor)

    def normalized(self, phi) -> "ChannelRealization":
        """Rescale so the UE-averaged cascaded energy ``mean_k ||H_k||^2`` is one.

        With this normalisation ``p / sigma^2`` is the matched-filter SNR of an
        average user, which is how the SNR axes of the sweeps are defined.
        """
        e = float(np.mean(np.sum(np.abs(self.effective(phi)) ** 2, axis=1)))
        if e <= 0:
            return self
        return self.scaled(1.0 / math.sqrt(e))


def ris_layout(ris: RisGeometry, wavelength: float) -> ArrayLayout:
    return ArrayLayout(ris.element_positions, wavelength, reference_point=ris.center)


def _u_towards(src, dst, axis=(1.0, 0.0, 0.0)) -> float:
    v = np.asarray(dst, float)[:2] - np.asarray(src, float)[:2]
    return float(np.dot(v, np.asarray(axis)[:2]) / np.linalg.norm(v))


def synthesize_channels(layout: ArrayLayout, ris: RisGeometry, ue_positions,
                        model: PathLossModel, L_g: int, L_b: int, seed: int,
                        *, blocked_u: AngularSet | None = None,
                        small_scale_seed: int | None = None) -> ChannelRealization:
    """Draw a BS-RIS-UE channel.

    Path 0 of each link is the geometric direction between the nodes; the other
    paths have uniform spatial frequencies.  Angles and path powers depend only
    on ``seed``; with ``small_scale_seed`` the path phases are drawn from a
    separate stream, so snapshots with fixed large-scale geometry can be made.
    BS-RIS paths departing into ``blocked_u`` are removed.
    """
    if L_g < 1 or L_b < 1:
        raise ValueError("need at least one path per link")
    rng = np.random.default_rng(seed)
    phase_rng = rng if small_scale_seed is None else np.random.default_rng(small_scale_seed)
    lam = layout.wavelength
    M = layout.element_count
    N = ris.element_count
    ues = np.atleast_2d(np.asarray(ue_positions, float))
    K = len(ues)
    bs = layout.reference_point
    rc = ris.center

    aod_bs = np.empty(L_g)
    aoa_ris = np.empty(L_g)
    aod_bs[0] = _u_towards(bs, rc)
    aoa_ris[0] = _u_towards(rc, bs)
    aod_bs[1:] = rng.uniform(-1, 1, L_g - 1)
    aoa_ris[1:] = rng.uniform(-1, 1, L_g - 1)
    d_br = float(np.linalg.norm((rc - bs)[:2]))
    pw_br = np.empty(L_g)
    los_br = np.empty(L_g, bool)
    for l in range(L_g):
        pw_br[l], los_br[l] = sample_path_gain(model, d_br, rng)

    aod_ris = np.empty((K, L_b))
    pw_ru = np.empty((K, L_b))
    los_ru = np.empty((K, L_b), bool)
    for k, ue in enumerate(ues):
        aod_ris[k, 0] = _u_towards(rc, ue)
        aod_ris[k, 1:] = rng.uniform(-1, 1, L_b - 1)
        d_ru = float(np.linalg.norm((ue - rc)[:2]))
        for l in range(L_b):
            pw_ru[k, l], los_ru[k, l] = sample_path_gain(model, d_ru, rng)

    gains_br = np.sqrt(pw_br) * np.exp(1j * phase_rng.uniform(0, 2 * np.pi, L_g))
    gains_ru = np.sqrt(pw_ru) * np.exp(1j * phase_rng.uniform(0, 2 * np.pi, (K, L_b)))
    blocked = np.zeros(L_g, bool)
    if blocked_u is not None:
        blocked = blocked_u.contains(aod_bs)
        gains_br = np.where(blocked, 0.0, gains_br)

    rl = ris_layout(ris, lam)
    A_B = steering_matrix(layout, aod_bs)
    A_R = steering_matrix(rl, aoa_ris)
    H_br = math.sqrt(M * N / L_g) * (A_R * gains_br[None, :]) @ A_B.conj().T
    h_ru = np.empty((K, N), complex)
    for k in range(K):
        h_ru[k] = math.sqrt(N / L_b) * steering_matrix(rl, aod_ris[k]) @ gains_ru[k]
    return ChannelRealization(H_br, h_ru, aod_bs, aoa_ris, aod_ris, gains_br, gains_ru,
                              seed=seed, los_br=los_br, los_ru=los_ru, blocked_paths=blocked)


def cascade(h_ru_k, phi, h_br) -> np.ndarray:
    """Row ``h_ru_k^H diag(phi) H_BR`` as a length-M vector."""
    h_ru_k = np.asarray(h_ru_k)
    h_br = np.asarray(h_br)
    phi = np.asarray(phi)
    if h_ru_k.shape != (h_br.shape[0],) or phi.shape != (h_br.shape[0],):
        raise ValueError("dimension mismatch between RIS vectors and H_BR")
    return (h_ru_k.conj() * phi) @ h_br


def snr(h_k, w, budget: LinkBudget) -> float:
    """``p |h_k w|^2 / sigma^2`` for a cascaded row ``h_k``."""
    return budget.tx_power * abs(np.dot(h_k, w)) ** 2 / budget.noise_power


def rate(gamma):
    gamma = np.asarray(gamma, float)
    if np.any(gamma < 0):
        raise ValueError("SNR must be nonnegative")
    r = np.log2(1.0 + gamma)
    return float(r) if r.ndim == 0 else r


def capacity(spectral_efficiency, bandwidth: float):
    return bandwidth * np.asarray(spectral_efficiency)

