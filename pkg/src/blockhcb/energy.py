"""Energy-efficiency model and the amortised complexity calculator."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class EnergyModel:
    motion_power: float = 5.0
    dynamic_power_per_antenna: float = 0.3
    static_power: float = 0.1
    amp_efficiency: float = 0.2
    move_time: float = 0.5e-3
    slot: float = 0.2

    def __post_init__(self):
        if not 0 < self.amp_efficiency <= 1:
            raise ValueError("amp_efficiency must lie in (0, 1]")
        if not 0 <= self.move_time < self.slot:
            raise ValueError("need 0 <= move_time < slot")
        if min(self.motion_power, self.dynamic_power_per_antenna, self.static_power) < 0:
            raise ValueError("powers must be nonnegative")


def data_power(model: EnergyModel, M: int) -> float:
    """Circuit power of the transmit chain, ``M * P_c + P_s`` watts."""
    if M < 1:
        raise ValueError("M must be >= 1")
    return M * model.dynamic_power_per_antenna + model.static_power


def energy_efficiency(model: EnergyModel, capacity_bps: float, moves: int, *, M: int = 64,
                      tx_power: float = 0.0, training_time: float = 0.0) -> float:
    """Delivered bits per joule over one slot.

    Data flows for ``T - moves*tau - training_time`` seconds at ``capacity_bps``;
    the chain draws ``(tx_power + P_D) / eta_amp`` while not moving and the
    actuators draw ``P_M`` while moving.  ``tx_power`` is the radiated power
    ``p``; leaving it at zero gives the circuit-only model.
    """
    if capacity_bps < 0:
        raise ValueError("capacity must be nonnegative")
    tau = moves * model.move_time
    t_data = model.slot - tau - training_time
    if t_data <= 0:
        raise ValueError("no transmit time left in the slot")
    p_chain = (tx_power + data_power(model, M)) / model.amp_efficiency
    energy = tau * model.motion_power + (model.slot - tau) * p_chain
    return t_data * capacity_bps / energy


@dataclass(frozen=True)
class ComplexityModel:
    array: int = 64
    ris: int = 256
    users: int = 2
    pilot_length: int = 16
    evals: int = 12
    i_max: int = 40
    i_ris: int = 100
    obstacles: int = 4
    refresh_cb: float = 100.0
    refresh_ris: float = 100.0
    refresh_blk: float = 10.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"{k} must be positive")


def _amortised(x: float, r: float) -> float:
    return 0.0 if math.isinf(r) else x / r


def complexity_report(cm: ComplexityModel, measured: dict | None = None) -> dict:
    """Per-slot operation counts of each pipeline stage.

    ``runtime`` is the training cost ``B K L_p``; codebook, blockage and RIS
    terms are divided by their refresh periods; ``rotation`` is the ``M^2``
    per-slot phase ramp.  ``proposed_runtime`` uses the worst case
    ``B = 2 log2 M`` of pruned descent.
    """
    M, N, O = cm.array, cm.ris, cm.obstacles
    logO = math.log2(O) if O > 1 else 1.0
    terms = {
        "runtime_ops": cm.evals * cm.users * cm.pilot_length,
        "codebook_ops": _amortised(cm.i_max * M**3 + M**4, cm.refresh_cb),
        "blockage_ops": _amortised(M * N * O + M * O * logO, cm.refresh_blk),
        "ris_ops": _amortised(cm.i_ris * N**3, cm.refresh_ris),
        "rotation_ops": M**2,
    }
    terms["total_ops"] = sum(terms.values())
    out = {
        "model": asdict(cm),
        "terms": terms,
        "proposed_runtime_ops": 2 * math.log2(M) * cm.users * cm.pilot_length,
        "codebook_build_envelope_ops": cm.i_max * M**3 + M**4,
    }
    if measured:
        out["measured"] = dict(measured)
    return out


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


def report_text(report: dict) -> str:
    rows = [(k, v) for k, v in report["terms"].items()]
    rows.append(("proposed_runtime_ops", report["proposed_runtime_ops"]))
    rows.append(("codebook_build_envelope_ops", report["codebook_build_envelope_ops"]))
    for k, v in report.get("measured", {}).items():
        rows.append((f"measured_{k}", v))
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v:>16,.1f}" for k, v in rows)
