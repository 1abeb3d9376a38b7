"""Run-time beam training: pruned and traditional hierarchical descent, exhaustive DFT sweep.

Every method records the sequence of beams it measured so that rate-versus-
overhead curves and the overhead-to-target metric can be computed afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .angular import ArrayLayout, AngularSet, dft_directions
from .channel import ChannelRealization, LinkBudget
from .gs import Codeword, HierarchicalCodebook


@dataclass(frozen=True)
class TrainingBudget:
    pilot_length: int = 16
    slot_duration: float = 0.2
    move_time: float = 0.5e-3
    layouts: tuple = ()
    symbol_time: float = 1e-9

    def __post_init__(self):
        if self.pilot_length < 1:
            raise ValueError("pilot_length must be >= 1")
        if not 0 <= self.move_time < self.slot_duration:
            raise ValueError("need 0 <= move_time < slot_duration")


@dataclass
class Evaluation:
    codeword: Codeword
    measured: float
    true_rate: float


@dataclass
class TrainingResult:
    selected: Codeword | None
    evaluations: int
    measured_rates: np.ndarray
    outage: bool = False
    layout_index: int = 0
    wall_model_time: float = 0.0
    moves: int = 0
    history: list = field(default_factory=list)

    @property
    def rate(self) -> float:
        """Mean per-UE rate of the selected beam (noiseless), bits/s/Hz."""
        return float(np.mean(self.measured_rates)) if len(self.measured_rates) else 0.0


def beam_rates(channel_rows: np.ndarray, w: np.ndarray, budget: LinkBudget) -> np.ndarray:
    """Noiseless per-UE rates ``log2(1 + p |H_k w|^2 / sigma^2)``."""
    g = np.abs(channel_rows @ w) ** 2
    return np.log2(1.0 + budget.tx_power * g / budget.noise_power)


def evaluate_beam(rows: np.ndarray, w, budget: LinkBudget, L_p: int, rng) -> np.ndarray:
    """Average of ``|sqrt(p) H_k w + n|^2`` over ``L_p`` pilots, per UE.

    ``rows`` are the cascaded channels ``H_k`` (shape ``(K, M)``), already
    including the RIS phases.  Noise is ``CN(0, sigma^2)``.
    """
    rows = np.atleast_2d(rows)
    w = w.weights if isinstance(w, Codeword) else np.asarray(w)
    s = math.sqrt(budget.tx_power) * (rows @ w)
    K = rows.shape[0]
    sd = math.sqrt(budget.noise_power / 2)
    n = rng.normal(0, sd, (K, L_p)) + 1j * rng.normal(0, sd, (K, L_p))
    return np.mean(np.abs(s[:, None] + n) ** 2, axis=1)


def _rows(channel, phi):
    if isinstance(channel, ChannelRealization):
        return channel.effective(phi)
    return np.atleast_2d(np.asarray(channel))


def hierarchical_search(book: HierarchicalCodebook, channel, phi, budget: LinkBudget,
                        L_p: int, aware: bool = True, rng=None) -> TrainingResult:
    """Binary descent; at each layer measure the children of the current node.

    With ``aware`` pruned children are skipped without a measurement; without
    it every child is measured (pruned ones radiate nothing).  The decision
    statistic is the sum of per-UE measured powers; ties go to the lower index.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    rows = _rows(channel, phi)
    hist: list[Evaluation] = []
    current = None
    for s in range(1, book.S + 1):
        kids = book.layers[0] if s == 1 else book.children(s - 1, current.index)
        cands = [c for c in kids if not (aware and c.pruned)]
        if not cands or all(c.pruned for c in cands):
            return TrainingResult(None, len(hist), np.zeros(rows.shape[0]), True, history=hist)
        best, best_val = None, -np.inf
        for c in cands:
            val = float(np.sum(evaluate_beam(rows, c.weights, budget, L_p, rng)))
            hist.append(Evaluation(c, val, float(np.mean(beam_rates(rows, c.weights, budget)))))
            if val > best_val:
                best, best_val = c, val
        current = best
    return TrainingResult(current, len(hist), beam_rates(rows, current.weights, budget),
                          False, history=hist)


def dft_codewords(M: int, layout: ArrayLayout | None = None, power: float = 1.0) -> list:
    from .angular import dft_codebook
    W = dft_codebook(M, layout) * math.sqrt(power)
    u = dft_directions(M)
    S = int(round(math.log2(M))) if M > 1 else 0
    return [Codeword(W[:, i], S, i, AngularSet.of((u[i] - 1 / M, u[i] + 1 / M)))
            for i in range(M)]


def exhaustive_search(dft: list, channel, phi, budget: LinkBudget, L_p: int, rng=None,
                      order=None) -> TrainingResult:
    """Measure every codeword (in ``order`` if given) and keep the best."""
    if not dft:
        raise ValueError("empty codebook")
    rng = np.random.default_rng(0) if rng is None else rng
    rows = _rows(channel, phi)
    idx = range(len(dft)) if order is None else order
    hist = []
    best, best_val = None, -np.inf
    for i in idx:
        c = dft[i]
        val = float(np.sum(evaluate_beam(rows, c.weights, budget, L_p, rng)))
        hist.append(Evaluation(c, val, float(np.mean(beam_rates(rows, c.weights, budget)))))
        if val > best_val:
            best, best_val = c, val
    return TrainingResult(best, len(hist), beam_rates(rows, best.weights, budget), False,
                          history=hist)


def optimal_dft_rate(dft: list, channel, phi, budget: LinkBudget) -> float:
    """Best noiseless mean-UE rate over the DFT beams (perfect-CSI reference)."""
    rows = _rows(channel, phi)
    return max(float(np.mean(beam_rates(rows, c.weights, budget))) for c in dft)


def overhead_from_history(history: list, reference: float, target_fraction: float = 0.8) -> float:
    """Smallest number of measurements after which the best-so-far beam
    (by measured power) reaches ``target_fraction * reference`` true rate.

    Returns ``math.inf`` if the target is never reached.
    """
    if not 0 <= target_fraction <= 1:
        raise ValueError("target_fraction must lie in [0, 1]")
    goal = target_fraction * reference
    best_val, best_rate = -np.inf, 0.0
    for n, ev in enumerate(history, start=1):
        if ev.measured > best_val:
            best_val, best_rate = ev.measured, ev.true_rate
        if best_rate >= goal - 1e-12:
            return n
    return math.inf


def overhead_to_target(method, channel, phi, budget: LinkBudget, dft: list,
                       target_fraction: float = 0.8) -> float:
    """Run ``method(channel, phi)`` and convert its history to overhead-to-target."""
    res = method(channel, phi)
    ref = optimal_dft_rate(dft, channel, phi, budget)
    if target_fraction == 0:
        return 1 if res.history else math.inf
    return overhead_from_history(res.history, ref, target_fraction)


def layout_sweep(budget: TrainingBudget, inner_search, scenario=None) -> TrainingResult:
    """Run ``inner_search(layout, index)`` on every candidate layout, keep the best.

    One mechanical move is charged per layout change; the model time is the
    pilot time of all measurements plus ``moves * move_time``.
    """
    layouts = list(budget.layouts)
    if not layouts:
        raise ValueError("no candidate layouts")
    best = None
    total_evals = 0
    for i, lay in enumerate(layouts):
        r = inner_search(lay, i) if scenario is None else inner_search(lay, i, scenario)
        total_evals += r.evaluations
        r.layout_index = i
        if best is None or (not r.outage and (best.outage or r.rate > best.rate)):
            best = r
    moves = len(layouts) - 1
    best.moves = moves
    best.evaluations = total_evals
    best.wall_model_time = (total_evals * budget.pilot_length * budget.symbol_time
                            + moves * budget.move_time)
    return best


def subspace_codebook_search(*_args, **_kw):
    """Subspace-codebook baseline; its construction is not available here."""
    raise NotImplementedError("subspace codebook baseline is not implemented")
