"""Seeded Monte-Carlo harness: per-trial pipeline, sweeps, convergence runs, figure tables.

Every trial draws its generators from ``SeedSequence([seed, trial])`` so rows
are reproducible regardless of worker count or completion order.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .angular import ArrayLayout, steering_matrix, uniform_samples
from .blockage import BlockageScene, RisGeometry, detect_blockage, place_blockages
from .channel import LinkBudget, PathLossModel, synthesize_channels
from .config import Scenario
from .energy import EnergyModel, energy_efficiency
from .gs import (FULL_U, GsConfig, InfeasibleSectorError, OutageError, build_hierarchy,
                 build_projector, gs_iterate, make_sector_spec, node_sector, random_phase_weights)
from .stage1 import build_q, estimate_covariances, ris_phases_for
from .training import (dft_codewords, exhaustive_search, hierarchical_search, optimal_dft_rate,
                       overhead_from_history)

METHODS = ("proposed", "traditional", "dft_exhaustive")
AXES = ("snr_db", "tx_power_dbm", "blockage_density", "overhead_budget")

ROW_FIELDS = ("seed", "trial", "method", "density", "snr_db", "tx_power_dbm", "evaluations",
              "rate_bps_hz", "sum_rate_bps_hz", "outage", "moves", "overhead_to_target",
              "ee_bits_per_joule", "axis", "axis_value")
SUMMARY_FIELDS = ("axis", "axis_value", "method", "trials", "outage_fraction", "rate_mean",
                  "rate_median", "rate_q25", "rate_q75", "evaluations_mean", "overhead_mean",
                  "ee_mean")
TRACE_FIELDS = ("density", "realization", "layer", "index", "t", "r_t")
ITER_FIELDS = ("density", "realization", "layer", "index", "iterations_to_threshold")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    methods: tuple = METHODS

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.axis not in AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ValueError("sweep values must be nonempty")
        if list(self.values) != sorted(self.values):
            raise ValueError("sweep values must be sorted")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ValueError(f"unknown methods {sorted(bad)}")

    def to_dict(self) -> dict:
        return {"axis": self.axis, "values": list(self.values), "methods": list(self.methods)}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        return cls(d["axis"], tuple(d["values"]), tuple(d.get("methods", METHODS)))


# -- trial construction ------------------------------------------------------------------


def _int_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint32)[0])


def energy_model(sc: Scenario) -> EnergyModel:
    e = sc.energy
    return EnergyModel(e.motion_power_w, e.dynamic_power_per_antenna_w, e.static_power_w,
                       e.amp_efficiency, e.move_time_ms * 1e-3, e.slot_ms * 1e-3)


def pathloss_model(sc: Scenario) -> PathLossModel:
    p = sc.pathloss
    base = PathLossModel.default(sc.system.wavelength)
    return PathLossModel(base.k_los if p.k_los is None else p.k_los,
                         base.k_nlos if p.k_nlos is None else p.k_nlos,
                         p.beta_los, p.beta_nlos, p.los_scale_m)


def array_layouts(sc: Scenario) -> list:
    lam = sc.system.wavelength
    o = np.asarray(sc.geometry.array_origin_m, float)
    return [ArrayLayout.ula(sc.system.M, lam, origin=o + [dx, 0.0, 0.0])
            for dx in sc.geometry.layout_offsets_m]


_TRADITIONAL: dict = {}


def traditional_codebook(M: int, cfg: GsConfig, seed: int):
    """Blockage-unaware tree (no pruning); cached per process."""
    key = (M, cfg, seed)
    if key not in _TRADITIONAL:
        _TRADITIONAL[key] = build_hierarchy(FULL_U, M, cfg, seed=seed)
    return _TRADITIONAL[key]


@dataclass
class TrialContext:
    trial: int
    density: float
    layout: ArrayLayout
    scene: BlockageScene
    report: object
    channel: object
    phi: np.ndarray
    proposed: object
    traditional: object
    dft: list
    csi: object = None


def scene_for(sc: Scenario, layout: ArrayLayout, density: float, rng) -> BlockageScene:
    b = sc.blockage
    if b.scene is not None:
        return BlockageScene.from_dicts(b.scene)
    protect = [sc.geometry.ris_center_m, *sc.geometry.ue_positions_m]
    return place_blockages(layout.positions, density, rng, radius_range=b.radius_range_m,
                           distance_range=b.distance_range_m, protect=protect)


def prepare_trial(sc: Scenario, trial: int, density: float | None = None,
                  layout_index: int = 0) -> TrialContext:
    """Scene, blockage report, Stage-I phases, current channel and both codebooks."""
    density = sc.blockage.density if density is None else density
    ss = np.random.SeedSequence([sc.seed, trial])
    s_scene, s_chan, s_snap, s_ris = ss.spawn(4)
    sysc = sc.system
    lam = sysc.wavelength
    layout = array_layouts(sc)[layout_index]
    ris = RisGeometry.ula(sysc.N, sc.geometry.ris_center_m, lam)
    ues = np.asarray(sc.geometry.ue_positions_m, float)
    scene = scene_for(sc, array_layouts(sc)[0], density, np.random.default_rng(s_scene))
    report = detect_blockage(layout, ris, scene, guard=sc.blockage.guard_rad,
                             elevation_gate=sc.blockage.elevation_gate)
    model = pathloss_model(sc)
    chan_seed = _int_seed(s_chan)
    snap_seeds = [_int_seed(c) for c in s_snap.spawn(sc.stage1.snapshots + 1)]

    def draw(small):
        return synthesize_channels(layout, ris, ues, model, sysc.L_g, sysc.L_b, chan_seed,
                                   blocked_u=report.blocked_u, small_scale_seed=small)

    snaps = [draw(s) for s in snap_seeds[:-1]]
    csi = estimate_covariances(snaps, layout=layout, sectors=sc.stage1.sectors,
                               drop_threshold=sc.stage1.drop_threshold)
    phi = ris_phases_for(build_q(csi), max_iter=sc.stage1.max_iter, starts=sc.stage1.starts,
                         rng=np.random.default_rng(s_ris))
    channel = draw(snap_seeds[-1])

    trad = traditional_codebook(sysc.M, sc.gs, sc.seed)
    if report.outage:
        prop = None
    elif report.available_u.intersect(FULL_U).measure >= FULL_U.measure - 1e-12:
        prop = trad
    else:
        try:
            prop = build_hierarchy(report.available_u, sysc.M, sc.gs, seed=sc.seed)
        except OutageError:
            prop = None
    dft = dft_codewords(sysc.M, layout, sc.gs.power_budget)
    return TrialContext(trial, density, layout, scene, report, channel, phi, prop, trad, dft, csi)


# -- per-trial evaluation ----------------------------------------------------------------


def _budget_for(sc: Scenario, axis: str, value: float):
    """Link budget and whether the channel is normalised for this axis point."""
    noise = sc.system.noise_dbm
    kw = {"bandwidth": sc.system.bandwidth_hz, "carrier": sc.system.carrier_hz}
    if axis == "tx_power_dbm":
        return LinkBudget.from_dbm(value, noise, **kw), False
    snr = value if axis == "snr_db" else sc.training.snr_db
    return LinkBudget.from_snr_db(snr, noise, **kw), True


def _search(method, ctx: TrialContext, rows, budget, L_p, rng):
    if method == "dft_exhaustive":
        return exhaustive_search(ctx.dft, rows, None, budget, L_p, rng)
    book = ctx.proposed if method == "proposed" else ctx.traditional
    if book is None:
        return None
    return hierarchical_search(book, rows, None, budget, L_p, aware=(method == "proposed"),
                               rng=rng)


def _max_evals(method, M):
    return M if method == "dft_exhaustive" else 2 * int(round(math.log2(M)))


def _truncate(history, n):
    """True rate of the best-measured beam among the first ``n`` evaluations."""
    best_val, best_rate = -np.inf, 0.0
    for ev in history[:n]:
        if ev.measured > best_val:
            best_val, best_rate = ev.measured, ev.true_rate
    return best_rate


def evaluate_trial(sc: Scenario, ctx: TrialContext, axis: str, values, methods,
                   axis_offset: int = 0) -> list[dict]:
    """Rows for every (axis value, method) of one prepared trial."""
    em = energy_model(sc)
    B = sc.system.bandwidth_hz
    L_p = sc.training.pilot_length
    moves = sc.energy.moves_per_slot + len(sc.geometry.layout_offsets_m) - 1
    out = []
    for j, v in enumerate(values):
        budget, norm = _budget_for(sc, axis, v)
        chan = ctx.channel.normalized(ctx.phi) if norm else ctx.channel
        rows = chan.effective(ctx.phi)
        ref = optimal_dft_rate(ctx.dft, rows, None, budget)
        snr_db = 10 * math.log10(budget.snr)
        tx_dbm = 10 * math.log10(budget.tx_power) + 30
        for method in methods:
            # one noise stream per axis point, shared by the methods
            rng = np.random.default_rng([sc.seed, ctx.trial, axis_offset + j])
            res = _search(method, ctx, rows, budget, L_p, rng)
            if res is None or res.outage:
                ev = 0 if res is None else res.evaluations
                rate = sum_rate = 0.0
                outage, over = True, math.inf
            else:
                per_ue = res.measured_rates
                rate, sum_rate = float(np.mean(per_ue)), float(np.sum(per_ue))
                ev, outage = res.evaluations, False
                over = overhead_from_history(res.history, ref, sc.training.target_fraction)
                if axis == "overhead_budget":
                    ev = min(int(v), res.evaluations)
                    rate = _truncate(res.history, ev)
                    sum_rate = rate * len(per_ue)
            t_train = ev * L_p / B
            ee = energy_efficiency(em, B * sum_rate, moves, M=sc.system.M,
                                   tx_power=budget.tx_power, training_time=t_train)
            out.append({
                "seed": sc.seed, "trial": ctx.trial, "method": method,
                "density": ctx.density, "snr_db": snr_db, "tx_power_dbm": tx_dbm,
                "evaluations": ev, "rate_bps_hz": rate, "sum_rate_bps_hz": sum_rate,
                "outage": outage, "moves": moves, "overhead_to_target": over,
                "ee_bits_per_joule": ee, "axis": axis, "axis_value": v,
            })
    return out


def _trial_rows(args):
    sc, trial, axis, values, methods = args
    if axis == "blockage_density":
        rows = []
        for j, d in enumerate(values):
            ctx = prepare_trial(sc, trial, density=d)
            for r in evaluate_trial(sc, ctx, "blockage_density", [d], methods, axis_offset=j):
                rows.append(r)
        return rows
    ctx = prepare_trial(sc, trial)
    return evaluate_trial(sc, ctx, axis, values, methods)


def _map(fn, jobs, parallel: int):
    if parallel <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallel) as ex:
        return list(ex.map(fn, jobs))


def sweep(sc: Scenario, spec: SweepSpec, parallel: int = 1) -> list[dict]:
    """Long-format rows ordered by (trial, axis value, method)."""
    jobs = [(sc, t, spec.axis, spec.values, spec.methods) for t in range(sc.trials)]
    return [r for rows in _map(_trial_rows, jobs, parallel) for r in rows]


def run_scenario(sc: Scenario, parallel: int = 1) -> list[dict]:
    """All configured methods at the scenario's own operating point (``training.snr_db``)."""
    return sweep(sc, SweepSpec("snr_db", (sc.training.snr_db,), sc.training.methods), parallel)


def penalised_overhead(rows: list[dict], M: int = 64) -> float:
    """Mean overhead-to-target; misses count as the method's budget plus one."""
    vals = []
    for r in rows:
        o = r["overhead_to_target"]
        if math.isinf(o):
            o = _max_evals(r["method"], M) + 1
        vals.append(o)
    return float(np.mean(vals)) if vals else math.nan


def summarize(rows: list[dict], M: int = 64) -> list[dict]:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["axis"], r["axis_value"], r["method"]), []).append(r)
    out = []
    for (axis, v, method), g in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1],
                                                                       METHODS.index(kv[0][2]))):
        rate = np.array([r["rate_bps_hz"] for r in g])
        out.append({
            "axis": axis, "axis_value": v, "method": method, "trials": len(g),
            "outage_fraction": float(np.mean([r["outage"] for r in g])),
            "rate_mean": float(rate.mean()), "rate_median": float(np.median(rate)),
            "rate_q25": float(np.quantile(rate, 0.25)), "rate_q75": float(np.quantile(rate, 0.75)),
            "evaluations_mean": float(np.mean([r["evaluations"] for r in g])),
            "overhead_mean": penalised_overhead(g, M),
            "ee_mean": float(np.mean([r["ee_bits_per_joule"] for r in g])),
        })
    return out


def outage_fraction(rows: list[dict]) -> float:
    """Share of hierarchical-method rows in outage."""
    h = [r["outage"] for r in rows if r["method"] in ("proposed", "traditional")]
    return float(np.mean(h)) if h else 0.0


# -- convergence experiments -------------------------------------------------------------


@dataclass
class NodeRun:
    density: float
    realization: int
    layer: int
    index: int
    trace: object


def iterations_to_threshold(residuals, threshold: float = 1e-3) -> int:
    """First ``t`` whose relative change ``|E_{t-1} - E_t| / E_{t-1}`` is below ``threshold``."""
    r = np.asarray(residuals, float)
    for t in range(1, len(r)):
        if r[t - 1] <= 0 or abs(r[t - 1] - r[t]) / r[t - 1] < threshold:
            return t
    return len(r) - 1


def node_runs(densities, per_density: int, *, M: int = 64, cfg: GsConfig = GsConfig(),
              iters: int = 100, seed: int = 0, warm_start: bool = True,
              wavelength: float = 299_792_458.0 / 60e9) -> list[NodeRun]:
    """GS runs on random hierarchy nodes under random disc blockage.

    Realization ``i`` of density ``d`` places discs covering ``d`` of the
    field of view, cycles the layer as ``1 + i mod log2 M`` and picks a random
    unpruned node.  With ``warm_start`` the node starts from its ancestors'
    solutions (as in the tree build); otherwise from random phases.  Each
    run has ``iters`` iterations without early stopping.
    """
    S = int(round(math.log2(M)))
    layout = ArrayLayout.ula(M, wavelength)
    samples = uniform_samples(FULL_U, cfg.grid_factor * M / FULL_U.measure)
    A = steering_matrix(layout, samples)
    out = []
    for di, d in enumerate(densities):
        if not 0 <= d < 1:
            raise ValueError("densities must lie in [0, 1)")
        for i in range(per_density):
            rng = np.random.default_rng([seed, di, i])
            scene = place_blockages(layout.positions, d, rng)
            rep = detect_blockage(layout, None, scene)
            blocked = rep.blocked_u
            avail = FULL_U.subtract(blocked)
            proj = build_projector(A[:, blocked.contains(samples)], cfg.projector_rank_tol)
            s = 1 + i % S
            cands = [l for l in range(2**s) if node_sector(s, l).intersect(avail).measure > 1e-12]

            def spec_and_dict(layer, index):
                spec = make_sector_spec(node_sector(layer, index), blocked, M, cfg, FULL_U, samples)
                if spec.grid.size == len(samples):
                    return spec, A
                return spec, steering_matrix(layout, spec.grid.samples)

            for l in rng.permutation(cands):
                l = int(l)
                w = random_phase_weights(M, rng, cfg.power_budget)
                if warm_start:
                    for ss in range(1, s):
                        spec, A_n = spec_and_dict(ss, l >> (s - ss))
                        try:
                            w = gs_iterate(w, spec, proj, cfg, A_n)[0].weights
                        except InfeasibleSectorError:
                            pass
                spec, A_n = spec_and_dict(s, l)
                try:
                    _, tr = gs_iterate(w, spec, proj, cfg, A_n, max_iter=iters, early_stop=False)
                except InfeasibleSectorError:
                    continue
                out.append(NodeRun(d, i, s, l, tr))
                break
    return out


def convergence_experiment(sc: Scenario, densities, sectors_per_density: int,
                           iters: int = 100, threshold: float = 1e-3):
    """Normalised residual traces and per-node iterations-to-threshold.

    Returns ``(trace_rows, iteration_rows)``.
    """
    runs = node_runs(densities, sectors_per_density, M=sc.system.M, cfg=sc.gs, iters=iters,
                     seed=sc.seed, wavelength=sc.system.wavelength)
    traces, iters_rows = [], []
    for r in runs:
        for t, v in enumerate(r.trace.normalized):
            traces.append({"density": r.density, "realization": r.realization, "layer": r.layer,
                           "index": r.index, "t": t, "r_t": float(v)})
        iters_rows.append({"density": r.density, "realization": r.realization, "layer": r.layer,
                           "index": r.index,
                           "iterations_to_threshold": iterations_to_threshold(r.trace.residuals,
                                                                              threshold)})
    return traces, iters_rows


# -- figure tables -----------------------------------------------------------------------


def _ci(x):
    x = np.asarray(x, float)
    return 1.96 * float(x.std(ddof=1)) / math.sqrt(len(x)) if len(x) > 1 else 0.0


def _by(rows, *keys):
    g: dict = {}
    for r in rows:
        g.setdefault(tuple(r[k] for k in keys), []).append(r)
    return g


def _method_key(k):
    return tuple(METHODS.index(x) if x in METHODS else x for x in k)


def _fig_rate(rows, xkey, xcol, B=1e9):
    out = []
    for (x, m), g in sorted(_by(rows, xkey, "method").items(), key=lambda kv: _method_key(kv[0])):
        r = [row["rate_bps_hz"] * B / 1e9 for row in g]
        out.append({xcol: x, "method": m, "rate_gbps_mean": float(np.mean(r)),
                    "rate_gbps_ci": _ci(r)})
    return out


def _fig5(rows):
    out = []
    for (d, t), g in sorted(_by(rows, "density", "t").items()):
        out.append({"density": d, "t": t, "r_t_median": float(np.median([x["r_t"] for x in g]))})
    return out


def _fig6(rows):
    out = []
    for (t,), g in sorted(_by(rows, "t").items()):
        v = [x["r_t"] for x in g]
        out.append({"t": t, "r_t_median": float(np.median(v)),
                    "r_t_q25": float(np.quantile(v, 0.25)), "r_t_q75": float(np.quantile(v, 0.75))})
    return out


def _fig7(rows):
    # iterations from the traces themselves
    its = []
    for (d, i, s, l), g in _by(rows, "density", "realization", "layer", "index").items():
        g = sorted(g, key=lambda x: x["t"])
        its.append({"density": d, "layer": s,
                    "it": iterations_to_threshold([x["r_t"] for x in g])})
    out = []
    for (s, d), g in sorted(_by(its, "layer", "density").items()):
        out.append({"layer": s, "density": d,
                    "iterations_median": float(np.median([x["it"] for x in g]))})
    return out


def _fig10(rows):
    out = []
    for (x, m), g in sorted(_by(rows, "snr_db", "method").items(), key=lambda kv: _method_key(kv[0])):
        out.append({"snr_db": x, "method": m, "ee_mbits_per_joule_mean":
                    float(np.mean([r["ee_bits_per_joule"] for r in g])) / 1e6})
    return out


def _fig11(rows):
    out = []
    for (d, m), g in sorted(_by(rows, "density", "method").items(), key=lambda kv: _method_key(kv[0])):
        out.append({"density": d, "method": m, "overhead_mean": penalised_overhead(g)})
    return out


def _fig11b(rows):
    out = []
    for (d, m), g in sorted(_by(rows, "density", "method").items(), key=lambda kv: _method_key(kv[0])):
        out.append({"density": d, "method": m, "overhead_mean": penalised_overhead(g),
                    "ee_mbits_per_joule_mean":
                    float(np.mean([r["ee_bits_per_joule"] for r in g])) / 1e6})
    return out


FIGURES = {
    "fig5": (("density", "t", "r_t_median"), _fig5),
    "fig6": (("t", "r_t_median", "r_t_q25", "r_t_q75"), _fig6),
    "fig7": (("layer", "density", "iterations_median"), _fig7),
    "fig8": (("snr_db", "method", "rate_gbps_mean", "rate_gbps_ci"),
             lambda rows: _fig_rate(rows, "snr_db", "snr_db")),
    "fig9": (("evaluations", "method", "rate_gbps_mean", "rate_gbps_ci"),
             lambda rows: _fig_rate(rows, "axis_value", "evaluations")),
    "fig10": (("snr_db", "method", "ee_mbits_per_joule_mean"), _fig10),
    "fig11": (("density", "method", "overhead_mean"), _fig11),
    "fig11b": (("density", "method", "overhead_mean", "ee_mbits_per_joule_mean"), _fig11b),
}


def emit_figure_data(rows: list[dict], figure_id: str):
    """Plot-ready ``(header, rows)`` for ``figure_id``; empty input gives no rows."""
    if figure_id not in FIGURES:
        raise ValueError(f"unknown figure id {figure_id!r}; expected one of {sorted(FIGURES)}")
    header, fn = FIGURES[figure_id]
    return header, (fn(rows) if rows else [])


# -- CSV io ------------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".10g")
    return str(v)


def write_csv(fh, header, rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in header])


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    write_csv(buf, header, rows)
    return buf.getvalue()


def _parse(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def read_csv(fh) -> list[dict]:
    rows = []
    for r in csv.DictReader(fh):
        d = {k: _parse(v) for k, v in r.items()}
        if "outage" in d:
            d["outage"] = bool(d["outage"])
        rows.append(d)
    return rows

