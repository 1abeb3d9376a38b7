"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 outage-dominated run (more
than half of the hierarchical-method trials in outage).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import experiments as ex
from .config import ConfigError, Scenario, dump_scenario, load_scenario
from .energy import ComplexityModel, complexity_report, report_json, report_text
from .gs import OpCounter, OutageError, build_hierarchy

EXIT_OK, EXIT_CONFIG, EXIT_OUTAGE = 0, 2, 3

log = logging.getLogger("blockhcb")


def _scenario(args) -> Scenario:
    sc = load_scenario(args.config) if args.config else Scenario()
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.trials is not None:
        kw["trials"] = args.trials
    return sc.replace(**kw).check() if kw else sc.check()


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _write(args, name, header, rows):
    path = _out(args, name)
    with open(path, "w", newline="") as fh:
        ex.write_csv(fh, header, rows)
    log.info("wrote %s (%d rows)", path, len(rows))
    return path


def _write_json(args, name, obj):
    path = _out(args, name)
    with open(path, "w") as fh:
        fh.write(obj if isinstance(obj, str) else json.dumps(obj, indent=2, sort_keys=True))
        fh.write("\n")
    return path


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_detect_blockage(args, sc):
    ctx_layout = ex.array_layouts(sc)[0]
    rng = np.random.default_rng(np.random.SeedSequence([sc.seed, 0]).spawn(4)[0])
    scene = ex.scene_for(sc, ctx_layout, sc.blockage.density, rng)
    from .blockage import RisGeometry, detect_blockage
    ris = RisGeometry.ula(sc.system.N, sc.geometry.ris_center_m, sc.system.wavelength)
    rep = detect_blockage(ctx_layout, ris, scene, guard=sc.blockage.guard_rad,
                          elevation_gate=sc.blockage.elevation_gate)
    _write_json(args, "blockage.json", {
        "scene": scene.to_dicts(),
        "blocked_azimuth_rad": rep.blocked.to_pairs(),
        "available_azimuth_rad": rep.available.to_pairs(),
        "blocked_u": rep.blocked_u.to_pairs(),
        "available_u": rep.available_u.to_pairs(),
        "blocked_fraction_u": rep.blocked_fraction_u,
        "blocked_links": int(rep.link_blocked.sum()),
        "predicate_evaluations": rep.predicate_evaluations,
        "outage": rep.outage,
    })
    return EXIT_OUTAGE if rep.outage else EXIT_OK


def cmd_synth_codebook(args, sc):
    ctx_layout = ex.array_layouts(sc)[0]
    rng = np.random.default_rng(np.random.SeedSequence([sc.seed, 0]).spawn(4)[0])
    scene = ex.scene_for(sc, ctx_layout, sc.blockage.density, rng)
    from .blockage import detect_blockage
    rep = detect_blockage(ctx_layout, None, scene, guard=sc.blockage.guard_rad)
    counter = OpCounter()
    try:
        book = build_hierarchy(rep.available_u, sc.system.M, sc.gs, seed=sc.seed, counter=counter)
    except OutageError as exc:
        log.error("outage: %s", exc)
        return EXIT_OUTAGE
    _write_json(args, "codebook.json", book.to_json())
    cm = ComplexityModel(array=sc.system.M, ris=sc.system.N, users=sc.system.K,
                         pilot_length=sc.training.pilot_length, obstacles=max(1, scene.count),
                         i_max=sc.gs.max_iter)
    rep_c = complexity_report(cm, {"gs_multiplies": counter.multiplies})
    _write_json(args, "complexity.json", report_json(rep_c))
    print(report_text(rep_c))
    return EXIT_OK


def cmd_stage1(args, sc):
    ctx = ex.prepare_trial(sc, 0)
    from .stage1 import build_q, jstat
    q = build_q(ctx.csi)
    conj_phi = np.conj(ctx.phi)
    _write_json(args, "stage1.json", {
        "phases_rad": np.angle(ctx.phi).tolist(),
        "j_stat": jstat(conj_phi, q),
        "j_stat_random_mean": float(np.real(np.trace(q))),
        "gain_bs_ris": ctx.csi.gain_bs_ris,
        "gain_ris_ue": list(ctx.csi.gain_ris_ue),
        "blockage_prob": {f"{lo:.4f},{hi:.4f}": p for (lo, hi), p in ctx.csi.blockage_prob.items()},
        "snapshots": ctx.csi.snapshots_used,
    })
    return EXIT_OK


def _finish_rows(args, sc, rows, name):
    _write(args, f"{name}.csv", ex.ROW_FIELDS, rows)
    _write(args, f"{name}_summary.csv", ex.SUMMARY_FIELDS, ex.summarize(rows, sc.system.M))
    frac = ex.outage_fraction(rows)
    if frac > 0.5:
        log.warning("outage-dominated run: %.0f%% of hierarchical trials in outage", 100 * frac)
        return EXIT_OUTAGE
    return EXIT_OK


def cmd_train(args, sc):
    rows = ex.run_scenario(sc, parallel=args.parallel)
    return _finish_rows(args, sc, rows, "trials")


def cmd_sweep(args, sc):
    try:
        spec = ex.SweepSpec(args.axis, tuple(_floats(args.values)),
                            tuple(args.methods.split(",")) if args.methods else ex.METHODS)
    except ValueError as exc:
        raise ConfigError("sweep", str(exc)) from exc
    rows = ex.sweep(sc, spec, parallel=args.parallel)
    return _finish_rows(args, sc, rows, f"sweep_{spec.axis}")


def cmd_convergence(args, sc):
    dens = _floats(args.densities)
    if any(not 0 <= d < 1 for d in dens):
        raise ConfigError("densities", "must lie in [0, 1)")
    traces, its = ex.convergence_experiment(sc, dens, args.sectors_per_density, args.iters)
    _write(args, "convergence_traces.csv", ex.TRACE_FIELDS, traces)
    _write(args, "convergence_iterations.csv", ex.ITER_FIELDS, its)
    return EXIT_OK


def cmd_figure_data(args, sc):
    with open(args.input, newline="") as fh:
        rows = ex.read_csv(fh)
    try:
        header, out = ex.emit_figure_data(rows, args.figure)
    except ValueError as exc:
        raise ConfigError("figure", str(exc)) from exc
    _write(args, f"{args.figure}.csv", header, out)
    return EXIT_OK


def cmd_show_config(args, sc):
    print(dump_scenario(sc))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="scenario JSON (defaults if omitted)")
    common.add_argument("--seed", type=int, help="override scenario seed")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory")
    common.add_argument("--trials", type=int, help="override trial count")
    common.add_argument("--parallel", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="blockhcb", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth-codebook", parents=[common], help="build the pruned hierarchy")
    sub.add_parser("detect-blockage", parents=[common], help="blocked/available angle sets")
    sub.add_parser("stage1", parents=[common], help="statistical CSI and RIS phases")
    sub.add_parser("train", parents=[common], help="run all methods at the operating point")
    sw = sub.add_parser("sweep", parents=[common], help="long-format sweep over one axis")
    sw.add_argument("--axis", required=True, choices=ex.AXES)
    sw.add_argument("--values", required=True, help="comma-separated, sorted")
    sw.add_argument("--methods", help="comma-separated subset of " + ",".join(ex.METHODS))
    cv = sub.add_parser("convergence", parents=[common], help="GS residual traces")
    cv.add_argument("--densities", default="0,0.1,0.3,0.5")
    cv.add_argument("--sectors-per-density", type=int, default=60)
    cv.add_argument("--iters", type=int, default=100)
    fd = sub.add_parser("figure-data", parents=[common], help="plot-ready table from a CSV")
    fd.add_argument("--input", required=True, metavar="CSV")
    fd.add_argument("--figure", required=True, help=", ".join(sorted(ex.FIGURES)))
    sub.add_parser("show-config", parents=[common], help="print the effective scenario")
    return p


COMMANDS = {
    "synth-codebook": cmd_synth_codebook,
    "detect-blockage": cmd_detect_blockage,
    "stage1": cmd_stage1,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "convergence": cmd_convergence,
    "figure-data": cmd_figure_data,
    "show-config": cmd_show_config,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        sc = _scenario(args)
        if args.parallel < 1:
            raise ConfigError("--parallel", "must be >= 1")
        return COMMANDS[args.command](args, sc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

