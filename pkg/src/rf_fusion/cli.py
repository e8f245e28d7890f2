"""Command-line entry point: ``rf-fusion {simulate,track,evaluate,sweep}``.

Exit codes: 0 ok, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import sim
from .config import Config, ConfigError, deployment_dict
from .metrics import Metrics, aou_reduction, evaluate
from .pipeline import DataError, Localizer, RunResult
from .rti import CalibrationError
from .traces import (
    TraceError,
    dumps,
    read_jsonl,
    read_traces,
    read_truth,
    write_csv,
    write_jsonl,
    write_trace,
    write_truth,
)

log = logging.getLogger("rf_fusion")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
PRESETS = {"study-room": sim.study_room, "motel-room": sim.motel_room}
# the four RSS-side method combinations compared in sweeps
SWEEP_METHODS = ("ab:none", "ab:hmm", "vb:none", "vb:vb")


# -- helpers --------------------------------------------------------------------

def load_config(path, args) -> Config:
    cfg = Config.load(path) if path else Config()
    changes = {k: getattr(args, k) for k in ("rti", "uwb", "fusion", "seed") if getattr(args, k, None) is not None}
    try:
        return cfg.replace(**changes) if changes else cfg
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(spec: str, seed: int | None) -> sim.Scenario:
    if spec in PRESETS:
        scn = PRESETS[spec](seed=seed or 0)
    else:
        try:
            scn = sim.Scenario.from_dict(json.loads(Path(spec).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {spec}: {exc}") from exc
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario {spec}: {exc}") from exc
    return scn.with_seed(seed) if seed is not None else scn


def out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def trace_paths(args) -> list[Path]:
    paths = [Path(p) for p in args.traces]
    out = []
    for p in paths:
        out.extend(sorted(p.glob("*.jsonl")) if p.is_dir() else [p])
    trace = [p for p in out if p.name not in ("estimates.jsonl", "tracks.jsonl")]
    if not trace:
        raise DataError("no trace files given")
    return trace


def parse_method(spec: str, base: Config) -> Config:
    parts = spec.split(":")
    if len(parts) not in (2, 3):
        raise ConfigError(f"method must look like rti:uwb[:fusion], got {spec!r}")
    kw = {"rti": parts[0], "uwb": parts[1]}
    if len(parts) == 3:
        kw["fusion"] = parts[2]
    return base.replace(**kw)


def tracked_from_records(records: list[dict]) -> tuple[np.ndarray, np.ndarray]:
    rows = [(r["t"], r["track_x"], r["track_y"]) for r in records
            if r.get("valid") and r.get("track_x") is not None]
    if not rows:
        return np.zeros(0), np.zeros((0, 2))
    a = np.array(rows, dtype=float)
    return a[:, 0], a[:, 1:]


def metrics_table(rows: list[tuple[str, Metrics]]) -> str:
    head = f"{'method':<28} {'L2':>6} {'X':>6} {'Y':>6} {'AoU':>7} {'frames':>7}"
    lines = [head, "-" * len(head)]
    for name, m in rows:
        lines.append(f"{name:<28} {m.rms_l2:6.2f} {m.rms_x:6.2f} {m.rms_y:6.2f} {m.aou:7.3f} {m.n_frames:7d}")
    if rows and rows[0][1].random_rms_l2 is not None:
        m = rows[0][1]
        lines.append(f"{'random':<28} {m.random_rms_l2:6.2f} {m.random_rms_x:6.2f} {m.random_rms_y:6.2f} "
                     f"{m.random_aou:7.3f} {m.n_frames:7d}")
    return "\n".join(lines)


# -- subcommands ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    scn = load_scenario(args.scenario, args.seed)
    if args.calibration_s is not None:
        try:
            scn = sim.Scenario.from_dict({**scn.to_dict(), "calibration_s": args.calibration_s})
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if args.empty:
        scn = scn.without_target()
    cfg = load_config(args.config, args)
    cfg = cfg.replace(deployment=deployment_dict(scn.deployment), calibration_s=scn.calibration_s,
                      los_bin=scn.cir.los_bin, seed=scn.seed)
    out = out_dir(args.out)
    log.info("simulating %s (seed %d) into %s", scn.name, scn.seed, out)
    n_rss = write_trace(out / "rss.jsonl", sim.generate_rss_stream(scn))
    n_cir = write_trace(out / "cir.jsonl", sim.generate_cir_stream(scn))
    gt = sim.ground_truth(scn, cfg.voxel_width)
    write_truth(out / "truth.csv", gt.t, gt.xy, gt.k_star)
    cfg.save(out / "resolved-config.json")
    (out / "scenario.json").write_text(json.dumps(scn.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {n_rss} RSS samples, {n_cir} CIR frames, {len(gt.t)} truth rows to {out}")
    return EXIT_OK


def run_tracking(cfg: Config, rss, cir, nodes=None, localizer: Localizer | None = None) -> RunResult:
    loc = localizer or Localizer(cfg, nodes=nodes)
    if cfg.uwb != "none" and not cir:
        raise DataError(f"{cfg.uwb}-uwb selected but the traces hold no CIR frames")
    if not rss:
        raise DataError("traces hold no RSS samples")
    return loc.run(rss, cir, cfg)


def cmd_track(args) -> int:
    cfg = load_config(args.config, args)
    rss, cir = read_traces(trace_paths(args))
    try:
        loc = Localizer(cfg)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    result = run_tracking(cfg, rss, cir, localizer=loc)
    out = out_dir(args.out)
    write_jsonl(out / "estimates.jsonl", result.records())
    write_jsonl(out / "tracks.jsonl", result.events)
    if args.csv:
        write_csv(out / "estimates.csv", result.records())
    n_valid = sum(f.estimate.valid for f in result.frames)
    n_conf = sum(1 for e in result.events if e["event"] == "confirmed")
    print(f"{result.method}: {len(result.frames)} frames, {n_valid} valid estimates, "
          f"{n_conf} confirmed tracks -> {out}")
    return EXIT_OK


def evaluate_records(records, truth, bounds, seed: int) -> Metrics:
    t, xy = tracked_from_records(records)
    if len(t) == 0:
        raise DataError("no tracked estimates to evaluate")
    tt, txy, _ = truth
    if t.max() < tt.min() or t.min() > tt.max():
        raise DataError("estimate and truth timestamp ranges are disjoint")
    try:
        return evaluate(t, xy, tt, txy, bounds, seed)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, args)
    bounds = cfg.build_deployment().room_bounds
    truth = read_truth(args.truth)
    records = read_jsonl(args.estimates)
    name = records[0]["method"] if records else "estimates"
    m = evaluate_records(records, truth, bounds, cfg.seed)
    report = {"method": name, "metrics": m.to_dict()}
    rows = [(name, m)]
    if args.baseline:
        base_records = read_jsonl(args.baseline)
        b = evaluate_records(base_records, truth, bounds, cfg.seed)
        bname = base_records[0]["method"] if base_records else "baseline"
        report["baseline"] = {"method": bname, "metrics": b.to_dict()}
        report["aou_reduction_pct"] = aou_reduction(b, m)
        rows.append((bname, b))
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text if args.json else metrics_table(rows))
    if "aou_reduction_pct" in report and not args.json:
        print(f"AoU reduction vs {report['baseline']['method']}: {report['aou_reduction_pct']:.1f}%")
    return EXIT_OK


def subsets(sides: np.ndarray, S: int, n_sims: int, rng: np.random.Generator) -> list[list[int]]:
    """``n_sims`` node subsets with ``S`` sensors on each side; every distinct
    subset exactly once when there are no more than ``n_sims`` of them."""
    groups = [np.flatnonzero(sides == s) for s in np.unique(sides)]
    if S < 1:
        raise ConfigError("S must be at least 1")
    if any(S > len(g) for g in groups):
        raise ConfigError(f"S={S} exceeds the sensors available per side ({[len(g) for g in groups]})")
    total = math.prod(math.comb(len(g), S) for g in groups)
    if total <= n_sims:
        combos = itertools.product(*(itertools.combinations(g.tolist(), S) for g in groups))
        return [sorted(int(i) for part in c for i in part) for c in combos]
    return [sorted(int(i) for g in groups for i in rng.choice(g, S, replace=False)) for _ in range(n_sims)]


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args)
    dep = cfg.build_deployment()
    rss, cir = read_traces(trace_paths(args))
    truth = read_truth(args.truth)
    methods = [parse_method(m, cfg) for m in (args.methods.split(",") if args.methods else SWEEP_METHODS)]
    try:
        sizes = [int(s) for s in args.sizes.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --sizes: {exc}") from exc
    rng = np.random.default_rng(cfg.seed)
    sides = np.asarray(dep.node_sides)
    report = {"sizes": {}, "methods": [m.method_name for m in methods]}
    for S in sizes:
        per = {m.method_name: [] for m in methods}
        sets = subsets(sides, S, args.n_sims, rng)
        for nodes in sets:
            loc = Localizer(cfg, dep, nodes)
            for m in methods:
                res = run_tracking(m, rss, cir, localizer=loc)
                try:
                    per[m.method_name].append(evaluate_records(res.records(), truth, dep.room_bounds, cfg.seed))
                except DataError:
                    log.warning("S=%d nodes=%s %s: no tracked estimates", S, nodes, m.method_name)
        entry = {"n_sims": len(sets)}
        for name, ms in per.items():
            if ms:
                entry[name] = {k: float(np.mean([getattr(x, k) for x in ms]))
                               for k in ("rms_l2", "rms_x", "rms_y", "aou", "random_rms_l2", "random_rms_x",
                                         "random_rms_y")}
                entry[name]["n_runs"] = len(ms)
        for m in methods:
            if m.uwb != "none":
                base = m.replace(uwb="none").method_name
                if base in entry and m.method_name in entry:
                    entry[m.method_name]["aou_reduction_pct"] = \
                        100.0 * (entry[base]["aou"] - entry[m.method_name]["aou"]) / entry[base]["aou"]
        report["sizes"][str(S)] = entry
    text = dumps(report)
    if args.out:
        Path(args.out).write_text(json.dumps(json.loads(text), indent=2) + "\n")
    for S, entry in report["sizes"].items():
        print(f"S={S} ({entry['n_sims']} subsets)")
        for name in report["methods"]:
            e = entry.get(name)
            if e is None:
                print(f"  {name:<28} no estimates")
                continue
            red = f"  AoU reduction {e['aou_reduction_pct']:.1f}%" if "aou_reduction_pct" in e else ""
            print(f"  {name:<28} L2 {e['rms_l2']:.2f}  X {e['rms_x']:.2f}  Y {e['rms_y']:.2f}  "
                  f"AoU {e['aou']:.3f}{red}")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rf-fusion", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--rti", choices=("ab", "vb"))
        sp.add_argument("--uwb", choices=("hmm", "vb", "none"))
        sp.add_argument("--fusion", choices=("product", "joint", "xfromy"))

    s = sub.add_parser("simulate", help="generate synthetic traces and ground truth")
    common(s)
    s.add_argument("--scenario", default="study-room", help="preset name or scenario JSON file")
    s.add_argument("--calibration-s", type=float, help="override the empty-room prefix length (s)")
    s.add_argument("--empty", action="store_true", help="drop the target (empty-room traces)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("track", help="localize and track from traces")
    common(t, config_required=True)
    t.add_argument("traces", nargs="+", help="trace files or directories of *.jsonl")
    t.add_argument("--out", required=True)
    t.add_argument("--csv", action="store_true", help="also write estimates.csv")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("evaluate", help="error metrics against ground truth")
    common(e, config_required=True)
    e.add_argument("--estimates", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--baseline", help="estimates of a run to compute the AoU reduction against")
    e.add_argument("--json", action="store_true", help="print JSON instead of a table")
    e.add_argument("--out", help="write the JSON report here")
    e.set_defaults(func=cmd_evaluate)

    w = sub.add_parser("sweep", help="metrics over random sensor subsets")
    common(w, config_required=True)
    w.add_argument("traces", nargs="+")
    w.add_argument("--truth", required=True)
    w.add_argument("--sizes", default="3,5,7,10", help="sensors per side, comma separated")
    w.add_argument("--n-sims", type=int, default=50)
    w.add_argument("--methods", help="comma list of rti:uwb[:fusion]; default: " + ",".join(SWEEP_METHODS))
    w.add_argument("--out", help="write the JSON report here")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RF_FUSION_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CalibrationError, DataError, TraceError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
