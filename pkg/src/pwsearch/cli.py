"""Command-line front end.

Subcommands: ``run`` (one detector, one scene, full trace), ``compare``
(detector grid over shared scenes with paired seeds), ``sweep`` (operating
points by sweeping the acceptance threshold), ``curves`` (per-iteration
series from a stored trace), ``validate-config``.  Exit codes: 0 on success,
2 for configuration problems, 3 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, LoadedConfig, load_config
from .detectors import RunTrace, TraceRecord, detections_from_trace
from .harness import (
    Experiment,
    cost_estimate,
    derive_seed,
    evaluate,
    extract_curves,
    run_detector,
    run_experiment,
    summarize_rates,
    summarize_ratios,
    build_scorer,
    write_csv,
    write_curves_csv,
    write_results_jsonl,
    write_trace_jsonl,
)
from .space import Window

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pwsearch", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, help_text in (
        ("run", "run one detector on one scene and write its trace"),
        ("compare", "run the detector grid over shared scenes"),
        ("sweep", "sweep the acceptance threshold for operating points"),
        ("curves", "extract per-iteration curves from a stored trace"),
        ("validate-config", "parse and validate a config, then exit"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=(name != "curves"), help="path to a JSON config file")
        cmd.add_argument("--seed", type=int, default=None, help="override the experiment seed")
        cmd.add_argument("--out", default="out", help="output directory")
        cmd.add_argument("--jobs", type=int, default=1, help="worker processes for scene batches")
        cmd.add_argument("--quiet", action="store_true", help="suppress progress output")
        if name == "run":
            cmd.add_argument("--detector", default=None, help="detector name (default: first)")
            cmd.add_argument("--scene", type=int, default=0, help="scene index (default 0)")
        if name == "curves":
            cmd.add_argument("--trace", required=True, help="trace .jsonl produced by `run`")
    return parser


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _load(args) -> LoadedConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pick_detector(cfg: LoadedConfig, name: str | None):
    if name is None:
        return cfg.detectors[0]
    for det in cfg.detectors:
        if det.name == name:
            return det
    raise ConfigError("--detector", f"no detector named {name!r} in the config")


def cmd_run(args) -> int:
    cfg = _load(args)
    detector = _pick_detector(cfg, args.detector)
    scenes = cfg.load_scenes(Path(args.config).parent)
    if not 0 <= args.scene < len(scenes):
        raise ConfigError("--scene", f"scene index {args.scene} outside 0..{len(scenes) - 1}")
    scene = scenes[args.scene]
    scorer = build_scorer(scene, cfg.scorer_kind, cfg.cascade_stages)
    space = cfg.space.at_stride(cfg.sw_stride) if detector.algorithm == "sw" else cfg.space
    seed = derive_seed(cfg.seed, args.scene)
    trace = run_detector(space, scorer, detector, seed)
    detections = detections_from_trace(space, trace, cfg.nms_iou)
    metrics = evaluate(detections, [b for b, _ in scene.objects], cfg.match_iou)

    out = _outdir(args)
    write_trace_jsonl(out / "trace.jsonl", trace)
    write_curves_csv(out / "curves.csv", extract_curves(trace))
    summary = {
        "detector": detector.name,
        "algorithm": detector.algorithm,
        "scene": args.scene,
        "seed": seed,
        "windows_used": len(trace.records),
        "accepted": len(trace.accepted),
        "detections": len(detections.boxes),
        "detection_rate": metrics.detection_rate,
        "fppi": metrics.fppi,
        "cost": cost_estimate(trace, cfg.cost_model),
        "complete": trace.complete,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _say(args, f"run: {detector.name} scored {len(trace.records)} windows, "
               f"rate={metrics.detection_rate:.3f} -> {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    scenes = cfg.load_scenes(Path(args.config).parent)
    experiment = Experiment(
        space=cfg.space,
        sw_stride=cfg.sw_stride,
        detectors=cfg.detectors,
        scenes=tuple(scenes),
        budgets=cfg.budgets,
        seed=cfg.seed,
        match_iou=cfg.match_iou,
        nms_iou=cfg.nms_iou,
        scorer_kind=cfg.scorer_kind,
        cascade_stages=cfg.cascade_stages,
        cost_model=cfg.cost_model,
    )
    results = run_experiment(experiment, jobs=args.jobs)
    names = [d.name for d in cfg.detectors]
    budgets = list(cfg.budgets)
    out = _outdir(args)
    write_results_jsonl(out / "results.jsonl", results)
    write_csv(out / "rates.csv", summarize_rates(results, names, budgets))
    write_csv(out / "ratios.csv", summarize_ratios(results, names, budgets))
    _say(args, f"compare: {len(results)} runs over {len(scenes)} scenes -> {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if not cfg.sweep_t_h:
        raise ConfigError("experiment.sweep_t_h", "sweep requires a sweep_t_h list")
    scenes = cfg.load_scenes(Path(args.config).parent)
    detector = cfg.detectors[0]
    rows = []
    for t_h in cfg.sweep_t_h:
        if t_h <= detector.t_l:
            raise ConfigError("experiment.sweep_t_h", f"sweep point {t_h} not above t_l")
        swept = replace(detector, t_h=t_h)
        rates, fppis = [], []
        for index, scene in enumerate(scenes):
            scorer = build_scorer(scene, cfg.scorer_kind, cfg.cascade_stages)
            space = cfg.space.at_stride(cfg.sw_stride) if swept.algorithm == "sw" else cfg.space
            trace = run_detector(space, scorer, swept, derive_seed(cfg.seed, index))
            detections = detections_from_trace(space, trace, cfg.nms_iou)
            metrics = evaluate(detections, [b for b, _ in scene.objects], cfg.match_iou)
            rates.append(metrics.detection_rate)
            fppis.append(metrics.fppi)
        rows.append(
            {
                "t_h": t_h,
                "detection_rate": sum(rates) / len(rates),
                "fppi": sum(fppis) / len(fppis),
            }
        )
    out = _outdir(args)
    write_csv(out / "operating_points.csv", rows)
    _say(args, f"sweep: {len(rows)} operating points for {detector.name} -> {out}")
    return EXIT_OK


def cmd_curves(args) -> int:
    trace_path = Path(args.trace)
    if not trace_path.exists():
        raise ConfigError("--trace", f"no such trace file: {trace_path}")
    lines = trace_path.read_text().splitlines()
    if len(lines) < 2:
        raise ConfigError("--trace", "trace file has no records")
    header = json.loads(lines[0])
    footer = json.loads(lines[-1])
    trace = RunTrace(
        detector=header["detector"],
        algorithm=header["algorithm"],
        seed=header["seed"],
        window_count=header["window_count"],
        complete=footer.get("complete", False),
        rebuilds=footer.get("rebuilds", []),
    )
    for line in lines[1:-1]:
        rec = json.loads(line)
        trace.records.append(
            TraceRecord(
                rec["i"],
                Window(rec["x"], rec["y"], rec["s"]),
                rec["response"],
                rec["kind"],
                rec["source"],
                rec["n_rejected"],
                rec["n_accepted"],
                rec["n_ambiguous"],
                rec["p_uniform"],
                rec["stages_evaluated"],
            )
        )
    out = _outdir(args)
    write_curves_csv(out / "curves.csv", extract_curves(trace))
    _say(args, f"curves: {len(trace.records)} iterations -> {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    _say(args, f"ok: {len(cfg.detectors)} detectors, {cfg.space.window_count} windows, "
               f"budgets {list(cfg.budgets)}")
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "curves": cmd_curves,
    "validate-config": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.subcommand](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
