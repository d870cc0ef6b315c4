"""Experiment harness: scenes, metrics, cost accounting, curves, orchestration.

Runs are deterministic functions of (config, master seed).  Paired
comparisons give every detector the same scenes and the same per-trial seed,
so differences come from the algorithms alone.  Serialized outputs carry no
wall-clock or environment state: rerunning a seed reproduces them byte for
byte.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .detectors import (
    DetectorConfig,
    RunTrace,
    TraceRecord,
    detections_from_trace,
    run_ipw,
    run_mpw,
    run_sipw,
    run_sw,
)
from .scoring import CascadeScorer, Scorer, SyntheticScene, SyntheticScorer
from .space import Box, SearchSpace, overlap


def hit_probability(total: int, target_cells: int, draws: int) -> float:
    """Chance that uniform sampling with replacement hits a target set at all.

    ``1 - (1 - target_cells / total) ** draws`` for ``draws`` independent
    draws over ``total`` cells of which ``target_cells`` are targets.
    """
    if total < 1:
        raise ValueError("total must be >= 1")
    if not 0 < target_cells <= total:
        raise ValueError("target_cells must be in (0, total]")
    if draws < 1:
        raise ValueError("draws must be >= 1")
    return 1.0 - (1.0 - target_cells / total) ** draws


@dataclass(frozen=True)
class CostModel:
    """Abstract per-run cost: setup + per-window feature + per-window classification.

    For staged scorers the classification term scales with the stages a
    window actually consumed; flat scorers pay one unit.
    """

    t_w: float = 0.0
    t_f: float = 1.0
    t_c: float = 1.0


def cost_estimate(trace: RunTrace, model: CostModel = CostModel()) -> float:
    total = model.t_w
    for rec in trace.records:
        stages = rec.stages_evaluated if rec.stages_evaluated > 0 else 1
        total += model.t_f + model.t_c * stages
    return total


@dataclass(frozen=True)
class Metrics:
    """Evaluation summary for one run on one scene."""

    detection_rate: float
    fppi: float
    matched: int
    objects: int
    detections: int
    windows_used: int = 0
    cost: float = 0.0


def evaluate(
    detections,
    ground_truth: list[Box],
    match_threshold: float = 0.5,
) -> Metrics:
    """Greedy one-to-one matching by descending score.

    ``detections`` is a sequence of (box, score) pairs or a
    :class:`~pwsearch.detectors.DetectionSet`.  Each detection matches the
    unmatched object it overlaps most, provided the overlap reaches
    ``match_threshold``; leftovers are false positives.  Ties in score break
    on geometry, so input order never matters.
    """
    if hasattr(detections, "boxes"):
        detections = list(detections.boxes)
    ordered = sorted(detections, key=lambda d: (-d[1], d[0].cx, d[0].cy, d[0].w, d[0].h))
    unmatched = list(range(len(ground_truth)))
    matched = 0
    for box, _ in ordered:
        best_iou, best_j = 0.0, -1
        for j in unmatched:
            iou = overlap(box, ground_truth[j])
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0 and best_iou >= match_threshold:
            unmatched.remove(best_j)
            matched += 1
    false_positives = len(ordered) - matched
    rate = matched / len(ground_truth) if ground_truth else 1.0
    return Metrics(rate, float(false_positives), matched, len(ground_truth), len(ordered))


@dataclass(frozen=True)
class SceneParams:
    """Knobs for the seeded scene generator.

    Targets are placed fully inside the image at template-aspect sizes drawn
    from the pyramid's own scale steps, and no two placements may overlap
    above ``max_overlap``.  Peak ranges should respect the paired detector's
    thresholds (objects at or above t_h, distractors inside [t_l, t_h)).
    """

    space: SearchSpace
    object_count: int = 1
    distractor_count: int = 2
    object_peak: tuple[float, float] = (1.5, 2.5)
    distractor_peak: tuple[float, float] = (-1.2, -0.4)
    floor: float = -5.0
    sharpness: float = 3.0
    scale_indices: tuple[int, ...] = (0,)
    max_overlap: float = 0.3
    max_retries: int = 200


class SceneGenerationError(RuntimeError):
    pass


def _place_target(
    params: SceneParams,
    rng: np.random.Generator,
    existing: list[Box],
    peak_range: tuple[float, float],
) -> tuple[Box, float]:
    space = params.space
    for _ in range(params.max_retries):
        s = int(rng.choice(np.asarray(params.scale_indices)))
        w = space.template_w * space.zoom(s)
        h = space.template_h * space.zoom(s)
        if w > space.image_w or h > space.image_h:
            continue
        cx = float(rng.uniform(w / 2.0, space.image_w - w / 2.0))
        cy = float(rng.uniform(h / 2.0, space.image_h - h / 2.0))
        box = Box(cx, cy, w, h)
        if all(overlap(box, other) <= params.max_overlap for other in existing):
            peak = float(rng.uniform(*peak_range))
            return box, peak
    raise SceneGenerationError(
        f"could not place a target within max_overlap={params.max_overlap} "
        f"after {params.max_retries} retries"
    )


def generate_scenes(params: SceneParams, master_seed: int, count: int) -> list[SyntheticScene]:
    """``count`` scenes, each from its own child stream of ``master_seed``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    scenes = []
    for index in range(count):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, index])))
        placed: list[Box] = []
        objects = []
        for _ in range(params.object_count):
            box, peak = _place_target(params, rng, placed, params.object_peak)
            placed.append(box)
            objects.append((box, peak))
        distractors = []
        for _ in range(params.distractor_count):
            box, peak = _place_target(params, rng, placed, params.distractor_peak)
            placed.append(box)
            distractors.append((box, peak))
        scenes.append(
            SyntheticScene(
                image_w=params.space.image_w,
                image_h=params.space.image_h,
                objects=tuple(objects),
                distractors=tuple(distractors),
                floor=params.floor,
                sharpness=params.sharpness,
            )
        )
    return scenes


def extract_curves(trace: RunTrace) -> dict[str, list]:
    """Per-iteration series from a trace.

    Keys: ``i``, ``n_rejected``, ``n_accepted``, ``n_free``, ``n_ambiguous``,
    ``p_uniform``, ``p_gaussian``, ``uniform_draws``, ``gaussian_draws``
    (the last two cumulative).
    """
    curves: dict[str, list] = {
        "i": [],
        "n_rejected": [],
        "n_accepted": [],
        "n_free": [],
        "n_ambiguous": [],
        "p_uniform": [],
        "p_gaussian": [],
        "uniform_draws": [],
        "gaussian_draws": [],
    }
    uniform = gaussian = 0
    for rec in trace.records:
        if rec.source == "UNIFORM":
            uniform += 1
        elif rec.source == "GAUSSIAN":
            gaussian += 1
        curves["i"].append(rec.i)
        curves["n_rejected"].append(rec.n_rejected)
        curves["n_accepted"].append(rec.n_accepted)
        curves["n_free"].append(trace.window_count - rec.n_rejected - rec.n_accepted)
        curves["n_ambiguous"].append(rec.n_ambiguous)
        curves["p_uniform"].append(rec.p_uniform)
        curves["p_gaussian"].append(None if rec.p_uniform is None else 1.0 - rec.p_uniform)
        curves["uniform_draws"].append(uniform)
        curves["gaussian_draws"].append(gaussian)
    return curves


# --- scorers and single runs -------------------------------------------------

_RUNNERS = {"mpw": run_mpw, "ipw": run_ipw, "sipw": run_sipw}


def build_scorer(scene: SyntheticScene, kind: str = "synthetic", cascade_stages: int = 10) -> Scorer:
    if kind == "synthetic":
        return SyntheticScorer(scene)
    if kind == "cascade":
        return CascadeScorer(scene, stages=cascade_stages)
    raise ValueError(f"unknown scorer kind {kind!r}")


def run_detector(
    space: SearchSpace,
    scorer: Scorer,
    config: DetectorConfig,
    seed: int | None = None,
) -> RunTrace:
    if config.algorithm == "sw":
        return run_sw(space, scorer, config)
    return _RUNNERS[config.algorithm](space, scorer, config, seed)


@dataclass(frozen=True)
class Experiment:
    """A detector grid evaluated over a shared scene set."""

    space: SearchSpace
    sw_stride: int
    detectors: tuple[DetectorConfig, ...]
    scenes: tuple[SyntheticScene, ...]
    budgets: tuple[int, ...]
    seed: int
    match_iou: float = 0.5
    nms_iou: float = 0.5
    scorer_kind: str = "synthetic"
    cascade_stages: int = 10
    cost_model: CostModel = CostModel()


@dataclass(frozen=True)
class RunResult:
    """One (scene, detector, budget) cell of an experiment."""

    scene_index: int
    detector: str
    algorithm: str
    budget: int
    seed: int
    metrics: Metrics
    complete: bool

    def to_record(self) -> dict:
        return {
            "scene": self.scene_index,
            "detector": self.detector,
            "algorithm": self.algorithm,
            "budget": self.budget,
            "seed": self.seed,
            "detection_rate": self.metrics.detection_rate,
            "fppi": self.metrics.fppi,
            "matched": self.metrics.matched,
            "objects": self.metrics.objects,
            "detections": self.metrics.detections,
            "windows_used": self.metrics.windows_used,
            "cost": self.metrics.cost,
            "complete": self.complete,
        }


def derive_seed(master_seed: int, *indices: int) -> int:
    """Stable per-trial seed from the master seed and grid coordinates."""
    seq = np.random.SeedSequence([master_seed, *indices])
    return int(seq.generate_state(1, np.uint64)[0])


def _run_cell(args) -> RunResult:
    experiment, scene_index, detector_index, budget = args
    scene = experiment.scenes[scene_index]
    detector = experiment.detectors[detector_index]
    scorer = build_scorer(scene, experiment.scorer_kind, experiment.cascade_stages)
    budget_index = experiment.budgets.index(budget)
    seed = derive_seed(experiment.seed, scene_index, budget_index)

    if detector.algorithm == "sw":
        space = experiment.space.at_stride(experiment.sw_stride)
        config = detector
    else:
        space = experiment.space
        config = replace(detector, budget=budget)
    trace = run_detector(space, scorer, config, seed)
    detections = detections_from_trace(space, trace, experiment.nms_iou)
    metrics = evaluate(detections, [box for box, _ in scene.objects], experiment.match_iou)
    metrics = replace(
        metrics,
        windows_used=len(trace.records),
        cost=cost_estimate(trace, experiment.cost_model),
    )
    return RunResult(
        scene_index, detector.name, detector.algorithm, budget, seed, metrics, trace.complete
    )


def run_experiment(experiment: Experiment, jobs: int = 1) -> list[RunResult]:
    """Every (scene, detector, budget) cell, in deterministic order.

    ``jobs > 1`` fans scenes out to processes; results are collected in task
    order so parallelism never changes the output.
    """
    tasks = [
        (experiment, scene_index, detector_index, budget)
        for scene_index in range(len(experiment.scenes))
        for detector_index in range(len(experiment.detectors))
        for budget in experiment.budgets
    ]
    if jobs <= 1:
        return [_run_cell(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_cell, tasks, chunksize=max(1, len(tasks) // (jobs * 4) or 1)))


def summarize_rates(results: list[RunResult], detectors: list[str], budgets: list[int]) -> list[dict]:
    """Mean detection rate per (budget, detector), one row per budget."""
    rows = []
    for budget in budgets:
        row: dict = {"budget": budget}
        for name in detectors:
            rates = [
                r.metrics.detection_rate for r in results if r.budget == budget and r.detector == name
            ]
            row[name] = sum(rates) / len(rates) if rates else math.nan
        rows.append(row)
    return rows


def summarize_ratios(results: list[RunResult], detectors: list[str], budgets: list[int]) -> list[dict]:
    """Mean windows/cost per detector plus ratios against the first detector."""
    rows = []
    base = detectors[0]
    for budget in budgets:
        row: dict = {"budget": budget}
        means: dict[str, tuple[float, float]] = {}
        for name in detectors:
            cells = [r for r in results if r.budget == budget and r.detector == name]
            if cells:
                means[name] = (
                    sum(c.metrics.windows_used for c in cells) / len(cells),
                    sum(c.metrics.cost for c in cells) / len(cells),
                )
        for name in detectors:
            if name in means:
                row[f"windows:{name}"] = means[name][0]
                row[f"cost:{name}"] = means[name][1]
        for name in detectors:
            if name != base and name in means and base in means and means[base][0] > 0:
                row[f"windows_ratio:{name}/{base}"] = means[name][0] / means[base][0]
                row[f"cost_ratio:{name}/{base}"] = means[name][1] / means[base][1]
        rows.append(row)
    return rows


# --- serialization -----------------------------------------------------------


def trace_record_to_dict(rec: TraceRecord) -> dict:
    return {
        "i": rec.i,
        "x": rec.window.x,
        "y": rec.window.y,
        "s": rec.window.s,
        "response": rec.response,
        "kind": rec.kind,
        "source": rec.source,
        "n_rejected": rec.n_rejected,
        "n_accepted": rec.n_accepted,
        "n_ambiguous": rec.n_ambiguous,
        "p_uniform": rec.p_uniform,
        "stages_evaluated": rec.stages_evaluated,
    }


def write_trace_jsonl(path: str | Path, trace: RunTrace) -> None:
    """Header line, then one line per draw, then a footer with the outcome."""
    lines = [
        json.dumps(
            {
                "detector": trace.detector,
                "algorithm": trace.algorithm,
                "seed": trace.seed,
                "window_count": trace.window_count,
            }
        )
    ]
    lines.extend(json.dumps(trace_record_to_dict(rec)) for rec in trace.records)
    lines.append(
        json.dumps(
            {
                "complete": trace.complete,
                "accepted": [
                    {"x": w.x, "y": w.y, "s": w.s, "response": r} for w, r in trace.accepted
                ],
                "rebuilds": trace.rebuilds,
            }
        )
    )
    Path(path).write_text("\n".join(lines) + "\n")


def write_results_jsonl(path: str | Path, results: list[RunResult]) -> None:
    lines = [json.dumps(r.to_record()) for r in results]
    Path(path).write_text("\n".join(lines) + "\n")


def write_csv(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    fieldnames = list(rows[0].keys())
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def write_curves_csv(path: str | Path, curves: dict[str, list]) -> None:
    keys = list(curves.keys())
    rows = [dict(zip(keys, values)) for values in zip(*(curves[k] for k in keys))]
    write_csv(path, rows)
