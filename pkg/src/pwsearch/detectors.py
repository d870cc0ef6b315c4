"""Window-generation strategies over one search space.

Four detectors share a trace format:

* ``run_sw`` scores every window of its (typically coarse-stride) space.
* ``run_mpw`` spends its budget in a fixed number of stages; each stage draws
  from Gaussians centered on the previous stage's windows, weighted by their
  normalized responses, with stage sizes decaying geometrically.
* ``run_ipw`` draws one window at a time from a blend of a dented uniform and
  a dented Gaussian mixture, and feeds every draw straight back into the
  region book: confident negatives reject a neighborhood, positives claim an
  acceptance region, ambiguous windows become mixture components.  Every
  scored cell is claimed, so the book grows by at least one cell per
  iteration and no cell is ever scored twice.
* ``run_sipw`` is the staged variant: the mixture is rebuilt only at rebuild
  points (ambiguity windows accumulate in a batch between them, and the batch
  size decays geometrically); until the first rebuild all draws are uniform.

Classification against (t_l, t_h) splits draws into rejected / ambiguous /
accepted trace kinds (RPW / ABPW / APW).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .proposal import (
    DentedGaussianMixture,
    DentedUniform,
    GaussianComponent,
    default_sigma,
    draw_gaussian_window,
    mixture_weights,
)
from .regions import (
    RadiusTable,
    RegionBook,
    RegionKind,
    ScalePropagation,
    mark_acceptance,
    mark_rejection,
)
from .scoring import Scorer, normalize_weights
from .space import Box, SearchSpace, Window, overlap

KIND_REJECTED = "RPW"
KIND_AMBIGUOUS = "ABPW"
KIND_ACCEPTED = "APW"

SOURCE_UNIFORM = "UNIFORM"
SOURCE_GAUSSIAN = "GAUSSIAN"
SOURCE_SCAN = "SCAN"


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds, budget, and marking rules for one detector run."""

    name: str
    algorithm: str  # sw | mpw | ipw | sipw
    t_l: float
    t_h: float
    budget: int = 1
    alpha: float = 0.2
    gamma: float = 0.7
    mpw_stage_count: int = 5
    n_c_star_init: int | None = None  # siPW first rebuild point; default budget // 2
    n_max: int = 1000
    mpw_blend: float = 1.0  # weight of the fresh stage mixture; 1.0 drops history
    radius_table: RadiusTable | None = None
    r_a_x_ratio: float = 0.0
    r_a_y_ratio: float = 0.0
    reject_propagation: ScalePropagation = ScalePropagation(0, 1.0)
    accept_propagation: ScalePropagation = ScalePropagation(0, 1.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.algorithm not in ("sw", "mpw", "ipw", "sipw"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.t_l >= self.t_h:
            raise ValueError("t_l must be below t_h")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.mpw_stage_count < 1:
            raise ValueError("mpw_stage_count must be >= 1")
        if not 0.0 < self.mpw_blend <= 1.0:
            raise ValueError("mpw_blend must be in (0, 1]")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.algorithm in ("ipw", "sipw") and self.radius_table is None:
            raise ValueError(f"{self.algorithm} requires a radius_table")
        if self.r_a_x_ratio < 0 or self.r_a_y_ratio < 0:
            raise ValueError("acceptance ratios must be nonnegative")

    def acceptance_radii(self, space: SearchSpace) -> tuple[int, int]:
        return (
            int(self.r_a_x_ratio * space.template_w),
            int(self.r_a_y_ratio * space.template_h),
        )


@dataclass(frozen=True)
class TraceRecord:
    """One scored window with the book state right after its marks."""

    i: int
    window: Window
    response: float
    kind: str
    source: str
    n_rejected: int
    n_accepted: int
    n_ambiguous: int
    p_uniform: float | None
    stages_evaluated: int


@dataclass
class RunTrace:
    """Everything one detector run produced, in draw order."""

    detector: str
    algorithm: str
    seed: int | None
    window_count: int
    records: list[TraceRecord] = field(default_factory=list)
    accepted: list[tuple[Window, float]] = field(default_factory=list)
    complete: bool = False  # free cells ran out before the budget did
    rebuilds: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class DetectionSet:
    """Final post-NMS detections as scored boxes."""

    boxes: tuple[tuple[Box, float], ...]


def nms(candidates: list[tuple[Box, float]], threshold: float = 0.5) -> list[tuple[Box, float]]:
    """Greedy overlap suppression, strongest first.

    Ties break on box geometry so the result never depends on input order.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    ordered = sorted(candidates, key=lambda c: (-c[1], c[0].cx, c[0].cy, c[0].w, c[0].h))
    kept: list[tuple[Box, float]] = []
    for box, score in ordered:
        if all(overlap(box, kb) < threshold for kb, _ in kept):
            kept.append((box, score))
    return kept


def mpw_schedule(n_first: int, gamma: float, stages: int) -> list[int]:
    """Geometrically decaying per-stage draw counts, truncated to integers."""
    if n_first < 1:
        raise ValueError("n_first must be >= 1")
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    if stages < 1:
        raise ValueError("stages must be >= 1")
    return [int(n_first * math.exp(-gamma * (i - 1))) for i in range(1, stages + 1)]


def schedule_for_budget(budget: int, gamma: float, stages: int) -> list[int]:
    """Stage sizes with the schedule's decay whose total is exactly ``budget``.

    Picks the largest first-stage size whose schedule fits, then adds the
    remainder to stage 1.  Degenerates gracefully when the budget is smaller
    than the stage count.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    denom = sum(math.exp(-gamma * i) for i in range(stages))
    n_first = max(1, int(budget / denom))
    sched = mpw_schedule(n_first, gamma, stages)
    while sum(sched) > budget and n_first > 1:
        n_first -= 1
        sched = mpw_schedule(n_first, gamma, stages)
    sched[0] += budget - sum(sched)
    return [n for n in sched if n > 0]


def _classify(response: float, config: DetectorConfig) -> str:
    if response < config.t_l:
        return KIND_REJECTED
    if response >= config.t_h:
        return KIND_ACCEPTED
    return KIND_AMBIGUOUS


def _rng(seed: int | None) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def run_sw(space: SearchSpace, scorer: Scorer, config: DetectorConfig) -> RunTrace:
    """Score every window of the space in enumeration order."""
    trace = RunTrace(config.name, "sw", None, space.window_count)
    n_ab = 0
    for i, w in enumerate(space.windows(), start=1):
        result = scorer.score(space, w)
        kind = _classify(result.response, config)
        if kind == KIND_ACCEPTED:
            trace.accepted.append((w, result.response))
        elif kind == KIND_AMBIGUOUS:
            n_ab += 1
        trace.records.append(
            TraceRecord(i, w, result.response, kind, SOURCE_SCAN, 0, 0, n_ab, None, result.stages_evaluated)
        )
    trace.complete = True
    return trace


def _mixture_from_batch(
    batch: list[tuple[Window, float]],
    book: RegionBook,
    space: SearchSpace,
) -> DentedGaussianMixture:
    if not batch:
        return DentedGaussianMixture.empty(book, space)
    weights = normalize_weights([resp for _, resp in batch])
    components = tuple(
        GaussianComponent(w, float(weight), default_sigma(space, w.s))
        for (w, _), weight in zip(batch, weights)
    )
    return DentedGaussianMixture(components, book, space)


def run_mpw(
    space: SearchSpace,
    scorer: Scorer,
    config: DetectorConfig,
    seed: int | None = None,
) -> RunTrace:
    """Staged mixture search: uniform first stage, then response-weighted Gaussians.

    With ``mpw_blend < 1`` each stage keeps ``1 - blend`` of its draw mass on
    the previous stage's proposal (recursively down to the uniform), instead
    of replacing it outright.
    """
    if space.window_count == 0:
        raise ValueError("search space has no windows")
    seed = config.seed if seed is None else seed
    rng = _rng(seed)
    trace = RunTrace(config.name, "mpw", seed, space.window_count)
    schedule = schedule_for_budget(config.budget, config.gamma, config.mpw_stage_count)

    # Completed stages as (windows, cumulative weights) for the blend switch.
    stage_proposals: list[tuple[list[Window], np.ndarray]] = []
    n_ab = 0
    i = 0
    for n_draw in schedule:
        drawn: list[tuple[Window, float]] = []
        for _ in range(n_draw):
            i += 1
            w, source = _mpw_draw(space, stage_proposals, config, rng)
            result = scorer.score(space, w)
            kind = _classify(result.response, config)
            if kind == KIND_ACCEPTED:
                trace.accepted.append((w, result.response))
            elif kind == KIND_AMBIGUOUS:
                n_ab += 1
            drawn.append((w, result.response))
            trace.records.append(
                TraceRecord(i, w, result.response, kind, source, 0, 0, n_ab, None, result.stages_evaluated)
            )
        weights = normalize_weights([resp for _, resp in drawn])
        stage_proposals.append(([w for w, _ in drawn], np.cumsum(weights)))
    trace.complete = False
    return trace


def _mpw_draw(
    space: SearchSpace,
    stage_proposals: list[tuple[list[Window], np.ndarray]],
    config: DetectorConfig,
    rng: np.random.Generator,
) -> tuple[Window, str]:
    """One draw from the current stage proposal.

    The stage-i proposal is ``(1 - blend) * previous + blend * fresh``; with
    the default blend of 1 only the latest stage's mixture is used.  Walking
    the recursion backwards with one coin per level selects the contributing
    stage; reaching below stage 1 lands on the uniform.
    """
    level = len(stage_proposals)
    while level > 0 and rng.random() >= config.mpw_blend:
        level -= 1
    if level == 0:
        w = space.window_at(int(rng.integers(space.window_count)))
        return w, SOURCE_UNIFORM
    windows, cumulative = stage_proposals[level - 1]
    for _ in range(config.n_max):
        idx = int(np.searchsorted(cumulative, rng.random(), side="right"))
        idx = min(idx, len(windows) - 1)
        mean = windows[idx]
        w = draw_gaussian_window(space, mean, default_sigma(space, mean.s), rng)
        if w is not None:
            return w, SOURCE_GAUSSIAN
    w = space.window_at(int(rng.integers(space.window_count)))
    return w, SOURCE_UNIFORM


@dataclass
class _IncrementalState:
    """Book, proposals, and ambiguity batch shared by the incremental detectors."""

    book: RegionBook
    uniform: DentedUniform
    mixture: DentedGaussianMixture
    ambiguous: list[tuple[Window, float]]


def _incremental_step(
    state: _IncrementalState,
    space: SearchSpace,
    scorer: Scorer,
    config: DetectorConfig,
    rng: np.random.Generator,
    i: int,
    p_uniform: float,
    trace: RunTrace,
) -> bool:
    """Draw, score, classify, and mark one window; False when the space is exhausted.

    The Gaussian branch falls back to the dented uniform in the same
    iteration when the mixture is empty or its rejection loop exhausts.
    """
    use_gaussian = len(state.mixture) > 0 and rng.random() >= p_uniform
    w: Window | None = None
    source = SOURCE_UNIFORM
    if use_gaussian:
        w = state.mixture.sample(rng, config.n_max)
        if w is not None:
            source = SOURCE_GAUSSIAN
    if w is None:
        w = state.uniform.sample(rng, config.n_max)
    if w is None:
        trace.complete = True
        return False

    result = scorer.score(space, w)
    kind = _classify(result.response, config)
    if kind == KIND_REJECTED:
        marked = mark_rejection(
            state.book, space, w, result.response, config.radius_table, config.t_l, config.reject_propagation
        )
        if marked == 0:
            state.book.claim_cell(w, RegionKind.REJECTED)
    elif kind == KIND_ACCEPTED:
        r_a_x, r_a_y = config.acceptance_radii(space)
        mark_acceptance(
            state.book, space, w, result.response, r_a_x, r_a_y, config.t_h, config.accept_propagation
        )
        trace.accepted.append((w, result.response))
    else:
        state.ambiguous.append((w, result.response))
        # Claim the scored cell: its response is known to be below t_h, so
        # excluding it from future draws cannot lose a detection.
        state.book.claim_cell(w, RegionKind.REJECTED)

    trace.records.append(
        TraceRecord(
            i,
            w,
            result.response,
            kind,
            source,
            state.book.n_rejected,
            state.book.n_accepted,
            len(state.ambiguous),
            p_uniform,
            result.stages_evaluated,
        )
    )
    return kind == KIND_AMBIGUOUS


def run_ipw(
    space: SearchSpace,
    scorer: Scorer,
    config: DetectorConfig,
    seed: int | None = None,
) -> RunTrace:
    """Incremental search: every draw updates the dent, ambiguity reshapes the mixture."""
    if space.window_count == 0:
        raise ValueError("search space has no windows")
    seed = config.seed if seed is None else seed
    rng = _rng(seed)
    trace = RunTrace(config.name, "ipw", seed, space.window_count)
    book = RegionBook(space)
    state = _IncrementalState(book, DentedUniform(book, space), DentedGaussianMixture.empty(book, space), [])

    for i in range(1, config.budget + 1):
        weights = mixture_weights(config.alpha, book.n_rejected, book.n_accepted, space.window_count)
        new_ambiguous = _incremental_step(state, space, scorer, config, rng, i, weights.p_uniform, trace)
        if trace.complete:
            break
        if new_ambiguous:
            state.mixture = _mixture_from_batch(state.ambiguous, book, space)
    return trace


def run_sipw(
    space: SearchSpace,
    scorer: Scorer,
    config: DetectorConfig,
    seed: int | None = None,
) -> RunTrace:
    """Staged incremental search: the mixture is frozen between rebuild points.

    Until the first rebuild every draw is uniform.  At each rebuild the
    accumulated ambiguity batch becomes the new mixture, the batch is
    flushed, and the next rebuild interval shrinks by ``exp(-gamma)``.
    """
    if space.window_count == 0:
        raise ValueError("search space has no windows")
    seed = config.seed if seed is None else seed
    rng = _rng(seed)
    trace = RunTrace(config.name, "sipw", seed, space.window_count)
    book = RegionBook(space)
    state = _IncrementalState(book, DentedUniform(book, space), DentedGaussianMixture.empty(book, space), [])

    rebuilt_once = False
    interval = config.n_c_star_init if config.n_c_star_init is not None else config.budget // 2
    interval = max(1, interval)
    threshold = float(interval)
    since_rebuild = 0

    for i in range(1, config.budget + 1):
        if not rebuilt_once:
            p_uniform = 1.0
        else:
            p_uniform = mixture_weights(
                config.alpha, book.n_rejected, book.n_accepted, space.window_count
            ).p_uniform
        _incremental_step(state, space, scorer, config, rng, i, p_uniform, trace)
        if trace.complete:
            break
        since_rebuild += 1
        if since_rebuild >= threshold:
            rebuilt_once = True
            state.mixture = _mixture_from_batch(state.ambiguous, book, space)
            state.ambiguous = []
            trace.rebuilds.append(i)
            threshold *= math.exp(-config.gamma)
            since_rebuild = 0
    return trace


def detections_from_trace(
    space: SearchSpace,
    trace: RunTrace,
    nms_threshold: float = 0.5,
) -> DetectionSet:
    """Accepted windows as original-image boxes, after overlap suppression."""
    boxes = [(space.to_box(w), resp) for w, resp in trace.accepted]
    return DetectionSet(tuple(nms(boxes, nms_threshold)))
