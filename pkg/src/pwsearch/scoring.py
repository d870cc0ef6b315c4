"""Classifier-response models over a window space.

Two scorers share one interface (``score(space, w) -> ScoreResult``):

* :class:`SyntheticScorer` evaluates a closed-form response landscape built
  from planted objects and distractors.  The response at a window is
  ``floor + (peak - floor) * exp(-sharpness * d)`` for the best-matching
  target, where ``d`` is the L1 distance in target-normalized units
  (dx / target_w + dy / target_h + scale-step mismatch).  Far from every
  target the response approaches ``floor``.
* :class:`CascadeScorer` emulates a staged classifier on top of a synthetic
  scene: a window passing ``j`` of ``stages`` stages emits response
  ``j / stages`` and cost proportional to the stages actually evaluated.

``normalize_weights`` turns a batch of raw responses into sampling weights:
responses are shifted to nonnegative (only if the minimum is below zero, so
already-nonnegative batches keep their proportions) and divided by their sum.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .space import Box, SearchSpace, Window

Placement = tuple[Box, float]


@dataclass(frozen=True)
class ScoreResult:
    """Raw response plus the number of classifier stages spent on the window.

    ``stages_evaluated`` is 0 for flat (single-shot) scorers.
    """

    response: float
    stages_evaluated: int = 0


class Scorer(Protocol):
    def score(self, space: SearchSpace, w: Window) -> ScoreResult: ...


@dataclass(frozen=True)
class SyntheticScene:
    """Planted ground truth: (box, peak) placements over an image.

    Object peaks are meant to sit at or above the paired detector's upper
    threshold, distractor peaks inside the ambiguity band, and ``floor``
    strictly below the lower threshold; ``check_thresholds`` verifies that.
    """

    image_w: int
    image_h: int
    objects: tuple[Placement, ...]
    distractors: tuple[Placement, ...]
    floor: float
    sharpness: float

    def __post_init__(self) -> None:
        if self.image_w < 1 or self.image_h < 1:
            raise ValueError("image dimensions must be positive")
        if self.sharpness <= 0.0:
            raise ValueError("sharpness must be positive")
        for box, peak in self.objects + self.distractors:
            if peak <= self.floor:
                raise ValueError(f"target peak {peak} must exceed floor {self.floor}")
            if box.w <= 0 or box.h <= 0:
                raise ValueError("target boxes need positive extent")

    def check_thresholds(self, t_l: float, t_h: float) -> None:
        """Raise unless the scene respects a (t_l, t_h) detector pairing."""
        if not self.floor < t_l:
            raise ValueError(f"floor {self.floor} must lie below t_l {t_l}")
        for _, peak in self.objects:
            if peak < t_h:
                raise ValueError(f"object peak {peak} below t_h {t_h}")
        for _, peak in self.distractors:
            if not t_l <= peak < t_h:
                raise ValueError(f"distractor peak {peak} outside [{t_l}, {t_h})")

    def to_dict(self) -> dict:
        def placements(items: tuple[Placement, ...]) -> list[dict]:
            return [
                {"box": {"cx": b.cx, "cy": b.cy, "w": b.w, "h": b.h}, "peak": p}
                for b, p in items
            ]

        return {
            "image_w": self.image_w,
            "image_h": self.image_h,
            "objects": placements(self.objects),
            "distractors": placements(self.distractors),
            "floor": self.floor,
            "sharpness": self.sharpness,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticScene":
        def placements(items: list[dict]) -> tuple[Placement, ...]:
            return tuple(
                (Box(d["box"]["cx"], d["box"]["cy"], d["box"]["w"], d["box"]["h"]), float(d["peak"]))
                for d in items
            )

        return cls(
            image_w=int(data["image_w"]),
            image_h=int(data["image_h"]),
            objects=placements(data["objects"]),
            distractors=placements(data["distractors"]),
            floor=float(data["floor"]),
            sharpness=float(data["sharpness"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SyntheticScene":
        return cls.from_dict(json.loads(Path(path).read_text()))


class SyntheticScorer:
    """Closed-form response landscape for a :class:`SyntheticScene`.

    The distance between a window and a target combines center offsets
    normalized by the target's own extent with the scale-step mismatch, so a
    window one pyramid step away from the target's size is penalized exactly
    like one a full target-width off in x.  Targets are assumed
    template-aspect; their pyramid position is derived from width.
    """

    def __init__(self, scene: SyntheticScene):
        self.scene = scene
        targets = scene.objects + scene.distractors
        self._cx = np.array([b.cx for b, _ in targets], dtype=float)
        self._cy = np.array([b.cy for b, _ in targets], dtype=float)
        self._w = np.array([b.w for b, _ in targets], dtype=float)
        self._h = np.array([b.h for b, _ in targets], dtype=float)
        self._peak = np.array([p for _, p in targets], dtype=float)

    def score(self, space: SearchSpace, w: Window) -> ScoreResult:
        if not space.contains(w):
            raise ValueError(f"window {w} outside search space")
        return ScoreResult(self._response(space, w), 0)

    def _response(self, space: SearchSpace, w: Window) -> float:
        scene = self.scene
        if self._peak.size == 0:
            return scene.floor
        z = space.zoom(w.s)
        cx = (w.x * space.stride + space.template_w * 0.5) * z
        cy = (w.y * space.stride + space.template_h * 0.5) * z
        log_sf = math.log(space.scale_factor)
        target_s = np.log(self._w / space.template_w) / log_sf
        d = (
            np.abs(cx - self._cx) / self._w
            + np.abs(cy - self._cy) / self._h
            + np.abs(w.s - target_s)
        )
        values = scene.floor + (self._peak - scene.floor) * np.exp(-scene.sharpness * d)
        return float(values.max())


class CascadeScorer:
    """Staged-classifier emulator driven by a synthetic landscape.

    The scene response is normalized into [0, 1] against ``full_pass_response``
    (defaults to the weakest object peak, so every planted object can pass all
    stages) and quantized into the number of stages passed.  Response is
    ``passed / stages``; evaluation cost is ``passed + 1`` stages, capped at
    ``stages``, since a window stops at its first failing stage.
    """

    def __init__(
        self,
        scene: SyntheticScene,
        stages: int = 10,
        full_pass_response: float | None = None,
    ):
        if stages < 1:
            raise ValueError("stages must be >= 1")
        self.scene = scene
        self.stages = stages
        if full_pass_response is None:
            if scene.objects:
                full_pass_response = min(p for _, p in scene.objects)
            elif scene.distractors:
                full_pass_response = max(p for _, p in scene.distractors) + 1.0
            else:
                full_pass_response = scene.floor + 1.0
        if full_pass_response <= scene.floor:
            raise ValueError("full_pass_response must exceed the scene floor")
        self.full_pass_response = full_pass_response
        self._landscape = SyntheticScorer(scene)

    def score(self, space: SearchSpace, w: Window) -> ScoreResult:
        if not space.contains(w):
            raise ValueError(f"window {w} outside search space")
        raw = self._landscape._response(space, w)
        u = (raw - self.scene.floor) / (self.full_pass_response - self.scene.floor)
        u = min(max(u, 0.0), 1.0)
        passed = min(self.stages, int(u * self.stages + 1e-9))
        return ScoreResult(passed / self.stages, min(passed + 1, self.stages))


def normalize_weights(responses) -> np.ndarray:
    """Shift-to-nonnegative, then divide by the sum.

    Batches whose minimum is already >= 0 are left unshifted so their
    proportions survive.  A batch that is all equal after shifting (sum zero)
    degenerates to uniform weights.
    """
    arr = np.asarray(responses, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("responses must be a nonempty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("responses must be finite")
    low = arr.min()
    if low < 0.0:
        arr = arr - low
    total = arr.sum()
    if total <= 0.0:
        return np.full(arr.size, 1.0 / arr.size)
    return arr / total
