"""Adaptive particle-window search over discrete (x, y, scale) spaces."""

from .detectors import (
    DetectionSet,
    DetectorConfig,
    RunTrace,
    TraceRecord,
    mpw_schedule,
    nms,
    run_ipw,
    run_mpw,
    run_sipw,
    run_sw,
)
from .harness import (
    CostModel,
    Experiment,
    Metrics,
    SceneParams,
    cost_estimate,
    evaluate,
    extract_curves,
    generate_scenes,
    hit_probability,
)
from .proposal import (
    DentedGaussianMixture,
    DentedUniform,
    GaussianComponent,
    MixtureWeights,
    mixture_weights,
    sample_dented_gaussian,
    sample_dented_uniform,
)
from .regions import (
    RadiusInterval,
    RadiusTable,
    RegionBook,
    RegionKind,
    ScalePropagation,
    classify_cell,
    mark_acceptance,
    mark_rejection,
    radius_lookup,
)
from .scoring import (
    CascadeScorer,
    ScoreResult,
    SyntheticScene,
    SyntheticScorer,
    normalize_weights,
)
from .space import Box, SearchSpace, Window, overlap

__version__ = "0.1.0"

__all__ = [
    "Box",
    "CascadeScorer",
    "CostModel",
    "DentedGaussianMixture",
    "DentedUniform",
    "DetectionSet",
    "DetectorConfig",
    "Experiment",
    "GaussianComponent",
    "Metrics",
    "MixtureWeights",
    "RadiusInterval",
    "RadiusTable",
    "RegionBook",
    "RegionKind",
    "RunTrace",
    "ScalePropagation",
    "SceneParams",
    "ScoreResult",
    "SearchSpace",
    "SyntheticScene",
    "SyntheticScorer",
    "TraceRecord",
    "Window",
    "classify_cell",
    "cost_estimate",
    "evaluate",
    "extract_curves",
    "generate_scenes",
    "hit_probability",
    "mark_acceptance",
    "mark_rejection",
    "mixture_weights",
    "mpw_schedule",
    "nms",
    "normalize_weights",
    "overlap",
    "radius_lookup",
    "run_ipw",
    "run_mpw",
    "run_sipw",
    "run_sw",
    "sample_dented_gaussian",
    "sample_dented_uniform",
]
