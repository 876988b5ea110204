"""Weighted nearest-neighbor matching over the corpus descriptor space.

Queries run in a 35-dimensional normalized space: the 31 segment-vector
dimensions plus centroid mean, periodicity mean, f0 mean and duration (the
scatter-plot features). Search is an exact linear scan; corpora are small by
design and exactness keeps the behavior testable. Ties break toward the lower
segment id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CorpusAgentError, ValidationError
from .features import IDX, N_FRAME_DIMS, HOP, SAMPLE_RATE, RunningStats, finalize, segment_vector
from .model import AUX_DIM_NAMES, MOSAIC_DIMS, TrainedModel

# named axis dimensions in the mosaic space
AXIS_DIMS = {name: 31 + i for i, name in enumerate(AUX_DIM_NAMES)}
AXIS_DIMS["centroid"] = AXIS_DIMS["centroid_mean"]
AXIS_DIMS["periodicity"] = AXIS_DIMS["periodicity_mean"]
AXIS_DIMS["f0"] = AXIS_DIMS["f0_mean"]


@dataclass
class FeatureWeights:
    """Non-negative per-dimension weights over the 35-dim mosaic space."""

    values: np.ndarray = field(default_factory=lambda: np.zeros(MOSAIC_DIMS))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (MOSAIC_DIMS,):
            raise ValidationError("weights", f"expected {MOSAIC_DIMS} weights, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("weights", "weights must be finite")
        if np.any(self.values < 0):
            raise ValidationError("weights", "weights must be non-negative")

    def require_active(self) -> None:
        if not np.any(self.values > 0):
            raise ValidationError("weights", "at least one weight must be positive")

    @classmethod
    def uniform(cls) -> "FeatureWeights":
        values = np.zeros(MOSAIC_DIMS)
        values[:31] = 1.0
        return cls(values)

    @classmethod
    def preset(cls, name: str) -> "FeatureWeights":
        dim = AXIS_DIMS.get(name)
        if dim is None:
            raise ValidationError("preset", f"unknown preset {name!r}", permitted=", ".join(sorted(AXIS_DIMS)))
        values = np.zeros(MOSAIC_DIMS)
        values[dim] = 1.0
        return cls(values)


@dataclass
class MosaicTarget:
    """A query point in the normalized descriptor space."""

    vector: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.shape != (MOSAIC_DIMS,):
            raise CorpusAgentError(f"target must have {MOSAIC_DIMS} dimensions")


def target_from_stats(
    model: TrainedModel,
    stats: RunningStats,
    *,
    timestamp: float = 0.0,
) -> MosaicTarget:
    """Build a query target from live running statistics.

    Affect is recomputed online from the running means/stds; the duration
    dimension is approximated by the analyzed time span. Out-of-range values
    are clamped into the normalized [-1, 1] box so live material stays
    comparable with the corpus.
    """
    seg = finalize(stats)
    raw = np.empty(MOSAIC_DIMS)
    raw[:31] = segment_vector(seg)
    raw[31] = seg.mean[IDX["centroid"]]
    raw[32] = seg.mean[IDX["periodicity"]]
    raw[33] = seg.mean[IDX["f0"]]
    raw[34] = stats.count * HOP / SAMPLE_RATE
    vec = np.clip(model.normalization.apply(raw), -1.0, 1.0)
    return MosaicTarget(vector=vec, timestamp=timestamp)


def target_from_point(model: TrainedModel, coords: dict[str, float], *, timestamp: float = 0.0) -> MosaicTarget:
    """Target from UI pointer coordinates, e.g. {"centroid": x, "periodicity": y}.

    Coordinates are already in normalized [-1, 1] space; unnamed dimensions sit
    at the center (they are normally zero-weighted anyway).
    """
    vec = np.zeros(MOSAIC_DIMS)
    for name, value in coords.items():
        dim = AXIS_DIMS.get(name)
        if dim is None:
            raise ValidationError("axis", f"unknown axis {name!r}", permitted=", ".join(sorted(AXIS_DIMS)))
        vec[dim] = np.clip(float(value), -1.0, 1.0)
    return MosaicTarget(vector=vec, timestamp=timestamp)


def knn_query(model: TrainedModel, target: MosaicTarget, weights: FeatureWeights, k: int) -> list[int]:
    """Segment ids ordered by weighted Euclidean distance to the target."""
    if k < 1:
        raise CorpusAgentError("k must be >= 1")
    weights.require_active()
    k = min(k, model.num_segments)
    space = model.mosaic_matrix()
    diff = space - target.vector
    d2 = (weights.values * diff * diff).sum(axis=1)
    order = np.argsort(d2, kind="stable")  # stable: equal distances keep id order
    return [int(i) for i in order[:k]]


def reactive_step(
    model: TrainedModel,
    live_stats: RunningStats,
    weights: FeatureWeights,
    gate_open: bool,
    *,
    timestamp: float = 0.0,
) -> int | None:
    """Pick the nearest segment to the live statistics when the gate is open."""
    if not gate_open:
        return None
    if live_stats.count < 1:
        raise CorpusAgentError("reactive step requires at least one analyzed frame")
    target = target_from_stats(model, live_stats, timestamp=timestamp)
    return knn_query(model, target, weights, k=1)[0]
