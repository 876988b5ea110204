"""Multi-granular segmentation: onset-driven slicing with an even-split cap.

Onsets come from half-wave-rectified spectral flux against an adaptive median
threshold. Spans longer than the cap are split into the fewest equal parts
that fit under it, so a corpus yields both short event-aligned grains and
bounded long segments. Segments of one file always tile it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter

from . import features
from .corpus import AudioBuffer
from .errors import CorpusAgentError


@dataclass
class SegmentationConfig:
    flux_multiplier: float = 1.5
    median_width: int = 11
    min_segment_seconds: float = 0.25
    max_segment_seconds: float = 4.0
    # absolute peak floor as a fraction of the loudest frame magnitude;
    # steady tonal content wobbles the flux by ~0.1% of that scale while real
    # onsets reach tens of percent, so 2% rejects the wobble outright
    flux_floor_ratio: float = 0.02

    def __post_init__(self):
        if not 0 < self.min_segment_seconds < self.max_segment_seconds:
            raise CorpusAgentError("segmentation requires 0 < min < max segment seconds")
        if self.median_width < 1:
            raise CorpusAgentError("median width must be >= 1")
        if self.flux_floor_ratio < 0:
            raise CorpusAgentError("flux floor ratio must be >= 0")


@dataclass
class Segment:
    id: int
    source_index: int
    start_sample: int
    length_samples: int
    start_seconds: float
    duration_seconds: float
    cluster_node: int | None = None

    @property
    def end_sample(self) -> int:
        return self.start_sample + self.length_samples


def spectral_flux(spectra: np.ndarray) -> np.ndarray:
    """Half-wave rectified frame-to-frame magnitude increase; flux[0] = 0."""
    spectra = np.asarray(spectra, dtype=np.float64)
    if spectra.ndim != 2 or len(spectra) < 2:
        raise CorpusAgentError("spectral flux needs at least two frames")
    rise = np.maximum(spectra[1:] - spectra[:-1], 0.0)
    return np.concatenate([[0.0], rise.sum(axis=1)])


def detect_onsets(flux: np.ndarray, config: SegmentationConfig, *, flux_floor: float = 0.0) -> list[int]:
    """Peak frames above the local median threshold; frame 0 always included.

    ``flux_floor`` is an absolute lower bound on peak height (derived from the
    signal scale by ``segment``). Peaks closer than the minimum segment length
    to the previously kept onset are suppressed.
    """
    flux = np.asarray(flux, dtype=np.float64)
    threshold = median_filter(flux, size=config.median_width, mode="reflect") * config.flux_multiplier
    threshold = np.maximum(threshold, flux_floor)
    min_frames = max(1, int(round(config.min_segment_seconds * features.SAMPLE_RATE / features.HOP)))
    onsets = [0]
    for i in range(1, len(flux) - 1):
        if flux[i] <= 0 or flux[i] <= threshold[i]:
            continue
        if flux[i] > flux[i - 1] and flux[i] >= flux[i + 1]:
            if i - onsets[-1] >= min_frames:
                onsets.append(i)
    return onsets


def _split_span(start: int, length: int, max_samples: int) -> list[tuple[int, int]]:
    # fewest equal parts under the cap; integer cuts keep the tiling exact
    n = max(1, -(-length // max_samples))
    cuts = [start + int(round(i * length / n)) for i in range(n + 1)]
    return [(cuts[i], cuts[i + 1] - cuts[i]) for i in range(n)]


def segment(
    buffer: AudioBuffer,
    config: SegmentationConfig | None = None,
    *,
    source_index: int = 0,
    id_offset: int = 0,
) -> list[Segment]:
    """Slice a buffer into onset-aligned, cap-split, exactly tiling segments."""
    config = config or SegmentationConfig()
    n = len(buffer.samples)
    sr = buffer.sample_rate
    max_samples = max(1, int(round(config.max_segment_seconds * sr)))

    if n >= features.WINDOW * 2:
        spectra = features.stft_frames(buffer)
        floor = config.flux_floor_ratio * float(spectra.sum(axis=1).max())
        onsets = detect_onsets(spectral_flux(spectra), config, flux_floor=floor)
        boundaries = sorted({min(f * features.HOP, n) for f in onsets} | {0})
    else:
        boundaries = [0]  # too short to analyze: single whole-file segment
    boundaries.append(n)

    spans: list[tuple[int, int]] = []
    for i in range(len(boundaries) - 1):
        start, end = boundaries[i], boundaries[i + 1]
        if end > start:
            spans.extend(_split_span(start, end - start, max_samples))

    segments = []
    for k, (start, length) in enumerate(spans):
        segments.append(
            Segment(
                id=id_offset + k,
                source_index=source_index,
                start_sample=start,
                length_samples=length,
                start_seconds=start / sr,
                duration_seconds=length / sr,
            )
        )
    return segments
