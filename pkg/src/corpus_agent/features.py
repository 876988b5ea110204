"""Framewise machine listening.

All descriptors are computed at 44.1 kHz with a Hann window of 1024 samples
and a hop of 512. Each frame yields 25 raw dimensions in a fixed order
(see FRAME_DIM_NAMES); per-segment statistics over those frames feed the
affect regressions and the 31-dimensional segment vector:

    [0..21]  means of: 13 MFCC, loudness, 4 flatness bands, spectral
             decrease, 3 tristimulus
    [22..28] stds of: loudness, MFCC_1, MFCC_3, MFCC_5, MFCC_11, spectral
             decrease, tristimulus_2 (the stds the affect equations consume)
    [29,30]  valence, arousal

This exact composition is a documented choice: it reproduces the 31-dim
count while housing every statistic the affect equations need. Centroid,
periodicity and f0 means stay outside the 31 dims; they drive the mosaic
scatter space instead.

Loudness is A-weighted energy in dB relative to a full-scale sine, floored at
-96 dBFS; the absolute calibration is our convention and is documented rather
than claimed to match any other system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .corpus import AudioBuffer
from .errors import CorpusAgentError, EmptyAudioError

SAMPLE_RATE = 44100
WINDOW = 1024
HOP = 512
N_BINS = WINDOW // 2 + 1
BIN_HZ = SAMPLE_RATE / WINDOW

N_MELS = 40
MEL_FMAX = SAMPLE_RATE / 2
LOG_FLOOR = 1e-10
N_MFCC = 13  # coefficients 1..13; the zeroth (gain) coefficient is dropped

LOUDNESS_FLOOR_DB = -96.0
FLATNESS_BANDS = ((250.0, 500.0), (500.0, 1000.0), (1000.0, 2000.0), (2000.0, 4000.0))

F0_MIN = 50.0
F0_MAX = 2000.0
VOICED_THRESHOLD = 0.3  # periodicity below this means unvoiced: f0=0, tristimulus=0

# Critical-band edges in Hz (Zwicker), extended to Nyquist for a 25th band.
BARK_EDGES = np.array(
    [0, 100, 200, 300, 400, 510, 630, 770, 920, 1080, 1270, 1480, 1720, 2000,
     2320, 2700, 3150, 3700, 4400, 5300, 6400, 7700, 9500, 12000, 15500, 22050],
    dtype=np.float64,
)
N_BARK = len(BARK_EDGES) - 1

FRAME_DIM_NAMES = (
    tuple(f"mfcc_{i}" for i in range(1, 14))
    + ("loudness",)
    + tuple(f"flatness_{i}" for i in range(1, 5))
    + ("spectral_decrease",)
    + tuple(f"tristimulus_{i}" for i in range(1, 4))
    + ("centroid", "periodicity", "f0")
)
N_FRAME_DIMS = len(FRAME_DIM_NAMES)  # 25
IDX = {name: i for i, name in enumerate(FRAME_DIM_NAMES)}

VECTOR31_STD_DIMS = (
    IDX["loudness"],
    IDX["mfcc_1"],
    IDX["mfcc_3"],
    IDX["mfcc_5"],
    IDX["mfcc_11"],
    IDX["spectral_decrease"],
    IDX["tristimulus_2"],
)
VECTOR31_MEAN_COUNT = 22  # mfcc(13) + loudness + flatness(4) + decrease + tristimulus(3)
VECTOR31_LEN = 31

VALENCE_INTERCEPT = -0.169
AROUSAL_INTERCEPT = -1.551


def _hann(n: int) -> np.ndarray:
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)

_WINDOW_COEFF = _hann(WINDOW)
_WINDOW_ENERGY = float(np.sum(_WINDOW_COEFF**2))


def _a_weighting(freqs: np.ndarray) -> np.ndarray:
    """Linear A-weighting gains (IEC 61672 curve), zero at DC."""
    f2 = freqs.astype(np.float64) ** 2
    num = (12194.0**2) * f2**2
    den = (f2 + 20.6**2) * np.sqrt((f2 + 107.7**2) * (f2 + 737.9**2)) * (f2 + 12194.0**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ra = np.where(den > 0, num / den, 0.0)
    return ra * 10.0 ** (2.0 / 20.0)  # +2.00 dB normalization at 1 kHz


_BIN_FREQS = np.arange(N_BINS) * BIN_HZ
_A_WEIGHT = _a_weighting(_BIN_FREQS)


def _mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_inv(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _mel_filterbank() -> np.ndarray:
    """40 triangular filters on the mel scale spanning 0..22050 Hz."""
    points = _mel_inv(np.linspace(_mel(0.0), _mel(MEL_FMAX), N_MELS + 2))
    bank = np.zeros((N_MELS, N_BINS))
    for m in range(N_MELS):
        lo, center, hi = points[m], points[m + 1], points[m + 2]
        up = (_BIN_FREQS - lo) / max(center - lo, 1e-9)
        down = (hi - _BIN_FREQS) / max(hi - center, 1e-9)
        bank[m] = np.maximum(0.0, np.minimum(up, down))
    return bank


_MEL_BANK = _mel_filterbank()

_FLATNESS_BIN_RANGES = tuple(
    (int(np.ceil(lo / BIN_HZ)), int(np.ceil(hi / BIN_HZ))) for lo, hi in FLATNESS_BANDS
)


@dataclass
class FrameFeatures:
    """One analysis frame's descriptors."""

    mfcc: np.ndarray          # 13 coefficients (1..13)
    loudness: float           # A-weighted dBFS, floored at -96
    flatness: np.ndarray      # 4 bands in [0, 1]
    spectral_decrease: float
    tristimulus: np.ndarray   # 3 harmonic energy shares, zeros when unvoiced
    centroid: float           # Hz
    periodicity: float        # [0, 1]
    f0: float                 # Hz, 0 when unvoiced

    def as_array(self) -> np.ndarray:
        out = np.empty(N_FRAME_DIMS)
        out[0:13] = self.mfcc
        out[13] = self.loudness
        out[14:18] = self.flatness
        out[18] = self.spectral_decrease
        out[19:22] = self.tristimulus
        out[22] = self.centroid
        out[23] = self.periodicity
        out[24] = self.f0
        return out

    @classmethod
    def from_array(cls, row: np.ndarray) -> "FrameFeatures":
        row = np.asarray(row, dtype=np.float64)
        return cls(
            mfcc=row[0:13].copy(),
            loudness=float(row[13]),
            flatness=row[14:18].copy(),
            spectral_decrease=float(row[18]),
            tristimulus=row[19:22].copy(),
            centroid=float(row[22]),
            periodicity=float(row[23]),
            f0=float(row[24]),
        )


def frame_count(n_samples: int) -> int:
    if n_samples < WINDOW:
        return 0
    return (n_samples - WINDOW) // HOP + 1


def raw_frames(buffer: AudioBuffer) -> np.ndarray:
    """Frame the signal (no window): shape (frames, 1024)."""
    if buffer.sample_rate != SAMPLE_RATE:
        raise CorpusAgentError(f"analysis requires {SAMPLE_RATE} Hz input, got {buffer.sample_rate}")
    x = buffer.samples
    if len(x) < WINDOW:
        raise EmptyAudioError(f"buffer shorter than one analysis window ({WINDOW} samples)")
    return np.lib.stride_tricks.sliding_window_view(x, WINDOW)[::HOP]


def stft_frames(buffer: AudioBuffer) -> np.ndarray:
    """Hann-windowed magnitude spectra, shape (frames, 513)."""
    return np.abs(np.fft.rfft(raw_frames(buffer) * _WINDOW_COEFF, axis=1))


def _loudness_db(spectra: np.ndarray) -> np.ndarray:
    weighted = (spectra * _A_WEIGHT) ** 2
    # Parseval-style mean power of the A-weighted, windowed signal, referenced
    # to a full-scale sine (mean power 1/2).
    power = 2.0 * weighted.sum(axis=1) / WINDOW / (0.5 * _WINDOW_ENERGY)
    floor = 10.0 ** (LOUDNESS_FLOOR_DB / 10.0)
    return 10.0 * np.log10(np.maximum(power, floor))


def _mfcc_rows(spectra: np.ndarray) -> np.ndarray:
    mel_energy = (spectra**2) @ _MEL_BANK.T
    logmel = np.log(np.maximum(mel_energy, LOG_FLOOR))
    coeffs = dct(logmel, type=2, axis=1, norm="ortho")
    return coeffs[:, 1 : N_MFCC + 1]


def _flatness_rows(spectra: np.ndarray) -> np.ndarray:
    energy = spectra**2
    out = np.empty((len(spectra), len(FLATNESS_BANDS)))
    tiny = 1e-30
    for b, (lo, hi) in enumerate(_FLATNESS_BIN_RANGES):
        band = energy[:, lo:hi]
        amean = band.mean(axis=1)
        gmean = np.exp(np.log(np.maximum(band, tiny)).mean(axis=1))
        # silence: flatness 1.0 by convention (maximally noise-like)
        out[:, b] = np.where(amean <= tiny, 1.0, np.minimum(gmean / np.maximum(amean, tiny), 1.0))
    return out


def _decrease_rows(spectra: np.ndarray) -> np.ndarray:
    # Sum_{k>=2} (a_k - a_1)/(k-1) normalized by Sum_{k>=2} a_k, over rfft bins
    a1 = spectra[:, :1]
    rest = spectra[:, 1:]
    k = np.arange(1, spectra.shape[1])
    num = ((rest - a1) / k).sum(axis=1)
    den = rest.sum(axis=1)
    return np.where(den > 0, num / np.maximum(den, 1e-30), 0.0)


def _centroid_rows(spectra: np.ndarray) -> np.ndarray:
    total = spectra.sum(axis=1)
    return np.where(total > 0, (spectra @ _BIN_FREQS) / np.maximum(total, 1e-30), 0.0)


def _periodicity_rows(frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalized autocorrelation peak and f0 per frame.

    Unbiased normalization so a stationary sine scores ~1 regardless of lag;
    the first sufficiently strong local maximum wins, with parabolic lag
    refinement for sub-sample f0 accuracy.
    """
    n = frames.shape[1]
    lag_min = int(np.ceil(SAMPLE_RATE / F0_MAX))
    lag_max = min(int(np.floor(SAMPLE_RATE / F0_MIN)), n - 2)
    spec = np.fft.rfft(frames, 2 * n, axis=1)
    acorr = np.fft.irfft(spec.real**2 + spec.imag**2, 2 * n, axis=1)[:, :n]
    r0 = acorr[:, 0]
    scale = n / (n - np.arange(n, dtype=np.float64))  # unbiased correction
    periodicity = np.zeros(len(frames))
    f0 = np.zeros(len(frames))
    live = r0 > 1e-12
    if not np.any(live):
        return periodicity, f0
    rho = np.zeros_like(acorr)
    rho[live] = acorr[live] * scale / r0[live, None]
    win = rho[:, lag_min : lag_max + 1]
    interior = win[:, 1:-1]
    is_peak = (interior >= win[:, :-2]) & (interior >= win[:, 2:])
    best = win.max(axis=1)
    for i in np.nonzero(live)[0]:
        cand = np.nonzero(is_peak[i] & (win[i, 1:-1] >= 0.85 * best[i]))[0]
        if len(cand) == 0:
            periodicity[i] = float(np.clip(best[i], 0.0, 1.0))
            continue
        lag = lag_min + 1 + cand[0]
        # parabolic refinement around the chosen lag
        ym, y0, yp = rho[i, lag - 1], rho[i, lag], rho[i, lag + 1]
        denom = ym - 2.0 * y0 + yp
        shift = 0.5 * (ym - yp) / denom if abs(denom) > 1e-12 else 0.0
        shift = float(np.clip(shift, -0.5, 0.5))
        periodicity[i] = float(np.clip(y0, 0.0, 1.0))
        f0[i] = SAMPLE_RATE / (lag + shift)
    f0 = np.where(periodicity >= VOICED_THRESHOLD, f0, 0.0)
    return periodicity, f0


def _tristimulus_row(energy: np.ndarray, f0: float) -> np.ndarray:
    """Harmonic energy shares: fundamental / partials 2-4 / remainder."""
    out = np.zeros(3)
    if f0 <= 0:
        return out
    n_harm = int((SAMPLE_RATE / 2) // f0)
    if n_harm < 1:
        return out
    partials = np.empty(n_harm)
    for h in range(1, n_harm + 1):
        b = int(round(h * f0 / BIN_HZ))
        lo, hi = max(b - 2, 0), min(b + 3, len(energy))
        partials[h - 1] = energy[lo:hi].max() if hi > lo else 0.0
    total = partials.sum()
    if total <= 0:
        return out
    out[0] = partials[0] / total
    out[1] = partials[1:4].sum() / total
    out[2] = partials[4:].sum() / total
    return out


def analyze_frames(frames: np.ndarray) -> np.ndarray:
    """All 25 descriptors for pre-sliced raw frames: shape (n, 25)."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    spectra = np.abs(np.fft.rfft(frames * _WINDOW_COEFF, axis=1))
    energy = spectra**2
    out = np.empty((len(frames), N_FRAME_DIMS))
    out[:, 0:13] = _mfcc_rows(spectra)
    out[:, 13] = _loudness_db(spectra)
    out[:, 14:18] = _flatness_rows(spectra)
    out[:, 18] = _decrease_rows(spectra)
    periodicity, f0 = _periodicity_rows(frames)
    for i in range(len(frames)):
        out[i, 19:22] = _tristimulus_row(energy[i], f0[i])
    out[:, 22] = _centroid_rows(spectra)
    out[:, 23] = periodicity
    out[:, 24] = f0
    return out


def analyze_buffer(buffer: AudioBuffer, chunk_frames: int = 4096) -> np.ndarray:
    """Per-frame descriptor matrix for a whole buffer, chunked for memory."""
    frames = raw_frames(buffer)
    parts = [
        analyze_frames(frames[i : i + chunk_frames]) for i in range(0, len(frames), chunk_frames)
    ]
    return np.vstack(parts)


def frame_descriptors(spectrum: np.ndarray, time_frame: np.ndarray) -> FrameFeatures:
    """Descriptors for a single frame given its magnitude spectrum and samples.

    Silence yields defined defaults: flatness 1.0, loudness at the floor,
    f0 = 0 and zero tristimulus.
    """
    spectrum = np.asarray(spectrum, dtype=np.float64).reshape(1, -1)
    time_frame = np.asarray(time_frame, dtype=np.float64).reshape(1, -1)
    row = np.empty(N_FRAME_DIMS)
    row[0:13] = _mfcc_rows(spectrum)[0]
    row[13] = _loudness_db(spectrum)[0]
    row[14:18] = _flatness_rows(spectrum)[0]
    row[18] = _decrease_rows(spectrum)[0]
    periodicity, f0 = _periodicity_rows(time_frame)
    row[19:22] = _tristimulus_row(spectrum[0] ** 2, float(f0[0]))
    row[22] = _centroid_rows(spectrum)[0]
    row[23] = periodicity[0]
    row[24] = f0[0]
    return FrameFeatures.from_array(row)


@dataclass
class RunningStats:
    """Streaming per-dimension mean/variance (Welford) over analysis frames.

    Reset on every new sample trigger so statistics always describe the
    currently sounding material.
    """

    count: int = 0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(N_FRAME_DIMS))
    m2: np.ndarray = field(default_factory=lambda: np.zeros(N_FRAME_DIMS))

    def update(self, frame) -> "RunningStats":
        row = frame.as_array() if isinstance(frame, FrameFeatures) else np.asarray(frame, dtype=np.float64)
        self.count += 1
        delta = row - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (row - self.mean)
        return self

    def update_rows(self, rows: np.ndarray) -> "RunningStats":
        for row in np.atleast_2d(rows):
            self.update(row)
        return self

    def reset(self) -> "RunningStats":
        self.count = 0
        self.mean[:] = 0.0
        self.m2[:] = 0.0
        return self


@dataclass
class SegmentStats:
    """Finalized per-segment statistics plus the affect estimates."""

    mean: np.ndarray
    std: np.ndarray
    valence: float = 0.0
    arousal: float = 0.0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != (N_FRAME_DIMS,) or self.std.shape != (N_FRAME_DIMS,):
            raise ValueError(f"stats must have {N_FRAME_DIMS} dimensions")


def affect(stats: SegmentStats) -> tuple[float, float]:
    """Valence/arousal as fixed linear regressions over the segment stats."""
    mean, std = stats.mean, stats.std
    valence = (
        VALENCE_INTERCEPT
        + 0.061 * mean[IDX["loudness"]]
        + 0.588 * mean[IDX["flatness_1"]]
        + 0.302 * std[IDX["mfcc_1"]]
        + 0.361 * std[IDX["mfcc_5"]]
        - 0.229 * std[IDX["spectral_decrease"]]
    )
    arousal = (
        AROUSAL_INTERCEPT
        + 0.060 * mean[IDX["loudness"]]
        + 0.087 * std[IDX["loudness"]]
        + 1.905 * std[IDX["tristimulus_2"]]
        + 0.698 * mean[IDX["tristimulus_3"]]
        + 0.560 * std[IDX["mfcc_3"]]
        - 0.421 * std[IDX["mfcc_5"]]
        + 1.164 * std[IDX["mfcc_11"]]
    )
    return float(valence), float(arousal)


def finalize(stats: RunningStats) -> SegmentStats:
    """Population mean/std snapshot; requires at least one frame."""
    if stats.count < 1:
        raise CorpusAgentError("cannot finalize statistics over zero frames")
    std = np.sqrt(np.maximum(stats.m2 / stats.count, 0.0))
    seg = SegmentStats(mean=stats.mean.copy(), std=std)
    seg.valence, seg.arousal = affect(seg)
    return seg


def stats_from_rows(rows: np.ndarray) -> SegmentStats:
    """Two-pass mean/std over a frame matrix (batch training path)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[0] < 1:
        raise CorpusAgentError("cannot compute statistics over zero frames")
    seg = SegmentStats(mean=rows.mean(axis=0), std=rows.std(axis=0))
    seg.valence, seg.arousal = affect(seg)
    return seg


def segment_vector(stats: SegmentStats) -> np.ndarray:
    """The 31-dim vector: 22 means, 7 stds, valence, arousal (fixed layout)."""
    out = np.empty(VECTOR31_LEN)
    out[0:VECTOR31_MEAN_COUNT] = stats.mean[0:VECTOR31_MEAN_COUNT]
    for j, dim in enumerate(VECTOR31_STD_DIMS):
        out[VECTOR31_MEAN_COUNT + j] = stats.std[dim]
    out[29] = stats.valence
    out[30] = stats.arousal
    return out


def bark_bands(spectrum: np.ndarray) -> np.ndarray:
    """Spectral energy summed into the 25 critical bands (capped at Nyquist)."""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    energy = spectrum**2
    idx = np.clip(np.searchsorted(BARK_EDGES, _BIN_FREQS[: len(spectrum)], side="right") - 1, 0, N_BARK - 1)
    out = np.zeros(N_BARK)
    np.add.at(out, idx, energy)
    return out
