"""Concatenative playback: transforms, envelopes and trigger gating.

Transform order is fixed: reverse, then resample (pitch and speed together,
linear interpolation), then an independent granular pitch shift at constant
duration (1200 cents per octave). Envelopes are linear attack/release ramps;
over-long fades are rescaled to fit the material.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import AudioBuffer
from .errors import CorpusAgentError, ValidationError

TRIGGER_MODES = ("beat", "loop", "cont", "bow", "fence")
RESERVED_TRIGGER_MODES = ("beatmove", "loopmove")

# granular pitch shifter geometry
GRAIN_SECONDS = 0.046
GRAIN_HOP_SECONDS = 0.0115

BOW_MOTION_EPS = 1e-3
ONE_SHOT_RELEASE_MS = 5.0


@dataclass
class PlaybackParams:
    tempo: float = 120.0            # node trigger rate, BPM
    p_forward: float = 0.5          # congruence / forward-jump probability
    attack_ms: float = 10.0
    release_ms: float = 10.0
    reverse: bool = False
    resample_ratio: float = 1.0
    pitch_shift_cents: float = 0.0
    one_shot: bool = False
    tempo_lock: bool = False

    def __post_init__(self):
        if self.tempo <= 0:
            raise ValidationError("tempo", "tempo must be > 0", permitted="> 0")
        if not 0.0 <= self.p_forward <= 1.0:
            raise ValidationError("congruence", "congruence must lie in [0, 1]", permitted="[0, 1]")
        if self.attack_ms < 0 or self.release_ms < 0:
            raise ValidationError("attack_ms", "fade times must be >= 0", permitted=">= 0")
        if self.resample_ratio <= 0:
            raise ValidationError("resample_ratio", "resample ratio must be > 0", permitted="> 0")

    def copy(self) -> "PlaybackParams":
        return replace(self)


@dataclass
class PlaybackEvent:
    onset_seconds: float
    segment_id: int
    params: PlaybackParams
    rendered_seconds: float = 0.0
    node_id: int | None = None


def resample_linear(samples: np.ndarray, ratio: float) -> np.ndarray:
    """Playback-speed change: length scales by 1/ratio, frequencies by ratio."""
    if ratio <= 0:
        raise CorpusAgentError("resample ratio must be > 0")
    x = np.asarray(samples, dtype=np.float64)
    if ratio == 1.0:
        return x.copy()
    out_len = max(1, int(round(len(x) / ratio)))
    positions = np.minimum(np.arange(out_len) * ratio, len(x) - 1)
    return np.interp(positions, np.arange(len(x)), x)


def pitch_shift_granular(samples: np.ndarray, cents: float, sample_rate: int) -> np.ndarray:
    """Constant-duration pitch shift: resample, then stretch back with
    overlap-added grains.

    Grain starts are refined by waveform-similarity search against the
    natural continuation of the previous grain; without that alignment the
    overlap-add comb drags tones toward multiples of the grain rate instead
    of the requested interval.
    """
    x = np.asarray(samples, dtype=np.float64)
    if cents == 0.0 or len(x) < 4:
        return x.copy()
    ratio = 2.0 ** (cents / 1200.0)
    pitched = resample_linear(x, ratio)  # correct pitch, wrong length
    return _ola_stretch(pitched, len(x), sample_rate)


def _ola_stretch(source: np.ndarray, n_out: int, sample_rate: int) -> np.ndarray:
    grain = max(int(round(GRAIN_SECONDS * sample_rate)), 64)
    hop = max(int(round(GRAIN_HOP_SECONDS * sample_rate)), grain // 8)
    search = hop // 2
    overlap = hop
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(grain) / grain)

    out = np.zeros(n_out)
    norm = np.zeros(n_out)
    read_max = max(len(source) - grain, 0)
    ratio = len(source) / n_out
    prev_read = None
    for start in range(0, n_out, hop):
        nominal = min(int(round(start * ratio)), read_max)
        read = nominal
        if prev_read is not None:
            ref_at = prev_read + hop
            ref = source[ref_at : ref_at + overlap]
            lo = max(0, nominal - search)
            hi = min(read_max, nominal + search)
            if len(ref) == overlap and hi > lo and hi + overlap <= len(source):
                scores = np.correlate(source[lo : hi + overlap], ref, mode="valid")
                read = lo + int(np.argmax(scores))
        g = source[read : read + grain]
        n = min(len(g), n_out - start)
        out[start : start + n] += g[:n] * window[:n]
        norm[start : start + n] += window[:n]
        prev_read = read
    live = norm > 1e-6
    out[live] /= norm[live]
    return out


def transform(audio: AudioBuffer, params: PlaybackParams) -> AudioBuffer:
    """Apply reverse, resampling and pitch shift in that order."""
    samples = audio.samples
    if params.reverse:
        samples = samples[::-1]
    if params.resample_ratio != 1.0:
        samples = resample_linear(samples, params.resample_ratio)
    if params.pitch_shift_cents != 0.0:
        samples = pitch_shift_granular(samples, params.pitch_shift_cents, audio.sample_rate)
    return AudioBuffer(samples=np.ascontiguousarray(samples), sample_rate=audio.sample_rate,
                       channels=audio.channels)


def envelope(audio: AudioBuffer, attack_ms: float, release_ms: float) -> AudioBuffer:
    """Linear fade-in/fade-out; fades shrink proportionally if they overlap."""
    x = audio.samples.copy()
    n = len(x)
    sr = audio.sample_rate
    attack = int(round(attack_ms / 1000.0 * sr))
    release = int(round(release_ms / 1000.0 * sr))
    if attack + release > n and attack + release > 0:
        scale = n / (attack + release)
        attack = int(attack * scale)
        release = n - attack
    if attack > 1:
        x[:attack] *= np.linspace(0.0, 1.0, attack)
    elif attack == 1:
        x[0] = 0.0
    if release > 1:
        x[n - release :] *= np.linspace(1.0, 0.0, release)
    elif release == 1:
        x[-1] = 0.0
    return AudioBuffer(samples=x, sample_rate=sr, channels=audio.channels)


def adjusted_tempo(tempo: float, resample_ratio: float, tempo_lock: bool) -> float:
    """Effective seconds between node triggers under resampling."""
    if tempo <= 0:
        raise CorpusAgentError("tempo must be > 0")
    interval = 60.0 / tempo
    if tempo_lock:
        return interval
    return interval / resample_ratio


def render_segment(audio: AudioBuffer, params: PlaybackParams) -> AudioBuffer:
    """Transform plus envelope: the samples a trigger actually emits."""
    return envelope(transform(audio, params), params.attack_ms, params.release_ms)


@dataclass
class TriggerState:
    """Per-mode bookkeeping for the launch gate."""

    next_tick: float = 0.0
    playing_until: float = float("-inf")
    last_target: np.ndarray | None = None
    last_nearest: int | None = None
    fired_once: bool = False


@dataclass
class TargetActivity:
    """What the gate may look at: the live target and its nearest neighbor."""

    target: np.ndarray | None = None
    nearest_id: int | None = None


def trigger_gate(
    mode: str,
    state: TriggerState,
    now: float,
    *,
    interval: float = 0.5,
    activity: TargetActivity | None = None,
) -> bool:
    """Decide whether a new segment launches at this instant.

    beat opens exactly on tempo ticks; loop and cont open when the current
    playback ends (their difference is what the caller launches); bow opens
    while the target is moving; fence opens when the nearest-segment identity
    changes.
    """
    if mode in RESERVED_TRIGGER_MODES:
        raise ValidationError("trigger_mode", f"trigger mode {mode!r} is reserved and not implemented",
                              permitted=", ".join(TRIGGER_MODES))
    if mode not in TRIGGER_MODES:
        raise ValidationError("trigger_mode", f"unknown trigger mode {mode!r}",
                              permitted=", ".join(TRIGGER_MODES))
    activity = activity or TargetActivity()

    if mode == "beat":
        if now + 1e-9 >= state.next_tick:
            state.next_tick = state.next_tick + interval if state.fired_once else now + interval
            state.fired_once = True
            return True
        return False

    if mode in ("loop", "cont"):
        if now + 1e-9 >= state.playing_until:
            state.fired_once = True
            return True
        return False

    if mode == "bow":
        target = activity.target
        if target is None:
            return False
        previous = state.last_target
        state.last_target = np.array(target, dtype=np.float64)
        if previous is None:
            state.fired_once = True
            return True
        moving = float(np.max(np.abs(state.last_target - previous))) > BOW_MOTION_EPS
        if moving:
            state.fired_once = True
        return moving

    # fence: nearest-segment identity change
    nearest = activity.nearest_id
    if nearest is None:
        return False
    changed = nearest != state.last_nearest
    first = state.last_nearest is None
    state.last_nearest = nearest
    if first or changed:
        state.fired_once = True
        return True
    return False


def mix_events(
    events: list[tuple[float, np.ndarray]],
    duration_seconds: float,
    sample_rate: int,
) -> tuple[AudioBuffer, bool]:
    """Sample-accurate mix of rendered snippets at their onsets.

    Tails past the requested duration are kept. Output is peak-normalized only
    when the mix would clip; the flag reports whether that happened.
    """
    if duration_seconds <= 0:
        raise CorpusAgentError("render duration must be > 0")
    length = int(round(duration_seconds * sample_rate))
    if events:
        length = max(length, max(int(round(t * sample_rate)) + len(s) for t, s in events))
    out = np.zeros(max(length, 1))
    for onset, samples in events:
        start = int(round(onset * sample_rate))
        out[start : start + len(samples)] += samples
    peak = float(np.max(np.abs(out))) if len(out) else 0.0
    normalized = False
    if peak > 1.0:
        out /= peak
        normalized = True
    return AudioBuffer(samples=out, sample_rate=sample_rate), normalized
