"""Playback transforms, envelopes, tempo arithmetic, trigger gating."""

import numpy as np
import pytest

from corpus_agent.corpus import AudioBuffer
from corpus_agent.errors import CorpusAgentError, ValidationError
from corpus_agent.synth import (
    PlaybackParams,
    TargetActivity,
    TriggerState,
    adjusted_tempo,
    envelope,
    mix_events,
    pitch_shift_granular,
    resample_linear,
    transform,
    trigger_gate,
)

SR = 44100


def sine(freq, seconds=1.0, amp=0.8):
    t = np.arange(int(seconds * SR)) / SR
    return amp * np.sin(2 * np.pi * freq * t)


def fft_peak_hz(x):
    spectrum = np.abs(np.fft.rfft(x * np.hanning(len(x))))
    return np.argmax(spectrum) * SR / len(x)


# -------------------------------------------------------------- transform


def test_resample_halves_duration_and_doubles_pitch():
    buf = AudioBuffer(samples=sine(440.0, 1.0), sample_rate=SR)
    out = transform(buf, PlaybackParams(resample_ratio=2.0))
    assert abs(len(out.samples) - SR // 2) <= 1
    assert abs(fft_peak_hz(out.samples) - 880.0) <= 10.0


def test_resample_length_contract():
    rng = np.random.default_rng(0)
    for ratio in (0.25, 0.5, 0.77, 1.5, 2.0, 3.01):
        n = int(rng.integers(1000, 50_000))
        out = resample_linear(rng.uniform(-1, 1, n), ratio)
        assert abs(len(out) - round(n / ratio)) <= 1


def test_pitch_shift_octave_up():
    buf = AudioBuffer(samples=sine(440.0, 1.0), sample_rate=SR)
    out = transform(buf, PlaybackParams(pitch_shift_cents=1200.0))
    assert abs(len(out.samples) - SR) <= 512  # one hop
    assert abs(fft_peak_hz(out.samples) - 880.0) <= 15.0


def test_pitch_shift_octave_down():
    buf = AudioBuffer(samples=sine(440.0, 1.0), sample_rate=SR)
    out = transform(buf, PlaybackParams(pitch_shift_cents=-1200.0))
    assert abs(len(out.samples) - SR) <= 512
    assert abs(fft_peak_hz(out.samples) - 220.0) <= 15.0


def test_pitch_shift_fifth():
    buf = AudioBuffer(samples=sine(440.0, 1.0), sample_rate=SR)
    out = transform(buf, PlaybackParams(pitch_shift_cents=700.0))
    assert abs(fft_peak_hz(out.samples) - 440.0 * 2 ** (700 / 1200)) <= 15.0


def test_reverse_is_involution():
    rng = np.random.default_rng(1)
    buf = AudioBuffer(samples=rng.uniform(-1, 1, 5000), sample_rate=SR)
    once = transform(buf, PlaybackParams(reverse=True))
    twice = transform(once, PlaybackParams(reverse=True))
    np.testing.assert_array_equal(twice.samples, buf.samples)
    assert not np.array_equal(once.samples, buf.samples)


def test_transform_order_reverse_then_resample():
    ramp = AudioBuffer(samples=np.linspace(0, 1, 1000), sample_rate=SR)
    out = transform(ramp, PlaybackParams(reverse=True, resample_ratio=2.0))
    assert out.samples[0] == pytest.approx(1.0)  # reversed before shortening


def test_invalid_ratio_rejected():
    with pytest.raises((CorpusAgentError, ValidationError)):
        PlaybackParams(resample_ratio=0.0)
    with pytest.raises(CorpusAgentError):
        resample_linear(np.ones(10), -1.0)


def test_transform_fuzz_no_nan():
    rng = np.random.default_rng(2)
    for _ in range(30):
        n = int(rng.integers(4, 20_000))
        buf = AudioBuffer(samples=rng.uniform(-1, 1, n), sample_rate=SR)
        params = PlaybackParams(
            reverse=bool(rng.integers(2)),
            resample_ratio=float(rng.uniform(0.2, 4.0)),
            pitch_shift_cents=float(rng.uniform(-2400, 2400)),
        )
        out = transform(buf, params)
        assert np.all(np.isfinite(out.samples))


# --------------------------------------------------------------- envelope


def test_envelope_zero_fades_identity():
    rng = np.random.default_rng(3)
    buf = AudioBuffer(samples=rng.uniform(-1, 1, 1000), sample_rate=SR)
    out = envelope(buf, 0.0, 0.0)
    np.testing.assert_array_equal(out.samples, buf.samples)


def test_envelope_ramp_endpoints():
    buf = AudioBuffer(samples=np.ones(SR), sample_rate=SR)
    out = envelope(buf, 10.0, 0.0)
    assert out.samples[0] < 0.01
    at_10ms = int(0.010 * SR)
    assert out.samples[at_10ms] == pytest.approx(1.0, abs=1e-6)
    assert out.samples[-1] == 1.0


def test_envelope_release_tail():
    buf = AudioBuffer(samples=np.ones(SR), sample_rate=SR)
    out = envelope(buf, 0.0, 20.0)
    assert out.samples[-1] == pytest.approx(0.0, abs=1e-9)
    assert out.samples[0] == 1.0


def test_envelope_never_increases_energy():
    rng = np.random.default_rng(4)
    for _ in range(10):
        buf = AudioBuffer(samples=rng.uniform(-1, 1, int(rng.integers(10, 5000))),
                          sample_rate=SR)
        out = envelope(buf, float(rng.uniform(0, 100)), float(rng.uniform(0, 100)))
        assert np.sum(out.samples**2) <= np.sum(buf.samples**2) + 1e-12


def test_envelope_overlong_fades_rescaled():
    buf = AudioBuffer(samples=np.ones(100), sample_rate=SR)  # ~2.3 ms
    out = envelope(buf, 1000.0, 1000.0)
    assert len(out.samples) == 100
    assert out.samples[0] < 0.05 and out.samples[-1] < 0.05
    assert np.max(out.samples) > 0.8  # still reaches near unity mid-way


# ----------------------------------------------------------------- tempo


def test_adjusted_tempo_basics():
    assert adjusted_tempo(120.0, 1.0, False) == pytest.approx(0.5)
    assert adjusted_tempo(120.0, 2.0, False) == pytest.approx(0.25)
    assert adjusted_tempo(120.0, 2.0, True) == pytest.approx(0.5)
    with pytest.raises(CorpusAgentError):
        adjusted_tempo(0.0, 1.0, False)


# ------------------------------------------------------------------ gates


def test_beat_gate_tick_grid():
    state = TriggerState()
    opened = []
    t = 0.0
    while t < 2.0:
        if trigger_gate("beat", state, t, interval=0.5):
            opened.append(round(t, 4))
        t += 512 / SR
    assert opened == [0.0, pytest.approx(0.5004, abs=0.012),
                      pytest.approx(1.0008, abs=0.012), pytest.approx(1.5, abs=0.012)]
    assert len(opened) == 4


def test_fence_stationary_never_reopens():
    state = TriggerState()
    activity = TargetActivity(nearest_id=7)
    assert trigger_gate("fence", state, 0.0, activity=activity)
    for i in range(20):
        assert not trigger_gate("fence", state, 0.1 * i, activity=activity)
    assert trigger_gate("fence", state, 3.0, activity=TargetActivity(nearest_id=8))


def test_bow_moving_target_opens_every_frame():
    state = TriggerState()
    rng = np.random.default_rng(5)
    pos = rng.uniform(-1, 1, 35)
    assert trigger_gate("bow", state, 0.0, activity=TargetActivity(target=pos))
    for i in range(10):
        pos = pos + 0.01
        assert trigger_gate("bow", state, 0.1 * i, activity=TargetActivity(target=pos))
    assert not trigger_gate("bow", state, 2.0, activity=TargetActivity(target=pos))


def test_loop_cont_gate_on_playback_end():
    state = TriggerState()
    assert trigger_gate("cont", state, 0.0)  # nothing playing yet
    state.playing_until = 1.0
    assert not trigger_gate("cont", state, 0.5)
    assert trigger_gate("cont", state, 1.0)
    assert trigger_gate("loop", state, 2.0)


def test_reserved_modes_rejected():
    for mode in ("beatmove", "loopmove"):
        with pytest.raises(ValidationError):
            trigger_gate(mode, TriggerState(), 0.0)
    with pytest.raises(ValidationError):
        trigger_gate("stomp", TriggerState(), 0.0)


# -------------------------------------------------------------------- mix


def test_mix_single_event():
    snippet = sine(440.0, 0.1)
    audio, normalized = mix_events([(0.5, snippet)], 1.0, SR)
    assert not normalized
    start = int(0.5 * SR)
    np.testing.assert_array_equal(audio.samples[start : start + len(snippet)], snippet)
    assert np.all(audio.samples[:start] == 0.0)


def test_mix_overlap_sums_and_normalizes():
    loud = 0.9 * np.ones(1000)
    audio, normalized = mix_events([(0.0, loud), (0.0, loud)], 0.1, SR)
    assert normalized
    assert np.max(np.abs(audio.samples)) <= 1.0


def test_mix_zero_duration_rejected():
    with pytest.raises(CorpusAgentError):
        mix_events([], 0.0, SR)


def test_params_validation():
    with pytest.raises(ValidationError):
        PlaybackParams(tempo=-5.0)
    with pytest.raises(ValidationError):
        PlaybackParams(p_forward=1.5)
    with pytest.raises(ValidationError):
        PlaybackParams(attack_ms=-1.0)
