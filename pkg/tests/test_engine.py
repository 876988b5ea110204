"""Block-based engine: determinism, control latency, event delivery."""

import numpy as np
import pytest

from corpus_agent import features
from corpus_agent.corpus import AudioBuffer, load_wav
from corpus_agent.engine import BLOCK, Engine, EngineEvent, Subscription, render_session
from corpus_agent.errors import CorpusAgentError
from corpus_agent.synth import PlaybackParams, PlaybackEvent, render_segment

SR = features.SAMPLE_RATE


def run_trace(model, seed, duration=4.0, **kwargs):
    engine = Engine(model, seed=seed, **kwargs)
    audio = engine.run_seconds(duration)
    return audio, engine


# ----------------------------------------------------------- determinism


def test_identical_seed_identical_output(mini_model):
    audio_a, eng_a = run_trace(mini_model, seed=7)
    audio_b, eng_b = run_trace(mini_model, seed=7)
    np.testing.assert_array_equal(audio_a.samples, audio_b.samples)
    assert [e.as_dict() for e in eng_a.node_trace] == [e.as_dict() for e in eng_b.node_trace]


def test_different_seed_differs(mini_model):
    audio_a, _ = run_trace(mini_model, seed=1, duration=6.0)
    audio_b, _ = run_trace(mini_model, seed=2, duration=6.0)
    assert not np.array_equal(audio_a.samples, audio_b.samples)


def test_congruence_one_spine_order(mini_model):
    params = PlaybackParams(p_forward=1.0, tempo=120.0)
    _, engine = run_trace(mini_model, seed=0, duration=6.0, params=params)
    n = mini_model.num_segments
    nodes = [e.node for e in engine.node_trace]
    assert len(nodes) >= n + 2
    assert nodes[:n] == mini_model.node_sequence
    assert all(node == mini_model.node_sequence[-1] for node in nodes[n:])


def test_event_timestamps_on_tempo_grid(mini_model):
    _, engine = run_trace(mini_model, seed=0, duration=3.0,
                          params=PlaybackParams(tempo=120.0))
    times = [e.timestamp for e in engine.node_trace]
    for i, t in enumerate(times):
        assert t == pytest.approx(i * 0.5, abs=BLOCK / SR + 1e-9)


# -------------------------------------------------------------- controls


def test_control_applied_within_one_block(mini_model):
    engine = Engine(mini_model, seed=0)
    engine.render_block()
    engine.enqueue_control(lambda e: setattr(e.state.params, "p_forward", 0.9))
    assert engine.state.params.p_forward != 0.9
    engine.render_block()  # boundary: queued control must now be visible
    assert engine.state.params.p_forward == 0.9


def test_mute_and_stop(mini_model):
    engine = Engine(mini_model, seed=0)
    engine.muted = True
    out = np.concatenate([engine.render_block() for _ in range(50)])
    assert np.all(out == 0.0)
    engine2 = Engine(mini_model, seed=0, running=False)
    out2 = np.concatenate([engine2.render_block() for _ in range(50)])
    assert np.all(out2 == 0.0)
    assert engine2.node_trace == []


def test_restart_resets_walk_and_clock(mini_model):
    engine = Engine(mini_model, seed=5)
    engine.run_seconds(2.0)
    assert engine.node_trace
    engine.restart()
    assert engine.state.current_node is None
    assert engine.state.scene_remaining == 60.0
    assert engine.state.listen_stats.count == 0


def test_one_shot_truncates_previous_voice(mini_model):
    engine = Engine(mini_model, seed=0,
                    params=PlaybackParams(one_shot=True, attack_ms=0.0, release_ms=0.0))
    engine._schedule_voice(np.ones(10_000))
    engine._schedule_voice(np.full(100, 0.25))
    release = int(0.005 * SR)  # forced 5 ms release
    assert np.all(engine._tail[release:] == 0.0)
    assert engine._tail[0] == pytest.approx(1.25)  # fading old voice + new one


# ---------------------------------------------------------------- events


def test_scene_boundary_emitted(mini_model):
    engine = Engine(mini_model, seed=0)
    sub = engine.subscribe(["scene_boundary"])
    engine.state.scene_remaining = 0.1
    engine.run_seconds(0.5)
    events = sub.drain()
    assert len(events) == 1
    assert events[0].kind == "scene_boundary"


def test_node_events_broadcast_in_order(mini_model):
    engine = Engine(mini_model, seed=0)
    sub_a = engine.subscribe(["node_played"])
    sub_b = engine.subscribe(["node_played"])
    engine.run_seconds(3.0)
    a = [e.payload["segment"] for e in sub_a.drain()]
    b = [e.payload["segment"] for e in sub_b.drain()]
    assert a == b
    assert len(a) == len(engine.node_trace)
    times = [e.t for e in engine.subscribe(["node_played"]).drain()] or [0]
    assert times == sorted(times)


def test_viz_rate_limited(mini_model):
    engine = Engine(mini_model, seed=0)
    sub = engine.subscribe(["viz_frame"], maxsize=10_000)
    engine.run_seconds(2.0)
    viz = sub.drain()
    assert 0 < len(viz) <= 2.0 * 30 + 1  # at most 30 Hz
    payload = viz[0].payload
    assert len(payload["bark"]) == 25
    assert len(payload["grid"]) == mini_model.som.rows


def test_subscription_filters_kinds(mini_model):
    engine = Engine(mini_model, seed=0)
    sub = engine.subscribe(["viz_frame"])
    engine.run_seconds(1.0)
    assert all(e.kind == "viz_frame" for e in sub.drain())


def test_drop_policy_viz_first_node_never():
    sub = Subscription(["node_played", "viz_frame"], maxsize=3)

    def ev(kind, i):
        return EngineEvent(kind=kind, t=float(i), payload={"i": i})

    sub.publish(ev("viz_frame", 0))
    sub.publish(ev("viz_frame", 1))
    sub.publish(ev("node_played", 2))
    sub.publish(ev("node_played", 3))  # evicts a viz
    sub.publish(ev("node_played", 4))  # evicts the other viz
    sub.publish(ev("node_played", 5))  # buffer all-critical: forced append
    sub.publish(ev("viz_frame", 6))    # no viz to evict: incoming viz dropped
    kinds = [e.kind for e in sub.drain()]
    assert kinds == ["node_played"] * 4
    assert sub.dropped_viz == 3


# -------------------------------------------------------------- reactive


def test_reactive_live_input_self_retrieval(mini_model):
    target = 4
    seg = mini_model.segments[target]
    src = load_wav(mini_model.manifest.entries[seg.source_index].path)
    chunk = src.samples[seg.start_sample : seg.end_sample]
    live = AudioBuffer(samples=np.tile(chunk, 3), sample_rate=SR)
    engine = Engine(mini_model, mode="reactive", trigger_mode="cont", seed=0,
                    live_input=live)
    engine.run_seconds(live.duration_seconds)
    assert engine.node_trace
    space = mini_model.mosaic_matrix()
    final = engine.node_trace[-1].segment
    assert final == target or np.allclose(space[final][:31], space[target][:31], atol=1e-3)


def test_reactive_without_input_stays_silent(mini_model):
    engine = Engine(mini_model, mode="reactive", trigger_mode="cont", seed=0)
    audio = engine.run_seconds(1.0)
    assert engine.node_trace == []
    assert np.all(audio.samples == 0.0)


# --------------------------------------------------------- render_session


def test_render_session_single_event_plan(mini_model):
    params = PlaybackParams(attack_ms=5.0, release_ms=5.0)
    plan = [PlaybackEvent(onset_seconds=0.25, segment_id=2, params=params)]
    audio, events, log = render_session(mini_model, plan=plan, duration=2.0)
    engine = Engine(mini_model, seed=0)
    expected = render_segment(engine.segment_audio(2), params).samples
    start = int(0.25 * SR)
    np.testing.assert_allclose(audio.samples[start : start + len(expected)], expected,
                               atol=1e-12)
    assert np.all(audio.samples[:start] == 0.0)
    assert np.all(audio.samples[start + len(expected) :] == 0.0)
    assert events[0].rendered_seconds == pytest.approx(len(expected) / SR)


def test_render_session_agent_loop_matches_engine(mini_model):
    audio, trace, _ = render_session(mini_model, duration=3.0, seed=9)
    _, engine = run_trace(mini_model, seed=9, duration=3.0)
    assert [e.segment_id for e in trace] == [e.segment for e in engine.node_trace]


def test_render_session_requires_plan_or_duration(mini_model):
    with pytest.raises(CorpusAgentError):
        render_session(mini_model)


def test_zero_duration_rejected(mini_model):
    with pytest.raises(CorpusAgentError):
        Engine(mini_model, seed=0).run_seconds(0.0)


def test_output_always_finite_fuzz(mini_model):
    rng = np.random.default_rng(0)
    for _ in range(5):
        params = PlaybackParams(
            tempo=float(rng.uniform(30, 600)),
            p_forward=float(rng.uniform(0, 1)),
            attack_ms=float(rng.uniform(0, 300)),
            release_ms=float(rng.uniform(0, 300)),
            reverse=bool(rng.integers(2)),
            resample_ratio=float(rng.uniform(0.25, 4.0)),
            pitch_shift_cents=float(rng.uniform(-2400, 2400)),
            one_shot=bool(rng.integers(2)),
            tempo_lock=bool(rng.integers(2)),
        )
        audio, _ = run_trace(mini_model, seed=int(rng.integers(100)), duration=2.0,
                             params=params)
        assert np.all(np.isfinite(audio.samples))
        assert np.max(np.abs(audio.samples)) <= 1.0 + 1e-9
