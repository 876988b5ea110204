"""Block-based render loop: the live engine and its offline twin.

Audio advances in 512-sample blocks. Control changes enter through an
ordered queue and are applied only at block boundaries, so the render path
never sees a half-applied parameter set. The offline clock steps blocks as
fast as possible and is bit-reproducible for a given (model, params, seed);
the device clock paces the same loop against wall time.

The engine listens to its own mixed output (macat self-listening) through a
rolling one-window buffer, aligned so each block yields exactly one analysis
frame once the window has filled.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import agent as agent_mod
from . import features, mosaic, synth
from .agent import AgentState, NodeEvent, SCENE_SECONDS, clusters_of
from .corpus import AudioBuffer, load_wav
from .errors import CorpusAgentError, ValidationError
from .features import HOP, SAMPLE_RATE, WINDOW
from .model import TrainedModel
from .mosaic import FeatureWeights
from .oracle import WalkState
from .som import node_grid_values
from .synth import (
    ONE_SHOT_RELEASE_MS,
    PlaybackEvent,
    PlaybackParams,
    TargetActivity,
    TriggerState,
    adjusted_tempo,
    render_segment,
    trigger_gate,
)

BLOCK = HOP  # 512 samples per render block
BLOCK_SECONDS = BLOCK / SAMPLE_RATE

EVENT_KINDS = ("node_played", "scene_boundary", "state_snapshot", "viz_frame", "error")
CRITICAL_KINDS = {"node_played", "scene_boundary", "state_snapshot", "error"}

VIZ_MAX_HZ = 30.0
_VIZ_BLOCK_STRIDE = int(np.ceil((SAMPLE_RATE / BLOCK) / VIZ_MAX_HZ))


@dataclass
class EngineEvent:
    kind: str
    t: float
    payload: dict

    def as_dict(self) -> dict:
        return {"v": 1, "event": self.kind, "t": self.t, "payload": self.payload}


class Subscription:
    """Bounded per-subscriber buffer; viz frames are dropped first, critical
    events never."""

    def __init__(self, kinds, maxsize: int = 256):
        unknown = set(kinds) - set(EVENT_KINDS)
        if unknown:
            raise ValidationError("kinds", f"unknown event kinds: {sorted(unknown)}",
                                  permitted=", ".join(EVENT_KINDS))
        self.kinds = set(kinds)
        self.maxsize = maxsize
        self._buffer: deque[EngineEvent] = deque()
        self._lock = threading.Lock()
        self.dropped_viz = 0
        self.closed = False

    def publish(self, event: EngineEvent) -> None:
        if self.closed or event.kind not in self.kinds:
            return
        with self._lock:
            if len(self._buffer) >= self.maxsize:
                for i, queued in enumerate(self._buffer):
                    if queued.kind == "viz_frame":
                        del self._buffer[i]
                        self.dropped_viz += 1
                        break
                else:
                    if event.kind == "viz_frame":
                        self.dropped_viz += 1
                        return
            self._buffer.append(event)

    def drain(self) -> list[EngineEvent]:
        with self._lock:
            out = list(self._buffer)
            self._buffer.clear()
        return out

    def close(self) -> None:
        self.closed = True


class Engine:
    """One agent bound to one model, rendered block by block."""

    def __init__(
        self,
        model: TrainedModel,
        *,
        mode: str = "macat",
        params: PlaybackParams | None = None,
        weights: FeatureWeights | None = None,
        trigger_mode: str = "beat",
        seed: int = 0,
        live_input: AudioBuffer | None = None,
        running: bool = True,
    ):
        self.model = model
        self.seed = seed
        self.state = AgentState.fresh(mode, seed, params=params, weights=weights)
        self.state.trigger_mode = trigger_mode
        self.clusters = clusters_of(model)
        self.trigger = TriggerState()
        self.running = running
        self.muted = False
        self.viz_dim = 0

        self._controls: deque = deque()
        self._control_lock = threading.Lock()
        self._subscriptions: list[Subscription] = []
        self._blocks = 0
        self._tail = np.zeros(0)
        self._listen_window = np.zeros(WINDOW)
        self._listen_filled = 0
        self._live_window = np.zeros(WINDOW)
        self._live_filled = 0
        self._live_input = live_input
        self._live_pos = 0
        self._live_target: np.ndarray | None = None
        self._loop_target: np.ndarray | None = None
        self._source_cache: dict[int, AudioBuffer] = {}
        self.node_trace: list[NodeEvent] = []
        self.playback_trace: list[PlaybackEvent] = []
        self.render_log: list[str] = []

    # ------------------------------------------------------------------ time

    @property
    def now(self) -> float:
        return self._blocks * BLOCK_SECONDS

    # -------------------------------------------------------------- controls

    def enqueue_control(self, apply_fn) -> None:
        """Queue a state mutation; it runs at the next block boundary."""
        with self._control_lock:
            self._controls.append(apply_fn)

    def apply_pending_controls(self) -> None:
        """For host loops idling while stopped: controls must still land."""
        self._apply_controls()

    def _apply_controls(self) -> None:
        while True:
            with self._control_lock:
                if not self._controls:
                    return
                fn = self._controls.popleft()
            try:
                fn(self)
            except CorpusAgentError as exc:
                self._emit("error", {"code": exc.code, "message": str(exc)})

    # ---------------------------------------------------------------- events

    def subscribe(self, kinds, maxsize: int = 256) -> Subscription:
        sub = Subscription(kinds, maxsize=maxsize)
        self._subscriptions.append(sub)
        return sub

    def _emit(self, kind: str, payload: dict) -> None:
        event = EngineEvent(kind=kind, t=self.now, payload=payload)
        for sub in self._subscriptions:
            sub.publish(event)

    # ----------------------------------------------------------------- audio

    def _source_audio(self, source_index: int) -> AudioBuffer:
        cached = self._source_cache.get(source_index)
        if cached is None:
            entry = self.model.manifest.entries[source_index]
            path = self.model.resolve_audio_path(entry)
            cached = load_wav(path, expect_rate=SAMPLE_RATE, resample=True)
            self._source_cache[source_index] = cached
        return cached

    def segment_audio(self, segment_id: int) -> AudioBuffer:
        seg = self.model.segments[segment_id]
        source = self._source_audio(seg.source_index)
        chunk = source.samples[seg.start_sample : seg.end_sample]
        return AudioBuffer(samples=chunk.copy(), sample_rate=SAMPLE_RATE)

    def _schedule_voice(self, samples: np.ndarray) -> None:
        if self.state.params.one_shot and len(self._tail):
            release = int(ONE_SHOT_RELEASE_MS / 1000.0 * SAMPLE_RATE)
            cut = min(release, len(self._tail))
            if cut > 1:
                self._tail[:cut] *= np.linspace(1.0, 0.0, cut)
            self._tail[cut:] = 0.0
        if len(samples) > len(self._tail):
            self._tail = np.concatenate([self._tail, np.zeros(len(samples) - len(self._tail))])
        self._tail[: len(samples)] += samples

    # ------------------------------------------------------------- the loop

    def _emit_node_event(self, event: NodeEvent) -> float:
        """Render and schedule the event's segment; returns rendered seconds."""
        rendered = render_segment(self.segment_audio(event.segment), self.state.params)
        self._schedule_voice(rendered.samples)
        rendered_seconds = rendered.duration_seconds
        self.trigger.playing_until = self.now + rendered_seconds
        self.node_trace.append(event)
        self.playback_trace.append(
            PlaybackEvent(
                onset_seconds=event.timestamp,
                segment_id=event.segment,
                params=self.state.params.copy(),
                rendered_seconds=rendered_seconds,
                node_id=event.node,
            )
        )
        self._emit("node_played", event.as_dict())
        return rendered_seconds

    def _generative_step(self) -> None:
        interval = adjusted_tempo(
            self.state.params.tempo,
            self.state.params.resample_ratio,
            self.state.params.tempo_lock,
        )
        if not trigger_gate("beat", self.trigger, self.now, interval=interval):
            return
        if self.state.mode == "macat":
            _, event = agent_mod.macat_step(self.model, self.state, self.now, self.clusters)
        else:
            _, event = agent_mod.proactive_step(self.model, self.state, self.now)
        self._emit_node_event(event)

    def _live_frame(self) -> np.ndarray | None:
        """Advance the live-input window by one block; a frame once filled."""
        if self._live_input is None:
            return None
        chunk = self._live_input.samples[self._live_pos : self._live_pos + BLOCK]
        self._live_pos += BLOCK
        if len(chunk) == 0:
            return None
        block = np.zeros(BLOCK)
        block[: len(chunk)] = chunk
        self._live_window = np.concatenate([self._live_window[BLOCK:], block])
        self._live_filled += BLOCK
        if self._live_filled < WINDOW:
            return None
        return self._live_window

    def _reactive_step(self) -> None:
        frame = self._live_frame()
        if frame is not None:
            rows = features.analyze_frames(frame[None, :])
            self.state.listen_stats.update(rows[0])
        if self.state.listen_stats.count < 1:
            return

        mode = self.state.trigger_mode
        activity = TargetActivity()
        target = mosaic.target_from_stats(self.model, self.state.listen_stats,
                                          timestamp=self.now)
        if mode == "bow":
            activity.target = target.vector
        elif mode == "fence":
            activity.nearest_id = mosaic.knn_query(self.model, target, self.state.weights, k=1)[0]

        interval = adjusted_tempo(
            self.state.params.tempo,
            self.state.params.resample_ratio,
            self.state.params.tempo_lock,
        )
        if not trigger_gate(mode, self.trigger, self.now, interval=interval, activity=activity):
            return

        if (
            mode == "loop"
            and self.state.playing_segment is not None
            and self._loop_target is not None
            and float(np.max(np.abs(target.vector - self._loop_target))) <= synth.BOW_MOTION_EPS
        ):
            segment_id = self.state.playing_segment  # target unchanged: retrigger
        else:
            segment_id = mosaic.knn_query(self.model, target, self.state.weights, k=1)[0]
        self._loop_target = target.vector.copy()

        node = self.model.segments[segment_id].cluster_node
        event = agent_mod._event_for_segment(self.model, self.state, node, segment_id, self.now)
        self._emit_node_event(event)

    def render_block(self) -> np.ndarray:
        """Advance one block: apply controls, maybe trigger, emit audio."""
        self._apply_controls()

        if self.running:
            _, boundaries = agent_mod.scene_clock(self.state, BLOCK_SECONDS)
            for _ in range(boundaries):
                self._emit("scene_boundary", {"scene_seconds": SCENE_SECONDS})
            try:
                if self.state.mode in ("macat", "proactive"):
                    self._generative_step()
                else:
                    self._reactive_step()
            except CorpusAgentError as exc:
                self._emit("error", {"code": exc.code, "message": str(exc)})

        if len(self._tail) >= BLOCK:
            block = self._tail[:BLOCK].copy()
            self._tail = self._tail[BLOCK:]
        else:
            block = np.zeros(BLOCK)
            block[: len(self._tail)] = self._tail
            self._tail = np.zeros(0)

        # self-listening runs on the engine's own output, pre-master
        if self.state.mode == "macat" and self.running:
            self._listen_window = np.concatenate([self._listen_window[BLOCK:], block])
            self._listen_filled += BLOCK
            if self._listen_filled >= WINDOW:
                rows = features.analyze_frames(self._listen_window[None, :])
                self.state.listen_stats.update(rows[0])

        if self._blocks % _VIZ_BLOCK_STRIDE == 0:
            self._emit_viz(block)

        self._blocks += 1
        return np.zeros(BLOCK) if self.muted else block

    def _emit_viz(self, block: np.ndarray) -> None:
        window = self._listen_window if self.state.mode == "macat" else self._live_window
        spectrum = np.abs(np.fft.rfft(window * features._WINDOW_COEFF))
        grid = node_grid_values(self.model.som, self.viz_dim)
        self._emit(
            "viz_frame",
            {
                "bark": [float(v) for v in features.bark_bands(spectrum)],
                "grid": [[float(v) for v in row] for row in grid],
                "grid_dim": self.viz_dim,
                "rows": self.model.som.rows,
                "cols": self.model.som.cols,
                "current_node": self.state.current_node,
                "previous_node": self.state.previous_node,
                "segment": self.state.playing_segment,
            },
        )

    def snapshot(self) -> dict:
        p = self.state.params
        return {
            "mode": self.state.mode,
            "running": self.running,
            "muted": self.muted,
            "tempo": p.tempo,
            "congruence": p.p_forward,
            "attack_ms": p.attack_ms,
            "release_ms": p.release_ms,
            "reverse": p.reverse,
            "resample_ratio": p.resample_ratio,
            "pitch_shift_cents": p.pitch_shift_cents,
            "one_shot": p.one_shot,
            "tempo_lock": p.tempo_lock,
            "trigger_mode": self.state.trigger_mode,
            "weights": [float(w) for w in self.state.weights.values],
            "current_node": self.state.current_node,
            "previous_node": self.state.previous_node,
            "playing_segment": self.state.playing_segment,
            "scene_remaining": self.state.scene_remaining,
            "num_segments": self.model.num_segments,
            "som_rows": self.model.som.rows,
            "som_cols": self.model.som.cols,
            "viz_dim": self.viz_dim,
            "t": self.now,
        }

    def emit_snapshot(self) -> None:
        self._emit("state_snapshot", self.snapshot())

    def restart(self) -> None:
        """Reset walk, statistics, scene clock and trigger state; keep params."""
        self.state.walk = WalkState.seeded(self.seed)
        self.state.rng = np.random.default_rng(self.seed + 1)
        self.state.listen_stats.reset()
        self.state.scene_remaining = SCENE_SECONDS
        self.state.current_node = None
        self.state.previous_node = None
        self.state.playing_segment = None
        self.state.bmu_history.clear()
        self.trigger = TriggerState()
        self._tail = np.zeros(0)
        self._listen_window[:] = 0.0
        self._listen_filled = 0
        self._live_pos = 0
        self._loop_target = None

    def run_seconds(self, duration: float) -> AudioBuffer:
        """Offline run: as many whole blocks as cover the duration."""
        if duration <= 0:
            raise CorpusAgentError("render duration must be > 0")
        n_blocks = int(np.ceil(duration * SAMPLE_RATE / BLOCK))
        out = np.empty(n_blocks * BLOCK)
        for i in range(n_blocks):
            out[i * BLOCK : (i + 1) * BLOCK] = self.render_block()
        peak = float(np.max(np.abs(out))) if len(out) else 0.0
        if peak > 1.0:
            out /= peak
            self.render_log.append(f"peak {peak:.3f} exceeded full scale; output normalized")
        return AudioBuffer(samples=out, sample_rate=SAMPLE_RATE)

    def run_realtime(self, stop_event: threading.Event, sink=None) -> None:
        """Paced run for `serve --clock device`: one block per block duration."""
        start = time.monotonic()
        while not stop_event.is_set():
            block = self.render_block()
            if sink is not None:
                sink(block)
            target = start + self._blocks * BLOCK_SECONDS
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)


def render_session(
    model: TrainedModel,
    *,
    plan: list[PlaybackEvent] | None = None,
    duration: float | None = None,
    seed: int = 0,
    mode: str = "macat",
    params: PlaybackParams | None = None,
    weights: FeatureWeights | None = None,
) -> tuple[AudioBuffer, list[PlaybackEvent], list[str]]:
    """Deterministic offline render.

    Either mixes an explicit event plan or runs the agent loop for the given
    duration. Returns (audio, playback events, render log).
    """
    if plan is not None:
        log: list[str] = []
        pieces = []
        for i, event in enumerate(sorted(plan, key=lambda e: e.onset_seconds)):
            rendered = render_segment(
                AudioBuffer(
                    samples=_plan_segment_samples(model, event.segment_id),
                    sample_rate=SAMPLE_RATE,
                ),
                event.params,
            )
            samples = rendered.samples
            if event.params.one_shot and i + 1 < len(plan):
                cut = int(round((plan[i + 1].onset_seconds - event.onset_seconds) * SAMPLE_RATE))
                if 0 < cut < len(samples):
                    release = min(int(ONE_SHOT_RELEASE_MS / 1000.0 * SAMPLE_RATE), cut)
                    samples = samples[:cut].copy()
                    if release > 1:
                        samples[-release:] *= np.linspace(1.0, 0.0, release)
            event.rendered_seconds = len(samples) / SAMPLE_RATE
            pieces.append((event.onset_seconds, samples))
        total = duration or max(t + len(s) / SAMPLE_RATE for t, s in pieces)
        audio, normalized = synth.mix_events(pieces, total, SAMPLE_RATE)
        if normalized:
            log.append("mix exceeded full scale; output normalized")
        return audio, sorted(plan, key=lambda e: e.onset_seconds), log

    if duration is None:
        raise CorpusAgentError("render_session needs a plan or a duration")
    engine = Engine(model, mode=mode, params=params, weights=weights, seed=seed)
    audio = engine.run_seconds(duration)
    return audio, engine.playback_trace, engine.render_log


def _plan_segment_samples(model: TrainedModel, segment_id: int) -> np.ndarray:
    seg = model.segments[segment_id]
    entry = model.manifest.entries[seg.source_index]
    source = load_wav(model.resolve_audio_path(entry), expect_rate=SAMPLE_RATE, resample=True)
    return source.samples[seg.start_sample : seg.end_sample].copy()
