"""Agent orchestration: offline training and the improvisation behaviors.

Three behaviors share one state record:

  macat      self-listening generation: finalize the machine-listening stats
             of the agent's own output, log its BMU as the perceived state,
             advance the node oracle by the congruence parameter, then play a
             random segment from the predicted node's cluster.
  proactive  the segment-index oracle generates directly; no cluster sampling.
  reactive   live input statistics drive nearest-neighbor mosaicing; the
             oracle is untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import features, mosaic, segmentation, som as som_mod
from .corpus import load_wav, scan_corpus
from .errors import CorpusAgentError, UntrainedModelError
from .features import RunningStats
from .model import TrainedModel
from .mosaic import FeatureWeights
from .oracle import WalkState, build_oracle, walk_step
from .segmentation import SegmentationConfig
from .som import Normalization, default_grid_dims, default_schedule, train_som
from .synth import PlaybackParams

SCENE_SECONDS = 60.0

MODES = ("macat", "proactive", "reactive")


@dataclass
class TrainConfig:
    som_dims: tuple[int, int] | None = None
    epochs: int | None = None
    seed: int = 0
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    resample: bool = False


@dataclass
class NodeEvent:
    timestamp: float
    node: int
    segment: int
    duration_seconds: float
    artist: str
    song: str

    def as_dict(self) -> dict:
        return {
            "t": self.timestamp,
            "node": self.node,
            "segment": self.segment,
            "dur": self.duration_seconds,
            "artist": self.artist,
            "song": self.song,
        }


@dataclass
class AgentState:
    mode: str
    walk: WalkState
    rng: np.random.Generator
    params: PlaybackParams
    weights: FeatureWeights
    trigger_mode: str = "beat"
    current_node: int | None = None
    previous_node: int | None = None
    playing_segment: int | None = None
    listen_stats: RunningStats = field(default_factory=RunningStats)
    scene_remaining: float = SCENE_SECONDS
    bmu_history: list[int] = field(default_factory=list)
    stats_resets: int = 0

    @classmethod
    def fresh(cls, mode: str, seed: int, params: PlaybackParams | None = None,
              weights: FeatureWeights | None = None) -> "AgentState":
        if mode not in MODES:
            raise CorpusAgentError(f"unknown agent mode {mode!r}")
        return cls(
            mode=mode,
            walk=WalkState.seeded(seed),
            rng=np.random.default_rng(seed + 1),
            params=params or PlaybackParams(),
            weights=weights or FeatureWeights.uniform(),
        )


def _segment_feature_rows(buffer, segments) -> list[np.ndarray]:
    """Frame-descriptor rows per segment; frames belong to the segment their
    start sample falls in. Segments too short to hold a frame start get a
    single padded-frame analysis so every segment has statistics."""
    n = len(buffer.samples)
    if n >= features.WINDOW:
        rows = features.analyze_buffer(buffer)
        starts = np.arange(len(rows)) * features.HOP
    else:
        rows = np.empty((0, features.N_FRAME_DIMS))
        starts = np.empty(0, dtype=int)
    out = []
    for seg in segments:
        sel = rows[(starts >= seg.start_sample) & (starts < seg.end_sample)]
        if len(sel) == 0:
            chunk = buffer.samples[seg.start_sample : seg.end_sample]
            padded = np.zeros(features.WINDOW)
            padded[: min(len(chunk), features.WINDOW)] = chunk[: features.WINDOW]
            sel = features.analyze_frames(padded[None, :])
        out.append(sel)
    return out


def train_pipeline(corpus_dir, config: TrainConfig | None = None) -> TrainedModel:
    """scan -> load -> segment -> analyze -> SOM -> oracles -> TrainedModel."""
    config = config or TrainConfig()
    manifest = scan_corpus(corpus_dir)

    all_segments: list[segmentation.Segment] = []
    vectors: list[np.ndarray] = []
    aux: list[list[float]] = []
    for source_index, entry in enumerate(manifest.entries):
        buf = load_wav(entry.path, expect_rate=features.SAMPLE_RATE, resample=config.resample)
        segs = segmentation.segment(
            buf, config.segmentation, source_index=source_index, id_offset=len(all_segments)
        )
        for seg, rows in zip(segs, _segment_feature_rows(buf, segs)):
            stats = features.stats_from_rows(rows)
            vectors.append(features.segment_vector(stats))
            aux.append([
                float(stats.mean[features.IDX["centroid"]]),
                float(stats.mean[features.IDX["periodicity"]]),
                float(stats.mean[features.IDX["f0"]]),
                seg.duration_seconds,
            ])
        all_segments.extend(segs)

    n = len(all_segments)
    if n < 2:
        raise CorpusAgentError(f"corpus produced only {n} segment(s); need at least 2")

    matrix = np.asarray(vectors, dtype=np.float32)
    raw_space = np.hstack([matrix.astype(np.float64), np.asarray(aux, dtype=np.float64)])
    normalization = Normalization.fit(raw_space)
    normed31 = normalization.apply(raw_space)[:, : features.VECTOR31_LEN]

    dims = config.som_dims or default_grid_dims(n)
    schedule = default_schedule(n, dims[0], dims[1], config.epochs)
    som = train_som(normed31, dims, schedule, seed=config.seed)
    som.normalization = Normalization(
        lo=normalization.lo[: features.VECTOR31_LEN], hi=normalization.hi[: features.VECTOR31_LEN]
    )

    labels = som_mod.node_sequence(som, normed31)
    for seg, label in zip(all_segments, labels):
        seg.cluster_node = int(label)
    segment_sequence = [seg.id for seg in all_segments]

    return TrainedModel(
        manifest=manifest,
        segments=all_segments,
        feature_matrix=matrix,
        aux_matrix=np.asarray(aux, dtype=np.float64),
        som=som,
        node_sequence=labels,
        segment_sequence=segment_sequence,
        oracle_nodes=build_oracle(labels),
        oracle_segments=build_oracle(segment_sequence),
        normalization=normalization,
    )


def clusters_of(model: TrainedModel) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {node: [] for node in range(model.som.n_nodes)}
    for seg in model.segments:
        if seg.cluster_node is None:
            raise UntrainedModelError("segments carry no cluster assignment")
        out[seg.cluster_node].append(seg.id)
    return out


def nearest_nonempty_node(model: TrainedModel, clusters: dict[int, list[int]], node: int) -> int:
    """Fallback for empty clusters: nearest by Chebyshev grid distance, then id."""
    if clusters.get(node):
        return node
    candidates = [n for n, members in clusters.items() if members]
    if not candidates:
        raise UntrainedModelError("model has no populated clusters")
    return min(candidates, key=lambda n: (model.som.grid_distance(node, n), n))


def _event_for_segment(model: TrainedModel, state: AgentState, node: int, segment_id: int,
                       now: float) -> NodeEvent:
    seg = model.segments[segment_id]
    entry = model.manifest.entries[seg.source_index]
    state.previous_node = state.current_node
    state.current_node = node
    state.playing_segment = segment_id
    return NodeEvent(
        timestamp=now,
        node=node,
        segment=segment_id,
        duration_seconds=seg.duration_seconds,
        artist=entry.artist,
        song=entry.song,
    )


def perceive_own_output(model: TrainedModel, state: AgentState) -> int | None:
    """Finalize self-listening stats into a BMU (the perceived musical state)."""
    if state.listen_stats.count < 1:
        return None
    seg_stats = features.finalize(state.listen_stats)
    vec = features.segment_vector(seg_stats)
    normed = model.som.normalization.apply(vec) if model.som.normalization else vec
    unit = som_mod.bmu(model.som, normed)
    state.bmu_history.append(unit)
    return unit


def macat_step(model: TrainedModel, state: AgentState, now: float,
               clusters: dict[int, list[int]] | None = None) -> tuple[AgentState, NodeEvent]:
    """One self-listening generation step (new node trigger)."""
    if state.mode != "macat":
        raise CorpusAgentError("macat_step requires mode 'macat'")
    clusters = clusters if clusters is not None else clusters_of(model)

    perceive_own_output(model, state)
    _, node = walk_step(model.oracle_nodes, state.walk, state.params.p_forward)
    node = int(node)
    source = nearest_nonempty_node(model, clusters, node)
    members = clusters[source]
    segment_id = members[int(state.rng.integers(len(members)))]

    state.listen_stats.reset()
    state.stats_resets += 1
    return state, _event_for_segment(model, state, node, segment_id, now)


def proactive_step(model: TrainedModel, state: AgentState, now: float) -> tuple[AgentState, NodeEvent]:
    """One oracle-over-segments generation step."""
    if state.mode != "proactive":
        raise CorpusAgentError("proactive_step requires mode 'proactive'")
    _, segment_id = walk_step(model.oracle_segments, state.walk, state.params.p_forward)
    segment_id = int(segment_id)
    node = model.segments[segment_id].cluster_node
    if node is None:
        raise UntrainedModelError("segments carry no cluster assignment")
    return state, _event_for_segment(model, state, node, segment_id, now)


def reactive_step(model: TrainedModel, state: AgentState, live_frame, gate_open: bool,
                  now: float = 0.0) -> tuple[AgentState, NodeEvent | None]:
    """Update live statistics; select a segment when the gate is open."""
    if state.mode != "reactive":
        raise CorpusAgentError("reactive_step requires mode 'reactive'")
    state.weights.require_active()
    if live_frame is not None:
        state.listen_stats.update(live_frame)
    segment_id = mosaic.reactive_step(model, state.listen_stats, state.weights, gate_open,
                                      timestamp=now)
    if segment_id is None:
        return state, None
    node = model.segments[segment_id].cluster_node
    return state, _event_for_segment(model, state, node, segment_id, now)


def scene_clock(state: AgentState, dt: float) -> tuple[AgentState, int]:
    """Advance the 60 s scene countdown; returns how many boundaries passed."""
    if dt < 0:
        raise CorpusAgentError("scene clock cannot run backwards")
    boundaries = 0
    state.scene_remaining -= dt
    while state.scene_remaining <= 0.0:
        boundaries += 1
        state.scene_remaining += SCENE_SECONDS
    return state, boundaries
