"""Trained model container and on-disk persistence.

A model folder holds a human-inspectable JSON manifest plus a raw
little-endian float32 feature matrix:

    model.json            manifest, segments, SOM, normalization, sequences
    features.f32le        numData x 31 row-major float32
    oracle_nodes.json     factor oracle over SOM node labels
    oracle_segments.json  factor oracle over segment indices

The feature matrix is float32 by construction, so persistence round-trips
bit-exactly. Referenced audio files are resolved lazily: a missing file is a
warning at load time, not an error.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CorpusEntry, CorpusManifest
from .errors import ModelFormatError
from .features import VECTOR31_LEN
from .oracle import FactorOracle
from .segmentation import Segment
from .som import SOM, Normalization

MODEL_FORMAT_VERSION = 1

# mosaic descriptor space: the 31 vector dims plus the scatter-plot features
AUX_DIM_NAMES = ("centroid_mean", "periodicity_mean", "f0_mean", "duration")
MOSAIC_DIMS = VECTOR31_LEN + len(AUX_DIM_NAMES)  # 35


@dataclass
class TrainedModel:
    manifest: CorpusManifest
    segments: list[Segment]
    feature_matrix: np.ndarray       # (numData, 31) float32
    aux_matrix: np.ndarray           # (numData, 4) float64: centroid/periodicity/f0 means + duration
    som: SOM
    node_sequence: list[int]
    segment_sequence: list[int]
    oracle_nodes: FactorOracle
    oracle_segments: FactorOracle
    normalization: Normalization     # 35 dims covering the mosaic space
    format_version: int = MODEL_FORMAT_VERSION
    base_dir: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        self.feature_matrix = np.asarray(self.feature_matrix, dtype=np.float32)
        self.aux_matrix = np.asarray(self.aux_matrix, dtype=np.float64)
        n = len(self.segments)
        if self.feature_matrix.shape != (n, VECTOR31_LEN):
            raise ModelFormatError(
                f"feature matrix shape {self.feature_matrix.shape} does not match "
                f"{n} segments x {VECTOR31_LEN}"
            )
        if self.aux_matrix.shape != (n, len(AUX_DIM_NAMES)):
            raise ModelFormatError("aux matrix shape does not match segment count")
        if len(self.node_sequence) != n or len(self.segment_sequence) != n:
            raise ModelFormatError("sequence lengths must equal segment count")
        for seg in self.segments:
            if seg.cluster_node is not None and not 0 <= seg.cluster_node < self.som.n_nodes:
                raise ModelFormatError(f"segment {seg.id} references invalid SOM node {seg.cluster_node}")
        if self.normalization.lo.shape != (MOSAIC_DIMS,):
            raise ModelFormatError(f"normalization must cover {MOSAIC_DIMS} dimensions")

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    def mosaic_matrix(self) -> np.ndarray:
        """Normalized (numData, 35) matrix the mosaic queries run against."""
        raw = np.hstack([self.feature_matrix.astype(np.float64), self.aux_matrix])
        return self.normalization.apply(raw)

    def normalized_features(self) -> np.ndarray:
        """Normalized 31-dim vectors (the SOM training space)."""
        return self.mosaic_matrix()[:, :VECTOR31_LEN]

    def resolve_audio_path(self, entry: CorpusEntry) -> Path:
        p = Path(entry.path)
        if p.is_file():
            return p
        if self.base_dir is not None:
            candidate = self.base_dir / p.name
            if candidate.is_file():
                return candidate
        return p

    def equals(self, other: "TrainedModel") -> bool:
        return (
            self.format_version == other.format_version
            and self.manifest == other.manifest
            and self.segments == other.segments
            and np.array_equal(self.feature_matrix, other.feature_matrix)
            and np.array_equal(self.aux_matrix, other.aux_matrix)
            and self.som.rows == other.som.rows
            and self.som.cols == other.som.cols
            and np.array_equal(self.som.prototypes, other.som.prototypes)
            and self.node_sequence == other.node_sequence
            and self.segment_sequence == other.segment_sequence
            and self.oracle_nodes.to_dict() == other.oracle_nodes.to_dict()
            and self.oracle_segments.to_dict() == other.oracle_segments.to_dict()
            and np.array_equal(self.normalization.lo, other.normalization.lo)
            and np.array_equal(self.normalization.hi, other.normalization.hi)
        )


def _dump_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def save_model(model: TrainedModel, directory) -> None:
    if model.num_segments == 0:
        raise ModelFormatError("refusing to save a model with zero segments")
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)

    payload = {
        "format_version": model.format_version,
        "manifest": {
            "entries": [
                {
                    "path": e.path,
                    "artist": e.artist,
                    "song": e.song,
                    "duration_seconds": e.duration_seconds,
                }
                for e in model.manifest.entries
            ],
            "total_duration_seconds": model.manifest.total_duration_seconds,
        },
        "segments": [
            {
                "id": s.id,
                "source_index": s.source_index,
                "start_sample": s.start_sample,
                "length_samples": s.length_samples,
                "start_seconds": s.start_seconds,
                "duration_seconds": s.duration_seconds,
                "cluster_node": s.cluster_node,
            }
            for s in model.segments
        ],
        "aux": [[float(v) for v in row] for row in model.aux_matrix],
        "som": {
            "rows": model.som.rows,
            "cols": model.som.cols,
            "rng_seed": model.som.rng_seed,
            "prototypes": [[float(v) for v in row] for row in model.som.prototypes],
        },
        "normalization": {
            "lo": [float(v) for v in model.normalization.lo],
            "hi": [float(v) for v in model.normalization.hi],
        },
        "node_sequence": model.node_sequence,
        "segment_sequence": model.segment_sequence,
        "num_segments": model.num_segments,
    }
    _dump_json(out / "model.json", payload)
    (out / "features.f32le").write_bytes(
        np.ascontiguousarray(model.feature_matrix, dtype="<f4").tobytes()
    )
    _dump_json(out / "oracle_nodes.json", model.oracle_nodes.to_dict())
    _dump_json(out / "oracle_segments.json", model.oracle_segments.to_dict())


def load_model(directory) -> TrainedModel:
    base = Path(directory)
    manifest_path = base / "model.json"
    if not manifest_path.is_file():
        raise ModelFormatError(f"{directory}: model.json not found")
    data = json.loads(manifest_path.read_text(encoding="utf-8"))

    version = data.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"model format version {version!r} unsupported (expected {MODEL_FORMAT_VERSION})"
        )

    n = int(data["num_segments"])
    raw = (base / "features.f32le").read_bytes()
    expected_bytes = n * VECTOR31_LEN * 4
    if len(raw) != expected_bytes:
        raise ModelFormatError(
            f"matrix length mismatch: features.f32le holds {len(raw)} bytes, expected {expected_bytes}"
        )
    matrix = np.frombuffer(raw, dtype="<f4").reshape(n, VECTOR31_LEN)

    manifest = CorpusManifest(
        entries=[
            CorpusEntry(
                path=e["path"],
                artist=e["artist"],
                song=e["song"],
                duration_seconds=e["duration_seconds"],
            )
            for e in data["manifest"]["entries"]
        ],
        total_duration_seconds=data["manifest"]["total_duration_seconds"],
    )
    segments = [
        Segment(
            id=s["id"],
            source_index=s["source_index"],
            start_sample=s["start_sample"],
            length_samples=s["length_samples"],
            start_seconds=s["start_seconds"],
            duration_seconds=s["duration_seconds"],
            cluster_node=s["cluster_node"],
        )
        for s in data["segments"]
    ]
    som_data = data["som"]
    som = SOM(
        rows=som_data["rows"],
        cols=som_data["cols"],
        prototypes=np.array(som_data["prototypes"], dtype=np.float64),
        trained=True,
        rng_seed=som_data["rng_seed"],
    )
    normalization = Normalization(
        lo=np.array(data["normalization"]["lo"], dtype=np.float64),
        hi=np.array(data["normalization"]["hi"], dtype=np.float64),
    )

    def load_oracle(name: str) -> FactorOracle:
        path = base / name
        if not path.is_file():
            raise ModelFormatError(f"{directory}: {name} not found")
        return FactorOracle.from_dict(json.loads(path.read_text(encoding="utf-8")))

    model = TrainedModel(
        manifest=manifest,
        segments=segments,
        feature_matrix=matrix,
        aux_matrix=np.array(data["aux"], dtype=np.float64),
        som=som,
        node_sequence=[int(v) for v in data["node_sequence"]],
        segment_sequence=[int(v) for v in data["segment_sequence"]],
        oracle_nodes=load_oracle("oracle_nodes.json"),
        oracle_segments=load_oracle("oracle_segments.json"),
        normalization=normalization,
        format_version=version,
        base_dir=base,
    )

    for entry in manifest.entries:
        if not model.resolve_audio_path(entry).is_file():
            warnings.warn(
                f"referenced audio file missing: {entry.path} (playback will fail until it is restored)",
                stacklevel=2,
            )
    return model
