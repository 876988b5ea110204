"""Shared fixtures: hand-rolled wav writers (independent of the package's
encoder) and small synthetic corpora for pipeline-level tests."""

from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np
import pytest

from corpus_agent import agent
from corpus_agent.segmentation import SegmentationConfig

SR = 44100


def write_pcm16(path, data: np.ndarray, rate: int = SR, channels: int = 1) -> None:
    """Reference 16-bit PCM writer using the stdlib wave module.

    ``data`` is int16 (interleaved when multichannel)."""
    data = np.asarray(data, dtype="<i2")
    with wave.open(str(path), "wb") as out:
        out.setnchannels(channels)
        out.setsampwidth(2)
        out.setframerate(rate)
        out.writeframes(data.tobytes())


def write_float32(path, data: np.ndarray, rate: int = SR, channels: int = 1) -> None:
    """Minimal RIFF float32 writer (stdlib wave cannot write float)."""
    payload = np.asarray(data, dtype="<f4").tobytes()
    byte_rate = rate * channels * 4
    fmt = struct.pack("<HHIIHH", 3, channels, rate, byte_rate, channels * 4, 32)
    chunks = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(chunks)) + chunks)


def float_to_pcm16(x: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(x) * 32768.0), -32768, 32767).astype("<i2")


def tone(freq: float, seconds: float, amp: float = 0.4, rate: int = SR) -> np.ndarray:
    t = np.arange(int(round(seconds * rate))) / rate
    return amp * np.sin(2 * np.pi * freq * t)


def make_tone_corpus(root: Path, freqs=(220.0, 440.0, 880.0), seconds: float = 3.0,
                     click_at=(1.0, 2.0)) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    for k, f in enumerate(freqs):
        x = tone(f, seconds)
        for c in click_at:
            i = int(c * SR)
            x[i : i + 200] += 0.5 * np.hanning(200)
        write_pcm16(root / f"tone{k}.wav", float_to_pcm16(x))
    return root


@pytest.fixture(scope="session")
def tone_corpus(tmp_path_factory) -> Path:
    return make_tone_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def tone_model(tone_corpus):
    config = agent.TrainConfig(
        som_dims=(2, 2),
        seed=7,
        segmentation=SegmentationConfig(max_segment_seconds=2.0),
    )
    return agent.train_pipeline(tone_corpus, config)


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory) -> Path:
    # three two-second tones, split at 1 s: six segments total
    root = tmp_path_factory.mktemp("mini")
    for k, f in enumerate((261.63, 392.0, 523.25)):
        write_pcm16(root / f"note{k}.wav", float_to_pcm16(tone(f, 2.0)))
    return root


@pytest.fixture(scope="session")
def mini_model(mini_corpus):
    config = agent.TrainConfig(
        som_dims=(2, 2),
        seed=3,
        segmentation=SegmentationConfig(max_segment_seconds=1.0),
    )
    return agent.train_pipeline(mini_corpus, config)
