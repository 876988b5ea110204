"""Audio file I/O and corpus folder scanning.

The engine works on mono float buffers in [-1, 1]. Corpus files are RIFF/WAVE,
PCM 16-bit integer or IEEE 32-bit float; everything else is rejected with a
distinct error code. Files at other sample rates are rejected unless the
caller explicitly asks for resampling, because silently resampling would shift
every descriptor computed downstream.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AudioFileMissingError,
    EmptyAudioError,
    EmptyCorpusError,
    SampleRateError,
    WavCodecError,
)

ENGINE_RATE = 44100

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class AudioBuffer:
    """Decoded PCM audio: mono samples in [-1, 1] plus the source rate.

    ``channels`` records the channel count of the source file; the samples
    themselves are always stored mono (downmixed by channel mean).
    """

    samples: np.ndarray
    sample_rate: int
    channels: int = 1

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or len(self.samples) < 1:
            raise EmptyAudioError("audio buffer must hold at least one sample")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio buffer contains non-finite samples")

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class CorpusEntry:
    path: str
    artist: str
    song: str
    duration_seconds: float


@dataclass
class CorpusManifest:
    entries: list[CorpusEntry] = field(default_factory=list)
    total_duration_seconds: float = 0.0


def _read_wav_header(raw: bytes, path: str):
    """Parse RIFF chunks; returns (format, channels, rate, bits, data bytes)."""
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavCodecError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack("<I", raw[pos + 4 : pos + 8])
        body = raw[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavCodecError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack("<HHIIHH", body[:16])
            # extensible wrapper: the real codec sits in the GUID sub-format
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE and len(body) >= 26:
                (sub,) = struct.unpack("<H", body[24:26])
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None:
        raise WavCodecError(f"{path}: missing fmt chunk")
    if data is None or len(data) == 0:
        raise EmptyAudioError(f"{path}: zero-length data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if audio_format not in (WAVE_FORMAT_PCM, WAVE_FORMAT_IEEE_FLOAT):
        raise WavCodecError(f"{path}: unsupported codec 0x{audio_format:04x} (PCM or float only)")
    return audio_format, channels, rate, bits, data


def _resample_to_rate(samples: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    if src_rate == dst_rate:
        return samples
    out_len = max(1, int(round(len(samples) * dst_rate / src_rate)))
    src_pos = np.arange(out_len) * (src_rate / dst_rate)
    return np.interp(src_pos, np.arange(len(samples)), samples)


def load_wav(path, *, expect_rate: int | None = None, resample: bool = False) -> AudioBuffer:
    """Decode a wav file to a mono AudioBuffer.

    16-bit samples map to v/32768 (so -32768 -> -1.0 exactly); float files are
    taken verbatim. Stereo and multichannel content is downmixed by the
    arithmetic mean of the channels. When ``expect_rate`` is given, files at
    other rates raise SampleRateError unless ``resample`` is set, in which case
    a linear-interpolation resampler converts them.
    """
    p = Path(path)
    if not p.is_file():
        raise AudioFileMissingError(f"no such audio file: {path}")
    raw = p.read_bytes()
    audio_format, channels, rate, bits, data = _read_wav_header(raw, str(path))
    if channels < 1 or rate <= 0:
        raise WavCodecError(f"{path}: malformed fmt chunk")

    if audio_format == WAVE_FORMAT_PCM:
        if bits != 16:
            raise WavCodecError(f"{path}: {bits}-bit PCM unsupported (16-bit only)")
        usable = (len(data) // (2 * channels)) * 2 * channels
        samples = np.frombuffer(data[:usable], dtype="<i2").astype(np.float64) / 32768.0
    else:
        if bits != 32:
            raise WavCodecError(f"{path}: {bits}-bit float unsupported (32-bit only)")
        usable = (len(data) // (4 * channels)) * 4 * channels
        samples = np.frombuffer(data[:usable], dtype="<f4").astype(np.float64)

    if len(samples) == 0:
        raise EmptyAudioError(f"{path}: zero-length data chunk")
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)

    if expect_rate is not None and rate != expect_rate:
        if not resample:
            raise SampleRateError(
                f"{path}: sample rate {rate} != required {expect_rate}; "
                "pass resample=True to convert"
            )
        samples = _resample_to_rate(samples, rate, expect_rate)
        rate = expect_rate

    return AudioBuffer(samples=samples, sample_rate=rate, channels=channels)


def wav_duration_seconds(path) -> float:
    """Read only the header and report the file duration."""
    p = Path(path)
    if not p.is_file():
        raise AudioFileMissingError(f"no such audio file: {path}")
    _, channels, rate, bits, data = _read_wav_header(p.read_bytes(), str(path))
    frame_bytes = channels * (bits // 8)
    if frame_bytes == 0 or rate <= 0:
        raise WavCodecError(f"{path}: malformed fmt chunk")
    return (len(data) // frame_bytes) / rate


def scan_corpus(directory) -> CorpusManifest:
    """Recursively collect .wav files in deterministic lexicographic order.

    Artist and song metadata default to the filename stem; wav carries no tags
    in scope.
    """
    root = Path(directory)
    if not root.is_dir():
        raise AudioFileMissingError(f"no such corpus directory: {directory}")
    paths = sorted(
        (p for p in root.rglob("*") if p.is_file() and p.suffix.lower() == ".wav"),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    if not paths:
        raise EmptyCorpusError(f"no .wav files under {directory}")
    entries = []
    for p in paths:
        stem = p.stem
        entries.append(
            CorpusEntry(
                path=str(p),
                artist=stem,
                song=stem,
                duration_seconds=wav_duration_seconds(p),
            )
        )
    return CorpusManifest(
        entries=entries,
        total_duration_seconds=float(sum(e.duration_seconds for e in entries)),
    )


def render_wav(buffer: AudioBuffer, path) -> None:
    """Write 16-bit PCM. Values are clamped to [-1, 1] before quantization."""
    if buffer.samples.size == 0:
        raise EmptyAudioError("refusing to write an empty buffer")
    clamped = np.clip(buffer.samples, -1.0, 1.0)
    quantized = np.clip(np.round(clamped * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as out:
        out.setnchannels(1)
        out.setsampwidth(2)
        out.setframerate(buffer.sample_rate)
        out.writeframes(quantized.tobytes())
