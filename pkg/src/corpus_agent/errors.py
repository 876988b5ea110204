"""Error types shared across the engine.

Every error carries a stable ``code`` string so the control protocol and the
CLI can report machine-readable failures without parsing messages.
"""

from __future__ import annotations


class CorpusAgentError(Exception):
    """Base class; ``code`` identifies the failure class."""

    code = "error"

    def __init__(self, message: str, *, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class AudioFileMissingError(CorpusAgentError):
    code = "missing-file"


class WavCodecError(CorpusAgentError):
    """Not a RIFF/WAVE file, or an unsupported codec / bit depth."""

    code = "unsupported-codec"


class EmptyAudioError(CorpusAgentError):
    """Zero-length data chunk or empty buffer."""

    code = "empty-audio"


class SampleRateError(CorpusAgentError):
    """File is not at the required rate and resampling was not requested."""

    code = "sample-rate"


class EmptyCorpusError(CorpusAgentError):
    code = "empty-corpus"


class ModelFormatError(CorpusAgentError):
    """Persisted model folder is unreadable: bad version, truncated data."""

    code = "model-format"


class UntrainedModelError(CorpusAgentError):
    code = "untrained-model"


class ValidationError(CorpusAgentError):
    """Rejected control-protocol parameter; names the offending field."""

    code = "invalid-param"

    def __init__(self, field: str, message: str, *, permitted: str | None = None):
        super().__init__(message)
        self.field = field
        self.permitted = permitted

    def as_payload(self) -> dict:
        payload = {"code": self.code, "field": self.field, "message": str(self)}
        if self.permitted is not None:
            payload["permitted"] = self.permitted
        return payload
