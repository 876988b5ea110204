"""Corpus-based concatenative synthesis agent.

Train on a small personal corpus of wav files, cluster segments on a
self-organizing map, learn their temporal order with factor oracles, and
improvise: self-listening generation, oracle-driven playback, or reactive
audio mosaicing against live input. A newline-JSON control protocol steers
the running engine.
"""

__version__ = "0.1.0"
