"""Factor oracle construction and the stochastic improvisation walk.

The oracle is built incrementally over a symbol sequence: each new symbol
extends the spine, back-propagates an external transition along the suffix
link chain until the symbol is already known, and sets the new state's suffix
link to the state that recognizes the longest repeated suffix. The automaton
has exactly m+1 states and between m and 2m-1 transitions, and accepts at
least every factor of the input.

The walk trades forward transitions against suffix-link jumps with a single
probability. A jump itself is silent: the walk relocates and immediately emits
the next forward symbol from the linked state, so every step emits exactly one
symbol and tempo semantics stay exact. At the end of the spine a forward draw
holds, re-emitting the final symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CorpusAgentError


class FactorOracle:
    def __init__(self, sequence):
        sequence = list(sequence)
        if not sequence:
            raise CorpusAgentError("cannot build a factor oracle over an empty sequence")
        self.sequence = sequence
        self.m = len(sequence)
        self.transitions: list[dict] = [dict() for _ in range(self.m + 1)]
        self.suffix: list[int] = [-1] * (self.m + 1)  # suffix[0] stays undefined (-1)
        self.alphabet = set(sequence)
        self._build()

    def _build(self):
        for i, symbol in enumerate(self.sequence):
            self.transitions[i][symbol] = i + 1  # spine
            k = self.suffix[i]
            while k > -1 and symbol not in self.transitions[k]:
                self.transitions[k][symbol] = i + 1
                k = self.suffix[k]
            self.suffix[i + 1] = 0 if k == -1 else self.transitions[k][symbol]

    @property
    def n_states(self) -> int:
        return self.m + 1

    @property
    def n_transitions(self) -> int:
        return sum(len(t) for t in self.transitions)

    def forward_transitions(self, state: int) -> dict:
        return self.transitions[state]

    def spine_symbol(self, state: int):
        """Symbol of the spine transition leaving ``state`` (state < m)."""
        return self.sequence[state]

    def accepts(self, word) -> bool:
        state = 0
        for symbol in word:
            nxt = self.transitions[state].get(symbol)
            if nxt is None:
                return False
            state = nxt
        return True

    def to_dict(self) -> dict:
        external = []
        for state, trans in enumerate(self.transitions):
            for symbol, target in sorted(trans.items()):
                if state < self.m and target == state + 1 and symbol == self.sequence[state]:
                    continue  # spine is implied by the symbol list
                external.append([state, symbol, target])
        return {"spine": list(self.sequence), "external": external, "suffix": list(self.suffix)}

    @classmethod
    def from_dict(cls, data: dict) -> "FactorOracle":
        oracle = cls(data["spine"])
        rebuilt = oracle.to_dict()
        if rebuilt["external"] != [list(t) for t in data["external"]] or rebuilt["suffix"] != list(
            data["suffix"]
        ):
            raise CorpusAgentError("stored oracle links do not match its symbol sequence")
        return oracle


def build_oracle(sequence) -> FactorOracle:
    return FactorOracle(sequence)


def accepts(oracle: FactorOracle, word) -> bool:
    return oracle.accepts(word)


@dataclass
class WalkState:
    """Mutable cursor of one improvisation walk."""

    rng: np.random.Generator
    state: int = 0
    last_symbol: object = None
    last_move: str = ""  # forward | jump | hold
    steps: int = 0

    @classmethod
    def seeded(cls, seed: int) -> "WalkState":
        return cls(rng=np.random.default_rng(seed))


def _take_forward(oracle: FactorOracle, state: int, rng, explore: bool):
    if explore:
        options = sorted(oracle.transitions[state].items(), key=lambda kv: (kv[1], repr(kv[0])))
        if len(options) > 1:
            symbol, target = options[rng.integers(len(options))]
            return symbol, target
        if options:
            return options[0]
    return oracle.spine_symbol(state), state + 1


def walk_step(
    oracle: FactorOracle,
    walk: WalkState,
    p_forward: float,
    *,
    explore: bool = False,
):
    """Advance one step, returning (walk, emitted symbol).

    With probability ``p_forward`` the walk moves forward (the spine by
    default; uniformly over all forward transitions when ``explore`` is set).
    Otherwise it relocates through the suffix link and emits the forward
    symbol from there. A forward draw at the last state holds.
    """
    if not 0.0 <= p_forward <= 1.0:
        raise CorpusAgentError("p_forward must lie in [0, 1]")
    # random() < 1.0 always holds and random() < 0.0 never does, so the two
    # endpoint settings are exact, not merely almost-sure
    forward = walk.rng.random() < p_forward

    if forward and walk.state >= oracle.m:
        symbol = oracle.sequence[-1]
        walk.last_move = "hold"
    elif forward:
        symbol, target = _take_forward(oracle, walk.state, walk.rng, explore)
        walk.state = target
        walk.last_move = "forward"
    else:
        linked = oracle.suffix[walk.state]
        if linked < 0:
            linked = 0  # state 0 has no suffix link; restart from the root
        symbol, target = _take_forward(oracle, linked, walk.rng, explore)
        walk.state = target
        walk.last_move = "jump"

    walk.last_symbol = symbol
    walk.steps += 1
    return walk, symbol
