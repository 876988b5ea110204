"""Factor oracle construction, factor completeness, and the walk."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus_agent.errors import CorpusAgentError
from corpus_agent.oracle import FactorOracle, WalkState, accepts, build_oracle, walk_step


def all_factors(word):
    """Brute-force factor enumeration: every contiguous substring."""
    out = set()
    for i in range(len(word)):
        for j in range(i + 1, len(word) + 1):
            out.add(tuple(word[i:j]))
    return out


# ------------------------------------------------------------ construction


def test_aab_hand_trace():
    oracle = build_oracle([0, 0, 1])
    assert oracle.n_states == 4
    # spine
    assert oracle.transitions[0][0] == 1
    assert oracle.transitions[1][0] == 2
    assert oracle.transitions[2][1] == 3
    # externals created while inserting the b: states 1 and 0 both learn b->3
    assert oracle.transitions[0][1] == 3
    assert oracle.transitions[1][1] == 3
    assert oracle.suffix[1] == 0
    assert oracle.suffix[2] == 1
    assert oracle.suffix[3] == 0
    assert oracle.n_transitions == 5  # == 2m-1


def test_single_symbol():
    oracle = build_oracle(["x"])
    assert oracle.n_states == 2
    assert oracle.n_transitions == 1
    assert oracle.suffix[1] == 0


def test_empty_rejected():
    with pytest.raises(CorpusAgentError):
        build_oracle([])


def test_factor_completeness_random():
    rng = np.random.default_rng(0)
    for _ in range(300):
        m = int(rng.integers(1, 13))
        alphabet = int(rng.integers(1, 5))
        word = [int(s) for s in rng.integers(0, alphabet, m)]
        oracle = build_oracle(word)
        assert oracle.n_states == m + 1
        assert m <= oracle.n_transitions <= 2 * m - 1 if m > 1 else oracle.n_transitions == 1
        for factor in all_factors(word):
            assert accepts(oracle, factor)


def test_online_extension_preserves_existing_spine():
    # building w ++ [a] keeps all transitions of build(w) (targets included)
    rng = np.random.default_rng(4)
    word = [int(s) for s in rng.integers(0, 3, 10)]
    partial = build_oracle(word[:6])
    full = build_oracle(word)
    for state in range(6):
        for symbol, target in partial.transitions[state].items():
            assert full.transitions[state][symbol] == target


def test_accepts_rejects_unseen_symbol():
    oracle = build_oracle([0, 1, 0])
    assert not accepts(oracle, [7])
    assert accepts(oracle, [0])
    assert accepts(oracle, [1, 0])


def test_serialization_roundtrip():
    word = [0, 1, 0, 0, 2, 1, 0]
    oracle = build_oracle(word)
    data = oracle.to_dict()
    clone = FactorOracle.from_dict(data)
    assert clone.to_dict() == data
    assert clone.transitions == oracle.transitions
    assert clone.suffix == oracle.suffix


def test_from_dict_detects_tampered_links():
    data = build_oracle([0, 1, 0]).to_dict()
    data["suffix"][-1] = 2
    with pytest.raises(CorpusAgentError):
        FactorOracle.from_dict(data)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=400))
def test_property_state_transition_bounds(word):
    oracle = build_oracle(word)
    m = len(word)
    assert oracle.n_states == m + 1
    assert m <= oracle.n_transitions <= max(2 * m - 1, 1)
    for i in range(1, m + 1):
        assert 0 <= oracle.suffix[i] < i  # links point strictly backwards


def test_bounds_hold_at_length_2000():
    rng = np.random.default_rng(2000)
    for alphabet in (1, 2, 4, 16):
        word = [int(s) for s in rng.integers(0, alphabet, 2000)]
        oracle = build_oracle(word)
        assert oracle.n_states == 2001
        assert 2000 <= oracle.n_transitions <= 3999


# ------------------------------------------------------------------- walk


def test_forward_only_walk_replays_then_holds():
    oracle = build_oracle(["a", "b", "c"])
    walk = WalkState.seeded(0)
    emitted = [walk_step(oracle, walk, 1.0)[1] for _ in range(7)]
    assert emitted == ["a", "b", "c", "c", "c", "c", "c"]
    assert walk.state == 3
    assert walk.last_move == "hold"


def test_backward_only_from_state_one():
    oracle = build_oracle(["a", "a", "b"])
    walk = WalkState.seeded(0)
    walk.state = 1
    _, symbol = walk_step(oracle, walk, 0.0)
    # relocate via S(1)=0, then forward from the root
    assert symbol == "a"
    assert walk.state == 1
    assert walk.last_move == "jump"


def test_backward_at_root_stays_at_root():
    oracle = build_oracle(["a", "b"])
    walk = WalkState.seeded(0)
    _, symbol = walk_step(oracle, walk, 0.0)
    assert symbol == "a"
    assert walk.state == 1


def test_seeded_walk_reproducible():
    oracle = build_oracle([0, 0, 1])
    trace_a = []
    walk = WalkState.seeded(123)
    for _ in range(10):
        _, s = walk_step(oracle, walk, 0.5)
        trace_a.append((s, walk.last_move, walk.state))
    walk = WalkState.seeded(123)
    trace_b = []
    for _ in range(10):
        _, s = walk_step(oracle, walk, 0.5)
        trace_b.append((s, walk.last_move, walk.state))
    assert trace_a == trace_b


def test_consecutive_forward_emissions_follow_edges():
    # any two successive emissions without a jump or hold in between spell a
    # transition path, hence a word the oracle accepts from somewhere
    rng = np.random.default_rng(9)
    word = [int(s) for s in rng.integers(0, 3, 12)]
    oracle = build_oracle(word)
    walk = WalkState.seeded(7)
    prev_state = walk.state
    prev = None
    for _ in range(200):
        state_before = walk.state
        _, symbol = walk_step(oracle, walk, 0.6)
        if walk.last_move == "forward" and prev is not None and prev[1] == state_before:
            # edge continuity: previous target is exactly where we left from
            assert oracle.transitions[state_before][symbol] == walk.state
        prev = (symbol, walk.state)


def test_walk_safety_fuzz():
    rng = np.random.default_rng(5)
    word = [int(s) for s in rng.integers(0, 4, 50)]
    oracle = build_oracle(word)
    alphabet = set(word)
    walk = WalkState.seeded(11)
    for i in range(2000):
        p = float(rng.uniform(0, 1))
        _, symbol = walk_step(oracle, walk, p)
        assert symbol in alphabet
        assert 0 <= walk.state <= oracle.m


def test_explore_uniform_over_forward_transitions():
    # from the root of [0,1,2] explore mode can take any of the three forward
    # transitions; spine-only mode always advances one step
    oracle = build_oracle([0, 1, 2])
    seen = set()
    for seed in range(40):
        walk = WalkState.seeded(seed)
        _, symbol = walk_step(oracle, walk, 1.0, explore=True)
        seen.add(symbol)
    assert seen == {0, 1, 2}
    walk = WalkState.seeded(0)
    assert walk_step(oracle, walk, 1.0)[1] == 0


def test_invalid_probability():
    oracle = build_oracle([0])
    with pytest.raises(CorpusAgentError):
        walk_step(oracle, WalkState.seeded(0), 1.5)
