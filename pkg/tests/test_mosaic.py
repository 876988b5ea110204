"""Weighted KNN against brute-force oracles, plus reactive selection."""

import numpy as np
import pytest

from corpus_agent import agent, features, mosaic
from corpus_agent.corpus import load_wav
from corpus_agent.errors import CorpusAgentError, ValidationError
from corpus_agent.features import RunningStats
from corpus_agent.model import MOSAIC_DIMS
from corpus_agent.mosaic import (
    FeatureWeights,
    MosaicTarget,
    knn_query,
    reactive_step,
    target_from_point,
    target_from_stats,
)


def brute_force_order(space, target, weights):
    """Independent oracle: full weighted sort with id tie-breaking."""
    d2 = ((space - target) ** 2 * weights).sum(axis=1)
    return sorted(range(len(space)), key=lambda i: (d2[i], i))


def random_target(rng):
    return MosaicTarget(vector=rng.uniform(-1, 1, MOSAIC_DIMS))


def test_self_match_first(tone_model):
    space = tone_model.mosaic_matrix()
    rng = np.random.default_rng(0)
    for j in (0, 3, tone_model.num_segments - 1):
        weights = FeatureWeights(rng.uniform(0.1, 2.0, MOSAIC_DIMS))
        result = knn_query(tone_model, MosaicTarget(vector=space[j]), weights, k=1)
        assert result[0] == j or np.allclose(space[result[0]], space[j])


def test_one_hot_centroid_matches_1d_sort(tone_model):
    space = tone_model.mosaic_matrix()
    weights = FeatureWeights.preset("centroid")
    col = mosaic.AXIS_DIMS["centroid"]
    rng = np.random.default_rng(1)
    for _ in range(10):
        target = random_target(rng)
        got = knn_query(tone_model, target, weights, k=tone_model.num_segments)
        expected = sorted(range(len(space)),
                          key=lambda i: (abs(space[i, col] - target.vector[col]) ** 2, i))
        d_got = [abs(space[i, col] - target.vector[col]) for i in got]
        d_exp = [abs(space[i, col] - target.vector[col]) for i in expected]
        np.testing.assert_allclose(d_got, d_exp, atol=1e-12)


def test_matches_brute_force_all_k(tone_model):
    rng = np.random.default_rng(2)
    space = tone_model.mosaic_matrix()
    for _ in range(50):
        weights_values = rng.uniform(0, 3, MOSAIC_DIMS)
        weights_values[rng.integers(MOSAIC_DIMS)] = 1.0  # keep at least one active
        weights = FeatureWeights(weights_values)
        target = random_target(rng)
        expected = brute_force_order(space, target.vector, weights.values)
        got = knn_query(tone_model, target, weights, k=tone_model.num_segments)
        assert got == expected


def test_k_monotonicity(tone_model):
    rng = np.random.default_rng(3)
    target = random_target(rng)
    weights = FeatureWeights.uniform()
    previous = []
    for k in range(1, tone_model.num_segments + 1):
        got = knn_query(tone_model, target, weights, k=k)
        assert got[: len(previous)] == previous
        previous = got


def test_k_clamps_to_numdata(tone_model):
    got = knn_query(tone_model, random_target(np.random.default_rng(4)),
                    FeatureWeights.uniform(), k=10_000)
    assert len(got) == tone_model.num_segments


def test_zero_weight_dimension_ignored(tone_model):
    rng = np.random.default_rng(5)
    values = rng.uniform(0.5, 1.5, MOSAIC_DIMS)
    values[0] = 0.0
    weights = FeatureWeights(values)
    target = random_target(rng)
    base = knn_query(tone_model, target, weights, k=5)
    shifted = MosaicTarget(vector=target.vector.copy())
    shifted.vector[0] = -shifted.vector[0]
    assert knn_query(tone_model, shifted, weights, k=5) == base


def test_uniform_k1_equals_argmin(tone_model):
    space = tone_model.mosaic_matrix()
    rng = np.random.default_rng(6)
    weights = FeatureWeights.uniform()
    for _ in range(25):
        target = random_target(rng)
        got = knn_query(tone_model, target, weights, k=1)[0]
        assert got == brute_force_order(space, target.vector, weights.values)[0]


def test_weight_validation():
    with pytest.raises(ValidationError):
        FeatureWeights(np.full(MOSAIC_DIMS, -1.0))
    with pytest.raises(ValidationError):
        FeatureWeights(np.zeros(3))
    FeatureWeights(np.zeros(MOSAIC_DIMS)).values  # all-zero constructs...
    with pytest.raises(ValidationError):
        FeatureWeights(np.zeros(MOSAIC_DIMS)).require_active()  # ...but cannot query
    with pytest.raises(ValidationError):
        FeatureWeights.preset("nope")


def test_target_from_point(tone_model):
    target = target_from_point(tone_model, {"centroid": 0.25, "periodicity": -0.5})
    assert target.vector[mosaic.AXIS_DIMS["centroid"]] == 0.25
    assert target.vector[mosaic.AXIS_DIMS["periodicity"]] == -0.5
    with pytest.raises(ValidationError):
        target_from_point(tone_model, {"bogus": 0.0})


def test_reactive_replay_self_retrieval(tone_model):
    seg = tone_model.segments[5]
    buf = load_wav(tone_model.manifest.entries[seg.source_index].path)
    rows = agent._segment_feature_rows(buf, [seg])[0]
    stats = RunningStats().update_rows(rows)
    got = reactive_step(tone_model, stats, FeatureWeights.uniform(), True)
    space = tone_model.mosaic_matrix()
    assert got == 5 or np.allclose(space[got][:31], space[5][:31], atol=1e-6)


def test_reactive_silence_deterministic(tone_model):
    stats = RunningStats().update_rows(features.analyze_frames(np.zeros((3, 1024))))
    first = reactive_step(tone_model, stats, FeatureWeights.uniform(), True)
    second = reactive_step(tone_model, stats, FeatureWeights.uniform(), True)
    assert first == second
    assert 0 <= first < tone_model.num_segments


def test_reactive_gate_closed_returns_none(tone_model):
    stats = RunningStats().update(np.zeros(25))
    assert reactive_step(tone_model, stats, FeatureWeights.uniform(), False) is None


def test_reactive_needs_frames(tone_model):
    with pytest.raises(CorpusAgentError):
        reactive_step(tone_model, RunningStats(), FeatureWeights.uniform(), True)


def test_target_from_stats_clamped(tone_model):
    stats = RunningStats()
    row = np.zeros(25)
    row[features.IDX["centroid"]] = 1e9  # way outside the corpus range
    stats.update(row)
    target = target_from_stats(tone_model, stats)
    assert target.vector.max() <= 1.0 and target.vector.min() >= -1.0
