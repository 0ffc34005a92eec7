import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from triage.errors import ConfigError, InputError
from triage.frame_budget import (
    BucketPlan,
    FrameFeatureSet,
    FrameScoreTable,
    ScoreWeights,
    bucket_allocate,
    bucket_bounds,
    frame_importance,
    motion_scores,
    normalize_component,
    relevance_scores,
    scene_change_scores,
    select_keyframes,
)


def feats(pixels, embeddings=None):
    pixels = np.asarray(pixels, dtype=float)
    if embeddings is None:
        embeddings = np.ones((len(pixels), 2))
    return FrameFeatureSet.build(pixels, embeddings)


def table(scores):
    s = np.asarray(scores, dtype=float)
    z = np.zeros_like(s)
    return FrameScoreTable(z, z, z, s)


def naive_cos(u, v):
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0 or nv == 0:
        return 0.0
    return sum(a * b for a, b in zip(u, v)) / (nu * nv)


def naive_minmax(xs):
    lo, hi = min(xs), max(xs)
    return [0.0] * len(xs) if hi == lo else [(x - lo) / (hi - lo) for x in xs]


# --- component scores -------------------------------------------------------

def test_scene_change_identical_frames():
    np.testing.assert_allclose(scene_change_scores(feats([[3, 4], [3, 4]])), [0, 0], atol=1e-12)


def test_scene_change_orthogonal():
    np.testing.assert_allclose(scene_change_scores(feats([[1, 0], [0, 1]])), [0, 1])


def test_scene_change_45_degrees():
    r = 1 / math.sqrt(2)
    got = scene_change_scores(feats([[1, 0], [r, r]]))
    np.testing.assert_allclose(got, [0, 1 - math.sqrt(2) / 2], atol=1e-12)
    assert got[1] == pytest.approx(0.2929, abs=1e-4)


def test_scene_change_blank_frame_counts_as_full_change():
    np.testing.assert_allclose(scene_change_scores(feats([[1, 0], [0, 0], [0, 0]])), [0, 1, 1])


def test_motion_static_and_345():
    assert np.all(motion_scores(feats([[1, 2]] * 4)) == 0)
    np.testing.assert_allclose(motion_scores(feats([[0, 0], [3, 4]])), [0, 5])


def test_motion_matches_naive(rng):
    pix = rng.standard_normal((3, 7))
    want = [0.0] + [math.sqrt(sum((a - b) ** 2 for a, b in zip(pix[i], pix[i - 1]))) for i in (1, 2)]
    np.testing.assert_allclose(motion_scores(feats(pix)), want, atol=1e-6)


def test_relevance_examples():
    r = 1 / math.sqrt(2)
    f = feats(np.zeros((3, 1)), [[1, 0], [0, 1], [r, r]])
    np.testing.assert_allclose(relevance_scores(f, [1, 0]), [1, 0, math.sqrt(2) / 2], atol=1e-12)
    f = feats(np.zeros((2, 1)), [[2, 1], [-2, -1]])
    np.testing.assert_allclose(relevance_scores(f, [2, 1]), [1, -1], atol=1e-12)


def test_relevance_dimension_mismatch():
    with pytest.raises(InputError):
        relevance_scores(feats(np.zeros((2, 1))), [1, 0, 0])


def test_feature_set_validation():
    with pytest.raises(InputError):
        FrameFeatureSet.build(np.zeros((2, 3)), np.zeros((3, 2)))
    with pytest.raises(InputError):
        FrameFeatureSet.build(np.zeros((2, 3)), np.zeros((2, 2)), timestamps=[1, 1])
    with pytest.raises(InputError):
        FrameFeatureSet.build(np.array([[np.nan]]), np.zeros((1, 2)))


# --- normalization ----------------------------------------------------------

def test_normalize_examples():
    np.testing.assert_allclose(normalize_component([2, 4, 6]), [0, 0.5, 1])
    assert list(normalize_component([5, 5, 5])) == [0, 0, 0]


@given(
    hnp.arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e3, 1e3)),
    st.floats(1e-2, 1e2),
    st.floats(-1e3, 1e3),
)
def test_normalize_affine_invariance(x, a, b):
    assume(np.ptp(x) > 1e-3 or np.ptp(x) == 0)
    base = normalize_component(x)
    np.testing.assert_allclose(normalize_component(a * x + b), base, atol=1e-8)
    np.testing.assert_allclose(base, naive_minmax(list(x)), atol=1e-12)
    assert np.all((base >= 0) & (base <= 1))


# --- combined score ---------------------------------------------------------

def test_change_only_weights_isolate_component(rng):
    f = FrameFeatureSet.build(rng.standard_normal((6, 5)), rng.standard_normal((6, 4)))
    t = frame_importance(f, rng.standard_normal(4), ScoreWeights(1, 0, 0))
    assert np.array_equal(t.s_frame, t.s_change)
    assert np.array_equal(t.s_change, normalize_component(scene_change_scores(f)))


def test_planted_relevant_frame_is_unique_argmax(rng):
    q = np.array([0.0, 0.0, 1.0, 0.0])
    emb = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 1.0, 0], [0, 0, 0, 1.0], [1.0, 1.0, 0, 0]])
    f = FrameFeatureSet.build(rng.standard_normal((5, 3)), emb)
    s = frame_importance(f, q, ScoreWeights(0, 0, 1)).s_frame
    assert np.argmax(s) == 2 and np.sum(s == s.max()) == 1


def test_combined_matches_straight_line_evaluation(rng):
    pix = rng.standard_normal((4, 6))
    emb = rng.standard_normal((4, 3))
    q = rng.standard_normal(3)
    w = (0.3, 0.3, 0.4)
    got = frame_importance(FrameFeatureSet.build(pix, emb), q, ScoreWeights(*w))

    change = [0.0] + [1 - naive_cos(pix[i - 1], pix[i]) for i in range(1, 4)]
    motion = [0.0] + [math.dist(pix[i], pix[i - 1]) for i in range(1, 4)]
    rel = [naive_cos(e, q) for e in emb]
    comps = [naive_minmax(c) for c in (change, motion, rel)]
    want = [w[0] * comps[0][i] + w[1] * comps[1][i] + w[2] * comps[2][i] for i in range(4)]
    np.testing.assert_allclose(got.s_frame, want, atol=1e-6)
    assert np.array_equal(
        got.s_frame, 0.3 * got.s_change + 0.3 * got.s_motion + 0.4 * got.s_relevance
    )


def test_weights_validation():
    with pytest.raises(ConfigError):
        ScoreWeights(0, 0, 0)
    with pytest.raises(ConfigError):
        ScoreWeights(-1, 1, 1)


def rank_of(scores, i):
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    return order.index(i)


@given(
    st.lists(st.integers(-8, 8), min_size=3, max_size=8),
    st.data(),
)
def test_relevance_increase_never_lowers_rank(raw_rel, data):
    """Monotonicity under s_frame rank with the other raw inputs fixed.

    Relevance is fed through embeddings on the unit circle so the raw cosine
    equals a chosen value exactly enough; pixel inputs stay fixed.
    """
    n = len(raw_rel)
    i = data.draw(st.integers(0, n - 1))
    bump = data.draw(st.integers(1, 8))
    pix = np.array([[1.0 + k, (k * 7) % 5] for k in range(n)])
    q = np.array([1.0, 0.0])

    def embeddings(vals):
        angles = np.arccos(np.clip(np.asarray(vals) / 8.0, -1, 1))
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)

    w = ScoreWeights(0.25, 0.25, 0.5)
    before = frame_importance(FrameFeatureSet.build(pix, embeddings(raw_rel)), q, w).s_frame
    raised = list(raw_rel)
    raised[i] = min(8, raised[i] + bump)
    after = frame_importance(FrameFeatureSet.build(pix, embeddings(raised)), q, w).s_frame
    assert rank_of(list(after), i) <= rank_of(list(before), i)


# --- bucketing --------------------------------------------------------------

def test_bucket_bounds_front_loaded():
    assert bucket_bounds(10, 4) == [0, 3, 6, 8, 10]
    assert bucket_bounds(4, 4) == [0, 1, 2, 3, 4]


def test_baseline_exhausts_budget(rng):
    plan = bucket_allocate(table(rng.uniform(size=6)), K=2, M=2)
    assert plan.allocations == [1, 1]


def test_spec_allocation_example():
    # buckets [0,3) and [3,6) with W = [3, 1]
    plan = bucket_allocate(table([1, 1, 1, 0.5, 0.25, 0.25]), K=2, M=4)
    assert plan.bucket_scores == [3.0, 1.0]
    assert plan.allocations == [3, 1]


def test_one_frame_per_bucket_forced(rng):
    assert bucket_allocate(table(rng.uniform(size=4)), K=4, M=4).allocations == [1, 1, 1, 1]


def test_k_reduced_when_budget_smaller():
    plan = bucket_allocate(table(np.ones(10)), K=8, M=3)
    assert plan.n_buckets == 3 and plan.allocations == [1, 1, 1]
    assert plan.bucket_bounds == [0, 4, 7, 10]


def test_zero_scores_round_robin():
    plan = bucket_allocate(table(np.zeros(12)), K=3, M=8)
    assert plan.allocations == [3, 3, 2]


def test_capacity_clamping():
    # sizes [2,2,2]; W=[0,0,6]: extras 3 all to bucket 2, capped at 2
    plan = bucket_allocate(table([0, 0, 0, 0, 3, 3]), K=3, M=6)
    assert plan.allocations == [2, 2, 2] and plan.clamped


@pytest.mark.parametrize("K,M", [(0, 2), (2, 0), (2, 7)])
def test_bucket_errors(K, M):
    with pytest.raises(ConfigError):
        bucket_allocate(table(np.ones(6)), K=K, M=M)


# --- keyframe selection -----------------------------------------------------

def test_equal_scores_take_first_frames():
    plan = BucketPlan([0, 3, 6], [3.0, 3.0], [2, 1])
    sel = select_keyframes(table(np.ones(6)), plan)
    assert sel.frame_indices.tolist() == [0, 1, 3]


def test_top_two_within_bucket():
    plan = BucketPlan([0, 3], [1.5], [2])
    sel = select_keyframes(table([0.1, 0.9, 0.5]), plan)
    assert sel.frame_indices.tolist() == [1, 2]
    assert sel.frame_scores.tolist() == [0.9, 0.5]


def test_saturated_bucket_selected_whole():
    plan = BucketPlan([0, 2, 5], [1.0, 1.0], [2, 1])
    sel = select_keyframes(table([0.2, 0.1, 0.3, 0.9, 0.0]), plan)
    assert sel.frame_indices.tolist() == [0, 1, 3]


@given(
    st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=40),
    st.integers(1, 12),
    st.data(),
)
def test_budget_conservation_and_coverage(scores, K, data):
    M = data.draw(st.integers(1, len(scores)))
    t = table(scores)
    plan = bucket_allocate(t, K, M)
    sel = select_keyframes(t, plan)
    assert len(sel) == M
    assert np.all(np.diff(sel.frame_indices) > 0)
    assert np.array_equal(sel.frame_scores, t.s_frame[sel.frame_indices])
    b = plan.bucket_bounds
    for k in range(plan.n_buckets):
        assert np.any((sel.frame_indices >= b[k]) & (sel.frame_indices < b[k + 1]))


def test_relevance_only_weights_equal_selection_by_relevance(rng):
    f = FrameFeatureSet.build(rng.standard_normal((20, 5)), rng.standard_normal((20, 4)))
    q = rng.standard_normal(4)
    t = frame_importance(f, q, ScoreWeights(0, 0, 1))
    rel = normalize_component(relevance_scores(f, q))
    sel_a = select_keyframes(t, bucket_allocate(t, 4, 7))
    t_rel = table(rel)
    sel_b = select_keyframes(t_rel, bucket_allocate(t_rel, 4, 7))
    assert sel_a.frame_indices.tolist() == sel_b.frame_indices.tolist()


def test_deterministic_tables(rng):
    f = FrameFeatureSet.build(rng.standard_normal((30, 8)), rng.standard_normal((30, 4)))
    q = rng.standard_normal(4)
    a = frame_importance(f, q)
    b = frame_importance(f, q)
    assert a.s_frame.tobytes() == b.s_frame.tobytes()
    assert bucket_allocate(a, 5, 11) == bucket_allocate(b, 5, 11)
