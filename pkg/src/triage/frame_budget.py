"""Frame-level budgeting: importance scoring and adaptive temporal bucketing.

Every frame gets three raw component scores (scene change, motion,
query relevance). Each component is min-max normalized across the
candidates and the three are mixed with non-negative weights. Candidates
are then cut into K contiguous chronological buckets; every bucket gets
one keyframe and the rest of the budget is split in proportion to the
bucket score sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .apportion import apportion
from .errors import ConfigError, InputError


@dataclass(frozen=True)
class FrameFeatureSet:
    pixel_vectors: np.ndarray  # [N, D_p]
    embeddings: np.ndarray     # [N, D_e]
    timestamps: np.ndarray     # [N] strictly increasing

    @classmethod
    def build(cls, pixel_vectors, embeddings, timestamps=None) -> "FrameFeatureSet":
        pix = np.asarray(pixel_vectors, dtype=np.float64)
        emb = np.asarray(embeddings, dtype=np.float64)
        if pix.ndim != 2 or emb.ndim != 2:
            raise InputError("pixel_vectors and embeddings must be 2-D")
        n = pix.shape[0]
        if n < 1:
            raise InputError("need at least one candidate frame")
        if emb.shape[0] != n:
            raise InputError(f"{n} pixel rows but {emb.shape[0]} embedding rows")
        ts = np.arange(n, dtype=np.int64) if timestamps is None else np.asarray(timestamps, dtype=np.int64)
        if ts.shape != (n,):
            raise InputError(f"timestamps must have shape ({n},), got {ts.shape}")
        if n > 1 and np.any(np.diff(ts) <= 0):
            raise InputError("timestamps must be strictly increasing")
        if not (np.all(np.isfinite(pix)) and np.all(np.isfinite(emb))):
            raise InputError("frame features contain NaN or Inf")
        return cls(pix, emb, ts)

    @property
    def n_frames(self) -> int:
        return self.pixel_vectors.shape[0]


@dataclass(frozen=True)
class ScoreWeights:
    w_change: float = 1 / 3
    w_motion: float = 1 / 3
    w_relevance: float = 1 / 3

    def __post_init__(self):
        ws = (self.w_change, self.w_motion, self.w_relevance)
        if any(not np.isfinite(w) or w < 0 for w in ws) or sum(ws) <= 0:
            raise ConfigError(f"weights must be >= 0 with a positive sum, got {ws}")


@dataclass(frozen=True)
class FrameScoreTable:
    s_change: np.ndarray
    s_motion: np.ndarray
    s_relevance: np.ndarray
    s_frame: np.ndarray


@dataclass(frozen=True)
class BucketPlan:
    bucket_bounds: list[int]     # K + 1 boundaries, bucket k is [b[k], b[k+1])
    bucket_scores: list[float]   # W_k
    allocations: list[int]       # n_k
    clamped: bool = False

    @property
    def n_buckets(self) -> int:
        return len(self.allocations)

    def bucket_sizes(self) -> list[int]:
        return [b - a for a, b in zip(self.bucket_bounds, self.bucket_bounds[1:])]


@dataclass(frozen=True)
class KeyframeSelection:
    frame_indices: np.ndarray  # int64, ascending
    frame_scores: np.ndarray   # s_frame of the chosen frames
    bucket_of: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frame_indices)


def _row_norms(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", x, x))


def _cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine; 0 wherever either row has zero norm."""
    dots = np.einsum("ij,ij->i", a, b)
    denom = _row_norms(a) * _row_norms(b)
    out = np.zeros_like(dots)
    ok = denom > 0
    out[ok] = dots[ok] / denom[ok]
    return np.clip(out, -1.0, 1.0)


def scene_change_scores(frames: FrameFeatureSet) -> np.ndarray:
    """``1 - cos`` between each frame and its predecessor; frame 0 scores 0."""
    pix = frames.pixel_vectors
    raw = np.zeros(pix.shape[0])
    if pix.shape[0] > 1:
        raw[1:] = 1.0 - _cosine_rows(pix[:-1], pix[1:])
    return raw


def motion_scores(frames: FrameFeatureSet) -> np.ndarray:
    pix = frames.pixel_vectors
    raw = np.zeros(pix.shape[0])
    if pix.shape[0] > 1:
        raw[1:] = _row_norms(pix[1:] - pix[:-1])
    return raw


def relevance_scores(frames: FrameFeatureSet, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    emb = frames.embeddings
    if q.shape[0] != emb.shape[1]:
        raise InputError(f"query has dim {q.shape[0]}, frame embeddings have {emb.shape[1]}")
    if not np.all(np.isfinite(q)):
        raise InputError("query embedding contains NaN or Inf")
    return _cosine_rows(emb, np.broadcast_to(q, emb.shape))


def normalize_component(raw) -> np.ndarray:
    x = np.asarray(raw, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def frame_importance(frames: FrameFeatureSet, query, weights: ScoreWeights = ScoreWeights()) -> FrameScoreTable:
    s_change = normalize_component(scene_change_scores(frames))
    s_motion = normalize_component(motion_scores(frames))
    s_relevance = normalize_component(relevance_scores(frames, query))
    s_frame = (
        weights.w_change * s_change
        + weights.w_motion * s_motion
        + weights.w_relevance * s_relevance
    )
    return FrameScoreTable(s_change, s_motion, s_relevance, s_frame)


def bucket_bounds(n: int, k: int) -> list[int]:
    """Boundaries of ``k`` contiguous near-equal buckets; earlier ones take the surplus."""
    base, extra = divmod(n, k)
    bounds = [0]
    for i in range(k):
        bounds.append(bounds[-1] + base + (1 if i < extra else 0))
    return bounds


def bucket_allocate(score_table: FrameScoreTable, K: int, M: int) -> BucketPlan:
    scores = np.asarray(score_table.s_frame, dtype=np.float64)
    n = scores.shape[0]
    if K <= 0:
        raise ConfigError(f"bucket count must be positive, got {K}")
    if M <= 0:
        raise ConfigError(f"keyframe budget must be positive, got {M}")
    if M > n:
        raise ConfigError(f"keyframe budget {M} exceeds the {n} candidate frames")
    K = min(K, M)

    bounds = bucket_bounds(n, K)
    # sequential sums in index order keep W_k independent of any parallelism
    w = [float(sum(scores[a:b].tolist())) for a, b in zip(bounds, bounds[1:])]
    sizes = [b - a for a, b in zip(bounds, bounds[1:])]
    result = apportion(w, M - K, capacities=sizes, baseline=[1] * K)
    return BucketPlan(bounds, w, result.counts, result.clamped)


def top_indices(values: np.ndarray, k: int) -> np.ndarray:
    """Positions of the ``k`` largest values (ties to the lower position), ascending."""
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-np.asarray(values, dtype=np.float64), kind="stable")
    return np.sort(order[:k]).astype(np.int64)


def select_keyframes(score_table: FrameScoreTable, plan: BucketPlan) -> KeyframeSelection:
    scores = np.asarray(score_table.s_frame, dtype=np.float64)
    if plan.bucket_bounds[-1] != scores.shape[0]:
        raise ConfigError("bucket plan does not cover the score table")
    picked, owner = [], []
    for k, (a, b) in enumerate(zip(plan.bucket_bounds, plan.bucket_bounds[1:])):
        local = top_indices(scores[a:b], plan.allocations[k])
        picked.append(local + a)
        owner.extend([k] * len(local))
    idx = np.concatenate(picked) if picked else np.empty(0, dtype=np.int64)
    return KeyframeSelection(idx, scores[idx], owner)


def select_frames(frames: FrameFeatureSet, query, weights: ScoreWeights, K: int, M: int):
    """Score, bucket and select in one call; returns (table, plan, selection)."""
    table = frame_importance(frames, query, weights)
    plan = bucket_allocate(table, K, M)
    return table, plan, select_keyframes(table, plan)
