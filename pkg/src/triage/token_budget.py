"""Token-level budgeting over the visual tokens of the selected keyframes.

Tokens are laid out frame-major: keyframe ``f`` owns token positions
``[f*T, (f+1)*T)``. The budget is spent in two phases. Core tokens are the
global top scorers under cross-attention importance. The remaining budget
is split across frames in proportion to their frame scores and each frame
fills its share with a few seed tokens plus context tokens picked by a
one-shot MMR pass (penalty measured against the seeds only).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .apportion import apportion
from .errors import ConfigError, ConsistencyError, InputError
from .frame_budget import KeyframeSelection, top_indices


@dataclass(frozen=True)
class BudgetConfig:
    total_budget: int | None = None   # B_T; takes precedence over retention
    retention: float | None = 0.5     # B_T = round(retention * N_v)
    core_ratio: float = 0.25
    seeds_per_frame: int = 4
    lam: float = 0.5

    def __post_init__(self):
        if self.total_budget is None and self.retention is None:
            raise ConfigError("either total_budget or retention must be set")
        if self.total_budget is not None and self.total_budget < 0:
            raise ConfigError(f"total budget must be >= 0, got {self.total_budget}")
        if self.retention is not None and not 0 < self.retention <= 1:
            raise ConfigError(f"retention ratio must lie in (0, 1], got {self.retention}")
        if not 0 <= self.core_ratio <= 1:
            raise ConfigError(f"core ratio must lie in [0, 1], got {self.core_ratio}")
        if self.seeds_per_frame < 0:
            raise ConfigError("seeds per frame must be >= 0")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError(f"lambda must be finite and >= 0, got {self.lam}")

    def resolve_total(self, n_tokens: int) -> int:
        if self.total_budget is not None:
            if self.total_budget > n_tokens:
                raise ConfigError(f"token budget {self.total_budget} exceeds the {n_tokens} available tokens")
            return int(self.total_budget)
        return round_half_up(self.retention * n_tokens)

    def core_budget(self, total: int) -> int:
        b = math.floor(self.core_ratio * total)
        if total >= 1 and self.core_ratio > 0:
            b = max(b, 1)
        return min(b, total)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class FrameTokens:
    frame: int            # position of the keyframe within the selection
    budget: int           # B(f)
    seeds: np.ndarray
    context: np.ndarray


@dataclass(frozen=True)
class TokenSelection:
    core: np.ndarray
    per_frame: list[FrameTokens]
    final: np.ndarray
    total_budget: int = 0
    core_budget: int = 0


def token_importance(attention) -> np.ndarray:
    """Mean attention each visual token receives over heads and query tokens."""
    a = np.asarray(attention)
    if a.ndim != 3 or 0 in a.shape:
        raise InputError(f"attention must be a non-empty [H, N_q, N_v] tensor, got shape {a.shape}")
    h, nq, _ = a.shape
    acc = a[0].astype(np.float64).sum(axis=0)
    for head in range(1, h):
        acc += a[head].astype(np.float64).sum(axis=0)
    return acc / (nq * h)


def select_core(scores, b_core: int) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if not 0 <= b_core <= s.shape[0]:
        raise ConfigError(f"core budget {b_core} outside [0, {s.shape[0]}]")
    return top_indices(s, b_core)


def distribute_context_budget(frame_scores, b_context: int, capacities) -> list[int]:
    """Split ``b_context`` across frames in proportion to their frame scores."""
    return apportion(list(frame_scores), int(b_context), capacities=list(capacities)).counts


def select_seeds(candidates, scores, k_s: int, frame_budget: int) -> np.ndarray:
    cand = np.asarray(candidates, dtype=np.int64)
    k = min(k_s, frame_budget, cand.shape[0])
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    return np.sort(cand[top_indices(s[cand], k)])


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine between rows of ``a`` and ``b``; 0 for zero-norm rows."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    # elementwise products reduced per pair: identical rows give identical results
    # wherever they sit, which matmul blocking does not guarantee
    dots = (a[:, None, :] * b[None, :, :]).sum(axis=-1)
    na = np.sqrt((a * a).sum(axis=-1))
    nb = np.sqrt((b * b).sum(axis=-1))
    denom = na[:, None] * nb[None, :]
    out = np.zeros_like(dots)
    np.divide(dots, denom, out=out, where=denom > 0)
    return out


def mmr_adjusted_scores(candidates, seeds, lam: float, keys, scores) -> np.ndarray:
    cand = np.asarray(candidates, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)[cand]
    seeds = np.asarray(seeds, dtype=np.int64)
    if seeds.size == 0 or cand.size == 0:
        return s
    sim = cosine_matrix(keys[cand], keys[seeds])
    return s - lam * sim.max(axis=1)


def batched_mmr(candidates, seeds, m: int, lam: float, keys, scores) -> np.ndarray:
    """Top-``m`` candidates by relevance minus ``lam`` times max similarity to a seed.

    The penalty set is the seed set alone; chosen context tokens never join
    it, so all adjusted scores come from a single vectorized pass.
    """
    cand = np.asarray(candidates, dtype=np.int64)
    if m <= 0 or cand.size == 0:
        return np.empty(0, dtype=np.int64)
    adjusted = mmr_adjusted_scores(cand, seeds, lam, np.asarray(keys), scores)
    return np.sort(cand[top_indices(adjusted, min(m, cand.size))])


def assemble_selection(core, per_frame: list[FrameTokens], total_budget: int = 0, core_budget: int = 0) -> TokenSelection:
    core = np.sort(np.asarray(core, dtype=np.int64))
    parts = [core] + [p for ft in per_frame for p in (ft.seeds, ft.context)]
    allidx = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    final = np.unique(allidx)
    if final.size != allidx.size:
        raise ConsistencyError("core, seed and context token sets overlap")
    return TokenSelection(core, per_frame, final, total_budget, core_budget)


def worker_count() -> int:
    raw = os.environ.get("TRIAGE_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"TRIAGE_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("TRIAGE_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def run_token_budgeting(attention, keys, keyframes: KeyframeSelection, config: BudgetConfig, threads: int | None = None) -> TokenSelection:
    a = np.asarray(attention)
    keys = np.asarray(keys)
    if a.ndim != 3:
        raise InputError(f"attention must be [H, N_q, N_v], got shape {a.shape}")
    n_v = a.shape[2]
    n_frames = len(keyframes)
    if n_frames == 0 or n_v % n_frames:
        raise InputError(f"{n_v} visual tokens cannot be split evenly over {n_frames} keyframes")
    if keys.ndim != 2 or keys.shape[0] != n_v:
        raise InputError(f"key states must be [{n_v}, D_k], got shape {keys.shape}")
    t = n_v // n_frames

    scores = token_importance(a)
    total = config.resolve_total(n_v)
    core = select_core(scores, config.core_budget(total))
    b_context = total - core.size

    in_core = np.zeros(n_v, dtype=bool)
    in_core[core] = True
    candidates = [
        np.arange(f * t, (f + 1) * t, dtype=np.int64)[~in_core[f * t:(f + 1) * t]]
        for f in range(n_frames)
    ]
    budgets = distribute_context_budget(keyframes.frame_scores, b_context, [c.size for c in candidates])

    def fill(f: int) -> FrameTokens:
        seeds = select_seeds(candidates[f], scores, config.seeds_per_frame, budgets[f])
        rest = np.setdiff1d(candidates[f], seeds, assume_unique=True)
        m = max(0, budgets[f] - seeds.size)
        context = batched_mmr(rest, seeds, m, config.lam, keys, scores)
        return FrameTokens(f, budgets[f], seeds, context)

    n_workers = worker_count() if threads is None else max(1, threads)
    if n_workers > 1 and n_frames > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            per_frame = list(pool.map(fill, range(n_frames)))
    else:
        per_frame = [fill(f) for f in range(n_frames)]

    sel = assemble_selection(core, per_frame, total, core.size)
    if sel.final.size != min(total, n_v):
        raise ConsistencyError(f"selected {sel.final.size} tokens for a budget of {total}")
    return sel
