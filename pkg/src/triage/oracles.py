"""Slow reference implementations for cross-checking the engine.

Nothing here imports engine code: every quantity is recomputed with plain
Python loops over Python floats, so an agreement is evidence rather than
a tautology. Only meant for small inputs.
"""

from __future__ import annotations

import math


def _as_list(x):
    return x.tolist() if hasattr(x, "tolist") else list(x)


def naive_token_importance(attention) -> list[float]:
    a = _as_list(attention)
    h_count = len(a)
    q_count = len(a[0])
    v_count = len(a[0][0])
    totals = [0.0] * v_count
    for h in range(h_count):
        for i in range(q_count):
            row = a[h][i]
            for j in range(v_count):
                totals[j] += float(row[j])
    denom = q_count * h_count
    return [t / denom for t in totals]


def exhaustive_topk(values, k: int) -> list[int]:
    vals = [float(v) for v in _as_list(values)]
    if not 0 <= k <= len(vals):
        raise ValueError(f"k={k} outside [0, {len(vals)}]")
    ranked = sorted(range(len(vals)), key=lambda i: (-vals[i], i))
    return sorted(ranked[:k])


def _cos(u, v) -> float:
    dot = nu = nv = 0.0
    for a, b in zip(u, v):
        dot += a * b
        nu += a * a
        nv += b * b
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot / (math.sqrt(nu) * math.sqrt(nv))


def _adjusted(i, penalty_set, lam, keys, scores) -> float:
    if not penalty_set:
        return scores[i]
    worst = max(_cos(keys[i], keys[s]) for s in penalty_set)
    return scores[i] - lam * worst


def direct_mmr_eval(candidates, seeds, m, lam, keys, scores) -> list[int]:
    cand = [int(c) for c in _as_list(candidates)]
    seeds = [int(s) for s in _as_list(seeds)]
    keys = _as_list(keys)
    scores = [float(s) for s in _as_list(scores)]
    adjusted = [_adjusted(c, seeds, lam, keys, scores) for c in cand]
    m = min(max(m, 0), len(cand))
    return sorted(cand[p] for p in exhaustive_topk(adjusted, m))


def classic_sequential_mmr(candidates, seeds, m, lam, keys, scores) -> list[int]:
    """Greedy MMR where each pick joins the penalty set of later picks."""
    remaining = [int(c) for c in _as_list(candidates)]
    penalty = [int(s) for s in _as_list(seeds)]
    keys = _as_list(keys)
    scores = [float(s) for s in _as_list(scores)]
    chosen = []
    for _ in range(min(max(m, 0), len(remaining))):
        best, best_val = None, -math.inf
        for c in sorted(remaining):
            val = _adjusted(c, penalty, lam, keys, scores)
            if best is None or val > best_val:
                best, best_val = c, val
        chosen.append(best)
        remaining.remove(best)
        penalty.append(best)
    return sorted(chosen)
