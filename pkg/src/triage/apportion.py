"""Largest-remainder (Hamilton) apportionment with capacity clamping.

Quotas are computed in exact rational arithmetic so that floors and
remainders never depend on float rounding; ties always go to the lower
index.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import ConfigError


@dataclass(frozen=True)
class Apportionment:
    counts: list[int]
    ideal_num: list[int]  # ideal (baseline + proportional) share per slot, times ideal_den
    ideal_den: int
    clamped: bool         # whether any capacity bound was hit

    @property
    def quotas(self) -> list[Fraction]:
        return [Fraction(x, self.ideal_den) for x in self.ideal_num]


def _numerators(weights: Sequence[float]) -> list[int]:
    """Integer numerators of the weights over a shared power-of-two denominator."""
    ratios = []
    for w in weights:
        w = float(w)
        if not math.isfinite(w) or w < 0:
            raise ConfigError(f"apportionment weights must be finite and >= 0, got {w}")
        ratios.append(w.as_integer_ratio())
    if not ratios:
        return []
    den = max(d for _, d in ratios)
    return [p * (den // d) for p, d in ratios]


def _share_numerators(weights: Sequence[float], total: int) -> tuple[list[int], int]:
    """Exact shares of ``total`` as integer numerators over one common denominator."""
    nums = _numerators(weights)
    s = sum(nums)
    if s == 0:
        return [total] * len(nums), max(len(nums), 1)
    return [total * x for x in nums], s


def quotas(weights: Sequence[float], total: int) -> list[Fraction]:
    """Exact proportional shares of ``total``; equal shares if all weights are 0."""
    nums, den = _share_numerators(weights, total)
    return [Fraction(x, den) for x in nums]


def largest_remainder(q: Sequence[Fraction], total: int) -> list[int]:
    floors = [math.floor(x) for x in q]
    leftover = total - sum(floors)
    order = sorted(range(len(q)), key=lambda k: (-(q[k] - floors[k]), k))
    for k in order[:leftover]:
        floors[k] += 1
    return floors


def apportion(
    weights: Sequence[float],
    total: int,
    capacities: Sequence[int] | None = None,
    baseline: Sequence[int] | None = None,
) -> Apportionment:
    """Split ``total`` units across slots in proportion to ``weights``.

    Each slot first receives its ``baseline`` units. If a slot's count then
    exceeds its capacity, the surplus goes one unit at a time to the
    unclamped slot whose count lags its ideal share the most (ties to the
    lower index). Units that fit nowhere are dropped, so the result sums to
    ``min(total + sum(baseline), sum(capacities))``.
    """
    n = len(weights)
    if total < 0:
        raise ConfigError(f"cannot apportion a negative total ({total})")
    base = [0] * n if baseline is None else [int(b) for b in baseline]
    if len(base) != n:
        raise ConfigError("baseline length does not match weights")

    nums, den = _share_numerators(weights, total)
    floors = [x // den for x in nums]
    order = sorted(range(n), key=lambda k: (-(nums[k] % den), k))
    for k in order[: total - sum(floors)]:
        floors[k] += 1
    counts = [b + e for b, e in zip(base, floors)]
    ideal = [b * den + x for b, x in zip(base, nums)]
    if capacities is None:
        return Apportionment(counts, ideal, den, False)

    caps = [int(c) for c in capacities]
    if len(caps) != n:
        raise ConfigError("capacities length does not match weights")
    surplus = 0
    clamped = False
    for k in range(n):
        if counts[k] > caps[k]:
            surplus += counts[k] - caps[k]
            counts[k] = caps[k]
            clamped = True
    heap = [(counts[k] * den - ideal[k], k) for k in range(n) if counts[k] < caps[k]]
    heapq.heapify(heap)
    while surplus > 0 and heap:
        _, k = heapq.heappop(heap)
        counts[k] += 1
        surplus -= 1
        if counts[k] < caps[k]:
            heapq.heappush(heap, (counts[k] * den - ideal[k], k))
    return Apportionment(counts, ideal, den, clamped)
