"""Engine-vs-oracle equivalence checks on random instances or a scenario."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import oracles
from .token_budget import batched_mmr, select_core, select_seeds, token_importance

MMR_LAMBDAS = (0.0, 0.3, 0.7, 1.5)
IMPORTANCE_RTOL = 1e-6


@dataclass
class CheckTally:
    passed: int = 0
    failed: int = 0
    failures: list = field(default_factory=list)

    def record(self, ok: bool, detail=None) -> None:
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            if len(self.failures) < 5:
                self.failures.append(detail)


@dataclass
class VerifyReport:
    checks: dict[str, CheckTally] = field(default_factory=dict)
    overlap: list[float] = field(default_factory=list)
    overlap_lambda0: list[float] = field(default_factory=list)

    def tally(self, name: str) -> CheckTally:
        return self.checks.setdefault(name, CheckTally())

    @property
    def ok(self) -> bool:
        return all(t.failed == 0 for t in self.checks.values())

    def lines(self) -> list[str]:
        out = []
        for name, t in self.checks.items():
            total = t.passed + t.failed
            out.append(f"{name}: {t.passed}/{total} {'PASS' if t.failed == 0 else 'FAIL'}")
            for f in t.failures:
                out.append(f"  failure: {f}")
        if self.overlap:
            out.append(f"batched_vs_classic_mmr_overlap: mean={np.mean(self.overlap):.4f} n={len(self.overlap)}")
        if self.overlap_lambda0:
            out.append(f"batched_vs_classic_mmr_overlap_lambda0: mean={np.mean(self.overlap_lambda0):.4f}")
        out.append("RESULT: " + ("PASS" if self.ok else "FAIL"))
        return out


def close(engine, oracle, rtol: float = IMPORTANCE_RTOL) -> bool:
    e = np.asarray(engine, dtype=np.float64)
    o = np.asarray(oracle, dtype=np.float64)
    return e.shape == o.shape and bool(np.all(np.abs(e - o) <= rtol * np.abs(o)))


def random_mmr_instance(rng: np.random.Generator, lam: float, max_tokens: int = 64, key_dim: int = 8):
    n_v = int(rng.integers(2, max_tokens + 1))
    scores = rng.uniform(0, 1, n_v)
    if rng.uniform() < 0.3:
        scores = np.round(scores * 4) / 4  # force score ties
    keys = rng.standard_normal((n_v, key_dim))
    if rng.uniform() < 0.3:
        keys[rng.integers(0, n_v)] = keys[rng.integers(0, n_v)]  # duplicated key
    if rng.uniform() < 0.1:
        keys[rng.integers(0, n_v)] = 0.0
    n_seeds = int(rng.integers(0, min(5, n_v - 1) + 1))
    order = rng.permutation(n_v)
    seeds = np.sort(order[:n_seeds])
    candidates = np.sort(order[n_seeds:])
    m = int(rng.integers(1, 17))
    return candidates, seeds, m, lam, keys.astype(np.float32), scores.astype(np.float32)


def check_mmr(report: VerifyReport, candidates, seeds, m, lam, keys, scores) -> None:
    got = batched_mmr(candidates, seeds, m, lam, keys, scores).tolist()
    want = oracles.direct_mmr_eval(candidates, seeds, m, lam, keys, scores)
    report.tally("batched_mmr_vs_direct_eval").record(got == want, {"m": m, "lam": lam, "got": got, "want": want})
    classic = oracles.classic_sequential_mmr(candidates, seeds, m, lam, keys, scores)
    if got:
        ov = len(set(got) & set(classic)) / len(got)
        report.overlap.append(ov)
        if lam == 0:
            report.overlap_lambda0.append(ov)


def check_importance(report: VerifyReport, attention) -> None:
    ok = close(token_importance(attention), oracles.naive_token_importance(attention))
    report.tally("token_importance_vs_naive").record(ok, {"shape": list(np.shape(attention))})


def check_topk(report: VerifyReport, values, k: int) -> None:
    got = select_core(values, k).tolist()
    want = oracles.exhaustive_topk(values, k)
    report.tally("select_core_vs_exhaustive_topk").record(got == want, {"k": k, "got": got, "want": want})


def verify_random(trials: int, seed: int = 0) -> VerifyReport:
    rng = np.random.default_rng(seed)
    report = VerifyReport()
    for trial in range(trials):
        lam = MMR_LAMBDAS[trial % len(MMR_LAMBDAS)]
        check_mmr(report, *random_mmr_instance(rng, lam))

        h, nq, nv = int(rng.integers(1, 5)), int(rng.integers(1, 9)), int(rng.integers(1, 65))
        check_importance(report, rng.uniform(0, 1, (h, nq, nv)).astype(np.float32))

        values = rng.uniform(0, 1, int(rng.integers(1, 65)))
        if rng.uniform() < 0.5:
            values = np.round(values * 5)
        check_topk(report, values.astype(np.float32), int(rng.integers(0, values.size + 1)))
    return report


def verify_scenario(scenario, seeds_per_frame: int = 4) -> VerifyReport:
    report = VerifyReport()
    attention = np.asarray(scenario.attention)
    check_importance(report, attention)
    scores = token_importance(attention)
    n_v = scores.size
    for k in sorted({0, 1, n_v // 8, n_v // 4, n_v // 2, n_v}):
        check_topk(report, scores, k)
    t = scenario.tokens_per_frame
    keys = np.asarray(scenario.key_states)
    for f in range(scenario.n_frames):
        cand = np.arange(f * t, (f + 1) * t)
        seeds = select_seeds(cand, scores, seeds_per_frame, t)
        rest = np.setdiff1d(cand, seeds)
        for lam in MMR_LAMBDAS:
            check_mmr(report, rest, seeds, max(1, t // 2), lam, keys, scores)
    return report
