"""End-to-end run: keyframes first, then tokens over the keyframes' tokens."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConsistencyError
from .frame_budget import (
    BucketPlan,
    FrameFeatureSet,
    FrameScoreTable,
    KeyframeSelection,
    ScoreWeights,
    select_frames,
)
from .scenario import Scenario, load_scenario
from .tensor_io import TensorBundle, write_bundle
from .token_budget import BudgetConfig, TokenSelection, round_half_up, run_token_budgeting

MANIFEST_FORMAT = "triage-manifest"
FLOAT_DIGITS = 9
DEFAULT_KEYFRAMES = 16


@dataclass(frozen=True)
class CostProfile:
    """KV-cache cost constants; defaults describe a 7B-class decoder."""

    layers: int = 28
    kv_heads: int = 4
    head_dim: int = 128
    bytes_per_element: int = 2

    def kv_bytes(self, tokens: int) -> int:
        return 2 * self.layers * self.kv_heads * self.head_dim * self.bytes_per_element * tokens


@dataclass
class PipelineConfig:
    keyframes: int | None = None          # M; wins over frame_retention
    frame_retention: float | None = None  # M = round(ratio * N)
    buckets: int = 8
    weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    retention: float | None = 0.5
    total_budget: int | None = None
    core_ratio: float = 0.25
    seeds: int = 4
    lam: float = 0.5
    dump_intermediates: bool = False
    out: str | None = None
    cost: CostProfile = field(default_factory=CostProfile)
    threads: int | None = None            # None: TRIAGE_THREADS

    def score_weights(self) -> ScoreWeights:
        if len(self.weights) != 3:
            raise ConfigError(f"need exactly three weights, got {self.weights}")
        return ScoreWeights(*map(float, self.weights))

    def budget(self) -> BudgetConfig:
        return BudgetConfig(
            total_budget=self.total_budget,
            retention=None if self.total_budget is not None else self.retention,
            core_ratio=self.core_ratio,
            seeds_per_frame=self.seeds,
            lam=self.lam,
        )

    def resolve_keyframes(self, n_frames: int) -> int:
        if self.keyframes is not None:
            m = self.keyframes
        elif self.frame_retention is not None:
            if not 0 < self.frame_retention <= 1:
                raise ConfigError(f"frame retention must lie in (0, 1], got {self.frame_retention}")
            m = max(1, round_half_up(self.frame_retention * n_frames))
        else:
            m = min(DEFAULT_KEYFRAMES, n_frames)
        if not 1 <= m <= n_frames:
            raise ConfigError(f"keyframe budget {m} outside [1, {n_frames}]")
        return m

    def validate(self) -> None:
        self.score_weights()
        self.budget()
        if self.buckets < 1:
            raise ConfigError(f"bucket count must be positive, got {self.buckets}")
        c = self.cost
        if min(c.layers, c.kv_heads, c.head_dim, c.bytes_per_element) < 1:
            raise ConfigError("cost profile constants must be positive")

    def echo(self) -> dict:
        doc = asdict(self)
        doc.pop("out")
        doc.pop("threads")  # results do not depend on it
        doc["weights"] = list(doc["weights"])
        return doc


@dataclass
class PipelineResult:
    scores: FrameScoreTable
    plan: BucketPlan
    keyframes: KeyframeSelection
    tokens: TokenSelection
    manifest: dict


def keyframe_token_columns(frame_indices, tokens_per_frame: int) -> np.ndarray:
    idx = np.asarray(frame_indices, dtype=np.int64)
    return (idx[:, None] * tokens_per_frame + np.arange(tokens_per_frame)).reshape(-1)


def cost_report(tokens_before: int, tokens_after: int, profile: CostProfile) -> dict:
    return {
        "tokens_before": tokens_before,
        "tokens_after": tokens_after,
        "reduction_ratio": 1.0 - tokens_after / tokens_before if tokens_before else 0.0,
        "kv_bytes_before": profile.kv_bytes(tokens_before),
        "kv_bytes_after": profile.kv_bytes(tokens_after),
        "attention_flops_proxy_before": tokens_before**2,
        "attention_flops_proxy_after": tokens_after**2,
    }


def run_pipeline(scenario: Scenario, config: PipelineConfig) -> PipelineResult:
    config.validate()
    scenario.check()
    t = scenario.tokens_per_frame
    frames = FrameFeatureSet.build(scenario.pixels, scenario.frame_embeddings, scenario.timestamps)
    m = config.resolve_keyframes(frames.n_frames)
    table, plan, keyframes = select_frames(
        frames, scenario.query_embedding, config.score_weights(), config.buckets, m
    )

    cols = keyframe_token_columns(keyframes.frame_indices, t)
    attention = np.asarray(scenario.attention)[:, :, cols]
    keys = np.asarray(scenario.key_states)[cols]
    tokens = run_token_budgeting(attention, keys, keyframes, config.budget(), threads=config.threads)

    manifest = build_manifest(scenario, config, plan, keyframes, tokens, cols)
    check_manifest(manifest)
    return PipelineResult(table, plan, keyframes, tokens, manifest)


def _ints(a) -> list[int]:
    return [int(x) for x in a]


def build_manifest(scenario, config, plan, keyframes, tokens, cols) -> dict:
    t = scenario.tokens_per_frame
    frame_entries = []
    for ft in tokens.per_frame:
        frame_entries.append({
            "keyframe": int(keyframes.frame_indices[ft.frame]),
            "budget": int(ft.budget),
            "seeds": _ints(ft.seeds),
            "context": _ints(ft.context),
        })
    return {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "scenario_id": scenario.scenario_id,
        "n_frames": scenario.n_frames,
        "tokens_per_frame": t,
        "config": config.echo(),
        "keyframes": {
            "indices": _ints(keyframes.frame_indices),
            "scores": [float(s) for s in keyframes.frame_scores],
            "buckets": {
                "bounds": _ints(plan.bucket_bounds),
                "scores": [float(w) for w in plan.bucket_scores],
                "allocations": _ints(plan.allocations),
            },
        },
        "tokens": {
            "total_budget": int(tokens.total_budget),
            "core_budget": int(tokens.core_budget),
            "core": _ints(tokens.core),
            "final": _ints(tokens.final),
            "core_source": _ints(cols[tokens.core]),
            "final_source": _ints(cols[tokens.final]),
            "frames": frame_entries,
        },
        "cost": cost_report(scenario.n_frames * t, int(tokens.final.size), config.cost),
    }


def check_manifest(manifest: dict) -> None:
    t = manifest["tokens_per_frame"]
    frames = set(manifest["keyframes"]["indices"])
    toks = manifest["tokens"]
    if any(s // t not in frames for s in toks["final_source"]):
        raise ConsistencyError("a selected token lies outside every selected keyframe")
    n_local = len(frames) * t
    if any(not 0 <= i < n_local for i in toks["final"]):
        raise ConsistencyError("token index outside the keyframe token layout")
    cost = manifest["cost"]
    for what in ("tokens", "kv_bytes", "attention_flops_proxy"):
        a = cost[f"{what}_after"]
        b = cost[f"{what}_before"]
        if a > b:
            raise ConsistencyError(f"cost report has {what} after ({a}) > before ({b})")


def _round_floats(obj):
    if isinstance(obj, float):
        return float(format(obj, f".{FLOAT_DIGITS}g"))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def manifest_json(manifest: dict) -> str:
    return json.dumps(_round_floats(manifest), sort_keys=True, indent=1, allow_nan=False) + "\n"


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def intermediates_dir(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".intermediates")


def dump_intermediates(result: PipelineResult, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    arrays = {
        "s_change": result.scores.s_change,
        "s_motion": result.scores.s_motion,
        "s_relevance": result.scores.s_relevance,
        "s_frame": result.scores.s_frame,
        "keyframe_indices": result.keyframes.frame_indices,
        "keyframe_scores": result.keyframes.frame_scores,
        "tokens": result.tokens.final,
    }
    for name, arr in arrays.items():
        write_bundle(TensorBundle.from_array(name, arr), d / f"{name}.trgb")
    sidecar = {
        "core": result.manifest["tokens"]["core"],
        "frames": result.manifest["tokens"]["frames"],
    }
    atomic_write_text(d / "tokens.json", json.dumps(sidecar, sort_keys=True, indent=1) + "\n")
    return d


def run(config: PipelineConfig, scenario_dir: str | Path) -> dict:
    """Load a scenario, run both stages, write the manifest when ``config.out`` is set."""
    result = run_pipeline(load_scenario(scenario_dir), config)
    if config.out:
        if config.dump_intermediates:
            dump_intermediates(result, intermediates_dir(config.out))
        atomic_write_text(config.out, manifest_json(result.manifest))
    return result.manifest
