"""Synthetic scenarios with planted ground truth.

Generated scenarios carry three kinds of planted structure, each checkable
from the emitted tensors alone:

* planted frames whose embedding is closer to the query than every
  distractor's by at least ``relevance_margin`` (in cosine);
* planted tokens whose attention logit beats every other token in every
  attention row, so their averaged importance beats all distractors;
* per-frame clusters of near-duplicate key vectors (pairwise cosine >= 0.95)
  that also draw elevated attention, i.e. redundant but relevant tokens.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from itertools import combinations

import numpy as np

from .errors import ConfigError, ConsistencyError
from .scenario import Scenario

REDUNDANCY_COSINE = 0.95
_CLUSTER_NOISE = 0.1     # noise norm around a unit centroid; pairwise cos >= 0.98
_CLUSTER_BOOST = 2.0     # attention logit boost for cluster members
_PLANTED_BOOST = 1.0     # planted logit = row max of the rest + boost + U[0, 0.5)
_DISTRACTOR_SPREAD = 0.2


@dataclass
class ScenarioSpec:
    rng_seed: int = 0
    n_frames: int = 16
    tokens_per_frame: int = 16
    embed_dim: int = 32
    pixel_dim: int = 48
    key_dim: int = 16
    heads: int = 4
    query_tokens: int = 8
    planted_frames: list[int] = field(default_factory=list)
    planted_tokens: list[list[int]] = field(default_factory=list)  # local token ids per planted frame
    relevance_margin: float = 0.5
    cluster_redundancy: int = 0
    cluster_size: int = 3

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown scenario spec fields: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        dims = dict(
            n_frames=self.n_frames, tokens_per_frame=self.tokens_per_frame, embed_dim=self.embed_dim,
            pixel_dim=self.pixel_dim, key_dim=self.key_dim, heads=self.heads, query_tokens=self.query_tokens,
        )
        for name, v in dims.items():
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must fit in a u64")
        if self.embed_dim < 2:
            raise ConfigError("embed_dim must be >= 2 to plant relevance margins")
        if not 0 <= self.relevance_margin <= 1:
            raise ConfigError(f"relevance_margin must lie in [0, 1], got {self.relevance_margin}")
        if len(set(self.planted_frames)) != len(self.planted_frames):
            raise ConfigError("planted_frames has duplicates")
        if any(not 0 <= f < self.n_frames for f in self.planted_frames):
            raise ConfigError("planted frame index out of range")
        if self.planted_tokens and len(self.planted_tokens) != len(self.planted_frames):
            raise ConfigError("planted_tokens needs one list per planted frame")
        for toks in self.planted_tokens:
            if len(toks) > self.tokens_per_frame:
                raise ConfigError("more planted tokens than tokens per frame")
            if len(set(toks)) != len(toks) or any(not 0 <= t < self.tokens_per_frame for t in toks):
                raise ConfigError("planted token indices must be distinct and within the frame")
        if self.cluster_redundancy < 0 or self.cluster_size < 2:
            raise ConfigError("cluster_redundancy must be >= 0 and cluster_size >= 2")
        busiest = max((len(t) for t in self.planted_tokens), default=0)
        if self.cluster_redundancy * self.cluster_size + busiest > self.tokens_per_frame:
            raise ConfigError("clusters and planted tokens do not fit in a frame")

    def scenario_id(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def standard_planted_spec(seed: int = 0) -> ScenarioSpec:
    """16 frames, 2 query-relevant frames in different temporal quarters."""
    return ScenarioSpec(rng_seed=seed, n_frames=16, planted_frames=[2, 9], relevance_margin=0.5)


def planted_token_spec(seed: int = 0) -> ScenarioSpec:
    return ScenarioSpec(
        rng_seed=seed, n_frames=16, planted_frames=[2, 9], relevance_margin=0.5,
        planted_tokens=[[1, 5, 11], [0, 7]],
    )


def clustered_spec(seed: int = 0) -> ScenarioSpec:
    return ScenarioSpec(
        rng_seed=seed, n_frames=16, tokens_per_frame=32, planted_frames=[2, 9],
        relevance_margin=0.5, cluster_redundancy=4, cluster_size=4,
    )


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _embeddings(rng, spec: ScenarioSpec):
    d = spec.embed_dim
    q = _unit(rng.standard_normal(d))
    raw = rng.standard_normal((spec.n_frames, d))
    orth = _unit(raw - np.outer(raw @ q, q))  # Gram-Schmidt against the query
    hi = _DISTRACTOR_SPREAD * (1 - spec.relevance_margin)
    cos = rng.uniform(-hi, hi, spec.n_frames)
    if spec.planted_frames:
        lo = hi + spec.relevance_margin
        cos[spec.planted_frames] = lo + rng.uniform(0, 1, len(spec.planted_frames)) * (1 - lo)
    emb = cos[:, None] * q + np.sqrt(1 - cos**2)[:, None] * orth
    emb *= rng.uniform(0.5, 2.0, spec.n_frames)[:, None]
    return emb, q * rng.uniform(0.5, 2.0)


def _pixels(rng, spec: ScenarioSpec) -> np.ndarray:
    pix = np.empty((spec.n_frames, spec.pixel_dim))
    pix[0] = rng.uniform(0, 1, spec.pixel_dim)
    cuts = rng.uniform(0, 1, spec.n_frames) < 0.15
    steps = rng.normal(0, 0.05, (spec.n_frames, spec.pixel_dim))
    fresh = rng.uniform(0, 1, (spec.n_frames, spec.pixel_dim))
    for i in range(1, spec.n_frames):
        pix[i] = fresh[i] if cuts[i] else np.clip(pix[i - 1] + steps[i], 0, 1)
    return pix


def _clusters(rng, spec: ScenarioSpec, planted_local: dict[int, list[int]]) -> list[list[int]]:
    groups = []
    t = spec.tokens_per_frame
    for f in range(spec.n_frames):
        taken = set(planted_local.get(f, ()))
        free = np.array([i for i in range(t) if i not in taken])
        members = rng.permutation(free)[: spec.cluster_redundancy * spec.cluster_size]
        for c in range(spec.cluster_redundancy):
            local = sorted(int(i) for i in members[c * spec.cluster_size:(c + 1) * spec.cluster_size])
            groups.append([f * t + i for i in local])
    return groups


def _keys(rng, spec: ScenarioSpec, clusters: list[list[int]]) -> np.ndarray:
    n_v = spec.n_frames * spec.tokens_per_frame
    keys = rng.standard_normal((n_v, spec.key_dim))
    for group in clusters:
        centroid = _unit(rng.standard_normal(spec.key_dim))
        noise = _unit(rng.standard_normal((len(group), spec.key_dim)))
        noise *= _CLUSTER_NOISE * rng.uniform(0, 1, (len(group), 1))
        keys[group] = (centroid + noise) * rng.uniform(0.5, 2.0, (len(group), 1))
    return keys


def _attention(rng, spec: ScenarioSpec, planted: list[int], clusters: list[list[int]]) -> np.ndarray:
    n_v = spec.n_frames * spec.tokens_per_frame
    logits = rng.standard_normal((spec.heads, spec.query_tokens, n_v))
    for group in clusters:
        logits[:, :, group] += _CLUSTER_BOOST
    if planted:
        rest = np.ones(n_v, dtype=bool)
        rest[planted] = False
        row_max = logits[:, :, rest].max(axis=2, keepdims=True) if rest.any() else 0.0
        bump = rng.uniform(0, 0.5, (spec.heads, spec.query_tokens, len(planted)))
        logits[:, :, planted] = row_max + _PLANTED_BOOST + bump
    logits -= logits.max(axis=2, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=2, keepdims=True)


def generate(spec: ScenarioSpec) -> Scenario:
    """Build a scenario; a pure function of ``spec`` (Philox counter-based stream)."""
    spec.validate()
    rng = np.random.Generator(np.random.Philox(spec.rng_seed))
    t = spec.tokens_per_frame
    planted_local = {f: list(toks) for f, toks in zip(spec.planted_frames, spec.planted_tokens)}
    planted = sorted(f * t + i for f, toks in planted_local.items() for i in toks)

    emb, query = _embeddings(rng, spec)
    pixels = _pixels(rng, spec)
    clusters = _clusters(rng, spec, planted_local)
    keys = _keys(rng, spec, clusters)
    attention = _attention(rng, spec, planted, clusters)

    truth = {
        "planted_frames": sorted(spec.planted_frames),
        "planted_tokens": planted,
        "clusters": clusters,
        "tokens_per_frame": t,
    }
    sid = spec.scenario_id()
    truth["scenario_id"] = sid
    return Scenario(
        pixels=pixels,
        frame_embeddings=emb,
        query_embedding=query,
        attention=attention,
        key_states=keys,
        tokens_per_frame=t,
        timestamps=np.arange(spec.n_frames, dtype=np.int64),
        spec=spec.to_dict(),
        ground_truth=truth,
        scenario_id=sid,
    )


class ScenarioMismatch(ConsistencyError):
    pass


def _cos_pairs(keys: np.ndarray, idx: list[int]) -> list[float]:
    v = np.asarray(keys, dtype=np.float64)[idx]
    norms = np.linalg.norm(v, axis=1)
    out = []
    for a, b in combinations(range(len(idx)), 2):
        d = norms[a] * norms[b]
        out.append(float(v[a] @ v[b] / d) if d > 0 else 0.0)
    return out


def evaluate_selection(manifest: dict, ground_truth: dict, key_states) -> dict:
    """Recall of planted frames/tokens and within-frame key redundancy of a manifest."""
    sid = ground_truth.get("scenario_id")
    if sid is not None and manifest.get("scenario_id") != sid:
        raise ScenarioMismatch(f"manifest is for scenario {manifest.get('scenario_id')}, ground truth for {sid}")
    t = int(manifest["tokens_per_frame"])
    frames = set(manifest["keyframes"]["indices"])
    final = manifest["tokens"]["final_source"]
    core = set(manifest["tokens"]["core_source"])

    def recall(hit: set, planted) -> float:
        planted = set(planted)
        return len(hit & planted) / len(planted) if planted else 1.0

    by_frame: dict[int, list[int]] = {}
    for tok in final:
        by_frame.setdefault(tok // t, []).append(tok)
    sims = [s for toks in by_frame.values() for s in _cos_pairs(key_states, toks)]
    redundant = sum(s >= REDUNDANCY_COSINE for s in sims)
    return {
        "frame_recall": recall(frames, ground_truth.get("planted_frames", [])),
        "token_recall": recall(set(final), ground_truth.get("planted_tokens", [])),
        "core_token_recall": recall(core, ground_truth.get("planted_tokens", [])),
        "redundancy_rate": redundant / len(sims) if sims else 0.0,
    }
