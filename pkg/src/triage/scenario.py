"""Scenario directories: ``scenario.json`` plus one ``.trgb`` bundle per role."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .tensor_io import TensorBundle, read_bundle, write_bundle

MANIFEST_NAME = "scenario.json"
REQUIRED_ROLES = ("pixels", "frame_embeddings", "query_embedding", "attention", "key_states")
OPTIONAL_ROLES = ("timestamps",)


@dataclass
class Scenario:
    pixels: np.ndarray            # [N, D_p]
    frame_embeddings: np.ndarray  # [N, D_e]
    query_embedding: np.ndarray   # [D_e]
    attention: np.ndarray         # [H, N_q, N*T]
    key_states: np.ndarray        # [N*T, D_k]
    tokens_per_frame: int
    timestamps: np.ndarray | None = None
    spec: dict | None = None
    ground_truth: dict = field(default_factory=dict)
    scenario_id: str | None = None

    @property
    def n_frames(self) -> int:
        return self.pixels.shape[0]

    def check(self) -> None:
        n = self.pixels.shape[0] if self.pixels.ndim == 2 else -1
        t = self.tokens_per_frame
        problems = []
        if self.pixels.ndim != 2:
            problems.append(f"pixels must be [N, D_p], got {self.pixels.shape}")
        if self.frame_embeddings.ndim != 2 or self.frame_embeddings.shape[0] != n:
            problems.append(f"frame_embeddings must be [{n}, D_e], got {self.frame_embeddings.shape}")
        if self.query_embedding.ndim != 1 or (
            self.frame_embeddings.ndim == 2 and self.query_embedding.shape[0] != self.frame_embeddings.shape[1]
        ):
            problems.append(f"query_embedding must be [D_e], got {self.query_embedding.shape}")
        if not isinstance(t, int) or t < 1:
            problems.append(f"tokens_per_frame must be a positive integer, got {t!r}")
        elif self.attention.ndim != 3 or self.attention.shape[2] != n * t:
            problems.append(f"attention must be [H, N_q, {n * t}], got {self.attention.shape}")
        if self.key_states.ndim != 2 or (self.attention.ndim == 3 and self.key_states.shape[0] != self.attention.shape[2]):
            problems.append(f"key_states must be [N_v, D_k] matching attention, got {self.key_states.shape}")
        if self.timestamps is not None and self.timestamps.shape != (n,):
            problems.append(f"timestamps must be [{n}], got {self.timestamps.shape}")
        if problems:
            raise InputError("; ".join(problems))


def write_scenario(scenario: Scenario, directory: str | Path) -> Path:
    scenario.check()
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    arrays = {
        "pixels": scenario.pixels.astype(np.float32),
        "frame_embeddings": scenario.frame_embeddings.astype(np.float32),
        "query_embedding": scenario.query_embedding.astype(np.float32),
        "attention": scenario.attention.astype(np.float32),
        "key_states": scenario.key_states.astype(np.float32),
    }
    if scenario.timestamps is not None:
        arrays["timestamps"] = scenario.timestamps.astype(np.int64)
    roles = {}
    for role, arr in arrays.items():
        fname = f"{role}.trgb"
        write_bundle(TensorBundle.from_array(role, arr), out / fname)
        roles[role] = fname
    doc = {
        "format": "triage-scenario",
        "version": 1,
        "tokens_per_frame": scenario.tokens_per_frame,
        "roles": roles,
        "scenario_id": scenario.scenario_id,
        "spec": scenario.spec,
        "ground_truth": scenario.ground_truth,
    }
    tmp = out / (MANIFEST_NAME + ".tmp")
    tmp.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    os.replace(tmp, out / MANIFEST_NAME)
    return out


def load_scenario(directory: str | Path) -> Scenario:
    root = Path(directory)
    mpath = root / MANIFEST_NAME
    try:
        doc = json.loads(mpath.read_text())
    except FileNotFoundError:
        raise InputError(f"no {MANIFEST_NAME} in {root}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot parse {mpath}: {exc}") from None
    roles = doc.get("roles") or {}
    missing = [r for r in REQUIRED_ROLES if r not in roles]
    if missing:
        raise InputError(f"{mpath} names no file for roles: {', '.join(missing)}")

    arrays = {}
    for role in REQUIRED_ROLES + OPTIONAL_ROLES:
        if role not in roles:
            continue
        path = root / roles[role]
        if not path.is_file():
            raise InputError(f"missing {role} file {path}")
        arrays[role] = read_bundle(path).array()

    tpf = doc.get("tokens_per_frame")
    if tpf is None and arrays["pixels"].ndim == 2 and arrays["attention"].ndim == 3:
        n = arrays["pixels"].shape[0]
        if n and arrays["attention"].shape[2] % n == 0:
            tpf = arrays["attention"].shape[2] // n
    scn = Scenario(
        pixels=arrays["pixels"],
        frame_embeddings=arrays["frame_embeddings"],
        query_embedding=arrays["query_embedding"],
        attention=arrays["attention"],
        key_states=arrays["key_states"],
        tokens_per_frame=tpf,
        timestamps=arrays.get("timestamps"),
        spec=doc.get("spec"),
        ground_truth=doc.get("ground_truth") or {},
        scenario_id=doc.get("scenario_id"),
    )
    scn.check()
    return scn
