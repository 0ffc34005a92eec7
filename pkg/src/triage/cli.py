"""``triage`` command line: run, verify and synth subcommands.

Exit codes: 0 success, 1 verification failure, 2 input error,
3 config or usage error, 4 internal inconsistency.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

from .errors import ConfigError, TriageError
from .pipeline import CostProfile, PipelineConfig, manifest_json, run
from .scenario import load_scenario, write_scenario
from .synth import ScenarioSpec, generate
from .verify import verify_random, verify_scenario

log = logging.getLogger("triage")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def _weights(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"weights must be three comma-separated numbers, got {text!r}")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected 3 weights, got {len(parts)}")
    return parts


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="triage", description="Hierarchical frame and token budgeting for video VLM inputs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="select keyframes and tokens for a scenario")
    r.add_argument("--scenario", required=True, help="scenario directory")
    r.add_argument("--out", help="manifest path (written atomically)")
    r.add_argument("--config", help="JSON file of PipelineConfig fields; flags override it")
    r.add_argument("--retention", type=float, help="token retention ratio over the keyframes' tokens")
    r.add_argument("--total-budget", type=int, help="absolute token budget (overrides --retention)")
    r.add_argument("--keyframes", type=int, help="keyframe budget M")
    r.add_argument("--frame-retention", type=float, help="keyframe budget as a fraction of candidates")
    r.add_argument("--buckets", type=int, help="temporal bucket count K")
    r.add_argument("--weights", type=_weights, help="w_change,w_motion,w_relevance")
    r.add_argument("--core-ratio", type=float)
    r.add_argument("--seeds", type=int, help="seed tokens per frame")
    r.add_argument("--lambda", dest="lam", type=float, help="MMR diversity weight")
    r.add_argument("--dump-intermediates", action="store_true", default=None)
    r.add_argument("--kv-layers", type=int)
    r.add_argument("--kv-heads", type=int)
    r.add_argument("--head-dim", type=int)
    r.add_argument("--kv-bytes", type=int, help="bytes per cached element")

    v = sub.add_parser("verify", help="cross-check engine kernels against brute-force oracles")
    src = v.add_mutually_exclusive_group()
    src.add_argument("--scenario", help="check on a scenario's tensors")
    src.add_argument("--random", type=int, default=None, metavar="TRIALS", help="random instances (default 1000)")
    v.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("synth", help="generate a synthetic scenario")
    s.add_argument("--spec", required=True, help="ScenarioSpec JSON file")
    s.add_argument("--out", required=True, help="output directory")
    return p


_FLAG_FIELDS = {
    "retention": "retention", "total_budget": "total_budget", "keyframes": "keyframes",
    "frame_retention": "frame_retention", "buckets": "buckets", "weights": "weights",
    "core_ratio": "core_ratio", "seeds": "seeds", "lam": "lam",
    "dump_intermediates": "dump_intermediates", "out": "out",
}
_COST_FLAGS = {"kv_layers": "layers", "kv_heads": "kv_heads", "head_dim": "head_dim", "kv_bytes": "bytes_per_element"}


def _read_json(path: str, error=ConfigError) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise error(f"cannot read {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise error(f"{path} must hold a JSON object")
    return doc


def config_from_args(args) -> PipelineConfig:
    """Defaults, then the config file, then explicit flags."""
    values: dict = {}
    cost: dict = {}
    if args.config:
        doc = _read_json(args.config)
        known = {f.name for f in fields(PipelineConfig)} - {"threads"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cost.update(doc.pop("cost", None) or {})
        values.update(doc)
    for flag, name in _FLAG_FIELDS.items():
        val = getattr(args, flag)
        if val is not None:
            values[name] = val
    if args.total_budget is not None:
        values.pop("retention", None)
    for flag, name in _COST_FLAGS.items():
        val = getattr(args, flag)
        if val is not None:
            cost[name] = val
    try:
        if "weights" in values:
            values["weights"] = tuple(values["weights"])
        cfg = PipelineConfig(**values, cost=CostProfile(**cost))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    start = time.perf_counter()
    manifest = run(cfg, args.scenario)
    c = manifest["cost"]
    log.info("kept %d of %d tokens over %d keyframes in %.3fs", c["tokens_after"], c["tokens_before"],
             len(manifest["keyframes"]["indices"]), time.perf_counter() - start)
    if cfg.out:
        print(cfg.out)
    else:
        sys.stdout.write(manifest_json(manifest))
    return 0


def cmd_verify(args) -> int:
    if args.scenario:
        report = verify_scenario(load_scenario(args.scenario))
    else:
        report = verify_random(1000 if args.random is None else args.random, args.seed)
    print("\n".join(report.lines()))
    return 0 if report.ok else 1


def cmd_synth(args) -> int:
    doc = _read_json(args.spec)
    try:
        scenario = generate(ScenarioSpec.from_dict(doc))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    print(write_scenario(scenario, args.out))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    handler = {"run": cmd_run, "verify": cmd_verify, "synth": cmd_synth}[args.command]
    try:
        return handler(args)
    except TriageError as exc:
        log.error("%s", exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
