"""Wall time of a full run (load, both stages, manifest write) at a large scenario size."""

import argparse
import tempfile
import time
from pathlib import Path

from triage.pipeline import PipelineConfig, run
from triage.scenario import write_scenario
from triage.synth import ScenarioSpec, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frames", type=int, default=256)
    ap.add_argument("--tokens", type=int, default=196)
    ap.add_argument("--keyframes", type=int, default=32)
    ap.add_argument("--retention", type=float, default=0.5)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    spec = ScenarioSpec(rng_seed=10, n_frames=args.frames, tokens_per_frame=args.tokens, embed_dim=512,
                        pixel_dim=768, key_dim=128, heads=8, query_tokens=32)
    with tempfile.TemporaryDirectory() as tmp:
        t0 = time.perf_counter()
        scn_dir = write_scenario(generate(spec), Path(tmp) / "scn")
        print(f"synth: {time.perf_counter() - t0:.3f}s")
        cfg = PipelineConfig(keyframes=args.keyframes, buckets=8, retention=args.retention,
                             threads=args.threads, out=str(Path(tmp) / "m.json"))
        times = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            manifest = run(cfg, scn_dir)
            times.append(time.perf_counter() - t0)
    print(f"tokens: {manifest['cost']['tokens_before']} -> {manifest['cost']['tokens_after']}")
    print("run: " + ", ".join(f"{t:.3f}s" for t in times))


if __name__ == "__main__":
    main()
