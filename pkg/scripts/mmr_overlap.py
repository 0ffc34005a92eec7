"""Overlap between batched and classic sequential MMR across a lambda grid."""

import argparse

import numpy as np

from triage import oracles
from triage.token_budget import batched_mmr
from triage.verify import random_mmr_instance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lambdas", default="0,0.1,0.3,0.5,0.8,1.0,1.5")
    args = ap.parse_args()

    print("lambda  mean_overlap  exact_match")
    for lam in (float(x) for x in args.lambdas.split(",")):
        rng = np.random.default_rng(args.seed)
        overlaps, exact = [], 0
        for _ in range(args.trials):
            cand, seeds, m, lam_, keys, scores = random_mmr_instance(rng, lam)
            got = batched_mmr(cand, seeds, m, lam_, keys, scores).tolist()
            ref = oracles.classic_sequential_mmr(cand, seeds, m, lam_, keys, scores)
            if got:
                overlaps.append(len(set(got) & set(ref)) / len(got))
                exact += sorted(got) == sorted(ref)
        print(f"{lam:6.2f}  {np.mean(overlaps):12.4f}  {exact / len(overlaps):11.4f}")


if __name__ == "__main__":
    main()
