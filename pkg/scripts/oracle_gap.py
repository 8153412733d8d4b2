"""Compare IFCF multistart runs against the brute-force grid oracle on toy instances."""

import argparse

import numpy as np

from poisonforge.dataset import PoisonSet, init_poison, one_hot
from poisonforge.oracle import OracleConfig, brute_force
from poisonforge.strategies import StrategyConfig, run_ifcf
from poisonforge.synthetic import make_dataset


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--lam", type=float, default=0.1)
    p.add_argument("--grid", type=int, default=21)
    args = p.parse_args()

    print(f"{'inst':>4}  {'oracle':>10}  {'best':>10}  {'gap':>10}  evals")
    gaps = []
    for inst in range(args.instances):
        train = make_dataset(args.n, 2, (args.levels,), seed=100 + inst)
        template = init_poison(train, 1 / args.n, seed=inst)
        oracle = brute_force(train, template, args.lam, OracleConfig(grid_points=args.grid))
        rng = np.random.default_rng(inst)
        starts = [template] + [
            PoisonSet(train.schema, rng.uniform(size=(1, 2)), one_hot(rng.integers(0, args.levels, size=(1, 1)), train.schema),
                      template.y, template.origin_indices)
            for _ in range(args.starts - 1)
        ]
        cfg = StrategyConfig(method="ifcf", batch_fraction=1.0, seed=inst)
        best = max(run_ifcf(train, s, args.lam, cfg).objective for s in starts)
        gaps.append(oracle.objective - best)
        print(f"{inst:>4}  {oracle.objective:10.6f}  {best:10.6f}  {gaps[-1]:10.2e}  {oracle.evaluations}")
    print(f"worst gap {max(gaps):.2e} (negative: local solve beat the grid)")


if __name__ == "__main__":
    main()
