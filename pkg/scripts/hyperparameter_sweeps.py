"""Lambda sweep and batch-size sweep for IAS and SAS.

Produces the data behind the lambda and batch-size figures
(fig1_lambda_sweep.csv, fig2_batch_sweep.csv) in two sub-directories of
--out. Use --dataset house after `poisonforge fetch-data` to sweep real data.
"""

import argparse
import os
from pathlib import Path

from poisonforge import fetch, harness
from poisonforge.localopt import OptimizerConfig

LAMBDAS = [0.001, 0.01, 0.1, 1.0, 10.0]
BATCH_FRACTIONS = [0.05, 0.1, 0.2, 0.5, 1.0]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--synthetic", default="200,8,5,3")
    p.add_argument("--dataset", help="fetched dataset name instead of synthetic data")
    p.add_argument("--subset", default="cat5")
    p.add_argument("--sizes", type=int, nargs=3, default=[100, 0, 100])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--rates", type=float, nargs="+", default=[0.04, 0.12, 0.2])
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default="results/sweeps")
    args = p.parse_args()

    if args.dataset:
        root = fetch.data_dir()
        source = dict(data=str(root / f"{args.dataset}.csv"), schema=str(root / f"{args.dataset}_{args.subset}.schema.json"),
                      dataset_label=f"{args.dataset}-{args.subset}")
    else:
        source = dict(synthetic=args.synthetic)
    base = harness.AttackConfig(sizes=tuple(args.sizes), optimizer=OptimizerConfig(max_iters=args.max_iters), **source)
    seeds = range(args.seeds)

    sweeps = {
        "lambda": dict(lambdas=LAMBDAS, batch_fractions=[0.1]),
        "batch": dict(lambdas=[0.1], batch_fractions=BATCH_FRACTIONS),
    }
    for name, axes in sweeps.items():
        out = Path(args.out) / name
        campaign = harness.run_campaign(base, ["ias", "sas"], args.rates, seeds, threads=args.threads, **axes)
        paths = harness.write_campaign(campaign, out)
        table, columns = harness.summarize(harness.read_runs(paths["runs"]))
        print(f"== {name} sweep ({out})")
        print(harness.format_table([r for r in table if r["type"] == "Train"], columns))
        print()


if __name__ == "__main__":
    main()
