"""Command line: ``poisonforge {fetch-data,attack,benchmark,report}``.

Exit codes: 0 success, 2 argument or contract error, 3 I/O or network error.
Errors are also printed to stderr as a one-line JSON record.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import fetch, harness
from .localopt import OptimizerConfig

EXIT_OK, EXIT_ARGS, EXIT_IO = 0, 2, 3


class ArgumentError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ArgumentError(message)


def _lambda(text: str):
    if text == "cv":
        return "cv"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'cv', got {text!r}") from None
    return value


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _add_data_flags(p):
    src = p.add_argument_group("data")
    src.add_argument("--data", help="CSV file (relative names resolve against the data directory)")
    src.add_argument("--schema", help="schema JSON file")
    src.add_argument("--dataset", help="fetched dataset name, e.g. house or healthcare")
    src.add_argument("--subset", default="cat5", choices=sorted(fetch.SUBSETS), help="categorical subset for --dataset")
    src.add_argument("--synthetic", metavar="N,M,T,K", help="seeded synthetic data instead of a file")
    src.add_argument("--data-dir", help="overrides $POISONFORGE_DATA_DIR")
    p.add_argument("--sizes", type=int, nargs=3, default=list(harness.DEFAULT_SIZES), metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--folds", type=int, default=10, help="cross-validation folds for --lambda cv")
    p.add_argument("--epochs", type=int, default=2, help="IFCF epochs")
    p.add_argument("--max-iters", type=int, default=OptimizerConfig.max_iters)
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--strict-bounds", action="store_true", help="fail if a fitted weight breaks the a-priori bound")


def _resolve_data(args) -> dict:
    base = fetch.data_dir(args.data_dir)
    if args.synthetic:
        return {"synthetic": args.synthetic}
    if args.dataset:
        return {
            "data": str(base / f"{args.dataset}.csv"),
            "schema": str(base / f"{args.dataset}_{args.subset}.schema.json"),
            "dataset_label": f"{args.dataset}-{args.subset}",
        }
    if not args.data or not args.schema:
        raise ArgumentError("give --data and --schema, --dataset, or --synthetic")
    data, schema = Path(args.data), Path(args.schema)
    if not data.exists() and (base / data).exists():
        data = base / data
    if not schema.exists() and (base / schema).exists():
        schema = base / schema
    return {"data": str(data), "schema": str(schema)}


def _base_config(args, **overrides) -> harness.AttackConfig:
    kwargs = dict(
        sizes=tuple(args.sizes), folds=args.folds, epochs=args.epochs, strict_bounds=args.strict_bounds,
        optimizer=OptimizerConfig(max_iters=args.max_iters), **_resolve_data(args),
    )
    kwargs.update(overrides)
    return harness.AttackConfig(**kwargs)


def cmd_attack(args) -> int:
    config = _base_config(
        args, method=args.method, rate=args.rate, lam=args.lam, batch_fraction=args.batch_frac,
        seed=args.seed, save_poison=args.save_poison,
    )
    result, timings = harness.run_attack(config)
    path = harness.write_attack(result, timings, args.out)
    print(json.dumps({
        "result": str(path), "method": config.method, "r": config.rate, "lambda": result.lam, "q": result.q,
        "mse_unpoisoned_train": result.mse_unpoisoned_train, "mse_poisoned_train": result.mse_poisoned_train,
        "mse_poisoned_test": result.mse_poisoned_test,
    }))
    return EXIT_OK


def cmd_benchmark(args) -> int:
    base = _base_config(args, method=args.methods[0], rate=args.rates[0], lam=args.lambdas[0],
                        batch_fraction=args.batch_fracs[0], seed=args.seeds[0])
    campaign = harness.run_campaign(base, args.methods, args.rates, args.seeds, args.lambdas, args.batch_fracs, args.threads)
    paths = harness.write_campaign(campaign, args.out, args.baseline)
    table, columns = harness.summarize(harness.read_runs(paths["runs"]), args.baseline)
    print(harness.format_table(table, columns))
    failed = sum(r["status"] != "ok" for r in campaign.rows)
    if failed:
        print(f"{failed} cell(s) failed; see {paths['runs']}", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.source)
    if src.is_dir():
        runs_csv = src / "runs.csv"
        if runs_csv.exists():
            rows = harness.read_runs(runs_csv)
        else:
            rows = []
            for path in sorted(src.glob("attack_*.json")):
                if path.name.endswith(".timing.json"):
                    continue
                res = harness.AttackResult.read(path)
                rows.append({
                    "dataset": res.dataset, "method": res.config["method"], "r_pct": round(100 * res.config["rate"], 6),
                    "lambda_mode": "cv" if res.config["lam"] == "cv" else "fixed", "lambda": res.lam,
                    "batch_fraction": res.config["batch_fraction"], "seed": res.config["seed"], "status": "ok",
                    "mse_train": res.mse_poisoned_train, "mse_test": res.mse_poisoned_test,
                })
    else:
        rows = harness.read_runs(src)
    if not rows:
        raise FileNotFoundError(f"no results found in {src}")
    table, columns = harness.summarize(rows, args.baseline)
    print(harness.format_table(table, columns))
    return EXIT_OK


def cmd_fetch_data(args) -> int:
    manifest = fetch.fetch(args.data_dir, args.base_url, args.timeout, args.cat_features)
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="poisonforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fetch-data", help="download the public datasets and write schema files")
    p.add_argument("--data-dir", help="overrides $POISONFORGE_DATA_DIR")
    p.add_argument("--base-url", default=fetch.DEFAULT_BASE_URL)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--cat-features", type=lambda s: s.split(","), help="comma-separated categorical features for subsets")
    p.set_defaults(func=cmd_fetch_data)

    p = sub.add_parser("attack", help="run one attack and write a result record")
    p.add_argument("--method", required=True, choices=["ias", "sas", "ifcf"])
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=_lambda, default="cv")
    p.add_argument("--batch-frac", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save-poison", action="store_true")
    _add_data_flags(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("benchmark", help="run a campaign over methods, rates, seeds, lambdas and batch sizes")
    p.add_argument("--methods", type=lambda s: s.split(","), default=["ias", "sas", "ifcf"])
    p.add_argument("--rates", type=_floats, default=list(harness.DEFAULT_RATES))
    p.add_argument("--seeds", type=_ints, default=list(range(10)))
    p.add_argument("--lambdas", type=lambda s: [_lambda(x) for x in s.split(",")], default=["cv"])
    p.add_argument("--batch-fracs", type=_floats, default=[0.1])
    p.add_argument("--baseline", default="ias")
    _add_data_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="print a summary table from runs.csv or a directory of result records")
    p.add_argument("source")
    p.add_argument("--baseline", default="ias")
    p.set_defaults(func=cmd_report)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ArgumentError as exc:
        return _fail(EXIT_ARGS, exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, fetch.FetchError) as exc:
        return _fail(EXIT_IO, exc)
    except (ValueError, ArithmeticError, LookupError, AssertionError, RuntimeError, KeyError) as exc:
        return _fail(EXIT_ARGS, exc)


if __name__ == "__main__":
    sys.exit(main())
