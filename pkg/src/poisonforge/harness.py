"""Experiment pipeline: data preparation, attack runs, campaigns, and result files.

Result records are deterministic functions of their config. Wall-clock
timings are kept out of the records and written to sidecar files so reruns
compare byte-for-byte.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import ridge
from .dataset import Dataset, FeatureSchema, PoisonSet, encode_and_scale, init_poison, load_csv, load_schema, split
from .localopt import OptimizerConfig
from .strategies import METHODS, StrategyConfig, run_strategy
from .synthetic import make_dataset

DEFAULT_RATES = (0.04, 0.08, 0.12, 0.16, 0.20)
DEFAULT_SIZES = (300, 250, 500)
RESULT_VERSION = 1


@dataclass(frozen=True)
class AttackConfig:
    method: str = "sas"
    rate: float = 0.04
    lam: float | str = "cv"
    batch_fraction: float = 0.1
    epochs: int = 2
    seed: int = 0
    sizes: tuple = DEFAULT_SIZES
    folds: int = 10
    data: str | None = None
    schema: str | None = None
    synthetic: str | None = None  # "n,m,t,k": n rows, m numerical, t categorical with k levels
    dataset_label: str = ""
    save_poison: bool = False
    strict_bounds: bool = False
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if self.method.lower() not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        object.__setattr__(self, "method", self.method.lower())
        if not (isinstance(self.rate, (int, float)) and 0 < self.rate <= 1):
            raise ValueError(f"rate must be in (0, 1], got {self.rate}")
        if isinstance(self.lam, str):
            if self.lam != "cv":
                raise ValueError(f"lambda must be a positive number or 'cv', got {self.lam!r}")
        elif not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if (self.data is None) == (self.synthetic is None):
            raise ValueError("give exactly one of a data file or a synthetic spec")
        if self.data is not None and self.schema is None:
            raise ValueError("a data file needs a schema file")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        d = dict(d)
        d["optimizer"] = OptimizerConfig(**d.get("optimizer", {}))
        d["sizes"] = tuple(d["sizes"])
        return cls(**d)

    @property
    def label(self) -> str:
        if self.dataset_label:
            return self.dataset_label
        if self.synthetic:
            return "synthetic-" + self.synthetic.replace(",", "x")
        return Path(self.schema).stem


@dataclass
class AttackResult:
    config: dict
    dataset: str
    lam: float
    q: int
    mse_unpoisoned_train: float
    mse_unpoisoned_test: float | None
    mse_poisoned_train: float
    mse_poisoned_test: float | None
    trajectory: list
    accepted_events: int
    events: list
    bounds: dict
    bound_findings: list
    params: dict
    n_validation: int
    poison: dict | None = None
    version: int = RESULT_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AttackResult":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AttackResult":
        return cls.from_dict(json.loads(text))

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "AttackResult":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def parse_synthetic(spec: str) -> tuple[int, int, int, int]:
    try:
        n, m, t, k = (int(x) for x in spec.split(","))
    except ValueError:
        raise ValueError(f"synthetic spec must be 'n,m,t,k', got {spec!r}") from None
    if n < 1 or m < 0 or t < 0 or (t and k < 2):
        raise ValueError(f"invalid synthetic spec {spec!r}")
    return n, m, t, k


def load_dataset(config: AttackConfig) -> Dataset:
    if config.synthetic:
        n, m, t, k = parse_synthetic(config.synthetic)
        return make_dataset(n, m, (k,) * t, seed=config.seed)
    schema = load_schema(config.schema)
    return encode_and_scale(load_csv(config.data, schema))


def prepare(config: AttackConfig) -> tuple[Dataset, Dataset, Dataset]:
    return split(load_dataset(config), config.sizes, config.seed)


def _strategy_config(config: AttackConfig) -> StrategyConfig:
    return StrategyConfig(config.method, config.batch_fraction, config.epochs, config.optimizer, config.seed)


def run_attack(config: AttackConfig) -> tuple[AttackResult, dict]:
    """Full pipeline for one run. Returns the result record and per-phase wall times."""
    timings = {}
    t0 = time.perf_counter()
    train, val, test = prepare(config)
    if train.n == 0:
        raise ValueError("training split is empty")
    timings["prepare"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lam = ridge.cv_lambda(train, ridge.DEFAULT_LAMBDA_GRID, config.folds, config.seed) if config.lam == "cv" else float(config.lam)
    timings["lambda"] = time.perf_counter() - t0
    if lam <= 0:
        raise ValueError("attacks need lambda > 0; the CV grid selected 0")

    poison = init_poison(train, config.rate, config.seed)
    clean = ridge.fit(train, None, lam)
    run = run_strategy(train, poison, lam, _strategy_config(config))
    timings.update({f"attack_{k}": v for k, v in run.timings.items()})

    vb = bounds_mod.compute_bounds(train, poison.q, lam)
    findings = vb.violations(run.params.w)
    if findings and config.strict_bounds:
        raise bounds_mod.BoundViolation("; ".join(findings))
    c = run.params.c
    if not (vb.intercept_lo <= c <= vb.intercept_hi):
        findings.append(f"direct-fit intercept {c!r} outside the centred-parameterisation interval")

    has_test = test.n > 0
    result = AttackResult(
        config=config.to_dict(),
        dataset=config.label,
        lam=lam,
        q=poison.q,
        mse_unpoisoned_train=ridge.mse(clean, train),
        mse_unpoisoned_test=ridge.mse(clean, test) if has_test else None,
        mse_poisoned_train=ridge.mse(run.params, train),
        mse_poisoned_test=ridge.mse(run.params, test) if has_test else None,
        trajectory=[[float(v) for v in seg] for seg in run.trajectory],
        accepted_events=len(run.events),
        events=run.events,
        bounds=vb.to_dict(),
        bound_findings=findings,
        params=run.params.to_dict(),
        n_validation=val.n,
        poison=run.poison.to_dict() if config.save_poison else None,
    )
    return result, timings


def result_filename(config: AttackConfig) -> str:
    lam = "cv" if config.lam == "cv" else f"{config.lam:g}"
    return f"attack_{config.label}_{config.method}_r{config.rate:g}_lam{lam}_bf{config.batch_fraction:g}_s{config.seed}.json"


def write_attack(result: AttackResult, timings: dict, out_dir) -> Path:
    out_dir = Path(out_dir)
    path = result.write(out_dir / result_filename(AttackConfig.from_dict(result.config)))
    path.with_suffix(".timing.json").write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- campaigns


def improvement_pct(base: float, new: float) -> float:
    """Increase of ``new`` over ``base`` in percent; positive means a stronger attack."""
    return 100.0 * (new / base - 1.0)


def geometric_mean_improvement(ratios) -> float:
    ratios = np.asarray(list(ratios), dtype=float)
    return 100.0 * (float(np.exp(np.mean(np.log(ratios)))) - 1.0)


RUN_COLUMNS = [
    "dataset", "method", "r_pct", "lambda_mode", "lambda", "batch_fraction", "seed", "q",
    "mse_unpoisoned_train", "mse_unpoisoned_test", "mse_train", "mse_test", "status", "error",
]


def _cell(config: AttackConfig):
    t0 = time.perf_counter()
    try:
        result, timings = run_attack(config)
        return config, result, timings, None
    except Exception as exc:  # recorded per cell; the campaign continues
        return config, None, {"total": time.perf_counter() - t0}, f"{type(exc).__name__}: {exc}"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class Campaign:
    rows: list
    timings: list


def run_campaign(base: AttackConfig, methods, rates, seeds, lambdas, batch_fractions, threads: int = 1) -> Campaign:
    """Cross product of the given axes; cells are returned in a fixed order regardless of threads."""
    configs = [
        replace(base, method=m, rate=r, seed=s, lam=lam, batch_fraction=bf)
        for lam, bf, r, s, m in itertools.product(lambdas, batch_fractions, rates, seeds, methods)
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_cell, configs))
    else:
        outcomes = [_cell(c) for c in configs]

    rows, timing_rows = [], []
    for config, result, timings, error in outcomes:
        row = {
            "dataset": config.label, "method": config.method, "r_pct": round(100 * config.rate, 6),
            "lambda_mode": "cv" if config.lam == "cv" else "fixed",
            "lambda": config.lam if result is None else result.lam, "batch_fraction": config.batch_fraction,
            "seed": config.seed, "status": "ok" if error is None else "failed", "error": error or "",
        }
        if result is not None:
            row.update(
                q=result.q, mse_unpoisoned_train=result.mse_unpoisoned_train, mse_unpoisoned_test=result.mse_unpoisoned_test,
                mse_train=result.mse_poisoned_train, mse_test=result.mse_poisoned_test,
            )
        rows.append(row)
        timing_rows.append({"method": config.method, "r_pct": row["r_pct"], "lambda": row["lambda"],
                            "batch_fraction": config.batch_fraction, "seed": config.seed,
                            "seconds": sum(timings.values())})
    return Campaign(rows, timing_rows)


def write_csv(path, rows, columns) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
    return Path(path)


def read_runs(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("r_pct", "batch_fraction", "mse_unpoisoned_train", "mse_unpoisoned_test", "mse_train", "mse_test"):
            row[key] = float(row[key]) if row.get(key) not in (None, "") else None
        row["lambda"] = float(row["lambda"]) if row["lambda"] not in ("", "cv") else row["lambda"]
        row["seed"] = int(row["seed"])
    return rows


def lambda_key(row):
    return "cv" if row.get("lambda_mode") == "cv" else row["lambda"]


def summarize(rows, baseline: str = "ias") -> tuple[list, list]:
    """Per-cell mean MSE (train and test blocks by rate), with Δ% against ``baseline``.

    Lambda enters the grouping only when it was fixed; CV-selected values
    differ per seed and are averaged over.
    """
    ok = [r for r in rows if r["status"] == "ok"]
    methods = sorted({r["method"] for r in ok}, key=lambda m: (m != baseline, METHODS.index(m)))
    others = [m for m in methods if m != baseline]

    groups = {}
    for r in ok:
        key = (r["dataset"], lambda_key(r), r["batch_fraction"], r["r_pct"])
        groups.setdefault(key, []).append(r)

    columns = ["dataset", "type", "lambda", "batch_fraction", "r_pct"]
    columns += [f"mse_{m}" for m in methods] + [f"delta_pct_{m}" for m in others] + ["runs"]
    table = []
    for kind, col in (("Train", "mse_train"), ("Test", "mse_test")):
        for key in sorted(groups, key=lambda k: (k[0], str(k[1]), k[2], k[3])):
            cell = groups[key]
            means = {}
            for m in methods:
                vals = [r[col] for r in cell if r["method"] == m and r[col] is not None]
                means[m] = float(np.mean(vals)) if vals else None
            if all(v is None for v in means.values()):
                continue
            row = dict(zip(["dataset", "lambda", "batch_fraction", "r_pct"], key), type=kind, runs=len({r["seed"] for r in cell}))
            for m in methods:
                row[f"mse_{m}"] = means[m]
            for m in others:
                if means.get(baseline) and means[m] is not None:
                    row[f"delta_pct_{m}"] = improvement_pct(means[baseline], means[m])
            table.append(row)
    return table, columns


def plot_data(rows, baseline: str = "ias") -> dict:
    """Data-only series for the lambda sweep, batch-size sweep, and per-run scatter plots."""
    ok = [r for r in rows if r["status"] == "ok"]
    out = {}

    def mean_series(xkey):
        acc = {}
        for r in ok:
            x = lambda_key(r) if xkey == "lambda" else r[xkey]
            acc.setdefault((r["method"], r["r_pct"], x), []).append(r["mse_train"])
        return [
            {"series": f"{m} r={rp:g}%", "method": m, "r_pct": rp, "x": x, "y": float(np.mean(v))}
            for (m, rp, x), v in sorted(acc.items(), key=lambda kv: (kv[0][0], kv[0][1], str(kv[0][2])))
        ]

    out["fig1_lambda_sweep"] = mean_series("lambda")
    out["fig2_batch_sweep"] = mean_series("batch_fraction")
    out["fig3_runs"] = [
        {"series": f"{r['method']} {kind}", "method": r["method"], "type": kind, "x": r["r_pct"], "y": r[col], "seed": r["seed"]}
        for r in ok for kind, col in (("train", "mse_train"), ("test", "mse_test")) if r[col] is not None
    ]
    geo = []
    base = {(r["dataset"], r["r_pct"], lambda_key(r), r["batch_fraction"], r["seed"]): r for r in ok if r["method"] == baseline}
    for m in sorted({r["method"] for r in ok} - {baseline}):
        for kind, col in (("train", "mse_train"), ("test", "mse_test")):
            ratios = {}
            for r in ok:
                if r["method"] != m or r[col] is None:
                    continue
                b = base.get((r["dataset"], r["r_pct"], lambda_key(r), r["batch_fraction"], r["seed"]))
                if b is not None and b[col]:
                    ratios.setdefault(r["r_pct"], []).append(r[col] / b[col])
            for rp in sorted(ratios):
                geo.append({"series": f"{m} vs {baseline} {kind}", "method": m, "type": kind, "x": rp,
                            "y": geometric_mean_improvement(ratios[rp])})
    out["fig3_geomean"] = geo
    return out


PLOT_COLUMNS = {
    "fig1_lambda_sweep": ["series", "method", "r_pct", "x", "y"],
    "fig2_batch_sweep": ["series", "method", "r_pct", "x", "y"],
    "fig3_runs": ["series", "method", "type", "seed", "x", "y"],
    "fig3_geomean": ["series", "method", "type", "x", "y"],
}


def write_campaign(campaign: Campaign, out_dir, baseline: str = "ias") -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"runs": write_csv(out_dir / "runs.csv", campaign.rows, RUN_COLUMNS)}
    rows = read_runs(paths["runs"])
    table, columns = summarize(rows, baseline)
    paths["summary"] = write_csv(out_dir / "summary.csv", table, columns)
    for name, series in plot_data(rows, baseline).items():
        paths[name] = write_csv(out_dir / f"{name}.csv", series, PLOT_COLUMNS[name])
    write_csv(out_dir / "timings.csv", campaign.timings, ["method", "r_pct", "lambda", "batch_fraction", "seed", "seconds"])
    return paths


def format_table(table, columns) -> str:
    """Fixed-width text rendering: MSE to 6 places, Δ to 2."""
    def cell(c, v):
        if v is None:
            return "-"
        if c.startswith("delta"):
            return f"{v:.2f}"
        if c.startswith("mse"):
            return f"{v:.6f}"
        if isinstance(v, float):
            return f"{v:g}"
        return str(v)

    body = [[cell(c, row.get(c)) for c in columns] for row in table]
    widths = [max(len(c), *(len(r[i]) for r in body)) if body else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in body]
    return "\n".join(lines)
