"""Acceptance criteria, one test each, with stated tolerances and time limits.

Every test records a PASS/FAIL/SKIP line that is printed in the pytest
terminal summary. Run ``python tests/test_acceptance.py`` to print the lines
without pytest.
"""

import json
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE, random_instance  # noqa: E402
from oracles import central_differences, normal_equations_theta  # noqa: E402
from poisonforge import cli, fetch, harness, ridge  # noqa: E402
from poisonforge.bilevel import AttackState, hypergradient  # noqa: E402
from poisonforge.bounds import centred_intercept, compute_bounds  # noqa: E402
from poisonforge.dataset import PoisonSet, init_poison, one_hot  # noqa: E402
from poisonforge.localopt import OptimizerConfig  # noqa: E402
from poisonforge.oracle import brute_force  # noqa: E402
from poisonforge.strategies import StrategyConfig, run_ifcf  # noqa: E402
from poisonforge.synthetic import make_dataset  # noqa: E402

pytestmark = pytest.mark.acceptance

TREND_DATA = "200,8,5,3"
TREND_SIZES = (100, 0, 100)
SEEDS = range(10)


def record(number, title, ok, detail, seconds, limit=None):
    timed_ok = limit is None or seconds < limit
    status = "PASS" if ok and timed_ok else "FAIL"
    suffix = f" ({seconds:.1f}s" + (f" < {limit}s" if limit else "") + ")"
    if not timed_ok:
        detail += f"; exceeded time limit {limit}s"
    line = f"[{status}] criterion {number}: {title}: {detail}{suffix}"
    ACCEPTANCE[number] = line
    print(line)
    return status == "PASS", line


def check_1():
    t0 = time.perf_counter()
    lams = (0.01, 0.1, 1.0)
    worst_theta = worst_kkt = 0.0
    for i in range(200):
        rng = np.random.default_rng(10_000 + i)
        n, m, t = int(rng.integers(1, 51)), int(rng.integers(0, 6)), int(rng.integers(0, 4))
        counts = tuple(int(c) for c in rng.integers(2, 5, size=t))
        train, poison = random_instance(rng, n, m, counts, q=int(rng.integers(0, 6)))
        lam = lams[i % 3]
        params = ridge.fit(train, poison, lam)
        X, y = ridge.design_matrix(train, poison)
        worst_theta = max(worst_theta, float(np.max(np.abs(params.theta - normal_equations_theta(X, y, lam)))))
        worst_kkt = max(worst_kkt, ridge.kkt_residual(params, train, poison, lam))
    ok = worst_theta <= 1e-8 and worst_kkt <= 1e-8
    return ok, f"max |θ - oracle| = {worst_theta:.2e}, max KKT residual = {worst_kkt:.2e} (tol 1e-8)", time.perf_counter() - t0


def check_2():
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(50):
        rng = np.random.default_rng(20_000 + i)
        n, m = int(rng.integers(2, 51)), int(rng.integers(1, 6))
        counts = tuple(int(c) for c in rng.integers(2, 5, size=rng.integers(0, 4)))
        train, poison = random_instance(rng, n, m, counts, q=int(rng.integers(1, 6)))
        state = AttackState(train, poison, (0.01, 0.1, 1.0)[i % 3])
        analytic = hypergradient(state)
        start = state.snapshot()
        numeric = central_differences(lambda x: state.evaluate(num=x), start[0], h=1e-5)
        state.restore(start)
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-12)
        worst = max(worst, float(rel.max()))
    return worst <= 1e-4, f"max relative error = {worst:.2e} (tol 1e-4)", time.perf_counter() - t0


def _random_poison(rng, schema, q):
    codes = np.stack([rng.integers(0, c, size=q) for c in schema.category_counts], axis=1)
    return PoisonSet(schema, rng.uniform(size=(q, schema.m)), one_hot(codes, schema), rng.integers(0, 2, size=q))


def check_3():
    t0 = time.perf_counter()
    train = make_dataset(30, 4, (3, 3), seed=3)
    trials = weight_fail = intercept_fail = 0
    for q in (3, 6):
        for lam in (0.1, 1.0):
            vb = compute_bounds(train, q, lam)
            rng = np.random.default_rng(q * 100 + int(lam * 10))
            for _ in range(500):
                poison = _random_poison(rng, train.schema, q)
                params = ridge.fit(train, poison, lam)
                trials += 1
                weight_fail += bool(vb.violations(params.w))
                c = centred_intercept(train, poison)
                intercept_fail += not (vb.intercept_lo <= c <= vb.intercept_hi)
    ok = weight_fail == 0 and intercept_fail == 0
    detail = f"{trials} fits, weight violations {weight_fail}, centred-intercept violations {intercept_fail}"
    return ok, detail, time.perf_counter() - t0


@lru_cache(maxsize=None)
def toy_runs():
    """Ten toy instances: best of five IFCF single-batch runs against the grid oracle."""
    lam = 0.1
    out = []
    for inst in range(10):
        train = make_dataset(8, 2, (2,), seed=100 + inst)
        template = init_poison(train, 1 / 8, seed=inst)
        oracle = brute_force(train, template, lam)
        rng = np.random.default_rng(inst)
        starts = [template] + [
            PoisonSet(train.schema, rng.uniform(size=(1, 2)), one_hot(rng.integers(0, 2, size=(1, 1)), train.schema),
                      template.y, template.origin_indices)
            for _ in range(4)
        ]
        cfg = StrategyConfig(method="ifcf", batch_fraction=1.0, seed=inst)
        runs = [run_ifcf(train, start, lam, cfg) for start in starts]
        out.append((oracle.objective, max(r.objective for r in runs), runs))
    return out


def check_4():
    t0 = time.perf_counter()
    results = toy_runs()
    gaps = [oracle - best for oracle, best, _ in results]
    ok = max(gaps) <= 1e-3
    return ok, f"worst oracle - best = {max(gaps):.2e} over 10 instances (tol 1e-3)", time.perf_counter() - t0


def _trend_cell(args):
    method, rate, seed, lam = args
    cfg = harness.AttackConfig(method=method, rate=rate, lam=lam, synthetic=TREND_DATA, sizes=TREND_SIZES, seed=seed)
    result, _ = harness.run_attack(cfg)
    return args, result


@lru_cache(maxsize=None)
def trend_campaign():
    t0 = time.perf_counter()
    cells = [(m, r, s, "cv") for m in ("ias", "sas", "ifcf") for r in harness.DEFAULT_RATES for s in SEEDS]
    cells += [(m, 0.2, s, lam) for m in ("ias", "sas") for s in SEEDS for lam in (10.0, 0.01)]
    workers = os.cpu_count() or 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = dict(pool.map(_trend_cell, cells))
    else:
        out = dict(map(_trend_cell, cells))
    return out, time.perf_counter() - t0


def _monotone_violations(trajectory, events):
    bad = sum(int(np.any(np.diff(seg) < 0)) for seg in trajectory)
    bad += sum(not e["after"] > e["before"] for e in events)
    return bad


def check_5():
    t0 = time.perf_counter()
    runs = violations = flips = 0
    for _, _, toy in toy_runs():
        for run in toy:
            runs += 1
            violations += _monotone_violations(run.trajectory, run.events)
            flips += sum(e["kind"] == "flip" for e in run.events)
    results, _ = trend_campaign()
    for result in results.values():
        runs += 1
        violations += _monotone_violations(result.trajectory, result.events)
        flips += sum(e["kind"] == "flip" for e in result.events)
    detail = f"{runs} strategy runs, {flips} accepted flips, {violations} violations"
    return violations == 0, detail, time.perf_counter() - t0


def check_6():
    results, seconds = trend_campaign()
    mse = {k: r.mse_poisoned_train for k, r in results.items()}
    rates = harness.DEFAULT_RATES
    means = {(m, r): np.mean([mse[(m, r, s, "cv")] for s in SEEDS]) for m in ("ias", "sas") for r in rates}
    a = all(means[("sas", r)] >= means[("ias", r)] for r in rates)
    b_fail = sum(mse[("ifcf", r, s, "cv")] < mse[("sas", r, s, "cv")] for r in rates for s in SEEDS)
    c_fail = [
        (m, s) for m in ("ias", "sas", "ifcf") for s in SEEDS
        if np.any(np.diff([mse[(m, r, s, "cv")] for r in rates]) < 0)
    ]
    deltas = ", ".join(f"{100 * r:g}%: {harness.improvement_pct(means[('ias', r)], means[('sas', r)]):.2f}" for r in rates)
    detail = f"(a) SAS>=IAS on means {a} [Δ% {deltas}]; (b) IFCF<SAS runs {b_fail}/50; (c) non-monotone seed series {len(c_fail)}"
    return a and b_fail == 0 and not c_fail, detail, seconds


def check_7():
    results, seconds = trend_campaign()

    def gap(lam):
        return float(np.mean([results[("sas", 0.2, s, lam)].mse_poisoned_train - results[("ias", 0.2, s, lam)].mse_poisoned_train
                              for s in SEEDS]))

    g10, g001 = gap(10.0), gap(0.01)
    return g10 <= g001, f"mean SAS-IAS gap at r=20%: λ=10 {g10:.3e} <= λ=0.01 {g001:.3e}", seconds


def check_8():
    t0 = time.perf_counter()
    problems = []
    with tempfile.TemporaryDirectory() as tmp:
        for method in ("ias", "sas", "ifcf"):
            argv = ["attack", "--method", method, "--rate", "0.12", "--lambda", "cv", "--seed", "7", "--save-poison",
                    "--synthetic", TREND_DATA, "--sizes", "100", "20", "80"]
            paths = []
            for rep in ("a", "b"):
                code = cli.main(argv + ["--out", str(Path(tmp) / rep)])
                if code != 0:
                    problems.append(f"{method} exit {code}")
                    continue
                (path,) = [p for p in (Path(tmp) / rep).glob(f"*_{method}_*.json") if not p.name.endswith(".timing.json")]
                paths.append(path)
            if len(paths) != 2:
                continue
            a, b = harness.AttackResult.read(paths[0]), harness.AttackResult.read(paths[1])
            if a != b:
                problems.append(f"{method} records differ")
            first = paths[0].read_bytes()
            a.write(paths[0])
            if paths[0].read_bytes() != first or paths[1].read_bytes() != first:
                problems.append(f"{method} bytes differ")
    ok = not problems
    return ok, "3 methods x 2 invocations value-identical, round-trip byte-identical" if ok else "; ".join(problems), time.perf_counter() - t0


def check_9():
    """Returns None when the network is unavailable."""
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        try:
            fetch.fetch(Path(tmp) / "data", timeout=20)
        except fetch.FetchError as exc:
            return None, f"network unavailable ({str(exc).splitlines()[0][:80]})", time.perf_counter() - t0
        out = Path(tmp) / "res"
        code = cli.main(["attack", "--method", "ifcf", "--rate", "0.2", "--lambda", "cv", "--dataset", "house",
                         "--subset", "cat5", "--data-dir", str(Path(tmp) / "data"), "--out", str(out)])
        if code != 0:
            return False, f"attack exited {code}", time.perf_counter() - t0
        (path,) = [p for p in out.glob("*.json") if not p.name.endswith(".timing.json")]
        res = harness.AttackResult.read(path)
        seconds = sum(json.loads(path.with_suffix(".timing.json").read_text()).values())
        row = (f"House Price & Train & {100 * res.config['rate']:g} & {res.mse_unpoisoned_train:.6f} & - && "
               f"{res.mse_poisoned_train:.6f} & {seconds:.2f} & "
               f"{harness.improvement_pct(res.mse_unpoisoned_train, res.mse_poisoned_train):.2f}")
        print(row)
        ok = res.mse_poisoned_train > res.mse_unpoisoned_train
        return ok, f"poisoned {res.mse_poisoned_train:.6f} > clean {res.mse_unpoisoned_train:.6f}: {ok}; row: {row}", time.perf_counter() - t0


CRITERIA = [
    (1, "lower-level exactness", check_1, 10),
    (2, "hypergradient vs finite differences", check_2, 30),
    (3, "weight and intercept bound soundness fuzz", check_3, 60),
    (4, "local optimiser vs brute-force oracle", check_4, 120),
    (6, "trend reproduction at desk scale", check_6, 900),
    (7, "lambda sweep gap", check_7, 900),
    (5, "monotone trajectories and accepted flips", check_5, None),
    (8, "determinism and serialisation", check_8, None),
    (9, "public dataset smoke run", check_9, None),
]


def _run(number):
    _, title, fn, limit = next(c for c in CRITERIA if c[0] == number)
    ok, detail, seconds = fn()
    if ok is None:
        line = f"[SKIP] criterion {number}: {title}: {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return None, line
    return record(number, title, ok, detail, seconds, limit)


def _assert(number):
    ok, line = _run(number)
    if ok is None:
        pytest.skip(line)
    assert ok, line


def test_criterion_1_lower_level_exactness():
    _assert(1)


def test_criterion_2_hypergradient():
    _assert(2)


def test_criterion_3_bound_soundness():
    _assert(3)


def test_criterion_4_oracle_gap():
    _assert(4)


def test_criterion_6_trends():
    _assert(6)


def test_criterion_7_lambda_gap():
    _assert(7)


def test_criterion_5_monotonicity():
    _assert(5)


def test_criterion_8_determinism():
    _assert(8)


@pytest.mark.network
def test_criterion_9_public_dataset():
    _assert(9)


if __name__ == "__main__":
    for number, *_ in sorted(CRITERIA):
        _run(number)
