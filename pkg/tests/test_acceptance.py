"""Acceptance suite. Each test prints one PASS/FAIL line with its measured values.

Monte Carlo criteria run the oracle suite at its default replication counts
and the fixed seed ``DEFAULT_SEED``.
"""

import datetime as dt
import math
import time

import mpmath
import numpy as np
import pytest

from attestcast.cli import main
from attestcast.evaluate import mae, wmape
from attestcast.forecast import format_doubling, interpret_doubling, doubling_report
from attestcast.linmod import ols
from attestcast.oracle import DEFAULT_SEED, SuiteConfig, run_oracle_suite
from attestcast.preprocess import inverse_transform, log_transform, moving_average


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}")
        assert ok, detail

    return emit


def _experiment(name):
    report = run_oracle_suite(SuiteConfig(seed=DEFAULT_SEED), only=[name])
    return report.result(name)


def _checks(result):
    return "; ".join(c.describe() for c in result.checks)


def test_criterion_01_ols_against_extended_precision(verdict):
    rng = np.random.default_rng(DEFAULT_SEED)
    systems = []
    for _ in range(100):
        n = int(rng.integers(30, 201))
        p = int(rng.integers(3, 16))
        X = rng.standard_normal((n, p))
        y = X @ rng.standard_normal(p) + rng.standard_normal(n)
        systems.append((X, y))

    t0 = time.perf_counter()
    fits = [ols(y, X) for X, y in systems]
    seconds = time.perf_counter() - t0

    worst_rel, worst_orth = 0.0, 0.0
    with mpmath.workdps(40):
        for (X, y), res in zip(systems, fits):
            A = mpmath.matrix(X.tolist())
            b = mpmath.matrix(y.tolist())
            oracle = np.array([float(v) for v in mpmath.lu_solve(A.T * A, A.T * b)])
            worst_rel = max(worst_rel, float(np.max(np.abs(res.coeffs - oracle) / np.abs(oracle))))
            scale = np.linalg.norm(X) * np.linalg.norm(y)
            orth = np.max(np.abs(X.T @ (y - X @ res.coeffs))) / scale
            worst_orth = max(worst_orth, float(orth))
    ok = worst_rel <= 1e-8 and worst_orth < 1e-8 and seconds < 10
    verdict(1, "OLS correctness", ok,
            f"max rel coef error {worst_rel:.2e} (<= 1e-8), max scaled X'r {worst_orth:.2e} (< 1e-8), "
            f"fit time {seconds:.3f}s (< 10s)")


def test_criterion_02_dh_size(verdict):
    r = _experiment("dh_size")
    verdict(2, "DH test size", r.passed and r.seconds < 120, f"{_checks(r)}; {r.seconds:.1f}s (< 120s)")


def test_criterion_03_dh_power(verdict):
    r = _experiment("dh_power")
    verdict(3, "DH test power", r.passed and r.seconds < 60, f"{_checks(r)}; {r.seconds:.1f}s (< 60s)")


def test_criterion_04_lag_recovery(verdict):
    r = _experiment("lag_recovery")
    verdict(4, "lag recovery", r.passed, f"{_checks(r)}; counts {r.metrics['selected_K_counts']}")


def test_criterion_05_coefficient_recovery(verdict):
    r = _experiment("coef_recovery")
    verdict(5, "coefficient recovery", r.passed, _checks(r))


def test_criterion_06_forecast_vs_persistence(verdict):
    r = _experiment("forecast_vs_persistence")
    m = r.metrics
    verdict(6, "forecast quality", r.passed and r.seconds < 300,
            f"{_checks(r)}; {r.seconds:.1f}s (< 300s); median persistence WMAPE "
            f"{m['median_persistence_wmape']:.4f}; unsmoothed-target variant win rate "
            f"{m['raw_target_win_rate']:.2f}, median {m['raw_target_median_wmape']:.4f}")


def test_criterion_07_metric_identities(verdict):
    failures = []
    if abs(mae([10, 20], [12.5, 17.5]) - 2.5) > 1e-12:
        failures.append("mae fixture")
    if abs(wmape([10, 20], [12.5, 17.5]) - 5 / 30) > 1e-12:
        failures.append("wmape fixture")
    if abs(wmape([4, 0, 6], [5, 1, 6]) - 0.2) > 1e-12:
        failures.append("wmape fixture with a zero day")
    if abs(mae([1, 2, 3, 4], [1.5, 1.5, 3, 5]) - 0.5) > 1e-12:
        failures.append("mae fixture 2")

    rng = np.random.default_rng(DEFAULT_SEED)
    worst_identity = 0.0
    for _ in range(1000):
        h = int(rng.integers(1, 30))
        a = rng.uniform(0.0, 100.0, h)
        a[0] += 1.0
        p = a + rng.normal(0, 10, h)
        # powers of two scale every term exactly, so equivariance must hold bit for bit
        c = 2.0 ** int(rng.integers(-20, 21))
        if mae(c * a, c * p) != c * mae(a, p) or wmape(c * a, c * p) != wmape(a, p):
            failures.append("scale equivariance")
            break
        lhs, rhs = wmape(a, p), mae(a, p) * h / math.fsum(a)
        worst_identity = max(worst_identity, abs(lhs - rhs) / abs(lhs) if lhs else abs(rhs))
    # the two sides differ only by the rounding of one division and one multiplication
    if worst_identity > 4 * np.finfo(float).eps:
        failures.append("WMAPE = MAE*h/sum(a)")
    verdict(7, "metric identities", not failures,
            f"failures {failures or 'none'}; max relative gap in WMAPE = MAE*h/sum(a): {worst_identity:.1e}")


def test_criterion_08_pipeline_determinism(verdict, sim_triple, tmp_path):
    paths, _ = sim_triple
    args = ["run-all", "--attestations", str(paths["attestations"]), "--census", str(paths["census"]),
            "--zipmap", str(paths["zipmap"]), "--plot-data", "--rolling-origin"]
    codes = [main(args + ["--out", str(tmp_path / d)]) for d in ("first", "second")]
    first = {p.name: p.read_bytes() for p in sorted((tmp_path / "first").iterdir())}
    second = {p.name: p.read_bytes() for p in sorted((tmp_path / "second").iterdir())}
    differing = sorted(n for n in first.keys() | second.keys() if first.get(n) != second.get(n))
    verdict(8, "pipeline determinism", codes == [0, 0] and not differing and len(first) > 10,
            f"exit codes {codes}, {len(first)} artifacts, differing: {differing or 'none'}")


def test_criterion_09_transform_properties(verdict):
    rng = np.random.default_rng(DEFAULT_SEED)
    failures = set()
    for _ in range(1000):
        n = int(rng.integers(1, 120))
        w = int(rng.integers(1, n + 1))
        s = rng.poisson(rng.uniform(0, 50), n).astype(float)
        ma = moving_average(s, w)
        win = np.lib.stride_tricks.sliding_window_view(s, w)
        if ma.size != n - w + 1:
            failures.add("length")
        if np.any(ma < win.min(axis=1)) or np.any(ma > win.max(axis=1)):
            failures.add("bounds")
        bigger = s + rng.poisson(3, n)
        if np.any(moving_average(bigger, w) < ma):
            failures.add("order preservation")
        if np.any(np.diff(moving_average(np.sort(s), w)) < 0):
            failures.add("monotone input gives monotone output")
        offset = float(rng.choice([1.0, 0.5, 2.0]))
        lg = log_transform(s, offset)
        if not np.allclose(inverse_transform(lg, offset), s, rtol=1e-12, atol=1e-12):
            failures.add("log round trip")
        order = np.argsort(s, kind="stable")
        if np.any(np.diff(lg[order]) < 0):
            failures.add("log monotone")
    verdict(9, "transform properties", not failures, f"1000 series, failures {sorted(failures) or 'none'}")


def test_criterion_10_doubling_interpretation(verdict):
    value = interpret_doubling(0.05)
    exact = 2.0 ** 0.05 - 1.0
    text = format_doubling(0.05, reported_effect=0.05)
    rep = doubling_report(0.05, reported_effect=0.05)
    ok = (
        abs(value - 0.03526) <= 1e-5
        and value == exact
        and "5.0%" in text
        and "3.53%" in text
        and rep["reported_effect"] == 0.05
    )
    verdict(10, "doubling effect", ok, f"interpret_doubling(0.05) = {value:.6f} (0.03526 +/- 1e-5); {text}")
