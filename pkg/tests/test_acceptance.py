"""Acceptance gate: every criterion runs at its stated tolerance and prints
one PASS line (run with ``pytest -v -s tests/test_acceptance.py``).

The convergence studies reuse one set of records per case; structural bounds
are checked on every training run those studies perform.  The long-budget
variants (100-dimensional case, full oscillator budget) are opt-in through
the SSE_LONG_MODE environment variable or the CLI paper mode.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from sse.benchmarks import (
    estimator_accuracy,
    median_eta,
    model_1d,
    run_convergence,
)
from sse.core import SseConfig, flatten, mean, predict, train, variance
from sse.input_model import Gaussian, InputModel, Lognormal, Uniform
from sse.poly_basis import (
    Box,
    eval_design_matrix,
    gauss_legendre_nodes,
    generate_truncation,
    legendre_table,
    unit_box,
)
from sse.regression import adaptive_fit, ols_fit
from sse.sensitivity import first_order_sobol

MASTER_SEED = 20406
LONG_MODE = os.environ.get("SSE_LONG_MODE", "") not in ("", "0")

_BUDGETS = {}


def _report(name, detail):
    print(f"\n{name} PASS: {detail}")


@pytest.fixture(scope="module")
def a1_records():
    t0 = time.perf_counter()
    records = run_convergence(
        "1d", sizes=(10, 50, 100, 200), replications=10, master_seed=MASTER_SEED,
        n_val=100_000, d_sse=5, d_pce=20,
    )
    _BUDGETS["a1"] = time.perf_counter() - t0
    return records


@pytest.fixture(scope="module")
def a2_records():
    t0 = time.perf_counter()
    records = run_convergence(
        "truss", sizes=(100, 500, 1000), replications=5, master_seed=MASTER_SEED,
        n_val=100_000, d_sse=4, d_pce=10,
    )
    _BUDGETS["a2"] = time.perf_counter() - t0
    return records


@pytest.fixture(scope="module")
def a3_records():
    t0 = time.perf_counter()
    records = run_convergence(
        "oscillator", sizes=(1000, 5000), replications=3, master_seed=MASTER_SEED,
        n_val=100_000, d_sse=4, d_pce=10,
    )
    _BUDGETS["a3"] = time.perf_counter() - t0
    return records


@pytest.fixture(scope="module")
def a4_records():
    t0 = time.perf_counter()
    records = run_convergence(
        "zhou", sizes=(500, 2000), replications=3, master_seed=MASTER_SEED,
        n_val=100_000, d_sse=2,
    )
    _BUDGETS["a4"] = time.perf_counter() - t0
    return records


def test_a1_one_dimensional_convergence(a1_records):
    sizes = (10, 50, 100, 200)
    medians_sse = [median_eta(a1_records, "1d", n, "sse") for n in sizes]
    for smaller, larger in zip(medians_sse[1:], medians_sse[:-1]):
        assert smaller <= larger, f"median eta_SSE not non-increasing: {medians_sse}"
    med_pce_200 = median_eta(a1_records, "1d", 200, "pce")
    assert medians_sse[-1] <= med_pce_200 / 5.0, (
        f"eta_SSE(200)={medians_sse[-1]:.3g} vs eta_PCE(200)/5={med_pce_200 / 5.0:.3g}"
    )
    assert _BUDGETS["a1"] < 300.0, f"A1 runtime {_BUDGETS['a1']:.0f}s exceeds 5 min"
    _report(
        "A1",
        f"median eta_SSE={['%.3g' % m for m in medians_sse]} over N={sizes}, "
        f"eta_PCE(200)={med_pce_200:.3g}, ratio={med_pce_200 / medians_sse[-1]:.1f}x, "
        f"runtime {_BUDGETS['a1']:.0f}s < 300s",
    )


def test_a2_truss_dominance(a2_records):
    sizes = (100, 500, 1000)
    pairs = {}
    for n in sizes:
        med_sse = median_eta(a2_records, "truss", n, "sse")
        med_pce = median_eta(a2_records, "truss", n, "pce")
        assert med_sse < med_pce, f"N={n}: eta_SSE={med_sse:.3g} not below eta_PCE={med_pce:.3g}"
        pairs[n] = (med_sse, med_pce)
    assert _BUDGETS["a2"] < 900.0, f"A2 runtime {_BUDGETS['a2']:.0f}s exceeds 15 min"
    detail = ", ".join(f"N={n}: {s:.3g} < {p:.3g}" for n, (s, p) in pairs.items())
    _report("A2", f"{detail}; runtime {_BUDGETS['a2']:.0f}s < 900s")


def test_a3_oscillator_convergence_trend(a3_records):
    med_1000 = median_eta(a3_records, "oscillator", 1000, "sse")
    med_5000 = median_eta(a3_records, "oscillator", 5000, "sse")
    assert med_5000 < med_1000, (
        f"eta_SSE(5000)={med_5000:.3g} not below eta_SSE(1000)={med_1000:.3g}"
    )
    assert _BUDGETS["a3"] < 1200.0, f"A3 runtime {_BUDGETS['a3']:.0f}s exceeds 20 min"
    _report(
        "A3",
        f"median eta_SSE: {med_1000:.3g} (N=1000) -> {med_5000:.3g} (N=5000); "
        f"runtime {_BUDGETS['a3']:.0f}s < 1200s",
    )


def test_a4_high_dimensional_scaling(a4_records):
    med_500 = median_eta(a4_records, "zhou", 500, "sse")
    med_2000 = median_eta(a4_records, "zhou", 2000, "sse")
    assert med_2000 <= med_500 / 3.0, (
        f"eta_SSE(2000)={med_2000:.3g} not <= eta_SSE(500)/3={med_500 / 3.0:.3g}"
    )
    _report(
        "A4",
        f"median eta_SSE: {med_500:.3g} (N=500) -> {med_2000:.3g} (N=2000), "
        f"improvement {med_500 / med_2000:.1f}x >= 3x",
    )


@pytest.mark.skipif(not LONG_MODE, reason="opt-in long mode (set SSE_LONG_MODE=1)")
def test_a4_long_mode_100_dimensional():
    records = run_convergence(
        "zhou100", sizes=(1000, 2000), replications=3, master_seed=MASTER_SEED,
        n_val=100_000, d_sse=2,
    )
    med_1000 = median_eta(records, "zhou100", 1000, "sse")
    med_2000 = median_eta(records, "zhou100", 2000, "sse")
    assert med_2000 < med_1000
    _report("A4-long", f"M=100 median eta_SSE: {med_1000:.3g} -> {med_2000:.3g}")


def test_a5_error_estimator_behavior(a1_records):
    sse_records = [r for r in a1_records if r.method == "sse"]
    eta = np.array([r.eta for r in sse_records])
    eps = np.array([r.eps_gen_hat for r in sse_records])
    rho = float(spearmanr(eps, eta).statistic)
    fraction = float(np.mean(eps < eta))
    assert rho > 0.7, f"Spearman correlation {rho:.3f} not > 0.7"
    assert fraction > 0.5, f"underestimation fraction {fraction:.2f} not > 0.5"
    acc = [a for a in estimator_accuracy(sse_records) if a.method == "sse"][0]
    assert acc.spearman == pytest.approx(rho, abs=1e-12)
    _report("A5", f"Spearman rho={rho:.3f} > 0.7, underestimation fraction={fraction:.2f} > 0.5")


def test_a6_structural_bounds(a1_records, a2_records, a3_records, a4_records):
    checked = 0
    for rec in [*a1_records, *a2_records, *a3_records, *a4_records]:
        if rec.method != "sse":
            continue
        depth_cap = math.floor(math.log2(rec.n / rec.n_min))
        assert rec.depth <= depth_cap, (
            f"{rec.case} N={rec.n} rep={rec.rep}: depth {rec.depth} > {depth_cap}"
        )
        assert rec.n_expansions <= 2 * rec.n / rec.n_min - 1, (
            f"{rec.case} N={rec.n} rep={rec.rep}: {rec.n_expansions} expansions "
            f"> {2 * rec.n / rec.n_min - 1}"
        )
        checked += 1
    _report("A6", f"depth and expansion-count bounds hold on all {checked} training runs")


def test_a7_analytic_identities():
    checks = []

    # flatten-vs-recursive equivalence on 1e4 points
    im1 = InputModel((Uniform(0.0, 1.0),))
    x1 = im1.sample(200, MASTER_SEED)
    model1 = train(im1, x1, model_1d(x1[:, 0]), SseConfig(max_degree=5))
    pts = im1.sample(10_000, 11)
    recursive = predict(model1, pts)
    flat_vals = predict(model1, pts, flattened=True)
    gap = np.max(np.abs(recursive - flat_vals) / (1.0 + np.abs(recursive)))
    assert gap <= 1e-8
    checks.append(f"flatten-vs-recursive {gap:.2e} <= 1e-8")

    # terminal masses sum to one
    for model in (model1,):
        total = sum(leaf.mass for leaf in model.leaves)
        assert abs(total - 1.0) <= 1e-12
    checks.append("terminal masses sum to 1 +/- 1e-12")

    # moments and first-order Sobol indices vs Monte Carlo (1e6 samples)
    im2 = InputModel((Gaussian(0.0, 1.0), Lognormal(1.0, 0.3)))
    x2 = im2.sample(400, 13)
    y2 = np.tanh(x2[:, 0]) + 0.3 * x2[:, 0] * x2[:, 1] + np.log(x2[:, 1])
    model2 = train(im2, x2, y2, SseConfig(max_degree=4, n_min=40))
    flat2 = flatten(model2)
    total2 = sum(leaf.mass for leaf in model2.leaves)
    assert abs(total2 - 1.0) <= 1e-12
    n_mc = 1_000_000
    sample = flat2.predict(im2.sample(n_mc, 19))
    se_mean = sample.std() / math.sqrt(n_mc)
    assert abs(mean(flat2) - sample.mean()) <= 4.0 * se_mean
    m2c = sample - sample.mean()
    se_var = math.sqrt(max(np.mean(m2c**4) - sample.var() ** 2, 0.0) / n_mc)
    assert abs(variance(flat2) - sample.var()) <= 4.0 * se_var
    checks.append("mean/variance within 4 MC standard errors (1e6)")

    sobol = first_order_sobol(flat2)
    rng = np.random.default_rng(55)
    base = rng.random((n_mc, 2))
    fresh = rng.random((n_mc, 2))
    y_base = flat2.predict_quantile(base)
    mu, var = y_base.mean(), y_base.var()
    for dim in range(2):
        mixed = fresh.copy()
        mixed[:, dim] = base[:, dim]
        terms = (y_base - mu) * (flat2.predict_quantile(mixed) - mu) / var
        se = terms.std() / math.sqrt(n_mc)
        assert abs(sobol.sobol_index[dim] - terms.mean()) <= 4.0 * se
    checks.append("first-order Sobol indices within 4 MC standard errors (1e6 pairs)")

    # analytic LOO equals explicit refits on small instances
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(10, 31))
        p = int(rng.integers(2, 9))
        design = rng.standard_normal((n, p))
        y = rng.standard_normal(n)
        analytic = ols_fit(design, y).loo
        errors = np.empty(n)
        for i in range(n):
            keep = np.arange(n) != i
            coef, *_ = np.linalg.lstsq(design[keep], y[keep], rcond=None)
            errors[i] = y[i] - design[i] @ coef
        explicit = float(np.mean(errors**2))
        worst = max(worst, abs(analytic - explicit) / explicit)
    assert worst <= 1e-8
    checks.append(f"analytic LOO vs explicit refits, worst rel diff {worst:.2e} <= 1e-8")

    # local-basis Gram matrices are the identity under quadrature
    rng = np.random.default_rng(3)
    worst_gram = 0.0
    for _ in range(10):
        lo = rng.random(2) * 0.5
        hi = lo + 0.25 + 0.5 * (1.0 - lo - 0.25) * rng.random(2)
        box = Box(tuple(lo), tuple(np.minimum(hi, 1.0)))
        for d in range(2):
            nodes, weights = gauss_legendre_nodes(11, box.interval(d))
            table = legendre_table(10, nodes, box.interval(d))
            gram = (table * weights) @ table.T
            worst_gram = max(worst_gram, float(np.abs(gram - np.eye(11)).max()))
    assert worst_gram <= 1e-10
    checks.append(f"local Gram matrices identity, worst dev {worst_gram:.2e} <= 1e-10")

    _report("A7", "; ".join(checks))


def test_a8_exact_recovery():
    # polynomial target inside A^{2,3,1,2}; N >= 3 |A|
    im = InputModel((Uniform(0.0, 1.0), Uniform(0.0, 1.0)))
    truncation = generate_truncation(2, 3, 1.0, 2)
    rng = np.random.default_rng(MASTER_SEED)
    coeffs = rng.uniform(-2.0, 2.0, len(truncation))
    box = unit_box(2)

    def target(pts):
        return eval_design_matrix(truncation, box, pts) @ coeffs

    n = 3 * len(truncation)
    x = im.sample(n, 1)
    fit = adaptive_fit(x, target(x), box, 3, q_grid=(1.0,), rank=2)
    x_val = im.sample(100_000, 2)
    truth = target(x_val)
    eta = float(np.mean((truth - fit.evaluate(x_val)) ** 2) / np.var(truth))
    assert eta < 1e-12
    _report("A8", f"level-0 fit reproduces an in-basis polynomial with eta={eta:.2e} < 1e-12")
