import itertools
import math

import numpy as np
import pytest

from sse.poly_basis import eval_design_matrix, generate_truncation, unit_box
from sse.regression import (
    Expansion,
    IllConditionedBasisError,
    adaptive_fit,
    ols_fit,
    sparse_select,
)


def explicit_loo(design, y):
    """Oracle: N separate refits, each leaving one row out."""
    n = design.shape[0]
    errors = np.empty(n)
    for i in range(n):
        keep = np.arange(n) != i
        coef, *_ = np.linalg.lstsq(design[keep], y[keep], rcond=None)
        errors[i] = y[i] - design[i] @ coef
    return float(np.mean(errors**2))


def test_ols_exact_line_in_orthonormal_basis():
    # y = 2 + 3u  ->  coefficients (3.5, sqrt(3)/2) in the orthonormal basis
    u = np.array([[0.05], [0.3], [0.5], [0.7], [0.95]])
    y = 2.0 + 3.0 * u[:, 0]
    design = eval_design_matrix(generate_truncation(1, 1, 1.0, 1), unit_box(1), u)
    result = ols_fit(design, y)
    assert result.coefficients == pytest.approx([3.5, math.sqrt(3.0) / 2.0], rel=1e-12)
    assert result.loo < 1e-24
    assert not result.unstable


def test_ols_constant_target():
    design = np.ones((7, 1))
    result = ols_fit(design, np.full(7, 4.25))
    assert result.coefficients[0] == pytest.approx(4.25, rel=1e-15)
    assert result.loo == 0.0


def test_ols_interpolatory_fit_is_flagged():
    design = np.array([[1.0, 0.0], [1.0, 1.0]])
    result = ols_fit(design, np.array([1.0, 2.0]))
    assert result.unstable
    assert math.isfinite(result.loo)
    assert np.allclose(design @ result.coefficients, [1.0, 2.0], atol=1e-12)


def test_ols_rank_deficiency_raises():
    design = np.column_stack([np.ones(6), np.ones(6)])
    with pytest.raises(IllConditionedBasisError, match="ill-conditioned basis"):
        ols_fit(design, np.arange(6.0))


def test_ols_rejects_more_columns_than_rows():
    with pytest.raises(ValueError):
        ols_fit(np.ones((2, 3)), np.ones(2))


@pytest.mark.parametrize("trial", range(10))
def test_analytic_loo_matches_explicit_refits(trial):
    rng = np.random.default_rng(100 + trial)
    n = int(rng.integers(10, 31))
    p = int(rng.integers(2, 9))
    design = rng.standard_normal((n, p))
    y = rng.standard_normal(n)
    result = ols_fit(design, y)
    oracle = explicit_loo(design, y)
    assert result.loo == pytest.approx(oracle, rel=1e-8)


@pytest.mark.parametrize("trial", range(10))
def test_ols_residuals_orthogonal_to_columns(trial):
    rng = np.random.default_rng(300 + trial)
    design = rng.standard_normal((40, 6))
    y = rng.standard_normal(40)
    result = ols_fit(design, y)
    residual = y - design @ result.coefficients
    assert np.abs(design.T @ residual).max() <= 1e-9 * np.linalg.norm(y)


def test_sparse_select_single_active_column():
    rng = np.random.default_rng(7)
    design = rng.standard_normal((60, 6))
    y = 2.5 * design[:, 3]
    result = sparse_select(design, y, max_terms=6)
    assert 3 in result.active
    assert result.loo < 1e-20


def test_sparse_select_zero_target_selects_nothing():
    rng = np.random.default_rng(8)
    design = rng.standard_normal((30, 5))
    result = sparse_select(design, np.zeros(30), max_terms=5)
    assert result.active == ()
    assert result.coefficients.size == 0
    assert result.loo == 0.0


def test_sparse_select_against_best_subset_oracle():
    # shrunken instance: exhaustive best-subset by LOO over P = 10 columns
    rng = np.random.default_rng(42)
    n, p, k = 200, 10, 3
    design = rng.standard_normal((n, p))
    true_support = (1, 4, 8)
    coef = np.zeros(p)
    coef[list(true_support)] = (1.5, -2.0, 1.0)
    y = design @ coef
    result = sparse_select(design, y, max_terms=p)
    assert set(true_support) <= set(result.active)
    assert result.loo < 1e-18

    best_loo = math.inf
    for size in range(1, k + 1):
        for subset in itertools.combinations(range(p), size):
            loo = ols_fit(design[:, subset], y).loo
            best_loo = min(best_loo, loo)
    assert result.loo <= best_loo + 1e-18


def test_sparse_select_recovers_sparse_truth_among_many_columns():
    rng = np.random.default_rng(11)
    n, p = 200, 50
    design = rng.standard_normal((n, p))
    support = (0, 7, 19, 33, 49)
    y = design[:, support] @ np.array([2.0, -1.0, 0.5, 1.5, -2.5])
    result = sparse_select(design, y, max_terms=min(n - 1, p))
    assert set(support) <= set(result.active)
    assert result.loo < 1e-16


def test_adaptive_fit_constant_target():
    rng = np.random.default_rng(3)
    pts = rng.random((20, 2))
    e = adaptive_fit(pts, np.full(20, 3.25), unit_box(2), 3)
    assert e.indices == ((0, 0),)
    assert e.coefficients[0] == pytest.approx(3.25, rel=1e-14)
    assert e.loo == pytest.approx(0.0, abs=1e-24)


def test_adaptive_fit_exact_cubic_recovery():
    rng = np.random.default_rng(5)
    pts = rng.random((50, 1))
    u = pts[:, 0]
    y = 0.5 - 1.2 * u + 0.3 * u**2 + 2.0 * u**3
    e = adaptive_fit(pts, y, unit_box(1), 5)
    assert max(sum(a) for a in e.indices) >= 3
    assert e.loo < 1e-24
    grid = np.linspace(0.0, 1.0, 101).reshape(-1, 1)
    target = 0.5 - 1.2 * grid[:, 0] + 0.3 * grid[:, 0] ** 2 + 2.0 * grid[:, 0] ** 3
    assert np.abs(e.evaluate(grid) - target).max() < 1e-11


def test_adaptive_fit_never_worse_than_constant_fit():
    rng = np.random.default_rng(17)
    for trial in range(5):
        pts = rng.random((40, 2))
        y = np.sin(6.0 * pts[:, 0]) + rng.standard_normal(40)
        e = adaptive_fit(pts, y, unit_box(2), 4)
        constant_loo = ols_fit(np.ones((40, 1)), y).loo
        assert e.loo <= constant_loo + 1e-12


def test_adaptive_fit_peak_residual_concentrates_near_peak():
    # the smooth trend is captured; the sharp peak dominates what remains
    rng = np.random.default_rng(23)
    pts = rng.random((200, 1))
    u = pts[:, 0]
    y = -u + 0.1 * np.sin(30.0 * u) + np.exp(-((50.0 * (u - 0.65)) ** 2))
    e = adaptive_fit(pts, y, unit_box(1), 5)
    residual = y - e.evaluate(pts)
    near = np.abs(u - 0.65) < 0.1
    assert np.abs(residual[near]).max() > 4.0 * np.abs(residual[~near]).mean()


def test_adaptive_fit_requires_points_inside_box():
    with pytest.raises(ValueError, match="point not in subdomain"):
        adaptive_fit(np.array([[1.5]]), np.array([1.0]), unit_box(1), 2)


def test_adaptive_fit_empty_design_errors():
    with pytest.raises(Exception):
        adaptive_fit(np.empty((0, 1)), np.empty(0), unit_box(1), 2)


def test_expansion_validation_and_null_function():
    null = Expansion((), np.zeros(0), 0.0, unit_box(1))
    assert null.evaluate(np.array([[0.5]])) == pytest.approx([0.0])
    with pytest.raises(ValueError):
        Expansion(((0,),), np.zeros(2), 0.0, unit_box(1))
    with pytest.raises(ValueError):
        Expansion(((0,),), np.array([np.nan]), 0.0, unit_box(1))
    with pytest.raises(ValueError):
        Expansion(((0,),), np.array([1.0]), -1.0, unit_box(1))
