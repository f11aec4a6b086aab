"""Least-squares expansion fitting: analytic leave-one-out error, stepwise
predictor selection, and degree/q-norm adaptivity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .poly_basis import Box, basis_columns, generate_truncation, graded_lex_key

#: Leverage denominators 1 - h are capped below at this value.
HAT_DIAGONAL_CAP = 1e-10

#: q-norm grid scanned by the adaptive fit.
DEFAULT_Q_GRID = (0.5, 0.6, 0.7, 0.8)

#: Stepwise selection stops after this many consecutive non-improving additions.
DEFAULT_SELECT_STALL = 25


class IllConditionedBasisError(ValueError):
    """Candidate design matrix is rank deficient beyond tolerance."""


class OlsResult(NamedTuple):
    coefficients: np.ndarray
    loo: float
    unstable: bool
    #: plain LOO inflated by the small-sample factor N/(N-P) (1 + tr((X'X)^-1));
    #: used as the model-selection score, never as the reported error estimate
    selection_score: float


class SelectionResult(NamedTuple):
    active: tuple
    coefficients: np.ndarray
    loo: float
    unstable: bool
    selection_score: float


def _loo_error(residuals, hat_diagonal):
    denom = np.maximum(1.0 - hat_diagonal, HAT_DIAGONAL_CAP)
    return float(np.mean((residuals / denom) ** 2))


def _correction_factor(n, p, trace_inv):
    if n <= p:
        return math.inf
    return n / (n - p) * (1.0 + trace_inv)


def ols_fit(design, y):
    """Ordinary least squares with the analytic leave-one-out error.

    Solved through SVD (rank revealing).  The LOO error is
    ``mean(((y - yhat) / (1 - h))^2)`` with ``h`` the hat-matrix diagonal;
    leverages at 1 within 1e-10 use a capped denominator and flag the fit
    unstable.  The result also carries the small-sample-corrected LOO used as
    the selection score: near-interpolatory candidates would otherwise look
    deceptively good.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = design.shape
    if p < 1:
        raise ValueError("design matrix needs at least one column")
    if n < p:
        raise ValueError("more columns than rows; filter candidates first")
    u_mat, s, vt = np.linalg.svd(design, full_matrices=False)
    if s[0] == 0.0:
        raise IllConditionedBasisError("ill-conditioned basis")
    cutoff = s[0] * max(n, p) * np.finfo(float).eps
    if s[-1] <= cutoff:
        raise IllConditionedBasisError("ill-conditioned basis")
    coef = vt.T @ ((u_mat.T @ y) / s)
    hat = np.einsum("ij,ij->i", u_mat, u_mat)
    unstable = bool(np.any(hat >= 1.0 - 1e-10))
    residuals = y - design @ coef
    loo = _loo_error(residuals, hat)
    trace_inv = float(np.sum(1.0 / s**2))
    return OlsResult(coef, loo, unstable, loo * _correction_factor(n, p, trace_inv))


def sparse_select(design, y, max_terms, stall_limit=DEFAULT_SELECT_STALL):
    """Forward stepwise selection ranked by correlation with the residual.

    Columns enter one at a time (largest ``|col . r| / ||col||``, ties to the
    lowest index), the model is refit after each addition, and the
    sample-size-corrected LOO score is recorded along the path; the subset
    with the smallest score wins.  The empty model (zero prediction) is on the
    path, so a zero target selects nothing.  Columns that would make the
    design numerically rank deficient are skipped.  ``stall_limit``
    consecutive non-improving additions end the path early; pass ``None`` to
    walk the full path.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = design.shape
    max_terms = min(int(max_terms), n - 1, p)

    norms = np.sqrt(np.einsum("ij,ij->j", design, design))
    eligible = norms > 0.0

    best_score = float(np.mean(y**2))
    best_active = []
    active = []
    q_basis = np.empty((n, max(max_terms, 0)))
    r_inv = np.zeros((max(max_terms, 0), max(max_terms, 0)))
    trace_inv = 0.0
    k = 0
    resid = y.astype(float, copy=True)
    hat = np.zeros(n)
    stall = 0

    while k < max_terms and np.any(eligible):
        scores = np.full(p, -1.0)
        corr = np.abs(design[:, eligible].T @ resid) / norms[eligible]
        scores[eligible] = corr
        j = int(np.argmax(scores))
        if scores[j] <= 0.0:
            break
        eligible[j] = False
        # modified Gram-Schmidt with one reorthogonalization pass
        v = design[:, j].astype(float, copy=True)
        r_col = np.zeros(k)
        if k:
            c1 = q_basis[:, :k].T @ v
            v -= q_basis[:, :k] @ c1
            c2 = q_basis[:, :k].T @ v
            v -= q_basis[:, :k] @ c2
            r_col = c1 + c2
        nv = float(np.linalg.norm(v))
        if nv <= 1e-10 * norms[j]:
            continue
        q = v / nv
        q_basis[:, k] = q
        # grow the inverse triangular factor: tr((X'X)^-1) = ||R^-1||_F^2
        if k:
            top = -(r_inv[:k, :k] @ r_col) / nv
            r_inv[:k, k] = top
            trace_inv += float(top @ top)
        r_inv[k, k] = 1.0 / nv
        trace_inv += 1.0 / (nv * nv)
        k += 1
        active.append(j)
        resid -= q * (q @ resid)
        hat += q * q
        score = _loo_error(resid, hat) * _correction_factor(n, k, trace_inv)
        if score < best_score:
            best_score = score
            best_active = list(active)
            stall = 0
        else:
            stall += 1
            if stall_limit is not None and stall >= stall_limit:
                break

    chosen = tuple(sorted(best_active))
    if not chosen:
        empty_loo = float(np.mean(y**2))
        return SelectionResult((), np.zeros(0), empty_loo, False, empty_loo)
    refit = ols_fit(design[:, chosen], y)
    return SelectionResult(
        chosen, refit.coefficients, refit.loo, refit.unstable, refit.selection_score
    )


@dataclass(frozen=True, eq=False)
class Expansion:
    """Truncated orthonormal expansion on a box: active indices, coefficients,
    and the absolute LOO error of the fit that produced it."""

    indices: tuple
    coefficients: np.ndarray
    loo: float
    box: Box
    unstable: bool = False

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(tuple(a) for a in self.indices))
        coeffs = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", coeffs)
        if coeffs.shape != (len(self.indices),):
            raise ValueError("one coefficient per active index required")
        if coeffs.size and not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        if not self.loo >= 0.0:
            raise ValueError("loo must be >= 0")

    def __len__(self):
        return len(self.indices)

    def evaluate(self, points):
        """Value of the expansion at quantile-space points (caller owns geometry)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.indices:
            return np.zeros(pts.shape[0])
        return basis_columns(self.indices, self.box, pts) @ self.coefficients


def adaptive_fit(
    points,
    y,
    box,
    max_degree,
    q_grid=DEFAULT_Q_GRID,
    rank=2,
    *,
    stall_limit=DEFAULT_SELECT_STALL,
    size_cap=None,
):
    """Degree- and q-norm-adaptive sparse fit on one box.

    Scans degrees 0..max_degree and the q grid, skipping candidate bases
    larger than ``len(points) - 1`` and duplicate index sets, and keeps the
    candidate with the smallest corrected-LOO selection score (ties resolve
    to the smaller degree, then the smaller q, by scan order).  Raising the
    degree stops early once the per-degree best score has worsened twice in a
    row.  The returned expansion carries the plain analytic LOO of the winner.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    n, m = pts.shape
    if n != y.shape[0]:
        raise ValueError("points and responses disagree in length")
    if not np.all(box.contains(pts)):
        raise ValueError("point not in subdomain")

    col_cache = {}

    def columns_for(index_set):
        missing = [a for a in index_set if a not in col_cache]
        if missing:
            block = basis_columns(missing, box, pts)
            for i, a in enumerate(missing):
                col_cache[a] = block[:, i]
        return np.column_stack([col_cache[a] for a in index_set])

    best = None  # (selection score, loo, indices, coefficients, unstable)
    seen = set()
    last_degree_best = None
    worse_run = 0

    for degree in range(int(max_degree) + 1):
        degree_best = math.inf
        had_candidate = False
        for q in q_grid:
            kwargs = {"size_cap": size_cap} if size_cap is not None else {}
            truncation = generate_truncation(m, degree, q, rank, **kwargs)
            index_set = tuple(truncation)
            if len(index_set) > n - 1:
                continue
            if index_set in seen:
                continue
            seen.add(index_set)
            had_candidate = True
            design = columns_for(index_set)
            sel = sparse_select(design, y, min(n - 1, len(index_set)), stall_limit)
            degree_best = min(degree_best, sel.selection_score)
            if best is None or sel.selection_score < best[0]:
                chosen = tuple(index_set[j] for j in sel.active)
                best = (sel.selection_score, sel.loo, chosen, sel.coefficients, sel.unstable)
        if not had_candidate:
            if degree == 0:
                continue
            break  # larger degrees only grow the basis
        if last_degree_best is not None and degree_best > last_degree_best:
            worse_run += 1
            if worse_run >= 2:
                break
        else:
            worse_run = 0
        last_degree_best = degree_best

    if best is None:
        raise RuntimeError("no feasible expansion candidate")
    _, loo, indices, coefficients, unstable = best
    order = sorted(range(len(indices)), key=lambda i: graded_lex_key(indices[i]))
    indices = tuple(indices[i] for i in order)
    coefficients = np.asarray([coefficients[i] for i in order])
    return Expansion(indices, coefficients, loo, box, unstable)
