"""Analytic post-processing of a flattened surrogate: one-dimensional
conditional expectations, first-order partial variances, Sobol indices.

Conditioning happens in quantile space.  Because every physical input maps to
its quantile through a monotone transform, the variance decomposition (and so
the indices) carries over to the physical inputs unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import mean as sse_mean
from .core import variance as sse_variance
from .poly_basis import legendre_table, reprojection_vector


@dataclass(frozen=True, eq=False)
class PiecewisePoly1D:
    """Piecewise polynomial on [0, 1]: disjoint intervals covering the unit
    interval, each with coefficients in its own orthonormal basis."""

    segments: tuple  # of (lower, upper, coefficient array)

    def __post_init__(self):
        segs = tuple((float(a), float(b), np.asarray(c, dtype=float)) for a, b, c in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("piecewise polynomial needs at least one segment")
        if segs[0][0] != 0.0 or segs[-1][1] != 1.0:
            raise ValueError("segments must cover [0, 1]")
        for (a0, b0, _), (a1, _, _) in zip(segs, segs[1:]):
            if b0 != a1 or not b0 > a0:
                raise ValueError("segments must be sorted, disjoint and contiguous")

    def evaluate(self, u):
        """Value at points of [0, 1]; breakpoints belong to the right segment."""
        arr = np.atleast_1d(np.asarray(u, dtype=float))
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("quantile outside [0, 1]")
        edges = np.array([s[0] for s in self.segments[1:]])
        which = np.searchsorted(edges, arr, side="right")
        out = np.empty(arr.shape)
        for k, (a, b, coeffs) in enumerate(self.segments):
            ids = np.nonzero(which == k)[0]
            if not ids.size:
                continue
            table = legendre_table(len(coeffs) - 1, arr[ids], (a, b))
            out[ids] = coeffs @ table
        return float(out[0]) if np.ndim(u) == 0 else out

    def integral(self):
        """Exact integral over [0, 1]."""
        return float(sum((b - a) * c[0] for a, b, c in self.segments))

    def second_moment(self):
        """Exact integral of the square over [0, 1]."""
        return float(sum((b - a) * float(c @ c) for a, b, c in self.segments))


@dataclass(frozen=True, eq=False)
class SobolResult:
    """First-order partial variances and Sobol indices, one entry per input."""

    partial_variance: np.ndarray
    sobol_index: np.ndarray
    variance: float

    @property
    def dimension(self):
        return len(self.sobol_index)


def conditional_expectation_1d(flattened, dim):
    """Expectation of the surrogate conditioned on one input's quantile.

    Terminal domains overlap once the other dimensions are integrated out, so
    their projected intervals are refined into the disjoint breakpoint
    partition; on each refined interval every contribution is re-projected
    onto that interval's orthonormal basis (exact for polynomials) and summed
    with its marginalized mass ``V / edge``.
    """
    m = flattened.input_model.dimension
    if not 0 <= dim < m:
        raise ValueError(f"dimension index out of range: {dim}")

    cuts = {0.0, 1.0}
    for dom in flattened.domains:
        lo, hi = dom.box.interval(dim)
        cuts.add(lo)
        cuts.add(hi)
    breakpoints = sorted(cuts)

    segments = []
    for a, b in zip(breakpoints, breakpoints[1:]):
        acc = {}
        for dom in flattened.domains:
            lo, hi = dom.box.interval(dim)
            if not (lo <= a and b <= hi):
                continue
            weight = dom.mass / (hi - lo)
            pure = [
                (alpha[dim], c)
                for alpha, c in zip(dom.indices, dom.coefficients)
                if all(k == 0 for d, k in enumerate(alpha) if d != dim)
            ]
            if not pure:
                continue
            if (lo, hi) == (a, b):
                for degree, c in pure:
                    acc[degree] = acc.get(degree, 0.0) + weight * c
            else:
                for degree, c in pure:
                    vec = reprojection_vector((lo, hi), (a, b), degree)
                    for k in range(degree + 1):
                        if vec[k] != 0.0:
                            acc[k] = acc.get(k, 0.0) + weight * c * vec[k]
        max_degree = max(acc) if acc else 0
        coeffs = np.zeros(max_degree + 1)
        for k, v in acc.items():
            coeffs[k] = v
        segments.append((a, b, coeffs))
    return PiecewisePoly1D(tuple(segments))


def first_order_partial_variance(flattened, dim):
    """Variance of the one-dimensional conditional expectation.

    Computed as the exact second moment of the piecewise conditional minus the
    squared mean.  Small negative roundoff is clamped to zero; anything beyond
    the 1e-12 relative guard indicates a re-projection defect and raises.
    """
    conditional = conditional_expectation_1d(flattened, dim)
    second = conditional.second_moment()
    mu = sse_mean(flattened)
    value = second - mu * mu
    guard = 1e-12 * max(1.0, abs(second))
    if value < -guard:
        raise ValueError("negative partial variance beyond tolerance")
    return max(value, 0.0)


def first_order_sobol(flattened):
    """First-order Sobol indices of every input dimension."""
    total = sse_variance(flattened)
    if total <= 0.0:
        raise ValueError("degenerate constant model")
    m = flattened.input_model.dimension
    partial = np.array([first_order_partial_variance(flattened, d) for d in range(m)])
    return SobolResult(partial, partial / total, total)
