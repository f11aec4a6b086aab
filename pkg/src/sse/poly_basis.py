"""Orthonormal Legendre bases on boxes of the unit hypercube, and truncation sets.

All local bases are Legendre polynomials orthonormal with respect to the
uniform probability measure on an axis-aligned box in quantile space.  The
truncation sets combine a hyperbolic q-norm bound on the degrees with a cap on
the number of interacting inputs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

#: Hard cap on polynomial degree, guarding the three-term recurrence.
DEGREE_CAP = 60

#: Default cap on truncation-set size.
BASIS_SIZE_CAP = 200_000


def legendre_table(max_degree, u, interval=(0.0, 1.0)):
    """Orthonormal Legendre values for all degrees 0..max_degree.

    Returns an array of shape ``(max_degree + 1, n)``.  The polynomials are
    orthonormal w.r.t. the uniform probability measure on ``interval`` and are
    evaluated by the stable three-term recurrence after the affine map onto
    [-1, 1].
    """
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise ValueError("interval must satisfy upper > lower")
    if max_degree < 0:
        raise ValueError("degree must be >= 0")
    if max_degree > DEGREE_CAP:
        raise ValueError(f"degree {max_degree} exceeds cap {DEGREE_CAP}")
    u = np.asarray(u, dtype=float)
    t = (2.0 * u - (a + b)) / (b - a)
    out = np.empty((max_degree + 1,) + t.shape, dtype=float)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = t
    for k in range(1, max_degree):
        out[k + 1] = ((2.0 * k + 1.0) * t * out[k] - k * out[k - 1]) / (k + 1.0)
    for k in range(max_degree + 1):
        out[k] *= math.sqrt(2.0 * k + 1.0)
    return out


def legendre_orthonormal(degree, u, interval=(0.0, 1.0)):
    """Single orthonormal Legendre polynomial of the given degree.

    Evaluation outside ``interval`` is permitted (the polynomial is defined on
    the whole line); containment checks belong to the design-matrix path.
    """
    table = legendre_table(degree, u, interval)
    out = table[degree]
    return float(out) if np.ndim(u) == 0 else out


def gauss_legendre_nodes(n, interval=(0.0, 1.0)):
    """Gauss-Legendre nodes and probability weights on an interval.

    The weights sum to one, i.e. they integrate against the uniform
    probability measure on the interval.  Exact for polynomials of degree
    <= 2n - 1.
    """
    a, b = float(interval[0]), float(interval[1])
    t, w = np.polynomial.legendre.leggauss(int(n))
    nodes = 0.5 * (a + b) + 0.5 * (b - a) * t
    return nodes, 0.5 * w


def reprojection_vector(src_interval, dst_interval, degree):
    """Coefficients of a source-interval basis polynomial on a sub-interval basis.

    Expands the degree-``degree`` orthonormal polynomial of ``src_interval``,
    restricted to ``dst_interval``, in the orthonormal basis of
    ``dst_interval``.  The quadrature order makes the projection exact, so the
    returned vector of length ``degree + 1`` is the complete expansion.
    """
    if tuple(src_interval) == tuple(dst_interval):
        out = np.zeros(degree + 1)
        out[degree] = 1.0
        return out
    nodes, weights = gauss_legendre_nodes(degree + 1, dst_interval)
    src_vals = legendre_table(degree, nodes, src_interval)[degree]
    dst_vals = legendre_table(degree, nodes, dst_interval)
    return dst_vals @ (weights * src_vals)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box contained in the unit hypercube."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        up = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        if len(lo) != len(up) or len(lo) == 0:
            raise ValueError("box bounds must share a positive length")
        for a, b in zip(lo, up):
            if not (0.0 <= a < b <= 1.0):
                raise ValueError("box must be inside the unit hypercube with lower < upper")

    @property
    def ndim(self):
        return len(self.lower)

    def interval(self, d):
        return (self.lower[d], self.upper[d])

    def volume(self):
        v = 1.0
        for a, b in zip(self.lower, self.upper):
            v *= b - a
        return v

    def contains(self, points):
        """Boolean mask of points inside the closed box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lower)
        up = np.asarray(self.upper)
        return np.all((pts >= lo) & (pts <= up), axis=1)

    def replace_interval(self, d, lo, hi):
        lower = list(self.lower)
        upper = list(self.upper)
        lower[d] = lo
        upper[d] = hi
        return Box(tuple(lower), tuple(upper))


def unit_box(dimension):
    return Box((0.0,) * dimension, (1.0,) * dimension)


def graded_lex_key(alpha):
    """Sort key: total degree first, then lexicographic with earlier dims first."""
    return (sum(alpha), tuple(-a for a in alpha))


@dataclass(frozen=True)
class TruncationSet:
    """Ordered multi-index set bounded in q-norm and interaction rank."""

    indices: tuple
    dimension: int
    max_degree: int
    q: float
    rank: int

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(tuple(a) for a in self.indices))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


def _degree_assignments(n_parts, max_degree, q, budget):
    """All tuples of n_parts degrees >= 1 whose q-powers sum within budget."""
    if n_parts == 0:
        return [()]
    out = []
    for a in range(1, max_degree + 1):
        aq = float(a) ** q
        if aq > budget:
            break
        for rest in _degree_assignments(n_parts - 1, max_degree, q, budget - aq):
            out.append((a,) + rest)
    return out


def generate_truncation(dimension, max_degree, q=1.0, rank=2, size_cap=BASIS_SIZE_CAP):
    """Multi-indices with ``||alpha||_q <= max_degree`` and ``||alpha||_0 <= rank``.

    The comparison is done on q-th powers (monotone transform) with a 1e-12
    relative slack so that boundary indices are never lost to rounding.  The
    result is ordered graded-lexicographically and always contains the zero
    index.
    """
    dimension = int(dimension)
    max_degree = int(max_degree)
    rank = int(rank)
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    if max_degree < 0:
        raise ValueError("max degree must be >= 0")
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    if rank < 1:
        raise ValueError("rank must be >= 1")
    q = float(q)
    budget = (float(max_degree) ** q) * (1.0 + 1e-12)

    rank_eff = min(rank, dimension)
    per_size = []
    total = 1
    for k in range(1, rank_eff + 1):
        assigns = [
            t for t in _degree_assignments(k, max_degree, q, budget)
            if sum(float(a) ** q for a in t) <= budget
        ]
        per_size.append(assigns)
        total += math.comb(dimension, k) * len(assigns)
        if total > size_cap:
            raise ValueError("basis too large")

    indices = [(0,) * dimension]
    for k, assigns in enumerate(per_size, start=1):
        if not assigns:
            continue
        for dims in itertools.combinations(range(dimension), k):
            for degrees in assigns:
                alpha = [0] * dimension
                for d, a in zip(dims, degrees):
                    alpha[d] = a
                indices.append(tuple(alpha))

    indices.sort(key=graded_lex_key)
    return TruncationSet(tuple(indices), dimension, max_degree, q, rank)


def basis_columns(indices, box, points):
    """Design-matrix kernel: N x P values of the tensor-product basis.

    Assumes the caller controls geometry; no containment check here.  Each
    column touches only the dimensions where its multi-index is nonzero, so
    the cost scales with the interaction rank rather than the dimension.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n, m = pts.shape
    if m != box.ndim:
        raise ValueError("point dimension does not match box")
    indices = tuple(tuple(a) for a in indices)
    p = len(indices)
    max_deg = [0] * m
    for alpha in indices:
        for d, a in enumerate(alpha):
            if a > max_deg[d]:
                max_deg[d] = a
    tables = {}
    for d in range(m):
        if max_deg[d] > 0:
            tables[d] = legendre_table(max_deg[d], pts[:, d], box.interval(d))
    out = np.ones((n, p))
    for j, alpha in enumerate(indices):
        for d, a in enumerate(alpha):
            if a > 0:
                out[:, j] *= tables[d][a]
    return out


def eval_design_matrix(truncation, box, points, extrapolate=False):
    """Design matrix of a truncation set on a box at the given points.

    Training-path callers must pass points inside the box; evaluation outside
    is allowed only through ``extrapolate=True`` (diagnostics).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if not extrapolate and not np.all(box.contains(pts)):
        raise ValueError("point not in subdomain")
    return basis_columns(tuple(truncation), box, pts)
