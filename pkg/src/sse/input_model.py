"""Probabilistic input models: independent marginals and the quantile-space map.

Everything downstream (partitioning, local bases, post-processing) happens in
the unit hypercube image of the inputs under the componentwise CDF map.  This
module defines that map, its inverse, and inverse-CDF sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

EULER_GAMMA = 0.5772156649015329

#: Relative tolerance for the moment-matching round trip checked at construction.
MOMENT_MATCH_RTOL = 1e-12


def _as_finite_array(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite input")
    return arr


class Marginal:
    """Base class for one-dimensional marginal distributions.

    Subclasses resolve user-facing moments into distribution parameters at
    construction time and verify that the resolved parameters reproduce the
    declared moments to relative 1e-12.
    """

    family = "base"
    #: Bounded families admit the quantiles 0 and 1; unbounded ones do not.
    bounded = False

    def support(self):
        raise NotImplementedError

    def _cdf(self, x):
        raise NotImplementedError

    def _inv_cdf(self, u):
        raise NotImplementedError

    def spec(self):
        """User-facing parametrization as a plain dict (used for files)."""
        raise NotImplementedError

    def cdf(self, x):
        """Cumulative distribution function, scalar or elementwise on arrays."""
        arr = _as_finite_array(x)
        lo, hi = self.support()
        if np.any(arr < lo) or np.any(arr > hi):
            raise ValueError("input outside support")
        out = self._cdf(arr)
        return float(out) if np.ndim(x) == 0 else out

    def inv_cdf(self, u):
        """Quantile function; the inverse of :meth:`cdf`.

        Quantiles 0 and 1 are rejected for unbounded families.
        """
        arr = _as_finite_array(u)
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("quantile outside [0, 1]")
        if not self.bounded and (np.any(arr == 0.0) or np.any(arr == 1.0)):
            raise ValueError("unbounded quantile")
        out = self._inv_cdf(arr)
        return float(out) if np.ndim(u) == 0 else out


@dataclass(frozen=True)
class Uniform(Marginal):
    lower: float
    upper: float

    family = "uniform"
    bounded = True

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError("uniform bounds must be finite")
        if not self.upper > self.lower:
            raise ValueError("uniform requires upper > lower")

    @property
    def mean(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def std(self):
        return (self.upper - self.lower) / math.sqrt(12.0)

    def support(self):
        return (self.lower, self.upper)

    def _cdf(self, x):
        return (x - self.lower) / (self.upper - self.lower)

    def _inv_cdf(self, u):
        return self.lower + u * (self.upper - self.lower)

    def spec(self):
        return {"family": self.family, "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True)
class Gaussian(Marginal):
    mean: float
    std: float

    family = "gaussian"

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.std)):
            raise ValueError("gaussian moments must be finite")
        if not self.std > 0.0:
            raise ValueError("gaussian requires std > 0")

    def support(self):
        return (-math.inf, math.inf)

    def _cdf(self, x):
        return ndtr((x - self.mean) / self.std)

    def _inv_cdf(self, u):
        return self.mean + self.std * ndtri(u)

    def spec(self):
        return {"family": self.family, "mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class Lognormal(Marginal):
    """Lognormal resolved from its mean and coefficient of variation.

    sigma^2 = ln(1 + cov^2), mu = ln(mean) - sigma^2 / 2.
    """

    mean: float
    cov: float
    mu: float = field(init=False, repr=False, compare=False)
    sigma: float = field(init=False, repr=False, compare=False)

    family = "lognormal"

    def __post_init__(self):
        if not self.mean > 0.0:
            raise ValueError("lognormal requires mean > 0")
        if not self.cov > 0.0:
            raise ValueError("lognormal requires cov > 0")
        sigma2 = math.log1p(self.cov * self.cov)
        sigma = math.sqrt(sigma2)
        mu = math.log(self.mean) - 0.5 * sigma2
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        mean_rt = math.exp(mu + 0.5 * sigma2)
        cov_rt = math.sqrt(math.expm1(sigma2))
        if abs(mean_rt - self.mean) > MOMENT_MATCH_RTOL * abs(self.mean):
            raise ValueError("lognormal moment matching failed")
        if abs(cov_rt - self.cov) > MOMENT_MATCH_RTOL * abs(self.cov):
            raise ValueError("lognormal moment matching failed")

    @property
    def std(self):
        return self.cov * self.mean

    def support(self):
        return (0.0, math.inf)

    def _cdf(self, x):
        if np.any(np.asarray(x) <= 0.0):
            raise ValueError("input outside support")
        return ndtr((np.log(x) - self.mu) / self.sigma)

    def _inv_cdf(self, u):
        return np.exp(self.mu + self.sigma * ndtri(u))

    def spec(self):
        return {"family": self.family, "mean": self.mean, "cov": self.cov}


@dataclass(frozen=True)
class Gumbel(Marginal):
    """Gumbel (maximum) resolved from its mean and coefficient of variation.

    scale = std * sqrt(6) / pi, loc = mean - euler_gamma * scale.
    """

    mean: float
    cov: float
    loc: float = field(init=False, repr=False, compare=False)
    scale: float = field(init=False, repr=False, compare=False)

    family = "gumbel"

    def __post_init__(self):
        if not self.cov > 0.0:
            raise ValueError("gumbel requires cov > 0")
        if not math.isfinite(self.mean):
            raise ValueError("gumbel mean must be finite")
        std = abs(self.mean) * self.cov
        if not std > 0.0:
            raise ValueError("gumbel requires a nonzero mean")
        scale = std * math.sqrt(6.0) / math.pi
        loc = self.mean - EULER_GAMMA * scale
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "scale", scale)
        mean_rt = loc + EULER_GAMMA * scale
        std_rt = scale * math.pi / math.sqrt(6.0)
        if abs(mean_rt - self.mean) > MOMENT_MATCH_RTOL * abs(self.mean):
            raise ValueError("gumbel moment matching failed")
        if abs(std_rt - std) > MOMENT_MATCH_RTOL * std:
            raise ValueError("gumbel moment matching failed")

    @property
    def std(self):
        return abs(self.mean) * self.cov

    def support(self):
        return (-math.inf, math.inf)

    def _cdf(self, x):
        # exp(-exp(-z)) underflows harmlessly to 0 for very negative z
        z = (x - self.loc) / self.scale
        with np.errstate(over="ignore"):
            return np.exp(-np.exp(-z))

    def _inv_cdf(self, u):
        return self.loc - self.scale * np.log(-np.log(u))

    def spec(self):
        return {"family": self.family, "mean": self.mean, "cov": self.cov}


_FAMILY_BUILDERS = {
    "uniform": lambda d: Uniform(float(d["lower"]), float(d["upper"])),
    "gaussian": lambda d: Gaussian(float(d["mean"]), float(d["std"])),
    "lognormal": lambda d: Lognormal(float(d["mean"]), float(d["cov"])),
    "gumbel": lambda d: Gumbel(float(d["mean"]), float(d["cov"])),
}


def marginal_from_spec(d):
    """Build a marginal from its plain-dict description (inverse of ``spec()``)."""
    family = d.get("family")
    if family not in _FAMILY_BUILDERS:
        raise ValueError(f"unknown marginal family: {family!r}")
    return _FAMILY_BUILDERS[family](d)


@dataclass(frozen=True)
class InputModel:
    """Ordered collection of mutually independent marginals."""

    marginals: tuple

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if len(self.marginals) < 1:
            raise ValueError("input model needs at least one marginal")
        for m in self.marginals:
            if not isinstance(m, Marginal):
                raise TypeError("marginals must be Marginal instances")

    @property
    def dimension(self):
        return len(self.marginals)

    def _coerce(self, x):
        """Normalize to an (n, M) array; ``single`` marks one-point inputs.

        A 1-D array of length M is one point; for M == 1 a longer 1-D array is
        a batch of points.
        """
        arr = _as_finite_array(x)
        single = False
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
            single = True
        elif arr.ndim == 1:
            if arr.shape[0] == self.dimension:
                arr = arr.reshape(1, -1)
                single = True
            elif self.dimension == 1:
                arr = arr.reshape(-1, 1)
            else:
                raise ValueError(
                    f"expected points of dimension {self.dimension}, got shape {np.shape(x)}"
                )
        if arr.ndim != 2 or arr.shape[1] != self.dimension:
            raise ValueError(
                f"expected points of dimension {self.dimension}, got shape {np.shape(x)}"
            )
        return arr, single

    def to_quantile(self, x):
        """Map physical points to the unit hypercube, componentwise CDF."""
        arr, single = self._coerce(x)
        out = np.empty_like(arr)
        for d, m in enumerate(self.marginals):
            out[:, d] = m.cdf(arr[:, d])
        return out[0] if single else out

    def from_quantile(self, u):
        """Inverse of :meth:`to_quantile`, componentwise quantile functions."""
        arr, single = self._coerce(u)
        out = np.empty_like(arr)
        for d, m in enumerate(self.marginals):
            out[:, d] = m.inv_cdf(arr[:, d])
        return out[0] if single else out

    def sample(self, n, seed):
        """Draw ``n`` points by inverse-CDF sampling.

        The generator is numpy's PCG64 (``np.random.default_rng(seed)``); the
        uniform draws live in [0, 1) and exact zeros are nudged to the smallest
        positive double so unbounded marginals stay finite.  Deterministic for
        a given seed.
        """
        n = int(n)
        if n < 1:
            raise ValueError("sample size must be >= 1")
        rng = np.random.default_rng(seed)
        u = rng.random((n, self.dimension))
        u[u == 0.0] = np.finfo(float).tiny
        return self.from_quantile(u)

    def spec(self):
        return {"marginals": [m.spec() for m in self.marginals]}


def input_model_from_spec(d):
    return InputModel(tuple(marginal_from_spec(m) for m in d["marginals"]))
