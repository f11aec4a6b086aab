"""Benchmark case studies and the convergence / error-estimator harness.

Four deterministic model functions of increasing difficulty: a one-dimensional
peak function, a high-dimensional double-kernel function with decaying
dimension weights, an eight-dimensional damped-oscillator limit state, and a
three-bar-quantity truss with discontinuous snap-through response.  The
harness trains the tree surrogate and a single-domain spectral baseline on
replicated experimental designs and records out-of-sample relative MSE along
with the internal error estimate.
"""

from __future__ import annotations

import csv
import math
import time
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.stats import pearsonr, spearmanr

from .core import SseConfig, gen_error_estimate, flatten, train
from .input_model import Gaussian, Gumbel, InputModel, Lognormal, Uniform
from .poly_basis import unit_box
from .regression import adaptive_fit

CONVERGENCE_HEADER = ("case", "N", "rep", "method", "eta", "eps_gen_hat", "wall_seconds")
BOXPLOT_HEADER = ("case", "N", "method", "median", "q1", "q3", "lo_whisker", "hi_whisker")

DEFAULT_MASTER_SEED = 20406
DESK_N_VAL = 100_000
PAPER_N_VAL = 1_000_000


# ---------------------------------------------------------------------------
# model functions


def model_1d(x):
    """One-dimensional test function: trend, oscillation, and a sharp peak."""
    arr = np.asarray(x, dtype=float)
    out = -arr + 0.1 * np.sin(30.0 * arr) + np.exp(-((50.0 * (arr - 0.65)) ** 2))
    return float(out) if np.ndim(x) == 0 else out


def model_zhou(x, dimension=None):
    """Double Gaussian-kernel function with exponentially decaying weights.

    Evaluated in log space with a final log-sum-exp so the ``10^M / 2``
    prefactor never overflows (safe for M <= 200).
    """
    arr = np.atleast_2d(np.asarray(x, dtype=float))
    m = arr.shape[1] if dimension is None else int(dimension)
    if arr.shape[1] != m:
        raise ValueError("point dimension mismatch")
    a2 = np.exp(-2.0 * np.arange(m))
    log_prefactor = m * math.log(10.0) - math.log(2.0) - 0.5 * m * math.log(2.0 * math.pi)
    q1 = -50.0 * ((arr - 1.0 / 3.0) ** 2) @ a2
    q2 = -50.0 * ((arr - 2.0 / 3.0) ** 2) @ a2
    top = np.maximum(q1, q2)
    out = np.exp(log_prefactor + top + np.log(np.exp(q1 - top) + np.exp(q2 - top)))
    return float(out[0]) if np.ndim(x) == 1 else out


def model_oscillator(x):
    """Force margin of a two-mass damped oscillator under white-noise base
    acceleration; inputs (m_p, m_s, k_p, k_s, z_p, z_s, s0, f_s), peak factor 3.
    """
    arr = np.atleast_2d(np.asarray(x, dtype=float))
    if arr.shape[1] != 8:
        raise ValueError("oscillator expects 8 inputs")
    if np.any(arr <= 0.0):
        raise ValueError("oscillator inputs must be positive")
    m_p, m_s, k_p, k_s, z_p, z_s, s0, f_s = arr.T
    omega_p = np.sqrt(k_p / m_p)
    omega_s = np.sqrt(k_s / m_s)
    gamma = m_s / m_p
    omega_a = 0.5 * (omega_p + omega_s)
    z_a = 0.5 * (z_p + z_s)
    theta = (omega_p - omega_s) / omega_a
    msd = (
        np.pi
        * s0
        / (4.0 * z_s * omega_s**3)
        * (z_a * z_s / (z_p * z_s * (4.0 * z_a**2 + theta**2) + gamma * z_a**2))
        * ((z_p * omega_p**3 + z_s * omega_s**3) * omega_p / (4.0 * z_a * omega_a**4))
    )
    out = f_s - 3.0 * k_s * np.sqrt(msd)
    return float(out[0]) if np.ndim(x) == 1 else out


TRUSS_INITIAL_ANGLE = math.radians(10.0)
TRUSS_BAR_LENGTH = 5.0
#: E [GPa] * A [cm^2] * 100 gives the axial stiffness in kN (loads in kN).
TRUSS_STIFFNESS_TO_KN = 100.0
_TRUSS_BISECTIONS = 80


def _truss_load_kn(alpha, stiffness_kn):
    """Load P(alpha) on an equilibrium branch, in kN."""
    a0 = TRUSS_INITIAL_ANGLE
    return -2.0 * stiffness_kn * np.tan(alpha) * (math.cos(a0) - np.cos(alpha))


def truss_critical_load(e_gpa, a_cm2):
    """Snap-through load: maximum of the pre-snap equilibrium branch.

    The maximizer satisfies cos(alpha)^3 = cos(alpha0).
    """
    a0 = TRUSS_INITIAL_ANGLE
    alpha_star = np.arccos(math.cos(a0) ** (1.0 / 3.0))
    stiffness = np.asarray(e_gpa, dtype=float) * np.asarray(a_cm2, dtype=float) * TRUSS_STIFFNESS_TO_KN
    return 2.0 * stiffness * (np.sin(alpha_star) - np.tan(alpha_star) * math.cos(a0)), alpha_star


def _bisect(f, lo, hi, iterations=_TRUSS_BISECTIONS):
    """Vectorized bisection; f(lo) >= 0 >= f(hi) assumed elementwise."""
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        positive = f(mid) >= 0.0
        lo = np.where(positive, mid, lo)
        hi = np.where(positive, hi, mid)
    return 0.5 * (lo + hi)


def model_truss(x):
    """Vertical tip displacement [m] of the snap-through truss.

    Inputs (P [kN], E [GPa], A [cm^2]); the stable pre-snap equilibrium is
    used for P <= P_cr, the post-snap branch otherwise.  Both branches are
    strictly monotone in the bar angle, so bisection to machine-level
    brackets the unique root.
    """
    arr = np.atleast_2d(np.asarray(x, dtype=float))
    if arr.shape[1] != 3:
        raise ValueError("truss expects 3 inputs (P, E, A)")
    if np.any(arr <= 0.0):
        raise ValueError("truss inputs must be positive")
    load, e_gpa, a_cm2 = arr.T
    a0 = TRUSS_INITIAL_ANGLE
    stiffness = e_gpa * a_cm2 * TRUSS_STIFFNESS_TO_KN
    p_cr, alpha_star = truss_critical_load(e_gpa, a_cm2)

    alpha = np.empty(load.shape)
    pre = load <= p_cr

    if np.any(pre):
        s = stiffness[pre]
        p = load[pre]
        # load decreases from P_cr at alpha* to 0 at alpha0
        alpha[pre] = _bisect(
            lambda a: _truss_load_kn(a, s) - p,
            np.full(p.shape, alpha_star),
            np.full(p.shape, a0),
        )

    post = ~pre
    if np.any(post):
        s = stiffness[post]
        p = load[post]
        # load increases without bound as alpha decreases below -alpha0
        lo = np.full(p.shape, -a0 - 0.05)
        limit = -0.5 * math.pi
        bracketed = _truss_load_kn(lo, s) >= p
        for _ in range(60):
            if np.all(bracketed):
                break
            lo = np.where(bracketed, lo, 0.5 * (lo + limit))
            bracketed = _truss_load_kn(lo, s) >= p
        if not np.all(bracketed):
            raise RuntimeError("no equilibrium found")
        alpha[post] = _bisect(
            lambda a: _truss_load_kn(a, s) - p,
            lo,
            np.full(p.shape, -a0),
        )

    w = TRUSS_BAR_LENGTH * math.cos(a0) * (math.tan(a0) - np.tan(alpha))
    return float(w[0]) if np.ndim(x) == 1 else w


# ---------------------------------------------------------------------------
# case registry


@dataclass(frozen=True)
class ModeSettings:
    sizes: tuple
    replications: int
    n_val: int


@dataclass(frozen=True)
class BenchmarkCase:
    """A model function with its input model and study defaults."""

    name: str
    input_model: InputModel
    fn: object
    d_sse: int
    d_pce: int
    smoke: ModeSettings
    paper: ModeSettings

    def settings(self, mode):
        if mode == "smoke":
            return self.smoke
        if mode == "paper":
            return self.paper
        raise ValueError(f"unknown mode: {mode!r} (expected smoke or paper)")


def _uniform_cube(m):
    return InputModel(tuple(Uniform(0.0, 1.0) for _ in range(m)))


def _model_1d_rows(x):
    return model_1d(np.atleast_2d(np.asarray(x, dtype=float))[:, 0])


def _oscillator_inputs():
    spec = [
        (1.50, 0.1),   # primary mass
        (0.01, 0.1),   # secondary mass
        (1.00, 0.2),   # primary stiffness
        (0.01, 0.2),   # secondary stiffness
        (0.05, 0.4),   # primary damping ratio
        (0.02, 0.5),   # secondary damping ratio
        (100.0, 0.1),  # white noise intensity
        (15.0, 0.1),   # secondary force capacity
    ]
    return InputModel(tuple(Lognormal(mean, cov) for mean, cov in spec))


def _truss_inputs():
    return InputModel((Gumbel(430.0, 0.20), Lognormal(210.0, 0.10), Gaussian(10.0, 0.5)))


def case_registry():
    """All benchmark cases keyed by name."""
    cases = [
        BenchmarkCase(
            name="1d",
            input_model=_uniform_cube(1),
            fn=_model_1d_rows,
            d_sse=5,
            d_pce=20,
            smoke=ModeSettings((10, 50, 100, 200), 10, DESK_N_VAL),
            paper=ModeSettings((10, 50, 100, 200), 10, PAPER_N_VAL),
        ),
        BenchmarkCase(
            name="zhou",
            input_model=_uniform_cube(10),
            fn=model_zhou,
            d_sse=2,
            d_pce=7,
            smoke=ModeSettings((500, 2000), 3, DESK_N_VAL),
            paper=ModeSettings((500, 1000, 2000, 5000), 10, PAPER_N_VAL),
        ),
        BenchmarkCase(
            name="zhou100",
            input_model=_uniform_cube(100),
            fn=model_zhou,
            d_sse=2,
            d_pce=7,
            smoke=ModeSettings((1000, 2000), 3, DESK_N_VAL),
            paper=ModeSettings((1000, 2000, 5000, 10000), 10, PAPER_N_VAL),
        ),
        BenchmarkCase(
            name="oscillator",
            input_model=_oscillator_inputs(),
            fn=model_oscillator,
            d_sse=4,
            d_pce=10,
            smoke=ModeSettings((1000, 5000), 3, DESK_N_VAL),
            paper=ModeSettings((1000, 5000, 10000, 20000), 10, PAPER_N_VAL),
        ),
        BenchmarkCase(
            name="truss",
            input_model=_truss_inputs(),
            fn=model_truss,
            d_sse=4,
            d_pce=10,
            smoke=ModeSettings((100, 500, 1000), 5, DESK_N_VAL),
            paper=ModeSettings((100, 500, 1000, 2000, 5000), 10, PAPER_N_VAL),
        ),
    ]
    return {case.name: case for case in cases}


def get_case(name):
    registry = case_registry()
    if name not in registry:
        known = ", ".join(sorted(registry))
        raise ValueError(f"unknown benchmark case {name!r}; valid cases: {known}")
    return registry[name]


# ---------------------------------------------------------------------------
# harness


def derive_seed(master_seed, *parts):
    """Deterministic child seed from a master seed and labels/integers."""
    entropy = [int(master_seed) & 0xFFFFFFFF]
    for part in parts:
        if isinstance(part, str):
            entropy.append(zlib.crc32(part.encode("utf-8")))
        else:
            entropy.append(int(part) & 0xFFFFFFFF)
    return np.random.SeedSequence(entropy).generate_state(1)[0]


def relative_mse(surrogate, truth, input_model, n_val=DESK_N_VAL, seed=0):
    """Monte Carlo relative mean squared error of a surrogate against truth."""
    x = input_model.sample(n_val, seed)
    t = np.asarray(truth(x), dtype=float)
    s = np.asarray(surrogate(x), dtype=float)
    return float(np.mean((t - s) ** 2) / np.var(t))


def _relative_mse_from_arrays(pred, truth_values, truth_var):
    return float(np.mean((truth_values - pred) ** 2) / truth_var)


@dataclass(frozen=True)
class ConvergenceRecord:
    """One trained surrogate: out-of-sample error and internal estimate.

    ``depth``, ``n_expansions`` and ``n_min`` carry the structural diagnostics
    used by the acceptance gate; only the seven interface columns go to CSV.
    """

    case: str
    n: int
    rep: int
    method: str
    eta: float
    eps_gen_hat: float
    wall_seconds: float
    depth: int = 0
    n_expansions: int = 0
    n_min: int = 0

    def row(self):
        return (
            self.case,
            str(self.n),
            str(self.rep),
            self.method,
            repr(self.eta),
            repr(self.eps_gen_hat),
            repr(self.wall_seconds),
        )


def run_convergence(
    case,
    sizes=None,
    replications=None,
    *,
    mode="smoke",
    master_seed=DEFAULT_MASTER_SEED,
    n_val=None,
    q_grid=None,
    rank=2,
    d_sse=None,
    d_pce=None,
    n_min=None,
):
    """Convergence study: tree surrogate vs the single-domain baseline.

    For every (size, replication) pair an experimental design is drawn with a
    seed derived from (master seed, case, size, replication), both surrogates
    are trained, and the relative MSE on a case-wide fixed validation sample
    is recorded next to the relative internal error estimate.  The baseline is
    the same adaptive sparse fit restricted to the root domain with the larger
    degree cap.  Deterministic apart from wall times.
    """
    if isinstance(case, str):
        case = get_case(case)
    settings = case.settings(mode)
    sizes = tuple(int(s) for s in (sizes if sizes is not None else settings.sizes))
    replications = int(replications if replications is not None else settings.replications)
    n_val = int(n_val if n_val is not None else settings.n_val)
    d_sse = int(d_sse if d_sse is not None else case.d_sse)
    d_pce = int(d_pce if d_pce is not None else case.d_pce)
    q_grid = tuple(q_grid) if q_grid is not None else SseConfig().q_grid

    im = case.input_model
    x_val = im.sample(n_val, derive_seed(master_seed, case.name, "validation"))
    t_val = np.asarray(case.fn(x_val), dtype=float)
    var_val = float(np.var(t_val))
    u_val = im.to_quantile(x_val)
    root_box = unit_box(im.dimension)

    records = []
    for n in sizes:
        for rep in range(replications):
            seed = derive_seed(master_seed, case.name, n, rep)
            x = im.sample(n, seed)
            y = np.asarray(case.fn(x), dtype=float)
            var_y = float(np.var(y))

            cfg = SseConfig(max_degree=d_sse, q_grid=q_grid, rank=rank, n_min=n_min, seed=int(seed))
            t0 = time.perf_counter()
            model = train(im, x, y, cfg)
            wall_sse = time.perf_counter() - t0
            flat = flatten(model)
            eta_sse = _relative_mse_from_arrays(flat.predict_quantile(u_val), t_val, var_val)
            _, eps_sse = gen_error_estimate(model)
            records.append(
                ConvergenceRecord(
                    case.name, n, rep, "sse", eta_sse, eps_sse, wall_sse,
                    depth=model.depth, n_expansions=model.n_expansions, n_min=model.n_min,
                )
            )

            u = im.to_quantile(x)
            t0 = time.perf_counter()
            baseline = adaptive_fit(u, y, root_box, d_pce, q_grid, rank)
            wall_pce = time.perf_counter() - t0
            eta_pce = _relative_mse_from_arrays(baseline.evaluate(u_val), t_val, var_val)
            eps_pce = baseline.loo / var_y if var_y > 0.0 else (0.0 if baseline.loo == 0.0 else math.inf)
            records.append(
                ConvergenceRecord(
                    case.name, n, rep, "pce", eta_pce, eps_pce, wall_pce,
                    depth=0, n_expansions=1, n_min=model.n_min,
                )
            )
    return records


def tukey_summary(values):
    """Median, quartiles and Tukey whiskers of a sample."""
    vals = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(vals, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    inside = vals[(vals >= q1 - 1.5 * iqr) & (vals <= q3 + 1.5 * iqr)]
    return float(med), float(q1), float(q3), float(inside.min()), float(inside.max())


def summarize_box(records):
    """Box-plot statistics of eta per (case, N, method) group."""
    groups = {}
    for rec in records:
        groups.setdefault((rec.case, rec.n, rec.method), []).append(rec.eta)
    rows = []
    for (case, n, method) in sorted(groups, key=lambda k: (k[0], k[1], k[2])):
        med, q1, q3, lo, hi = tukey_summary(groups[(case, n, method)])
        rows.append((case, str(n), method, repr(med), repr(q1), repr(q3), repr(lo), repr(hi)))
    return rows


def median_eta(records, case, n, method):
    vals = [r.eta for r in records if (r.case, r.n, r.method) == (case, n, method)]
    if not vals:
        raise ValueError(f"no records for {(case, n, method)}")
    return float(np.median(vals))


@dataclass(frozen=True)
class EstimatorAccuracy:
    """Log-log agreement between the internal estimate and the true error."""

    case: str
    method: str
    count: int
    pearson_log: float
    spearman: float
    underestimation_fraction: float


def estimator_accuracy(records):
    """Correlation statistics of the error estimate per (case, method) group."""
    groups = {}
    for rec in records:
        groups.setdefault((rec.case, rec.method), []).append(rec)
    out = []
    floor = 1e-300
    for (case, method) in sorted(groups):
        recs = groups[(case, method)]
        eta = np.array([max(r.eta, floor) for r in recs])
        eps = np.array([max(r.eps_gen_hat, floor) for r in recs])
        if len(recs) >= 2 and np.ptp(eta) > 0.0 and np.ptp(eps) > 0.0:
            pearson = float(pearsonr(np.log(eps), np.log(eta)).statistic)
            spearman = float(spearmanr(eps, eta).statistic)
        else:
            pearson = math.nan
            spearman = math.nan
        frac = float(np.mean([r.eps_gen_hat < r.eta for r in recs]))
        out.append(EstimatorAccuracy(case, method, len(recs), pearson, spearman, frac))
    return out


# ---------------------------------------------------------------------------
# delimited output


def write_convergence_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CONVERGENCE_HEADER)
        for rec in records:
            writer.writerow(rec.row())


def write_boxplot_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BOXPLOT_HEADER)
        for row in summarize_box(records):
            writer.writerow(row)
