"""Diversity conditioned on member-average uncertainty.

The pipeline turns member predictions into per-point (avg uncertainty,
diversity) samples, estimates the conditional expectation of diversity
given the average with kernel ridge regression, summarizes the shift
between two conditions with a relative-difference statistic d, and
calibrates d with a permutation test over re-partitions of the pooled
sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.linalg import LinAlgError
from scipy.linalg import cho_factor, cho_solve
from scipy.integrate import trapezoid

from .decomposition import decompose_entropy, decompose_quadratic
from .errors import NumericalError, ValidationError

DEFAULT_RIDGE_SCALE = 1e-3
RIDGE_FLOOR = 1e-8
DEFAULT_GRID_SIZE = 100
DEFAULT_TRIM_PERCENTILES = (1.0, 99.0)
MAX_RIDGE_ESCALATIONS = 3


@dataclass
class JointSample:
    """Paired per-point values: x = member-average uncertainty, y = diversity."""

    avg: np.ndarray
    div: np.ndarray
    source: str = ""

    def __post_init__(self) -> None:
        self.avg = np.asarray(self.avg, dtype=np.float64)
        self.div = np.asarray(self.div, dtype=np.float64)
        if self.avg.shape != self.div.shape or self.avg.ndim != 1:
            raise ValidationError("avg and div must be 1-d arrays of equal length")

    @property
    def n(self) -> int:
        return int(self.avg.shape[0])


def joint_samples(members: Sequence[np.ndarray], family: str = "quadratic", source: str = "") -> JointSample:
    """Build the joint sample for one condition from member probabilities."""
    if family == "quadratic":
        rec = decompose_quadratic(members)
    elif family == "entropy":
        rec = decompose_entropy(members)
    else:
        raise ValidationError(f"unknown family {family!r}")
    return JointSample(rec.avg_member, rec.diversity, source)


def scott_bandwidth_1d(x: np.ndarray) -> float:
    """Per-dimension bandwidth for a 2-d KDE: n^(-1/6) times the sample std."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValidationError("bandwidth needs at least two points")
    std = float(x.std(ddof=1))
    if std == 0.0:
        raise ValidationError("bandwidth undefined for zero-variance data")
    return float(x.size ** (-1.0 / 6.0) * std)


def scott_bandwidth(sample: JointSample) -> tuple[float, float]:
    return scott_bandwidth_1d(sample.avg), scott_bandwidth_1d(sample.div)


@dataclass
class KdeGrid:
    """Product-Gaussian density estimate evaluated on a rectangular grid.

    density[i, j] pairs x_grid[i] with y_grid[j]. After conditional
    normalization each x-slice with nonzero mass sums to 1.
    """

    x_grid: np.ndarray
    y_grid: np.ndarray
    density: np.ndarray
    bandwidth: tuple[float, float]


def _gauss_profile(grid: np.ndarray, points: np.ndarray, h: float) -> np.ndarray:
    z = (grid[:, None] - points[None, :]) / h
    return np.exp(-0.5 * z * z) / (h * np.sqrt(2.0 * np.pi))


def kde_joint(
    sample: JointSample,
    x_grid: np.ndarray,
    y_grid: np.ndarray,
    bandwidth: tuple[float, float] | None = None,
) -> KdeGrid:
    """Kernel density estimate with a product Gaussian kernel.

    Bandwidths default to the per-dimension Scott rule. The estimate is a
    proper density, so it integrates to 1 over a grid wide enough to cover
    the kernels' support.
    """
    x_grid = np.asarray(x_grid, dtype=np.float64)
    y_grid = np.asarray(y_grid, dtype=np.float64)
    if bandwidth is None:
        bandwidth = scott_bandwidth(sample)
    hx, hy = bandwidth
    if hx <= 0 or hy <= 0:
        raise ValidationError("bandwidths must be positive")
    kx = _gauss_profile(x_grid, sample.avg, hx)
    ky = _gauss_profile(y_grid, sample.div, hy)
    density = kx @ ky.T / sample.n
    return KdeGrid(x_grid, y_grid, density, (float(hx), float(hy)))


def conditional_grid(grid: KdeGrid, tol: float = 1e-12) -> tuple[KdeGrid, np.ndarray]:
    """Normalize each x-slice to unit sum, approximating p(y | x).

    Slices whose total mass falls below `tol` are zeroed and flagged in the
    returned boolean array.
    """
    totals = grid.density.sum(axis=1)
    empty = totals < tol
    safe = np.where(empty, 1.0, totals)
    density = np.where(empty[:, None], 0.0, grid.density / safe[:, None])
    return KdeGrid(grid.x_grid, grid.y_grid, density, grid.bandwidth), empty


@dataclass
class ConditionalCurve:
    """Kernel ridge estimate of E[diversity | avg] on an evaluation grid."""

    x_grid: np.ndarray
    y_hat: np.ndarray
    bandwidth: float
    ridge: float


def _krr_weights(x: np.ndarray, y: np.ndarray, bandwidth: float, ridge: float) -> tuple[np.ndarray, float]:
    n = x.shape[0]
    d = x[:, None] - x[None, :]
    k = np.exp(-(d * d) / (2.0 * bandwidth * bandwidth))
    base = ridge if ridge > 0 else 1e-12
    attempt = ridge
    for step in range(MAX_RIDGE_ESCALATIONS + 1):
        try:
            factor = cho_factor(k + attempt * n * np.eye(n), lower=True)
            return cho_solve(factor, y), attempt
        except LinAlgError:
            attempt = base * 10.0 ** (step + 1)
    raise NumericalError(
        f"kernel system not positive definite after {MAX_RIDGE_ESCALATIONS} ridge escalations"
    )


def krr_conditional_expectation(
    x: np.ndarray,
    y: np.ndarray,
    x_eval: np.ndarray,
    bandwidth: float | None = None,
    ridge: float | None = None,
) -> ConditionalCurve:
    """Fit kernel ridge regression of y on x and evaluate on a grid.

    Solves (K + ridge * n * I) alpha = y with a Gaussian kernel via Cholesky,
    escalating the ridge tenfold up to three times if factorization fails.
    The ridge scales with n, so duplicating every observation leaves the
    fitted curve unchanged. Defaults: Scott bandwidth of x, ridge
    1e-3 * var(y) floored at 1e-8 against the unit-scale kernel diagonal.
    Without the floor, near-constant targets drive the solve toward exact
    interpolation and the curve can swing far outside the data range.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x_eval = np.asarray(x_eval, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-d arrays of equal length")
    if x.size < 2:
        raise ValidationError("regression needs at least two points")
    if bandwidth is None:
        bandwidth = scott_bandwidth_1d(x)
    if bandwidth <= 0:
        raise ValidationError("bandwidth must be positive")
    if ridge is None:
        ridge = max(DEFAULT_RIDGE_SCALE * float(y.var()), RIDGE_FLOOR)
    if ridge < 0:
        raise ValidationError("ridge must be nonnegative")
    alpha, used = _krr_weights(x, y, float(bandwidth), float(ridge))
    d = x_eval[:, None] - x[None, :]
    k_eval = np.exp(-(d * d) / (2.0 * bandwidth * bandwidth))
    return ConditionalCurve(x_eval, k_eval @ alpha, float(bandwidth), float(used))


def fit_sample_curve(sample: JointSample, x_eval: np.ndarray, ridge: float | None = None) -> ConditionalCurve:
    return krr_conditional_expectation(sample.avg, sample.div, x_eval, ridge=ridge)


def evaluation_grid(
    sample_a: JointSample,
    sample_b: JointSample,
    n: int = DEFAULT_GRID_SIZE,
    trim: tuple[float, float] = DEFAULT_TRIM_PERCENTILES,
) -> np.ndarray:
    """Shared grid: n points between trimmed percentiles of the pooled avg
    values, restricted to the overlap of the two samples' ranges."""
    pooled = np.concatenate([sample_a.avg, sample_b.avg])
    lo = float(np.percentile(pooled, trim[0]))
    hi = float(np.percentile(pooled, trim[1]))
    lo = max(lo, float(sample_a.avg.min()), float(sample_b.avg.min()))
    hi = min(hi, float(sample_a.avg.max()), float(sample_b.avg.max()))
    if not hi > lo:
        raise ValidationError("sample supports do not overlap; no shared grid exists")
    return np.linspace(lo, hi, n)


def d_statistic(curve_ind: ConditionalCurve, curve_ood: ConditionalCurve, integral: bool = False) -> float:
    """Relative excess of the OOD curve over the InD curve.

    Default form: sum of pointwise differences divided by the sum of the
    InD curve. The integral form instead integrates the pointwise relative
    difference over the grid and carries the units of the x axis.
    """
    if not np.array_equal(curve_ind.x_grid, curve_ood.x_grid):
        raise ValidationError("curves must share one evaluation grid")
    if integral:
        rel = (curve_ood.y_hat - curve_ind.y_hat) / curve_ind.y_hat
        return float(trapezoid(rel, curve_ind.x_grid))
    denom = float(curve_ind.y_hat.sum())
    if denom <= 0.0:
        raise NumericalError("InD curve has nonpositive total; d is undefined")
    return float((curve_ood.y_hat - curve_ind.y_hat).sum() / denom)


@dataclass
class DStatResult:
    """Observed d with its permutation p-value and diagnostics."""

    d: float
    p_value: float
    n_surrogates: int
    d_surrogates: np.ndarray
    x_grid: np.ndarray
    curve_ind: ConditionalCurve
    curve_ood: ConditionalCurve


def permutation_test(
    sample_ind: JointSample,
    sample_ood: JointSample,
    n_surrogates: int = 100,
    seed: int = 0,
    grid_size: int = DEFAULT_GRID_SIZE,
    integral: bool = False,
) -> DStatResult:
    """Permutation calibration of the d statistic.

    The pooled sample is re-partitioned into the original sizes once per
    surrogate; both curves are refit (bandwidth and ridge re-derived from
    each surrogate sample) on the fixed evaluation grid. The p-value uses
    the add-one rule (#{d_surr >= d_obs} + 1) / (n_surrogates + 1), so it
    is never zero. Each surrogate draws from its own RNG stream keyed by
    (seed, surrogate index), making the result independent of execution
    order.
    """
    if n_surrogates < 1:
        raise ValidationError("need at least one surrogate")
    x_eval = evaluation_grid(sample_ind, sample_ood, n=grid_size)
    curve_ind = fit_sample_curve(sample_ind, x_eval)
    curve_ood = fit_sample_curve(sample_ood, x_eval)
    d_obs = d_statistic(curve_ind, curve_ood, integral=integral)

    pooled_avg = np.concatenate([sample_ind.avg, sample_ood.avg])
    pooled_div = np.concatenate([sample_ind.div, sample_ood.div])
    n_ind = sample_ind.n
    n_total = pooled_avg.shape[0]

    d_surr = np.empty(n_surrogates)
    for k in range(n_surrogates):
        rng = np.random.default_rng([seed, k])
        perm = rng.permutation(n_total)
        take_ind, take_ood = perm[:n_ind], perm[n_ind:]
        surr_ind = JointSample(pooled_avg[take_ind], pooled_div[take_ind], "surrogate_ind")
        surr_ood = JointSample(pooled_avg[take_ood], pooled_div[take_ood], "surrogate_ood")
        c_ind = fit_sample_curve(surr_ind, x_eval)
        c_ood = fit_sample_curve(surr_ood, x_eval)
        d_surr[k] = d_statistic(c_ind, c_ood, integral=integral)

    p = (int((d_surr >= d_obs).sum()) + 1) / (n_surrogates + 1)
    return DStatResult(d_obs, float(p), n_surrogates, d_surr, x_eval, curve_ind, curve_ood)
