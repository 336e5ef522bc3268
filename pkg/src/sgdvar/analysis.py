"""Closed-form references, CLT diagnostics, and confidence balls.

The special functions needed here (normal CDF, Kolmogorov tail,
chi-square quantile) are implemented on top of the standard library so
the package carries no statistics dependency.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from .estimator import EstimatorState
from .schedule import StepParams

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class SphereReferences:
    """Exact limit quantities for the median of the uniform sphere law.

    All four operators are positive multiples of the identity: the
    objective Hessian at the optimum, the gradient covariance there, the
    asymptotic covariance of the raw iterate, and the asymptotic
    covariance of the average (the sandwich of the first two).
    """

    dim: int
    hessian: np.ndarray
    gradient_covariance: np.ndarray
    iterate_covariance: np.ndarray
    average_covariance: np.ndarray


def sphere_references(d: int) -> SphereReferences:
    """Closed forms for dimension d >= 3."""
    if d < 3:
        raise ValueError("sphere references require dimension >= 3")
    eye = np.eye(d)
    return SphereReferences(
        dim=d,
        hessian=(d - 1) / d * eye,
        gradient_covariance=eye / d,
        iterate_covariance=eye / (2.0 * (d - 1)),
        average_covariance=d / (d - 1) ** 2 * eye,
    )


def normalize_iterate(point, truth, n: int, dim: int, params: StepParams) -> np.ndarray:
    """Rescale a raw iterate so each component is asymptotically N(0, 1).

    Returns sqrt(2(d-1)) * n^(1/3) * (point - truth). The factor is tied
    to the unit step scale with exponent 2/3 on the sphere problem, so any
    other (c_gamma, alpha) is refused.
    """
    if dim < 3:
        raise ValueError("normalization requires dimension >= 3")
    if abs(params.c_gamma - 1.0) > 1e-12 or abs(params.alpha - 2.0 / 3.0) > 1e-12:
        raise ValueError(
            "iterate normalization requires c_gamma=1 and alpha=2/3, "
            f"got c_gamma={params.c_gamma}, alpha={params.alpha}"
        )
    factor = math.sqrt(2.0 * (dim - 1)) * float(n) ** (1.0 / 3.0)
    return factor * (np.asarray(point, dtype=float) - np.asarray(truth, dtype=float))


def normalize_average(point, truth, n: int, dim: int) -> np.ndarray:
    """Rescale an averaged iterate so each component is asymptotically N(0, 1).

    Returns sqrt(n) * (d-1)/sqrt(d) * (point - truth), linear in the
    residual point - truth.
    """
    if dim < 3:
        raise ValueError("normalization requires dimension >= 3")
    factor = math.sqrt(n) * (dim - 1) / math.sqrt(dim)
    return factor * (np.asarray(point, dtype=float) - np.asarray(truth, dtype=float))


@dataclass(frozen=True)
class KsResult:
    """One-sample Kolmogorov-Smirnov outcome against the standard normal."""

    statistic: float
    p_value: float
    sample_size: int


def _normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def _kolmogorov_p(lam: float) -> float:
    """Tail of the Kolmogorov distribution at lam = sqrt(n) * D.

    Uses the alternating series 2 sum (-1)^(k-1) exp(-2 k^2 lam^2) for
    large arguments and the theta-function form of the same distribution
    for small ones, where the alternating series converges too slowly;
    terms below 1e-10 are dropped.
    """
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        x = math.exp(-math.pi ** 2 / (8.0 * lam * lam))
        total = 0.0
        for k in range(1, 50):
            term = x ** ((2 * k - 1) ** 2)
            total += term
            if term < 1e-10:
                break
        cdf = math.sqrt(2.0 * math.pi) / lam * total
        return min(1.0, max(0.0, 1.0 - cdf))
    total = 0.0
    sign = 1.0
    for k in range(1, 10000):
        term = math.exp(-2.0 * k * k * lam * lam)
        total += sign * term
        if term < 1e-10:
            break
        sign = -sign
    return min(1.0, max(0.0, 2.0 * total))


def ks_normal(samples) -> KsResult:
    """Two-sided one-sample KS test of the samples against N(0, 1).

    The statistic is the exact sup-distance between the empirical CDF and
    the normal CDF from the sorted-sample formula; the p-value comes from
    the asymptotic Kolmogorov distribution.
    """
    arr = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    n = arr.shape[0]
    if n == 0:
        raise ValueError("KS test requires at least one sample")
    if not np.isfinite(arr).all():
        raise ValueError("KS test requires finite samples")
    stat = 0.0
    for i, x in enumerate(arr, start=1):
        cdf = _normal_cdf(float(x))
        stat = max(stat, i / n - cdf, cdf - (i - 1) / n)
    return KsResult(stat, _kolmogorov_p(math.sqrt(n) * stat), n)


def frobenius_error(estimate, truth) -> float:
    """Frobenius norm of estimate - truth."""
    a = np.asarray(estimate, dtype=float)
    b = np.asarray(truth, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def _reg_lower_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x).

    Power series for x < a + 1, Lentz continued fraction for the upper
    tail otherwise; both standard evaluations, accurate to ~1e-14.
    """
    if x < 0 or a <= 0:
        raise ValueError("P(a, x) requires a > 0 and x >= 0")
    if x == 0.0:
        return 0.0
    log_scale = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        k = a
        for _ in range(1000):
            k += 1.0
            term *= x / k
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return min(1.0, total * math.exp(log_scale))
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return max(0.0, 1.0 - math.exp(log_scale) * h)


def chi_square_quantile(level: float, dof: int) -> float:
    """Quantile of the chi-square distribution with dof degrees of freedom.

    Safeguarded Newton iteration on the regularized incomplete gamma CDF,
    started from the Wilson-Hilferty normal approximation; absolute error
    well below 1e-6 over the tested range.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    if dof < 1:
        raise ValueError("dof must be a positive integer")
    a = dof / 2.0
    z = statistics.NormalDist().inv_cdf(level)
    t = 2.0 / (9.0 * dof)
    x = dof * (1.0 - t + z * math.sqrt(t)) ** 3
    if x <= 0.0:
        x = 1e-8
    lo = 0.0
    hi = max(2.0 * x, dof + 20.0 * math.sqrt(2.0 * dof) + 20.0)
    while _reg_lower_gamma(a, hi / 2.0) < level:
        hi *= 2.0
    for _ in range(200):
        f = _reg_lower_gamma(a, x / 2.0) - level
        if f > 0.0:
            hi = x
        else:
            lo = x
        log_pdf = (a - 1.0) * math.log(x) - x / 2.0 - a * math.log(2.0) - math.lgamma(a)
        step = f / math.exp(log_pdf)
        nxt = x - step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= 1e-12 * (1.0 + x):
            return nxt
        x = nxt
    return x


@dataclass
class ConfidenceBall:
    """Asymptotic confidence region for the true parameter.

    The ellipsoidal form accepts a point when
    n * (center - point)' (Sigma + ridge I)^{-1} (center - point) stays
    below the chi-square(d) quantile; the spherical fallback replaces the
    quadratic form by the Euclidean ball of radius
    sqrt(quantile * lambda_max / n).
    """

    center: np.ndarray
    level: float
    quantile: float
    mahalanobis_radius: float
    spherical_radius: float | None
    _chol: np.ndarray | None = field(repr=False, default=None)
    _n: int = field(repr=False, default=0)

    def statistic(self, point) -> float:
        """Quadratic-form statistic of the tested point."""
        diff = self.center - np.asarray(point, dtype=float)
        if self._chol is None:
            raise ValueError("spherical ball does not define the quadratic form")
        y = np.linalg.solve(self._chol, diff)
        return self._n * float(y @ y)

    def test(self, point) -> bool:
        """True when the point lies inside the confidence region."""
        if self.spherical_radius is not None:
            diff = self.center - np.asarray(point, dtype=float)
            return float(np.linalg.norm(diff)) <= self.spherical_radius
        return self.statistic(point) <= self.quantile


def confidence_ball(state: EstimatorState, level: float = 0.95,
                    ridge: float | None = None, spherical: bool = False) -> ConfidenceBall:
    """Build a confidence region from the current online state.

    ridge defaults to 1e-8 * trace(Sigma)/d and must be positive when the
    covariance estimate is still identically zero.
    """
    sigma = state.covariance
    d = sigma.shape[0]
    n = state.n
    trace = float(np.trace(sigma))
    if ridge is None:
        ridge = 1e-8 * trace / d
    if trace == 0.0 and ridge == 0.0:
        raise ValueError("covariance estimate is zero; a positive ridge is required")
    regularized = sigma + ridge * np.eye(d)
    quantile = chi_square_quantile(level, d)
    if spherical:
        lam_max = float(np.linalg.eigvalsh(regularized)[-1])
        return ConfidenceBall(
            center=state.average.copy(),
            level=level,
            quantile=quantile,
            mahalanobis_radius=math.sqrt(quantile / n),
            spherical_radius=math.sqrt(quantile * lam_max / n),
            _chol=None,
            _n=n,
        )
    try:
        chol = np.linalg.cholesky(regularized)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance estimate is singular; increase ridge") from exc
    return ConfidenceBall(
        center=state.average.copy(),
        level=level,
        quantile=quantile,
        mahalanobis_radius=math.sqrt(quantile / n),
        spherical_radius=None,
        _chol=chol,
        _n=n,
    )
