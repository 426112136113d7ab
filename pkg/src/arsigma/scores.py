"""Closed-form scores for Gaussian probabilistic forecasts.

Two scores are provided, together with their sigma-derivatives and
known minimizers:

* the continuous ranked probability score (CRPS) of a single Gaussian
  forecast against a scalar observation, and
* a reliability score (RS) measuring how far the empirical distribution
  of scaled relative errors ``eta = eps / (sqrt(2) * sigma)`` is from a
  standard normal.

Slow quadrature versions of both scores are included as independent
test oracles; the fitting code never calls them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import erf as _erf
from scipy.special import erfinv as _erfinv

__all__ = [
    "ForecastTriple",
    "RelativeErrorSet",
    "erf",
    "erfinv",
    "gaussian_cdf",
    "crps_gaussian",
    "crps_dsigma",
    "crps_sigma_min",
    "crps_quadrature_oracle",
    "reliability_score",
    "rs_dsigma",
    "rs_optimal_etas",
    "rs_quadrature_oracle",
    "rs_min",
]

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
# constant term of the reliability score, (1/2) * sqrt(2/pi)
_RS_CONSTANT = 0.5 * _SQRT_2_OVER_PI


def erf(x):
    """Error function (double precision, vectorized)."""
    return _erf(x)


def erfinv(x):
    """Inverse error function on (-1, 1) (double precision, vectorized)."""
    return _erfinv(x)


def gaussian_cdf(y, mu=0.0, sigma=1.0):
    """Cumulative distribution of a Gaussian, 0.5*(erf((y-mu)/(sqrt2 sigma))+1)."""
    return 0.5 * (_erf((y - mu) / (math.sqrt(2.0) * sigma)) + 1.0)


@dataclass(frozen=True)
class ForecastTriple:
    """One Gaussian forecast (mu, sigma) paired with its observation."""

    mu: float
    sigma: float
    y_obs: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma) and math.isfinite(self.y_obs)):
            raise ValueError("forecast triple fields must be finite")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be strictly positive, got {self.sigma}")

    @property
    def eps(self) -> float:
        """Signed error y_obs - mu."""
        return self.y_obs - self.mu


@dataclass(frozen=True)
class RelativeErrorSet:
    """Sorted scaled relative errors eta_i = eps_i / (sqrt(2) sigma_i)."""

    etas: np.ndarray
    n: int = field(default=0)

    def __post_init__(self):
        etas = np.asarray(self.etas, dtype=float)
        if etas.ndim != 1 or etas.size < 1:
            raise ValueError("etas must be a non-empty 1-D vector")
        if not np.all(np.isfinite(etas)):
            raise ValueError("etas must be finite")
        if np.any(np.diff(etas) < 0.0):
            raise ValueError("etas must be sorted in non-decreasing order")
        object.__setattr__(self, "etas", etas)
        object.__setattr__(self, "n", etas.size)

    @classmethod
    def from_errors(cls, eps, sigmas) -> "RelativeErrorSet":
        """Build the sorted set from raw errors and their sigmas.

        Ties are resolved by a stable sort on the original index.
        """
        eps = np.asarray(eps, dtype=float)
        sigmas = np.asarray(sigmas, dtype=float)
        if np.any(sigmas <= 0.0):
            raise ValueError("all sigmas must be strictly positive")
        etas = eps / (math.sqrt(2.0) * sigmas)
        return cls(np.sort(etas, kind="stable"))


def _as_triple(t) -> ForecastTriple:
    if isinstance(t, ForecastTriple):
        return t
    return ForecastTriple(*t)


def crps_values(eps, sigma):
    """Vectorized CRPS of Gaussian forecasts, in terms of eps = y_obs - mu.

    Used by the cost/metric paths; `crps_gaussian` is the validated
    single-forecast surface.  Written with sigma distributed through the
    bracket so the sigma -> 0 absolute-error limit is exact in floats.
    """
    eps = np.asarray(eps, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    with np.errstate(over="ignore"):
        z = eps / sigma
        gauss = np.exp(-0.5 * z * z)  # z*z may overflow to inf; exp(-inf) = 0
    return eps * _erf(z / math.sqrt(2.0)) + sigma * (_SQRT_2_OVER_PI * gauss - 1.0 / _SQRT_PI)


def crps_dsigma_values(eps, sigma):
    """Vectorized derivative of the Gaussian CRPS with respect to sigma."""
    eps = np.asarray(eps, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    with np.errstate(over="ignore"):
        z = eps / sigma
        gauss = np.exp(-0.5 * z * z)
    return _SQRT_2_OVER_PI * gauss - 1.0 / _SQRT_PI


def crps_gaussian(t) -> float:
    """CRPS of a single Gaussian forecast against its observation.

    Non-negative, has the units of the target, and collapses to the
    absolute error |y_obs - mu| as sigma -> 0.
    """
    t = _as_triple(t)
    return float(crps_values(t.eps, t.sigma))


def crps_dsigma(t) -> float:
    """Derivative of the Gaussian CRPS with respect to sigma."""
    t = _as_triple(t)
    return float(crps_dsigma_values(t.eps, t.sigma))


def crps_sigma_min(eps) -> float:
    """The sigma minimizing the CRPS for a fixed error: |eps| / sqrt(log 2)."""
    return abs(float(eps)) / math.sqrt(math.log(2.0))


def crps_quadrature_oracle(t) -> float:
    """CRPS by direct numerical integration of the defining integral.

    Test oracle only.  Integrates [P(y) - H(y - y_obs)]^2 over a window
    of 12 sigma around both mu and y_obs, splitting at the step
    discontinuity.  The window is widened to cover y_obs because for
    |eps| > 12 sigma the gap between the cdf and the step function is
    essentially 1 on the whole stretch between them.
    """
    t = _as_triple(t)
    lo = min(t.mu, t.y_obs) - 12.0 * t.sigma
    hi = max(t.mu, t.y_obs) + 12.0 * t.sigma

    def integrand(y):
        step = 1.0 if y >= t.y_obs else 0.0
        return (gaussian_cdf(y, t.mu, t.sigma) - step) ** 2

    val, err = integrate.quad(
        integrand, lo, hi, points=[t.y_obs], limit=400, epsabs=1e-12, epsrel=1e-12
    )
    if err > 1e-10:
        raise RuntimeError(f"CRPS quadrature did not converge (err={err:g})")
    return float(val)


def _rs_etas(s) -> np.ndarray:
    if isinstance(s, RelativeErrorSet):
        return s.etas
    etas = np.asarray(s, dtype=float)
    if np.any(np.diff(etas) < 0.0):
        raise ValueError("etas must be sorted in non-decreasing order")
    return etas


def reliability_score(s, drop_constant: bool = False) -> float:
    """Reliability score of a sorted set of scaled relative errors.

    Evaluates the analytic (telescoped) form of the squared-gap integral
    between the expected cdf of eta and its empirical cdf.  With
    ``drop_constant`` the trailing -0.5*sqrt(2/pi) term is omitted; the
    fitting paths use that variant, so their RS term is shifted but has
    the same minimizers.
    """
    etas = _rs_etas(s)
    n = etas.size
    ranks = np.arange(1, n + 1, dtype=float)
    terms = (
        etas / n * (_erf(etas) + 1.0)
        - etas * (2.0 * ranks - 1.0) / n**2
        + np.exp(-etas * etas) / (_SQRT_PI * n)
    )
    total = math.fsum(terms.tolist())
    if not drop_constant:
        total -= _RS_CONSTANT
    return total


def rs_terms_sum(etas_sorted: np.ndarray) -> float:
    """Sum of the per-rank RS terms, constant omitted (fast fitting path)."""
    n = etas_sorted.size
    ranks = np.arange(1, n + 1, dtype=float)
    with np.errstate(over="ignore"):
        gauss = np.exp(-etas_sorted * etas_sorted)
    return float(
        np.sum(
            etas_sorted / n * (_erf(etas_sorted) + 1.0)
            - etas_sorted * (2.0 * ranks - 1.0) / n**2
            + gauss / (_SQRT_PI * n)
        )
    )


def rs_dsigma(i: int, eta_i: float, sigma_i: float, n: int) -> float:
    """Derivative of the rank-i RS term with respect to its sigma.

    ``i`` is the 1-based rank of ``eta_i`` in the sorted set; the rank
    is treated as fixed while sigma varies.
    """
    if sigma_i <= 0.0:
        raise ValueError("sigma_i must be strictly positive")
    if not 1 <= i <= n:
        raise ValueError(f"rank i={i} outside 1..{n}")
    return eta_i / (n * sigma_i) * ((2.0 * i - 1.0) / n - _erf(eta_i) - 1.0)


def rs_dsigma_values(ranks, etas, sigmas, n):
    """Vectorized `rs_dsigma` over per-point ranks (fast fitting path)."""
    ranks = np.asarray(ranks, dtype=float)
    etas = np.asarray(etas, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    with np.errstate(over="ignore"):
        return etas / (n * sigmas) * ((2.0 * ranks - 1.0) / n - _erf(etas) - 1.0)


def rs_optimal_etas(n: int) -> np.ndarray:
    """The relative errors minimizing RS: erfinv((2i-1)/n - 1), ascending.

    These place the empirical cdf values uniformly in [0, 1].
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(1, n + 1, dtype=float)
    return _erfinv((2.0 * i - 1.0) / n - 1.0)


def rs_quadrature_oracle(s) -> float:
    """RS by direct numerical integration of the squared cdf gap.

    Test oracle only.  Integrates over [min(eta)-10, max(eta)+10],
    piecewise between the step discontinuities of the empirical cdf so
    each segment is smooth.
    """
    etas = _rs_etas(s)
    n = etas.size
    breaks = np.concatenate(([etas[0] - 10.0], etas, [etas[-1] + 10.0]))
    total = 0.0
    total_err = 0.0
    for k in range(n + 1):
        a, b = breaks[k], breaks[k + 1]
        if b <= a:
            continue
        c = k / n  # empirical cdf value on this segment

        def integrand(x, c=c):
            return (0.5 * (_erf(x) + 1.0) - c) ** 2

        val, err = integrate.quad(integrand, a, b, limit=200, epsabs=1e-12, epsrel=1e-12)
        total += val
        total_err += err
    if total_err > 1e-9:
        raise RuntimeError(f"RS quadrature did not converge (err={total_err:g})")
    return float(total)


def rs_min(n: int, drop_constant: bool = False) -> float:
    """Minimum attainable reliability score for a sample of size n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    etas = rs_optimal_etas(n)
    total = math.fsum(np.exp(-etas * etas).tolist()) / (_SQRT_PI * n)
    if not drop_constant:
        total -= _RS_CONSTANT
    return total
