"""The scalarized accuracy-reliability (AR) cost and its sigma-gradient.

AR = beta * mean CRPS + (1 - beta) * RS, evaluated on a fixed set of
signed errors eps_i with candidate standard deviations sigma_i.  The
weight beta rescales the two scores to comparable magnitude using their
known minima, and is computed once per error set and frozen during any
optimization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import scores

__all__ = ["ErrorSample", "ArWeights", "crps_min_total", "compute_beta", "ar_cost", "ar_grad"]

# mean-of-errors rescaling constant, sqrt(log 4) / 2
_CRPS_MIN_COEF = 0.5 * math.sqrt(math.log(4.0))


@dataclass(frozen=True)
class ErrorSample:
    """An input point together with its signed error eps = y_obs - mu."""

    x: np.ndarray
    eps: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if not np.all(np.isfinite(x)) or not math.isfinite(self.eps):
            raise ValueError("error sample fields must be finite")
        object.__setattr__(self, "x", x)


@dataclass(frozen=True)
class ArWeights:
    """Frozen scalarization weights for one error set."""

    beta: float
    crps_min_total: float
    rs_min_val: float


def crps_min_total(eps_list) -> float:
    """Minimum attainable mean CRPS: (sqrt(log 4) / 2N) * sum |eps_i|.

    NOTE: the sum is taken over absolute errors.  The score minimum must
    be non-negative and equals the rescaled mean error magnitude; a
    signed sum could cancel and leave the beta weighting undefined.
    """
    eps = np.asarray(eps_list, dtype=float)
    if eps.size < 1:
        raise ValueError("eps_list must be non-empty")
    return _CRPS_MIN_COEF * float(np.mean(np.abs(eps)))


def compute_beta(eps_list, drop_constant: bool = True) -> ArWeights:
    """Weights beta = RS_min / (CRPS_min + RS_min) for a fixed error set."""
    eps = np.asarray(eps_list, dtype=float)
    c_min = crps_min_total(eps)
    r_min = scores.rs_min(eps.size, drop_constant)
    denom = c_min + r_min
    if denom <= 0.0:
        # degenerate all-zero-error input with a vanishing RS minimum
        beta = 0.5
    else:
        beta = r_min / denom
    return ArWeights(beta=beta, crps_min_total=c_min, rs_min_val=r_min)


def _validate(sigmas, eps_list):
    sigmas = np.asarray(sigmas, dtype=float)
    eps = np.asarray(eps_list, dtype=float)
    if sigmas.shape != eps.shape or sigmas.ndim != 1 or sigmas.size < 1:
        raise ValueError("sigmas and eps_list must be 1-D vectors of equal length")
    if np.any(sigmas <= 0.0) or not np.all(np.isfinite(sigmas)):
        raise ValueError("all sigmas must be finite and strictly positive")
    return sigmas, eps


def ar_cost(sigmas, eps_list, weights: ArWeights, drop_constant: bool = True) -> float:
    """Scalarized cost beta * mean CRPS + (1 - beta) * RS."""
    sigmas, eps = _validate(sigmas, eps_list)
    crps_bar = float(np.mean(scores.crps_values(eps, sigmas)))
    etas = eps / (math.sqrt(2.0) * sigmas)
    rs = scores.rs_terms_sum(np.sort(etas, kind="stable"))
    if not drop_constant:
        rs -= 0.5 * math.sqrt(2.0 / math.pi)
    return weights.beta * crps_bar + (1.0 - weights.beta) * rs


def ar_grad(sigmas, eps_list, weights: ArWeights, drop_constant: bool = True) -> np.ndarray:
    """Gradient of `ar_cost` with respect to the sigma vector.

    The sort permutation of the relative errors is treated as locally
    constant; ranks are recomputed from the current sigmas on each call.
    At exact rank ties this is a subgradient.
    """
    sigmas, eps = _validate(sigmas, eps_list)
    n = sigmas.size
    etas = eps / (math.sqrt(2.0) * sigmas)
    order = np.argsort(etas, kind="stable")
    ranks = np.empty(n, dtype=float)
    ranks[order] = np.arange(1, n + 1, dtype=float)
    g_crps = scores.crps_dsigma_values(eps, sigmas) / n
    g_rs = scores.rs_dsigma_values(ranks, etas, sigmas, n)
    return weights.beta * g_crps + (1.0 - weights.beta) * g_rs
