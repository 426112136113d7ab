"""Homoskedastic Gaussian-process regression for the benchmark mean function.

Squared-exponential kernel with a single isotropic length scale; the
hyperparameters (signal scale, length scale and, optionally, the noise
variance) are found by minimizing the marginal negative log likelihood
with the shared quasi-Newton engine, multi-restarted.  Only the
predictive mean is consumed downstream.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, cholesky

from . import optim
from .optim import OptimOptions

__all__ = ["GpModel", "se_kernel", "gp_fit", "gp_predict_mean", "gp_nll", "save_gp", "load_gp"]

MAX_JITTER = 1e-6


def se_kernel(xi, xj, sigma_f, ell) -> float:
    """Squared-exponential covariance sigma_f^2 exp(-||xi-xj||^2 / (2 l^2))."""
    if ell <= 0.0:
        raise ValueError("length scale must be strictly positive")
    d2 = float(np.sum((np.atleast_1d(xi) - np.atleast_1d(xj)) ** 2))
    return sigma_f**2 * math.exp(-d2 / (2.0 * ell**2))


def _sq_dists(x) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _chol_with_jitter(k):
    jitter = 0.0
    while True:
        try:
            L = cholesky(k + jitter * np.eye(k.shape[0]), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            pass
        jitter = 1e-12 if jitter == 0.0 else jitter * 10.0
        if jitter > MAX_JITTER:
            raise np.linalg.LinAlgError(
                f"kernel matrix not positive definite even with jitter {MAX_JITTER:g}"
            )


@dataclass
class GpModel:
    sigma_f: float
    ell: float
    noise_var: float
    x_train: np.ndarray
    y_train: np.ndarray
    trace: object = None
    _chol: np.ndarray = field(default=None, repr=False)
    _alpha: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x_train, dtype=float)
        self.x_train = x[:, None] if x.ndim == 1 else x
        self.y_train = np.asarray(self.y_train, dtype=float).ravel()
        if self._chol is None:
            d2 = _sq_dists(self.x_train)
            k = self.sigma_f**2 * np.exp(-d2 / (2.0 * self.ell**2))
            k[np.diag_indices_from(k)] += self.noise_var
            self._chol, _ = _chol_with_jitter(k)
            self._alpha = cho_solve((self._chol, True), self.y_train)

    def predict_mean(self, x):
        x = np.asarray(x, dtype=float)
        d = self.x_train.shape[1]
        scalar = x.ndim == 0 or (x.ndim == 1 and d > 1)
        if x.ndim == 0:
            x = x.reshape(1, 1)
        elif x.ndim == 1:
            x = x[:, None] if d == 1 else x[None, :]
        if x.shape[1] != d:
            raise ValueError("prediction inputs have the wrong dimension")
        d2 = (
            np.sum(x * x, axis=1)[:, None]
            + np.sum(self.x_train * self.x_train, axis=1)[None, :]
            - 2.0 * x @ self.x_train.T
        )
        k_star = self.sigma_f**2 * np.exp(-np.maximum(d2, 0.0) / (2.0 * self.ell**2))
        out = k_star @ self._alpha
        return float(out[0]) if scalar else out


def gp_nll(log_params, x, y, d2, fixed_noise=None):
    """Marginal negative log likelihood and its gradient in log-hyperparameters."""
    log_params = np.asarray(log_params, dtype=float)
    bad = np.zeros(log_params.size)
    if np.any(np.abs(log_params) > 40.0):
        return np.inf, bad
    if fixed_noise is None:
        log_sf, log_ell, log_nv = log_params
        nv = math.exp(log_nv)
    else:
        log_sf, log_ell = log_params
        nv = fixed_noise
    sf2 = math.exp(2.0 * log_sf)
    ell2 = math.exp(2.0 * log_ell)
    n = y.size

    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        kf = sf2 * np.exp(-d2 / (2.0 * ell2))
    kf = np.nan_to_num(kf, nan=np.inf)  # 0/0 on the diagonal means ell underflowed
    k = kf + nv * np.eye(n)
    if not np.all(np.isfinite(k)):
        return np.inf, bad
    try:
        L, _ = _chol_with_jitter(k)
    except (np.linalg.LinAlgError, ValueError):
        return np.inf, bad
    alpha = cho_solve((L, True), y)
    nll = 0.5 * float(y @ alpha) + float(np.sum(np.log(np.diag(L)))) + 0.5 * n * math.log(2.0 * math.pi)

    k_inv = cho_solve((L, True), np.eye(n))
    g_mat = k_inv - np.outer(alpha, alpha)
    g_sf = float(np.sum(g_mat * kf))  # 0.5 tr(G * 2 Kf)
    g_ell = 0.5 * float(np.sum(g_mat * (kf * d2 / ell2)))
    grads = [g_sf, g_ell]
    if fixed_noise is None:
        grads.append(0.5 * nv * float(np.trace(g_mat)))
    return nll, np.array(grads)


def gp_fit(inputs, targets, noise_var=None, n_restarts: int = 3, seed: int = 0,
           opts: OptimOptions | None = None) -> GpModel:
    """Fit SE-kernel hyperparameters by marginal likelihood.

    When ``noise_var`` is given it is held fixed; otherwise it is
    learned together with the signal and length scales.  Three seeded
    restarts guard against bad local optima.
    """
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(targets, dtype=float).ravel()
    if y.size < 2:
        raise ValueError("need at least 2 training points")
    opts = opts or OptimOptions(max_iter=200)
    d2 = _sq_dists(x)

    y_scale = max(float(np.std(y)), 1e-3)
    span = max(float(np.sqrt(d2.max())), 1e-3)
    root = np.random.SeedSequence([int(seed), 0x6770])

    def one_restart(child):
        rng = np.random.default_rng(child)
        log0 = [
            math.log(y_scale) + 0.5 * rng.standard_normal(),
            math.log(span * 0.2) + 0.5 * rng.standard_normal(),
        ]
        if noise_var is None:
            log0.append(math.log(0.1 * y_scale**2) + 0.5 * rng.standard_normal())
        result = optim.minimize(
            lambda p: gp_nll(p, x, y, d2, fixed_noise=noise_var), np.array(log0), opts
        )
        return result, result.fval

    best = optim.multi_restart(one_restart, n_restarts, root.spawn(n_restarts))
    p = best.x
    sf, ell = math.exp(p[0]), math.exp(p[1])
    nv = noise_var if noise_var is not None else math.exp(p[2])
    return GpModel(sigma_f=sf, ell=ell, noise_var=nv, x_train=x, y_train=y, trace=best.trace)


def gp_predict_mean(model: GpModel, x):
    """Predictive mean k(x, X)^T (K + noise I)^{-1} y via the cached factorization."""
    return model.predict_mean(x)


def save_gp(model: GpModel, path):
    doc = {
        "format": "arsigma-model",
        "version": 1,
        "family": "gp",
        "sigma_f": model.sigma_f,
        "ell": model.ell,
        "noise_var": model.noise_var,
        "x_train": model.x_train.tolist(),
        "y_train": model.y_train.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_gp(path) -> GpModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("family") != "gp":
        raise ValueError("not a GP model document")
    return GpModel(
        sigma_f=float(doc["sigma_f"]),
        ell=float(doc["ell"]),
        noise_var=float(doc["noise_var"]),
        x_train=np.array(doc["x_train"]),
        y_train=np.array(doc["y_train"]),
    )
