"""Parameterizations of the input-dependent standard deviation sigma(x).

Three model families share one contract: predict strictly positive
sigma, and expose the gradient of the accuracy-reliability cost with
respect to their parameters.

* PerPointModel - one free sigma per training point (log-space).
* PolynomialModel - sigma(x) as a 1-D polynomial, fitted by escalating
  the order until the cost stops improving.
* MlpModel - a small fixed-architecture network [d -> 20 -> 5 -> 1]
  with tanh, symmetric-saturating-linear and squared-exponential
  activations, so the raw output lies in (0, 1].
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import arcost, optim
from .arcost import ArWeights, ErrorSample, ar_cost, ar_grad, compute_beta
from .optim import OptimOptions

__all__ = [
    "PerPointModel",
    "PolynomialModel",
    "MlpModel",
    "FitError",
    "predict_sigma",
    "fit_per_point",
    "fit_polynomial",
    "fit_mlp",
    "param_grad",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]

MAX_POLY_ORDER = 10
SIGMA_FLOOR = 1e-3
MLP_HIDDEN = (20, 5)

MODEL_FORMAT = "arsigma-model"
MODEL_VERSION = 1


class FitError(RuntimeError):
    """Raised when a fit cannot reach its optimality contract."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


def unpack_samples(data):
    """Accept a sequence of ErrorSample or an (x, eps) pair of arrays."""
    if isinstance(data, tuple) and len(data) == 2:
        x, eps = data
    else:
        samples = list(data)
        if not samples or not isinstance(samples[0], ErrorSample):
            raise TypeError("data must be (x, eps) arrays or a sequence of ErrorSample")
        x = np.stack([s.x for s in samples])
        eps = np.array([s.eps for s in samples], dtype=float)
    x = np.asarray(x, dtype=float)
    eps = np.asarray(eps, dtype=float).ravel()
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != eps.size:
        raise ValueError("x and eps must have the same number of rows")
    return x, eps


def _init_sigma_scale(eps) -> float:
    """Standard deviation of the errors, with fallbacks for degenerate sets."""
    s = float(np.std(eps))
    if s > 0.0:
        return s
    m = float(np.mean(np.abs(eps)))
    return m if m > 0.0 else SIGMA_FLOOR


# --- polynomial positivity guard -------------------------------------------
#
# Identity above 2*floor, smooth exponential decay onto the floor below:
# g(v) = floor + floor * exp(v/floor - 2), so g(2*floor) = 2*floor and
# g'(2*floor) = 1 (C^1 junction), with g > floor everywhere.


def _guard(v):
    v = np.asarray(v, dtype=float)
    low = v < 2.0 * SIGMA_FLOOR
    out = np.where(low, SIGMA_FLOOR * (1.0 + np.exp(np.minimum(v / SIGMA_FLOOR, 2.0) - 2.0)), v)
    return out


def _guard_deriv(v):
    v = np.asarray(v, dtype=float)
    low = v < 2.0 * SIGMA_FLOOR
    return np.where(low, np.exp(np.minimum(v / SIGMA_FLOOR, 2.0) - 2.0), 1.0)


@dataclass
class PerPointModel:
    """Free sigma value for each training point, stored in log space."""

    log_sigmas: np.ndarray

    def __post_init__(self):
        self.log_sigmas = np.asarray(self.log_sigmas, dtype=float).ravel()
        if not np.all(np.isfinite(self.log_sigmas)):
            raise ValueError("log_sigmas must be finite")

    @property
    def sigmas(self) -> np.ndarray:
        return np.exp(self.log_sigmas)


@dataclass
class PolynomialModel:
    """sigma(x) = guard(sum_l theta_l x^l), 1-D inputs, order <= 10."""

    thetas: np.ndarray

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float).ravel()
        if self.thetas.size - 1 > MAX_POLY_ORDER:
            raise ValueError(f"polynomial order limited to {MAX_POLY_ORDER}")

    @property
    def order(self) -> int:
        return self.thetas.size - 1

    def raw(self, x):
        x = np.asarray(x, dtype=float).ravel()
        return np.vander(x, self.thetas.size, increasing=True) @ self.thetas


@dataclass
class MlpModel:
    """Fixed two-hidden-layer network mapping inputs to sigma in (0, scale]."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    output_scale: float = 1.0

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float).ravel()
        self.w2 = np.asarray(self.w2, dtype=float)
        self.b2 = np.asarray(self.b2, dtype=float).ravel()
        self.w3 = np.asarray(self.w3, dtype=float)
        self.b3 = np.asarray(self.b3, dtype=float).ravel()
        h1, h2 = MLP_HIDDEN
        if self.w1.shape[1] != h1 or self.w2.shape != (h1, h2) or self.w3.shape != (h2, 1):
            raise ValueError(f"hidden layer sizes must be {MLP_HIDDEN}")
        if self.output_scale <= 0.0:
            raise ValueError("output_scale must be positive")

    @property
    def n_inputs(self) -> int:
        return self.w1.shape[0]

    @classmethod
    def initialize(cls, n_inputs, rng, output_scale=1.0) -> "MlpModel":
        """Uniform [-r, r] weight init with r = sqrt(6/(fan_in+fan_out)); zero biases."""
        h1, h2 = MLP_HIDDEN
        sizes = [(n_inputs, h1), (h1, h2), (h2, 1)]
        ws = []
        for fan_in, fan_out in sizes:
            r = math.sqrt(6.0 / (fan_in + fan_out))
            ws.append(rng.uniform(-r, r, size=(fan_in, fan_out)))
        return cls(ws[0], np.zeros(h1), ws[1], np.zeros(h2), ws[2], np.zeros(1), output_scale)

    def forward(self, x):
        """Returns (sigma, cache) for a batch of inputs (n, d)."""
        z1 = x @ self.w1 + self.b1
        a1 = np.tanh(z1)
        z2 = a1 @ self.w2 + self.b2
        a2 = np.clip(z2, -1.0, 1.0)  # symmetric saturating linear
        z3 = (a2 @ self.w3 + self.b3).ravel()
        # cap the exponent so sigma stays a strictly positive float
        # (exp(-345) ~ 1e-150); capped points are saturated: zero slope
        zsq = np.minimum(z3 * z3, 345.0)
        sigma = self.output_scale * np.exp(-zsq)
        return sigma, (x, a1, z2, a2, np.where(zsq < 345.0, z3, 0.0), sigma)

    def param_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)])

    def with_params(self, vec) -> "MlpModel":
        shapes = [self.w1.shape, self.b1.shape, self.w2.shape, self.b2.shape, self.w3.shape, self.b3.shape]
        parts = []
        pos = 0
        for shp in shapes:
            size = int(np.prod(shp))
            parts.append(np.asarray(vec[pos : pos + size]).reshape(shp))
            pos += size
        return MlpModel(*parts, output_scale=self.output_scale)

    def backprop(self, cache, dcost_dsigma) -> np.ndarray:
        """Gradient of a cost wrt the parameter vector, given d cost / d sigma."""
        x, a1, z2, a2, z3, sigma = cache
        delta3 = (dcost_dsigma * sigma * (-2.0 * z3))[:, None]
        gw3 = a2.T @ delta3
        gb3 = delta3.sum(axis=0)
        delta2 = (delta3 @ self.w3.T) * (np.abs(z2) < 1.0)
        gw2 = a1.T @ delta2
        gb2 = delta2.sum(axis=0)
        delta1 = (delta2 @ self.w2.T) * (1.0 - a1 * a1)
        gw1 = x.T @ delta1
        gb1 = delta1.sum(axis=0)
        return np.concatenate([g.ravel() for g in (gw1, gb1, gw2, gb2, gw3, gb3)])


def predict_sigma(model, x=None):
    """Strictly positive sigma prediction for any of the model families.

    For a PerPointModel, x selects a training index (None returns the
    full vector); the other families evaluate at new inputs, scalar or
    batched.
    """
    if isinstance(model, PerPointModel):
        if x is None:
            return model.sigmas
        return float(np.exp(model.log_sigmas[int(x)]))
    if isinstance(model, PolynomialModel):
        scalar = np.isscalar(x) or np.asarray(x).ndim == 0
        out = _guard(model.raw(np.atleast_1d(x)))
        return float(out[0]) if scalar else out
    if isinstance(model, MlpModel):
        arr = np.asarray(x, dtype=float)
        scalar = arr.ndim == 0 or (arr.ndim == 1 and model.n_inputs > 1)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            # a 1-D array is a batch of scalars for a 1-input model,
            # otherwise a single multi-dimensional point
            arr = arr[:, None] if model.n_inputs == 1 else arr[None, :]
        if arr.shape[1] != model.n_inputs:
            raise ValueError(f"expected {model.n_inputs}-dimensional inputs, got {arr.shape[1]}")
        sigma, _ = model.forward(arr)
        return float(sigma[0]) if scalar else sigma
    raise TypeError(f"unknown model type {type(model).__name__}")


def param_grad(model, data, weights: ArWeights) -> np.ndarray:
    """Gradient of the AR cost with respect to the model parameters."""
    x, eps = unpack_samples(data)
    if isinstance(model, PerPointModel):
        sig = model.sigmas
        return ar_grad(sig, eps, weights) * sig
    if isinstance(model, PolynomialModel):
        raw = model.raw(x.ravel())
        sig = _guard(raw)
        g = ar_grad(sig, eps, weights) * _guard_deriv(raw)
        return np.vander(x.ravel(), model.thetas.size, increasing=True).T @ g
    if isinstance(model, MlpModel):
        sig, cache = model.forward(x)
        return model.backprop(cache, ar_grad(sig, eps, weights))
    raise TypeError(f"unknown model type {type(model).__name__}")


def fit_per_point(data, opts: OptimOptions | None = None, drop_constant: bool = True) -> PerPointModel:
    """Minimize the AR cost over one free sigma per training point."""
    _, eps = unpack_samples(data)
    opts = opts or OptimOptions()
    weights = compute_beta(eps, drop_constant)
    z0 = np.full(eps.size, math.log(_init_sigma_scale(eps)))

    def objective(z):
        sig = np.exp(z)
        return (
            ar_cost(sig, eps, weights, drop_constant),
            ar_grad(sig, eps, weights, drop_constant) * sig,
        )

    result = _robust_minimize(objective, z0, opts)
    if not np.all(np.isfinite(result.x)):
        raise FitError("per-point fit diverged", result.trace)
    gnorm = float(np.linalg.norm(result.grad, np.inf))
    if result.trace.termination == "line_search_failed" and gnorm > 1e3 * opts.gtol:
        raise FitError(
            f"per-point fit stalled with gradient norm {gnorm:.3g}", result.trace
        )
    return PerPointModel(result.x)


def _robust_minimize(objective, x0, opts, validation=None):
    """minimize() with fresh-Hessian restarts after line-search stalls."""
    result = optim.minimize(objective, x0, opts, validation)
    attempts = 0
    while (
        result.trace.termination == "line_search_failed"
        and float(np.linalg.norm(result.grad, np.inf)) > opts.gtol
        and attempts < 2
    ):
        attempts += 1
        result = optim.minimize(objective, result.x, opts, validation)
    if result.trace.termination == "non_finite":
        raise FitError("objective became non-finite during optimization", result.trace)
    return result


def fit_polynomial(data, tol: float = 3e-4, opts: OptimOptions | None = None,
                   drop_constant: bool = True) -> PolynomialModel:
    """Polynomial fit with order escalation.

    Starting from the constant std(eps), each round appends a zero
    coefficient, warm-starts from the previous optimum and minimizes the
    AR cost.  Escalation stops when the cost change between successive
    orders drops to ``tol``, when order 10 is reached, or when the next
    order's optimization terminates immediately at the warm start.
    """
    x, eps = unpack_samples(data)
    if x.shape[1] != 1:
        raise ValueError("polynomial variance models support 1-D inputs only")
    opts = opts or OptimOptions()
    weights = compute_beta(eps, drop_constant)
    xs = x.ravel()

    theta = np.array([_init_sigma_scale(eps)])

    def objective_for(theta_size):
        vander = np.vander(xs, theta_size, increasing=True)

        def objective(th):
            raw = vander @ th
            sig = _guard(raw)
            cost = ar_cost(sig, eps, weights, drop_constant)
            g = ar_grad(sig, eps, weights, drop_constant) * _guard_deriv(raw)
            return cost, vander.T @ g

        return objective

    ar_old = objective_for(theta.size)(theta)[0]
    p = 0
    while True:
        p += 1
        theta0 = np.append(theta, 0.0)
        result = _robust_minimize(objective_for(theta0.size), theta0, opts)
        if result.trace.n_iter == 0:
            # the previous solution is already a local minimum at this order
            break
        theta = result.x
        err = abs(ar_old - result.fval)
        ar_old = result.fval
        if err <= tol or p >= MAX_POLY_ORDER:
            break
    return PolynomialModel(theta)


def fit_mlp(data, opts: OptimOptions | None = None, rng_seed: int = 0,
            n_restarts: int = 5, output_scale: float = 1.0,
            drop_constant: bool = True) -> MlpModel:
    """Train the variance network on (x, eps) samples.

    The sample is split 70/30 into training and validation once per
    call.  The training objective is the AR cost plus an L2 weight
    penalty pinned at each evaluation to 25% of the AR term, i.e. 20%
    of the total.  Training stops when the validation AR has not
    improved for ``opts.patience`` accepted iterations; the whole
    procedure is repeated for ``n_restarts`` weight initializations and
    the lowest-cost network wins.
    """
    x, eps = unpack_samples(data)
    n = eps.size
    if n < 10:
        raise ValueError("need at least 10 samples for a 70/30 split")
    opts = opts or OptimOptions()

    root = np.random.SeedSequence([int(rng_seed), 0x6D6C70])
    split_rng = np.random.default_rng(root.spawn(1)[0])
    perm = split_rng.permutation(n)
    n_train = int(round(0.7 * n))
    tr, va = perm[:n_train], perm[n_train:]
    x_tr, eps_tr = x[tr], eps[tr]
    x_va, eps_va = x[va], eps[va]

    w_tr = compute_beta(eps_tr, drop_constant)
    w_va = compute_beta(eps_va, drop_constant)
    template = MlpModel.initialize(x.shape[1], np.random.default_rng(0), output_scale)

    def objective(vec):
        model = template.with_params(vec)
        sig, cache = model.forward(x_tr)
        ar = ar_cost(sig, eps_tr, w_tr, drop_constant)
        g = model.backprop(cache, ar_grad(sig, eps_tr, w_tr, drop_constant))
        # L2 share fixed at 20% of the total at every evaluation: the
        # penalty equals ar/4, so value and gradient are 1.25x the AR part
        return 1.25 * ar, 1.25 * g

    def validation(vec):
        model = template.with_params(vec)
        sig, _ = model.forward(x_va)
        return ar_cost(sig, eps_va, w_va, drop_constant)

    def one_restart(seed):
        init = MlpModel.initialize(x.shape[1], np.random.default_rng(seed), output_scale)
        result = _robust_minimize(objective, init.param_vector(), opts, validation)
        return template.with_params(result.x), result.fval

    seeds = [np.random.default_rng(s).integers(2**32) for s in root.spawn(n_restarts)]
    return optim.multi_restart(one_restart, n_restarts, seeds)


# --- serialization ----------------------------------------------------------


def model_to_dict(model) -> dict:
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION}
    if isinstance(model, PerPointModel):
        doc.update(family="per_point", log_sigmas=model.log_sigmas.tolist())
    elif isinstance(model, PolynomialModel):
        doc.update(family="polynomial", thetas=model.thetas.tolist(), sigma_floor=SIGMA_FLOOR)
    elif isinstance(model, MlpModel):
        doc.update(
            family="mlp",
            n_inputs=model.n_inputs,
            hidden=list(MLP_HIDDEN),
            output_scale=model.output_scale,
            layers={
                "w1": model.w1.tolist(), "b1": model.b1.tolist(),
                "w2": model.w2.tolist(), "b2": model.b2.tolist(),
                "w3": model.w3.tolist(), "b3": model.b3.tolist(),
            },
        )
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return doc


def model_from_dict(doc: dict):
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a variance-model document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    family = doc.get("family")
    if family == "per_point":
        return PerPointModel(np.array(doc["log_sigmas"]))
    if family == "polynomial":
        return PolynomialModel(np.array(doc["thetas"]))
    if family == "mlp":
        lay = doc["layers"]
        return MlpModel(
            np.array(lay["w1"]), np.array(lay["b1"]),
            np.array(lay["w2"]), np.array(lay["b2"]),
            np.array(lay["w3"]), np.array(lay["b3"]),
            output_scale=float(doc["output_scale"]),
        )
    raise ValueError(f"unknown model family {family!r}")


def save_model(model, path):
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n", encoding="utf-8")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
