"""Synthetic benchmarks: data generators, NLPD metric and the run protocol.

Four built-in heteroskedastic datasets (G, Y, W and a five-dimensional
one) sample targets from N(f(x), sigma(x)^2) on a uniform input grid.
``run_experiment`` repeats the full pipeline (sample train set, fit the
mean, fit a variance estimator, score a fresh test set) over seeded
independent runs and aggregates NLPD quartiles and sigma-recovery
bands.  Per-run seeds are derived from the master seed and the run
index only, so different estimators see identical data and their runs
are paired.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import meanfn, varmodel
from .optim import OptimOptions

__all__ = [
    "DatasetSpec",
    "ExperimentReport",
    "RecoverySummary",
    "DensityMap",
    "make_dataset",
    "generate",
    "nlpd",
    "nlpd_from_arrays",
    "run_experiment",
    "run_matrix",
    "sigma_recovery",
    "density_plot_5d",
    "ESTIMATORS",
    "DATASET_NAMES",
]

ESTIMATORS = ("gp", "ar-nn", "ar-poly")
DATASET_NAMES = ("G", "Y", "W", "5D")
RECOVERY_GRID_SIZE = 200


@dataclass
class DatasetSpec:
    name: str
    n_train: int
    lo: np.ndarray
    hi: np.ndarray
    mean_fn: Callable
    sigma_fn: Callable
    seed: int = 0
    exact_mean: bool = False  # bypass the GP and use mean_fn directly

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise ValueError("invalid domain bounds")

    @property
    def dim(self) -> int:
        return self.lo.size


def _g_mean(x):
    return 2.0 * np.sin(2.0 * np.pi * x)


def _g_sigma(x):
    return 0.5 * x + 0.5


def _y_mean(x):
    return 2.0 * (np.exp(-30.0 * (x - 0.25) ** 2) + np.sin(np.pi * x**2)) - 2.0


def _y_sigma(x):
    return np.exp(np.sin(2.0 * np.pi * x)) / 3.0


def _w_mean(x):
    return np.sin(2.5 * x) * np.sin(1.5 * x)


def _w_sigma(x):
    return 0.01 + 0.25 * (1.0 - np.sin(2.5 * x)) ** 2


def _fived_mean(x):
    return np.zeros(np.asarray(x).shape[0])


def _fived_sigma(x):
    return 0.45 * (np.cos(np.pi + 5.0 * np.sum(x, axis=-1)) + 1.2)


_BUILTINS = {
    "G": dict(lo=0.0, hi=1.0, mean_fn=_g_mean, sigma_fn=_g_sigma, n_train=100),
    "Y": dict(lo=0.0, hi=1.0, mean_fn=_y_mean, sigma_fn=_y_sigma, n_train=100),
    "W": dict(lo=0.0, hi=math.pi, mean_fn=_w_mean, sigma_fn=_w_sigma, n_train=100),
    "5D": dict(lo=[0.0] * 5, hi=[1.0] * 5, mean_fn=_fived_mean, sigma_fn=_fived_sigma,
               n_train=10_000, exact_mean=True),
}


def make_dataset(name: str, n_train: int | None = None, seed: int = 0) -> DatasetSpec:
    """Built-in dataset spec by name (G, Y, W or 5D)."""
    key = "5D" if name.lower() in ("5d", "fived") else name.upper()
    if key not in _BUILTINS:
        raise ValueError(f"unknown dataset {name!r}; choose from {DATASET_NAMES}")
    cfg = dict(_BUILTINS[key])
    if n_train is not None:
        cfg["n_train"] = n_train
    return DatasetSpec(name=key, seed=seed, **cfg)


def _eval_mean(spec: DatasetSpec, x):
    return spec.mean_fn(x[:, 0]) if spec.dim == 1 else spec.mean_fn(x)


def _eval_sigma(spec: DatasetSpec, x):
    return spec.sigma_fn(x[:, 0]) if spec.dim == 1 else spec.sigma_fn(x)


def generate(spec: DatasetSpec, n: int | None = None, rng=None):
    """Sample (inputs, targets, true_mean, true_sigma) from the spec.

    Inputs are uniform on the domain; targets are f(x) plus Gaussian
    noise of standard deviation sigma(x).  Fixed seed, identical output.
    """
    n = spec.n_train if n is None else n
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    x = rng.uniform(spec.lo, spec.hi, size=(n, spec.dim))
    f = _eval_mean(spec, x)
    s = _eval_sigma(spec, x)
    y = f + s * rng.standard_normal(n)
    return x, y, f, s


def nlpd(triples) -> float:
    """Mean negative log predictive density of Gaussian forecasts."""
    mu = np.array([t.mu for t in triples], dtype=float)
    sigma = np.array([t.sigma for t in triples], dtype=float)
    y = np.array([t.y_obs for t in triples], dtype=float)
    return nlpd_from_arrays(mu, sigma, y)


def nlpd_from_arrays(mu, sigma, y_obs) -> float:
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    y = np.asarray(y_obs, dtype=float)
    if mu.size < 1:
        raise ValueError("need at least one forecast")
    if np.any(sigma <= 0.0):
        raise ValueError("all sigmas must be strictly positive")
    eps = y - mu
    return float(np.mean(0.5 * np.log(2.0 * math.pi * sigma**2) + eps**2 / (2.0 * sigma**2)))


@dataclass
class ExperimentReport:
    dataset: str
    estimator: str
    n_runs: int
    n_test: int
    master_seed: int
    nlpds: np.ndarray
    run_seeds: list
    models: list
    recovery_grid: np.ndarray | None = None       # (grid,) or (grid, dim)
    recovery_sigmas: np.ndarray | None = None     # (n_runs, grid)
    recovery_truth: np.ndarray | None = None
    wall_times: np.ndarray | None = None

    @property
    def quartiles(self):
        """(1st quartile, median, 3rd quartile) by linear interpolation."""
        q = np.percentile(self.nlpds, [25, 50, 75], method="linear")
        return tuple(float(v) for v in q)


def _estimator_seed_tag(estimator: str) -> int:
    return {"gp": 1, "ar-nn": 2, "ar-poly": 3}[estimator]


def _fit_estimator(estimator, x_tr, eps, gp_model, fit_seed, poly_tol, mlp_opts):
    if estimator == "gp":
        return gp_model  # homoskedastic baseline reuses the mean model
    if estimator == "ar-nn":
        return varmodel.fit_mlp((x_tr, eps), opts=mlp_opts, rng_seed=fit_seed)
    if estimator == "ar-poly":
        return varmodel.fit_polynomial((x_tr, eps), tol=poly_tol)
    raise ValueError(f"unknown estimator {estimator!r}")


def _predict_est_sigma(estimator, model, x):
    if estimator == "gp":
        # constant learned noise level; the GP predictive variance is out of scope
        return np.full(x.shape[0], math.sqrt(max(model.noise_var, 1e-12)))
    return np.asarray(varmodel.predict_sigma(model, x), dtype=float)


def validate_combination(dataset: str, estimator: str, dim: int):
    if estimator == "ar-poly" and dim != 1:
        raise ValueError("ar-poly supports 1-D datasets only")
    if estimator == "gp" and dataset == "5D":
        raise ValueError("the homoskedastic GP baseline is not run on the 5D dataset")


def run_experiment(spec: DatasetSpec, estimator: str, n_runs: int, n_test: int = 900,
                   poly_tol: float = 3e-4, mlp_opts: OptimOptions | None = None) -> ExperimentReport:
    """Repeat sample/fit/score runs for one (dataset, estimator) pair."""
    validate_combination(spec.name, estimator, spec.dim)
    reports = run_matrix(spec, [estimator], n_runs, n_test, poly_tol, mlp_opts)
    return reports[estimator]


def run_matrix(spec: DatasetSpec, estimators, n_runs, n_test=900,
                poly_tol=3e-4, mlp_opts=None, timer=None):
    """Shared driver: one data sample + mean fit per run, reused by every estimator."""
    for est in estimators:
        validate_combination(spec.name, est, spec.dim)

    grid = None
    truth = None
    if spec.dim == 1:
        grid = np.linspace(spec.lo[0], spec.hi[0], RECOVERY_GRID_SIZE)
        truth = spec.sigma_fn(grid)

    out = {
        est: ExperimentReport(
            dataset=spec.name, estimator=est, n_runs=n_runs, n_test=n_test,
            master_seed=spec.seed, nlpds=np.empty(n_runs), run_seeds=[], models=[],
            recovery_grid=grid, recovery_truth=truth,
            recovery_sigmas=np.empty((n_runs, RECOVERY_GRID_SIZE)) if grid is not None else None,
            wall_times=np.empty(n_runs),
        )
        for est in estimators
    }

    ds_tag = sum(ord(c) for c in spec.name)  # process-independent dataset tag
    for run in range(n_runs):
        data_ss = np.random.SeedSequence([int(spec.seed), ds_tag, run, 0])
        rng = np.random.default_rng(data_ss)
        x_tr, y_tr, _, _ = generate(spec, spec.n_train, rng)
        x_te = rng.uniform(spec.lo, spec.hi, size=(n_test, spec.dim))
        f_te = _eval_mean(spec, x_te)
        s_te = _eval_sigma(spec, x_te)
        y_te = f_te + s_te * rng.standard_normal(n_test)

        if spec.exact_mean:
            gp_model = None
            mu_tr = _eval_mean(spec, x_tr)
            mu_te = f_te
        else:
            gp_seed = int(np.random.default_rng(np.random.SeedSequence([int(spec.seed), ds_tag, run, 1])).integers(2**31))
            gp_model = meanfn.gp_fit(x_tr, y_tr, seed=gp_seed)
            mu_tr = gp_model.predict_mean(x_tr)
            mu_te = gp_model.predict_mean(x_te)
        eps = y_tr - mu_tr

        for est in estimators:
            rep = out[est]
            fit_seed = int(
                np.random.default_rng(
                    np.random.SeedSequence([int(spec.seed), ds_tag, run, 2, _estimator_seed_tag(est)])
                ).integers(2**31)
            )
            t0 = timer() if timer else 0.0
            model = _fit_estimator(est, x_tr, eps, gp_model, fit_seed, poly_tol, mlp_opts)
            rep.wall_times[run] = (timer() - t0) if timer else 0.0
            rep.models.append(model)
            rep.run_seeds.append(fit_seed)
            sig_te = _predict_est_sigma(est, model, x_te)
            rep.nlpds[run] = nlpd_from_arrays(mu_te, sig_te, y_te)
            if grid is not None:
                rep.recovery_sigmas[run] = _predict_est_sigma(est, model, grid[:, None])
    return out


@dataclass
class RecoverySummary:
    grid: np.ndarray
    truth: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    mad: float            # mean |run-averaged sigma - truth| over the grid
    coverage2: float      # fraction of grid where truth is inside mean +- 2 std


def sigma_recovery(report: ExperimentReport, truth_fn=None) -> RecoverySummary:
    """Compare the run-averaged recovered sigma(x) against the generative truth."""
    if report.recovery_sigmas is None:
        raise ValueError("sigma recovery is defined for 1-D datasets only")
    grid = report.recovery_grid
    truth = truth_fn(grid) if truth_fn is not None else report.recovery_truth
    mean = report.recovery_sigmas.mean(axis=0)
    std = report.recovery_sigmas.std(axis=0)
    mad = float(np.mean(np.abs(mean - truth)))
    inside = np.abs(truth - mean) <= 2.0 * std
    return RecoverySummary(grid=grid, truth=np.asarray(truth, dtype=float), mean=mean,
                           std=std, mad=mad, coverage2=float(np.mean(inside)))


@dataclass
class DensityMap:
    hist: np.ndarray          # column-normalized, [pred bin, true bin]
    pred_edges: np.ndarray
    true_edges: np.ndarray
    pearson_r: float


def density_plot_5d(model, n_samples: int = 100_000, seed: int = 0, bins: int = 50,
                    spec: DatasetSpec | None = None) -> DensityMap:
    """Predicted-vs-true sigma density over uniform samples of the 5D domain.

    Each predicted-sigma column of the histogram is normalized to a
    maximum of one, as in the reference density map.
    """
    spec = spec or make_dataset("5D")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5D]))
    x = rng.uniform(spec.lo, spec.hi, size=(n_samples, spec.dim))
    true = _eval_sigma(spec, x)
    if callable(model):
        pred = np.asarray(model(x), dtype=float)
    else:
        pred = np.asarray(varmodel.predict_sigma(model, x), dtype=float)

    lo = min(pred.min(), true.min())
    hi = max(pred.max(), true.max())
    edges = np.linspace(lo, hi, bins + 1)
    hist, pred_edges, true_edges = np.histogram2d(pred, true, bins=[edges, edges])
    col_max = hist.max(axis=1, keepdims=True)
    normalized = np.divide(hist, col_max, out=np.zeros_like(hist), where=col_max > 0)
    r = float(np.corrcoef(pred, true)[0, 1])
    return DensityMap(hist=normalized, pred_edges=pred_edges, true_edges=true_edges, pearson_r=r)
