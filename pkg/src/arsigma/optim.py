"""Quasi-Newton minimizer shared by all fitting paths.

Dense BFGS on the inverse Hessian with a cubic-interpolation line
search enforcing the strong Wolfe conditions.  Supports an optional
validation callable for patience-based early stopping of model fits.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["OptimOptions", "OptimTrace", "MinimizeResult", "minimize", "multi_restart"]


@dataclass
class OptimOptions:
    gtol: float = 1e-6
    max_iter: int = 500
    patience: int = 10
    ls_c1: float = 1e-4
    ls_c2: float = 0.9
    ls_max_trials: int = 25

    def __post_init__(self):
        if not 0.0 < self.ls_c1 < self.ls_c2 < 1.0:
            raise ValueError("Wolfe constants must satisfy 0 < c1 < c2 < 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class OptimTrace:
    """Per-accepted-iteration history plus the termination reason."""

    fvals: list = field(default_factory=list)
    gnorms: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    termination: str = "none"

    @property
    def n_iter(self) -> int:
        return len(self.steps)


@dataclass
class MinimizeResult:
    x: np.ndarray
    fval: float
    grad: np.ndarray
    trace: OptimTrace

    @property
    def converged(self) -> bool:
        return self.trace.termination in ("gtol", "early_stop")


class _CachedObjective:
    """Wraps a value-and-gradient callable, guarding against non-finite output."""

    def __init__(self, fg):
        self._fg = fg
        self.nfev = 0

    def __call__(self, x):
        self.nfev += 1
        f, g = self._fg(x)
        g = np.asarray(g, dtype=float)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            return np.inf, g
        return float(f), g


def _cubic_minimizer(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db)."""
    if not all(np.isfinite(v) for v in (a, fa, da, b, fb, db)):
        return None
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0.0:
        return None
    d2 = np.sqrt(disc)
    if b < a:
        d2 = -d2
    denom = db - da + 2.0 * d2
    if denom == 0.0:
        return None
    t = b - (b - a) * (db + d2 - d1) / denom
    return t


def _line_search(evaluate, f0, dphi0, c1, c2, max_trials):
    """Strong-Wolfe line search with cubic interpolation and bisection safeguard.

    `evaluate(alpha)` returns (f, g, dphi) at x + alpha * p.  Returns the
    accepted (alpha, f, g) or None when no acceptable step was found.
    """
    trials = 0

    def zoom(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi):
        nonlocal trials
        while trials < max_trials:
            trials += 1
            a_j = _cubic_minimizer(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
            lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
            width = hi - lo
            # bisect when interpolation fails or lands too close to an end
            if a_j is None or not np.isfinite(a_j) or a_j <= lo + 0.1 * width or a_j >= hi - 0.1 * width:
                a_j = 0.5 * (lo + hi)
            f_j, g_j, d_j = evaluate(a_j)
            if f_j > f0 + c1 * a_j * dphi0 or f_j >= f_lo:
                a_hi, f_hi, d_hi = a_j, f_j, d_j
            else:
                if abs(d_j) <= -c2 * dphi0:
                    return a_j, f_j, g_j
                if d_j * (a_hi - a_lo) >= 0.0:
                    a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
                a_lo, f_lo, d_lo = a_j, f_j, d_j
            if width < 1e-16 * max(1.0, abs(a_lo)):
                return None
        return None

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    alpha = 1.0
    first = True
    while trials < max_trials:
        trials += 1
        f_a, g_a, d_a = evaluate(alpha)
        if f_a > f0 + c1 * alpha * dphi0 or (not first and f_a >= f_prev):
            return zoom(a_prev, f_prev, d_prev, alpha, f_a, d_a)
        if abs(d_a) <= -c2 * dphi0:
            return alpha, f_a, g_a
        if d_a >= 0.0:
            return zoom(alpha, f_a, d_a, a_prev, f_prev, d_prev)
        a_prev, f_prev, d_prev = alpha, f_a, d_a
        alpha = 2.0 * alpha
        first = False
    return None


def minimize(func_and_grad, x0, opts: OptimOptions | None = None, validation=None) -> MinimizeResult:
    """BFGS minimization of a smooth function given jointly as (value, gradient).

    Parameters
    ----------
    func_and_grad : callable x -> (f, g)
    x0 : initial point, 1-D array
    opts : OptimOptions
    validation : optional callable x -> float.  When supplied, the run
        stops once the validation value has not improved for
        ``opts.patience`` consecutive accepted iterations, and the
        iterate with the best validation value is returned.

    Non-finite objective or gradient values abort the search with the
    trace preserved (termination "non_finite") instead of raising.
    """
    opts = opts or OptimOptions()
    fg = _CachedObjective(func_and_grad)
    x = np.asarray(x0, dtype=float).copy()
    f, g = fg(x)
    if not np.isfinite(f):
        raise ValueError("objective must be finite at the starting point")

    trace = OptimTrace()
    n = x.size
    identity = np.eye(n)
    h_inv = identity.copy()

    best_val = np.inf
    best_x, best_f, best_g = x.copy(), f, g.copy()
    prev_val = np.inf
    stall = 0
    if validation is not None:
        best_val = prev_val = float(validation(x))

    first_update = True
    while True:
        gnorm = float(np.linalg.norm(g, np.inf))
        if gnorm <= opts.gtol:
            trace.termination = "gtol"
            break
        if trace.n_iter >= opts.max_iter:
            trace.termination = "max_iter"
            break

        p = -h_inv @ g
        dphi0 = float(g @ p)
        if dphi0 >= 0.0:
            # stale curvature produced a non-descent direction; restart
            h_inv = identity.copy()
            p = -g
            dphi0 = float(g @ p)
            if dphi0 >= 0.0:
                trace.termination = "gtol"
                break

        def evaluate(alpha, x=x, p=p):
            f_a, g_a = fg(x + alpha * p)
            return f_a, g_a, float(g_a @ p) if np.all(np.isfinite(g_a)) else np.inf

        result = _line_search(evaluate, f, dphi0, opts.ls_c1, opts.ls_c2, opts.ls_max_trials)
        if result is None:
            trace.termination = "line_search_failed"
            break
        alpha, f_new, g_new = result
        if not np.isfinite(f_new) or not np.all(np.isfinite(g_new)):
            trace.termination = "non_finite"
            break

        s = alpha * p
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            if first_update:
                # scale the seed inverse Hessian to the first curvature pair
                h_inv = (sy / float(y @ y)) * identity
                first_update = False
            rho = 1.0 / sy
            hy = h_inv @ y
            h_inv = (
                h_inv
                - rho * (np.outer(s, hy) + np.outer(hy, s))
                + rho * (rho * float(y @ hy) + 1.0) * np.outer(s, s)
            )

        x = x + s
        f, g = f_new, g_new
        trace.fvals.append(f)
        trace.gnorms.append(float(np.linalg.norm(g, np.inf)))
        trace.steps.append(alpha)

        if validation is not None:
            val = float(validation(x))
            if val < best_val:
                best_val = val
                best_x, best_f, best_g = x.copy(), f, g.copy()
            # "does not decrease" is judged iteration over iteration, so a
            # noisy plateau does not count as a sustained failure; only
            # `patience` consecutive non-improving steps stop the run
            if val >= prev_val:
                stall += 1
                if stall >= opts.patience:
                    trace.termination = "early_stop"
                    return MinimizeResult(x=best_x, fval=best_f, grad=best_g, trace=trace)
            else:
                stall = 0
            prev_val = val

    if validation is not None and np.isfinite(best_val):
        # keep the best-validation iterate even on other terminations
        val = float(validation(x))
        if val >= best_val:
            return MinimizeResult(x=best_x, fval=best_f, grad=best_g, trace=trace)
    return MinimizeResult(x=x, fval=f, grad=g, trace=trace)


def multi_restart(fit, n_restarts: int, seeds=None):
    """Run `fit(seed)` for each seed and keep the lowest-cost candidate.

    `fit` must return an object with a ``cost`` attribute (or a
    (result, cost) tuple).  Restart failures are tolerated unless every
    restart fails, in which case the errors are aggregated and raised.
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    if seeds is None:
        seeds = list(range(n_restarts))
    seeds = list(seeds)[:n_restarts]
    if len(seeds) < n_restarts:
        raise ValueError("not enough seeds for the requested restarts")

    best = None
    best_cost = np.inf
    errors = []
    for seed in seeds:
        try:
            out = fit(seed)
        except Exception as exc:  # noqa: BLE001 - aggregated below
            errors.append((seed, exc))
            continue
        if isinstance(out, tuple):
            candidate, cost = out
        else:
            candidate, cost = out, out.cost
        if cost < best_cost:
            best, best_cost = candidate, cost
    if best is None:
        detail = "; ".join(f"seed {s}: {e}" for s, e in errors)
        raise RuntimeError(f"all {n_restarts} restarts failed: {detail}")
    return best
