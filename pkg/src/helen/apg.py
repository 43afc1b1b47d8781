"""Accelerated projected gradient ascent on box-constrained smooth objectives.

Two modes:

* ``backtracking`` -- step found by shrinking line search; used for the
  nonconvex variational/prior subproblems.
* ``fixed-lipschitz`` -- constant 1/L step; used where a Lipschitz bound of
  the gradient is available (quadratic posterior-mean subproblem).

Both modes guarantee monotone ascent per call: the returned objective value
is never below the starting value (up to 1e-12), falling back to the
projected start when no ascent step exists. Momentum restarts whenever an
ascent check fails.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import NumericalError


@dataclass(frozen=True)
class BoxProjection:
    """Clip-to-box projection; bounds may be scalars or broadcastable arrays."""

    lower: object = 1e-6
    upper: object = 1e6

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class ApgConfig:
    max_iters: int = 10
    backtrack_shrink: float = 0.5
    init_step: float = 1.0
    grad_tol: float = 1e-9
    mode: str = "backtracking"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (0.0 < self.backtrack_shrink < 1.0):
            raise ValueError("backtrack_shrink must lie in (0, 1)")
        if self.init_step <= 0:
            raise ValueError("init_step must be positive")
        if self.mode not in ("backtracking", "fixed-lipschitz"):
            raise ValueError(f"unknown mode: {self.mode}")


def spectral_norm(a: np.ndarray, iters: int = 50, tol: float = 1e-10) -> float:
    """Largest singular value via power iteration on a'a."""
    a = np.asarray(a, dtype=float)
    n = a.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n))
    prev = 0.0
    for _ in range(iters):
        w = a.T @ (a @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(norm - prev) <= tol * max(1.0, norm):
            prev = norm
            break
        prev = norm
    return float(np.sqrt(prev))


def _checked(fg: Callable, x: np.ndarray) -> Tuple[float, np.ndarray]:
    val, grad = fg(x)
    if not np.isfinite(val) or not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite objective or gradient", iterate=x)
    return float(val), grad


def _checked_value(f: Callable, x: np.ndarray) -> float:
    val = f(x)
    if not np.isfinite(val):
        raise NumericalError("non-finite objective", iterate=x)
    return float(val)


def maximize(fun_and_grad: Callable, start: np.ndarray, proj: BoxProjection,
             cfg: ApgConfig, lipschitz: Optional[float] = None,
             fun: Optional[Callable] = None):
    """Maximize a smooth objective over a box.

    ``fun_and_grad(x) -> (value, gradient)``. ``fun(x) -> value`` may be
    supplied as a cheaper value-only evaluation for line-search candidates.
    Returns ``(argmax estimate, final objective value, iterations used)``.
    """
    if fun is None:
        fun = lambda x: fun_and_grad(x)[0]
    if cfg.mode == "fixed-lipschitz":
        if lipschitz is None or lipschitz <= 0:
            raise ValueError("fixed-lipschitz mode requires a positive lipschitz bound")
        step0 = 1.0 / lipschitz
    else:
        step0 = cfg.init_step

    x = proj(np.asarray(start, dtype=float))
    fx = _checked_value(fun, x)
    x_prev = x
    step = step0
    momentum_age = 0  # iterations since last momentum restart
    iters = 0

    for _ in range(cfg.max_iters):
        iters += 1
        accepted = False
        cand, f_cand = x, fx
        for attempt in (0, 1):
            use_momentum = momentum_age > 0 and attempt == 0
            if use_momentum:
                beta = momentum_age / (momentum_age + 3.0)
                y = proj(x + beta * (x - x_prev))
            else:
                y = x
            _, grad = _checked(fun_and_grad, y)

            if cfg.mode == "fixed-lipschitz":
                cand = proj(y + step0 * grad)
                f_cand = _checked_value(fun, cand)
                accepted = f_cand > fx
            else:
                s = step
                for _shrink in range(60):
                    cand = proj(y + s * grad)
                    f_cand = _checked_value(fun, cand)
                    if f_cand > fx:
                        accepted = True
                        break
                    s *= cfg.backtrack_shrink
                    if s < 1e-18:
                        break
                if accepted:
                    # allow the step to regrow so one hard iteration does not
                    # permanently shrink it
                    step = min(step0, s / cfg.backtrack_shrink)
            if accepted or not use_momentum:
                break
            momentum_age = 0  # ascent check failed: restart momentum, retry

        if not accepted:
            break  # no ascent step found; fall back to the current iterate
        moved = float(np.max(np.abs(cand - x))) if cand.size else 0.0
        x_prev = x
        x, fx = cand, f_cand
        momentum_age += 1
        if moved <= cfg.grad_tol:
            break

    return x, fx, iters


def maximize_separable(fun_and_grad: Callable, start: np.ndarray,
                       proj: BoxProjection, cfg: ApgConfig,
                       fun: Optional[Callable] = None):
    """APG over a batch of independent subproblems sharing one objective form.

    ``start`` has shape (B, D): B independent units of dimension D. The
    callables evaluate a batch subset: ``fun_and_grad(X, idx) -> (values,
    grads)`` and ``fun(X, idx) -> values``, where ``idx`` is either None (all
    units, X is (B, D)) or an integer index array selecting the rows X holds.
    Each unit carries its own step size, momentum age, and acceptance, so one
    badly-scaled unit cannot stall the others. Ascent is guaranteed per unit:
    a unit with no accepted step keeps its starting iterate.

    Returns ``(iterates (B, D), values (B,), iterations used)``.
    """
    if fun is None:
        fun = lambda x, idx=None: fun_and_grad(x, idx)[0]
    x = proj(np.asarray(start, dtype=float))
    fx = np.asarray(fun(x, None), dtype=float)
    if not np.all(np.isfinite(fx)):
        raise NumericalError("non-finite objective", iterate=x)
    b = x.shape[0]
    x_prev = x.copy()
    step = np.full(b, cfg.init_step)
    age = np.zeros(b)
    frozen = np.zeros(b, dtype=bool)
    iters = 0
    for _ in range(cfg.max_iters):
        iters += 1
        live = np.flatnonzero(~frozen)
        if live.size == 0:
            break
        beta = (age[live] / (age[live] + 3.0))[:, None]
        y = proj(x[live] + beta * (x[live] - x_prev[live]))
        _, grad = fun_and_grad(y, live)
        if not np.all(np.isfinite(grad)):
            raise NumericalError("non-finite gradient", iterate=y)
        active = np.arange(live.size)
        s = step[live].copy()
        accepted = np.zeros(live.size, dtype=bool)
        best_x = x[live].copy()
        best_f = fx[live].copy()
        best_s = s.copy()
        for _shrink in range(60):
            cand = proj(y[active] + s[active][:, None] * grad[active])
            f_cand = np.asarray(fun(cand, live[active]), dtype=float)
            if not np.all(np.isfinite(f_cand)):
                raise NumericalError("non-finite objective", iterate=cand)
            better = f_cand > fx[live[active]]
            hit = active[better]
            best_x[hit] = cand[better]
            best_f[hit] = f_cand[better]
            best_s[hit] = s[hit]
            accepted[hit] = True
            s[active[~better]] *= cfg.backtrack_shrink
            active = active[~better]
            active = active[s[active] >= 1e-18]
            if active.size == 0:
                break
        progressed = np.flatnonzero(accepted)
        failed = np.flatnonzero(~accepted)
        # momentum restart for failed units; units that fail without momentum
        # are frozen at their current (ascent-safe) iterate
        frozen[live[failed][age[live[failed]] == 0]] = True
        age[live[failed]] = 0.0
        idx = live[progressed]
        moved = (np.max(np.abs(best_x[progressed] - x[idx]), axis=1)
                 if idx.size else np.zeros(0))
        x_prev[idx] = x[idx]
        x[idx] = best_x[progressed]
        fx[idx] = best_f[progressed]
        age[idx] += 1.0
        step[idx] = np.minimum(cfg.init_step,
                               best_s[progressed] / cfg.backtrack_shrink)
        frozen[idx[moved <= cfg.grad_tol]] = True
    return x, fx, iters
