"""Alternating-maximization drivers for the Beta- and Gaussian-prior engines.

One sweep updates, in order: per-pixel Dirichlet parameters (APG), per-patch
posterior parameters (APG, plus the Gaussian closed-form variance), outlier
responsibilities (closed form), prior parameters (APG or closed form), noise
variance, and outlier rate. Every step is an ascent step or an exact
subproblem maximizer, so the objective trace is non-decreasing.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import apg as apg_mod
from . import dirichlet, elbo, priors
from .apg import ApgConfig, BoxProjection
from .core import (HsiCube, ModelParameters, OutlierDensity, PatchGrid,
                   UnmixResult, VariationalState, log_outlier_density_batch,
                   partition_image)
from .errors import ConfigError, NumericalError

INIT_CONCENTRATION = 20.0
GAMMA_EPS = 1e-6
SIGMA2_MIN = 1e-12


@dataclass(frozen=True)
class InitSpec:
    mode: str = "successive-projection"
    endmembers: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in ("user-endmembers", "successive-projection", "random-simplex"):
            raise ConfigError(f"unknown init mode: {self.mode}")
        if self.mode == "user-endmembers" and self.endmembers is None:
            raise ConfigError("user-endmembers mode requires an endmember matrix")


@dataclass(frozen=True)
class EngineConfig:
    prior_family: str
    n_endmembers: int
    patch_rows: int = 5
    patch_cols: int = 5
    max_sweeps: int = 300
    rel_tol_mean_a: float = 1e-5
    apg: ApgConfig = field(default_factory=ApgConfig)
    outlier: OutlierDensity = field(default_factory=OutlierDensity)
    seed: int = 0
    init: InitSpec = field(default_factory=InitSpec)

    def __post_init__(self):
        if self.prior_family not in priors.FAMILIES:
            raise ConfigError(f"unknown prior family: {self.prior_family}")
        if self.n_endmembers < 2:
            raise ConfigError("n_endmembers must be >= 2")
        if self.max_sweeps < 1:
            raise ConfigError("max_sweeps must be >= 1")


# ---------------------------------------------------------------------------
# closed-form updates
# ---------------------------------------------------------------------------

def update_omega(log_pout: float, gamma: float, pixel_elbo_value: float) -> float:
    """Outlier responsibility: logistic of the log-odds, computed stably."""
    if gamma <= 0.0:
        return 0.0
    if gamma >= 1.0:
        return 1.0
    z = (math.log(gamma) + log_pout) - (math.log1p(-gamma) + pixel_elbo_value)
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def update_omega_batch(log_pout: np.ndarray, gamma: float,
                       pixel_values: np.ndarray) -> np.ndarray:
    if gamma <= 0.0:
        return np.zeros_like(log_pout)
    if gamma >= 1.0:
        return np.ones_like(log_pout)
    z = (math.log(gamma) + log_pout) - (math.log1p(-gamma) + pixel_values)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def update_noise_var(weighted_residuals: Sequence[float], total_weight: float,
                     n_bands: int, previous: float) -> float:
    """sigma^2 = sum_k sum_t wbar_t E_t / (M sum_t wbar_t), clamped below.

    ``weighted_residuals`` holds per-patch sums of the positive expected
    residuals wbar_t (y'y - 2 y' muA mus + tr(C_A C_s)). Degenerate
    all-outlier input keeps the previous value.
    """
    if total_weight <= 0.0:
        return previous
    val = math.fsum(weighted_residuals) / (n_bands * total_weight)
    return max(val, SIGMA2_MIN)


def update_gamma(omega: np.ndarray) -> float:
    """gamma = mean of omega."""
    omega = np.asarray(omega, dtype=float)
    if omega.size < 1:
        raise ValueError("omega must be non-empty")
    return float(omega.mean())


def update_gaussian_sigma(Q: np.ndarray, R_s: np.ndarray, noise_var: float) -> np.ndarray:
    """Sigma = 1 / (1/Q + diag(R_s)/sigma^2), elementwise per column."""
    diag = np.diag(np.asarray(R_s, dtype=float))
    return 1.0 / (1.0 / Q + diag[None, :] / noise_var)


def update_gaussian_prior(U_list: Sequence[np.ndarray], Sigma_list: Sequence[np.ndarray]):
    """Abar = mean(U_k); Q = mean((U_k - Abar)^2 + Sigma_k), clamped below."""
    U = np.asarray(U_list, dtype=float)
    S = np.asarray(Sigma_list, dtype=float)
    abar = U.mean(axis=0)
    q = ((U - abar) ** 2 + S).mean(axis=0)
    return abar, np.maximum(q, priors.VAR_MIN)


# ---------------------------------------------------------------------------
# batched subproblem objectives (also targets for gradient checks)
# ---------------------------------------------------------------------------

def posterior_objective(family: str, U: np.ndarray, W: np.ndarray,
                        prior_first, prior_second,
                        Ys: np.ndarray, Rs: np.ndarray, noise_var: float,
                        with_grad: bool = True):
    """Per-patch posterior subproblem values and gradients.

    Value per patch: (1/(2 s2)) (2 tr(muA Ys) - tr(C_A R_s)) - KL_k, with the
    data constants independent of (U, W) dropped. Arrays are stacked over
    patches: U, W are (K, M, N); Ys is (K, N, M); Rs is (K, N, N).

    Returns (values (K,), grad_U, grad_W).
    """
    mu, var = priors.moments(family, U, W)
    diag_r = np.einsum("kii->ki", Rs)
    colvar = var.sum(axis=1)                       # (K, N)
    tr_mu = np.einsum("kmi,kij,kmj->k", mu, Rs, mu)
    tr_var = np.einsum("kn,kn->k", diag_r, colvar)
    data_lin = np.einsum("kmn,knm->k", mu, Ys)
    inv2s = 0.5 / noise_var
    if prior_first is None:
        kl = priors._kl_uniform_entries(U, W)
    else:
        kl = _stacked_kl_entries(family, U, W, prior_first, prior_second)
    values = inv2s * (2.0 * data_lin - tr_mu - tr_var) - kl.sum(axis=(1, 2))
    if not with_grad:
        return values, None, None
    if prior_first is None:
        d_kl = _stacked_kl_grads("uniform", U, W, None, None)
    else:
        d_kl = _stacked_kl_grads(family, U, W, prior_first, prior_second)

    g_mu = (Ys.transpose(0, 2, 1) - np.einsum("kmi,kij->kmj", mu, Rs)) / noise_var
    g_var = -inv2s * np.broadcast_to(diag_r[:, None, :], U.shape)
    dmu_du, dmu_dw, dvar_du, dvar_dw = priors.moment_grads(family, U, W)
    grad_u = g_mu * dmu_du + g_var * dvar_du - d_kl[0]
    grad_w = g_mu * dmu_dw + g_var * dvar_dw - d_kl[1]
    return values, grad_u, grad_w


def _stacked_kl_entries(family, U, W, C, D):
    if family == "beta":
        return priors._kl_beta_entries(U, W, C, D)
    if family in ("gaussian", "lognormal"):
        return priors._kl_gaussian_entries(U, W, C, D)
    if family == "gamma":
        return priors._kl_gamma_entries(U, W, C, D)
    raise ValueError(f"unknown family: {family}")


def _stacked_kl_grads(family, U, W, C, D):
    """(dU, dW) of the KL entries; broadcasts prior params over the patch axis."""
    from .special import digamma, trigamma

    if family == "uniform" or C is None:
        s = U + W
        du = (U - 1.0) * trigamma(U) - (s - 2.0) * trigamma(s)
        dw = (W - 1.0) * trigamma(W) - (s - 2.0) * trigamma(s)
        return du, dw
    if family == "beta":
        s = U + W
        slack = C + D - s
        du = (U - C) * trigamma(U) + slack * trigamma(s)
        dw = (W - D) * trigamma(W) + slack * trigamma(s)
        return du, dw
    if family in ("gaussian", "lognormal"):
        du = (U - C) / D
        dw = 0.5 * (1.0 / D - 1.0 / W)
        return du, dw
    if family == "gamma":
        du = (U - C) * trigamma(U) + D / W - 1.0
        dw = C / W - U * D / (W * W)
        return du, dw
    raise ValueError(f"unknown family: {family}")


def prior_objective(family: str, U: np.ndarray, W: np.ndarray,
                    first: np.ndarray, second: np.ndarray):
    """(-sum_k KL_k, gradient w.r.t. prior first/second params)."""
    from .special import digamma

    kl = _stacked_kl_entries(family, U, W, first, second)
    k = U.shape[0]
    if family == "beta":
        d_first = (k * (digamma(first) - digamma(first + second))
                   - np.sum(digamma(U), axis=0) + np.sum(digamma(U + W), axis=0))
        d_second = (k * (digamma(second) - digamma(first + second))
                    - np.sum(digamma(W), axis=0) + np.sum(digamma(U + W), axis=0))
    elif family in ("gaussian", "lognormal"):
        d_first = np.sum((first - U) / second, axis=0)
        d_second = np.sum(0.5 * (1.0 / second - ((U - first) ** 2 + W) / second ** 2), axis=0)
    elif family == "gamma":
        d_first = (k * digamma(first) - np.sum(digamma(U), axis=0)
                   + np.sum(np.log(W), axis=0) - k * np.log(second))
        d_second = np.sum(U / W, axis=0) - k * first / second
    else:
        raise ValueError(f"unknown family: {family}")
    return -float(kl.sum()), -d_first, -d_second


def update_beta_prior(U_stack: np.ndarray, V_stack: np.ndarray,
                      current_c: np.ndarray, current_d: np.ndarray,
                      apg_cfg: ApgConfig, family: str = "beta"):
    """APG ascent on -sum_k KL w.r.t. the prior parameters."""
    shape = current_c.shape
    size = current_c.size

    def fun_and_grad(z):
        c = z[:size].reshape(shape)
        d = z[size:].reshape(shape)
        val, gc, gd = prior_objective(family, U_stack, V_stack, c, d)
        return val, np.concatenate([gc.ravel(), gd.ravel()])

    def fun_only(z):
        c = z[:size].reshape(shape)
        d = z[size:].reshape(shape)
        return -float(_stacked_kl_entries(family, U_stack, V_stack, c, d).sum())

    if family == "lognormal":
        lo_first, hi = -priors.LOGNORMAL_BOUND, priors.LOGNORMAL_BOUND
    else:
        lo_first, hi = priors.PARAM_MIN, priors.PARAM_MAX
    lower = np.concatenate([np.full(size, lo_first), np.full(size, priors.PARAM_MIN)])
    proj = BoxProjection(lower=lower, upper=hi)
    start = np.concatenate([current_c.ravel(), current_d.ravel()])
    z, _, _ = apg_mod.maximize(fun_and_grad, start, proj, apg_cfg, fun=fun_only)
    return z[:size].reshape(shape), z[size:].reshape(shape)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def successive_projection(Y: np.ndarray, n: int) -> np.ndarray:
    """Greedy pure-pixel search: pick n columns maximizing residual norm."""
    resid = np.asarray(Y, dtype=float).copy()
    chosen = []
    picked = []
    for _ in range(n):
        norms = np.sum(resid * resid, axis=0)
        t = int(np.argmax(norms))
        if norms[t] <= 0:
            raise ConfigError("not enough distinct pixels for initialization")
        q = resid[:, t] / np.sqrt(norms[t])
        picked.append(t)
        chosen.append(Y[:, t].copy())
        resid = resid - np.outer(q, q @ resid)
    return np.stack(chosen, axis=1)


def median_filter_3x3(values: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Per-band 3x3 spatial median filter (reflect padding).

    Used to desensitize initialization to isolated outlier pixels; images
    smaller than 3x3 are returned unchanged.
    """
    if rows < 3 or cols < 3:
        return values
    m = values.shape[0]
    planes = values.reshape(m, rows, cols)
    padded = np.pad(planes, ((0, 0), (1, 1), (1, 1)), mode="reflect")
    stack = np.empty((9, m, rows, cols))
    k = 0
    for dr in range(3):
        for dc in range(3):
            stack[k] = padded[:, dr:dr + rows, dc:dc + cols]
            k += 1
    return np.median(stack, axis=0).reshape(m, rows * cols)


def _initial_endmembers(cube: HsiCube, cfg: EngineConfig, rng: np.random.Generator) -> np.ndarray:
    n = cfg.n_endmembers
    Y = median_filter_3x3(cube.values, cube.rows, cube.cols)
    if np.unique(Y, axis=1).shape[1] < n:
        raise ConfigError("fewer distinct pixels than endmembers")
    if cfg.init.mode == "user-endmembers":
        A = np.asarray(cfg.init.endmembers, dtype=float)
        if A.shape != (cube.bands, n):
            raise ConfigError(f"user endmembers must have shape ({cube.bands}, {n})")
    elif cfg.init.mode == "successive-projection":
        A = successive_projection(Y, n)
    else:  # random-simplex
        idx = rng.choice(cube.n_pixels, size=min(cube.n_pixels, 50 * n), replace=False)
        weights = rng.dirichlet(np.ones(idx.size), size=n).T  # (idx, n)
        A = Y[:, idx] @ weights
    if cfg.prior_family in ("beta", "uniform"):
        A = np.clip(A, 0.01, 0.99)
    elif cfg.prior_family in ("lognormal", "gamma"):
        A = np.clip(A, 0.01, None)
    return A


def _initial_arrays(cube: HsiCube, grid: PatchGrid, cfg: EngineConfig):
    """Initial (U, W, prior_first, prior_second, alpha, omega, sigma2, gamma)."""
    rng = np.random.default_rng(cfg.seed)
    A = _initial_endmembers(cube, cfg, rng)
    k, t, n = grid.n_patches, cube.n_pixels, cfg.n_endmembers
    kappa = INIT_CONCENTRATION
    fam = cfg.prior_family
    if fam in ("beta", "uniform"):
        U = np.broadcast_to(kappa * A, (k,) + A.shape).copy()
        W = np.broadcast_to(kappa * (1.0 - A), (k,) + A.shape).copy()
        prior_first = kappa * A if fam == "beta" else None
        prior_second = kappa * (1.0 - A) if fam == "beta" else None
    elif fam == "gaussian":
        U = np.broadcast_to(A, (k,) + A.shape).copy()
        W = np.full((k,) + A.shape, 0.01)
        prior_first, prior_second = A.copy(), np.full(A.shape, 0.01)
    elif fam == "lognormal":
        logA = np.log(A)
        U = np.broadcast_to(logA, (k,) + A.shape).copy()
        W = np.full((k,) + A.shape, 0.01)
        prior_first, prior_second = logA.copy(), np.full(A.shape, 0.01)
    else:  # gamma
        U = np.full((k,) + A.shape, kappa)
        W = kappa / np.broadcast_to(A, (k,) + A.shape)
        prior_first, prior_second = np.full(A.shape, kappa), kappa / A
    alpha = np.ones((t, n))
    gamma = 0.01
    omega = np.full(t, gamma)
    sigma2 = 1e-2 * float(np.mean(cube.values ** 2))
    return U, W, prior_first, prior_second, alpha, omega, sigma2, gamma


def initialize(cube: HsiCube, cfg: EngineConfig):
    """Initial (ModelParameters, VariationalState) per the configured InitSpec."""
    grid = partition_image(cube.rows, cube.cols, cfg.patch_rows, cfg.patch_cols)
    U, W, pf, ps, alpha, omega, sigma2, gamma = _initial_arrays(cube, grid, cfg)
    post_family = priors.posterior_family_for_prior(cfg.prior_family)
    posteriors = [priors.PosteriorParams(post_family, U[i], W[i])
                  for i in range(grid.n_patches)]
    prior = priors.PriorParams(cfg.prior_family, pf, ps)
    model = ModelParameters(prior=prior, noise_var=sigma2, outlier_rate=gamma,
                            outlier_density=cfg.outlier)
    state = VariationalState(alpha=alpha, omega=omega, patch_posteriors=posteriors)
    return model, state


# ---------------------------------------------------------------------------
# sweep machinery
# ---------------------------------------------------------------------------

def _patch_moments(family, U, W):
    """(mu (K,M,N), C_A (K,N,N), diag C_A (K,N))."""
    mu, var = priors.moments(family, U, W)
    c_a = np.einsum("kmi,kmj->kij", mu, mu)
    colvar = var.sum(axis=1)
    ii = np.arange(U.shape[2])
    c_a[:, ii, ii] += colvar
    return mu, c_a, np.einsum("kii->ki", c_a)


def _pixel_features(Y, patch_lists, patch_idx, mu, c_a, c_diag):
    """Per-pixel (b, c_diag, c_full) gathered from per-patch moments."""
    t = Y.shape[1]
    n = mu.shape[2]
    b = np.empty((t, n))
    for k, idx in enumerate(patch_lists):
        b[idx] = Y[:, idx].T @ mu[k]
    return b, c_diag[patch_idx], c_a[patch_idx]


def _patch_stats(alpha, omega, Y, patch_lists, n):
    """Responsibility-weighted R_s (K,N,N) and Y_s (K,N,M) per patch."""
    wbar = 1.0 - omega
    mu_s = dirichlet.mean_batch(alpha)
    c_s = dirichlet.correlation_batch(alpha)
    k = len(patch_lists)
    rs = np.empty((k, n, n))
    ys = np.empty((k, n, Y.shape[0]))
    for i, idx in enumerate(patch_lists):
        w = wbar[idx]
        rs[i] = np.einsum("t,tij->ij", w, c_s[idx])
        ys[i] = (mu_s[idx] * w[:, None]).T @ Y[:, idx].T
    return rs, ys


class _Engine:
    def __init__(self, cube: HsiCube, cfg: EngineConfig,
                 progress: Optional[Callable] = None):
        if cfg.n_endmembers > cube.bands:
            raise ConfigError("n_endmembers must not exceed the number of bands")
        self.cube = cube
        self.cfg = cfg
        self.progress = progress
        self.grid = partition_image(cube.rows, cube.cols, cfg.patch_rows, cfg.patch_cols)
        self.patch_lists = self.grid.patch_pixels()
        self.patch_idx = self.grid.assignment
        self.Y = cube.values
        self.ynorm = np.sum(self.Y * self.Y, axis=0)
        self.logpout = log_outlier_density_batch(self.Y, cfg.outlier)
        self.family = priors.posterior_family_for_prior(cfg.prior_family)
        (self.U, self.W, self.prior_first, self.prior_second,
         self.alpha, self.omega, self.sigma2, self.gamma) = _initial_arrays(
            cube, self.grid, cfg)

    # -- subproblem solvers -------------------------------------------------

    def _update_alpha(self):
        """Per-pixel APG over the Dirichlet parameters, run as one batch."""
        mu, c_a, c_diag = _patch_moments(self.family, self.U, self.W)
        b, cd, cf = _pixel_features(self.Y, self.patch_lists, self.patch_idx,
                                    mu, c_a, c_diag)
        m = self.cube.bands

        def fun_and_grad(a, idx=None):
            if idx is None:
                return elbo.pixel_terms_batch(a, b, cd, cf, self.ynorm,
                                              self.sigma2, m)
            return elbo.pixel_terms_batch(a, b[idx], cd[idx], cf[idx],
                                          self.ynorm[idx], self.sigma2, m)

        def fun_only(a, idx=None):
            if idx is None:
                return elbo.pixel_values_batch(a, b, cd, cf, self.ynorm,
                                               self.sigma2, m)
            return elbo.pixel_values_batch(a, b[idx], cd[idx], cf[idx],
                                           self.ynorm[idx], self.sigma2, m)

        proj = BoxProjection(lower=dirichlet.ALPHA_MIN, upper=dirichlet.ALPHA_MAX)
        self.alpha, _, _ = apg_mod.maximize_separable(fun_and_grad, self.alpha,
                                                      proj, self.cfg.apg,
                                                      fun=fun_only)
        self._features = (b, cd, cf)

    def _update_posterior_generic(self, rs, ys):
        """Per-patch APG on (U, W) for beta/uniform/lognormal/gamma posteriors."""
        k, m, n = self.U.shape
        d = m * n
        fam = self.family
        pf, ps = self.prior_first, self.prior_second

        def fun_and_grad(z, idx=None):
            kk = z.shape[0]
            u = z[:, :d].reshape(kk, m, n)
            w = z[:, d:].reshape(kk, m, n)
            ys_s = ys if idx is None else ys[idx]
            rs_s = rs if idx is None else rs[idx]
            vals, gu, gw = posterior_objective(fam, u, w, pf, ps, ys_s, rs_s,
                                               self.sigma2)
            return vals, np.concatenate([gu.reshape(kk, d), gw.reshape(kk, d)],
                                        axis=1)

        def fun_only(z, idx=None):
            kk = z.shape[0]
            u = z[:, :d].reshape(kk, m, n)
            w = z[:, d:].reshape(kk, m, n)
            ys_s = ys if idx is None else ys[idx]
            rs_s = rs if idx is None else rs[idx]
            vals, _, _ = posterior_objective(fam, u, w, pf, ps, ys_s, rs_s,
                                             self.sigma2, with_grad=False)
            return vals

        if self.cfg.prior_family == "lognormal":
            lo_first, lo_second = -priors.LOGNORMAL_BOUND, priors.VAR_MIN
            hi = priors.LOGNORMAL_BOUND
        else:
            lo_first = lo_second = priors.PARAM_MIN
            hi = priors.PARAM_MAX
        lower = np.concatenate([np.full(d, lo_first), np.full(d, lo_second)])
        proj = BoxProjection(lower=lower, upper=hi)
        start = np.concatenate([self.U.reshape(k, d), self.W.reshape(k, d)], axis=1)
        z, _, _ = apg_mod.maximize_separable(fun_and_grad, start, proj,
                                             self.cfg.apg, fun=fun_only)
        self.U = z[:, :d].reshape(k, m, n).copy()
        self.W = z[:, d:].reshape(k, m, n).copy()
        self._concentration_probe(rs, ys)

    _PROBE_FACTORS = (4.0, 2.0, 1.25, 0.8, 0.5)

    def _concentration_probe(self, rs, ys):
        """Mean-preserving concentration rescaling, kept per patch only when
        it improves the patch objective.

        Gradient steps change the posterior concentration additively, which is
        slow when the optimum is orders of magnitude away; this probe moves it
        multiplicatively while holding the posterior mean fixed, so it is a
        plain ascent step on the same objective.
        """
        fam = self.family
        pf, ps = self.prior_first, self.prior_second
        best_vals, _, _ = posterior_objective(fam, self.U, self.W, pf, ps, ys,
                                              rs, self.sigma2, with_grad=False)
        best_u, best_w = self.U, self.W
        for c in self._PROBE_FACTORS:
            if fam == "lognormal":
                w = np.clip(self.W / c, priors.VAR_MIN, priors.LOGNORMAL_BOUND)
                u = np.clip(self.U + 0.5 * (self.W - w),
                            -priors.LOGNORMAL_BOUND, priors.LOGNORMAL_BOUND)
            else:
                u = np.clip(c * self.U, priors.PARAM_MIN, priors.PARAM_MAX)
                w = np.clip(c * self.W, priors.PARAM_MIN, priors.PARAM_MAX)
            vals, _, _ = posterior_objective(fam, u, w, pf, ps, ys, rs,
                                             self.sigma2, with_grad=False)
            better = vals > best_vals
            if better.any():
                if best_u is self.U:
                    best_u, best_w = self.U.copy(), self.W.copy()
                best_u[better] = u[better]
                best_w[better] = w[better]
                best_vals = np.where(better, vals, best_vals)
        self.U, self.W = best_u, best_w

    def _update_posterior_gaussian(self, rs, ys):
        """Fixed-step APG for each U_k, then the closed-form Sigma_k."""
        q = self.prior_second
        abar = self.prior_first
        inv_q_norm = float(np.linalg.norm(1.0 / q))
        fixed_cfg = replace(self.cfg.apg, mode="fixed-lipschitz")
        proj = BoxProjection(lower=priors.PARAM_MIN, upper=priors.PARAM_MAX)
        for k in range(self.U.shape[0]):
            rs_k, ys_k = rs[k], ys[k]
            lip = apg_mod.spectral_norm(rs_k) / self.sigma2 + inv_q_norm
            shape = self.U[k].shape

            def fun_and_grad(z, rs_k=rs_k, ys_k=ys_k, shape=shape):
                u = z.reshape(shape)
                resid = ys_k.T - u @ rs_k
                val = (np.einsum("mn,nm->", u, ys_k)
                       - 0.5 * np.einsum("mi,ij,mj->", u, rs_k, u)) / self.sigma2
                val -= 0.5 * float(np.sum((u - abar) ** 2 / q))
                grad = resid / self.sigma2 - (u - abar) / q
                return float(val), grad.ravel()

            z, _, _ = apg_mod.maximize(fun_and_grad, self.U[k].ravel(), proj,
                                       fixed_cfg, lipschitz=lip)
            self.U[k] = z.reshape(shape)
            self.W[k] = update_gaussian_sigma(q, rs_k, self.sigma2)

    def _update_omega(self):
        mu, c_a, c_diag = _patch_moments(self.family, self.U, self.W)
        b, cd, cf = _pixel_features(self.Y, self.patch_lists, self.patch_idx,
                                    mu, c_a, c_diag)
        vals, _ = elbo.pixel_terms_batch(self.alpha, b, cd, cf, self.ynorm,
                                         self.sigma2, self.cube.bands)
        self.omega = update_omega_batch(self.logpout, self.gamma, vals)
        self._features = (b, cd, cf)
        self._pixel_values = vals

    def _update_prior(self):
        fam = self.cfg.prior_family
        if fam == "uniform":
            return
        if fam == "gaussian":
            self.prior_first, self.prior_second = update_gaussian_prior(self.U, self.W)
            return
        self.prior_first, self.prior_second = update_beta_prior(
            self.U, self.W, self.prior_first, self.prior_second, self.cfg.apg,
            family=self.family)

    def _update_sigma2(self):
        b, cd, cf = self._features
        resid = elbo.residual_quadratic(self.alpha, b, cd, cf, self.ynorm)
        wbar = 1.0 - self.omega
        per_patch = [float(np.sum(wbar[idx] * resid[idx])) for idx in self.patch_lists]
        self.sigma2 = update_noise_var(per_patch, float(wbar.sum()),
                                       self.cube.bands, self.sigma2)
        self._residuals = resid

    def _update_gamma(self):
        self.gamma = min(max(update_gamma(self.omega), GAMMA_EPS), 1.0 - GAMMA_EPS)

    # -- objective ----------------------------------------------------------

    def _total_elbo(self) -> float:
        b, cd, cf = self._features
        m = self.cube.bands
        resid = elbo.residual_quadratic(self.alpha, b, cd, cf, self.ynorm)
        entropy = dirichlet.entropy_batch(self.alpha)
        const = elbo.elbo_constant(m, self.alpha.shape[1]) - 0.5 * m * np.log(self.sigma2)
        pixel_vals = -resid / (2.0 * self.sigma2) + const + entropy
        wbar = 1.0 - self.omega
        g = elbo.mixing_terms_batch(self.omega, self.gamma, self.logpout)
        if self.prior_first is None:
            kl = priors._kl_uniform_entries(self.U, self.W)
        else:
            kl = _stacked_kl_entries(self.family, self.U, self.W,
                                     self.prior_first, self.prior_second)
        per_patch = [float(np.sum(wbar[idx] * pixel_vals[idx] + g[idx]))
                     - float(kl[k].sum())
                     for k, idx in enumerate(self.patch_lists)]
        return math.fsum(per_patch)

    # -- driver -------------------------------------------------------------

    def run(self) -> UnmixResult:
        trace = []
        prev_means = priors.moments(self.family, self.U, self.W)[0]
        t0 = time.monotonic()
        sweeps = 0
        for sweep in range(1, self.cfg.max_sweeps + 1):
            sweeps = sweep
            self._update_alpha()
            rs, ys = _patch_stats(self.alpha, self.omega, self.Y,
                                  self.patch_lists, self.alpha.shape[1])
            if self.cfg.prior_family == "gaussian":
                self._update_posterior_gaussian(rs, ys)
            else:
                self._update_posterior_generic(rs, ys)
            self._update_omega()
            self._update_prior()
            self._update_sigma2()
            self._update_gamma()
            value = self._total_elbo()
            if not np.isfinite(value):
                raise NumericalError(f"non-finite objective at sweep {sweep}")
            trace.append(value)
            if self.progress is not None:
                self.progress({"sweep": sweep, "elbo": value, "sigma2": self.sigma2,
                               "gamma": self.gamma,
                               "seconds": time.monotonic() - t0})
            means = priors.moments(self.family, self.U, self.W)[0]
            delta = np.linalg.norm((means - prev_means).reshape(means.shape[0], -1),
                                   axis=1)
            scale = np.linalg.norm(prev_means.reshape(means.shape[0], -1), axis=1)
            prev_means = means
            if float(np.max(delta / (scale + 1e-12))) < self.cfg.rel_tol_mean_a:
                break

        mu = priors.moments(self.family, self.U, self.W)[0]
        abundances = dirichlet.mean_batch(self.alpha)
        prior = priors.PriorParams(self.cfg.prior_family, self.prior_first,
                                   self.prior_second)
        model = ModelParameters(prior=prior, noise_var=self.sigma2,
                                outlier_rate=self.gamma,
                                outlier_density=self.cfg.outlier)
        return UnmixResult(endmembers=mu, abundances=abundances,
                           outlier_scores=self.omega.copy(),
                           elbo_trace=np.asarray(trace), iterations=sweeps,
                           model=model, grid=self.grid)


def run(cube: HsiCube, cfg: EngineConfig,
        progress: Optional[Callable] = None) -> UnmixResult:
    """Run the alternating-maximization engine on a cube."""
    return _Engine(cube, cfg, progress).run()
