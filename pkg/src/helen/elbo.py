"""Evidence-lower-bound assembly.

The per-pixel term is, up to the calibration constant,

    l = (1/(2 s2)) (2 y' muA mus - tr(CA Cs) - y'y) - (M/2) log s2
        - (M/2) log(2 pi) + log((N-1)!) + H(alpha)

where the constant -(M/2) log(2 pi) + log((N-1)!) makes exp(l) a genuine
density lower bound (the log((N-1)!) term is the uniform Dirichlet prior
density on the simplex), so the outlier responsibility update is a
calibrated posterior probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import dirichlet, priors
from .core import HsiCube, ModelParameters, OutlierDensity, PatchGrid, VariationalState
from .core import log_outlier_density, log_outlier_density_batch
from .special import digamma, log_gamma, trigamma

_LOG_2PI = float(np.log(2.0 * np.pi))


def elbo_constant(n_bands: int, n_endmembers: int) -> float:
    """Calibration constant: -(M/2) log(2 pi) + log((N-1)!)."""
    return -0.5 * n_bands * _LOG_2PI + math.lgamma(n_endmembers)


@dataclass(frozen=True)
class PixelSuffStats:
    """Quadratic sufficient statistics of one pixel under (q_A, q_s)."""

    y_norm_sq: float
    cross: float
    trace_term: float


@dataclass(frozen=True)
class PatchSuffStats:
    """Responsibility-weighted abundance statistics of one patch."""

    R_s: np.ndarray   # (N, N)  sum_t wbar_t C_s(alpha_t)
    Y_s: np.ndarray   # (N, M)  sum_t wbar_t mu_s(alpha_t) y_t'
    weight: float     # sum_t wbar_t


def pixel_suff_stats(y: np.ndarray, q_A: priors.PosteriorParams,
                     q_s: dirichlet.DirichletParams) -> PixelSuffStats:
    y = np.asarray(y, dtype=float)
    mu_a = priors.posterior_mean(q_A)
    c_a = priors.posterior_correlation(q_A)
    mu_s = dirichlet.mean(q_s)
    c_s = dirichlet.correlation(q_s)
    return PixelSuffStats(
        y_norm_sq=float(y @ y),
        cross=float(y @ (mu_a @ mu_s)),
        trace_term=float(np.trace(c_a @ c_s)),
    )


def pixel_elbo(y: np.ndarray, noise_var: float, q_A: priors.PosteriorParams,
               q_s: dirichlet.DirichletParams) -> float:
    """Per-pixel ELBO term for a nominal pixel."""
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    y = np.asarray(y, dtype=float)
    m = y.size
    st = pixel_suff_stats(y, q_A, q_s)
    quad = 2.0 * st.cross - st.trace_term - st.y_norm_sq
    return (quad / (2.0 * noise_var) - 0.5 * m * np.log(noise_var)
            + elbo_constant(m, q_s.alpha.size) + dirichlet.entropy_term(q_s))


def _xlogy(x: float, y: float) -> float:
    if x == 0.0:
        return 0.0
    if y <= 0.0:
        return -math.inf
    return x * math.log(y)


def mixing_term(omega: float, gamma: float, log_pout: float) -> float:
    """g = w log(gamma p_out / w) + (1-w) log((1-gamma)/(1-w)), log-domain.

    Uses the convention 0*log(./0) = 0 at omega in {0, 1}. Degenerate gamma
    with mass on the opposite branch yields -inf (a valid ELBO value).
    """
    if not (0.0 <= omega <= 1.0 and 0.0 <= gamma <= 1.0):
        raise ValueError("omega and gamma must lie in [0, 1]")
    wbar = 1.0 - omega
    out = 0.0
    if omega > 0.0:
        if gamma == 0.0:
            return -math.inf
        out += omega * (math.log(gamma) + log_pout - math.log(omega))
    if wbar > 0.0:
        if gamma == 1.0:
            return -math.inf
        out += wbar * (math.log(1.0 - gamma) - math.log(wbar))
    return out


def patch_elbo(pixels: np.ndarray, noise_var: float, gamma: float,
               q_A: priors.PosteriorParams, prior: priors.PriorParams,
               q_s: Sequence[dirichlet.DirichletParams], omega: Sequence[float],
               outlier: OutlierDensity) -> float:
    """sum_t [ (1-w_t) l_t + g_t ] - KL(q_A || prior) over one patch.

    ``pixels`` has shape (M, n) with one column per pixel.
    """
    pixels = np.asarray(pixels, dtype=float)
    n = pixels.shape[1]
    if n < 1:
        raise ValueError("patch must contain at least one pixel")
    if len(q_s) != n or len(omega) != n:
        raise ValueError("q_s/omega lists must align with patch pixel count")
    total = 0.0
    for i in range(n):
        w = float(omega[i])
        lp = log_outlier_density(pixels[:, i], outlier)
        g = mixing_term(w, gamma, lp)
        if 1.0 - w > 0.0:
            total += (1.0 - w) * pixel_elbo(pixels[:, i], noise_var, q_A, q_s[i])
        total += g
    return total - priors.kl_to_prior(q_A, prior)


def patch_suff_stats(pixels: np.ndarray, q_s: Sequence[dirichlet.DirichletParams],
                     omega: Sequence[float]) -> PatchSuffStats:
    pixels = np.asarray(pixels, dtype=float)
    n = pixels.shape[1]
    if len(q_s) != n or len(omega) != n:
        raise ValueError("q_s/omega lists must align with patch pixel count")
    dim = q_s[0].alpha.size
    r_s = np.zeros((dim, dim))
    y_s = np.zeros((dim, pixels.shape[0]))
    weight = 0.0
    for i in range(n):
        wbar = 1.0 - float(omega[i])
        r_s += wbar * dirichlet.correlation(q_s[i])
        y_s += wbar * np.outer(dirichlet.mean(q_s[i]), pixels[:, i])
        weight += wbar
    return PatchSuffStats(R_s=r_s, Y_s=y_s, weight=weight)


def total_elbo(cube: HsiCube, grid: PatchGrid, model: ModelParameters,
               state: VariationalState) -> float:
    """Full objective, summed over patches in fixed patch order."""
    vals = []
    pixels_by_patch = grid.patch_pixels()
    for k, idx in enumerate(pixels_by_patch):
        q_s = [dirichlet.DirichletParams(state.alpha[t]) for t in idx]
        om = [float(state.omega[t]) for t in idx]
        vals.append(patch_elbo(cube.values[:, idx], model.noise_var,
                               model.outlier_rate, state.patch_posteriors[k],
                               model.prior, q_s, om, model.outlier_density))
    return math.fsum(vals)


# ---------------------------------------------------------------------------
# batched kernels (engine internals and gradient-check targets)
# ---------------------------------------------------------------------------

def pixel_terms_batch(alpha: np.ndarray, b: np.ndarray, c_diag: np.ndarray,
                      c_full: np.ndarray, y_norm_sq: np.ndarray,
                      noise_var: float, n_bands: int):
    """Calibrated per-pixel ELBO terms and their alpha-gradients, batched.

    Parameters
    ----------
    alpha : (T, N) Dirichlet parameters.
    b : (T, N) per-pixel muA' y.
    c_diag : (T, N) diagonal of the per-pixel endmember correlation C_A.
    c_full : (T, N, N) per-pixel C_A.
    y_norm_sq : (T,) squared pixel norms.

    Returns
    -------
    values : (T,) per-pixel l values.
    grads : (T, N) gradients d l / d alpha.
    """
    alpha = np.asarray(alpha, dtype=float)
    t, n = alpha.shape
    a0 = alpha.sum(axis=1)
    mu = alpha / a0[:, None]
    cross = np.einsum("tn,tn->t", b, mu)
    g_alpha = np.einsum("tij,tj->ti", c_full, alpha)
    quad = np.einsum("tn,tn->t", alpha, g_alpha)
    lin = np.einsum("tn,tn->t", c_diag, alpha)
    h = a0 * (a0 + 1.0)
    trace = (lin + quad) / h

    psi_alpha = digamma(alpha)
    psi_a0 = digamma(a0)
    log_b = np.sum(log_gamma(alpha), axis=1) - log_gamma(a0)
    entropy = log_b - np.sum((alpha - 1.0) * (psi_alpha - psi_a0[:, None]), axis=1)

    inv2s = 0.5 / noise_var
    const = elbo_constant(n_bands, n) - 0.5 * n_bands * np.log(noise_var)
    values = inv2s * (2.0 * cross - trace - y_norm_sq) + const + entropy

    d_cross = (b - cross[:, None]) / a0[:, None]
    g_num = c_diag + 2.0 * g_alpha
    d_trace = g_num / h[:, None] - (trace * (2.0 * a0 + 1.0) / h)[:, None]
    tri_alpha = trigamma(alpha)
    tri_a0 = trigamma(a0)
    d_entropy = -(alpha - 1.0) * tri_alpha + ((a0 - n) * tri_a0)[:, None]
    grads = inv2s * (2.0 * d_cross - d_trace) + d_entropy
    return values, grads


def pixel_values_batch(alpha: np.ndarray, b: np.ndarray, c_diag: np.ndarray,
                       c_full: np.ndarray, y_norm_sq: np.ndarray,
                       noise_var: float, n_bands: int) -> np.ndarray:
    """Values of ``pixel_terms_batch`` without the gradients (cheaper)."""
    alpha = np.asarray(alpha, dtype=float)
    n = alpha.shape[1]
    a0 = alpha.sum(axis=1)
    mu = alpha / a0[:, None]
    cross = np.einsum("tn,tn->t", b, mu)
    g_alpha = np.einsum("tij,tj->ti", c_full, alpha)
    quad = np.einsum("tn,tn->t", alpha, g_alpha)
    lin = np.einsum("tn,tn->t", c_diag, alpha)
    trace = (lin + quad) / (a0 * (a0 + 1.0))

    log_b = np.sum(log_gamma(alpha), axis=1) - log_gamma(a0)
    entropy = log_b - np.sum((alpha - 1.0) * (digamma(alpha) - digamma(a0)[:, None]),
                             axis=1)
    inv2s = 0.5 / noise_var
    const = elbo_constant(n_bands, n) - 0.5 * n_bands * np.log(noise_var)
    return inv2s * (2.0 * cross - trace - y_norm_sq) + const + entropy


def residual_quadratic(alpha: np.ndarray, b: np.ndarray, c_diag: np.ndarray,
                       c_full: np.ndarray, y_norm_sq: np.ndarray) -> np.ndarray:
    """Per-pixel expected residual y'y - 2 y' muA mus + tr(C_A C_s)."""
    alpha = np.asarray(alpha, dtype=float)
    a0 = alpha.sum(axis=1)
    mu = alpha / a0[:, None]
    cross = np.einsum("tn,tn->t", b, mu)
    g_alpha = np.einsum("tij,tj->ti", c_full, alpha)
    quad = np.einsum("tn,tn->t", alpha, g_alpha)
    lin = np.einsum("tn,tn->t", c_diag, alpha)
    trace = (lin + quad) / (a0 * (a0 + 1.0))
    return y_norm_sq - 2.0 * cross + trace


def mixing_terms_batch(omega: np.ndarray, gamma: float, log_pout: np.ndarray) -> np.ndarray:
    """Vectorized mixing terms for omega strictly inside (0, 1)."""
    omega = np.asarray(omega, dtype=float)
    wbar = 1.0 - omega
    out = np.zeros_like(omega)
    pos = omega > 0.0
    out[pos] += omega[pos] * (np.log(gamma) + log_pout[pos] - np.log(omega[pos]))
    neg = wbar > 0.0
    out[neg] += wbar[neg] * (np.log1p(-gamma) - np.log(wbar[neg]))
    return out
