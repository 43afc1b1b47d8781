"""Endmember prior/posterior families.

Each family is an elementwise-independent matrix distribution with analytic
posterior mean E[A], posterior correlation E[A^T A], and KL(q || p). The
supported pairings are

    beta prior      <-> beta posterior        params (C, D) / (U, V)
    gaussian prior  <-> gaussian posterior    params (Abar, Q) / (U, Sigma)
    lognormal prior <-> lognormal posterior   params (Abar, Q) / (U, Sigma)
    gamma prior     <-> gamma posterior       params (C, D) / (U, V)  shape/rate
    uniform prior   <-> beta posterior        params none / (U, V)

All KL divergences are the true (nonnegative) divergences E_q[log q/p].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .special import digamma, log_beta, log_gamma, trigamma

FAMILIES = ("beta", "gaussian", "lognormal", "gamma", "uniform")

# box-projection bounds used during optimization
PARAM_MIN = 1e-6
PARAM_MAX = 1e6
VAR_MIN = 1e-10
# lognormal parameters live on the log scale; bound them so exp() stays finite
LOGNORMAL_BOUND = 30.0

_POSITIVE_FIRST = {"beta": True, "gaussian": False, "lognormal": False, "gamma": True}


def _check_matrix(x, name, positive):
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN/Inf")
    if positive and np.any(a <= 0):
        raise ValueError(f"{name} must be elementwise positive")
    return a


@dataclass(frozen=True)
class PriorParams:
    family: str
    first: Optional[np.ndarray] = None   # C or Abar; unused for uniform
    second: Optional[np.ndarray] = None  # D or Q; unused for uniform

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family: {self.family}")
        if self.family == "uniform":
            return
        first = _check_matrix(self.first, "first", _POSITIVE_FIRST[self.family])
        second = _check_matrix(self.second, "second", True)
        if first.shape != second.shape:
            raise ValueError("first/second shapes differ")
        object.__setattr__(self, "first", first)
        object.__setattr__(self, "second", second)


@dataclass(frozen=True)
class PosteriorParams:
    family: str
    first: np.ndarray   # U
    second: np.ndarray  # V or Sigma

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family: {self.family}")
        positive_first = self.family in ("beta", "gamma", "uniform")
        first = _check_matrix(self.first, "first", positive_first)
        second = _check_matrix(self.second, "second", False)
        if np.any(second < 0):
            raise ValueError("second must be elementwise nonnegative")
        if first.shape != second.shape:
            raise ValueError("first/second shapes differ")
        object.__setattr__(self, "first", first)
        object.__setattr__(self, "second", second)

    @property
    def shape(self):
        return self.first.shape


# ---------------------------------------------------------------------------
# elementwise moment kernels
# ---------------------------------------------------------------------------

def moments(family: str, first: np.ndarray, second: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Elementwise (mean, variance) of a posterior with the given parameters."""
    u, v = first, second
    if family in ("beta", "uniform"):
        s = u + v
        mu = u / s
        var = u * v / (s * s * (s + 1.0))
    elif family == "gaussian":
        mu = u.copy()
        var = v.copy()
    elif family == "lognormal":
        mu = np.exp(u + 0.5 * v)
        var = (np.exp(v) - 1.0) * np.exp(2.0 * u + v)
    elif family == "gamma":
        mu = u / v
        var = u / (v * v)
    else:
        raise ValueError(f"unknown family: {family}")
    return mu, var


def moment_grads(family: str, first: np.ndarray, second: np.ndarray):
    """Elementwise derivatives (dmu/du, dmu/dv, dvar/du, dvar/dv)."""
    u, v = first, second
    if family in ("beta", "uniform"):
        s = u + v
        s2 = s * s
        denom = s * s2 * (s + 1.0) ** 2
        common = s * (s + 1.0)
        dmu_du = v / s2
        dmu_dv = -u / s2
        dvar_du = v * (common - u * (3.0 * s + 2.0)) / denom
        dvar_dv = u * (common - v * (3.0 * s + 2.0)) / denom
    elif family == "gaussian":
        dmu_du = np.ones_like(u)
        dmu_dv = np.zeros_like(u)
        dvar_du = np.zeros_like(u)
        dvar_dv = np.ones_like(u)
    elif family == "lognormal":
        mu = np.exp(u + 0.5 * v)
        e2 = np.exp(2.0 * u + 2.0 * v)
        e1 = np.exp(2.0 * u + v)
        dmu_du = mu
        dmu_dv = 0.5 * mu
        dvar_du = 2.0 * (e2 - e1)
        dvar_dv = 2.0 * e2 - e1
    elif family == "gamma":
        dmu_du = 1.0 / v
        dmu_dv = -u / (v * v)
        dvar_du = 1.0 / (v * v)
        dvar_dv = -2.0 * u / (v * v * v)
    else:
        raise ValueError(f"unknown family: {family}")
    return dmu_du, dmu_dv, dvar_du, dvar_dv


def posterior_mean(q: PosteriorParams) -> np.ndarray:
    """Elementwise posterior mean E[A]."""
    return moments(q.family, q.first, q.second)[0]


def posterior_correlation(q: PosteriorParams) -> np.ndarray:
    """E[A^T A] = mu^T mu + Diag(column sums of elementwise variances)."""
    mu, var = moments(q.family, q.first, q.second)
    return mu.T @ mu + np.diag(var.sum(axis=0))


# ---------------------------------------------------------------------------
# KL divergences (array kernels, summed over entries by the public wrapper)
# ---------------------------------------------------------------------------

def _kl_beta_entries(u, v, c, d):
    s = u + v
    return (log_beta(c, d) - log_beta(u, v)
            + (u - c) * digamma(u) + (v - d) * digamma(v)
            + (c + d - s) * digamma(s))


def _kl_uniform_entries(u, v):
    # negative differential entropy of Beta(u, v); uniform density is 1 on [0,1]
    s = u + v
    return (-log_beta(u, v) + (u - 1.0) * digamma(u) + (v - 1.0) * digamma(v)
            - (s - 2.0) * digamma(s))


def _kl_gaussian_entries(u, sig, abar, q):
    return 0.5 * (((u - abar) ** 2 + sig) / q + np.log(q) - np.log(sig) - 1.0)


def _kl_gamma_entries(u, v, c, d):
    return ((u - c) * digamma(u) - log_gamma(u) + log_gamma(c)
            + c * (np.log(v) - np.log(d)) + u * (d - v) / v)


def kl_entries(q: PosteriorParams, p: PriorParams) -> np.ndarray:
    """Per-entry KL(q || p)."""
    _check_pairing(q, p)
    u, w = q.first, q.second
    if p.family == "uniform":
        return _kl_uniform_entries(u, w)
    c, d = p.first, p.second
    if q.family == "beta":
        return _kl_beta_entries(u, w, c, d)
    if q.family in ("gaussian", "lognormal"):
        return _kl_gaussian_entries(u, w, c, d)
    if q.family == "gamma":
        return _kl_gamma_entries(u, w, c, d)
    raise ValueError(f"unknown family: {q.family}")


def kl_to_prior(q: PosteriorParams, p: PriorParams) -> float:
    """Total KL(q || p), summed over all entries. Nonnegative."""
    return float(np.sum(kl_entries(q, p)))


def _check_pairing(q: PosteriorParams, p: PriorParams):
    expected = "beta" if p.family == "uniform" else p.family
    if q.family != expected:
        raise ValueError(
            f"posterior family {q.family!r} does not pair with prior {p.family!r}")
    if p.family != "uniform" and q.first.shape != p.first.shape:
        raise ValueError("posterior/prior shapes differ")


def kl_gradients(q: PosteriorParams, p: PriorParams):
    """Gradients of KL(q || p) w.r.t. (q.first, q.second, p.first, p.second).

    For a uniform prior the prior-side gradients are None.
    """
    _check_pairing(q, p)
    u, w = q.first, q.second
    if p.family == "uniform":
        s = u + w
        du = (u - 1.0) * trigamma(u) - (s - 2.0) * trigamma(s)
        dv = (w - 1.0) * trigamma(w) - (s - 2.0) * trigamma(s)
        return du, dv, None, None
    c, d = p.first, p.second
    if q.family == "beta":
        s = u + w
        slack = c + d - s
        du = (u - c) * trigamma(u) + slack * trigamma(s)
        dv = (w - d) * trigamma(w) + slack * trigamma(s)
        dc = digamma(c) - digamma(c + d) - digamma(u) + digamma(s)
        dd = digamma(d) - digamma(c + d) - digamma(w) + digamma(s)
        return du, dv, dc, dd
    if q.family in ("gaussian", "lognormal"):
        du = (u - c) / d
        dsig = 0.5 * (1.0 / d - 1.0 / w)
        dabar = (c - u) / d
        dq = 0.5 * (1.0 / d - ((u - c) ** 2 + w) / (d * d))
        return du, dsig, dabar, dq
    if q.family == "gamma":
        du = (u - c) * trigamma(u) + d / w - 1.0
        dv = c / w - u * d / (w * w)
        dc = digamma(c) - digamma(u) + np.log(w) - np.log(d)
        dd = u / w - c / d
        return du, dv, dc, dd
    raise ValueError(f"unknown family: {q.family}")


def posterior_family_for_prior(prior_family: str) -> str:
    """Variational posterior family paired with each prior family."""
    if prior_family not in FAMILIES:
        raise ValueError(f"unknown family: {prior_family}")
    return "beta" if prior_family == "uniform" else prior_family
