"""Moments and entropy of the Dirichlet variational posterior."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .special import digamma, log_multivariate_beta

ALPHA_MIN = 1e-6
ALPHA_MAX = 1e6


@dataclass(frozen=True)
class DirichletParams:
    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 1 or a.size < 2:
            raise ValueError("alpha must be a vector of length >= 2")
        if np.any(~np.isfinite(a)) or np.any(a <= 0):
            raise ValueError("alpha must be elementwise positive and finite")
        object.__setattr__(self, "alpha", a)


def mean(p: DirichletParams) -> np.ndarray:
    """E[s] = alpha / sum(alpha)."""
    a = p.alpha
    return a / a.sum()


def correlation(p: DirichletParams) -> np.ndarray:
    """E[s s^T] = (Diag(alpha) + alpha alpha^T) / ((1 + a0) a0)."""
    a = p.alpha
    a0 = a.sum()
    return (np.diag(a) + np.outer(a, a)) / ((1.0 + a0) * a0)


def entropy_term(p: DirichletParams) -> float:
    """log B(alpha) - (alpha - 1)^T (psi(alpha) - psi(sum alpha))."""
    a = p.alpha
    a0 = a.sum()
    return float(log_multivariate_beta(a)
                 - np.dot(a - 1.0, digamma(a) - digamma(a0)))


def mean_batch(alpha: np.ndarray) -> np.ndarray:
    """Row-wise Dirichlet means for a (T, N) parameter matrix."""
    alpha = np.asarray(alpha, dtype=float)
    return alpha / alpha.sum(axis=1, keepdims=True)


def correlation_batch(alpha: np.ndarray) -> np.ndarray:
    """(T, N, N) stack of second moments for a (T, N) parameter matrix."""
    alpha = np.asarray(alpha, dtype=float)
    a0 = alpha.sum(axis=1)
    outer = alpha[:, :, None] * alpha[:, None, :]
    t, n = alpha.shape
    diag = np.zeros((t, n, n))
    ii = np.arange(n)
    diag[:, ii, ii] = alpha
    return (diag + outer) / ((1.0 + a0) * a0)[:, None, None]


def entropy_batch(alpha: np.ndarray) -> np.ndarray:
    """Row-wise entropy terms for a (T, N) parameter matrix."""
    from .special import log_gamma

    alpha = np.asarray(alpha, dtype=float)
    a0 = alpha.sum(axis=1)
    log_b = np.sum(log_gamma(alpha), axis=1) - log_gamma(a0)
    return log_b - np.sum((alpha - 1.0) * (digamma(alpha) - digamma(a0)[:, None]), axis=1)
