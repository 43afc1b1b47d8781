"""Core data types, patch partitioning, and pixel-level densities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import DataError
from .special import digamma, log_beta, log_multivariate_beta, trigamma  # noqa: F401

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class HsiCube:
    """An M-band image of T = rows*cols pixels.

    ``values`` has shape (M, T) with column t holding pixel y_t, pixels in
    row-major grid order.
    """

    rows: int
    cols: int
    bands: int
    values: np.ndarray

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.bands < 1:
            raise DataError("cube dimensions must be >= 1")
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.bands, self.rows * self.cols):
            raise DataError(
                f"values shape {v.shape} does not match (bands, rows*cols) ="
                f" ({self.bands}, {self.rows * self.cols})")
        if not np.all(np.isfinite(v)):
            raise DataError("cube contains NaN/Inf values")
        object.__setattr__(self, "values", v)

    @property
    def n_pixels(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class PatchGrid:
    """Partition of pixel indices into K rectangular patches."""

    rows: int
    cols: int
    patch_rows: int
    patch_cols: int
    assignment: np.ndarray  # (T,) pixel index -> patch index in [0, K)
    sizes: np.ndarray       # (K,) per-patch pixel counts

    @property
    def n_patches(self) -> int:
        return int(self.sizes.size)

    def patch_pixels(self) -> List[np.ndarray]:
        """Pixel index arrays per patch, in patch order."""
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.cumsum(self.sizes)[:-1]
        return np.split(order, bounds)


def partition_image(rows: int, cols: int, patch_rows: int, patch_cols: int) -> PatchGrid:
    """Tile a rows x cols grid with non-overlapping patch_rows x patch_cols patches.

    Trailing partial tiles at the right/bottom edges become their own smaller
    patches. Patches are enumerated in row-major tile order.
    """
    if min(rows, cols, patch_rows, patch_cols) < 1:
        raise ValueError("all dimensions must be >= 1")
    if patch_rows > rows or patch_cols > cols:
        raise ValueError("patch size exceeds image size")
    tiles_r = -(-rows // patch_rows)
    tiles_c = -(-cols // patch_cols)
    r_idx = np.arange(rows) // patch_rows
    c_idx = np.arange(cols) // patch_cols
    assignment = (r_idx[:, None] * tiles_c + c_idx[None, :]).ravel()
    sizes = np.bincount(assignment, minlength=tiles_r * tiles_c)
    return PatchGrid(rows, cols, patch_rows, patch_cols,
                     assignment.astype(np.int64), sizes.astype(np.int64))


@dataclass(frozen=True)
class OutlierDensity:
    """Elementwise i.i.d. Gaussian density for outlying pixels."""

    mean: float = 0.0
    variance: float = 9.0
    kind: str = "iid-gaussian"

    def __post_init__(self):
        if self.kind != "iid-gaussian":
            raise ValueError(f"unsupported outlier density kind: {self.kind}")
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ValueError("outlier variance must be positive")


def log_outlier_density(y: np.ndarray, d: OutlierDensity) -> float:
    """Log-density of a pixel under the outlier model, computed in log domain."""
    y = np.asarray(y, dtype=float)
    m = y.size
    resid = y - d.mean
    return float(-0.5 * m * (_LOG_2PI + np.log(d.variance))
                 - 0.5 * np.dot(resid, resid) / d.variance)


def log_outlier_density_batch(Y: np.ndarray, d: OutlierDensity) -> np.ndarray:
    """Per-pixel outlier log-densities for an (M, T) pixel matrix."""
    Y = np.asarray(Y, dtype=float)
    m = Y.shape[0]
    resid = Y - d.mean
    return (-0.5 * m * (_LOG_2PI + np.log(d.variance))
            - 0.5 * np.sum(resid * resid, axis=0) / d.variance)


@dataclass(frozen=True)
class ModelParameters:
    """Model parameters: endmember prior, noise variance, outlier rate/density."""

    prior: "PriorParams"  # forward ref; defined in helen.priors
    noise_var: float
    outlier_rate: float
    outlier_density: OutlierDensity = field(default_factory=OutlierDensity)

    def __post_init__(self):
        if not (np.isfinite(self.noise_var) and self.noise_var > 0):
            raise ValueError("noise_var must be positive")
        if not (0.0 <= self.outlier_rate <= 1.0):
            raise ValueError("outlier_rate must lie in [0, 1]")


@dataclass(frozen=True)
class VariationalState:
    """Variational parameters: per-pixel alpha/omega, per-patch posteriors."""

    alpha: np.ndarray          # (T, N) positive
    omega: np.ndarray          # (T,) in [0, 1]
    patch_posteriors: list     # K PosteriorParams

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        omega = np.asarray(self.omega, dtype=float)
        if np.any(alpha <= 0):
            raise ValueError("alpha must be elementwise positive")
        if np.any(omega < 0) or np.any(omega > 1):
            raise ValueError("omega must lie in [0, 1]")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "omega", omega)


@dataclass(frozen=True)
class UnmixResult:
    """Output of an unmixing run."""

    endmembers: np.ndarray     # (K, M, N) posterior means per patch
    abundances: np.ndarray     # (T, N) simplex vectors
    outlier_scores: np.ndarray  # (T,) responsibilities
    elbo_trace: np.ndarray     # per-sweep objective values
    iterations: int
    model: ModelParameters
    grid: PatchGrid
