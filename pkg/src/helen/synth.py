"""Synthetic hyperspectral-image generator with ground truth.

Pixels follow the block model: each patch gets one endmember matrix obtained
by column-scaling a base matrix and adding a smooth spectral perturbation;
the block-piecewise endmember field is then blurred spatially so spectra
change gradually across block boundaries. Abundances are Dirichlet(1) draws
with a purity rejection cap; optional iid Gaussian noise is set from a target
SNR; optional outlier pixels are replaced by elementwise uniform draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import HsiCube, partition_image
from .errors import ConfigError

_REJECTION_LIMIT = 100_000


@dataclass(frozen=True)
class SynthConfig:
    rows: int
    cols: int
    bands: int
    n_endmembers: int
    patch_rows: int = 5
    patch_cols: int = 5
    snr_db: float = 25.0
    max_purity: float = 0.7
    n_outliers: int = 0
    outlier_range: Tuple[float, float] = (0.0, 2.0)
    blur_kernel_size: int = 11
    blur_sigma: float = 1.0
    ev_scale_range: Tuple[float, float] = (0.8, 1.2)
    ev_perturb_std: float = 0.01
    seed: int = 0
    base_endmembers: Optional[np.ndarray] = None

    def __post_init__(self):
        if min(self.rows, self.cols, self.bands) < 1 or self.n_endmembers < 2:
            raise ConfigError("dimensions must be positive, n_endmembers >= 2")
        if self.blur_kernel_size % 2 != 1 or self.blur_kernel_size < 1:
            raise ConfigError("blur_kernel_size must be odd and positive")
        if not (0.0 < self.max_purity <= 1.0):
            raise ConfigError("max_purity must lie in (0, 1]")
        if self.n_outliers < 0 or self.n_outliers > self.rows * self.cols:
            raise ConfigError("n_outliers out of range")
        if self.outlier_range[0] >= self.outlier_range[1]:
            raise ConfigError("outlier_range must be increasing")
        if self.ev_scale_range[0] > self.ev_scale_range[1]:
            raise ConfigError("ev_scale_range must be non-decreasing")
        if self.ev_perturb_std < 0 or self.blur_sigma <= 0:
            raise ConfigError("ev_perturb_std must be >= 0, blur_sigma > 0")
        if self.base_endmembers is not None:
            a = np.asarray(self.base_endmembers, dtype=float)
            if a.shape != (self.bands, self.n_endmembers):
                raise ConfigError("base_endmembers must have shape (bands, n_endmembers)")
            object.__setattr__(self, "base_endmembers", a)


@dataclass(frozen=True)
class SynthGroundTruth:
    cube: HsiCube
    per_pixel_endmembers: np.ndarray  # (T, M, N)
    abundances: np.ndarray            # (T, N) simplex vectors
    outlier_mask: np.ndarray          # (T,) booleans
    noise_var: float
    base_endmembers: np.ndarray       # (M, N)


def gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    """Symmetric 1-D Gaussian kernel normalized to sum 1."""
    if size % 2 != 1 or size < 1:
        raise ValueError("kernel size must be odd and positive")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    half = size // 2
    x = np.arange(-half, half + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_rows(field: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Reflect-padded 1-D convolution along the last axis."""
    half = kernel.size // 2
    padded = np.pad(field, ((0, 0), (half, half)), mode="reflect")
    out = np.zeros_like(field)
    for j, w in enumerate(kernel):
        out += w * padded[:, j:j + field.shape[1]]
    return out


def gaussian_blur_2d(field: np.ndarray, kernel_size: int, sigma: float) -> np.ndarray:
    """Separable 2-D Gaussian blur with reflect padding."""
    field = np.asarray(field, dtype=float)
    if field.ndim != 2:
        raise ValueError("field must be 2-D")
    kernel = gaussian_kernel_1d(kernel_size, sigma)
    return _convolve_rows(_convolve_rows(field, kernel).T, kernel).T


def _smooth_spectra(bands: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Random smooth reflectance columns: sums of 3-6 Gaussian bumps."""
    grid = np.arange(bands, dtype=float)
    cols = np.zeros((bands, n))
    for j in range(n):
        n_bumps = int(rng.integers(3, 7))
        for _ in range(n_bumps):
            center = rng.uniform(0, bands)
            width = rng.uniform(max(bands / 20.0, 1.0), max(bands / 5.0, 2.0))
            amp = rng.uniform(0.2, 1.0)
            cols[:, j] += amp * np.exp(-0.5 * ((grid - center) / width) ** 2)
    return np.clip(cols, 0.05, 0.95)


def _smooth_perturbation(bands: int, n: int, std: float,
                         rng: np.random.Generator) -> np.ndarray:
    """Band-smoothed Gaussian perturbation rescaled to the requested std."""
    noise = rng.standard_normal((bands, n))
    if std == 0.0:
        return np.zeros((bands, n))
    size = min(11, bands if bands % 2 == 1 else bands - 1)
    kernel = gaussian_kernel_1d(max(size, 1), 2.0)
    smooth = _convolve_rows(noise.T, kernel).T
    scale = smooth.std()
    if scale > 0:
        smooth *= std / scale
    return smooth


def _sample_abundances(t: int, n: int, max_purity: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Dirichlet(1) draws rejecting any with max entry above max_purity."""
    out = np.empty((t, n))
    filled = 0
    failures = 0
    while filled < t:
        batch = rng.dirichlet(np.ones(n), size=max(t - filled, 64))
        ok = batch[np.max(batch, axis=1) <= max_purity]
        if ok.shape[0] == 0:
            failures += batch.shape[0]
            if failures >= _REJECTION_LIMIT:
                raise ConfigError(
                    "abundance rejection sampling failed: max_purity too small")
            continue
        failures = 0
        take = min(ok.shape[0], t - filled)
        out[filled:filled + take] = ok[:take]
        filled += take
    return out


def generate(cfg: SynthConfig) -> SynthGroundTruth:
    """Generate a synthetic cube and its ground truth, deterministic in seed."""
    rng = np.random.default_rng(cfg.seed)
    m, n = cfg.bands, cfg.n_endmembers
    rows, cols = cfg.rows, cfg.cols
    t = rows * cols

    base = (cfg.base_endmembers if cfg.base_endmembers is not None
            else _smooth_spectra(m, n, rng))

    grid = partition_image(rows, cols, cfg.patch_rows, cfg.patch_cols)
    k = grid.n_patches
    scales = rng.uniform(cfg.ev_scale_range[0], cfg.ev_scale_range[1], size=(k, n))
    block_a = np.empty((k, m, n))
    for i in range(k):
        pert = _smooth_perturbation(m, n, cfg.ev_perturb_std, rng)
        block_a[i] = np.clip(base * scales[i][None, :] + pert, 0.001, 0.999)

    # blur the block-piecewise endmember field per (band, endmember) plane
    field = block_a[grid.assignment]                     # (T, M, N)
    per_pixel = np.empty_like(field)
    for b in range(m):
        for j in range(n):
            plane = field[:, b, j].reshape(rows, cols)
            per_pixel[:, b, j] = gaussian_blur_2d(
                plane, cfg.blur_kernel_size, cfg.blur_sigma).ravel()

    s = _sample_abundances(t, n, cfg.max_purity, rng)
    clean = np.einsum("tmn,tn->mt", per_pixel, s)

    if math.isinf(cfg.snr_db):
        noise_var = 0.0
        noisy = clean.copy()
    else:
        noise_var = float(np.mean(clean ** 2) * 10.0 ** (-cfg.snr_db / 10.0))
        noisy = clean + math.sqrt(noise_var) * rng.standard_normal(clean.shape)

    mask = np.zeros(t, dtype=bool)
    if cfg.n_outliers > 0:
        idx = rng.choice(t, size=cfg.n_outliers, replace=False)
        mask[idx] = True
        lo, hi = cfg.outlier_range
        noisy[:, idx] = rng.uniform(lo, hi, size=(m, cfg.n_outliers))

    cube = HsiCube(rows=rows, cols=cols, bands=m, values=noisy)
    return SynthGroundTruth(cube=cube, per_pixel_endmembers=per_pixel,
                            abundances=s, outlier_mask=mask,
                            noise_var=noise_var, base_endmembers=base)
