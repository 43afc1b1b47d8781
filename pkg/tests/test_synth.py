"""Synthetic generator: blur kernel, abundances, SNR, outliers, determinism."""

import numpy as np
import pytest

from helen.errors import ConfigError
from helen.synth import (SynthConfig, gaussian_blur_2d, gaussian_kernel_1d,
                         generate)


def test_kernel_normalized_and_symmetric():
    k = gaussian_kernel_1d(11, 1.0)
    assert k.size == 11
    assert k.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(k, k[::-1])
    with pytest.raises(ValueError):
        gaussian_kernel_1d(10, 1.0)
    with pytest.raises(ValueError):
        gaussian_kernel_1d(11, 0.0)


def test_blur_constant_field_unchanged():
    field = np.full((9, 13), 0.37)
    out = gaussian_blur_2d(field, 5, 1.0)
    assert np.max(np.abs(out - 0.37)) < 1e-12


def test_blur_impulse_symmetric():
    field = np.zeros((21, 21))
    field[10, 10] = 1.0
    out = gaussian_blur_2d(field, 7, 1.0)
    assert np.allclose(out, out[::-1, :], atol=1e-12)
    assert np.allclose(out, out[:, ::-1], atol=1e-12)
    assert np.allclose(out, out.T, atol=1e-12)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


def test_blur_matches_direct_convolution():
    rng = np.random.default_rng(0)
    field = rng.uniform(0, 1, (20, 20))
    size, sigma = 5, 1.3
    kernel = gaussian_kernel_1d(size, sigma)
    k2 = np.outer(kernel, kernel)
    half = size // 2
    padded = np.pad(field, half, mode="reflect")
    direct = np.zeros_like(field)
    for i in range(field.shape[0]):
        for j in range(field.shape[1]):
            direct[i, j] = np.sum(padded[i:i + size, j:j + size] * k2)
    assert np.max(np.abs(gaussian_blur_2d(field, size, sigma) - direct)) < 1e-12


def _base_cfg(**kw):
    defaults = dict(rows=12, cols=12, bands=16, n_endmembers=3, patch_rows=4,
                    patch_cols=4, seed=0)
    defaults.update(kw)
    return SynthConfig(**defaults)


def test_generate_shapes_and_purity():
    cfg = _base_cfg()
    t = generate(cfg)
    T = cfg.rows * cfg.cols
    assert t.cube.values.shape == (cfg.bands, T)
    assert t.per_pixel_endmembers.shape == (T, cfg.bands, cfg.n_endmembers)
    assert t.abundances.shape == (T, cfg.n_endmembers)
    assert np.max(np.abs(t.abundances.sum(axis=1) - 1.0)) < 1e-12
    assert np.max(t.abundances) <= cfg.max_purity + 1e-12
    assert t.outlier_mask.sum() == 0


def test_generate_ev_free_noiseless_is_exact():
    cfg = _base_cfg(snr_db=float("inf"), ev_scale_range=(1.0, 1.0),
                    ev_perturb_std=0.0)
    t = generate(cfg)
    # all per-pixel endmember matrices identical, cube exactly A s
    assert np.max(np.abs(t.per_pixel_endmembers
                         - t.per_pixel_endmembers[0])) < 1e-12
    recon = np.einsum("mn,tn->mt", t.per_pixel_endmembers[0], t.abundances)
    assert np.max(np.abs(t.cube.values - recon)) < 1e-12
    assert t.noise_var == 0.0


def test_generate_snr_within_band():
    cfg = _base_cfg(rows=40, cols=40, bands=30, snr_db=25.0)
    t = generate(cfg)
    clean = np.einsum("tmn,tn->mt", t.per_pixel_endmembers, t.abundances)
    noise = t.cube.values - clean
    snr = 10.0 * np.log10(np.mean(clean ** 2) / np.mean(noise ** 2))
    assert abs(snr - 25.0) < 0.2


def test_generate_outlier_count_and_range():
    cfg = _base_cfg(n_outliers=10, outlier_range=(0.0, 2.0))
    t = generate(cfg)
    assert int(t.outlier_mask.sum()) == 10
    out_vals = t.cube.values[:, t.outlier_mask]
    assert out_vals.min() >= 0.0 and out_vals.max() <= 2.0


def test_generate_seed_determinism_bitwise():
    cfg = _base_cfg(n_outliers=5)
    t1 = generate(cfg)
    t2 = generate(cfg)
    assert np.array_equal(t1.cube.values, t2.cube.values)
    assert np.array_equal(t1.abundances, t2.abundances)
    assert np.array_equal(t1.outlier_mask, t2.outlier_mask)
    t3 = generate(_base_cfg(n_outliers=5, seed=1))
    assert not np.array_equal(t1.cube.values, t3.cube.values)


def test_generate_user_base_endmembers():
    rng = np.random.default_rng(1)
    A = rng.uniform(0.1, 0.9, (16, 3))
    cfg = _base_cfg(base_endmembers=A, snr_db=float("inf"),
                    ev_scale_range=(1.0, 1.0), ev_perturb_std=0.0)
    t = generate(cfg)
    assert np.allclose(t.base_endmembers, A)
    assert np.allclose(t.per_pixel_endmembers[0], A, atol=1e-12)


def test_rejection_sampling_failure_is_config_error():
    # max_purity below 1/N is unsatisfiable for simplex vectors
    cfg = _base_cfg(max_purity=0.2)
    with pytest.raises(ConfigError):
        generate(cfg)


def test_config_validation():
    with pytest.raises(ConfigError):
        _base_cfg(blur_kernel_size=10)
    with pytest.raises(ConfigError):
        _base_cfg(max_purity=0.0)
    with pytest.raises(ConfigError):
        _base_cfg(n_outliers=1000)
    with pytest.raises(ConfigError):
        _base_cfg(outlier_range=(2.0, 1.0))
    with pytest.raises(ConfigError):
        _base_cfg(base_endmembers=np.ones((2, 2)))
