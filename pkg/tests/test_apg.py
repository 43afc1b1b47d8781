"""Accelerated projected gradient ascent on box-constrained objectives."""

import numpy as np
import pytest

from helen import apg
from helen.apg import ApgConfig, BoxProjection
from helen.errors import NumericalError


def _quadratic(center):
    def fg(x):
        d = x - center
        return float(-np.dot(d, d)), -2.0 * d
    return fg


def test_concave_quadratic_converges():
    cfg = ApgConfig(max_iters=50)
    x, val, iters = apg.maximize(_quadratic(np.array([3.0])), np.array([0.5]),
                                 BoxProjection(1e-6, 1e6), cfg)
    assert abs(x[0] - 3.0) < 1e-6
    assert iters <= 50


def test_active_box_constraint():
    cfg = ApgConfig(max_iters=50)
    x, val, _ = apg.maximize(_quadratic(np.array([3.0])), np.array([0.5]),
                             BoxProjection(1e-6, 2.0), cfg)
    assert x[0] == pytest.approx(2.0, abs=1e-9)


def test_monotone_ascent_guarantee():
    rng = np.random.default_rng(0)
    cfg = ApgConfig(max_iters=10)
    for _ in range(20):
        center = rng.uniform(-2, 2, 4)
        start = rng.uniform(0.1, 1.0, 4)
        fg = _quadratic(center)
        f0 = fg(np.clip(start, 1e-6, 1e6))[0]
        x, val, _ = apg.maximize(fg, start, BoxProjection(1e-6, 1e6), cfg)
        assert val >= f0 - 1e-12
        assert np.all(x >= 1e-6) and np.all(x <= 1e6)


def test_gaussian_subproblem_matches_linear_solve():
    """Fixed-step mode on the quadratic patch-mean objective reaches the
    stationary point of the linear system when it is interior."""
    rng = np.random.default_rng(1)
    m, n = 3, 2
    sigma2 = 0.25
    w = rng.uniform(-1, 1, (n, n))
    rs = w @ w.T + n * np.eye(n)
    q = rng.uniform(0.5, 2.0, (m, n))
    abar = rng.uniform(0.3, 0.7, (m, n))
    # choose the data term so the stationary point is a known interior matrix
    u_star = rng.uniform(0.3, 1.0, (m, n))
    ys = (u_star @ rs).T + sigma2 * ((u_star - abar) / q).T

    def fg(z):
        u = z.reshape(m, n)
        val = (np.einsum("mn,nm->", u, ys)
               - 0.5 * np.einsum("mi,ij,mj->", u, rs, u)) / sigma2
        val -= 0.5 * float(np.sum((u - abar) ** 2 / q))
        grad = (ys.T - u @ rs) / sigma2 - (u - abar) / q
        return float(val), grad.ravel()

    # closed-form row-wise solution of the stationarity system
    expect = np.empty((m, n))
    for i in range(m):
        lhs = rs / sigma2 + np.diag(1.0 / q[i])
        rhs = ys[:, i] / sigma2 + abar[i] / q[i]
        expect[i] = np.linalg.solve(lhs, rhs)
    assert np.allclose(expect, u_star, atol=1e-9)
    assert np.all(expect > 0)

    lip = apg.spectral_norm(rs) / sigma2 + float(np.linalg.norm(1.0 / q))
    cfg = ApgConfig(max_iters=400, mode="fixed-lipschitz")
    z, _, _ = apg.maximize(fg, np.full(m * n, 0.5), BoxProjection(1e-6, 1e6),
                           cfg, lipschitz=lip)
    assert np.max(np.abs(z.reshape(m, n) - expect)) < 1e-6


def test_fixed_step_geometric_convergence():
    center = np.array([3.0, 1.0, 2.0])
    fg = _quadratic(center)
    lip = 2.0
    errors = []
    x = np.array([0.5, 0.5, 0.5])
    for iters in (10, 20, 30, 40):
        cfg = ApgConfig(max_iters=iters, mode="fixed-lipschitz")
        z, _, _ = apg.maximize(fg, x, BoxProjection(1e-6, 1e6), cfg,
                               lipschitz=lip)
        errors.append(float(np.linalg.norm(z - center)))
    for a, b in zip(errors, errors[1:]):
        assert b <= max(a / 2.0, 1e-12)


def test_fixed_mode_requires_lipschitz():
    cfg = ApgConfig(mode="fixed-lipschitz")
    with pytest.raises(ValueError):
        apg.maximize(_quadratic(np.array([1.0])), np.array([0.5]),
                     BoxProjection(1e-6, 1e6), cfg)


def test_non_finite_objective_raises():
    def fg(x):
        return float("nan"), np.zeros_like(x)

    with pytest.raises(NumericalError):
        apg.maximize(fg, np.array([0.5]), BoxProjection(1e-6, 1e6), ApgConfig())


def test_config_validation():
    with pytest.raises(ValueError):
        ApgConfig(max_iters=0)
    with pytest.raises(ValueError):
        ApgConfig(backtrack_shrink=1.0)
    with pytest.raises(ValueError):
        ApgConfig(mode="newton")


def test_spectral_norm_matches_numpy():
    rng = np.random.default_rng(2)
    for _ in range(10):
        a = rng.standard_normal((5, 4))
        assert apg.spectral_norm(a) == pytest.approx(
            float(np.linalg.norm(a, 2)), rel=1e-8)


def test_separable_solves_independent_quadratics():
    rng = np.random.default_rng(3)
    b, d = 12, 3
    centers = rng.uniform(0.5, 4.0, (b, d))

    def fg(x, idx=None):
        c = centers if idx is None else centers[idx]
        diff = x - c
        return -np.sum(diff * diff, axis=1), -2.0 * diff

    cfg = ApgConfig(max_iters=60)
    x, vals, _ = apg.maximize_separable(fg, np.full((b, d), 0.2),
                                        BoxProjection(1e-6, 1e6), cfg)
    assert np.max(np.abs(x - centers)) < 1e-5
    assert np.all(vals > -1e-9)


def test_separable_badly_scaled_unit_does_not_stall_others():
    """One unit with a huge gradient must not force tiny steps on the rest."""
    rng = np.random.default_rng(4)
    b, d = 8, 2
    centers = rng.uniform(1.0, 3.0, (b, d))
    scale = np.ones(b)
    scale[0] = 1e8  # unit 0 has a gradient 8 orders of magnitude larger

    def fg(x, idx=None):
        c = centers if idx is None else centers[idx]
        s = scale if idx is None else scale[idx]
        diff = x - c
        return -s * np.sum(diff * diff, axis=1), -2.0 * s[:, None] * diff

    cfg = ApgConfig(max_iters=60)
    x, _, _ = apg.maximize_separable(fg, np.full((b, d), 0.2),
                                     BoxProjection(1e-6, 1e6), cfg)
    assert np.max(np.abs(x[1:] - centers[1:])) < 1e-4


def test_separable_per_unit_ascent_guarantee():
    rng = np.random.default_rng(5)
    b, d = 6, 2
    centers = rng.uniform(0.5, 3.0, (b, d))

    def fg(x, idx=None):
        c = centers if idx is None else centers[idx]
        diff = x - c
        return -np.sum(diff * diff, axis=1), -2.0 * diff

    start = rng.uniform(0.1, 1.0, (b, d))
    f0 = fg(np.clip(start, 1e-6, 1e6))[0]
    cfg = ApgConfig(max_iters=5)
    _, vals, _ = apg.maximize_separable(fg, start, BoxProjection(1e-6, 1e6), cfg)
    assert np.all(vals >= f0 - 1e-12)
