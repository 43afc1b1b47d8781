"""Dirichlet posterior moments and entropy."""

import numpy as np
import pytest

from helen import dirichlet
from helen.dirichlet import DirichletParams


def test_mean_examples():
    assert np.allclose(dirichlet.mean(DirichletParams(np.ones(3))), 1.0 / 3.0)
    assert np.allclose(dirichlet.mean(DirichletParams(np.array([2.0, 1.0, 1.0]))),
                       [0.5, 0.25, 0.25])
    assert np.allclose(dirichlet.mean(DirichletParams(np.array([0.3, 0.7]))),
                       [0.3, 0.7])


def test_mean_sums_to_one():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.uniform(0.1, 50.0, size=rng.integers(2, 7))
        mu = dirichlet.mean(DirichletParams(a))
        assert abs(mu.sum() - 1.0) < 1e-14
        assert np.all(mu > 0)


def test_correlation_uniform_simplex():
    c = dirichlet.correlation(DirichletParams(np.ones(3)))
    expect = np.full((3, 3), 1.0 / 12.0)
    np.fill_diagonal(expect, 1.0 / 6.0)
    assert np.allclose(c, expect, atol=1e-14)


def test_correlation_hand_example():
    c = dirichlet.correlation(DirichletParams(np.array([2.0, 3.0])))
    expect = np.array([[0.2, 0.2], [0.2, 0.4]])
    assert np.allclose(c, expect, atol=1e-14)


def test_correlation_concentration_limit():
    c = dirichlet.correlation(DirichletParams(np.array([1e7, 1e7])))
    assert np.allclose(c, 0.25, atol=1e-6)


def test_correlation_row_sum_identity():
    rng = np.random.default_rng(1)
    for _ in range(100):
        a = rng.uniform(0.1, 50.0, size=rng.integers(2, 8))
        p = DirichletParams(a)
        assert np.allclose(dirichlet.correlation(p) @ np.ones(a.size),
                           dirichlet.mean(p), atol=1e-12)


def test_correlation_positive_semidefinite():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a = rng.uniform(0.1, 50.0, size=rng.integers(2, 8))
        w = np.linalg.eigvalsh(dirichlet.correlation(DirichletParams(a)))
        assert w.min() > -1e-12


def test_entropy_examples():
    assert dirichlet.entropy_term(DirichletParams(np.ones(2))) == pytest.approx(
        0.0, abs=1e-13)
    assert dirichlet.entropy_term(DirichletParams(np.ones(3))) == pytest.approx(
        np.log(0.5), abs=1e-12)


def test_entropy_alpha22_formula():
    from helen.special import digamma

    val = dirichlet.entropy_term(DirichletParams(np.array([2.0, 2.0])))
    expect = np.log(1.0 / 6.0) - 2.0 * (digamma(2.0) - digamma(4.0))
    assert val == pytest.approx(expect, abs=1e-12)


def test_entropy_matches_monte_carlo():
    rng = np.random.default_rng(3)
    for _ in range(5):
        a = rng.uniform(0.5, 8.0, size=3)
        p = DirichletParams(a)
        samples = rng.dirichlet(a, size=200_000)
        from scipy.stats import dirichlet as sp_dir

        logq = sp_dir.logpdf(samples.T, a)
        est = -logq.mean()
        se = logq.std() / np.sqrt(logq.size)
        assert abs(dirichlet.entropy_term(p) - est) < 3.0 * se + 1e-9


def test_batch_helpers_match_scalar():
    rng = np.random.default_rng(4)
    alpha = rng.uniform(0.2, 20.0, size=(12, 4))
    mu = dirichlet.mean_batch(alpha)
    cor = dirichlet.correlation_batch(alpha)
    ent = dirichlet.entropy_batch(alpha)
    for t in range(12):
        p = DirichletParams(alpha[t])
        assert np.allclose(mu[t], dirichlet.mean(p), atol=1e-14)
        assert np.allclose(cor[t], dirichlet.correlation(p), atol=1e-14)
        assert ent[t] == pytest.approx(dirichlet.entropy_term(p), abs=1e-10)


def test_params_validation():
    with pytest.raises(ValueError):
        DirichletParams(np.array([1.0]))
    with pytest.raises(ValueError):
        DirichletParams(np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        DirichletParams(np.array([1.0, np.inf]))
