import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import trapezoid

from bayesmm.errors import InvalidInputError
from bayesmm.gaussian import (GaussianModel, gaussian_kl, log_density, log_sum_exp, regularize_scatter,
                              stack_log_densities)

from conftest import random_spd


def naive_log_density(mean, cov, x):
    # explicit inverse and determinant
    d = mean.size
    r = x - mean
    return -0.5 * (d * math.log(2 * math.pi) + math.log(np.linalg.det(cov)) + r @ np.linalg.inv(cov) @ r)


# -- regularize_scatter ----------------------------------------------------

def test_regularize_zero_trace_fallback():
    np.testing.assert_array_equal(regularize_scatter(np.zeros((3, 3)), 1e-3), 1e-3 * np.eye(3))


def test_regularize_identity():
    np.testing.assert_allclose(regularize_scatter(np.eye(4), 1e-3), (1 + 1e-3) * np.eye(4), rtol=0, atol=1e-15)


def test_regularize_rank_one():
    v = np.array([1.0, 1.0])
    R = regularize_scatter(np.outer(v, v), 0.5)
    np.testing.assert_allclose(R, np.outer(v, v) + 0.5 * np.eye(2))
    assert np.linalg.eigvalsh(R)[0] == pytest.approx(0.5)


def test_regularize_diagonal_input():
    np.testing.assert_allclose(regularize_scatter(np.array([1.0, 3.0]), 0.5), [2.0, 4.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.floats(0, 2), st.integers(0, 2**32 - 1))
def test_regularize_shift_has_equal_eigenvalues(d, rel_eps, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, d))
    S = A @ A.T
    ev = np.linalg.eigvalsh(regularize_scatter(S, rel_eps) - S)
    eps = rel_eps * np.trace(S) / d
    np.testing.assert_allclose(ev, eps, atol=1e-12 * (1 + np.trace(S)))


@pytest.mark.parametrize("bad", [np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones((2, 3)), np.array([[np.nan]])])
def test_regularize_rejects(bad):
    with pytest.raises(InvalidInputError):
        regularize_scatter(bad)


def test_regularize_rejects_negative_eps():
    with pytest.raises(InvalidInputError):
        regularize_scatter(np.eye(2), -1.0)


# -- GaussianModel ----------------------------------------------------------

def test_model_rejects_non_spd_and_shape_mismatch():
    with pytest.raises(InvalidInputError):
        GaussianModel(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(InvalidInputError):
        GaussianModel(np.zeros(3), np.eye(2))
    with pytest.raises(InvalidInputError):
        GaussianModel(np.zeros(2), np.array([1.0, 0.0]))
    with pytest.raises(InvalidInputError):
        GaussianModel([np.inf, 0.0], np.eye(2))


def test_model_is_immutable_and_copies_input():
    m = np.zeros(2)
    g = GaussianModel(m, np.eye(2))
    m[0] = 5.0
    assert g.mean[0] == 0.0
    with pytest.raises(AttributeError):
        g.mean = m
    with pytest.raises(ValueError):
        g.mean[0] = 1.0


# -- log_density -----------------------------------------------------------

def test_log_density_standard_normal_at_mean():
    assert log_density(GaussianModel(np.zeros(2), np.eye(2)), np.zeros(2)) == pytest.approx(-1.8378770664, abs=1e-10)


def test_log_density_1d():
    assert log_density(GaussianModel([0.0], [[4.0]]), [2.0]) == pytest.approx(-2.1120857137, abs=1e-10)


def test_log_density_matches_naive(rng):
    for _ in range(20):
        cov = random_spd(rng, 5)
        mean, x = rng.standard_normal(5), rng.standard_normal(5)
        assert log_density(GaussianModel(mean, cov), x) == pytest.approx(naive_log_density(mean, cov, x), abs=1e-10)


def test_log_density_diagonal_matches_full(rng):
    var = rng.uniform(0.2, 3, 4)
    mean, x = rng.standard_normal(4), rng.standard_normal(4)
    assert log_density(GaussianModel(mean, var), x) == pytest.approx(
        log_density(GaussianModel(mean, np.diag(var)), x), abs=1e-12)


def test_log_density_integrates_to_one_1d():
    g = GaussianModel([0.3], [[0.7]])
    s = math.sqrt(0.7)
    t = np.linspace(0.3 - 8 * s, 0.3 + 8 * s, 4001)
    p = np.exp([log_density(g, [v]) for v in t])
    assert trapezoid(p, t) == pytest.approx(1.0, abs=1e-6)


def test_log_density_integrates_to_one_2d():
    cov = np.array([[0.5, 0.2], [0.2, 0.3]])
    g = GaussianModel([0.1, -0.2], cov)
    s = np.sqrt(np.diag(cov))
    u = np.linspace(0.1 - 8 * s[0], 0.1 + 8 * s[0], 401)
    v = np.linspace(-0.2 - 8 * s[1], -0.2 + 8 * s[1], 401)
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.stack([U.ravel(), V.ravel()], axis=1)
    r = g.whiten(pts - g.mean)
    dens = np.exp(-0.5 * (2 * math.log(2 * math.pi) + g.logdet + np.sum(r * r, axis=1))).reshape(U.shape)
    assert trapezoid(trapezoid(dens, v, axis=1), u) == pytest.approx(1.0, abs=1e-6)


def test_log_density_permutation_invariant(rng):
    cov = random_spd(rng, 5)
    mean, x = rng.standard_normal(5), rng.standard_normal(5)
    p = rng.permutation(5)
    a = log_density(GaussianModel(mean, cov), x)
    b = log_density(GaussianModel(mean[p], cov[np.ix_(p, p)]), x[p])
    assert a == pytest.approx(b, abs=1e-12)


def test_stack_log_densities_matches_single(rng):
    gs = [GaussianModel(rng.standard_normal(3), random_spd(rng, 3)) for _ in range(4)]
    x = rng.standard_normal(3)
    np.testing.assert_allclose(stack_log_densities(x, gs), [log_density(g, x) for g in gs], rtol=1e-13)
    with pytest.raises(InvalidInputError):
        stack_log_densities(x, gs + [GaussianModel(np.zeros(3), np.ones(3))])


# -- gaussian_kl -----------------------------------------------------------

def test_kl_identity(rng):
    g = GaussianModel(rng.standard_normal(3), random_spd(rng, 3))
    assert gaussian_kl(g, g) == 0.0


@pytest.mark.parametrize("d", [1, 3, 7])
def test_kl_mean_shift(d, rng):
    mu = rng.standard_normal(d)
    assert gaussian_kl(GaussianModel(np.zeros(d), np.eye(d)), GaussianModel(mu, np.eye(d))) == pytest.approx(
        0.5 * mu @ mu, rel=1e-12)


def test_kl_diagonal_matches_full(rng):
    a, b = rng.uniform(0.2, 2, 4), rng.uniform(0.2, 2, 4)
    m1, m2 = rng.standard_normal(4), rng.standard_normal(4)
    full = gaussian_kl(GaussianModel(m1, np.diag(a)), GaussianModel(m2, np.diag(b)))
    assert gaussian_kl(GaussianModel(m1, a), GaussianModel(m2, b)) == pytest.approx(full, rel=1e-12)
    assert gaussian_kl(GaussianModel(m1, a), GaussianModel(m2, np.diag(b))) == pytest.approx(full, rel=1e-12)
    assert gaussian_kl(GaussianModel(m1, np.diag(a)), GaussianModel(m2, b)) == pytest.approx(full, rel=1e-12)


def test_kl_matches_naive_formula(rng):
    for _ in range(10):
        P, Q = random_spd(rng, 4), random_spd(rng, 4)
        m1, m2 = rng.standard_normal(4), rng.standard_normal(4)
        Qi = np.linalg.inv(Q)
        dm = m2 - m1
        ref = 0.5 * (np.trace(Qi @ P) + dm @ Qi @ dm - 4 + math.log(np.linalg.det(Q) / np.linalg.det(P)))
        assert gaussian_kl(GaussianModel(m1, P), GaussianModel(m2, Q)) == pytest.approx(ref, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_kl_nonnegative(d, seed):
    rng = np.random.default_rng(seed)
    p = GaussianModel(rng.standard_normal(d), random_spd(rng, d))
    q = GaussianModel(rng.standard_normal(d), random_spd(rng, d))
    assert gaussian_kl(p, q) >= 0.0


# -- log_sum_exp -----------------------------------------------------------

def test_lse_examples():
    assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)
    assert log_sum_exp([-1000.0, -1000.0]) == pytest.approx(-1000 + math.log(2), abs=1e-12)
    assert log_sum_exp([3.5]) == 3.5
    assert log_sum_exp([-np.inf, -np.inf]) == -np.inf
    assert log_sum_exp([-np.inf, 0.0]) == 0.0


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 10, elements=st.floats(-50, 50)))
def test_lse_matches_naive(v):
    assert log_sum_exp(v) == pytest.approx(math.log(np.sum(np.exp(v))), rel=1e-12)


def test_lse_rejects():
    with pytest.raises(InvalidInputError):
        log_sum_exp([])
    with pytest.raises(InvalidInputError):
        log_sum_exp([0.0, np.nan])
