import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bayesmm.diagnostics import checkpoint, mean_class_kl, median_bandwidth, mmd_rbf
from bayesmm.errors import InvalidInputError
from bayesmm.gaussian import GaussianModel, gaussian_kl

from conftest import random_spd


def naive_mmd(a, b, sigma):
    def k(u, v):
        return math.exp(-float((u - v) @ (u - v)) / (2 * sigma * sigma))
    aa = sum(k(u, v) for u in a for v in a) / len(a) ** 2
    bb = sum(k(u, v) for u in b for v in b) / len(b) ** 2
    ab = sum(k(u, v) for u in a for v in b) / (len(a) * len(b))
    return math.sqrt(max(aa + bb - 2 * ab, 0.0))


def test_kl_identical_is_zero(rng):
    gs = [GaussianModel(rng.standard_normal(3), random_spd(rng, 3)) for _ in range(3)]
    assert mean_class_kl(gs, gs) == 0.0


def test_kl_two_class_shift():
    mu = np.array([1.0, 2.0])
    est = [GaussianModel(mu, np.eye(2)), GaussianModel(np.zeros(2), np.eye(2))]
    ref = [GaussianModel(np.zeros(2), np.eye(2))] * 2
    assert mean_class_kl(est, ref) == pytest.approx(0.25 * mu @ mu, rel=1e-14)


def test_kl_matches_loop(rng):
    est = [GaussianModel(rng.standard_normal(3), random_spd(rng, 3)) for _ in range(4)]
    ref = [GaussianModel(rng.standard_normal(3), random_spd(rng, 3)) for _ in range(4)]
    assert mean_class_kl(est, ref) == pytest.approx(sum(gaussian_kl(p, q) for p, q in zip(est, ref)) / 4, abs=1e-12)
    with pytest.raises(InvalidInputError):
        mean_class_kl(est, ref[:3])


def test_mmd_identical_sets_is_zero(rng):
    a = rng.standard_normal((10, 3))
    assert mmd_rbf(a, a) == 0.0


def test_mmd_single_points():
    v = np.array([0.3, -0.4])
    assert mmd_rbf(np.zeros((1, 2)), v[None, :], bandwidth=0.7) == pytest.approx(
        math.sqrt(2 - 2 * math.exp(-(v @ v) / (2 * 0.49))), rel=1e-14)


def test_mmd_matches_double_loop(rng):
    for _ in range(5):
        a, b = rng.standard_normal((20, 4)), rng.standard_normal((20, 4)) + 0.5
        pooled = np.vstack([a, b])
        dist = sorted(np.linalg.norm(u - v) for i, u in enumerate(pooled) for v in pooled[i + 1:])
        sigma = dist[(len(dist) - 1) // 2]
        assert median_bandwidth(pooled) == (pytest.approx(sigma, rel=1e-14), False)
        assert abs(mmd_rbf(a, b) - naive_mmd(a, b, sigma)) < 1e-12
        assert abs(mmd_rbf(a, b, bandwidth=1.3) - naive_mmd(a, b, 1.3)) < 1e-12


def test_median_is_lower_median():
    # distances 1, 2, 3 between collinear points 0, 1, 3 -> odd count, middle 2
    assert median_bandwidth(np.array([[0.0], [1.0], [3.0]]))[0] == 2.0
    # four points -> six distances 1,1,1,2,2,3 (sorted); lower median is the 3rd
    assert median_bandwidth(np.array([[0.0], [1.0], [2.0], [3.0]]))[0] == 1.0


def test_mmd_degenerate_bandwidth_fallback():
    a = np.zeros((3, 2))
    val, flag = mmd_rbf(a, a.copy(), return_flag=True)
    assert val == 0.0 and flag
    b = np.ones((1, 2))
    val, flag = mmd_rbf(np.zeros((3, 2)), np.zeros((3, 2)), return_flag=True)
    assert flag
    assert mmd_rbf(np.zeros((1, 2)), b, bandwidth=1.0) == pytest.approx(math.sqrt(2 - 2 * math.exp(-1.0)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_mmd_symmetric_order_invariant_nonnegative(n, m, d, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((n, d)), rng.standard_normal((m, d))
    v = mmd_rbf(a, b)
    assert v >= 0.0
    assert mmd_rbf(b, a) == pytest.approx(v, abs=1e-12)
    assert mmd_rbf(a[rng.permutation(n)], b[rng.permutation(m)]) == pytest.approx(v, abs=1e-12)


def test_mmd_rejects():
    with pytest.raises(InvalidInputError):
        mmd_rbf(np.zeros((0, 2)), np.zeros((1, 2)))
    with pytest.raises(InvalidInputError):
        mmd_rbf(np.zeros((1, 2)), np.zeros((1, 3)))
    with pytest.raises(InvalidInputError):
        mmd_rbf(np.zeros((1, 2)), np.ones((1, 2)), bandwidth=0.0)
    with pytest.raises(InvalidInputError):
        mmd_rbf(np.zeros((1, 2)), np.ones((1, 2)), bandwidth="silverman")


def test_checkpoint_fields(rng):
    gs = [GaussianModel(np.zeros(2), np.eye(2))] * 2
    c = checkpoint(0, gs, gs, rng.standard_normal((5, 2)), rng.standard_normal((5, 2)), None)
    assert c.step_index == 0 and c.mean_kl == 0.0 and c.mmd >= 0
    bare = checkpoint(10, None, accuracy_so_far=0.5)
    assert bare.as_dict() == {"step": 10, "mean_kl": None, "mmd": None, "accuracy_so_far": 0.5,
                              "bandwidth_fallback": False}
