import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from advot.kernel import adaptive_bandwidths, k_eval, k_grad_y, k_hess_y, knn_distances

E_HALF = np.exp(-0.5)


def fd_grad(f, y, h=1e-5):
    out = np.empty_like(y)
    for a in range(y.size):
        e = np.zeros_like(y)
        e[a] = h
        out[a] = (f(y + e) - f(y - e)) / (2 * h)
    return out


def fd_jac(f, y, h=1e-5):
    return np.stack([fd_grad(lambda v: f(v)[i], y, h) for i in range(y.size)])


def test_k_eval_closed_forms():
    assert k_eval([0.3, 0.1], [0.3, 0.1], 0.7) == 1.0
    assert k_eval([1.0, 0.0], [0.0, 0.0], 1.0) == pytest.approx(0.606531, abs=1e-6)
    assert k_eval([0.2], [0.0], 0.2) == pytest.approx(E_HALF)


def test_k_grad_closed_forms():
    assert np.all(k_grad_y([1.0, 2.0], [1.0, 2.0], 0.5) == 0)
    assert k_grad_y([1.0], [0.0], 1.0)[0] == pytest.approx(0.6065, abs=1e-4)


def test_k_hess_closed_forms():
    assert np.array_equal(k_hess_y([0.0, 0.0], [0.0, 0.0], 1.0), -np.eye(2))
    assert k_hess_y([1.0], [0.0], 1.0)[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_non_positive_bandwidth_rejected():
    for f in (k_eval, k_grad_y, k_hess_y):
        with pytest.raises(ValueError):
            f([0.0], [1.0], 0.0)


def test_broadcasting_over_leading_axes():
    rng = np.random.default_rng(0)
    b = rng.normal(size=(4, 1, 3))
    y = rng.normal(size=(1, 5, 3))
    assert k_eval(b, y, 0.5).shape == (4, 5)
    assert k_grad_y(b, y, 0.5).shape == (4, 5, 3)
    assert k_hess_y(b, y, 0.5).shape == (4, 5, 3, 3)
    assert k_eval(b[2, 0], y[0, 3], 0.5) == k_eval(b, y, 0.5)[2, 3]


@pytest.mark.parametrize("d", [1, 2, 5, 10])
def test_gradient_and_hessian_match_fd(d):
    rng = np.random.default_rng(d)
    for _ in range(100):
        sigma = rng.uniform(0.3, 2.0)
        b = rng.normal(size=d)
        y = b + sigma * rng.normal(size=d) / np.sqrt(d)
        g = k_grad_y(b, y, sigma)
        assert np.allclose(g, fd_grad(lambda v: k_eval(b, v, sigma), y), atol=1e-6)
        h = k_hess_y(b, y, sigma)
        assert np.allclose(h, fd_jac(lambda v: k_grad_y(b, v, sigma), y), atol=1e-5)


finite = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(float, 3, elements=finite), arrays(float, 3, elements=finite),
       st.floats(0.05, 5.0))
def test_kernel_bounds_and_symmetry(b, y, sigma):
    k = k_eval(b, y, sigma)
    assert 0.0 <= k <= 1.0
    assert k == k_eval(y, b, sigma)
    h = k_hess_y(b, y, sigma)
    assert np.array_equal(h, h.T)


def test_knn_distances_by_hand():
    ref = np.arange(10.0)[:, None]
    assert knn_distances([[0.5]], ref, 1)[0] == pytest.approx(0.5)
    assert knn_distances([[0.5]], ref, 3)[0] == pytest.approx(1.5)


def test_adaptive_bandwidth_identical_cloud_clips_to_min():
    sig = adaptive_bandwidths(np.zeros((4, 2)), np.zeros((6, 2)), 1, sigma_min=0.01)
    assert np.all(sig == 0.01)


def test_adaptive_bandwidth_grid_interior_equal():
    t = np.arange(-5.0, 6.0)
    gx, gy = np.meshgrid(t, t)
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    q = np.array([[0.5, 0.5], [1.5, -0.5], [-1.5, 2.5]])
    sig = adaptive_bandwidths(q, grid, 4)
    assert np.allclose(sig, sig[0])


def test_adaptive_bandwidth_grows_with_sparsity():
    rng = np.random.default_rng(0)
    ref = rng.normal(size=(500, 1))
    sig = adaptive_bandwidths(np.array([[0.0], [2.0], [3.5]]), ref, 20)
    assert sig[0] < sig[1] < sig[2]


def test_adaptive_bandwidth_permutation_invariant():
    rng = np.random.default_rng(1)
    ref = rng.normal(size=(50, 2))
    q = rng.normal(size=(7, 2))
    a = adaptive_bandwidths(q, ref, 5)
    b = adaptive_bandwidths(q, ref[rng.permutation(50)], 5)
    assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_adaptive_bandwidth_errors():
    with pytest.raises(ValueError):
        adaptive_bandwidths(np.zeros((1, 1)), np.zeros((0, 1)), 1)
    with pytest.raises(ValueError):
        adaptive_bandwidths(np.zeros((1, 1)), np.zeros((3, 1)), 4)
