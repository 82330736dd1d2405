import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advot.precondition import AffineTransform, compose_into_flow, whiten
from advot.transport import FlowRecord


def test_two_point_moments_by_hand():
    t, out = whiten(np.array([[-1.0], [1.0]]))
    assert np.allclose(t.linear, [[1.0]]) and np.allclose(t.shift, [0.0])
    t, out = whiten(np.array([[0.0], [2.0]]))
    assert np.allclose(t.linear, [[1.0]]) and np.allclose(t.shift, [-1.0])
    assert np.allclose(out[:, 0], [-1.0, 1.0])


def test_exact_moments_give_identity():
    x = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
    t, out = whiten(x)
    assert np.allclose(t.linear, np.eye(2), atol=1e-12)
    assert np.allclose(t.shift, 0, atol=1e-12)


def test_whitened_moments():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(300, 3)) @ np.array([[2.0, 0.3, 0], [0, 1.0, 0.5], [0, 0, 0.2]]) + 5
    _, z = whiten(x)
    assert np.allclose(z.mean(axis=0), 0, atol=1e-8)
    assert np.allclose(z.T @ z / len(z), np.eye(3), atol=1e-8)


def test_symmetric_square_root():
    rng = np.random.default_rng(1)
    t, _ = whiten(rng.normal(size=(100, 3)) * [1, 2, 3])
    assert np.allclose(t.linear, t.linear.T)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.floats(0.1, 10), st.floats(-5, 5))
def test_equivariance(seed, a, b):
    x = np.random.default_rng(seed).normal(size=(50, 2))
    _, z1 = whiten(x)
    _, z2 = whiten(a * x + b)
    assert np.allclose(z1, z2, atol=1e-8)


def test_rank_deficient_is_regularised(caplog):
    x = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    with caplog.at_level(logging.WARNING):
        t, z = whiten(x)
    assert "rank deficient" in caplog.text
    assert np.all(np.isfinite(z))


def test_round_trip():
    rng = np.random.default_rng(2)
    t, _ = whiten(rng.normal(size=(40, 3)) * [1, 5, 0.1])
    x = rng.normal(size=(20, 3))
    assert np.allclose(t.invert(t.apply(x)), x, atol=1e-10)
    assert np.allclose(t.inverse().apply(t.apply(x)), x, atol=1e-10)


def test_transform_serialization():
    t = AffineTransform([[2.0, 0.5], [0.0, 1.0]], [1.0, -1.0])
    u = AffineTransform.from_dict(t.to_dict())
    assert np.array_equal(u.linear, t.linear) and np.array_equal(u.inverse_linear, t.inverse_linear)
    assert t.logdet() == pytest.approx(np.log(2.0))


def test_compose_empty_flow():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10, 2))
    src, _ = whiten(rng.normal(size=(30, 2)) * 3 + 1)
    fr = compose_into_flow(src, src, FlowRecord(2))
    assert np.allclose(fr.apply(x), x, atol=1e-12)


def test_compose_shift_1d_by_hand():
    src = AffineTransform([[2.0]], [3.0])
    fr = compose_into_flow(src, AffineTransform.identity(1), FlowRecord(1))
    assert np.allclose(fr.apply(np.array([[1.0], [-2.0]])), [[5.0], [-1.0]])
