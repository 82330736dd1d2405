"""Adversarial test function: signed kernel convolution over representers.

``F(y) = (1/N_r) sum_i K(f(b_i+), y) - K(f(b_i-), y)`` where ``f`` is an
optional branch map applied lazily to each cloud.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RepresenterEnsemble
from .maps import ElementaryMap

_CHUNK = 4096


def _signed_sums(positions, q, weights, y, order):
    u = positions[:, None, :] - y[None, :, :]                  # (R, n, d)
    wk = weights[:, None] * np.exp(-0.5 * q[:, None] * np.einsum("rnd,rnd->rn", u, u))
    wkq = wk * q[:, None]
    out = [wk.sum(axis=0), np.einsum("rn,rnd->nd", wkq, u)]
    if order >= 2:
        ut = u.transpose(1, 0, 2)                                # (n, R, d)
        h = np.matmul((ut * (wkq * q[:, None]).T[:, :, None]).transpose(0, 2, 1), ut)
        h -= wkq.sum(axis=0)[:, None, None] * np.eye(y.shape[1])
        out.append(h)
    return out


def kernel_sums(positions, sigma, weights, y, order: int = 1):
    """Weighted kernel sum and its y-derivatives at every row of ``y``.

    Returns ``(value, grad)`` for ``order=1`` and ``(value, grad, hess)`` for
    ``order=2``; shapes ``(n,)``, ``(n, d)``, ``(n, d, d)``.  Positive and
    negative weights are summed separately, so mirrored clouds cancel
    exactly.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    positions = np.asarray(positions, dtype=float)
    weights = np.asarray(weights, dtype=float)
    q = 1.0 / np.asarray(sigma, dtype=float) ** 2
    n, d = y.shape
    val = np.empty(n)
    grad = np.empty((n, d))
    hess = np.empty((n, d, d)) if order >= 2 else None
    plus = weights >= 0
    minus = ~plus
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        p = _signed_sums(positions[plus], q[plus], weights[plus], y[lo:hi], order)
        m = _signed_sums(positions[minus], q[minus], -weights[minus], y[lo:hi], order)
        val[lo:hi] = p[0] - m[0]
        grad[lo:hi] = p[1] - m[1]
        if hess is not None:
            h = p[2] - m[2]
            hess[lo:hi] = 0.5 * (h + h.transpose(0, 2, 1))
    return (val, grad, hess) if order >= 2 else (val, grad)


@dataclass(frozen=True)
class TestFunction:
    ensemble: RepresenterEnsemble
    branch_pos: ElementaryMap | None = None
    branch_neg: ElementaryMap | None = None

    __test__ = False  # not a pytest class

    def positions(self):
        ens = self.ensemble
        pos = ens.positive if self.branch_pos is None else self.branch_pos.apply(ens.positive)
        neg = ens.negative if self.branch_neg is None else self.branch_neg.apply(ens.negative)
        n_r = ens.n_representers
        return (np.concatenate([pos, neg]),
                np.concatenate([ens.bandwidths_pos, ens.bandwidths_neg]),
                np.concatenate([np.full(n_r, 1.0 / n_r), np.full(n_r, -1.0 / n_r)]))

    def _eval(self, y, order):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.ensemble.dim:
            raise ValueError(f"point dimension {y.shape[-1]} does not match representers {self.ensemble.dim}")
        single = y.ndim == 1
        out = kernel_sums(*self.positions(), np.atleast_2d(y), order=order)
        return tuple(o[0] for o in out) if single else out

    def value(self, y):
        return self._eval(y, 1)[0]

    def gradient(self, y):
        return self._eval(y, 1)[1]

    def hessian(self, y):
        return self._eval(y, 2)[2]


def f_eval(tf: TestFunction, y):
    return tf.value(y)


def f_grad_y(tf: TestFunction, y):
    return tf.gradient(y)


def f_hess_y(tf: TestFunction, y):
    return tf.hessian(y)
