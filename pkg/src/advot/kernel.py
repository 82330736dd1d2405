r"""Gaussian RBF kernel with analytic derivatives in its second argument.

.. math::

    K_\sigma(b, y) = \exp\left(-\frac{\lVert b - y \rVert^2}{2\sigma^2}\right)

All functions broadcast over leading axes; the last axis is the spatial one.
"""

from __future__ import annotations

import numpy as np


def _check_sigma(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("kernel bandwidth must be positive")
    return sigma


def k_eval(b, y, sigma):
    sigma = _check_sigma(sigma)
    diff = np.asarray(b, dtype=float) - np.asarray(y, dtype=float)
    return np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * sigma**2))


def k_grad_y(b, y, sigma):
    """Gradient of the kernel with respect to ``y``: K (b - y) / sigma^2."""
    sigma = _check_sigma(sigma)
    diff = np.asarray(b, dtype=float) - np.asarray(y, dtype=float)
    k = np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * sigma**2))
    return (k / sigma**2)[..., None] * diff


def k_hess_y(b, y, sigma):
    """Hessian in ``y``: K [ (b-y)(b-y)^T / sigma^4 - I / sigma^2 ]."""
    sigma = _check_sigma(sigma)
    diff = np.asarray(b, dtype=float) - np.asarray(y, dtype=float)
    q = 1.0 / sigma**2
    k = np.exp(-np.sum(diff * diff, axis=-1) * q / 2.0)
    outer = diff[..., :, None] * diff[..., None, :]
    eye = np.eye(diff.shape[-1])
    return (k * q)[..., None, None] * (q[..., None, None] * outer - eye)


def knn_distances(points, reference, k: int):
    """Distance from each of ``points`` to its k-th nearest neighbour in ``reference``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    if reference.shape[0] == 0:
        raise ValueError("reference cloud is empty")
    if not 1 <= k <= reference.shape[0]:
        raise ValueError(f"k={k} must lie in [1, {reference.shape[0]}]")
    # squared distances via the expansion stay linear in the dimension
    sq = (np.sum(points**2, axis=1)[:, None] + np.sum(reference**2, axis=1)[None, :]
          - 2.0 * points @ reference.T)
    kth = np.partition(sq, k - 1, axis=1)[:, k - 1]
    return np.sqrt(np.maximum(kth, 0.0))


def adaptive_bandwidths(points, reference, k: int, sigma_min: float = 1e-3,
                        sigma_max: float = 10.0):
    """Per-point bandwidths that grow where the reference cloud is sparse.

    Parameters
    ----------
    points : (n, d) array
        Locations that receive a bandwidth (the representers).
    reference : (m, d) array
        Cloud whose local density sets the scale, normally the pooled
        transported source and target samples.
    k : int
        Neighbour rank; the bandwidth is the distance to the k-th neighbour.
    sigma_min, sigma_max : float
        Clipping range.

    Returns
    -------
    (n,) array of bandwidths in ``[sigma_min, sigma_max]``.
    """
    return np.clip(knn_distances(points, reference, k), sigma_min, sigma_max)
