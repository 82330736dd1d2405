"""Affine whitening of sample clouds and bookkeeping for undoing it."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AffineTransform:
    """x -> linear @ x + shift."""

    linear: np.ndarray
    shift: np.ndarray
    inverse_linear: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        lin = np.atleast_2d(np.array(self.linear, dtype=float))
        shift = np.atleast_1d(np.array(self.shift, dtype=float))
        if lin.shape != (shift.size, shift.size):
            raise ValueError("linear part must be d x d with d = len(shift)")
        inv = np.linalg.inv(lin) if self.inverse_linear is None else np.array(self.inverse_linear, dtype=float)
        for name, arr in (("linear", lin), ("shift", shift), ("inverse_linear", inv)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def identity(cls, dim: int) -> "AffineTransform":
        return cls(np.eye(dim), np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.shift.size

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.linear.T + self.shift

    def invert(self, z):
        z = np.asarray(z, dtype=float)
        return (z - self.shift) @ self.inverse_linear.T

    def inverse(self) -> "AffineTransform":
        return AffineTransform(self.inverse_linear, -self.inverse_linear @ self.shift, self.linear)

    def logdet(self) -> float:
        return float(np.linalg.slogdet(self.linear)[1])

    def to_dict(self) -> dict:
        return {"linear": self.linear.tolist(), "shift": self.shift.tolist(),
                "inverse_linear": self.inverse_linear.tolist()}

    @classmethod
    def from_dict(cls, data) -> "AffineTransform":
        return cls(data["linear"], data["shift"], data.get("inverse_linear"))


def whiten(samples):
    """Symmetric whitening to zero mean and identity (population) covariance.

    Returns ``(transform, whitened_points)``.  A rank-deficient covariance is
    ridge-regularised with ``1e-8 * trace / d``.
    """
    x = np.asarray(getattr(samples, "points", samples), dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / x.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    d = x.shape[1]
    scale = max(float(np.trace(cov)) / d, np.finfo(float).tiny)
    if evals.min() <= 1e-12 * max(evals.max(), 0.0) or evals.min() <= 0:
        lam = 1e-8 * scale
        log.warning("sample covariance is rank deficient; adding ridge %.3g", lam)
        evals = evals + lam
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    sqrt = (evecs * np.sqrt(evals)) @ evecs.T
    transform = AffineTransform(inv_sqrt, -inv_sqrt @ mean, sqrt)
    return transform, transform.apply(x)


def compose_into_flow(src_t: AffineTransform, tgt_t: AffineTransform, fr):
    """Attach the preconditioning transforms to a flow built in whitened space.

    The returned record maps original coordinates as ``tgt_t^-1 o T o src_t``.
    """
    return replace(fr, source_transform=src_t, target_transform=tgt_t)
