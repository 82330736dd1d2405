"""Elementary parametric maps that move representer clouds.

Every family is affine in its parameters, ``f(b; p) = b + G(b) p``, with
``G`` returned by :meth:`ElementaryMap.param_jacobian`.  ``p = 0`` is the
identity map.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
from scipy.special import erf

from .core import MAP_FAMILIES

_CENTER_GUARD = 1e-12


@lru_cache(maxsize=None)
def _exponents(dim: int, degree: int) -> np.ndarray:
    rows = []
    for total in range(1, degree + 1):
        for combo in combinations_with_replacement(range(dim), total):
            e = np.zeros(dim, dtype=int)
            for a in combo:
                e[a] += 1
            rows.append(e)
    out = np.array(rows, dtype=int)
    out.flags.writeable = False
    return out


class Monomials:
    """All monomials of total degree 1..D in ``dim`` variables, graded-lex order.

    >>> Monomials(2, 2).exponents.tolist()
    [[1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
    """

    def __init__(self, dim: int, degree: int):
        if dim < 1 or degree < 1:
            raise ValueError("dim and degree must be positive")
        self.dim = dim
        self.degree = degree
        self.exponents = _exponents(dim, degree)

    def __len__(self):
        return self.exponents.shape[0]

    @staticmethod
    def _pow(y, e):
        # y**e with 0**0 = 1 and negative exponents mapped to 0
        out = np.where(e >= 0, np.power(y, np.maximum(e, 0)), 0.0)
        return out

    def value(self, y):
        """(n, K) feature matrix."""
        y = np.atleast_2d(y)
        return np.prod(self._pow(y[:, None, :], self.exponents[None]), axis=-1)

    def gradient(self, y):
        """(n, d, K) array; column j is the gradient of monomial j."""
        y = np.atleast_2d(y)
        e = self.exponents  # (K, d)
        base = self._pow(y[:, None, :], e[None])  # (n, K, d)
        out = np.empty((y.shape[0], self.dim, len(self)))
        for a in range(self.dim):
            factors = base.copy()
            factors[:, :, a] = e[None, :, a] * self._pow(y[:, None, a], e[None, :, a] - 1)
            out[:, a, :] = np.prod(factors, axis=-1)
        return out

    def hessian(self, y):
        """(n, K, d, d) array of monomial Hessians."""
        y = np.atleast_2d(y)
        e = self.exponents
        base = self._pow(y[:, None, :], e[None])
        out = np.empty((y.shape[0], len(self), self.dim, self.dim))
        for a in range(self.dim):
            for c in range(a, self.dim):
                factors = base.copy()
                if a == c:
                    factors[:, :, a] = (e[None, :, a] * (e[None, :, a] - 1)
                                        * self._pow(y[:, None, a], e[None, :, a] - 2))
                else:
                    factors[:, :, a] = e[None, :, a] * self._pow(y[:, None, a], e[None, :, a] - 1)
                    factors[:, :, c] = e[None, :, c] * self._pow(y[:, None, c], e[None, :, c] - 1)
                val = np.prod(factors, axis=-1)
                out[:, :, a, c] = val
                out[:, :, c, a] = val
        return out


def radial_profile(family: str, r, tau: float):
    """Scalar profile h(r) with radial displacement (b - c) h(|b - c|)."""
    r = np.asarray(r, dtype=float)
    if family == "radial_iq":
        return 1.0 / (tau + r * r)
    if family == "radial_erf":
        safe = np.where(r < _CENTER_GUARD, 1.0, r)
        return np.where(r < _CENTER_GUARD, 0.0, erf(safe / tau) / (safe * safe))
    raise ValueError(f"{family!r} is not a radial family")


def n_params(family: str, dim: int, n_centers: int = 1, degree: int = 3) -> int:
    if family == "multinomial":
        return len(_exponents(dim, degree))
    if family in ("radial_iq", "radial_erf"):
        return n_centers * (1 + dim)
    raise ValueError(f"unknown map family {family!r}")


@dataclass(frozen=True)
class ElementaryMap:
    """One elementary map: family, frozen centers and scale, and parameters.

    Radial parameters are laid out per center as ``[p0, p1 (dim entries)]``.
    Multinomial parameters follow :class:`Monomials` ordering.
    """

    family: str
    dim: int
    params: np.ndarray
    centers: np.ndarray | None = None
    scale: float = 0.1
    degree: int = 3

    def __post_init__(self):
        if self.family not in MAP_FAMILIES:
            raise ValueError(f"unknown map family {self.family!r}")
        params = np.array(self.params, dtype=float).ravel()
        params.flags.writeable = False
        object.__setattr__(self, "params", params)
        if self.radial:
            centers = np.atleast_2d(np.array(self.centers, dtype=float))
            if centers.shape[1] != self.dim:
                raise ValueError("center dimension does not match map dimension")
            centers.flags.writeable = False
            object.__setattr__(self, "centers", centers)
            if not self.scale > 0:
                raise ValueError("map scale must be positive")
        expected = n_params(self.family, self.dim, self.n_centers, self.degree)
        if params.size != expected:
            raise ValueError(f"{self.family} map expects {expected} parameters, got {params.size}")

    @classmethod
    def zeros(cls, family, dim, centers=None, scale=0.1, degree=3):
        n_c = 1 if centers is None else np.atleast_2d(centers).shape[0]
        return cls(family, dim, np.zeros(n_params(family, dim, n_c, degree)), centers, scale, degree)

    @property
    def radial(self) -> bool:
        return self.family != "multinomial"

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0] if self.radial else 0

    @property
    def n_params(self) -> int:
        return self.params.size

    def with_params(self, params) -> "ElementaryMap":
        return replace(self, params=params)

    def _check(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[-1] != self.dim:
            raise ValueError(f"point dimension {b.shape[-1]} does not match map dimension {self.dim}")
        return b

    def apply(self, b):
        """Image of one point ``(dim,)`` or a cloud ``(n, dim)``."""
        b = self._check(b)
        single = b.ndim == 1
        pts = np.atleast_2d(b)
        if self.radial:
            step = np.zeros_like(pts)
            p = self.params.reshape(self.n_centers, 1 + self.dim)
            for c, row in zip(self.centers, p):
                diff = pts - c
                r = np.sqrt(np.sum(diff * diff, axis=1))
                step += row[0] * radial_profile(self.family, r, self.scale)[:, None] * diff + row[1:]
            out = pts + step / self.n_centers
        else:
            grads = Monomials(self.dim, self.degree).gradient(pts)
            out = pts + grads @ self.params
        return out[0] if single else out

    def param_jacobian(self, b):
        """(n, dim, n_params) array G with ``apply(b) = b + G(b) @ params``."""
        pts = np.atleast_2d(self._check(b))
        if not self.radial:
            return Monomials(self.dim, self.degree).gradient(pts)
        n, d = pts.shape
        out = np.zeros((n, d, self.n_params))
        eye = np.eye(d)
        width = 1 + d
        for i, c in enumerate(self.centers):
            diff = pts - c
            r = np.sqrt(np.sum(diff * diff, axis=1))
            out[:, :, i * width] = radial_profile(self.family, r, self.scale)[:, None] * diff
            out[:, :, i * width + 1:(i + 1) * width] = eye
        return out / self.n_centers


def map_apply(m: ElementaryMap, b):
    return m.apply(b)


def sample_centers(transported_source, target, n_centers: int, rng: np.random.Generator):
    """Draw centers uniformly without replacement from the pooled clouds."""
    pooled = np.concatenate([np.atleast_2d(transported_source), np.atleast_2d(target)])
    if pooled.shape[0] == 0:
        raise ValueError("cannot sample centers from empty clouds")
    if n_centers > pooled.shape[0]:
        raise ValueError(f"n_centers={n_centers} exceeds pooled size {pooled.shape[0]}")
    idx = rng.choice(pooled.shape[0], size=n_centers, replace=False)
    return pooled[idx].copy()


def locality_defect(m: ElementaryMap, radius: float, n_directions: int = 64) -> float:
    """Largest displacement on a sphere of ``radius`` about the first center.

    Only meaningful for radial maps with the translation parameters at zero.
    """
    if not m.radial:
        raise ValueError("locality defect is defined for radial maps only")
    d = m.dim
    dirs = np.concatenate([np.eye(d), -np.eye(d)])
    if d > 1:
        extra = np.random.default_rng(0).standard_normal((n_directions, d))
        dirs = np.concatenate([dirs, extra / np.linalg.norm(extra, axis=1, keepdims=True)])
    probes = m.centers[0] + radius * dirs
    return float(np.max(np.linalg.norm(m.apply(probes) - probes, axis=1)))
