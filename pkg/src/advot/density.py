"""Density estimation through a fitted flow, KL evaluation and cost oracles."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .transport import FlowRecord

log = logging.getLogger(__name__)


class Gaussian:
    """Multivariate normal with a dense covariance."""

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        d = self.mean.size
        cov = np.asarray(cov, dtype=float)
        self.cov = cov * np.eye(d) if cov.ndim == 0 else np.atleast_2d(cov)
        self._chol = np.linalg.cholesky(self.cov)
        self._logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))

    @property
    def dim(self) -> int:
        return self.mean.size

    def logpdf(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        white = np.linalg.solve(self._chol, (x - self.mean).T)
        return -0.5 * (np.sum(white**2, axis=0) + self.dim * np.log(2 * np.pi) + self._logdet)

    def sample(self, n: int, rng: np.random.Generator):
        return self.mean + rng.standard_normal((n, self.dim)) @ self._chol.T

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "mean": self.mean.tolist(), "cov": self.cov.tolist()}


def standard_gaussian(dim: int) -> Gaussian:
    return Gaussian(np.zeros(dim), np.eye(dim))


class GaussianMixture:
    def __init__(self, means, covs, weights=None):
        means = np.atleast_2d(np.asarray(means, dtype=float))
        k, d = means.shape
        if len(covs) != k:
            raise ValueError("one covariance per component required")
        self.components = [Gaussian(m, c) for m, c in zip(means, covs)]
        w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (k,) or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ValueError("weights must be non-negative and sum to one")
        self.weights = w

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def logpdf(self, x):
        parts = np.stack([c.logpdf(x) for c in self.components])
        return logsumexp(parts, axis=0, b=self.weights[:, None])

    def sample(self, n: int, rng: np.random.Generator):
        labels = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for i, comp in enumerate(self.components):
            idx = np.flatnonzero(labels == i)
            out[idx] = comp.sample(idx.size, rng)
        return out

    def to_dict(self) -> dict:
        return {"kind": "mixture", "weights": self.weights.tolist(),
                "means": [c.mean.tolist() for c in self.components],
                "covs": [c.cov.tolist() for c in self.components]}


def trimodal_mixture(radius: float = 2.0, variance: float = 0.25) -> GaussianMixture:
    """Equal-weight mixture on the vertices of an equilateral triangle."""
    angles = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    means = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    return GaussianMixture(means, [variance * np.eye(2)] * 3)


def bimodal_mixture(dim: int, offset: float = 2.0) -> GaussianMixture:
    """(N(-offset 1, I) + N(offset 1, I)) / 2 in ``dim`` dimensions."""
    one = np.ones(dim)
    return GaussianMixture([-offset * one, offset * one], [np.eye(dim)] * 2)


def density_from_dict(data):
    if data["kind"] == "gaussian":
        return Gaussian(data["mean"], data["cov"])
    if data["kind"] == "mixture":
        return GaussianMixture(data["means"], data["covs"], data["weights"])
    raise ValueError(f"unknown density kind {data['kind']!r}")


@dataclass
class DensityModel:
    """Change-of-variables density ``|det grad T(x)| mu(T(x))``."""

    flow: FlowRecord
    target: object = None
    singular_count: int = 0
    negative_count: int = 0

    def __post_init__(self):
        if self.target is None:
            self.target = standard_gaussian(self.flow.dim)

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        image, logdet, negative = self.flow.apply_with_logdet(np.atleast_2d(x))
        out = self.target.logpdf(image) + logdet
        out = np.where(np.isneginf(logdet), -np.inf, out)
        self.singular_count += int(np.sum(np.isneginf(out)))
        self.negative_count += int(np.sum(negative > 0))
        return out[0] if single else out


def log_density(dm: DensityModel, x):
    return dm.log_density(x)


@dataclass(frozen=True)
class KLEstimate:
    value: float
    stderr: float
    n_used: int
    n_excluded: int


def kl_from_logs(log_true, log_model) -> KLEstimate:
    log_true = np.asarray(log_true, dtype=float)
    log_model = np.asarray(log_model, dtype=float)
    keep = np.isfinite(log_model)
    diff = log_true[keep] - log_model[keep]
    n = diff.size
    if n == 0:
        return KLEstimate(float("nan"), float("nan"), 0, int((~keep).sum()))
    se = float(diff.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return KLEstimate(float(diff.mean()), se, n, int((~keep).sum()))


def kl_monte_carlo(true_density, dm: DensityModel, eval_samples) -> KLEstimate:
    """Monte Carlo estimate of KL(true || model) from samples of the truth.

    Points where the model log-density is ``-inf`` are excluded and counted.
    """
    pts = np.atleast_2d(np.asarray(eval_samples, dtype=float))
    est = kl_from_logs(true_density.logpdf(pts), dm.log_density(pts))
    if est.n_excluded:
        log.warning("%d evaluation points had singular Jacobians", est.n_excluded)
    return est


class FlowTracker:
    """Points pushed through a growing flow one committed step at a time.

    Keeps the images and the accumulated log|det| in whitened coordinates,
    so following a flow of n steps costs n single-step evaluations in total.
    """

    def __init__(self, points, with_logdet: bool = True):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.with_logdet = with_logdet
        self._z = None
        self._logdet = None
        self._done = 0

    def advance(self, flow: FlowRecord):
        if self._z is None:
            self._z = flow.to_whitened(self.points)
            self._logdet = np.zeros(self._z.shape[0])
            if flow.source_transform is not None:
                self._logdet += flow.source_transform.logdet()
        for step in flow.steps[self._done:]:
            if self.with_logdet:
                sign, logabs = np.linalg.slogdet(step.jacobian(self._z))
                self._logdet += np.where(sign == 0, -np.inf, logabs)
            self._z = step.apply(self._z)
        self._done = len(flow.steps)
        return self

    def images(self, flow: FlowRecord):
        """Current images in original target coordinates."""
        self.advance(flow)
        return flow.from_whitened(self._z)

    def log_density(self, flow: FlowRecord, target_density):
        if not self.with_logdet:
            raise ValueError("tracker was created without log-determinants")
        self.advance(flow)
        logdet = self._logdet
        if flow.target_transform is not None:
            logdet = logdet - flow.target_transform.logdet()
        out = target_density.logpdf(flow.from_whitened(self._z)) + logdet
        return np.where(np.isneginf(logdet), -np.inf, out)


class KLTracker:
    """Incremental KL(true || model) while a flow is being fitted.

    Use as the solver callback; it returns ``{"kl": ...}`` on every
    ``every``-th iteration and on the last one.
    """

    def __init__(self, true_density, target_density, eval_samples, every: int = 10):
        self.true_density = true_density
        self.target_density = target_density
        self.tracker = FlowTracker(eval_samples)
        self.log_true = true_density.logpdf(self.tracker.points)
        self.every = every
        self.history: list[tuple[int, KLEstimate]] = []

    def estimate(self, flow: FlowRecord) -> KLEstimate:
        return kl_from_logs(self.log_true, self.tracker.log_density(flow, self.target_density))

    def __call__(self, record, flow):
        last = record.iteration == flow.config.get("max_iterations", 0) - 1
        if record.iteration % self.every and not last:
            return None
        est = self.estimate(flow)
        self.history.append((record.iteration, est))
        return {"kl": est.value}


def transport_cost(flow: FlowRecord, X, frame: str = "original") -> float:
    """Mean ``|x - T(x)|^2 / 2`` in original or preconditioned coordinates."""
    x = np.atleast_2d(np.asarray(getattr(X, "points", X), dtype=float))
    if frame == "original":
        moved = flow.apply(x)
    elif frame == "preconditioned":
        x = flow.to_whitened(x)
        moved = flow.apply_whitened(x)
    else:
        raise ValueError("frame must be 'original' or 'preconditioned'")
    return float(0.5 * np.mean(np.sum((x - moved) ** 2, axis=1)))


def oracle_cost_1d(x_samples, y_samples, rng: np.random.Generator | None = None) -> float:
    """Exact empirical 1D optimal transport cost under |x - y|^2 / 2.

    The sorted (quantile) coupling is optimal for convex costs in 1D.  The
    larger set is subsampled when the counts differ.
    """
    x = np.ravel(np.asarray(x_samples, dtype=float))
    y = np.ravel(np.asarray(y_samples, dtype=float))
    if x.size == 0 or y.size == 0:
        raise ValueError("oracle cost needs non-empty sample lists")
    if x.size != y.size:
        rng = np.random.default_rng(0) if rng is None else rng
        n = min(x.size, y.size)
        x = x if x.size == n else rng.choice(x, n, replace=False)
        y = y if y.size == n else rng.choice(y, n, replace=False)
    return float(0.5 * np.mean((np.sort(x) - np.sort(y)) ** 2))
