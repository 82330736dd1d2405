"""Per-iteration minimax objective and the trust-region implicit step.

The objective of one iteration is

    J(alpha, beta) = mean_i |x_i - E(z_i; alpha)|^2 / 2
                     + mean_i F(E(z_i; alpha); beta) - mean_j F(y_j; beta)

with ``z_i`` the current transported source points.  Its first term is the
*cost*, the other two the *constraint*.  States expose the objective at any
parameter point plus exact first and second derivatives at the origin; the
finite-difference helpers here are the independent check on those.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import NumericError, RepresenterEnsemble
from .maps import ElementaryMap, Monomials
from .testfn import kernel_sums

log = logging.getLogger(__name__)

_COND_LIMIT = 1e14


@dataclass(frozen=True)
class StepResult:
    d_alpha: np.ndarray
    d_beta: np.ndarray
    pre_clip_norm: float
    clipped: bool
    fallback: bool
    value: float
    cost: float
    constraint: float
    value_after: float | None = None

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.d_alpha @ self.d_alpha + self.d_beta @ self.d_beta))


class SaddleState:
    """One iteration of the representer-based game.

    Parameters
    ----------
    source : (N, d) array
        Source samples at the start of the flow (after preconditioning).
    current : (N, d) array
        Their current images ``T_n(x)``.
    target : (M, d) array
        Target samples.
    ensemble : RepresenterEnsemble
        Representer clouds and bandwidths before this iteration's commit.
    skeleton : ElementaryMap
        Zero-parameter map carrying this iteration's centers and scale; the
        alpha and beta branches of both clouds all use it.
    """

    def __init__(self, source, current, target, ensemble: RepresenterEnsemble,
                 skeleton: ElementaryMap):
        self.source = np.asarray(source, dtype=float)
        self.current = np.asarray(current, dtype=float)
        self.target = np.asarray(target, dtype=float)
        self.ensemble = ensemble
        self.skeleton = skeleton
        self.q = skeleton.n_params
        self.n_alpha = 2 * self.q
        self.n_beta = 2 * self.q

    def split(self, theta):
        theta = np.asarray(theta, dtype=float)
        return theta[:self.q], theta[self.q:]

    def _branched(self, params):
        p_pos, p_neg = self.split(params)
        ens = self.ensemble
        return np.concatenate([self.skeleton.with_params(p_pos).apply(ens.positive),
                               self.skeleton.with_params(p_neg).apply(ens.negative)])

    def objective(self, alpha, beta):
        """(J, cost, constraint) at an arbitrary parameter point."""
        base, sig, w = self.ensemble.stacked()
        z = self.current
        moved = kernel_sums(self._branched(alpha), sig, w, z)[1] - kernel_sums(base, sig, w, z)[1]
        image = z + moved
        cost = 0.5 * np.mean(np.sum((self.source - image) ** 2, axis=1))
        probe = self._branched(beta)
        constraint = (np.mean(kernel_sums(probe, sig, w, image)[0])
                      - np.mean(kernel_sums(probe, sig, w, self.target)[0]))
        return cost + constraint, cost, constraint

    def derivatives(self, at=None):
        """Exact gradient and Hessian of J at the origin, plus (J, cost, constraint).

        Returns ``(grad, hess, values)`` with parameters ordered
        ``[alpha+, alpha-, beta+, beta-]``.
        """
        if at is not None and np.any(np.asarray(at) != 0):
            raise ValueError("analytic derivatives are only available at the origin")
        b, sig, w = self.ensemble.stacked()
        n_r = self.ensemble.n_representers
        halves = (slice(0, n_r), slice(n_r, 2 * n_r))
        z, x, y = self.current, self.source, self.target
        n, d = z.shape
        m = y.shape[0]
        q = 1.0 / sig**2
        qc = q[:, None]
        eye = np.eye(d)
        G = self.skeleton.param_jacobian(b)                      # (2R, d, p)

        u = b[:, None, :] - z[None, :, :]                        # (2R, N, d)
        wk = w[:, None] * np.exp(-0.5 * qc * np.sum(u * u, axis=2))
        wkq = wk * qc
        wkqq = wkq * qc
        uy = b[:, None, :] - y[None, :, :]
        wky = w[:, None] * np.exp(-0.5 * qc * np.sum(uy * uy, axis=2))
        wkqy = wky * qc
        u_n = u.transpose(1, 0, 2)                               # (N, 2R, d)

        grad_f = np.einsum("kn,knd->nd", wkq, u)
        hess_f = np.matmul((wkqq.T[:, :, None] * u_n).transpose(0, 2, 1), u_n)
        hess_f -= wkq.sum(axis=0)[:, None, None] * eye
        cost = 0.5 * np.mean(np.sum((x - z) ** 2, axis=1))
        constraint = wk.sum(axis=0).mean() - wky.sum(axis=0).mean()

        # dJ/dE at the origin
        rho = (z - x + grad_f) / n
        ur = np.sum(u * rho[None], axis=2)                       # (2R, N)
        g_a = wkq @ rho - np.einsum("kn,knd->kd", wkqq * ur, u)
        g_c = np.einsum("kn,knd->kd", wkqy, uy) / m - np.einsum("kn,knd->kd", wkq, u) / n

        def pull(vec):
            return np.concatenate([np.einsum("kdp,kd->p", G[h], vec[h]) for h in halves])

        grad = np.concatenate([pull(g_a), pull(g_c)])

        # Jacobian of the images w.r.t. alpha, per sample: (N, d, 2p)
        p = self.q
        ug = np.matmul(u, G)                                     # (2R, N, p)
        scaled_u = (wkqq[:, :, None] * u).transpose(1, 2, 0)     # (N, d, 2R)
        jac = np.concatenate([
            (wkq[h].T @ G[h].reshape(-1, d * p)).reshape(n, d, p)
            - np.matmul(scaled_u[:, :, h], ug[h].transpose(1, 0, 2))
            for h in halves], axis=2)
        weight = (eye + hess_f) / n
        jac_flat = jac.reshape(n * d, -1)
        h_aa = jac_flat.T @ np.matmul(weight, jac).reshape(n * d, -1)
        h_ab = jac_flat.T @ jac_flat / n

        # second derivative of rho . grad_y K in the representer position
        t = np.matmul(((wkqq * qc * ur)[:, :, None] * u).transpose(0, 2, 1), u)
        cross = np.matmul((wkqq[:, :, None] * u).transpose(0, 2, 1), rho)
        t -= cross + cross.transpose(0, 2, 1)
        t -= (wkqq * ur).sum(axis=1)[:, None, None] * eye

        # beta curvature: w_k [ mean_j P_kj - mean_i P_ki ],  P = K q (I - q u u^T)
        s = (wkqy.sum(axis=1) / m - wkq.sum(axis=1) / n)[:, None, None] * eye
        s -= (np.matmul(((wkqy * qc)[:, :, None] * uy).transpose(0, 2, 1), uy) / m
              - np.matmul((wkqq[:, :, None] * u).transpose(0, 2, 1), u) / n)

        tg = np.matmul(t, G)
        sg = np.matmul(s, G)
        for i, h in enumerate(halves):
            blk = slice(i * p, (i + 1) * p)
            h_aa[blk, blk] += G[h].reshape(-1, p).T @ tg[h].reshape(-1, p)
        h_bb = np.zeros((2 * p, 2 * p))
        for i, h in enumerate(halves):
            blk = slice(i * p, (i + 1) * p)
            h_bb[blk, blk] = G[h].reshape(-1, p).T @ sg[h].reshape(-1, p)

        hess = np.block([[h_aa, h_ab], [h_ab.T, h_bb]])
        hess = 0.5 * (hess + hess.T)
        return grad, hess, (cost + constraint, cost, constraint)


class FixedFeatureState:
    """One iteration of the fixed-feature game around the accumulated beta.

    ``F(y; beta) = <beta, phi(y)>`` with monomial features and
    ``E(z; alpha) = z + grad <alpha, phi>(z)``.  Parameters are
    ``(alpha, d_beta)`` with ``beta = beta_n + d_beta``.
    """

    def __init__(self, source, current, target, features: Monomials, beta):
        self.source = np.asarray(source, dtype=float)
        self.current = np.asarray(current, dtype=float)
        self.target = np.asarray(target, dtype=float)
        self.features = features
        self.beta = np.asarray(beta, dtype=float)
        self.n_alpha = len(features)
        self.n_beta = len(features)

    def objective(self, alpha, d_beta):
        phi = self.features
        image = self.current + phi.gradient(self.current) @ np.asarray(alpha, dtype=float)
        beta = self.beta + np.asarray(d_beta, dtype=float)
        cost = 0.5 * np.mean(np.sum((self.source - image) ** 2, axis=1))
        constraint = phi.value(image).mean(axis=0) @ beta - phi.value(self.target).mean(axis=0) @ beta
        return cost + constraint, cost, constraint

    def derivatives(self, at=None):
        if at is not None and np.any(np.asarray(at) != 0):
            raise ValueError("analytic derivatives are only available at the origin")
        phi = self.features
        z, x = self.current, self.source
        n, d = z.shape
        jac = phi.gradient(z)                                    # (N, d, K)
        feat_z = phi.value(z).mean(axis=0)
        feat_y = phi.value(self.target).mean(axis=0)
        resid = z - x + jac @ self.beta
        g_alpha = np.einsum("ndk,nd->k", jac, resid) / n
        g_beta = feat_z - feat_y
        curv = np.eye(d) + np.einsum("nkde,k->nde", phi.hessian(z), self.beta)
        h_aa = np.einsum("ndk,nde,nel->kl", jac, curv, jac) / n
        h_ab = np.einsum("ndk,ndl->kl", jac, jac) / n
        k = len(phi)
        hess = np.block([[h_aa, h_ab], [h_ab.T, np.zeros((k, k))]])
        hess = 0.5 * (hess + hess.T)
        cost = 0.5 * np.mean(np.sum((x - z) ** 2, axis=1))
        constraint = (feat_z - feat_y) @ self.beta
        return np.concatenate([g_alpha, g_beta]), hess, (cost + constraint, cost, constraint)


def _value(state, theta):
    theta = np.asarray(theta, dtype=float)
    return state.objective(theta[:state.n_alpha], theta[state.n_alpha:])[0]


def _origin(state, at):
    p = state.n_alpha + state.n_beta
    return np.zeros(p) if at is None else np.asarray(at, dtype=float).ravel()


def grad(state, at=None, h=None):
    """Central finite-difference gradient of the objective."""
    z0 = _origin(state, at)
    if h is None:
        h = 1e-5 * max(1.0, float(np.linalg.norm(z0)))
    out = np.empty(z0.size)
    for i in range(z0.size):
        e = np.zeros(z0.size)
        e[i] = h
        out[i] = (_value(state, z0 + e) - _value(state, z0 - e)) / (2 * h)
    return out


def fd_hessian(state, at=None, h=None):
    """Central finite-difference Hessian of the objective (symmetrised)."""
    z0 = _origin(state, at)
    if h is None:
        h = 1e-4 * max(1.0, float(np.linalg.norm(z0)))
    p = z0.size
    out = np.empty((p, p))
    f0 = _value(state, z0)
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = h
        out[i, i] = (_value(state, z0 + ei) - 2 * f0 + _value(state, z0 - ei)) / h**2
        for j in range(i + 1, p):
            ej = np.zeros(p)
            ej[j] = h
            val = (_value(state, z0 + ei + ej) - _value(state, z0 + ei - ej)
                   - _value(state, z0 - ei + ej) + _value(state, z0 - ei - ej)) / (4 * h**2)
            out[i, j] = out[j, i] = val
    return out


def _local_model(state, at):
    """Gradient, Hessian and (J, cost, constraint) at ``at``."""
    if hasattr(state, "derivatives") and (at is None or not np.any(np.asarray(at) != 0)):
        return state.derivatives()
    z0 = _origin(state, at)
    values = state.objective(z0[:state.n_alpha], z0[state.n_alpha:])
    return grad(state, z0), fd_hessian(state, z0), values


def saddle_field(g, n_alpha):
    """Descent on the first ``n_alpha`` coordinates, ascent on the rest."""
    v = np.array(g, dtype=float)
    v[:n_alpha] *= -1.0
    return v


def _clip(step, delta):
    norm = float(np.linalg.norm(step))
    if norm > delta:
        return step * (delta / norm), norm, True
    return step, norm, False


def _result(state, step, pre, clipped, fallback, values):
    if not np.all(np.isfinite(step)):
        raise NumericError("non-finite saddle step")
    return StepResult(step[:state.n_alpha].copy(), step[state.n_alpha:].copy(), pre, clipped,
                      fallback, *map(float, values))


def implicit_step(state, eta: float = 1.0, delta: float = 0.003, at=None) -> StepResult:
    """Linearised implicit update with a trust region on the joint step.

    Solves ``(I - eta dV) step = eta V`` where ``V`` is the saddle field at
    ``at`` (default: the origin) and ``dV`` its Jacobian.  A singular system
    falls back to one explicit gradient descent-ascent step.
    """
    if not (eta > 0 and delta > 0):
        raise ValueError("eta and delta must be positive")
    g, hess, values = _local_model(state, at)
    v = saddle_field(g, state.n_alpha)
    dv = hess.copy()
    dv[:state.n_alpha] *= -1.0
    system = np.eye(v.size) - eta * dv
    fallback = False
    try:
        if np.linalg.cond(system) > _COND_LIMIT:
            raise np.linalg.LinAlgError("ill-conditioned implicit system")
        step = np.linalg.solve(system, eta * v)
    except np.linalg.LinAlgError as exc:
        log.debug("implicit step fell back to explicit GDA: %s", exc)
        step = eta * v
        fallback = True
    step, pre, clipped = _clip(step, delta)
    return _result(state, step, pre, clipped, fallback, values)


def gda_step(state, eta: float = 1.0, delta: float = 0.003, at=None) -> StepResult:
    """Explicit simultaneous gradient descent-ascent, trust-region clipped."""
    if not (eta > 0 and delta > 0):
        raise ValueError("eta and delta must be positive")
    if hasattr(state, "derivatives") and (at is None or not np.any(np.asarray(at) != 0)):
        g, _, values = state.derivatives()
    else:
        z0 = _origin(state, at)
        g = grad(state, z0)
        values = state.objective(z0[:state.n_alpha], z0[state.n_alpha:])
    step, pre, clipped = _clip(eta * saddle_field(g, state.n_alpha), delta)
    return _result(state, step, pre, clipped, False, values)
