import numpy as np
import pytest

from advot.core import RepresenterEnsemble
from advot.maps import ElementaryMap, Monomials
from advot.saddle import (FixedFeatureState, SaddleState, fd_hessian, gda_step, grad,
                          implicit_step, saddle_field)


class Quadratic:
    """J = a^T P a / 2 + a^T C b - b^T Q b / 2 in closed form."""

    def __init__(self, P, C, Q):
        self.P, self.C, self.Q = map(np.atleast_2d, (P, C, Q))
        self.n_alpha, self.n_beta = self.C.shape

    def objective(self, a, b):
        a, b = np.asarray(a, float), np.asarray(b, float)
        j = 0.5 * a @ self.P @ a + a @ self.C @ b - 0.5 * b @ self.Q @ b
        return j, 0.0, j


def bilinear():
    return Quadratic([[0.0]], [[1.0]], [[0.0]])


def kernel_state(rng, d, family="radial_erf", n=30, m=25, n_r=7):
    x = rng.normal(size=(n, d))
    z = x + 0.3 * rng.normal(size=(n, d))
    y = rng.normal(size=(m, d)) + 0.5
    ens = RepresenterEnsemble(0.7 * rng.normal(size=(n_r, d)), 0.7 * rng.normal(size=(n_r, d)),
                              rng.uniform(0.5, 1.5, n_r), rng.uniform(0.5, 1.5, n_r))
    sk = ElementaryMap.zeros(family, d, rng.normal(size=(2, d)) if family != "multinomial" else None,
                             0.3, degree=3)
    return SaddleState(x, z, y, ens, sk)


def test_fd_gradient_toy_objectives():
    q = Quadratic([[1.0]], [[0.0]], [[1.0]])
    assert np.allclose(grad(q), [0.0, 0.0])
    assert np.allclose(grad(bilinear(), at=[1.0, 2.0]), [2.0, 1.0], atol=1e-8)


def test_fd_hessian_of_quadratic():
    q = Quadratic([[2.0, 0.5], [0.5, 1.0]], [[1.0], [-1.0]], [[3.0]])
    h = fd_hessian(q, at=[0.3, -0.2, 0.1])
    expect = np.block([[q.P, q.C], [q.C.T, -q.Q]])
    assert np.allclose(h, expect, atol=1e-6)


def test_identity_step_values():
    rng = np.random.default_rng(0)
    st = kernel_state(rng, 2)
    st0 = SaddleState(st.source, st.source, st.target, st.ensemble, st.skeleton)
    j, cost, cons = st0.objective(np.zeros(st0.n_alpha), np.zeros(st0.n_beta))
    assert cost == 0.0
    same = SaddleState(st.source, st.source, st.source, st.ensemble, st.skeleton)
    assert same.objective(np.zeros(same.n_alpha), np.zeros(same.n_beta))[2] == 0.0


def test_two_point_hand_objective():
    # x = {0, 1}, y = {0, 1}, one representer per cloud, sigma = 1
    x = np.array([[0.0], [1.0]])
    z = np.array([[0.5], [1.0]])
    ens = RepresenterEnsemble([[0.0]], [[1.0]], [1.0], [1.0])
    sk = ElementaryMap.zeros("radial_iq", 1, [[0.0]])
    st = SaddleState(x, z, x, ens, sk)
    k = lambda a, b: np.exp(-0.5 * (a - b) ** 2)
    cost = 0.5 * (0.25 + 0.0) / 2
    f = lambda v: k(0.0, v) - k(1.0, v)
    cons = (f(0.5) + f(1.0)) / 2 - (f(0.0) + f(1.0)) / 2
    j, c, s = st.objective(np.zeros(4), np.zeros(4))
    assert (c, s) == pytest.approx((cost, cons), abs=1e-15)
    # f(0.5) = 0 by symmetry and the target terms cancel: J = 1/16 + (e^-1/2 - 1)/2
    assert j == pytest.approx(0.0625 + (np.exp(-0.5) - 1) / 2, abs=1e-15)


@pytest.mark.parametrize("family", ["radial_iq", "radial_erf", "multinomial"])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_analytic_derivatives_match_fd(family, d):
    st = kernel_state(np.random.default_rng(10 * d), d, family)
    g, h, vals = st.derivatives()
    assert np.allclose(g, grad(st), rtol=1e-6, atol=1e-9 * np.abs(g).max())
    assert np.allclose(h, fd_hessian(st), atol=1e-5 * np.abs(h).max())
    assert vals == pytest.approx(st.objective(np.zeros(st.n_alpha), np.zeros(st.n_beta)))


def test_analytic_derivatives_only_at_origin():
    st = kernel_state(np.random.default_rng(0), 1)
    with pytest.raises(ValueError):
        st.derivatives(at=np.ones(st.n_alpha + st.n_beta))


def test_fixed_feature_derivatives_match_fd():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(40, 2))
    st = FixedFeatureState(x, x + 0.1, rng.normal(size=(30, 2)) + 1, Monomials(2, 2),
                           0.2 * rng.normal(size=5))
    g, h, _ = st.derivatives()
    assert np.allclose(g, grad(st), atol=1e-8)
    assert np.allclose(h, fd_hessian(st), atol=1e-5)


def test_saddle_field_signs():
    assert np.array_equal(saddle_field([1.0, 2.0, 3.0], 1), [-1.0, 2.0, 3.0])


def test_bilinear_implicit_contracts_gda_expands():
    # closed form: implicit iteration matrix has modulus 1/sqrt(1+eta^2) < 1,
    # explicit GDA has sqrt(1+eta^2) > 1
    eta = 0.1
    z = np.array([1.0, 1.0])
    zi = z.copy()
    zg = z.copy()
    for _ in range(100):
        si = implicit_step(bilinear(), eta, delta=10.0, at=zi)
        sg = gda_step(bilinear(), eta, delta=10.0, at=zg)
        ni = np.linalg.norm(zi + np.r_[si.d_alpha, si.d_beta])
        ng = np.linalg.norm(zg + np.r_[sg.d_alpha, sg.d_beta])
        assert ni < np.linalg.norm(zi)
        assert ng > np.linalg.norm(zg)
        zi = zi + np.r_[si.d_alpha, si.d_beta]
        zg = zg + np.r_[sg.d_alpha, sg.d_beta]
    assert np.linalg.norm(zi) == pytest.approx(np.sqrt(2) * (1 + eta**2) ** -50, rel=1e-4)


def test_equilibrium_gives_zero_step():
    res = implicit_step(Quadratic([[1.0]], [[0.5]], [[1.0]]), 1.0, 0.003)
    assert res.norm == 0.0 and not res.clipped


class Tilted(Quadratic):
    """Quadratic plus a linear term g . (a, b)."""

    def __init__(self, P, C, Q, g):
        super().__init__(P, C, Q)
        self.g = np.asarray(g, float)

    def objective(self, a, b):
        j = super().objective(a, b)[0] + self.g @ np.r_[a, b]
        return j, 0.0, j


def test_clipping_to_trust_region():
    # V = (-dJ/da, dJ/db) = (0.006, 0); unclipped step 0.006 = 2 delta
    res = implicit_step(Tilted([[0.0]], [[0.0]], [[0.0]], [-0.006, 0.0]), 1.0, 0.003)
    assert res.pre_clip_norm == pytest.approx(0.006, rel=1e-6)
    assert res.norm == pytest.approx(0.003, rel=1e-12) and res.clipped


def test_singular_system_falls_back_to_gda():
    # P = -1 gives dV_aa = 1, so I - eta dV vanishes in that entry for eta = 1
    res = implicit_step(Tilted([[-1.0]], [[0.0]], [[0.0]], [0.001, 0.0]), 1.0, 0.003)
    assert res.fallback
    assert np.allclose(res.d_alpha, [-0.001], atol=1e-9)


def test_step_norm_never_exceeds_delta():
    rng = np.random.default_rng(3)
    for _ in range(20):
        st = kernel_state(rng, 2)
        for opt in (implicit_step, gda_step):
            assert opt(st, 1.0, 0.003).norm <= 0.003 * (1 + 1e-12)


def test_bad_step_arguments():
    with pytest.raises(ValueError):
        implicit_step(bilinear(), 0.0, 0.1)
    with pytest.raises(ValueError):
        gda_step(bilinear(), 1.0, -0.1)
