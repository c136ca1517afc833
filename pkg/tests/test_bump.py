import numpy as np
import pytest
from numpy.testing import assert_allclose

from holinear.bump import axis_derivative_bounds, globalize, make_bump, scale, support_growth, support_radius
from holinear.errors import BadPlateau, InvertibilityLost
from holinear.maps import MapBundle, PolyMap, builtin
from holinear.regularity import SamplePlan, estimate_holder
from holinear.spectral import vnorm


def test_profile_constants():
    b = make_bump(0.5)
    assert b.lip_lambda == 3.0
    assert b.lip_dlambda == 24.0
    assert_allclose(b.hol_dlambda(0.5), min(24 * 2 ** 0.5, 24 ** 0.5 * 6 ** 0.5))
    with pytest.raises(BadPlateau):
        make_bump(1.0)


def test_plateau_and_support_exact():
    b = make_bump(0.5, 2)
    assert b.value(np.zeros(2)) == 1.0
    assert b.value([0.5, -0.5]) == 1.0
    assert b.value([1.0, 0.0]) == 0.0
    assert b.value([0.2, -1.3]) == 0.0


def test_profile_dominates_samples():
    for dim in (1, 2, 3):
        b = make_bump(0.5, dim)
        X = np.random.default_rng(dim).uniform(-1.1, 1.1, size=(4000, dim))
        G = b.gradient(X)
        assert np.abs(G).sum(axis=1).max() <= b.lip_lambda + 1e-12
        h = 1e-3 * np.random.default_rng(9).normal(size=X.shape)
        dG = np.abs(b.gradient(X + h) - G).sum(axis=1)
        assert np.max(dG / vnorm(h) ** 0.5) <= b.hol_dlambda(0.5) + 1e-9


def test_c1_across_seams():
    b = make_bump(0.5)
    for t in (0.5, 1.0):
        left = b.gradient([t - 1e-14])
        right = b.gradient([t + 1e-14])
        assert abs(left[0] - right[0]) < 1e-12


def test_scaling():
    p = make_bump(0.5)
    assert scale(p, 1.0).lip == p.lip_lambda
    assert_allclose(scale(p, 0.1).lip, 30.0)
    assert_allclose(scale(p, 0.01).hol(0.5), p.hol_dlambda(0.5) * 1e3)


def test_scaled_constants_vs_samples():
    s = scale(make_bump(0.5), 0.1)
    X = np.linspace(-0.12, 0.12, 20001)[:, None]
    g = s.gradient(X)[:, 0]
    assert_allclose(np.abs(g).max(), s.lip, rtol=0.05)


def test_globalize_zero():
    T = MapBundle(np.diag([2.0, 0.5]), PolyMap(2, []), 1.0)
    S = globalize(T, scale(make_bump(0.5, 2), 0.5))
    assert S.ns == 0.0
    X = np.random.default_rng(0).uniform(-3, 3, size=(100, 2))
    assert_allclose(S.eval(X), X @ T.L.entries.T)


def test_globalize_plateau_and_outside():
    T = builtin("saddle2d_quadratic", [2, 0.5, 0.1, 0.2, 0.3, -0.1, 0.2, 0.1])
    S = globalize(T, scale(make_bump(0.5, 2), 0.005))
    rng = np.random.default_rng(1)
    inner = rng.uniform(-0.0025, 0.0025, size=(200, 2))
    assert np.array_equal(S.eval(inner), T.eval(inner))
    outer = rng.uniform(0.005, 2, size=(200, 2)) * rng.choice([-1, 1], size=(200, 2))
    assert np.array_equal(S.eval(outer), outer @ T.L.entries.T)
    assert S.verified


def test_globalize_bounds_random():
    rng = np.random.default_rng(4)
    for k in range(20):
        d = int(rng.integers(1, 4))
        terms = [(rng.normal() * 0.2, list(rng.multinomial(2, np.ones(d) / d)), int(rng.integers(d))) for _ in range(4)]
        T = MapBundle(np.eye(d) * 2.0, PolyMap(d, terms), 1.0)
        S = globalize(T, scale(make_bump(0.5, d), 0.05), 0.5, n_verify=2048, seed=k)
        est = estimate_holder(S, 0.5, SamplePlan(2048, 2048, k + 1, 0.08))
        assert est.lip <= S.lip_g + 1e-9
        assert est.hol <= S.hol_g + 1e-9


def test_globalize_invertibility():
    T = MapBundle([[2.0]], PolyMap(1, [(5.0, [2], 0)]), 1.0)
    with pytest.raises(InvertibilityLost):
        globalize(T, scale(make_bump(0.5), 1.0))


def test_h_linear_preserved():
    T = builtin("hartman", [4, 3, 0.5, 1])
    T.dim_u = 2
    S = globalize(T, scale(make_bump(0.5, 3), 0.002))
    X = np.zeros((100, 3))
    X[:, :2] = np.random.default_rng(0).uniform(-0.3, 0.3, size=(100, 2))
    assert np.array_equal(S.eval(X), X @ T.L.entries.T)


def test_support_growth():
    assert support_radius(0.1, 2.1, 2.2, 0) == 0.1
    assert_allclose(support_radius(0.1, 2.1, 2.2, 3), 0.1 * 2.2 ** 3)
    assert support_radius(0.1, 0.5, 0.5, 2) == 0.1


def test_support_property():
    T = builtin("saddle2d_quadratic", [2, 0.5, 0.1, 0.2, 0.3, -0.1, 0.2, 0.1])
    S = globalize(T, scale(make_bump(0.5, 2), 0.005))
    dn = support_growth(S, 2)
    X = np.random.default_rng(3).uniform(-1, 1, size=(500, 2))
    X = X[vnorm(X) > dn]
    assert_allclose(S.eval(S.eval(X)), X @ (T.L.entries @ T.L.entries).T, rtol=0, atol=0)


def test_axis_derivative_bounds_hartman():
    T = builtin("hartman", [4, 3, 0.5, 1])
    T.dim_u = 2
    S = globalize(T, scale(make_bump(0.5, 3), 0.002))
    bx, by = axis_derivative_bounds(S, 1, 0.5)
    X = np.random.default_rng(5).uniform(-0.004, 0.004, size=(10_000, 3))
    J = S.nonlinear_jacobian(X)
    Jx = np.abs(J[:, :, :2]).sum(axis=2).max(axis=1)
    Jy = np.abs(J[:, :, 2:]).sum(axis=2).max(axis=1)
    assert np.all(Jx <= bx(X) + 1e-12)
    assert np.all(Jy <= by(X) + 1e-12)
    axis = X.copy()
    axis[:, 2] = 0
    assert np.abs(S.nonlinear_jacobian(axis)[:, :, :2]).max() == 0.0
