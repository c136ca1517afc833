import numpy as np
import pytest
from numpy.testing import assert_allclose

from holinear.errors import NonHyperbolic, SingularOperator
from holinear.spectral import (
    Operator,
    adapted_norm,
    classify,
    condition_number,
    leading_splitting,
    spectral_info,
    spectral_radius,
    split,
)


def rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def charpoly_radius(M):
    # independent oracle: roots of the characteristic polynomial
    return np.abs(np.roots(np.poly(M))).max()


def test_spectral_radius_examples():
    assert_allclose(spectral_radius(np.eye(3)), 1.0)
    assert_allclose(spectral_radius(np.diag([4.0, 2.0])), 4.0)
    assert_allclose(spectral_radius([[0.5, 1.0], [0.0, 0.5]]), 0.5, rtol=1e-9)


def test_spectral_radius_matches_charpoly():
    rng = np.random.default_rng(3)
    for _ in range(20):
        M = rng.normal(size=(4, 4))
        assert_allclose(spectral_radius(M), charpoly_radius(M), rtol=1e-8)


def test_singular_rejected():
    with pytest.raises(SingularOperator):
        Operator(np.zeros((2, 2)))


def test_condition_number_examples():
    assert_allclose(condition_number(np.eye(2)), 1.0)
    assert_allclose(condition_number(np.diag([4.0, 2.0])), 2.0)
    assert_allclose(condition_number(0.9 * rot(0.7)), 1.0, atol=1e-12)


def test_condition_number_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(100):
        M = rng.normal(size=(3, 3)) + 3 * np.eye(3)
        c = condition_number(M)
        assert c >= 1 - 1e-12
        assert_allclose(c, condition_number(np.linalg.inv(M)), rtol=1e-9)


def test_spectral_info_order():
    info = spectral_info([[0.5, 1.0], [0.0, 0.3]])
    assert info.min_norm <= info.rho + 1e-12
    assert info.cond >= 1.0
    assert abs(info.gelfand_trace[-1] - info.rho) < 1e-6


def test_adapted_norm_trivial():
    N = adapted_norm(np.diag([0.5]), 0.1)
    assert N.K == 1.0
    assert N.operator_norm(np.diag([0.5])) <= 0.6


def test_adapted_norm_jordan():
    L = np.array([[0.5, 1.0], [0.0, 0.5]])
    N = adapted_norm(L, 0.1)
    assert N.operator_norm(L) <= 0.6 + 1e-9
    v = np.random.default_rng(1).normal(size=(1000, 2))
    nv = N(v)
    assert np.all(N(v @ L.T) <= 0.6 * nv + 1e-9)
    sup = np.abs(v).max(axis=1)
    assert np.all(sup <= nv + 1e-12)
    assert np.all(nv <= N.K * sup + 1e-12)


def test_adapted_norm_identity():
    N = adapted_norm(np.eye(2), 0.5)
    assert N.operator_norm(np.eye(2)) <= 1.5


def test_split_block():
    sp = split(np.diag([4.0, 2.0, 0.5]))
    assert sp.dim_u == 2 and sp.dim_s == 1
    assert_allclose(np.sort(np.diag(sp.A.entries)), [2.0, 4.0])
    assert_allclose(sp.B.entries, [[0.5]])


def test_split_rotation_block():
    L = np.zeros((3, 3))
    L[:2, :2] = 1.1 * rot(0.4)
    L[2, 2] = 0.3
    sp = split(L)
    assert sp.dim_u == 2
    assert_allclose(np.abs(np.linalg.eigvals(sp.A.entries)), [1.1, 1.1])
    assert_allclose(sp.B.entries, [[0.3]], atol=1e-12)
    assert_allclose(sp.cobasis @ L @ sp.basis, sp.block, atol=1e-10)


def test_split_unit_eigenvalue():
    with pytest.raises(NonHyperbolic):
        split(np.diag([1.0, 0.5]))


def test_classify_resonant_hartman():
    rep = classify(np.diag([4.0, 2.0, 0.5]), 0.5)
    assert_allclose(rep.c_h, 2.0)
    assert_allclose(rep.rho_h, 0.5)
    assert not rep.alpha_hyperbolic
    assert rep.alpha_star is None
    assert rep.resonant


def test_classify_nonresonant_hartman():
    rep = classify(np.diag([4.0, 3.0, 0.5]), 0.5)
    assert rep.alpha_hyperbolic
    assert_allclose(rep.alpha_star, np.log(4 / 3) / np.log(2), rtol=1e-9)
    assert_allclose(rep.c_h * rep.rho_h ** rep.alpha_star, 1.0, atol=1e-9)


def test_classify_bicircular():
    L = np.zeros((4, 4))
    L[:2, :2] = 2 * rot(0.3)
    L[2:, 2:] = 0.5 * rot(1.1)
    for a in (0.1, 0.5, 0.99):
        rep = classify(L, a)
        assert rep.is_bicircular and rep.alpha_hyperbolic


def test_classify_similarity_invariant():
    rng = np.random.default_rng(5)
    L = np.diag([4.0, 3.0, 0.5])
    base = classify(L, 0.5)
    for _ in range(5):
        P = np.eye(3) + 0.2 * rng.normal(size=(3, 3))
        rep = classify(P @ L @ np.linalg.inv(P), 0.5)
        assert rep.cls == base.cls
        assert_allclose([rep.c_h, rep.rho_h, rep.alpha_star], [base.c_h, base.rho_h, base.alpha_star], rtol=1e-6)


def test_rho_h_of_inverse():
    L = np.diag([4.0, 3.0, 0.5])
    a = classify(L, 0.5)
    b = classify(np.linalg.inv(L), 0.5)
    assert_allclose(a.rho_h, b.rho_h, rtol=1e-12)


def test_leading_splitting():
    sp = leading_splitting(np.diag([4.0, 2.0, 0.5, 0.1]))
    assert_allclose(sp.A.entries, [[2.0]])
    assert_allclose(sp.B.entries, [[0.5]])
    sp = leading_splitting(np.diag([3.0, 0.5]))
    assert sp.dim_u + sp.dim_s == 2


def test_leading_complex_pair():
    L = np.zeros((4, 4))
    L[0, 0] = 3.0
    L[1:3, 1:3] = 2 * rot(0.8)
    L[3, 3] = 0.5
    sp = leading_splitting(L)
    assert sp.dim_u == 2
    assert_allclose(np.abs(np.linalg.eigvals(sp.A.entries)), [2.0, 2.0])
