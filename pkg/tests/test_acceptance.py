"""Acceptance suite: one PASS/FAIL line per criterion.

Every test prints its line to the terminal (even under output capture)
and then asserts the same condition, so ``pytest -v`` shows both.
"""

import time

import numpy as np
import pytest
from scipy.linalg import expm

from holinear.bump import globalize, make_bump, scale
from holinear.cli import run
from holinear.errors import InvertibilityLost, NotInvertibleBound, PreconditionLip, SeriesDiverged
from holinear.flows import VectorFieldDef, hartman_family, shilnikov_check, sweep_linearizations, time_one_map
from holinear.linearize import anisotropic_norms, apply_H_s, plan_saddle
from holinear.maps import MapBundle, PolyMap, builtin, invert_point
from holinear.pipeline import linearize_map, provider
from holinear.regularity import (
    SamplePlan,
    bound_compose,
    bound_inverse,
    bound_power,
    estimate_holder,
    regularity_at,
)
from holinear.spectral import adapted_norm, as_operator, opnorm, spectral_radius, vnorm

from oracles import grid_points, hartman_closed_form, picard_phi, random_contracting


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail, elapsed, budget):
        ok = bool(ok) and elapsed <= budget
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail} [{elapsed:.1f}s / {budget:g}s]")
        assert ok, detail
    return emit


# ---------------------------------------------------------------------------
# 1. resonance dichotomy on the Hartman map


def test_criterion_1_hartman_nonresonant(verdict):
    t0 = time.perf_counter()
    res = linearize_map(builtin("hartman", [4, 3, 0.5, 1]), 0.5, n_samples=10_000, certificate=False)
    r = res.effective_radius
    X = np.random.default_rng(11).uniform(-1, 1, (10_000, 3)) * r
    plateau_err = float(np.abs(res.R(X) - hartman_closed_form(X)).max())
    P = np.array([[1e-30 * r, 0.0, 0.5 * r], [-1e-30 * r, 0.0, -0.9 * r]])
    coef = res.R(P)[:, 1] / (P[:, 0] * P[:, 2])
    coef_err = float(np.abs(coef - 3.0).max())
    rep = res.report
    elapsed = time.perf_counter() - t0
    ok = (rep.residual_sup <= 1e-8 and rep.residual_samples >= 10_000
          and plateau_err <= 1e-8 and coef_err <= 3e-6)
    verdict(1, ok, f"b=3 residual {rep.residual_sup:.2e} over {rep.residual_samples} samples, "
            f"plateau sup error {plateau_err:.2e} (r={r:.2e}), xz coefficient error {coef_err:.1e}",
            elapsed, 10)


def test_criterion_1_hartman_resonant(verdict):
    t0 = time.perf_counter()
    ratio = None
    try:
        linearize_map(builtin("hartman", [4, 2, 0.5, 1]), 0.5, n_samples=10_000)
    except SeriesDiverged as exc:
        ratio = exc.diagnostic["term_ratio"]
    elapsed = time.perf_counter() - t0
    verdict(1, ratio is not None and ratio >= 0.999, f"b=2 SeriesDiverged with term ratio {ratio}", elapsed, 10)


# ---------------------------------------------------------------------------
# 2. series against brute-force Picard iteration


def test_criterion_2_picard_oracle(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_err, worst_res, ok = 0.0, 0.0, True
    tol_tail = 1e-10
    for i in range(10):
        d = 1 + i % 3
        T = random_contracting(rng, d)
        res = linearize_map(T, 0.5, tol_tail=tol_tail, n_samples=2000, certificate=False)
        r = res.effective_radius
        phi = picard_phi(T, r, {1: 30, 2: 16, 3: 9}[d])
        G = grid_points(d, r)
        err = float(np.abs(res.R(G) - G - phi(G)).max())
        worst_err = max(worst_err, err)
        worst_res = max(worst_res, res.report.residual_sup)
        ok &= err <= 1e-8 and res.report.residual_sup <= 10 * tol_tail
    elapsed = time.perf_counter() - t0
    verdict(2, ok, f"10 maps, max |phi - phi_picard| {worst_err:.1e}, max residual {worst_res:.1e}", elapsed, 60)


# ---------------------------------------------------------------------------
# 3. adapted norm


def random_stable_matrix(rng):
    d = int(rng.integers(1, 6))
    M = rng.normal(size=(d, d))
    if rng.random() < 0.3:
        # non-normal: a Jordan-like block
        M = np.triu(M) + np.diag(np.full(d, rng.normal()))
    rho = spectral_radius(M)
    return M * rng.uniform(0.05, 0.98) / rho


def test_criterion_3_adapted_norm(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst, ok = -np.inf, True
    for _ in range(100):
        L = random_stable_matrix(rng)
        eps = float(rng.uniform(0.01, 0.2))
        rho = spectral_radius(L)
        N = adapted_norm(L, eps)
        V = rng.normal(size=(1000, L.shape[0])) * rng.uniform(1e-3, 1e3, size=(1000, 1))
        nv = N(V)
        sup = vnorm(V)
        gap = N(V @ L.T) - ((rho + eps) * nv + 1e-9)
        worst = max(worst, float(gap.max()))
        ok &= bool(np.all(gap <= 0) and np.all(sup <= nv * (1 + 1e-12)) and np.all(nv <= N.K * sup * (1 + 1e-12)))
    elapsed = time.perf_counter() - t0
    verdict(3, ok, f"100 matrices x 1000 vectors, max of |Lv|_1 - (rho+eps)|v|_1 - 1e-9 = {worst:.2e}",
            elapsed, 10)


# ---------------------------------------------------------------------------
# 4. soundness of the Hoelder calculus


class Probe:
    """Minimal map object for the sampled estimators: only a Jacobian."""

    is_global = False

    def __init__(self, dim, delta, jacobian):
        self.dim, self.delta, self.jacobian = dim, delta, jacobian


def random_poly(rng, d, L, scale_=0.3):
    terms = []
    for _ in range(4):
        e = rng.multinomial(int(rng.integers(2, 4)), np.ones(d) / d)
        terms.append((float(rng.normal() * scale_), [int(v) for v in e], int(rng.integers(d))))
    return MapBundle(L, PolyMap(d, terms), 1.0)


def random_matrix(rng, d, lo, hi):
    Q = np.eye(d) + 0.2 * rng.normal(size=(d, d))
    return Q @ np.diag(rng.uniform(lo, hi, d) * rng.choice([-1, 1], d)) @ np.linalg.inv(Q)


def compose_case(rng, k, a):
    d = int(rng.integers(1, 4))
    S, T = random_poly(rng, d, random_matrix(rng, d, 0.5, 2.0)), random_poly(rng, d, random_matrix(rng, d, 0.5, 2.0))
    r = 0.1
    bT = regularity_at(T, a, r)
    lipT = opnorm(T.L.entries) + bT.lip
    bS = regularity_at(S, a, lipT * r)
    lipS = opnorm(S.L.entries) + bS.lip
    out = bound_compose(bS, bT, lipS, lipT)

    def jac(X):
        return S.jacobian(T.eval(X)) @ T.jacobian(X)

    est = estimate_holder(Probe(d, r, jac), a, SamplePlan(2048, 2048, k, r))
    return est.lip - out.lip_map, est.hol - out.hol


def inverse_case(rng, k, a):
    d = int(rng.integers(1, 4))
    T = random_poly(rng, d, random_matrix(rng, d, 1.5, 3.0))
    r = 0.1
    b = regularity_at(T, a, r)
    out = bound_inverse(b, T.L)
    rho = out.domain_radius
    Li = T.L.inverse

    def jac(Y):
        W = invert_point(T.with_delta(r), Y, lip=b.lip)
        return np.linalg.inv(T.jacobian(W))

    plan = SamplePlan(1024, 1024, k, rho)
    est = estimate_holder(Probe(d, rho, jac), a, plan)
    g = estimate_holder(Probe(d, rho, lambda Y: jac(Y) - Li), a, plan)
    return est.lip - out.lip_map, g.lip - out.lip, g.hol - out.hol


def power_case(rng, k, a):
    d = int(rng.integers(1, 4))
    T = random_poly(rng, d, random_matrix(rng, d, 1.1, 1.8))
    m = int(rng.integers(2, 5))
    r = 0.02
    b0 = regularity_at(T, a, 1.0)
    lipT = opnorm(T.L.entries) + b0.lip
    b = regularity_at(T, a, min(1.0, lipT ** (m - 1) * r))
    lipT = opnorm(T.L.entries) + b.lip
    out = bound_power(b, T.L, m, lipT)
    Lm = np.linalg.matrix_power(T.L.entries, m)

    def jac(X):
        J = np.broadcast_to(np.eye(d), (len(X), d, d))
        for _ in range(m):
            J = T.jacobian(X) @ J
            X = T.eval(X)
        return J - Lm

    est = estimate_holder(Probe(d, r, jac), a, SamplePlan(2048, 2048, k, r))
    return est.lip - out.lip, est.hol - out.hol


def globalize_case(rng, k, a):
    d = int(rng.integers(1, 4))
    terms = [(rng.normal() * 0.2, list(rng.multinomial(2, np.ones(d) / d)), int(rng.integers(d))) for _ in range(4)]
    T = MapBundle(random_matrix(rng, d, 1.5, 2.5), PolyMap(d, terms), 1.0)
    delta = float(rng.uniform(0.02, 0.1))
    S = globalize(T, scale(make_bump(0.5, d), delta), a, n_verify=1024, seed=k)
    est = estimate_holder(S, a, SamplePlan(2048, 2048, k + 1, 1.6 * delta))
    return est.lip - S.lip_g, est.hol - S.hol_g


def test_criterion_4_calculus_soundness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    kinds = [compose_case, inverse_case, power_case, globalize_case]
    worst = {f.__name__: -np.inf for f in kinds}
    for k in range(50):
        f = kinds[k % 4]
        a = float(rng.uniform(0.2, 1.0))
        while True:
            # redraw until the case satisfies the rule's preconditions
            try:
                gaps = f(rng, k, a)
                break
            except (InvertibilityLost, NotInvertibleBound, PreconditionLip):
                continue
        worst[f.__name__] = max(worst[f.__name__], *gaps)
    elapsed = time.perf_counter() - t0
    ok = all(v <= 1e-9 for v in worst.values())
    detail = ", ".join(f"{k.split('_')[0]} {v:.1e}" for k, v in worst.items())
    verdict(4, ok, f"50 cases, max(empirical - bound): {detail}", elapsed, 60)


# ---------------------------------------------------------------------------
# 5. contraction of H_s


def h_contraction(T, du, alpha=0.5):
    Tw = MapBundle(T.L, T.f, T.delta, T.name, dim_u=du, check=False)
    A = as_operator(T.L.entries[:du, :du])
    B = as_operator(T.L.entries[du:, du:])
    prov = provider(Tw, alpha)
    bump = make_bump(0.5, T.dim)
    plan = plan_saddle(A, B, alpha, prov(Tw.delta), regularity=prov, bump=bump)
    S = globalize(Tw, scale(bump, plan.delta), alpha, reg=prov(plan.delta))
    Ainv = np.linalg.inv(A.entries)

    def dpsi(X):
        return Ainv @ S.nonlinear_jacobian(X)[:, :du, :]

    dpsi.dim = T.dim
    Hm = apply_H_s(dpsi, S, np.linalg.matrix_power(Ainv, plan.m), plan.m)
    before = anisotropic_norms(dpsi, plan, 20_000, du).norm
    after = anisotropic_norms(Hm, plan, 20_000, du).norm
    return after / before, plan.tau_m


def test_criterion_5_h_contraction(verdict):
    t0 = time.perf_counter()
    cases = [
        (builtin("hartman", [4, 3, 0.5, 1]), 2),
        (builtin("hartman", [3, 2.5, 0.4, 1]), 2),
        (builtin("planted", [2, 0.5, 0.5, 1]), 1),
        (MapBundle(np.diag([2.0, 0.5]), PolyMap(2, [(0.3, [1, 1], 0), (0.2, [1, 2], 1)]), 1.0, "poly2d"), 1),
        (MapBundle(np.diag([3.0, 0.5, 0.4]),
                   PolyMap(3, [(0.2, [1, 1, 0], 1), (0.1, [1, 0, 1], 2), (0.3, [0, 1, 1], 0)]), 1.0, "poly3d"), 1),
    ]
    worst, ok = 0.0, True
    for T, du in cases:
        ratio, tau = h_contraction(T, du)
        worst = max(worst, ratio / tau)
        ok &= ratio <= 1.05 * tau
    elapsed = time.perf_counter() - t0
    verdict(5, ok, f"5 saddles, max contraction / tau_m = {worst:.3f}", elapsed, 30)


# ---------------------------------------------------------------------------
# 6. C^{1,beta} certificate


def test_criterion_6_certificate(verdict):
    t0 = time.perf_counter()
    res = linearize_map(builtin("planted", [2, 0.5, 0.5, 1]), 0.5, n_samples=10_000)
    beta, fit, _ = res.certificate
    elapsed = time.perf_counter() - t0
    ok = fit.beta_hat >= beta - 0.05 and fit.r2 >= 0.9
    verdict(6, ok, f"beta_hat {fit.beta_hat:.3f} vs beta {beta:.3f}, r2 {fit.r2:.3f}, "
            f"{fit.n_pairs_used} pairs used", elapsed, 30)


# ---------------------------------------------------------------------------
# 7. flow layer


SHILNIKOV_CASES = [
    ([-0.5 + 2j, -0.5 - 2j, 1.0], True),
    ([-1.5 + 2j, -1.5 - 2j, 1.0], False),
    ([-1.0, -2.0, 1.0], False),
    ([0.5 + 1j, 0.5 - 1j, 1.0], False),
    ([-0.5 + 1j, -0.5 - 1j, -1.0], False),
    ([-1.0 + 1j, -1.0 - 1j, 1.0], False),
    ([-0.1 + 3j, -0.1 - 3j, 0.2], True),
    ([-2.0 + 0.5j, -2.0 - 0.5j, 2.5], True),
]


def shilnikov_oracle(ev):
    ev = np.asarray(ev, dtype=complex)
    cpx = ev[np.abs(ev.imag) > 0]
    real = ev[ev.imag == 0].real
    if len(cpx) != 2 or len(real) != 1:
        return False
    a, c = cpx[0].real, real[0]
    return a < 0 < c and a + c > 0


def test_criterion_7_flows(verdict):
    t0 = time.perf_counter()
    DX0 = np.diag([1.0, 1.5, -1.0])
    T = time_one_map(VectorFieldDef(DX0), h=1e-3)
    err = float(np.abs(T.L.entries - expm(DX0)).max())
    agree = 0
    for ev, expected in SHILNIKOV_CASES:
        got, _ = shilnikov_check(eigenvalues=ev)
        agree += got == expected == shilnikov_oracle(ev)
    elapsed = time.perf_counter() - t0
    verdict(7, err <= 1e-6 and agree == 8, f"|T1 - expm| = {err:.1e}, Shilnikov {agree}/8 agree", elapsed, 10)


# ---------------------------------------------------------------------------
# 8. parameter continuity on the Hartman family


def hartman_probe(R, r):
    p = np.array([[1e-30 * r, 0.0, 0.5 * r]])
    return float(R(p)[0, 1] / (p[0, 0] * p[0, 2]))


def test_criterion_8_parameter_continuity(verdict):
    t0 = time.perf_counter()
    fam = hartman_family(np.linspace(0.0, 0.1, 21))
    coarse = sweep_linearizations(fam, 0.5, n_samples=256, probe=hartman_probe)
    fine = sweep_linearizations(fam.refined(), 0.5, n_samples=256, probe=hartman_probe, delta=coarse.delta)
    b = 3.0 + fam.lambdas
    got = np.array([row.get("probe", np.nan) for row in coarse.rows])
    coef_err = float(np.nanmax(np.abs(got / (b / (b - 2.0)) - 1.0))) if np.all(np.isfinite(got)) else np.inf
    fixed = max(float(np.abs(row["p"]).max()) for row in coarse.rows)
    ratio = fine.metric / coarse.metric if coarse.metric else np.nan
    elapsed = time.perf_counter() - t0
    ok = coef_err <= 1e-6 and fixed == 0.0 and abs(ratio - 0.5) <= 0.05 and not coarse.errors and not fine.errors
    verdict(8, ok, f"21 members, coefficient rel. error {coef_err:.1e}, fixed points {fixed:g}, "
            f"refinement ratio {ratio:.3f}", elapsed, 120)


# ---------------------------------------------------------------------------
# 9. determinism


def test_criterion_9_determinism(verdict, tmp_path):
    t0 = time.perf_counter()
    codes = [run(["examples", "--out", str(tmp_path / name)]) for name in ("a", "b")]
    same = (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    elapsed = time.perf_counter() - t0
    verdict(9, same and codes == [0, 0], f"two gallery runs, exit codes {codes}, report.json identical: {same}",
            elapsed, 60)
