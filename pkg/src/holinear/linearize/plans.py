"""Constants planners.

Both planners work in the coordinates they are given and measure every
operator with the l-inf induced norm.  The pipeline always hands them
working coordinates (see spectral.split) where that norm is adapted to L.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from ..bump import make_bump, support_radius
from ..errors import CutoffNotFound, NotAlphaContracting, NotAlphaHyperbolic, PlanInfeasible
from ..regularity import RegularityBundle, bound_inverse, bound_power
from ..spectral import Operator, adapted_norm, as_operator, condition_number, opnorm, spectral_radius

MARGIN = 0.95
DELTA_FLOOR = 1e-8
SADDLE_DELTA_FLOOR = 1e-15
M_MAX = 64


def _clip(b, delta):
    """Lip(f, B_d) <= d^a Hol(Df, B_d) whenever Df(0) = 0."""
    lip = min(b.lip, b.hol * delta ** b.alpha)
    return RegularityBundle(b.alpha, lip, b.hol, delta, b.is_empirical)


def _provider(reg, regularity):
    if regularity is not None:
        return lambda d: _clip(regularity(d), d)
    return lambda d: _clip(reg, d)


def _first_root(fun, hi=1e6):
    """Largest e >= 0 with fun(e) < 0, for fun increasing and fun(0) < 0."""
    if fun(hi) < 0:
        return hi
    return brentq(fun, 0.0, hi, xtol=1e-15, rtol=1e-13)


# ---------------------------------------------------------------------------
# contracting case


@dataclass
class ContractionPlan:
    alpha: float
    m: int
    eps1: float
    delta: float
    K1: float
    K2: float
    tau1: float
    tau_m: float
    adapted: object = None
    lip: float = 0.0
    hol: float = 0.0
    hol_m: float = 0.0
    norm_L: float = 0.0
    norm_Linv: float = 0.0
    norm_Lm: float = 0.0
    norm_Lminus_m: float = 0.0
    slacks: dict = field(default_factory=dict)
    trace: list = field(default_factory=list, repr=False)

    def term_constant(self):
        """Multiplier C with |sum_{n>=N} H^n(L^{-1}f)(x)| <= C |x|^{1+a} tau_m^{floor(N/m)}."""
        return self.norm_Linv * self.hol * max(1.0, self.tau1) ** (self.m - 1) / (1.0 - self.tau_m)

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k not in ("adapted", "trace")}
        d["adapted"] = None if self.adapted is None else {"rho1": self.adapted.rho1, "q": self.adapted.q, "K": self.adapted.K}
        d["kind"] = "contraction"
        return d


def plan_contraction(L, reg, regularity=None):
    """Choose m, eps1 and delta so that H^m contracts with ratio tau_m < 0.95.

    ``reg`` bounds f on B_{reg.domain_radius}; the optional ``regularity``
    callable re-derives the bundle on smaller balls.
    """
    L = as_operator(L)
    alpha = reg.alpha
    rho = spectral_radius(L)
    c = condition_number(L)
    if rho >= 1.0 or c * rho ** alpha >= 1.0:
        raise NotAlphaContracting("c(L) rho(L)^alpha >= 1", c=c, rho=rho, alpha=alpha)
    nL = L.norm
    if nL >= 1.0:
        raise PlanInfeasible("|L| >= 1 in these coordinates", failed="norm_L_below_one", norm_L=nL)
    m = None
    for k in range(1, M_MAX + 1):
        if L.power_norm(-k) * L.power_norm(k) ** (1 + alpha) < MARGIN:
            m = k
            break
    if m is None:
        raise PlanInfeasible("no m <= M_MAX makes the m-step ratio small", failed="m_search", m_max=M_MAX)
    a, ai = L.power_norm(m), L.power_norm(-m)
    slacks = {
        "norm_L": 1.0 - nL,
        "min_norm_L": L.min_norm,
        "norm_Lm": 1.0 - a,
        "min_norm_Lminus_m": 1.0 / a,
        "m_step_ratio": (MARGIN / ai) ** (1.0 / (1 + alpha)) - a,
    }
    eps1 = 0.5 * min(slacks.values())
    try:
        adapted = adapted_norm(L, eps=0.5 * (1.0 - rho))
    except CutoffNotFound:
        adapted = None

    provide = _provider(reg, regularity)
    delta = float(reg.domain_radius)
    trace = []
    while delta >= DELTA_FLOOR:
        b = provide(delta)
        lipT = max(1.0, nL + b.lip)
        bm = bound_power(b, L, m, lipT)
        lip_m = min(bm.lip, bm.hol * delta ** alpha)
        K1 = ai * (a + eps1) ** alpha * delta ** alpha * bm.hol
        K2 = ai * (a + eps1) ** (1 + alpha)
        tau_m = K1 + K2
        tau1 = L.inv_norm * (nL + eps1) ** alpha * delta ** alpha * b.hol + L.inv_norm * (nL + eps1) ** (1 + alpha)
        row = {"delta": delta, "lip": b.lip, "lip_m": lip_m, "tau_m": tau_m}
        trace.append(row)
        failed = None
        if b.lip >= eps1:
            failed = "lip_f"
        elif lip_m >= eps1:
            failed = "lip_f_m"
        elif tau_m >= MARGIN:
            failed = "tau_m"
        row["failed"] = failed
        if failed is None:
            return ContractionPlan(
                alpha, m, eps1, delta, K1, K2, tau1, tau_m, adapted,
                b.lip, b.hol, bm.hol, nL, L.inv_norm, a, ai, slacks, trace,
            )
        delta *= 0.5
    raise PlanInfeasible("delta underflow", failed=trace[-1]["failed"] if trace else None, trace=trace[-6:])


# ---------------------------------------------------------------------------
# saddle case


@dataclass
class SaddlePlan:
    alpha: float
    m: int
    eps: float
    eta: object
    beta: object
    delta: float
    K: tuple
    Ktilde: tuple
    K_u: tuple
    tau1: float
    tau_m: float
    tau_u: float
    tau_tilde_m: float
    certified: bool
    bump_c: float
    C1: float
    C2: float
    lip_fS: float
    hol_S: float
    hol_m: float
    hol_gm: float
    hol_g: float
    lip_S: float
    lip_Sinv: float
    delta_m: float
    norms: dict = field(default_factory=dict)
    slacks: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    trace: list = field(default_factory=list, repr=False)

    @property
    def tau_series(self):
        """Ratio per m-block used by the truncation bounds."""
        return max(self.tau_m, self.tau_u)

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k != "trace"}
        d["K"], d["Ktilde"], d["K_u"] = list(self.K), list(self.Ktilde), list(self.K_u)
        d["kind"] = "saddle"
        return d


def _saddle_norms(A, B, m):
    return {
        "A": A.norm, "Ainv": A.inv_norm, "B": B.norm, "Binv": B.inv_norm,
        "Am": A.power_norm(m), "Aminus_m": A.power_norm(-m),
        "Bm": B.power_norm(m), "Bminus_m": B.power_norm(-m),
    }


def _eta_for(c0, a, b, alpha):
    """Smallest eta in (0, 1) with c0 a b^{a eta} a^{a(1-eta)} <= target,
    target halfway between the eta = 1 value and the margin."""
    lhs = lambda eta: c0 * a * b ** (alpha * eta) * a ** (alpha * (1 - eta))
    target = 0.5 * (lhs(1.0) + MARGIN)
    if lhs(0.0) <= target:
        return 1e-6
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if lhs(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def plan_saddle(A, B, alpha, reg, regularity=None, bump=None, strict=True):
    """Choose m, eps, eta and delta for the globalized saddle series.

    ``reg``/``regularity`` bound the local nonlinear part on B_delta; the
    globalized constants follow from the bump factors C1, C2.  With
    ``strict=False`` a saddle that is hyperbolic but not alpha-hyperbolic
    gets an uncertified plan (m = 1, no eta) instead of an error.
    """
    A, B = as_operator(A), as_operator(B)
    du, ds = A.dim, B.dim
    cA, cB = condition_number(A), condition_number(B)
    c_h = max(cA, cB)
    rho_h = max(spectral_radius(A.inverse), spectral_radius(B))
    if rho_h >= 1.0:
        raise NotAlphaHyperbolic("blocks are not expanding/contracting", rho_h=rho_h)
    hyper = c_h * rho_h ** alpha < 1.0
    warnings = []
    if not hyper:
        if strict:
            raise NotAlphaHyperbolic("c_h rho_h^alpha >= 1", c_h=c_h, rho_h=rho_h, alpha=alpha)
        warnings.append("not_alpha_hyperbolic_uncertified_plan")
    if A.inv_norm >= 1.0 or B.norm >= 1.0:
        raise PlanInfeasible("single-step norms |A^-1|, |B| must be < 1", failed="single_step_norms",
                             Ainv=A.inv_norm, B=B.norm)
    if bump is None:
        bump = make_bump(0.5, du + ds)
    L = Operator(np.block([[A.entries, np.zeros((du, ds))], [np.zeros((ds, du)), B.entries]]))
    mL, nL = L.min_norm, L.norm
    C1, C2 = bump.C1(), bump.C2(alpha)

    if hyper:
        m = None
        for k in range(1, M_MAX + 1):
            g_s = A.power_norm(-k) * A.power_norm(k) * B.power_norm(k) ** alpha
            g_u = B.power_norm(-k) * B.power_norm(k) * A.power_norm(-k) ** alpha
            if g_s < MARGIN and g_u < MARGIN:
                m = k
                break
        if m is None:
            raise PlanInfeasible("no m <= M_MAX satisfies the m-step ratios", failed="m_search", m_max=M_MAX)
    else:
        m = 1
    N = _saddle_norms(A, B, m)
    a, ai, b, bi = N["Am"], N["Aminus_m"], N["Bm"], N["Bminus_m"]
    slacks = {
        "growth_m": min(1.0 / ai, 1.0 / b) - 1.0,
        "single_step": 1.0 - max(N["Ainv"], N["B"]),
    }
    if hyper:
        slacks["ratio_s"] = _first_root(lambda e: ai * (a + e) * (b + e) ** alpha - MARGIN)
        slacks["ratio_u"] = _first_root(lambda e: b * (bi + e) * (ai + e) ** alpha - MARGIN)
        eps = 0.5 * min(slacks.values())
        eta = max(_eta_for(ai, a + eps, b + eps, alpha), _eta_for(b, bi + eps, ai + eps, alpha))
        beta = alpha * (1 - eta)
    else:
        eps = 0.5 * slacks["single_step"]
        eta = beta = None

    provide = _provider(reg, regularity)
    delta = float(reg.domain_radius)
    trace = []
    while delta >= SADDLE_DELTA_FLOOR:
        r = provide(delta)
        hol_S = C2 * r.hol
        lip_fS = min(C1 * r.lip, delta ** alpha * hol_S)
        row = {"delta": delta, "lip_fS": lip_fS, "hol_S": hol_S}
        trace.append(row)
        failed = None
        if lip_fS >= min(eps, 0.5 * mL):
            row["failed"] = "lip_globalized"
            delta *= 0.5
            continue
        lip_S = nL + lip_fS
        lip_Sinv = 1.0 / (mL - lip_fS)
        bS = RegularityBundle(alpha, lip_fS, hol_S, np.inf)
        bm = bound_power(bS, L, m, max(1.0, lip_S))
        bg = bound_inverse(bS, L)
        bgm = bound_power(bg, L.inv(), m, max(1.0, lip_Sinv))
        d1 = support_radius(delta, lip_S, lip_Sinv, 1)
        dm = support_radius(delta, lip_S, lip_Sinv, m)
        lip_m = min(bm.lip, dm ** alpha * bm.hol)
        lip_gm = min(bgm.lip, dm ** alpha * bgm.hol)
        a1, ai1, b1 = N["A"], N["Ainv"], N["B"]
        K = (
            ai * (a + eps) * (b + eps) ** alpha,
            ai * (a + eps) ** alpha * dm ** alpha * bm.hol,
            ai * (b + eps) ** alpha * dm ** alpha * bm.hol,
            ai * (a + eps) * (b + eps),
        )
        tau_m = max(K[0] + K[1], K[2] + K[3])
        Ku = (
            b * (bi + eps) * (ai + eps) ** alpha,
            b * (bi + eps) ** alpha * dm ** alpha * bgm.hol,
            b * (ai + eps) ** alpha * dm ** alpha * bgm.hol,
            b * (bi + eps) * (ai + eps),
        )
        tau_u = max(Ku[0] + Ku[1], Ku[2] + Ku[3])
        bi1 = N["Binv"]
        hol_g1 = bg.hol
        tau1 = max(
            ai1 * (a1 + eps) * (b1 + eps) ** alpha + ai1 * (a1 + eps) ** alpha * d1 ** alpha * hol_S,
            ai1 * (b1 + eps) ** alpha * d1 ** alpha * hol_S + ai1 * (a1 + eps) * (b1 + eps),
            b1 * (bi1 + eps) * (ai1 + eps) ** alpha + b1 * (bi1 + eps) ** alpha * d1 ** alpha * hol_g1,
            b1 * (ai1 + eps) ** alpha * d1 ** alpha * hol_g1 + b1 * (bi1 + eps) * (ai1 + eps),
        )
        if hyper:
            w = alpha * (1 - eta)
            Kt = (
                ai * (a + eps) * (b + eps) ** (alpha * eta) * (a + eps) ** w,
                ai * (a + eps) * dm ** w * bm.hol,
                ai * (b + eps) ** (alpha * eta) * (a + eps) ** w * bm.hol * dm ** w,
                ai * (a + eps) * (b + eps),
            )
            Kt_u = (
                b * (bi + eps) * (ai + eps) ** (alpha * eta) * (bi + eps) ** w,
                b * (bi + eps) * dm ** w * bgm.hol,
                b * (ai + eps) ** (alpha * eta) * (bi + eps) ** w * bgm.hol * dm ** w,
                b * (bi + eps) * (ai + eps),
            )
            tau_t = max(Kt[0] + Kt[1], Kt[2] + Kt[3], Kt_u[0] + Kt_u[1], Kt_u[2] + Kt_u[3])
        else:
            Kt, tau_t = (np.nan,) * 4, np.nan
        row.update(tau_m=tau_m, tau_u=tau_u, tau_tilde=tau_t, delta_m=dm)
        small_1 = hol_S * d1 ** alpha
        small_m = max(bm.hol, bgm.hol) * dm ** alpha
        if hyper:
            if lip_m >= eps or lip_gm >= eps:
                failed = "lip_m_step"
            elif tau_m >= MARGIN or tau_u >= MARGIN:
                failed = "tau_m"
            elif tau_t >= MARGIN:
                failed = "tau_tilde_m"
            elif small_1 >= eps / 3 or small_m >= eps / 3:
                failed = "holder_support_small"
            elif dm >= min(eps, 1.0 / 3.0):
                failed = "support_radius"
        row["failed"] = failed
        if failed is None:
            if max(lip_S, lip_Sinv) ** m < 1.0:
                warnings.append("delta_n_clamped_below_by_delta")
            return SaddlePlan(
                alpha=alpha, m=m, eps=eps, eta=eta, beta=beta, delta=delta,
                K=K, Ktilde=Kt, K_u=Ku, tau1=tau1, tau_m=tau_m, tau_u=tau_u,
                tau_tilde_m=tau_t, certified=hyper, bump_c=bump.c, C1=C1, C2=C2,
                lip_fS=lip_fS, hol_S=hol_S, hol_m=bm.hol, hol_gm=bgm.hol, hol_g=bg.hol,
                lip_S=lip_S, lip_Sinv=lip_Sinv, delta_m=dm, norms=N, slacks=slacks,
                warnings=warnings, trace=trace,
            )
        delta *= 0.5
    raise PlanInfeasible("delta underflow", failed=trace[-1].get("failed") if trace else None, trace=trace[-6:])
