"""End-to-end linearization of a fixed point at 0.

classify -> working coordinates -> (contracting series) or
(flatten -> h-linearize -> globalize -> saddle plan -> saddle series)
-> back to the input coordinates -> verify.
"""

from dataclasses import dataclass, field

import numpy as np

from .bump import globalize, make_bump, scale
from .errors import NotAlphaContracting
from .linearize.contracting import inverse_bundle, linearize_contracting
from .linearize.core import compose_conjugacies, linear_conjugacy, restricted
from .linearize.flatten import TABLE_RES, flatten, flattened_bundle, tabulated_bundle
from .linearize.hlinear import FLAT_TOL, h_linearize
from .linearize.plans import plan_contraction, plan_saddle
from .linearize.saddle import linearize_saddle
from .linearize.verify import holder_certificate, verify_conjugacy
from .regularity import regularity_at
from .spectral import classify, opnorm, split


@dataclass
class LinearizationResult:
    R: object
    route: str
    classification: object
    plan: object
    effective_radius: float
    working: dict
    stages: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    report: object = None
    certificate: object = None

    def to_dict(self):
        cert = None
        if self.certificate is not None:
            b, fit, ok = self.certificate
            cert = {"beta_planned": b, "fit": fit.to_dict(), "passed": ok}
        return {
            "route": self.route,
            "classification": self.classification.to_dict(),
            "plan": None if self.plan is None else self.plan.to_dict(),
            "effective_radius": self.effective_radius,
            "stages": self.stages,
            "warnings": sorted(set(self.warnings)),
            "verification": None if self.report is None else self.report.to_dict(),
            "certificate": cert,
        }


def provider(T, alpha):
    """delta -> regularity bundle of T's nonlinear part on B_delta."""
    return lambda d: regularity_at(T.with_delta(d), alpha, d)


def working_map(T, sp):
    return T.conjugate(sp.basis, sp.cobasis, dim_u=sp.dim_u, name=f"w({T.name})")


def saddle_probes(du, d, r, tiny=1e-30):
    """Points with a tiny expanding part whose orbits stay near the
    plateau for many steps (coefficient reads and divergence checks)."""
    pts = []
    for i in range(du):
        for j in range(du, d):
            z = np.zeros(d)
            z[i], z[j] = tiny * r, r
            pts.append(z)
            z = np.zeros(d)
            z[i], z[j] = r, tiny * r
            pts.append(z)
    return np.array(pts)


def _start(delta, delta_max):
    return delta if delta_max is None else min(delta, delta_max)


def _contracting(T, Tw, sp, alpha, tol_tail, res, delta_max=None):
    src = Tw if sp.dim_u == 0 else inverse_bundle(Tw)
    reg = regularity_at(src, alpha, _start(src.delta, delta_max))
    plan = plan_contraction(src.L, reg, regularity=provider(src, alpha))
    Rw = linearize_contracting(Tw, plan, tol_tail)
    res.plan = plan
    r = min(plan.delta / opnorm(sp.cobasis), T.delta)
    res.R = linear_conjugacy(sp.basis, sp.cobasis, Rw, radius=r)
    res.effective_radius = r
    res.stages["series"] = {"kind": Rw.kind, "delta": plan.delta, "on_inverse": sp.dim_u > 0}


def _saddle(T, Tw, sp, alpha, tol_tail, bump_c, grid_res, res, strict, delta_max=None):
    du, d = sp.dim_u, T.dim
    flags = Tw.axis_flags()
    pre = []
    if flags is not None and flags[0]:
        Tf = Tw
        res.stages["flatten"] = {"skipped": True, "reason": "axes invariant"}
    else:
        F = flatten(Tw, grid_res)
        Tf = flattened_bundle(Tw, F)
        res.stages["flatten"] = {"skipped": False, **F.summary()}
        pre.append(F)
    Rh, T1 = h_linearize(Tf, alpha, tol_tail, FLAT_TOL)
    if Rh.kind == "identity":
        res.stages["h_linearize"] = {"skipped": True}
    else:
        res.stages["h_linearize"] = {"skipped": False, "radius": Rh.radius, "T1_delta": T1.delta}
        pre.append(Rh)
    if pre and d in TABLE_RES:
        T1 = tabulated_bundle(T1)
        res.stages["table"] = {"res": TABLE_RES[d], "radius": T1.delta, "offset_value": T1.table_offset[0],
                               "offset_slope": T1.table_offset[1]}
    prov = provider(T1, alpha)
    bump = make_bump(bump_c, d)
    plan = plan_saddle(sp.A, sp.B, alpha, prov(_start(T1.delta, delta_max)), regularity=prov, bump=bump, strict=strict)
    res.plan = plan
    res.warnings += plan.warnings
    S = globalize(T1, scale(bump, plan.delta), alpha, reg=prov(plan.delta))
    Rs = linearize_saddle(S, plan, tol_tail)
    res.stages["globalize"] = {"delta": plan.delta, "plateau": bump_c * plan.delta, "C1": S.C1, "C2": S.C2,
                               "lip_g": S.lip_g, "hol_g": S.hol_g, "verified": S.verified}
    # S = T1 on the plateau; earlier stages are near-identity, a factor 2 covers their Lipschitz growth
    r_w = bump_c * plan.delta / (2.0 if pre else 1.0)
    stages = [restricted(p, r_w * 2 ** k, r_w * 2 ** (k + 1)) for k, p in enumerate(pre)]
    Rw = compose_conjugacies(stages + [Rs]) if stages else Rs
    r = min(r_w / opnorm(sp.cobasis), T.delta)
    res.R = linear_conjugacy(sp.basis, sp.cobasis, Rw, radius=r)
    res.effective_radius = r
    res.probes = saddle_probes(du, d, 0.5 * r_w) @ sp.basis.T
    res.stages["series"] = {"kind": Rs.kind, "certified": plan.certified}


def linearize_map(T, alpha, tol_tail=1e-10, n_samples=10_000, seed=0, bump_c=0.5, grid_res=64,
                  verify=True, certificate=True, delta_max=None):
    """Run the full pipeline on T = L + f; raises the module errors
    (SeriesDiverged for resonant saddles, PlanInfeasible, ...).

    ``delta_max`` caps the planner's starting radius (parameter sweeps use
    it to put every member on the same bump scale)."""
    cls = classify(T.L, alpha)
    sp = split(T.L)
    Tw = working_map(T, sp)
    route = cls.cls
    res = LinearizationResult(None, route, cls, None, 0.0,
                              {"dim_u": sp.dim_u, "dim_s": sp.dim_s, "offdiag_residual": sp.offdiag_residual,
                               "cond_basis": float(opnorm(sp.basis) * opnorm(sp.cobasis))})
    res.probes = None
    if route in ("contracting", "expanding"):
        if not cls.alpha_hyperbolic:
            raise NotAlphaContracting("c(L) rho(L)^alpha >= 1", c=cls.c_h, rho=cls.rho_h, alpha=alpha)
        _contracting(T, Tw, sp, alpha, tol_tail, res, delta_max)
    else:
        strict = bool(cls.alpha_hyperbolic)
        if not strict:
            res.warnings.append("not_alpha_hyperbolic_uncertified_plan")
        _saddle(T, Tw, sp, alpha, tol_tail, bump_c, grid_res, res, strict, delta_max)
    if verify:
        res.report = verify_conjugacy(res.R, T, T.L, res.effective_radius, n_samples, seed, extra_points=res.probes)
        if res.report.error is not None:
            raise res.report.error
    if certificate and (route != "saddle" or res.plan.certified):
        res.certificate = holder_certificate(res.R, res.plan, n_samples, radius=res.effective_radius, seed=seed)
    return res

