"""Series linearizer for alpha-contracting (and, through the inverse map,
alpha-expanding) fixed points.

phi(x) = sum_n L^{-(n+1)} f(T^n x), the Neumann series of (I - H)^{-1}
L^{-1} f for H(phi) = L^{-1} phi o T, evaluated along the orbit of x.
"""

import numpy as np

from ..errors import NoConvergence, NotInvertibleBound
from ..maps import MapBundle, _batch, invert_point
from ..regularity import INFLATION, RegularityBundle, SamplePlan, bound_inverse, estimate_lip
from ..spectral import as_operator, spectral_radius, vnorm
from .core import ConjugacyMap, Evaluation

N_MAX = 10_000
RATIO_ALARM = 1.0
# pointwise term norms of a convergent series can grow for a few steps when
# L is far from normal; windows are whole m-blocks spanning >= this many terms
MIN_WINDOW = 8


class InverseForm:
    """Nonlinear part g = T^{-1} - L^{-1} of the inverse of T = L + f."""

    is_polynomial = False

    def __init__(self, T):
        self.T = T
        self.dim = T.dim
        self.tag = "inverse"
        self.params = ()
        self.Linv = T.L.inverse

    def value(self, x):
        X, single = _batch(x, self.dim)
        W = invert_point(self.T, X, tol=0.0, rtol=1e-14)
        out = W - X @ self.Linv.T
        return out[0] if single else out

    def jacobian(self, x):
        X, single = _batch(x, self.dim)
        W = invert_point(self.T, X, tol=0.0, rtol=1e-14)
        J = np.linalg.inv(self.T.jacobian(W)) - self.Linv
        return J[0] if single else J

    def step(self, X):
        """(g(X), Dg(X), T^{-1}X, DT^{-1}(X)) from a single inversion."""
        W = invert_point(self.T, X, tol=0.0, rtol=1e-14)
        DW = np.linalg.inv(self.T.jacobian(W))
        return W - X @ self.Linv.T, DW - self.Linv, W, DW

    def bounds(self, radius, alpha):
        b0 = self.T.bounds(self.T.delta, alpha)
        if b0 is None:
            return None
        gap0 = self.T.L.min_norm - b0[0]
        if gap0 <= 0:
            return None
        r0 = radius / gap0
        if not self.T.is_global and r0 > self.T.delta * (1 + 1e-12):
            return None
        b = self.T.bounds(r0, alpha)
        try:
            bi = bound_inverse(RegularityBundle(alpha, b[0], b[1], r0), self.T.L)
        except NotInvertibleBound:
            return None
        return bi.lip, bi.hol

    def axis_flags(self, du):
        return None


def inverse_bundle(T):
    """T^{-1} = L^{-1} + g as a MapBundle on the ball T(B_delta) contains."""
    b = T.bounds(T.delta, 0.5)
    if b is not None:
        lip = b[0]
    elif T.is_global:
        lip = getattr(T, "lip_global", 0.0)
    else:
        lip = INFLATION * estimate_lip(T, SamplePlan(2048, 2, 0, T.delta)).lip
    gap = T.L.min_norm - lip
    if gap <= 0:
        raise NotInvertibleBound("Lip(f) >= m(L) on the map domain", lip=lip, m_L=T.L.min_norm)
    radius = np.inf if T.is_global else gap * T.delta
    return MapBundle(T.L.inverse, InverseForm(T), radius, f"inverse({T.name})", T.is_global, T.dim_u, check=False)


class _Windows:
    """Per-point m-block sums of term norms and consecutive-ratio alarms."""

    def __init__(self, n, m, alarm, need=2):
        self.m = m
        self.alarm = alarm
        self.need = need
        self.cur = np.zeros(n)
        self.valid = np.ones(n, dtype=bool)
        self.prev = np.full(n, np.nan)
        self.streak = np.zeros(n, dtype=int)
        self.max_ratio = np.zeros(n)
        self.ratios = [[] for _ in range(n)]

    def add(self, idx, t, ok):
        self.cur[idx] += t
        self.valid[idx] &= ok

    def close(self, idx):
        """End a block for points idx; returns indices that raised the alarm."""
        cur, val, prev = self.cur[idx], self.valid[idx], self.prev[idx]
        have = val & np.isfinite(prev) & (prev > 0)
        r = np.where(have, cur / np.where(have, prev, 1.0), 0.0)
        hit = have & (r >= self.alarm)
        self.streak[idx] = np.where(hit, self.streak[idx] + 1, 0)
        self.max_ratio[idx] = np.maximum(self.max_ratio[idx], r)
        for j, i in enumerate(idx):
            if have[j]:
                self.ratios[i].append(float(r[j]))
        self.prev[idx] = np.where(val & (cur > 0), cur, np.nan)
        self.cur[idx] = 0.0
        self.valid[idx] = True
        return idx[self.streak[idx] >= self.need]


def contracting_series(T, plan, X, tol_tail=1e-10, n_max=N_MAX):
    """Evaluate phi, Dphi at the rows of X; returns Evaluation of R = I + phi."""
    n, d = X.shape
    alpha, m = plan.alpha, plan.m
    C = plan.term_constant()
    tau = plan.tau_m
    Linv = T.L.inverse
    scale = vnorm(X) ** (1 + alpha)
    phi = np.zeros_like(X)
    dphi = np.zeros((n, d, d))
    tail = np.zeros(n)
    nterms = np.zeros(n, dtype=int)
    Y = X.copy()
    J = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    P = Linv.copy()
    active = scale > 0
    w = m * -(-MIN_WINDOW // m)
    win = _Windows(n, w, RATIO_ALARM)
    fast = hasattr(T.f, "step")
    for k in range(n_max):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        Yi, Ji = Y[idx], J[idx]
        if fast:
            T._check(Yi)
            F, DF, TY, DTY = T.f.step(Yi)
        else:
            F, DF = T.nonlinear_step(Yi)
            TY, DTY = Yi @ T.L.entries.T + F, T.L.entries + DF
        term = F @ P.T
        dterm = P @ DF @ Ji
        phi[idx] += term
        dphi[idx] += dterm
        nterms[idx] = k + 1
        win.add(idx, vnorm(term) + np.abs(dterm).sum(axis=-1).max(axis=-1), np.ones(idx.size, dtype=bool))
        if (k + 1) % w == 0:
            bad = win.close(idx)
            if bad.size:
                i = int(bad[0])
                raise NoConvergence("term norms stopped decaying over an m-window", point=X[i].tolist(),
                                    term_ratio=win.max_ratio[i], ratios=win.ratios[i][-8:], terms=k + 1)
        J[idx] = DTY @ Ji
        Y[idx] = TY
        P = Linv @ P
        bound = C * tau ** ((k + 1) // m)
        tail[idx] = scale[idx] * bound
        done = (bound <= tol_tail) | ~Y[idx].any(axis=1)
        active[idx[done]] = False
    else:
        if active.any():
            raise NoConvergence("series hit the term cap", n_max=n_max, max_tail=float(tail[active].max()))
    value = X + phi
    jac = np.eye(d) + dphi
    return Evaluation(value, jac, tail, nterms, phi)


def linearize_contracting(T, plan, tol_tail=1e-10, n_max=N_MAX):
    """Conjugacy R = I + phi with L R = R T on B_{plan.delta}.

    ``tol_tail`` bounds the truncation error relative to |x|^{1+alpha}
    (hence also absolutely on the unit ball).  If L is expanding, ``plan``
    must be the plan of L^{-1} and the series is run on T^{-1}.
    """
    L = as_operator(T.L)
    src = T
    if spectral_radius(L) > 1.0:
        src = inverse_bundle(T)
    work = src.with_delta(min(src.delta, plan.delta)) if not src.is_global else src

    def ev(X):
        r = vnorm(X)
        if np.any(r > plan.delta * (1 + 1e-12)):
            raise NoConvergence("evaluation outside the planned ball", delta=plan.delta, radius=float(r.max()))
        return contracting_series(work, plan, X, tol_tail, n_max)

    return ConjugacyMap("contracting_series", T.dim, ev, radius=plan.delta, tol_tail=tol_tail, source=T, plan=plan,
                        image_radius=plan.delta * (1 + plan.eps1))
