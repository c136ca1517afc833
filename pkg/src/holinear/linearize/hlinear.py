"""h-linearization of a flat saddle: linearize the axis restrictions
T^u(x) = Ax + X(x, 0) and T^s(y) = By + Y(0, y) with the contracting
series and take the product conjugacy."""

import numpy as np

from ..errors import NotFlat
from ..maps import MapBundle, _batch
from ..regularity import SamplePlan, ball_points, estimate_lip, regularity_at
from ..spectral import vnorm
from .contracting import inverse_bundle, linearize_contracting
from .core import ConjugacyMap, ConjugatedForm, Evaluation, identity_conjugacy
from .plans import plan_contraction

FLAT_TOL = 1e-6


class AxisForm:
    """Nonlinear part of T restricted to one invariant axis."""

    is_polynomial = False

    def __init__(self, T, side):
        du = T.dim_u
        self.T, self.side, self.du = T, side, du
        self.sl = slice(0, du) if side == "u" else slice(du, T.dim)
        self.dim = du if side == "u" else T.dim - du
        self.tag = f"axis_{side}"
        self.params = ()

    def _embed(self, X):
        Z = np.zeros((len(X), self.T.dim))
        Z[:, self.sl] = X
        return Z

    def value(self, x):
        X, single = _batch(x, self.dim)
        out = self.T.nonlinear(self._embed(X))[:, self.sl]
        return out[0] if single else out

    def jacobian(self, x):
        X, single = _batch(x, self.dim)
        out = self.T.nonlinear_jacobian(self._embed(X))[:, self.sl, self.sl]
        return out[0] if single else out

    def bounds(self, radius, alpha):
        return self.T.bounds(radius, alpha)

    def axis_flags(self, du):
        return None


def restriction(T, side):
    L = T.L.entries
    du = T.dim_u
    block = L[:du, :du] if side == "u" else L[du:, du:]
    return MapBundle(block, AxisForm(T, side), T.delta, f"{T.name}|{side}", T.is_global, None, check=False)


def flatness_defect(T, n=512, seed=0):
    """sup |pi^s T(x, 0)| / |x| and sup |pi^u T(0, y)| / |y| on axis samples."""
    du = T.dim_u
    r = T.delta if not T.is_global else 1.0
    out = []
    for sl, other in ((slice(0, du), slice(du, T.dim)), (slice(du, T.dim), slice(0, du))):
        k = sl.stop - sl.start
        P = ball_points(k, n, r, seed)
        Z = np.zeros((n, T.dim))
        Z[:, sl] = P
        keep = vnorm(P) > 0
        out.append(float((vnorm(T.nonlinear(Z[keep])[:, other]) / vnorm(P[keep])).max()))
    return tuple(out)


def _axis_is_linear(Tr, n=256):
    r = Tr.delta if not Tr.is_global else 1.0
    P = ball_points(Tr.dim, n, r, 1)
    return float(vnorm(Tr.nonlinear(P)).max()) == 0.0


def _provider(Tb, alpha):
    return lambda d: regularity_at(Tb.with_delta(d), alpha, d)


def _linearize_axis(Tr, alpha, tol_tail):
    if _axis_is_linear(Tr):
        return identity_conjugacy(Tr.dim, Tr.delta)
    src = Tr
    if Tr.L.min_norm > 1.0:
        src = inverse_bundle(Tr)
    reg = regularity_at(src, alpha, src.delta)
    plan = plan_contraction(src.L, reg, regularity=_provider(src, alpha))
    return linearize_contracting(Tr, plan, tol_tail)


class ProductConjugacy(ConjugacyMap):
    def __init__(self, R1, R2, du):
        self.R1, self.R2, self.du = R1, R2, du
        img = [R.image_radius if R.image_radius is not None else R.radius for R in (R1, R2)]
        super().__init__("h_product", R1.dim + R2.dim, self._ev, radius=min(R1.radius, R2.radius),
                         tol_tail=R1.tol_tail + R2.tol_tail, components={"R1": R1, "R2": R2},
                         image_radius=max(img), plan=(R1.plan, R2.plan))

    def _ev(self, X):
        du = self.du
        e1 = self.R1.evaluate(X[:, :du])
        e2 = self.R2.evaluate(X[:, du:])
        n, d = X.shape
        J = np.zeros((n, d, d))
        J[:, :du, :du] = e1.jacobian
        J[:, du:, du:] = e2.jacobian
        shift = None if e1.shift is None or e2.shift is None else np.hstack([e1.shift, e2.shift])
        return Evaluation(np.hstack([e1.value, e2.value]), J, e1.tail + e2.tail, np.maximum(e1.nterms, e2.nterms), shift)


def h_linearize(T, alpha, tol_tail=1e-10, flat_tol=FLAT_TOL):
    """Return (R, T1) with R = (R1, R2) a product conjugacy and
    T1 = R T R^{-1} h-linear.  T must be flat with dim_u set."""
    du = T.dim_u
    flags = T.axis_flags()
    if flags is not None and flags[1]:
        return identity_conjugacy(T.dim, T.delta), T
    if flags is None or not flags[0]:
        defect = flatness_defect(T)
        if max(defect) > flat_tol:
            raise NotFlat("axes are not invariant", defect_u=defect[0], defect_s=defect[1], tol=flat_tol)
    R1 = _linearize_axis(restriction(T, "u"), alpha, tol_tail)
    R2 = _linearize_axis(restriction(T, "s"), alpha, tol_tail)
    if R1.kind == "identity" and R2.kind == "identity":
        return identity_conjugacy(T.dim, T.delta), T
    R = ProductConjugacy(R1, R2, du)
    r = min(R.radius, T.delta)
    lip = estimate_lip(T.with_delta(r), SamplePlan(512, 512, 0, r)).lip
    delta1 = r / (2.0 * (T.L.norm + lip + 1.0))
    T1 = MapBundle(T.L, ConjugatedForm(T, R, T.L.entries), delta1, f"hlin({T.name})", False, du, check=False)
    return R, T1
