"""Graph-transform flattening of a saddle.

The local unstable manifold is the graph of g_u: E^u -> E^s and the stable
one the graph of g_s: E^s -> E^u.  Both are computed on tensor grids and
R(x, y) = (x - g_s(y), y - g_u(x)) moves them onto the coordinate axes.

Grid values are interpolated with tensor cubic splines.  A multilinear
interpolant has a kink at the node 0, which leaves the flattened map
only Lipschitz at the fixed point; later series stages then stall at
term ratio 1.
"""

import numpy as np
from scipy.interpolate import NdBSpline, make_interp_spline

from ..errors import GraphTransformDiverged, ReparameterizationFailed
from ..maps import MapBundle
from ..regularity import SamplePlan, estimate_lip
from ..spectral import opnorm, vnorm
from .core import ConjugacyMap, ConjugatedForm, Evaluation

GRID_RES = 64
MAX_ITER = 500


class GridGraph:
    """A function on [-r, r]^k sampled at (res + 1)^k nodes."""

    def __init__(self, k, out, radius, res):
        self.k, self.out, self.radius, self.res = k, out, float(radius), int(res)
        self.axis = np.linspace(-radius, radius, res + 1)
        self.h = 2.0 * radius / res
        mesh = np.meshgrid(*([self.axis] * k), indexing="ij")
        self.nodes = np.stack([g.ravel() for g in mesh], axis=1)
        self.values = np.zeros((len(self.nodes), out))
        self._interp = None

    def set(self, values):
        self.values = np.asarray(values, dtype=float).reshape(len(self.nodes), self.out)
        self._interp = None

    def _f(self):
        # tensor not-a-knot cubic interpolation, one axis at a time
        if self._interp is None:
            c = self.values.reshape((self.res + 1,) * self.k + (self.out,))
            knots = []
            for j in range(self.k):
                sp = make_interp_spline(self.axis, np.moveaxis(c, j, 0), k=3)
                c = np.moveaxis(sp.c, 0, j)
                knots.append(sp.t)
            self._interp = NdBSpline(tuple(knots), c, 3)
        return self._interp

    def __call__(self, X):
        X = np.clip(np.asarray(X, dtype=float).reshape(-1, self.k), -self.radius, self.radius)
        return self._f()(X)

    def derivative(self, X):
        X = np.clip(np.asarray(X, dtype=float).reshape(-1, self.k), -self.radius, self.radius)
        D = np.empty((len(X), self.out, self.k))
        for j in range(self.k):
            nu = tuple(int(i == j) for i in range(self.k))
            D[:, :, j] = self._f()(X, nu=nu)
        return D

    def slope_at_zero(self):
        return self.derivative(np.zeros((1, self.k)))[0]

    def sup(self):
        return float(np.abs(self.values).max()) if self.values.size else 0.0


class FlatteningMap(ConjugacyMap):
    """R(x, y) = (x - g_s(y), y - g_u(x)) with the grid graphs attached."""

    def __init__(self, g_u, g_s, du, grid_res, residual_u, residual_s, iterations, slopes):
        self.g_u, self.g_s, self.du = g_u, g_s, du
        self.grid_res = grid_res
        self.residual_u, self.residual_s = residual_u, residual_s
        self.residual = max(residual_u, residual_s)
        self.iterations = iterations
        self.removed_slopes = slopes
        radius = min(g_u.radius, g_s.radius)
        dim = g_u.k + g_s.k
        super().__init__("flattening", dim, self._ev, radius=radius, components={"g_u": g_u, "g_s": g_s},
                         image_radius=radius + max(g_u.sup(), g_s.sup()))

    def _ev(self, X):
        du = self.du
        x, y = X[:, :du], X[:, du:]
        shift = -np.hstack([self.g_s(y), self.g_u(x)])
        value = X + shift
        n, d = X.shape
        J = np.broadcast_to(np.eye(d), (n, d, d)).copy()
        J[:, :du, du:] -= self.g_s.derivative(y)
        J[:, du:, :du] -= self.g_u.derivative(x)
        return Evaluation(value, J, np.zeros(n), np.zeros(n, dtype=int), shift)

    def summary(self):
        return {"grid_res": self.grid_res, "radius": self.radius, "residual_u": self.residual_u,
                "residual_s": self.residual_s, "iterations": self.iterations,
                "removed_slope_u": float(np.abs(self.removed_slopes[0]).max()),
                "removed_slope_s": float(np.abs(self.removed_slopes[1]).max())}


def _lip_on(T, r):
    b = T.bounds(r, 0.5)
    if b is not None:
        return float(b[0])
    return 1.05 * estimate_lip(T.with_delta(r), SamplePlan(1024, 1024, 0, r)).lip


def _gap_radius(T, A, B):
    """Largest tried radius (halving from the domain) where the cone
    condition 2 Lip(f) < m(A) - |B| and |B| + 2 Lip(f) < 1 holds."""
    mA = 1.0 / opnorm(np.linalg.inv(A))
    nB = opnorm(B)
    r = T.delta
    for _ in range(40):
        lip = _lip_on(T, r)
        if 2 * lip < mA - nB and nB + 2 * lip < 1.0 and mA - 2 * lip > 1.0:
            return r, lip
        r *= 0.5
    raise GraphTransformDiverged("no ball where the graph transform contracts", m_A=mA, norm_B=nB, lip=lip)


def _unstable_graph(T, du, radius, res, tol, max_iter):
    d = T.dim
    A = T.L.entries[:du, :du]
    Ainv = np.linalg.inv(A)
    B = T.L.entries[du:, du:]
    g = GridGraph(du, d - du, radius, res)
    x = g.nodes
    for it in range(1, max_iter + 1):
        xi = x @ Ainv.T
        for _ in range(200):
            z = np.hstack([xi, g(xi)])
            new = (x - T.nonlinear(z)[:, :du]) @ Ainv.T
            step = vnorm(new - xi).max()
            xi = new
            if step <= 1e-3 * tol:
                break
        else:
            raise ReparameterizationFailed("u-component of T on the graph did not invert", step=float(step))
        if vnorm(xi).max() > radius * (1 + 1e-9):
            raise ReparameterizationFailed("reparameterization left the grid", radius=radius)
        z = np.hstack([xi, g(xi)])
        new = g(xi) @ B.T + T.nonlinear(z)[:, du:]
        change = float(np.abs(new - g.values).max())
        g.set(new)
        if not np.isfinite(change):
            raise GraphTransformDiverged("graph transform produced non-finite values", iteration=it)
        if change < tol:
            return g, it
    raise GraphTransformDiverged("graph transform did not settle", iterations=max_iter, change=change)


def _stable_graph(T, du, radius, res, tol, max_iter):
    d = T.dim
    A = T.L.entries[:du, :du]
    Ainv = np.linalg.inv(A)
    B = T.L.entries[du:, du:]
    g = GridGraph(d - du, du, radius, res)
    y = g.nodes
    for it in range(1, max_iter + 1):
        z = np.hstack([g(y), y])
        F = T.nonlinear(z)
        y2 = y @ B.T + F[:, du:]
        new = (g(y2) - F[:, :du]) @ Ainv.T
        change = float(np.abs(new - g.values).max())
        g.set(new)
        if not np.isfinite(change):
            raise GraphTransformDiverged("graph transform produced non-finite values", iteration=it)
        if change < tol:
            return g, it
    raise GraphTransformDiverged("graph transform did not settle", iterations=max_iter, change=change)


def _detilt(g):
    """Remove the fitted linear part at 0 so that Dg(0) = 0."""
    D = g.slope_at_zero()
    g.set(g.values - g.nodes @ D.T)
    return D


def _invariance_u(T, g, du):
    z = np.hstack([g.nodes, g(g.nodes)])
    w = T.eval(z)
    inside = vnorm(w[:, :du]) <= g.radius
    if not inside.any():
        return 0.0
    return float(vnorm(w[inside, du:] - g(w[inside, :du])).max())


def _invariance_s(T, g, du):
    z = np.hstack([g(g.nodes), g.nodes])
    w = T.eval(z)
    return float(vnorm(w[:, :du] - g(w[:, du:])).max())


def flatten(T, grid_res=GRID_RES, tol=1e-12, radius=None, max_iter=MAX_ITER):
    """Graph-transform both local manifolds of the saddle T (coordinates
    ordered (E^u, E^s), ``T.dim_u`` set) and return the flattening map."""
    du = T.dim_u
    if du is None or du in (0, T.dim):
        raise GraphTransformDiverged("flatten needs a saddle with dim_u set")
    flags = T.axis_flags()
    A = T.L.entries[:du, :du]
    B = T.L.entries[du:, du:]
    if radius is None:
        radius, _ = _gap_radius(T, A, B)
        radius *= 0.5
    g_u = GridGraph(du, T.dim - du, radius, grid_res)
    g_s = GridGraph(T.dim - du, du, radius, grid_res)
    if flags is not None and flags[0]:
        return FlatteningMap(g_u, g_s, du, grid_res, 0.0, 0.0, 1, (np.zeros((T.dim - du, du)), np.zeros((du, T.dim - du))))
    g_u, it_u = _unstable_graph(T, du, radius, grid_res, tol, max_iter)
    g_s, it_s = _stable_graph(T, du, radius, grid_res, tol, max_iter)
    slopes = (_detilt(g_u), _detilt(g_s))
    res_u = _invariance_u(T, g_u, du)
    res_s = _invariance_s(T, g_s, du)
    return FlatteningMap(g_u, g_s, du, grid_res, res_u, res_s, max(it_u, it_s), slopes)


def flattened_bundle(T, F):
    """T_flat = F T F^{-1} on a ball where F^{-1} and T stay inside F's grid."""
    if F.residual == 0.0 and F.g_u.sup() == 0.0 and F.g_s.sup() == 0.0:
        return T
    lip = _lip_on(T, F.radius)
    r = F.radius / (2.0 * (T.L.norm + lip + 1.0))
    return MapBundle(T.L, ConjugatedForm(T, F, T.L.entries), r, f"flat({T.name})", False, T.dim_u, check=False)


class TabulatedForm:
    """Spline table of a nonlinear part on [-r, r]^d, re-centred so that
    f(0) = 0 and Df(0) = 0 hold for the interpolant itself."""

    is_polynomial = False

    def __init__(self, f, dim, radius, res):
        self.dim = dim
        self.tag = "tabulated"
        self.params = ()
        self.grid = GridGraph(dim, dim, radius, res)
        self.grid.set(f(self.grid.nodes))
        z = np.zeros((1, dim))
        c0 = self.grid(z)[0]
        D0 = self.grid.derivative(z)[0]
        self.grid.set(self.grid.values - c0 - self.grid.nodes @ D0.T)
        self.offset = (float(np.abs(c0).max()), float(np.abs(D0).max()))

    def value(self, x):
        X = np.atleast_2d(x)
        out = self.grid(X)
        return out[0] if np.ndim(x) == 1 else out

    def jacobian(self, x):
        X = np.atleast_2d(x)
        out = self.grid.derivative(X)
        return out[0] if np.ndim(x) == 1 else out

    def bounds(self, radius, alpha):
        return None

    def axis_flags(self, du):
        return None


TABLE_RES = {1: 64, 2: 64, 3: 24}


def tabulated_bundle(T, res=None):
    """Replace an expensive nonlinear part (nested conjugations) by its
    spline table on B_delta; only for dim <= 3."""
    res = res or TABLE_RES[T.dim]
    form = TabulatedForm(T.nonlinear, T.dim, T.delta, res)
    out = MapBundle(T.L, form, T.delta, f"table({T.name})", False, T.dim_u, check=False)
    out.table_offset = form.offset
    return out
