"""Vector fields: time-one maps (RK4 with the variational equation),
critical-point classification, the Shilnikov eigenvalue test, and
parameter continuation of fixed points and linearizations."""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import ContractionLost, HolinearError, NonHyperbolic, ParseError, StepTooLarge, WrongDimension
from .maps import MapBundle, PolyMap, _batch
from .regularity import ball_points
from .spectral import leading_splitting, opnorm, vnorm

HYPERBOLIC_TOL = 1e-9
EXP_TOL = 1e-6
ALPHA_GUARD = 1e-9
FIELD_MAX_DIM = 6


# ---------------------------------------------------------------------------
# vector fields


class VectorFieldDef:
    """X(x) = DX0 x + N(x) with N a polynomial of degree >= 2."""

    def __init__(self, DX0, nonlinear=None, radius=1.0, name="field"):
        self.DX0 = np.atleast_2d(np.asarray(DX0, dtype=float))
        self.dim = self.DX0.shape[0]
        if self.DX0.shape != (self.dim, self.dim) or not 1 <= self.dim <= FIELD_MAX_DIM:
            raise ParseError("DX0 must be square with dimension <= 6", shape=list(self.DX0.shape))
        self.nonlinear = nonlinear if nonlinear is not None else PolyMap(self.dim, [])
        if self.nonlinear.dim != self.dim:
            raise ParseError("nonlinear part has the wrong dimension")
        self.radius = float(radius)
        self.name = name

    @classmethod
    def from_terms(cls, dim, terms, radius=1.0, name="field"):
        """Build from monomials (coef, exponents, coordinate); degree-1
        terms form DX0, degree-0 terms are rejected (X(0) = 0)."""
        DX0 = np.zeros((dim, dim))
        rest = []
        for t in terms:
            c, e, i = t
            deg = sum(e)
            if deg == 0:
                raise ParseError("constant term: the critical point must sit at 0", term=list(map(float, e)))
            if deg == 1:
                DX0[i, list(e).index(1)] += c
            else:
                rest.append((c, e, i))
        return cls(DX0, PolyMap(dim, rest), radius, name)

    def __call__(self, x):
        X, single = _batch(x, self.dim)
        out = self.nonlinear.value(X, linear=self.DX0)
        return out[0] if single else out

    def jacobian(self, x):
        X, single = _batch(x, self.dim)
        out = self.DX0 + self.nonlinear.jacobian(X)
        return out[0] if single else out


def _steps(h):
    n = int(round(1.0 / h))
    if n < 1 or abs(n * h - 1.0) > 1e-12:
        raise ValueError("h must divide 1")
    return n


def integrate(field, X, h, with_jacobian=True):
    """Classical RK4 over [0, 1] with the variational equation J' = DX J."""
    n = _steps(h)
    X = np.array(X, dtype=float)
    d = field.dim
    J = np.broadcast_to(np.eye(d), (len(X), d, d)).copy() if with_jacobian else None
    for _ in range(n):
        if with_jacobian:
            k1 = field(X)
            K1 = field.jacobian(X) @ J
            X2 = X + 0.5 * h * k1
            k2 = field(X2)
            K2 = field.jacobian(X2) @ (J + 0.5 * h * K1)
            X3 = X + 0.5 * h * k2
            k3 = field(X3)
            K3 = field.jacobian(X3) @ (J + 0.5 * h * K2)
            X4 = X + h * k3
            k4 = field(X4)
            K4 = field.jacobian(X4) @ (J + h * K3)
            J = J + (h / 6.0) * (K1 + 2 * K2 + 2 * K3 + K4)
        else:
            k1 = field(X)
            k2 = field(X + 0.5 * h * k1)
            k3 = field(X + 0.5 * h * k2)
            k4 = field(X + h * k3)
        X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return X, J


class FlowForm:
    """Nonlinear part of the time-one map, T(x) - L x with L = DT(0)."""

    is_polynomial = False

    def __init__(self, field, h, L):
        self.field, self.h, self.L = field, h, L
        self.dim = field.dim
        self.tag = "time_one"
        self.params = (h,)
        self._cache = (None, None, None)
        # RK4 is linear in x for a linear field, so the nonlinear part is 0
        self.linear = len(field.nonlinear) == 0

    def _run(self, X):
        key, Y, J = self._cache
        if key is not None and key.shape == X.shape and np.array_equal(key, X):
            return Y, J
        Y, J = integrate(self.field, X, self.h)
        self._cache = (X.copy(), Y, J)
        return Y, J

    def value(self, x):
        X, single = _batch(x, self.dim)
        if self.linear:
            out = np.zeros_like(X)
            return out[0] if single else out
        Y, _ = self._run(X)
        out = Y - X @ self.L.T
        return out[0] if single else out

    def jacobian(self, x):
        X, single = _batch(x, self.dim)
        if self.linear:
            out = np.zeros((len(X), self.dim, self.dim))
            return out[0] if single else out
        _, J = self._run(X)
        out = J - self.L
        return out[0] if single else out

    def bounds(self, radius, alpha):
        if self.linear:
            return 0.0, 0.0
        return None

    def axis_flags(self, du):
        if self.linear:
            return True, True
        return None


class TimeOneMap(MapBundle):
    def __init__(self, field, h, L, delta):
        super().__init__(L, FlowForm(field, h, L), delta, f"time_one({field.name})", check=False)
        self.field = field
        self.h = h
        self.exp_error = float(np.abs(L - expm(field.DX0)).max())

    def with_delta(self, delta):
        out = MapBundle(self.L, self.f, delta, self.name, self.is_global, self.dim_u, check=False)
        return out


def time_one_map(field, h=1e-3, delta=None):
    """phi(1, .) of the field as a MapBundle with L = DT(0)."""
    _, J = integrate(field, np.zeros((1, field.dim)), h)
    L = J[0]
    T = TimeOneMap(field, h, L, field.radius if delta is None else delta)
    if T.exp_error > EXP_TOL:
        raise StepTooLarge("DT(0) differs from exp(DX0)", error=T.exp_error, h=h)
    return T


# ---------------------------------------------------------------------------
# critical points


def _distinct(values, tol=1e-9):
    out = []
    for v in sorted(values):
        if not out or abs(v - out[-1]) > tol * max(1.0, abs(v)):
            out.append(float(v))
    return out


@dataclass
class CriticalPointReport:
    eigenvalues: list
    a: list  # positive real parts, descending a_m > ... > a_1
    b: list  # negative real parts, descending b_1 > ... > b_n
    a1: object
    b1: object
    alpha_max: float
    alpha_clauses: dict
    bicircular_on_center: bool
    bicircular: bool
    center_basis: object = field(default=None, repr=False)

    def to_dict(self):
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "positive_real_parts": self.a,
            "negative_real_parts": self.b,
            "a1": self.a1,
            "b1": self.b1,
            "alpha_max": self.alpha_max,
            "alpha_clauses": self.alpha_clauses,
            "bicircular_on_center": self.bicircular_on_center,
            "bicircular": self.bicircular,
            "center_dim": None if self.center_basis is None else int(self.center_basis.shape[1]),
        }


def classify_critical_point(field, alpha=None):
    """Real-part ordering, leading blocks and the smoothness budget
    (1 + a) a_1 < a_2, (1 + a) b_1 > b_2."""
    ev = np.linalg.eigvals(field.DX0)
    re = ev.real
    if np.any(np.abs(re) <= HYPERBOLIC_TOL):
        raise NonHyperbolic("eigenvalue with zero real part", real_parts=sorted(re.tolist()))
    pos = _distinct(re[re > 0])[::-1]
    neg = _distinct(re[re < 0])[::-1]
    a1 = pos[-1] if pos else None
    b1 = neg[0] if neg else None
    clauses = {}
    if len(pos) >= 2:
        clauses["expanding"] = pos[-2] / a1 - 1.0
    if len(neg) >= 2:
        clauses["contracting"] = neg[1] / b1 - 1.0
    alpha_max = min(list(clauses.values()) + [1.0]) - ALPHA_GUARD
    basis = None
    if pos and neg:
        basis = leading_splitting(expm(field.DX0)).basis
    return CriticalPointReport(
        eigenvalues=[complex(z) for z in ev], a=pos, b=neg, a1=a1, b1=b1,
        alpha_max=float(alpha_max), alpha_clauses=clauses,
        bicircular_on_center=bool(pos and neg),
        bicircular=bool(len(pos) == 1 and len(neg) == 1),
        center_basis=basis,
    )


def shilnikov_check(field=None, eigenvalues=None, tol=1e-9):
    """Saddle-focus test: a pair a +- ib (a < 0, b != 0), a real c > 0,
    and a + c > 0.  Returns (holds, diagnosis)."""
    if eigenvalues is None:
        if field.dim != 3:
            raise WrongDimension("the Shilnikov test needs a 3-dimensional field", dim=field.dim)
        eigenvalues = np.linalg.eigvals(field.DX0)
    ev = np.asarray(eigenvalues, dtype=complex)
    if len(ev) != 3:
        raise WrongDimension("the Shilnikov test needs three eigenvalues", dim=len(ev))
    cplx = ev[np.abs(ev.imag) > tol]
    real = ev[np.abs(ev.imag) <= tol].real
    diag = {"complex_pair": bool(len(cplx) == 2), "pair_stable": False, "real_unstable": False,
            "sum_positive": False, "a": None, "b": None, "c": None}
    if len(cplx) == 2 and len(real) == 1:
        a = float(cplx[0].real)
        c = float(real[0])
        diag.update(a=a, b=float(abs(cplx[0].imag)), c=c, pair_stable=a < 0, real_unstable=c > 0,
                    sum_positive=a + c > 0)
    ok = diag["complex_pair"] and diag["pair_stable"] and diag["real_unstable"] and diag["sum_positive"]
    return bool(ok), diag


# ---------------------------------------------------------------------------
# parameter families


class ParamFamily:
    """Maps F_lambda given as full polynomials (constant and linear terms
    allowed) on a lambda grid."""

    def __init__(self, lambdas, factory, dim, name="family", delta=1.0):
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.factory = factory
        self.dim = dim
        self.name = name
        self.delta = float(delta)

    def poly(self, lam):
        return self.factory(float(lam))

    @classmethod
    def from_tables(cls, dim, lambdas, tables, name="family", delta=1.0):
        """One term table per lambda value."""
        lut = {float(l): t for l, t in zip(lambdas, tables)}
        return cls(lambdas, lambda lam: PolyMap(dim, lut[float(lam)], allow_low_degree=True), dim, name, delta)

    def refined(self):
        lam = self.lambdas
        mid = 0.5 * (lam[:-1] + lam[1:])
        new = np.empty(2 * len(lam) - 1)
        new[0::2], new[1::2] = lam, mid
        return ParamFamily(new, self.factory, self.dim, self.name, self.delta)


def quadratic_family(lambdas):
    """T_lambda(x) = 0.5 x + lambda + 0.1 x^2."""
    return ParamFamily(lambdas, lambda lam: PolyMap(1, [(lam, [0], 0), (0.5, [1], 0), (0.1, [2], 0)],
                                                      allow_low_degree=True), 1, "quadratic", 0.5)


def hartman_family(lambdas, a=4.0, b=3.0, c=0.5, eps=1.0):
    """Hartman maps with b(lambda) = b + lambda."""
    def make(lam):
        b_lam = b + lam
        return PolyMap(3, [(a, [1, 0, 0], 0), (b_lam, [0, 1, 0], 1), (b_lam * eps, [1, 0, 1], 1), (c, [0, 0, 1], 2)],
                       allow_low_degree=True)
    return ParamFamily(lambdas, make, 3, "hartman", 0.2)


def affine_family(base, direction, lambdas, name="family", delta=1.0):
    """F_lambda = base + lambda * direction for two term tables."""
    dim = base.dim

    def make(lam):
        terms = list(base.terms) + [(lam * c, e, i) for c, e, i in direction.terms]
        return PolyMap(dim, terms, allow_low_degree=True)
    return ParamFamily(lambdas, make, dim, name, delta)


def _split_poly(F):
    const, lin, rest = F.shifted(np.zeros(F.dim))
    return const, lin, rest


@dataclass
class ContinuationResult:
    lambdas: np.ndarray
    points: np.ndarray
    contraction: np.ndarray
    g0: np.ndarray
    iterations: list
    inserted: int = 0

    def to_dict(self):
        return {"lambdas": self.lambdas.tolist(), "points": self.points.tolist(),
                "contraction": self.contraction.tolist(), "g0": self.g0.tolist(),
                "iterations": self.iterations, "inserted": self.inserted}


def _solve_fixed(F, L, IL, p0, delta, n_check=64, tol=1e-15, max_iter=2000):
    """Picard iteration of G(x) = (I - L)^{-1} f(x), f = F - L."""
    def G(x):
        return np.linalg.solve(IL, F.value(x) - L @ x)

    def DG(X):
        return np.linalg.solve(IL, F.jacobian(X) - L)

    pts = np.vstack([p0[None], ball_points(F.dim, n_check, delta, 11)])
    q = float(np.abs(DG(pts)).sum(axis=-1).max())
    if q >= 1.0:
        raise ContractionLost("|DG| >= 1 on the sampled ball", contraction=q)
    g0 = vnorm(G(np.zeros(F.dim)))
    if g0 >= (1.0 - q) * delta:
        raise ContractionLost("|G(0)| >= (1 - q) delta, the ball is not mapped into itself", g0=float(g0),
                              contraction=q, delta=delta)
    p = p0.copy()
    for k in range(1, max_iter + 1):
        new = G(p)
        if vnorm(new - p) <= tol * max(1.0, vnorm(new)):
            return new, q, k
        p = new
    raise ContractionLost("Picard iteration did not settle", contraction=q)


def continue_fixed_points(family, delta=None, min_step=1e-6):
    """p_lambda for every grid value, warm-started from the previous one;
    on ContractionLost the lambda step is halved (intermediate values are
    solved but not reported) down to ``min_step``."""
    delta = family.delta if delta is None else delta
    F0 = family.poly(family.lambdas[0])
    _, L, _ = _split_poly(F0)
    IL = np.eye(family.dim) - L
    p = np.zeros(family.dim)
    pts, qs, g0s, its = [], [], [], []
    inserted = 0
    prev = family.lambdas[0]
    for lam in family.lambdas:
        lo = prev
        while True:
            try:
                F = family.poly(lam)
                p_new, q, k = _solve_fixed(F, L, IL, p, delta)
                break
            except ContractionLost:
                step = (lam - lo) / 2.0
                if abs(step) < min_step:
                    raise
                p, _, _ = _solve_fixed(family.poly(lo + step), L, IL, p, delta)
                lo += step
                inserted += 1
        p = p_new
        prev = lam
        const = F.value(np.zeros(family.dim))
        pts.append(p.copy())
        qs.append(q)
        g0s.append(float(vnorm(np.linalg.solve(IL, const))))
        its.append(k)
    return ContinuationResult(family.lambdas.copy(), np.array(pts), np.array(qs), np.array(g0s), its, inserted)


def translated_map(F, p, delta, name="translated"):
    """x -> F(p + x) - p as a MapBundle around the fixed point p."""
    const, lin, rest = F.shifted(p)
    if vnorm(const - p) > 1e-12 * max(1.0, vnorm(p)):
        raise HolinearError("p is not a fixed point", defect=float(vnorm(const - p)))
    return MapBundle(lin, rest, delta, name, check=False)


@dataclass
class SweepReport:
    rows: list
    neighbor_sup: list
    neighbor_dsup: list
    metric: float
    dmetric: float
    radius: float
    delta: object
    errors: dict

    def to_dict(self):
        return {"rows": self.rows, "neighbor_sup": self.neighbor_sup, "neighbor_dsup": self.neighbor_dsup,
                "metric": self.metric, "dmetric": self.dmetric, "radius": self.radius, "delta": self.delta,
                "errors": self.errors}


def sweep_linearizations(family, alpha, n_samples=256, tol_tail=1e-10, seed=0, probe=None, delta=None):
    """Linearize every member on a shared ball and measure how R_lambda
    moves between grid neighbours.  Per-lambda errors are collected.

    All members share one bump radius (the smallest planned one) so that
    differences reflect the maps and not plan steps.  ``probe(R, r)``
    optionally extracts a scalar per member (e.g. a coefficient).
    """
    from .pipeline import linearize_map

    cont = continue_fixed_points(family)
    maps = [translated_map(family.poly(l), p, family.delta, f"{family.name}[{l:g}]")
            for l, p in zip(family.lambdas, cont.points)]
    errors = {}
    if delta is None:
        deltas = []
        for lam, T in zip(family.lambdas, maps):
            try:
                r = linearize_map(T, alpha, tol_tail, verify=False, certificate=False)
                deltas.append(r.plan.delta)
            except HolinearError as exc:
                errors[f"{lam:.12g}"] = exc.to_dict()
        delta = min(deltas) if deltas else None
    results = []
    for lam, T in zip(family.lambdas, maps):
        key = f"{lam:.12g}"
        if key in errors:
            results.append(None)
            continue
        try:
            results.append(linearize_map(T, alpha, tol_tail, verify=False, certificate=False, delta_max=delta))
        except HolinearError as exc:
            errors[key] = exc.to_dict()
            results.append(None)
    ok = [r for r in results if r is not None]
    radius = min(r.effective_radius for r in ok) if ok else 0.0
    X = ball_points(family.dim, n_samples, radius, seed) if ok else None
    rows, evals = [], []
    for lam, p, q, res in zip(family.lambdas, cont.points, cont.contraction, results):
        row = {"lambda": float(lam), "p": p.tolist(), "contraction": float(q), "status": "ok" if res else "error"}
        if res is not None:
            e = res.R.evaluate(X)
            evals.append(e)
            row["plan_delta"] = res.plan.delta
            if probe is not None:
                row["probe"] = float(probe(res.R, radius))
        else:
            evals.append(None)
        rows.append(row)
    sup, dsup = [], []
    for e1, e2 in zip(evals[:-1], evals[1:]):
        if e1 is None or e2 is None:
            sup.append(None)
            dsup.append(None)
            continue
        if e1.shift is not None and e2.shift is not None:
            # R_l - R_l' = shift_l - shift_l' exactly, without the rounding of x + phi
            sup.append(float(vnorm(e1.shift - e2.shift).max()))
        else:
            sup.append(float(vnorm(e1.value - e2.value).max()))
        dsup.append(float(np.abs(e1.jacobian - e2.jacobian).sum(axis=-1).max()))
    vals = [s for s in sup if s is not None]
    dvals = [s for s in dsup if s is not None]
    return SweepReport(rows, sup, dsup, max(vals) if vals else float("nan"), max(dvals) if dvals else float("nan"),
                       radius, delta, errors)
