"""Maps T = L + f: polynomial and closed-form nonlinear parts, exact
Jacobians, orbits, pointwise inversion and local stable-set membership.

Points are arrays of shape (d,) or batches of shape (n, d); every
evaluator returns the same leading shape it was given.
"""

from dataclasses import dataclass
from itertools import product
from math import comb

import numpy as np

from .errors import DomainExceeded, NoConvergence, ParseError, PreconditionLip
from .spectral import Operator, as_operator, opnorm, vnorm

MAX_DEGREE = 6
MAX_DIM = 8


def _batch(x, dim):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {X.shape[-1]}")
    return X, single


def _kahan(parts, out_shape):
    s = np.zeros(out_shape)
    c = np.zeros(out_shape)
    for p in parts:
        y = p - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


# ---------------------------------------------------------------------------
# polynomial nonlinear parts


class PolyMap:
    """Sum of monomials c * x^e placed in output coordinate ``coord``.

    Terms of total degree <= 1 are rejected unless ``allow_low_degree``
    (used only for parameter families whose fixed point moves).
    """

    is_polynomial = True
    tag = "poly"

    def __init__(self, dim, terms, allow_low_degree=False):
        if not 1 <= dim <= MAX_DIM:
            raise ParseError(f"dimension must be in 1..{MAX_DIM}", dim=dim)
        merged = {}
        for t in terms:
            try:
                c, e, i = t
                c = float(c)
                e = tuple(int(v) for v in e)
                i = int(i)
            except (TypeError, ValueError) as exc:
                raise ParseError(f"bad term {t!r}: {exc}")
            if len(e) != dim or min(e, default=0) < 0:
                raise ParseError(f"term exponents {e} do not match dim {dim}")
            if not 0 <= i < dim:
                raise ParseError(f"term coordinate {i} out of range")
            deg = sum(e)
            if deg > MAX_DEGREE:
                raise ParseError(f"degree {deg} exceeds cap {MAX_DEGREE}")
            if deg <= 1 and not allow_low_degree:
                raise ParseError(f"term {t!r} has degree <= 1; linear parts belong to L")
            merged.setdefault((i, e), []).append(c)
        self.dim = dim
        self.allow_low_degree = allow_low_degree
        items = sorted((k, float(np.sum(np.sort(v)))) for k, v in merged.items())
        items = [(k, c) for k, c in items if c != 0.0]
        self.coords = np.array([k[0] for k, _ in items], dtype=int)
        self.exps = np.array([k[1] for k, _ in items], dtype=int).reshape(-1, dim)
        self.coefs = np.array([c for _, c in items], dtype=float)
        self.degrees = self.exps.sum(axis=1) if len(items) else np.zeros(0, dtype=int)
        self._dterms = []
        for c, e, i in zip(self.coefs, self.exps, self.coords):
            for j in range(dim):
                if e[j] > 0:
                    e2 = e.copy()
                    e2[j] -= 1
                    self._dterms.append((i, j, c * e[j], e2))

    @property
    def terms(self):
        return [(float(c), [int(v) for v in e], int(i)) for c, e, i in zip(self.coefs, self.exps, self.coords)]

    @property
    def degree(self):
        return int(self.degrees.max()) if len(self.coefs) else 0

    def __len__(self):
        return len(self.coefs)

    def _powers(self, X):
        top = max(self.degree, 1)
        pw = [np.ones_like(X)]
        for _ in range(top):
            pw.append(pw[-1] * X)
        return pw

    @staticmethod
    def _mono(pw, e):
        m = None
        for j, k in enumerate(e):
            if k:
                m = pw[k][:, j] if m is None else m * pw[k][:, j]
        return np.ones(pw[0].shape[0]) if m is None else m

    def value(self, x, linear=None):
        """f(x), or L x + f(x) when ``linear`` is given; compensated sums."""
        X, single = _batch(x, self.dim)
        pw = self._powers(X)
        out = np.empty_like(X)
        for i in range(self.dim):
            parts = []
            if linear is not None:
                row = linear[i]
                parts.extend(row[j] * X[:, j] for j in range(self.dim) if row[j] != 0.0)
            for t in np.nonzero(self.coords == i)[0]:
                parts.append(self.coefs[t] * self._mono(pw, self.exps[t]))
            out[:, i] = _kahan(parts, X.shape[0])
        return out[0] if single else out

    def jacobian(self, x, pw=None):
        X, single = _batch(x, self.dim)
        if pw is None:
            pw = self._powers(X)
        J = np.zeros((X.shape[0], self.dim, self.dim))
        for i, j, c, e in self._dterms:
            J[:, i, j] += c * self._mono(pw, e)
        return J[0] if single else J

    def value_and_jacobian(self, X):
        """(f(X), Df(X)) for a batch, sharing the power table."""
        pw = self._powers(X)
        out = np.empty_like(X)
        for i in range(self.dim):
            parts = [self.coefs[t] * self._mono(pw, self.exps[t]) for t in np.nonzero(self.coords == i)[0]]
            out[:, i] = _kahan(parts, X.shape[0])
        return out, self.jacobian(X, pw)

    def bounds(self, radius, alpha):
        """Analytic (Lip(f, B_r), Hol_alpha(Df, B_r)) in the l-inf norms."""
        r = float(radius)
        lip = np.zeros(self.dim)
        d2 = np.zeros(self.dim)
        for c, d, i in zip(self.coefs, self.degrees, self.coords):
            if d >= 1:
                lip[i] += abs(c) * d * r ** (d - 1)
            if d >= 2:
                d2[i] += abs(c) * d * (d - 1) * r ** (d - 2)
        hol = d2.max(initial=0.0) * (2 * r) ** (1 - alpha)
        return float(lip.max(initial=0.0)), float(hol)

    # symbolic structure in a (u, s) block basis -------------------------
    def _mix(self, du):
        u = self.exps[:, :du].sum(axis=1) > 0
        s = self.exps[:, du:].sum(axis=1) > 0
        return u, s

    def axis_flags(self, du):
        """(flat, h_linear) read off the monomials for the block split at du."""
        u, s = self._mix(du)
        out_u = self.coords < du
        pure_u, pure_s = u & ~s, s & ~u
        flat = not np.any(pure_u & ~out_u) and not np.any(pure_s & out_u)
        hlin = flat and not np.any(pure_u & out_u) and not np.any(pure_s & ~out_u)
        return bool(flat), bool(hlin)

    # algebra -------------------------------------------------------------
    @staticmethod
    def _poly_from_linear_forms(P, e):
        """Expand prod_i (sum_j P[i, j] u_j)^{e_i} as {exponent: coef}."""
        dim = P.shape[1]
        acc = {tuple([0] * dim): 1.0}
        for i, k in enumerate(e):
            for _ in range(k):
                nxt = {}
                for mono, c in acc.items():
                    for j in range(dim):
                        if P[i, j] == 0.0:
                            continue
                        m = list(mono)
                        m[j] += 1
                        m = tuple(m)
                        nxt[m] = nxt.get(m, 0.0) + c * P[i, j]
                acc = nxt
        return acc

    def compose_linear(self, P, Pinv):
        """Polynomial u -> Pinv f(P u)."""
        P = np.asarray(P, dtype=float)
        Pinv = np.asarray(Pinv, dtype=float)
        dim = P.shape[1]
        table = {}
        for c, e, i in zip(self.coefs, self.exps, self.coords):
            expanded = self._poly_from_linear_forms(P, e)
            for mono, v in expanded.items():
                for k in range(Pinv.shape[0]):
                    if Pinv[k, i] != 0.0:
                        table.setdefault((k, mono), 0.0)
                        table[(k, mono)] += Pinv[k, i] * c * v
        terms = [(v, list(m), k) for (k, m), v in table.items() if abs(v) > 1e-300]
        return PolyMap(dim, terms, allow_low_degree=self.allow_low_degree)

    def shifted(self, p):
        """Coefficients of f(p + u) grouped by degree: returns
        (f(p), Df(p), PolyMap of the degree >= 2 remainder)."""
        p = np.asarray(p, dtype=float)
        table = {}
        for c, e, i in zip(self.coefs, self.exps, self.coords):
            ranges = [range(k + 1) for k in e]
            for sub in product(*ranges):
                coef = c
                for j, (k, s) in enumerate(zip(e, sub)):
                    coef *= comb(k, s) * p[j] ** (k - s)
                key = (i, sub)
                table[key] = table.get(key, 0.0) + coef
        const = np.zeros(self.dim)
        lin = np.zeros((self.dim, self.dim))
        rest = []
        for (i, sub), v in table.items():
            d = sum(sub)
            if d == 0:
                const[i] += v
            elif d == 1:
                lin[i, sub.index(1)] += v
            elif v != 0.0:
                rest.append((v, list(sub), i))
        return const, lin, PolyMap(self.dim, rest)

    def to_json(self):
        return [[float(c), [int(v) for v in e], int(i)] for c, e, i in zip(self.coefs, self.exps, self.coords)]


class HartmanForm(PolyMap):
    """Nonlinear part of T(x, y, z) = (a x, b (y + eps x z), c z)."""

    tag = "hartman"

    def __init__(self, a, b, c, eps):
        super().__init__(3, [(b * eps, [1, 0, 1], 1)])
        self.params = (float(a), float(b), float(c), float(eps))


# ---------------------------------------------------------------------------
# closed-form builtins


class SternbergForm:
    """f(x) = -a x / log|x| so that T(x) = a x (1 - 1/log|x|); f(0) = 0."""

    tag = "sternberg"
    is_polynomial = False
    dim = 1

    def __init__(self, a):
        self.params = (float(a),)
        self.a = float(a)

    def value(self, x):
        X, single = _batch(x, 1)
        t = X[:, 0]
        out = np.zeros_like(t)
        nz = t != 0
        out[nz] = -self.a * t[nz] / np.log(np.abs(t[nz]))
        out = out[:, None]
        return out[0] if single else out

    def jacobian(self, x):
        X, single = _batch(x, 1)
        t = X[:, 0]
        out = np.zeros_like(t)
        nz = t != 0
        lg = np.log(np.abs(t[nz]))
        out[nz] = -self.a * (1.0 / lg - 1.0 / lg ** 2)
        out = out[:, None, None]
        return out[0] if single else out

    def bounds(self, radius, alpha):
        return None

    def axis_flags(self, du):
        return None


class PlantedForm:
    """Planted C^{1,a}-only saddle term: f(x, y) = (k y |x|^{1+a}, 0)."""

    tag = "planted"
    is_polynomial = False
    dim = 2

    def __init__(self, a_planted, k):
        self.ap = float(a_planted)
        self.k = float(k)
        self.params = (self.ap, self.k)

    def value(self, x):
        X, single = _batch(x, 2)
        out = np.zeros_like(X)
        out[:, 0] = self.k * X[:, 1] * np.abs(X[:, 0]) ** (1 + self.ap)
        return out[0] if single else out

    def jacobian(self, x):
        X, single = _batch(x, 2)
        J = np.zeros((X.shape[0], 2, 2))
        ax = np.abs(X[:, 0])
        J[:, 0, 0] = self.k * (1 + self.ap) * ax ** self.ap * np.sign(X[:, 0]) * X[:, 1]
        J[:, 0, 1] = self.k * ax ** (1 + self.ap)
        return J[0] if single else J

    def bounds(self, radius, alpha):
        r, k, ap = float(radius), abs(self.k), self.ap
        lip = k * (2 + ap) * r ** (1 + ap)
        if alpha > ap + 1e-15:
            return lip, np.inf
        hol_p = k * (1 + ap) * r * 2 ** (1 - ap) * 3
        return lip, hol_p * (2 * r) ** (ap - alpha)

    def axis_flags(self, du):
        return (True, True) if du == 1 else None


class LinearConjugateForm:
    """u -> Pinv f(P u) for a non-polynomial f."""

    is_polynomial = False

    def __init__(self, f, P, Pinv):
        self.f = f
        self.P = np.asarray(P, dtype=float)
        self.Pinv = np.asarray(Pinv, dtype=float)
        self.dim = self.P.shape[1]
        self.tag = getattr(f, "tag", "form")
        self.params = getattr(f, "params", ())

    def value(self, u):
        U, single = _batch(u, self.dim)
        out = self.f.value(U @ self.P.T) @ self.Pinv.T
        return out[0] if single else out

    def jacobian(self, u):
        U, single = _batch(u, self.dim)
        J = self.Pinv @ self.f.jacobian(U @ self.P.T) @ self.P
        return J[0] if single else J

    def bounds(self, radius, alpha):
        nP, nPi = opnorm(self.P), opnorm(self.Pinv)
        b = self.f.bounds(radius * nP, alpha)
        if b is None:
            return None
        lip, hol = b
        return nPi * lip * nP, nPi * hol * nP ** (1 + alpha)

    def axis_flags(self, du):
        # block-diagonal changes of basis keep the axes E^u x 0 and 0 x E^s
        for M in (self.P, self.Pinv):
            if np.any(M[:du, du:]) or np.any(M[du:, :du]):
                return None
        return self.f.axis_flags(du)


class ZeroForm:
    is_polynomial = True
    tag = "zero"
    params = ()

    def __init__(self, dim):
        self.dim = dim

    def value(self, x):
        X, single = _batch(x, self.dim)
        return np.zeros(self.dim) if single else np.zeros_like(X)

    def jacobian(self, x):
        X, single = _batch(x, self.dim)
        J = np.zeros((X.shape[0], self.dim, self.dim))
        return J[0] if single else J

    def bounds(self, radius, alpha):
        return 0.0, 0.0

    def axis_flags(self, du):
        return True, True

    def compose_linear(self, P, Pinv):
        return ZeroForm(np.asarray(P).shape[1])


# ---------------------------------------------------------------------------
# map bundle


class MapBundle:
    """T = L + f on the ball B_delta (or everywhere when ``is_global``).

    ``dim_u`` is set when coordinates are ordered (E^u, E^s).
    """

    def __init__(self, L, f, delta, name="", is_global=False, dim_u=None, check=True):
        self.L = as_operator(L)
        self.f = f
        self.delta = float(delta)
        self.name = name
        self.is_global = is_global
        self.dim_u = dim_u
        if f.dim != self.L.dim:
            raise ParseError("nonlinear part and L have different dimensions")
        if check:
            z = np.zeros(self.dim)
            if vnorm(f.value(z)) > 1e-12 or opnorm(f.jacobian(z)) > 1e-12:
                raise ParseError("f(0) = 0 and Df(0) = 0 are required")

    @property
    def dim(self):
        return self.L.dim

    def _check(self, X):
        if self.is_global:
            return
        r = vnorm(X)
        if np.any(r > self.delta * (1 + 1e-12)):
            raise DomainExceeded("evaluation outside B_delta", delta=self.delta, radius=float(r.max()))

    def nonlinear(self, x):
        X, single = _batch(x, self.dim)
        self._check(X)
        out = self.f.value(X)
        return out[0] if single else out

    def nonlinear_jacobian(self, x):
        X, single = _batch(x, self.dim)
        self._check(X)
        out = self.f.jacobian(X)
        return out[0] if single else out

    def nonlinear_step(self, X):
        """(f(X), Df(X)) for a batch with a single domain check."""
        self._check(X)
        if hasattr(self.f, "value_and_jacobian"):
            return self.f.value_and_jacobian(X)
        return self.f.value(X), self.f.jacobian(X)

    def eval(self, x):
        X, single = _batch(x, self.dim)
        self._check(X)
        if isinstance(self.f, PolyMap):
            out = self.f.value(X, linear=self.L.entries)
        else:
            out = X @ self.L.entries.T + self.f.value(X)
        return out[0] if single else out

    __call__ = eval

    def jacobian(self, x):
        X, single = _batch(x, self.dim)
        self._check(X)
        out = self.L.entries + self.f.jacobian(X)
        return out[0] if single else out

    def bounds(self, radius, alpha):
        return self.f.bounds(radius, alpha)

    def axis_flags(self):
        if self.dim_u is None:
            return None
        return self.f.axis_flags(self.dim_u)

    def with_delta(self, delta):
        return MapBundle(self.L, self.f, delta, self.name, self.is_global, self.dim_u, check=False)

    def conjugate(self, P, Pinv, dim_u=None, name=None):
        """Bundle for u -> Pinv T(P u) on the largest ball P maps into B_delta."""
        P = np.asarray(P, dtype=float)
        Pinv = np.asarray(Pinv, dtype=float)
        L2 = Pinv @ self.L.entries @ P
        if hasattr(self.f, "compose_linear"):
            f2 = self.f.compose_linear(P, Pinv)
        else:
            f2 = LinearConjugateForm(self.f, P, Pinv)
        delta = self.delta / opnorm(P) if not self.is_global else self.delta
        return MapBundle(L2, f2, delta, name or self.name, self.is_global, dim_u, check=False)


# ---------------------------------------------------------------------------
# inversion, orbits


def invert_point(T, z, tol=1e-13, lip=None, max_iter=200, rtol=0.0):
    """w with |T(w) - z| <= tol + rtol |z| by w <- L^{-1}(z - f(w))."""
    Z, single = _batch(z, T.dim)
    if lip is None:
        # the ball-wide bound is only sufficient; without a caller-supplied
        # constant the iteration itself decides (NoConvergence)
        lip = getattr(T, "lip_global", None)
    if lip is not None and lip >= T.L.min_norm:
        raise PreconditionLip("Lip(f) >= m(L): inversion not guaranteed", lip=lip, m_L=T.L.min_norm)
    Li = T.L.inverse
    W = Z @ Li.T
    thresh = tol + rtol * vnorm(Z)
    done = np.zeros(len(W), dtype=bool)
    for _ in range(max_iter):
        if not T.is_global:
            r = vnorm(W)
            if np.any(r > T.delta * (1 + 1e-12)):
                raise DomainExceeded("preimage leaves B_delta", delta=T.delta, radius=float(r.max()))
        W_new = (Z - T.nonlinear(W)) @ Li.T
        W = np.where(done[:, None], W, W_new)
        res = vnorm(T.eval(W) - Z)
        done = res <= thresh
        if done.all():
            return W[0] if single else W
    raise NoConvergence("invert_point did not converge", max_residual=float(res.max()), iterations=max_iter)


@dataclass
class Orbit:
    points: np.ndarray
    escaped_at: object = None


def orbit(T, x0, n, direction="forward", tol=1e-13):
    x = np.asarray(x0, dtype=float)
    if not T.is_global and vnorm(x) > T.delta * (1 + 1e-12):
        raise DomainExceeded("orbit start outside B_delta", delta=T.delta)
    pts = [x]
    escaped = None
    for k in range(1, n + 1):
        if direction == "forward":
            x = T.eval(x)
        elif direction == "backward":
            x = invert_point(T, x, tol)
        else:
            raise ValueError("direction must be forward or backward")
        pts.append(x)
        if escaped is None and vnorm(x) > T.delta:
            escaped = k
            if not T.is_global:
                break
    return Orbit(np.array(pts), escaped)


def stable_set_member(T, x, n_max):
    """Finite-horizon surrogate: forward orbit stays in B_delta n_max steps."""
    return orbit(T, x, n_max).escaped_at is None


# ---------------------------------------------------------------------------
# builtins


def builtin(tag, params):
    p = [float(v) for v in params]
    try:
        if tag == "hartman":
            a, b, c, eps = p
            return MapBundle(np.diag([a, b, c]), HartmanForm(a, b, c, eps), 1.0, f"hartman({a:g},{b:g},{c:g},{eps:g})", dim_u=None)
        if tag == "sternberg":
            (a,) = p
            if not 0 < a < 1:
                raise ParseError("sternberg needs 0 < a < 1")
            return MapBundle([[a]], SternbergForm(a), 0.4, f"sternberg({a:g})")
        if tag == "saddle2d_quadratic":
            lu, ls, a20, a11, a02, b20, b11, b02 = p
            terms = [(a20, [2, 0], 0), (a11, [1, 1], 0), (a02, [0, 2], 0),
                     (b20, [2, 0], 1), (b11, [1, 1], 1), (b02, [0, 2], 1)]
            return MapBundle(np.diag([lu, ls]), PolyMap(2, terms), 0.5, "saddle2d_quadratic")
        if tag == "planted":
            lu, ls, ap, k = p
            return MapBundle(np.diag([lu, ls]), PlantedForm(ap, k), 1.0, f"planted({lu:g},{ls:g},{ap:g},{k:g})")
    except ValueError as exc:
        raise ParseError(f"bad parameters for builtin {tag}: {exc}")
    raise ParseError(f"unknown builtin {tag!r}")


BUILTIN_PARAMS = {
    "hartman": ("a", "b", "c", "eps"),
    "sternberg": ("a",),
    "saddle2d_quadratic": ("lu", "ls", "a20", "a11", "a02", "b20", "b11", "b02"),
    "planted": ("lu", "ls", "alpha", "k"),
}
