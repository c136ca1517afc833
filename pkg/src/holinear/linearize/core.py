"""Conjugacy maps R = I + phi as pointwise evaluators, their inverses and
compositions."""

from dataclasses import dataclass

import numpy as np

from ..errors import DomainMismatch, NoConvergence
from ..maps import _batch
from ..spectral import opnorm, vnorm

KINDS = ("contracting_series", "saddle_series", "flattening", "h_product", "composition", "identity", "linear")


@dataclass
class Evaluation:
    value: np.ndarray
    jacobian: np.ndarray
    tail: np.ndarray
    nterms: np.ndarray
    # R(x) - x accumulated without forming x + phi first; value - x loses
    # everything below ulp(x) when phi is tiny next to x
    shift: np.ndarray = None


class ConjugacyMap:
    """R evaluated pointwise by ``evaluator(X) -> Evaluation`` on batches.

    ``radius`` is the l-inf radius on which R is a valid conjugacy (inf for
    global ones).  ``image_radius`` bounds |R(x)| on that ball.
    """

    def __init__(self, kind, dim, evaluator, radius=np.inf, tol_tail=0.0, source=None, plan=None,
                 components=None, image_radius=None):
        if kind not in KINDS:
            raise ValueError(f"unknown conjugacy kind {kind!r}")
        self.kind = kind
        self.dim = dim
        self._evaluator = evaluator
        self.radius = float(radius)
        self.tol_tail = tol_tail
        self.source = source
        self.plan = plan
        self.components = components or {}
        self.image_radius = image_radius
        self.last_max_terms = 0

    def evaluate(self, x):
        X, single = _batch(x, self.dim)
        ev = self._evaluator(X)
        if len(ev.nterms):
            self.last_max_terms = max(self.last_max_terms, int(np.max(ev.nterms)))
        if single:
            return Evaluation(ev.value[0], ev.jacobian[0], ev.tail[0], ev.nterms[0],
                              None if ev.shift is None else ev.shift[0])
        return ev

    def __call__(self, x):
        return self.evaluate(x).value

    def jacobian(self, x):
        return self.evaluate(x).jacobian

    def inverse(self, y, tol=1e-15, max_iter=60):
        """Newton solve R(x) = y, started at x = y."""
        Y, single = _batch(y, self.dim)
        X = Y.copy()
        scale = np.maximum(vnorm(Y), 1e-300)
        for _ in range(max_iter):
            ev = self._evaluator(X)
            res = ev.value - Y
            err = vnorm(res)
            if np.all(err <= tol * scale + 1e-300):
                return X[0] if single else X
            X = X - np.linalg.solve(ev.jacobian, res[..., None])[..., 0]
        raise NoConvergence("inverse of conjugacy did not converge", max_residual=float(err.max()))

    def inverse_jacobian(self, y):
        X = self.inverse(y)
        return np.linalg.inv(self.jacobian(X))


def identity_conjugacy(dim, radius=np.inf):
    def ev(X):
        n = len(X)
        return Evaluation(X.copy(), np.broadcast_to(np.eye(dim), (n, dim, dim)).copy(), np.zeros(n), np.zeros(n, dtype=int),
                          np.zeros_like(X))

    return ConjugacyMap("identity", dim, ev, radius=radius, image_radius=radius)


def linear_conjugacy(P, Pinv, inner, radius=None):
    """x -> P inner(Pinv x): carries a conjugacy from working coordinates."""
    P = np.asarray(P, dtype=float)
    Pinv = np.asarray(Pinv, dtype=float)
    dim = P.shape[0]

    def ev(X):
        e = inner.evaluate(X @ Pinv.T)
        shift = None if e.shift is None else e.shift @ P.T
        return Evaluation(e.value @ P.T, P @ e.jacobian @ Pinv, opnorm(P) * e.tail, e.nterms, shift)

    if radius is None:
        radius = inner.radius / opnorm(Pinv)
    img = None if inner.image_radius is None else inner.image_radius * opnorm(P)
    return ConjugacyMap("linear", dim, ev, radius=radius, tol_tail=inner.tol_tail, source=inner.source,
                        plan=inner.plan, components={"inner": inner}, image_radius=img)


def compose_conjugacies(*maps):
    """R = R_k o ... o R_1 for maps given in application order R_1, ..., R_k."""
    if len(maps) == 1 and isinstance(maps[0], (list, tuple)):
        maps = tuple(maps[0])
    if not maps:
        raise ValueError("need at least one conjugacy")
    if len(maps) == 1:
        return maps[0]
    dim = maps[0].dim
    for a, b in zip(maps[:-1], maps[1:]):
        if a.dim != b.dim:
            raise DomainMismatch("dimensions differ", left=a.dim, right=b.dim)
        img = a.image_radius if a.image_radius is not None else a.radius
        if img > b.radius * (1 + 1e-12):
            raise DomainMismatch("output ball does not fit the next input ball", image=img, next_radius=b.radius)

    def ev(X):
        J = None
        tail = np.zeros(len(X))
        nterms = np.zeros(len(X), dtype=int)
        Y = X
        shift = np.zeros_like(X)
        for R in maps:
            e = R.evaluate(Y)
            J = e.jacobian if J is None else e.jacobian @ J
            tail = tail + e.tail
            nterms = np.maximum(nterms, e.nterms)
            shift = None if shift is None or e.shift is None else shift + e.shift
            Y = e.value
        return Evaluation(Y, J, tail, nterms, shift)

    return ConjugacyMap("composition", dim, ev, radius=maps[0].radius, tol_tail=sum(m.tol_tail for m in maps),
                        source=maps[-1].source, plan=maps[-1].plan, components={"stages": list(maps)},
                        image_radius=maps[-1].image_radius)


class ConjugatedForm:
    """Nonlinear part of R T R^{-1} - L for a conjugacy R (dense evaluator)."""

    is_polynomial = False

    def __init__(self, T, R, L):
        self.T = T
        self.R = R
        self.Lm = np.asarray(L, dtype=float)
        self.dim = T.dim
        self.tag = "conjugated"
        self.params = ()

    def _parts(self, X):
        W = self.R.inverse(X)
        TW = self.T.eval(W)
        e = self.R.evaluate(TW)
        return W, TW, e

    def value(self, x):
        X, single = _batch(x, self.dim)
        _, _, e = self._parts(X)
        out = e.value - X @ self.Lm.T
        return out[0] if single else out

    def jacobian(self, x):
        X, single = _batch(x, self.dim)
        W, _, e = self._parts(X)
        DRinv = np.linalg.inv(self.R.evaluate(W).jacobian)
        J = e.jacobian @ self.T.jacobian(W) @ DRinv - self.Lm
        return J[0] if single else J

    def bounds(self, radius, alpha):
        return None

    def axis_flags(self, du):
        return None


def restricted(R, radius, image_radius=None):
    """The same evaluator declared valid only on B_radius."""
    out = ConjugacyMap(R.kind, R.dim, R._evaluator, radius=radius, tol_tail=R.tol_tail, source=R.source,
                       plan=R.plan, components=R.components, image_radius=image_radius)
    out.base = R
    return out
