"""Lipschitz and D-Hoelder constants: sampled estimators and the analytic
bound calculus for compositions, inverses and powers.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import qmc

from .errors import AlphaMismatch, DegenerateSample, DomainExceeded, NotInvertibleBound, PreconditionLip
from .spectral import as_operator, opnorm, vnorm

INFLATION = 1.05


@dataclass(frozen=True)
class RegularityBundle:
    """Lip(f, B_r) and Hol_alpha(Df, B_r).

    ``lip_map`` optionally carries the Lipschitz constant of the full map
    (L + f, or of an inverse) when a calculus rule produces it.
    """

    alpha: float
    lip: float
    hol: float
    domain_radius: float
    is_empirical: bool = False
    lip_map: object = None

    def inflated(self, factor=INFLATION):
        return replace(self, lip=self.lip * factor, hol=self.hol * factor)


@dataclass(frozen=True)
class SamplePlan:
    n_points: int
    n_pairs: int
    seed: int = 0
    radius: float = 1.0

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("n_points must be >= 2")
        if self.radius <= 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class HolderFit:
    beta_hat: float
    log_c_hat: float
    r2: float
    n_pairs_used: int

    def to_dict(self):
        b = self.beta_hat
        return {
            "beta_hat": b if np.isfinite(b) else "inf",
            "log_c_hat": self.log_c_hat if np.isfinite(self.log_c_hat) else None,
            "r2": self.r2,
            "n_pairs_used": self.n_pairs_used,
        }


# ---------------------------------------------------------------------------
# sampling


def _halton(dim, n, seed):
    if n <= 0:
        return np.zeros((0, dim))
    eng = qmc.Halton(d=dim, scramble=True, seed=np.random.default_rng(seed))
    return eng.random(n)


def ball_points(dim, n, radius, seed=0):
    """Low-discrepancy points in the closed l-inf ball of given radius."""
    return radius * (2.0 * _halton(dim, n, seed) - 1.0)


def pair_samples(dim, n, radius, seed=0, decades=2.0, local_fraction=0.0, axis_fraction=0.0):
    """Pairs (x1, x2) in B_radius with |x1 - x2| spread geometrically over
    ``decades`` decades below ``radius``.

    A ``local_fraction`` of the pairs has its base point in B_{2h} (h the
    pair separation) so behaviour near the origin is seen at every scale.
    A further ``axis_fraction`` has a single coordinate pulled into
    [-2h, 2h], which exposes derivatives singular along a coordinate
    hyperplane.  Prefix-stable: the first n pairs do not depend on the
    total count.
    """
    U = _halton(2 * dim + 3, n, seed + 7919)
    h = radius * 10.0 ** (-decades * U[:, 0])
    local = U[:, 1] < local_fraction
    axis = ~local & (U[:, 1] < local_fraction + axis_fraction)
    base = 2.0 * U[:, 2:2 + dim] - 1.0
    direction = 2.0 * U[:, 2 + dim:2 + 2 * dim] - 1.0
    dn = vnorm(direction)
    direction = np.where(dn[:, None] > 0, direction / np.where(dn > 0, dn, 1.0)[:, None], 1.0)
    scale = np.where(local, np.minimum(2.0 * h, radius), radius)
    x1 = base * scale[:, None]
    rows = np.nonzero(axis)[0]
    j = np.minimum((U[rows, -1] * dim).astype(int), dim - 1)
    x1[rows, j] *= np.minimum(2.0 * h[rows], radius) / radius
    x2 = x1 + h[:, None] * direction
    out = vnorm(x2) > radius
    x2[out] = x1[out] - h[out, None] * direction[out]
    x2 = np.clip(x2, -radius, radius)
    return x1, x2


def _check_domain(T, radius):
    if not getattr(T, "is_global", False) and radius > T.delta * (1 + 1e-12):
        raise DomainExceeded("sample radius exceeds map domain", radius=radius, delta=T.delta)


def _jac_nl(T, X):
    if hasattr(T, "nonlinear_jacobian"):
        return T.nonlinear_jacobian(X)
    return T.jacobian(X)


def estimate_lip(T, plan):
    """max over sampled x of |Df(x)| (nonlinear part)."""
    _check_domain(T, plan.radius)
    X = ball_points(T.dim, plan.n_points, plan.radius, plan.seed)
    J = _jac_nl(T, X)
    lip = float(np.abs(J).sum(axis=-1).max(axis=-1).max())
    return RegularityBundle(np.nan, lip, np.nan, plan.radius, True)


def _holder_pairs(T, plan):
    X = ball_points(T.dim, plan.n_points, plan.radius, plan.seed)
    P1, P2 = pair_samples(T.dim, plan.n_pairs, plan.radius, plan.seed, local_fraction=0.25)
    Z = np.zeros_like(X)
    return np.vstack([X, P1]), np.vstack([Z, P2])


def estimate_holder(T, alpha, plan):
    """max over sampled pairs of |Df(x) - Df(y)| / |x - y|^alpha.

    Pairs are (x_i, 0) for the estimate_lip points plus separated pairs;
    both families are prefix-stable so more samples never lower the value.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    _check_domain(T, plan.radius)
    X1, X2 = _holder_pairs(T, plan)
    d = vnorm(X1 - X2)
    keep = d > 0
    if not np.any(keep):
        raise DegenerateSample("all sample pairs coincide")
    J1 = _jac_nl(T, X1[keep])
    J2 = _jac_nl(T, X2[keep])
    num = np.abs(J1 - J2).sum(axis=-1).max(axis=-1)
    hol = float((num / d[keep] ** alpha).max())
    J = _jac_nl(T, ball_points(T.dim, plan.n_points, plan.radius, plan.seed))
    lip = float(np.abs(J).sum(axis=-1).max(axis=-1).max())
    return RegularityBundle(alpha, lip, hol, plan.radius, True)


def estimate_holder_at_zero(T, alpha, plan):
    """Pointwise constant H_0(Df) = sup |Df(x) - Df(0)| / |x|^alpha."""
    _check_domain(T, plan.radius)
    X = ball_points(T.dim, plan.n_points, plan.radius, plan.seed)
    r = vnorm(X)
    X = X[r > 0]
    J = _jac_nl(T, X) - _jac_nl(T, np.zeros(T.dim))
    return float((np.abs(J).sum(axis=-1).max(axis=-1) / vnorm(X) ** alpha).max())


def analytic_bundle(T, alpha, radius):
    b = T.bounds(radius, alpha)
    if b is None or not np.all(np.isfinite(b)):
        return None
    return RegularityBundle(alpha, float(b[0]), float(b[1]), radius, False)


def regularity_at(T, alpha, radius, n_points=2048, n_pairs=2048, seed=0):
    """Analytic bundle when the map provides one, else the empirical
    estimate inflated by 1.05."""
    b = analytic_bundle(T, alpha, radius)
    if b is not None:
        return b
    plan = SamplePlan(n_points, n_pairs, seed, radius)
    return estimate_holder(T, alpha, plan).inflated()


# ---------------------------------------------------------------------------
# exponent fit


ROUNDING_FLOOR = 64 * np.finfo(float).eps


def _diff_norm(D1, D2):
    diff = np.asarray(D1) - np.asarray(D2)
    if diff.ndim == 1:
        return np.abs(diff)
    if diff.ndim == 2:
        return np.abs(diff).max(axis=-1)
    return np.abs(diff).sum(axis=-1).max(axis=-1)


def fit_holder_exponent(points, derivs, window=None, n_bins=20):
    """Slope of log|Delta D| against log|Delta x|.

    Samples are consumed as consecutive pairs (0, 1), (2, 3), ...  The
    fit runs on the upper envelope: the largest |Delta D| in each of
    ``n_bins`` log-spaced separation bins, which estimates the modulus of
    continuity rather than an average slope.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    D = np.asarray(derivs, dtype=float)
    m = len(P) // 2
    P1, P2 = P[0:2 * m:2], P[1:2 * m:2]
    D1, D2 = D[0:2 * m:2], D[1:2 * m:2]
    dx = vnorm(P1 - P2)
    distinct = dx > 0
    if distinct.sum() < 32:
        raise DegenerateSample("need at least 32 pairs with distinct points", pairs=int(distinct.sum()))
    dD = _diff_norm(D1, D2)
    # differences at the rounding level of D itself carry no information
    zero = np.zeros_like(D1)
    floor = ROUNDING_FLOOR * np.maximum(_diff_norm(D1, zero), _diff_norm(D2, zero))
    lo, hi = (dx[distinct].min(), dx[distinct].max()) if window is None else window
    sel = distinct & (dx >= lo) & (dx <= hi) & (dD > floor)
    n_used = int(sel.sum())
    if n_used == 0:
        return HolderFit(np.inf, np.nan, 1.0, 0)
    lx, ly = np.log(dx[sel]), np.log(dD[sel])
    if lx.max() - lx.min() <= 0:
        raise DegenerateSample("separations span no range")
    edges = np.linspace(lx.min(), lx.max(), n_bins + 1)
    idx = np.clip(np.searchsorted(edges, lx, side="right") - 1, 0, n_bins - 1)
    xs, ys = [], []
    for b in range(n_bins):
        inb = np.nonzero(idx == b)[0]
        if inb.size:
            k = inb[np.argmax(ly[inb])]
            xs.append(lx[k])
            ys.append(ly[k])
    xs, ys = np.array(xs), np.array(ys)
    if len(xs) < 3:
        xs, ys = lx, ly
    A = np.vstack([xs, np.ones_like(xs)]).T
    (slope, icept), *_ = np.linalg.lstsq(A, ys, rcond=None)
    pred = A @ np.array([slope, icept])
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    ss_res = float(((ys - pred) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - ss_res / ss_tot)
    return HolderFit(float(slope), float(icept), r2, n_used)


# ---------------------------------------------------------------------------
# analytic calculus


def bound_compose(bS, bT, lipS, lipT):
    """Bundle for S o T: Lip <= Lip(S)Lip(T),
    Hol <= Lip(S)Hol(DT) + Lip(T)^{1+a}Hol(DS)."""
    if not np.isclose(bS.alpha, bT.alpha, rtol=0, atol=1e-15):
        raise AlphaMismatch("bundles carry different alpha", alpha_S=bS.alpha, alpha_T=bT.alpha)
    a = bS.alpha
    hol = lipS * bT.hol + lipT ** (1 + a) * bS.hol
    return RegularityBundle(a, lipS * lipT, hol, bT.domain_radius, bS.is_empirical or bT.is_empirical, lipS * lipT)


def bound_inverse(b, L):
    """Bundle for T^{-1} = L^{-1} + g given Lip(f) = l < m(L):
    Lip(T^{-1}) <= 1/(m - l), Lip(g) <= |L^{-1}| l/(m - l),
    Hol(Dg) <= h/(m - l)^{2+a}."""
    L = as_operator(L)
    m = L.min_norm
    if b.lip >= m:
        raise NotInvertibleBound("Lip(f) >= m(L)", lip=b.lip, m_L=m)
    gap = m - b.lip
    return RegularityBundle(
        b.alpha,
        L.inv_norm * b.lip / gap,
        b.hol / gap ** (2 + b.alpha),
        gap * b.domain_radius,
        b.is_empirical,
        1.0 / gap,
    )


def bound_power(b, L, m, lipT):
    """Bundle for the nonlinear part f_m of T^m (Lip(T) >= 1 required):
    Lip(f_m) <= m Lip(f) Lip(T)^{m-1}, Hol(Df_m) <= m Hol(Df) Lip(T)^{(1+a)(m-1)}.
    Passing the inverse's bundle and Lip(T^{-1}) gives the g_m bounds."""
    if lipT < 1:
        raise PreconditionLip("bound_power needs Lip(T) >= 1", lipT=lipT)
    m = int(m)
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return b
    a = b.alpha
    return RegularityBundle(
        a,
        m * b.lip * lipT ** (m - 1),
        m * b.hol * lipT ** ((1 + a) * (m - 1)),
        b.domain_radius,
        b.is_empirical,
        None if b.lip_map is None else b.lip_map ** m,
    )


def inverse_diff_bound(h1, h2):
    """|h2^{-1}| |h1 - h2| |h1^{-1}| (bounds |h1^{-1} - h2^{-1}|)."""
    h1, h2 = as_operator(h1), as_operator(h2)
    return h2.inv_norm * opnorm(h1.entries - h2.entries) * h1.inv_norm
