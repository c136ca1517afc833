"""C^{1,1} bump functions on R^N, delta-scaling, and globalisation
S = L + lambda_delta f of a local map.

The bump is the tensor product lambda(x) = prod_i psi(|x_i|) of the cubic
Hermite step psi: 1 on [0, c], 2s^3 - 3s^2 + 1 with s = (t - c)/(1 - c) on
[c, 1], 0 beyond.  It equals 1 exactly on the cube |x|_inf <= c and 0
exactly outside the open unit cube.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadPlateau, DomainExceeded, InvertibilityLost, NotHLinear
from .maps import MapBundle, _batch
from .regularity import RegularityBundle, SamplePlan, bound_power, estimate_holder, regularity_at
from .spectral import vnorm


@dataclass(frozen=True)
class BumpProfile:
    c: float
    dim: int = 1

    @property
    def max_dpsi(self):
        return 1.5 / (1.0 - self.c)

    @property
    def max_d2psi(self):
        return 6.0 / (1.0 - self.c) ** 2

    @property
    def lip_lambda(self):
        return self.dim * self.max_dpsi

    @property
    def lip_dlambda(self):
        n = self.dim
        return n * self.max_d2psi + n * (n - 1) * self.max_dpsi ** 2

    def hol_dlambda(self, alpha):
        ld = self.lip_dlambda
        return min(ld * 2.0 ** (1 - alpha), ld ** alpha * (2.0 * self.lip_lambda) ** (1 - alpha))

    def C1(self):
        return 1.0 + self.lip_lambda

    def C2(self, alpha):
        return 1.0 + 2.0 * self.lip_lambda + 3.0 * self.hol_dlambda(alpha)

    # profile ------------------------------------------------------------
    def psi(self, t):
        t = np.asarray(t, dtype=float)
        s = (t - self.c) / (1.0 - self.c)
        mid = 2 * s ** 3 - 3 * s ** 2 + 1
        return np.where(t <= self.c, 1.0, np.where(t >= 1.0, 0.0, mid))

    def dpsi(self, t):
        t = np.asarray(t, dtype=float)
        s = (t - self.c) / (1.0 - self.c)
        mid = (6 * s ** 2 - 6 * s) / (1.0 - self.c)
        return np.where((t <= self.c) | (t >= 1.0), 0.0, mid)

    def value(self, x):
        X, single = _batch(x, self.dim)
        out = np.prod(self.psi(np.abs(X)), axis=1)
        return out[0] if single else out

    def gradient(self, x):
        X, single = _batch(x, self.dim)
        A = np.abs(X)
        P = self.psi(A)
        G = self.dpsi(A) * np.sign(X)
        out = np.empty_like(X)
        for i in range(self.dim):
            others = np.prod(np.delete(P, i, axis=1), axis=1) if self.dim > 1 else 1.0
            out[:, i] = G[:, i] * others
        return out[0] if single else out


def make_bump(c=0.5, dim=1):
    if not 0.0 < c < 1.0:
        raise BadPlateau("plateau radius c must lie in (0, 1)", c=c)
    return BumpProfile(float(c), int(dim))


@dataclass(frozen=True)
class ScaledBump:
    profile: BumpProfile
    delta: float

    @property
    def lip(self):
        return self.profile.lip_lambda / self.delta

    def hol(self, alpha):
        return self.profile.hol_dlambda(alpha) / self.delta ** (1 + alpha)

    def value(self, x):
        return self.profile.value(np.asarray(x, dtype=float) / self.delta)

    def gradient(self, x):
        return self.profile.gradient(np.asarray(x, dtype=float) / self.delta) / self.delta


def scale(profile, delta):
    if delta <= 0:
        raise ValueError("delta must be positive")
    return ScaledBump(profile, float(delta))


class GlobalizedForm:
    """Nonlinear part g = lambda_delta f, identically 0 off B_delta."""

    is_polynomial = False

    def __init__(self, f, bump, lip_g, hol_g):
        self.f = f
        self.bump = bump
        self.dim = f.dim
        self.tag = "globalized"
        self.params = ()
        self.lip_g = lip_g
        self.hol_g = hol_g

    def _inside(self, X):
        return vnorm(X) < self.bump.delta

    def value(self, x):
        X, single = _batch(x, self.dim)
        out = np.zeros_like(X)
        m = self._inside(X)
        if np.any(m):
            Y = X[m]
            out[m] = self.bump.value(Y)[:, None] * self.f.value(Y)
        return out[0] if single else out

    def jacobian(self, x):
        X, single = _batch(x, self.dim)
        J = np.zeros((X.shape[0], self.dim, self.dim))
        m = self._inside(X)
        if np.any(m):
            Y = X[m]
            lam = self.bump.value(Y)
            J[m] = lam[:, None, None] * self.f.jacobian(Y) + np.einsum("ni,nj->nij", self.f.value(Y), self.bump.gradient(Y))
        return J[0] if single else J

    def bounds(self, radius, alpha):
        return self.lip_g, self.hol_g

    def axis_flags(self, du):
        return self.f.axis_flags(du)


class GlobalizedMap(MapBundle):
    """S = L + lambda_delta f, defined on all of E.

    Attributes mirror the certificate: C1, C2 (bump growth factors), the
    local constants used, lip_g / hol_g (certified constants of the
    globalised nonlinear part), lip_S, lip_Sinv and ns (nonlinear size).
    """

    def __init__(self, local, bump, alpha, reg):
        prof = bump.profile
        self.local = local
        self.bump = bump
        self.alpha = alpha
        self.C1 = prof.C1()
        self.C2 = prof.C2(alpha)
        self.reg_local = reg
        self.hol_g = self.C2 * reg.hol
        self.lip_g = min(self.C1 * reg.lip, bump.delta ** alpha * self.hol_g)
        form = GlobalizedForm(local.f, bump, self.lip_g, self.hol_g)
        super().__init__(local.L, form, np.inf, f"globalized({local.name})", True, local.dim_u, check=False)
        self.delta = bump.delta
        self.lip_global = self.lip_g
        self.lip_S = self.L.norm + self.lip_g
        self.lip_Sinv = 1.0 / (self.L.min_norm - self.lip_g)
        self.ns = 0.0 if self.lip_g == 0.0 else bump.delta
        self.verified = None

    @property
    def base(self):
        return self

    def bundle(self):
        return RegularityBundle(self.alpha, self.lip_g, self.hol_g, np.inf, self.reg_local.is_empirical, self.lip_S)


def globalize(T, bump, alpha=0.5, reg=None, verify=True, n_verify=1024, seed=0):
    """Globalise T with the scaled bump; raises InvertibilityLost if the
    certified Lip(g) reaches m(L)/2."""
    if bump.profile.dim != T.dim:
        raise ValueError("bump dimension does not match the map")
    delta = bump.delta
    if not T.is_global and delta > T.delta * (1 + 1e-12):
        raise DomainExceeded("bump radius exceeds map domain", delta=delta, domain=T.delta)
    if reg is None:
        reg = regularity_at(T, alpha, delta)
    S = GlobalizedMap(T, bump, alpha, reg)
    if S.lip_g >= 0.5 * T.L.min_norm:
        raise InvertibilityLost("Lip(g) >= 1/(2|L^-1|)", lip_g=S.lip_g, bound=0.5 * T.L.min_norm)
    if verify:
        est = estimate_holder(S, alpha, SamplePlan(n_verify, n_verify, seed, 1.25 * delta))
        S.verified = bool(est.lip <= S.lip_g * (1 + 1e-9) + 1e-300 and est.hol <= S.hol_g * (1 + 1e-9) + 1e-300)
        S.empirical = est
    return S


def support_radius(delta, lip_s, lip_sinv, n):
    """delta_n = delta max(1, Lip(S)^n, Lip(S^{-1})^n)."""
    if n == 0:
        return delta
    return delta * max(1.0, lip_s ** n, lip_sinv ** n)


def support_growth(S, n):
    return support_radius(S.delta, S.lip_S, S.lip_Sinv, n)


def power_bundle(S, n):
    """Certified bundle of the nonlinear part of S^n."""
    return bound_power(S.bundle(), S.L, n, max(1.0, S.lip_S))


def axis_derivative_bounds(S, n, alpha):
    """Callables bounding |X_{n,x}|, |Y_{n,x}| by Hol(Df_n) min(delta_n^a, |y|^a)
    and the y-partials by Hol(Df_n) min(delta_n^a, |x|^a)."""
    flags = S.axis_flags()
    if flags is None or not flags[1]:
        raise NotHLinear("axis bounds need an h-linear globalized map")
    du = S.dim_u
    hol_n = power_bundle(S, n).hol
    dn = support_growth(S, n)

    def bound_x(z):
        Z = np.atleast_2d(z)
        return hol_n * np.minimum(dn ** alpha, vnorm(Z[:, du:]) ** alpha)

    def bound_y(z):
        Z = np.atleast_2d(z)
        return hol_n * np.minimum(dn ** alpha, vnorm(Z[:, :du]) ** alpha)

    return bound_x, bound_y
