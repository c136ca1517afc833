"""Conjugacy verification, the C^{1,beta} certificate and the anisotropic
gamma diagnostics of the saddle function spaces."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateSample, HolinearError
from ..regularity import HolderFit, ball_points, fit_holder_exponent, pair_samples
from ..spectral import as_operator, vnorm

BETA_ALLOWANCE = 0.05


@dataclass
class ConjugacyReport:
    residual_sup: float
    residual_samples: int
    beta_planned: object
    beta_hat: object
    plan: object
    converged: bool
    divergence_diagnostic: object = None
    radius: float = 0.0
    max_tail: float = 0.0
    max_terms: int = 0
    samples: dict = field(default_factory=dict, repr=False)
    error: object = field(default=None, repr=False)

    def to_dict(self):
        return {
            "residual_sup": self.residual_sup,
            "residual_samples": self.residual_samples,
            "beta_planned": self.beta_planned,
            "beta_hat": None if self.beta_hat is None else self.beta_hat.to_dict(),
            "converged": self.converged,
            "divergence_diagnostic": self.divergence_diagnostic,
            "radius": self.radius,
            "max_tail": self.max_tail,
            "max_terms": self.max_terms,
        }


def conjugacy_samples(T, radius, n_samples, seed=0):
    """Points of B_r with T(x) in B_r (low-discrepancy, deterministic)."""
    got = []
    total = 0
    k = 0
    while total < n_samples and k < 64:
        X = ball_points(T.dim, 2 * n_samples, radius, seed + 104729 * k)
        keep = vnorm(T.eval(X)) <= radius
        got.append(X[keep])
        total += int(keep.sum())
        k += 1
    X = np.vstack(got)[:n_samples]
    return X


def derivative_pairs(dim, n_pairs, radius, seed=0):
    """Consecutive-pair layout (x0, x0', x1, x1', ...) for exponent fits.

    A third of the pairs sits near the origin at its own scale and a third
    straddles a coordinate hyperplane, the rest is uniform.
    """
    P1, P2 = pair_samples(dim, n_pairs, radius, seed + 17, decades=3.0,
                          local_fraction=1 / 3, axis_fraction=1 / 3)
    out = np.empty((2 * n_pairs, dim))
    out[0::2], out[1::2] = P1, P2
    return out


def verify_conjugacy(R, T, L, plan_radius, n_samples=10_000, seed=0, n_pairs=None, extra_points=None):
    """Residual of L R = R T on B_r and T^{-1}B_r, plus a Hoelder fit of DR."""
    L = as_operator(L)
    X = conjugacy_samples(T, plan_radius, n_samples, seed)
    if extra_points is not None:
        E = np.atleast_2d(extra_points)
        E = E[(vnorm(E) <= plan_radius) & (vnorm(T.eval(E)) <= plan_radius)]
        X = np.vstack([X, E])
    plan = R.plan
    beta_planned = getattr(plan, "beta", None)
    try:
        e = R.evaluate(X)
        TX = T.eval(X)
        RT = R(TX)
    except HolinearError as exc:
        return ConjugacyReport(np.inf, len(X), beta_planned, None, plan, False, exc.to_dict(), plan_radius, error=exc)
    res = vnorm(e.value @ L.entries.T - RT)
    pairs = derivative_pairs(T.dim, n_pairs or max(n_samples // 2, 64), plan_radius, seed)
    try:
        D = R.jacobian(pairs)
        fit = fit_holder_exponent(pairs, D)
    except DegenerateSample:
        D, fit = None, None
    except HolinearError as exc:
        return ConjugacyReport(float(res.max()), len(X), beta_planned, None, plan, False, exc.to_dict(), plan_radius,
                               error=exc)
    return ConjugacyReport(
        residual_sup=float(res.max()) if len(res) else 0.0,
        residual_samples=int(len(X)),
        beta_planned=beta_planned,
        beta_hat=fit,
        plan=plan,
        converged=True,
        radius=float(plan_radius),
        max_tail=float(e.tail.max()) if len(e.tail) else 0.0,
        max_terms=int(e.nterms.max()) if len(e.nterms) else 0,
        samples={"x": X, "Rx": e.value, "residual": res, "pairs": pairs, "DR": D},
    )


def holder_certificate(R, plan, n_samples=10_000, radius=None, seed=0):
    """(beta_planned, fit, passed): fit the exponent of DR on B_delta and
    compare with plan.beta allowing 0.05 (plan.alpha for contraction plans)."""
    r = plan.delta if radius is None else radius
    pairs = derivative_pairs(R.dim, n_samples, r, seed)
    D = R.jacobian(pairs)
    fit = fit_holder_exponent(pairs, D)
    beta = getattr(plan, "beta", None) or plan.alpha
    passed = bool(np.isinf(fit.beta_hat) or fit.beta_hat >= beta - BETA_ALLOWANCE)
    return beta, fit, passed


# ---------------------------------------------------------------------------
# anisotropic norms


@dataclass
class AnisotropicEstimate:
    gamma1: float
    gamma2: float
    gamma3: float
    gamma4: float
    eta_used: float
    n_points: int
    n_pairs: int

    @property
    def norm(self):
        return max(self.gamma1, self.gamma2)

    @property
    def plus_norm(self):
        return max(self.gamma3, self.gamma4)

    def to_dict(self):
        return dict(self.__dict__)


def _mnorm(M):
    return np.abs(M).sum(axis=-1).max(axis=-1)


def anisotropic_norms(dpsi, plan, n_samples, du, radius=None, seed=0, points=None):
    """Empirical gamma_1..gamma_4 of a function through its Jacobian.

    ``dpsi(X)`` returns (n, k, d) Jacobians; the first ``du`` columns are
    the x-partials.  gamma_1 = |psi_x|/|y|^a, gamma_2 = |psi_y|/|x|^a,
    gamma_3, gamma_4 are the mixed Hoelder quotients with weights U, V.
    """
    alpha = plan.alpha
    eta = plan.eta if plan.eta is not None else 0.5
    r = plan.delta if radius is None else radius
    d = None
    X = points
    if X is None:
        from ..regularity import _halton

        d = getattr(dpsi, "dim", None)
        if d is None:
            raise ValueError("pass points= or give dpsi a .dim attribute")
        U = _halton(d, n_samples, seed + 3)
        # half the points log-distributed in each block so both axes are seen
        mag = 10.0 ** (-4.0 * U[:, :1])
        X = r * (2.0 * U - 1.0)
        X[: n_samples // 2, :du] *= mag[: n_samples // 2]
        X[n_samples // 2:, du:] *= mag[n_samples // 2:]
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    J = dpsi(X)
    nx = vnorm(X[:, :du])
    ny = vnorm(X[:, du:])
    gx = _mnorm(J[:, :, :du])
    gy = _mnorm(J[:, :, du:])
    k1 = ny > 0
    k2 = nx > 0
    if not (k1.any() and k2.any()):
        raise DegenerateSample("no samples off the axes")
    g1 = float((gx[k1] / ny[k1] ** alpha).max())
    g2 = float((gy[k2] / nx[k2] ** alpha).max())
    m = len(X) // 2
    P1, P2 = X[0:2 * m:2], X[1:2 * m:2]
    J1, J2 = J[0:2 * m:2], J[1:2 * m:2]
    h = P2 - P1
    dist = vnorm(h)
    keep = dist > 0
    if not keep.any():
        raise DegenerateSample("all pairs coincide")
    Mh = np.minimum(1.0, np.maximum(vnorm(P1[:, :du]), vnorm(h[:, :du])))
    Nk = np.maximum(vnorm(P1[:, du:]), vnorm(h[:, du:]))
    Uw = Mh ** (alpha * eta) * dist ** (alpha * (1 - eta))
    Vw = Nk ** (alpha * eta) * dist ** (alpha * (1 - eta))
    dx = _mnorm(J2[:, :, :du] - J1[:, :, :du])
    dy = _mnorm(J2[:, :, du:] - J1[:, :, du:])
    k3 = keep & (Vw > 0)
    k4 = keep & (Uw > 0)
    g3 = float((dx[k3] / Vw[k3]).max()) if k3.any() else 0.0
    g4 = float((dy[k4] / Uw[k4]).max()) if k4.any() else 0.0
    return AnisotropicEstimate(g1, g2, g3, g4, float(eta), int(len(X)), int(keep.sum()))


def apply_H_s(dpsi, S, A_inv_pow, n):
    """Jacobian evaluator of H_s^n(psi) = A^{-n} psi(S^n .)."""

    def out(X):
        W = np.array(X, dtype=float)
        d = W.shape[1]
        J = np.broadcast_to(np.eye(d), (len(W), d, d)).copy()
        for _ in range(n):
            J = S.jacobian(W) @ J
            W = S.eval(W)
        return A_inv_pow @ dpsi(W) @ J

    out.dim = S.dim
    return out
