"""Series linearizer for a globalized, h-linear saddle S = L + (X1, Y1),
L = diag(A, B) with A expanding (first dim_u coordinates).

    psi_s(z) =  sum_{n>=0} A^{-(n+1)} X1(S^n z)
    psi_u(z) = -sum_{n>=1} B^{n-1}   Y1(S^{-n} z)

Truncation is exact once the orbit leaves the nonlinear support: outside
B_delta S is linear, so the expanding coordinate (forward) or the
contracting one (backward) keeps growing and every later term is 0.
Points on the invariant axes contribute exactly 0 as well.  Otherwise a
certified geometric tail (ratio tau per m-block) stops the sum.
"""

import numpy as np

from ..errors import NoConvergence, NotHLinear, SeriesDiverged
from ..maps import invert_point
from ..spectral import vnorm
from .contracting import N_MAX, _Windows
from .core import ConjugacyMap, Evaluation

RATIO_ALARM = 0.999


def _plateau(S):
    c = getattr(S, "bump", None)
    if c is None:
        return None
    return S.bump.profile.c * S.bump.delta


def _norm_rows(M):
    return np.abs(M).sum(axis=-1).max(axis=-1)


def _series(S, plan, X, tol_tail, n_max, side):
    """One half of the series.  side 's': forward sum for the first dim_u
    coordinates; side 'u': backward sum for the last dim_s."""
    n, d = X.shape
    du = S.dim_u
    A = S.L.entries[:du, :du]
    B = S.L.entries[du:, du:]
    delta = S.delta
    m = plan.m
    alpha = plan.alpha
    plateau = _plateau(S)
    if side == "s":
        rows, grow = slice(0, du), slice(0, du)
        step_mat = np.linalg.inv(A)
        P = step_mat.copy()
        k_out = du
        scale = vnorm(X[:, :du]) * vnorm(X[:, du:]) ** alpha
        const = plan.norms["Ainv"] * plan.hol_S
        tau = plan.tau_m
    else:
        rows, grow = slice(du, d), slice(du, d)
        step_mat = B
        P = np.eye(d - du)
        k_out = d - du
        scale = vnorm(X[:, du:]) * vnorm(X[:, :du]) ** alpha
        const = plan.norms["Binv"] * plan.hol_g
        tau = plan.tau_u
    certified = plan.certified and tau < 1.0
    if certified:
        const *= max(1.0, plan.tau1) ** (m - 1) / (1.0 - tau)
    psi = np.zeros((n, k_out))
    dpsi = np.zeros((n, k_out, d))
    tail = np.zeros(n)
    nterms = np.zeros(n, dtype=int)
    active = scale > 0
    W = X.copy()
    J = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    if side == "u":
        W, J = _back_step(S, W, J, tol_tail)
        active &= vnorm(W[:, grow]) < delta
    win = _Windows(n, m, RATIO_ALARM)
    partial = [[] for _ in range(n)]
    for k in range(n_max):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        Wi, Ji = W[idx], J[idx]
        F = S.nonlinear(Wi)[:, rows]
        DF = S.nonlinear_jacobian(Wi)[:, rows, :]
        term = F @ P.T
        dterm = P @ DF @ Ji
        psi[idx] += term
        dpsi[idx] += dterm
        nterms[idx] = k + 1
        ok = np.ones(idx.size, dtype=bool) if plateau is None else vnorm(Wi) <= plateau
        win.add(idx, vnorm(term) + _norm_rows(dterm), ok)
        for j, i in enumerate(idx[:4]):
            partial[i].append(float(vnorm(psi[i][None])[0]))
        if (k + 1) % m == 0:
            bad = win.close(idx)
            if bad.size:
                i = int(bad[0])
                raise SeriesDiverged(
                    "series terms stopped decaying over consecutive m-windows",
                    side=side, point=X[i].tolist(), term_ratio=float(win.max_ratio[i]),
                    ratios=win.ratios[i][-12:], terms=k + 1, partial_sums=partial[i][-12:] if partial[i] else [],
                )
        if side == "s":
            J[idx] = S.jacobian(Wi) @ Ji
            W[idx] = S.eval(Wi)
        else:
            W[idx], J[idx] = _back_step(S, Wi, Ji, tol_tail)
        P = step_mat @ P
        left = vnorm(W[idx][:, grow]) >= delta
        axis = np.all(W[idx][:, rows] == 0.0, axis=1)
        done = left | axis
        if certified:
            bound = const * tau ** ((k + 1) // m)
            tail[idx] = np.where(done, 0.0, scale[idx] * bound)
            done |= bound <= tol_tail
        active[idx[done]] = False
    else:
        if active.any():
            raise NoConvergence("saddle series hit the term cap", n_max=n_max, side=side)
    if side == "u":
        psi, dpsi = -psi, -dpsi
    return psi, dpsi, tail, nterms


def _back_step(S, W, J, tol_tail):
    V = invert_point(S, W, tol=0.0, rtol=max(tol_tail / 10.0, 1e-14))
    return V, np.linalg.solve(S.jacobian(V), J)


def saddle_series(S, plan, X, tol_tail=1e-10, n_max=N_MAX):
    n, d = X.shape
    du = S.dim_u
    ps, dps, ts, ns = _series(S, plan, X, tol_tail, n_max, "s")
    if getattr(S, "_y1_zero", False):
        pu, dpu, tu, nu = np.zeros((n, d - du)), np.zeros((n, d - du, d)), np.zeros(n), np.zeros(n, dtype=int)
    else:
        pu, dpu, tu, nu = _series(S, plan, X, tol_tail, n_max, "u")
    phi = np.hstack([ps, pu])
    jac = np.eye(d) + np.concatenate([dps, dpu], axis=1)
    return Evaluation(X + phi, jac, ts + tu, np.maximum(ns, nu), phi)


def _y1_vanishes(S):
    """True when the contracting block of the nonlinear part is identically 0
    (read off the monomials of a polynomial local map)."""
    f = getattr(S.f, "f", None)
    coords = getattr(f, "coords", None)
    if coords is None:
        return False
    return not np.any(coords >= S.dim_u)


def linearize_saddle(S, plan, tol_tail=1e-10, n_max=N_MAX):
    """Global conjugacy R = I + (psi_s, psi_u) with R S = L R.

    ``tol_tail`` bounds each truncated tail relative to the point's scale
    |x||y|^alpha (|y||x|^alpha for psi_u), so also absolutely on B_1.
    """
    if S.dim_u is None or S.dim_u in (0, S.dim):
        raise NotHLinear("saddle series needs a (u, s) block split")
    flags = S.axis_flags()
    if flags is not None and not flags[1]:
        raise NotHLinear("globalized map is not h-linear")
    S._y1_zero = _y1_vanishes(S)

    def ev(X):
        return saddle_series(S, plan, X, tol_tail, n_max)

    return ConjugacyMap("saddle_series", S.dim, ev, radius=np.inf, tol_tail=tol_tail, source=S, plan=plan)
