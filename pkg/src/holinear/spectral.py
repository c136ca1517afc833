"""Linear-algebra core: spectral radii, condition numbers, adapted norms,
hyperbolic splittings and the alpha-hyperbolicity classifier.

All operator norms are the max-row-sum norm induced by the l-infinity
vector norm.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

from .errors import CutoffNotFound, NonHyperbolic, SingularOperator, SpectralMismatch

HYPERBOLIC_TOL = 1e-9
# block norms within 2% of the spectral floor; tighter scalings blow up the
# basis condition number when eigenvalues cluster
TIGHTEN_SLACK = 1.02
CIRCULAR_TOL = 1e-9
GELFAND_SQUARINGS = 40


def opnorm(M):
    """Max-row-sum norm; 0 for an empty matrix."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.abs(M).sum(axis=-1).max())


def vnorm(v):
    """l-infinity norm along the last axis."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] == 0:
        return np.zeros(v.shape[:-1])
    return np.abs(v).max(axis=-1)


class Operator:
    """Invertible real N x N matrix with its inverse computed once."""

    norm_kind = "linf"

    def __init__(self, entries):
        M = np.array(entries, dtype=float)
        if M.ndim == 1 and M.size == 1:
            M = M.reshape(1, 1)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
            raise SingularOperator("operator must be a non-empty square matrix", shape=list(M.shape))
        if M.shape[0] > 8:
            raise SingularOperator("dimension cap is 8", dim=M.shape[0])
        if not np.all(np.isfinite(M)):
            raise SingularOperator("non-finite entries")
        rows = np.linalg.norm(M, axis=1)
        scale = float(np.prod(rows))
        det = float(np.linalg.det(M)) if scale > 0 else 0.0
        if scale == 0.0 or abs(det) <= 1e-12 * scale:
            raise SingularOperator("matrix is singular", det=det, scale=scale)
        inv = np.linalg.inv(M)
        err = opnorm(inv @ M - np.eye(M.shape[0]))
        if err > 1e-10:
            raise SingularOperator("inverse check failed", residual=err)
        self.entries = M
        self.inverse = inv
        self.entries.setflags(write=False)
        self.inverse.setflags(write=False)
        self.dim = M.shape[0]
        self._cache = {}

    def __repr__(self):
        return f"Operator({self.entries.tolist()})"

    @property
    def T(self):
        return self.entries

    @property
    def norm(self):
        return opnorm(self.entries)

    @property
    def inv_norm(self):
        return opnorm(self.inverse)

    @property
    def min_norm(self):
        """m(L) = 1/|L^{-1}|."""
        return 1.0 / self.inv_norm

    def power(self, n):
        """L^n for any integer n (negative powers use the inverse)."""
        n = int(n)
        key = ("pow", n)
        if key not in self._cache:
            base = self.entries if n >= 0 else self.inverse
            self._cache[key] = np.linalg.matrix_power(base, abs(n))
        return self._cache[key]

    def power_norm(self, n):
        return opnorm(self.power(n))

    def eigenvalues(self):
        if "eig" not in self._cache:
            self._cache["eig"] = np.linalg.eigvals(self.entries)
        return self._cache["eig"]

    def inv(self):
        return Operator(self.inverse)

    def __matmul__(self, other):
        return self.entries @ other


def as_operator(L):
    return L if isinstance(L, Operator) else Operator(L)


def gelfand_trace(L, squarings=GELFAND_SQUARINGS):
    """|L^n|^{1/n} for n = 1, 2, 4, ..., 2^squarings.

    Uses normalised repeated squaring so the powers never overflow.
    """
    L = as_operator(L)
    M = L.entries.copy()
    s = opnorm(M)
    logn = np.log(s)
    M = M / s
    out = [float(np.exp(logn))]
    n = 1
    for _ in range(squarings):
        M = M @ M
        n *= 2
        s = opnorm(M)
        logn = 2.0 * logn + np.log(s)
        M = M / s
        out.append(float(np.exp(logn / n)))
    return out


def _check_radius(rho_eig, trace, which):
    rho_gel = min(trace)
    if abs(rho_gel - rho_eig) > 5e-3 * rho_eig:
        raise SpectralMismatch(
            f"eigenvalue and Gelfand estimates of {which} disagree",
            rho_eigen=rho_eig, rho_gelfand=rho_gel,
        )


def spectral_radius(L):
    """rho(L) from eigenvalue moduli, cross-checked with Gelfand's formula."""
    L = as_operator(L)
    rho = float(np.abs(L.eigenvalues()).max())
    _check_radius(rho, gelfand_trace(L), "L")
    return rho


def condition_number(L):
    """c(L) = rho(L) rho(L^{-1})."""
    L = as_operator(L)
    return spectral_radius(L) * spectral_radius(L.inverse)


@dataclass(frozen=True)
class SpectralInfo:
    rho: float
    rho_inv: float
    cond: float
    min_norm: float
    gelfand_trace: list


def spectral_info(L):
    L = as_operator(L)
    trace = gelfand_trace(L)
    rho = float(np.abs(L.eigenvalues()).max())
    _check_radius(rho, trace, "L")
    rho_inv = spectral_radius(L.inverse)
    return SpectralInfo(rho, rho_inv, rho * rho_inv, L.min_norm, trace)


# ---------------------------------------------------------------------------
# adapted norm (sup construction)


@dataclass(frozen=True)
class AdaptedNorm:
    """|v|_1 = max_{0<=n<q} rho1^{-n}|L^n v|.

    The maximum over n < q equals the sup over all n >= 0 because
    |L^n| < rho1^n for n >= q; that single inequality at n = q is also
    what makes the induced norm of L at most rho1.
    """

    rho1: float
    q: int
    K: float
    powers: np.ndarray = field(repr=False)  # (q + 21, N, N), scaled by rho1^{-n}
    eps: float = 0.0

    @property
    def stacked(self):
        return self.powers[: self.q].reshape(-1, self.powers.shape[-1])

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        w = np.einsum("nij,...j->...ni", self.powers[: self.q], v)
        return np.abs(w).max(axis=(-1, -2))

    def operator_norm(self, M):
        """Exact induced norm of M, one LP per row of the stacked matrix."""
        S = self.stacked
        SM = S @ np.asarray(M, dtype=float)
        A_ub = np.vstack([S, -S])
        b_ub = np.ones(A_ub.shape[0])
        best = 0.0
        for row in SM:
            if not np.any(row):
                continue
            res = linprog(-row, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * S.shape[1], method="highs")
            if res.status != 0:
                raise CutoffNotFound("LP for induced adapted norm failed", status=int(res.status))
            best = max(best, -res.fun)
        return best


def adapted_norm(L, eps, n_max=200, window=20):
    if eps <= 0:
        raise ValueError("eps must be positive")
    L = as_operator(L)
    rho1 = spectral_radius(L) + eps
    P = L.entries / rho1
    N = L.dim
    scaled = [np.eye(N)]
    for _ in range(n_max + window):
        scaled.append(scaled[-1] @ P)
    norms = np.array([opnorm(m) for m in scaled])
    below = norms < 1.0
    q = None
    for cand in range(1, n_max + 1):
        if below[cand:cand + window + 1].all():
            q = cand
            break
    if q is None:
        raise CutoffNotFound("no cutoff q <= n_max found", rho1=rho1, n_max=n_max)
    K = float(norms[:q].max())
    return AdaptedNorm(rho1=rho1, q=q, K=K, powers=np.array(scaled[: q + window + 1]), eps=eps)


# ---------------------------------------------------------------------------
# splittings


@dataclass(frozen=True, eq=False)
class Splitting:
    """In coordinates u = cobasis @ x, L acts as diag(A, B).

    ``basis`` is N x k (k = dim_u + dim_s; k < N for leading splittings)
    and ``cobasis`` its k x N left inverse along the complementary
    invariant subspace.
    """

    basis: np.ndarray
    cobasis: np.ndarray
    A: object
    B: object
    dim_u: int
    dim_s: int
    offdiag_residual: float = 0.0

    @property
    def block(self):
        k = self.dim_u + self.dim_s
        M = np.zeros((k, k))
        if self.dim_u:
            M[: self.dim_u, : self.dim_u] = self.A.entries
        if self.dim_s:
            M[self.dim_u:, self.dim_u:] = self.B.entries
        return M


def _components(M):
    N = M.shape[0]
    adj = (M != 0) | (M.T != 0)
    seen = [-1] * N
    comps = []
    for i in range(N):
        if seen[i] >= 0:
            continue
        stack, comp = [i], []
        seen[i] = len(comps)
        while stack:
            j = stack.pop()
            comp.append(j)
            for k in np.nonzero(adj[j])[0]:
                if seen[k] < 0:
                    seen[k] = len(comps)
                    stack.append(k)
        comps.append(sorted(comp))
    return comps


def _decouple(M, select):
    """Similarity Q with Q^{-1} M Q = diag(T11, T22); T11 carries the
    eigenvalues for which select(lambda) is true."""
    N = M.shape[0]
    comps = _components(M)
    groups = []
    for comp in comps:
        ev = np.linalg.eigvals(M[np.ix_(comp, comp)])
        flags = {bool(select(z)) for z in ev}
        if len(flags) != 1:
            groups = None
            break
        groups.append((flags.pop(), comp))
    if groups is not None:
        first = sorted(i for g, c in groups if g for i in c)
        second = sorted(i for g, c in groups if not g for i in c)
        order = first + second
        Q = np.eye(N)[:, order]
        k = len(first)
        return Q, Q.T, M[np.ix_(first, first)], M[np.ix_(second, second)], k

    T, Z, k = sla.schur(M, output="real", sort=lambda re, im: bool(select(complex(re, im))))
    T11, T12, T22 = T[:k, :k], T[:k, k:], T[k:, k:]
    S = np.eye(N)
    if 0 < k < N:
        X = sla.solve_sylvester(T11, -T22, -T12)
        S[:k, k:] = X
    Q = Z @ S
    Sinv = np.eye(N)
    Sinv[:k, k:] = -S[:k, k:]
    Qinv = Sinv @ Z.T
    return Q, Qinv, T11, T22, k


def _tighten(M):
    """Similarity making |M|_inf and |M^{-1}|_inf close to their spectral
    floors.  Returns (D, Dinv, M') with M' = Dinv M D.

    Real Schur form, 2x2 blocks balanced so the off-diagonal pair has
    equal modulus, then a geometric diagonal scaling that shrinks the
    strictly upper part.
    """
    n = M.shape[0]
    if n == 1:
        return np.eye(1), np.eye(1), M.copy()
    rho, rho_inv = np.abs(np.linalg.eigvals(M)).max(), 1.0 / np.abs(np.linalg.eigvals(M)).min()
    Minv = np.linalg.inv(M)
    if opnorm(M) <= rho * (1 + 1e-12) and opnorm(Minv) <= rho_inv * (1 + 1e-12):
        return np.eye(n), np.eye(n), M.copy()
    T, Z = sla.schur(M, output="real")
    # block structure
    blocks, i = [], 0
    while i < n:
        if i + 1 < n and T[i + 1, i] != 0.0:
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1
    bal = np.ones(n)
    for start, size in blocks:
        if size == 2:
            b, c = T[start, start + 1], T[start + 1, start]
            bal[start + 1] = np.sqrt(abs(c) / abs(b))

    def floor(X):
        return max(opnorm(X[s:s + z, s:s + z]) for s, z in blocks)

    best = None
    for t in [1.0] + [10.0 ** -k for k in range(1, 9)]:
        d = bal.copy()
        for j, (start, size) in enumerate(blocks):
            d[start:start + size] *= t ** j
        D = Z * d
        Dinv = (Z.T) / d[:, None]
        Mt = Dinv @ M @ D
        Mti = np.linalg.inv(Mt)
        score = (opnorm(Mt), opnorm(Mti))
        best = (D, Dinv, Mt)
        if score[0] <= floor(Mt) * TIGHTEN_SLACK + 1e-15 and score[1] <= floor(Mti) * TIGHTEN_SLACK + 1e-15:
            break
    return best


def _modulus(z):
    return abs(z)


def split(L, tighten=True):
    """Real block diagonalisation L ~ diag(A, B), A expanding, B contracting."""
    L = as_operator(L)
    ev = L.eigenvalues()
    mod = np.abs(ev)
    if np.any(np.abs(mod - 1.0) <= HYPERBOLIC_TOL):
        raise NonHyperbolic("eigenvalue on the unit circle", moduli=sorted(mod.tolist()))
    Q, Qinv, T11, T22, k = _decouple(L.entries, lambda z: _modulus(z) > 1.0)
    N = L.dim
    if tighten:
        blocks_D, blocks_Di, new = [], [], []
        for T in (T11, T22):
            if T.shape[0]:
                D, Di, Tt = _tighten(T)
            else:
                D = Di = Tt = np.zeros((0, 0))
            blocks_D.append(D)
            blocks_Di.append(Di)
            new.append(Tt)
        D = sla.block_diag(*[b for b in blocks_D if b.size] or [np.zeros((0, 0))])
        Di = sla.block_diag(*[b for b in blocks_Di if b.size] or [np.zeros((0, 0))])
        Q = Q @ D
        Qinv = Di @ Qinv
    M = Qinv @ L.entries @ Q
    resid = opnorm(M - sla.block_diag(M[:k, :k], M[k:, k:])) / max(L.norm, 1.0)
    A = Operator(M[:k, :k]) if k else None
    B = Operator(M[k:, k:]) if k < N else None
    return Splitting(Q, Qinv, A, B, k, N - k, resid)


def leading_splitting(L):
    """Restriction of L to the eigenvalues of modulus closest to 1 on
    each side, split into its expanding and contracting blocks."""
    L = as_operator(L)
    ev = L.eigenvalues()
    mod = np.abs(ev)
    if np.any(np.abs(mod - 1.0) <= HYPERBOLIC_TOL):
        raise NonHyperbolic("eigenvalue on the unit circle", moduli=sorted(mod.tolist()))
    up, down = mod[mod > 1], mod[mod < 1]
    if up.size == 0 or down.size == 0:
        raise NonHyperbolic("leading splitting needs a saddle", moduli=sorted(mod.tolist()))
    lo, hi = up.min(), down.max()

    def sel(z):
        r = abs(z)
        return abs(r - lo) <= 1e-9 * lo or abs(r - hi) <= 1e-9 * hi

    Q, Qinv, T11, _, k = _decouple(L.entries, sel)
    inner = split(Operator(T11))
    basis = Q[:, :k] @ inner.basis
    cobasis = inner.cobasis @ Qinv[:k, :]
    return Splitting(basis, cobasis, inner.A, inner.B, inner.dim_u, inner.dim_s, inner.offdiag_residual)


# ---------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class HyperbolicityReport:
    cls: str
    c_h: float
    rho_h: float
    alpha: float
    alpha_hyperbolic: bool
    alpha_star: object  # float or None
    admissible_alpha: object  # (lo, hi) or None
    is_circular_A: bool
    is_circular_B: bool
    is_bicircular: bool
    eigenvalues: tuple
    resonances: tuple = ()
    leading: object = None

    @property
    def resonant(self):
        return len(self.resonances) > 0

    def to_dict(self):
        d = {
            "class": self.cls,
            "c_h": self.c_h,
            "rho_h": self.rho_h,
            "alpha": self.alpha,
            "alpha_hyperbolic": self.alpha_hyperbolic,
            "alpha_star": self.alpha_star,
            "admissible_alpha": None if self.admissible_alpha is None else list(self.admissible_alpha),
            "is_circular_A": self.is_circular_A,
            "is_circular_B": self.is_circular_B,
            "is_bicircular": self.is_bicircular,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "resonant": self.resonant,
            "resonances": [list(r) for r in self.resonances],
        }
        d["leading"] = None if self.leading is None else self.leading.to_dict()
        return d


def _circular(op):
    if op is None:
        return False
    m = np.abs(op.eigenvalues())
    return bool(m.max() / m.min() < 1 + CIRCULAR_TOL)


def resonances(ev, tol=1e-9):
    """Second-order relations lambda_i = lambda_j * lambda_k (j <= k)."""
    ev = np.asarray(ev)
    out = []
    n = len(ev)
    for i in range(n):
        for j in range(n):
            for k in range(j, n):
                if i in (j, k) and abs(ev[i]) == 1.0:
                    continue
                prod = ev[j] * ev[k]
                if abs(ev[i] - prod) <= tol * max(abs(ev[i]), 1e-300):
                    out.append((i, j, k))
    return tuple(out)


def _alpha_data(c_h, rho_h):
    if c_h <= 1 + CIRCULAR_TOL:
        return None, (0.0, 1.0)
    a = float(np.log(c_h) / (-np.log(rho_h)))
    if a >= 1.0:
        return None, None
    return a, (a, 1.0)


def _report_from_blocks(A, B, alpha, ev, cls):
    if cls == "saddle":
        cA, cB = condition_number(A), condition_number(B)
        c_h = max(cA, cB)
        rho_h = max(spectral_radius(A.inverse), spectral_radius(B))
    elif cls == "contracting":
        c_h = condition_number(B)
        rho_h = spectral_radius(B)
    else:
        c_h = condition_number(A)
        rho_h = spectral_radius(A.inverse)
    if c_h < 1.0:
        c_h = 1.0
    star, adm = _alpha_data(c_h, rho_h)
    circA, circB = _circular(A), _circular(B)
    return HyperbolicityReport(
        cls=cls, c_h=float(c_h), rho_h=float(rho_h), alpha=float(alpha),
        alpha_hyperbolic=bool(c_h * rho_h ** alpha < 1.0),
        alpha_star=star, admissible_alpha=adm,
        is_circular_A=circA, is_circular_B=circB,
        is_bicircular=bool(cls == "saddle" and circA and circB),
        eigenvalues=tuple(complex(z) for z in ev),
    )


def classify(L, alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    L = as_operator(L)
    ev = L.eigenvalues()
    mod = np.abs(ev)
    if np.any(np.abs(mod - 1.0) <= HYPERBOLIC_TOL):
        raise NonHyperbolic("eigenvalue modulus within 1e-9 of 1", moduli=sorted(mod.tolist()))
    sp = split(L)
    if sp.dim_u == 0:
        cls = "contracting"
    elif sp.dim_s == 0:
        cls = "expanding"
    else:
        cls = "saddle"
    rep = _report_from_blocks(sp.A, sp.B, alpha, ev, cls)
    res = resonances(ev)
    leading = None
    if cls == "saddle" and not rep.alpha_hyperbolic:
        lsp = leading_splitting(L)
        leading = _report_from_blocks(lsp.A, lsp.B, alpha, np.concatenate(
            [lsp.A.eigenvalues(), lsp.B.eigenvalues()]), "saddle")
    return HyperbolicityReport(**{**rep.__dict__, "resonances": res, "leading": leading})
