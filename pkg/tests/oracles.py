"""Independent reference computations shared by the test modules.

Nothing here calls the series code of the package: only the maps
themselves (T.eval, T.nonlinear) and numpy are used.
"""

import numpy as np
from numpy.polynomial import chebyshev as C

from holinear.maps import MapBundle, PolyMap
from holinear.spectral import classify, opnorm


def cheb_basis(X, radius, deg):
    """Tensor Chebyshev basis (n, (deg+1)^d) on the cube [-radius, radius]^d."""
    X = np.atleast_2d(X) / radius
    out = np.ones((len(X), 1))
    for j in range(X.shape[1]):
        V = C.chebvander(X[:, j], deg)
        out = (out[:, :, None] * V[:, None, :]).reshape(len(X), -1)
    return out


def picard_phi(T, radius, deg, max_iter=5000, tol=1e-15):
    """Fixed point of phi = L^{-1} f + L^{-1} phi(T .) by plain Picard
    iteration on tensor Chebyshev nodes.  Returns phi as a callable."""
    d = T.dim
    nodes = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1)) * radius
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=1)
    V = cheb_basis(X, radius, deg)
    Vinv = np.linalg.inv(V)
    VT = cheb_basis(T.eval(X), radius, deg)
    Linv = np.linalg.inv(np.asarray(T.L.entries))
    b = T.nonlinear(X) @ Linv.T
    # phi = o(|x|): remove the constant and linear modes after every sweep,
    # otherwise they are neutral or unstable directions of the iteration
    low = [0] + [(deg + 1) ** (d - 1 - j) for j in range(d)]
    B0 = cheb_basis(np.zeros((1, d)), radius, deg)[0]
    coef = np.zeros((V.shape[1], d))
    for _ in range(max_iter):
        new = Vinv @ (b + (VT @ coef) @ Linv.T)
        new[0] -= B0 @ new
        new[low[1:]] -= _slopes_at_zero(new, d, deg)
        step = np.abs(new - coef).max()
        coef = new
        if step <= tol * max(1.0, np.abs(coef).max()):
            break
    return lambda Y: cheb_basis(Y, radius, deg) @ coef


def _slopes_at_zero(coef, d, deg):
    """Coefficient corrections on the x_j/radius modes that zero D phi(0)."""
    # d/dt T_k(0) = k * U_{k-1}(0): 0 for even k, (-1)^((k-1)/2) k for odd k
    k = np.arange(deg + 1)
    dT = np.where(k % 2 == 1, k * (-1.0) ** ((k - 1) // 2), 0.0)
    T0 = np.where(k % 2 == 0, (-1.0) ** (k // 2), 0.0)
    c = coef.reshape((deg + 1,) * d + (coef.shape[1],))
    out = np.empty((d, coef.shape[1]))
    for j in range(d):
        vecs = [T0] * d
        vecs[j] = dT
        g = c
        for v in vecs:
            g = np.tensordot(v, g, axes=(0, 0))
        out[j] = g
    return out


def grid_points(dim, radius, n_total=10_000):
    """About n_total points of a regular grid on the cube."""
    k = int(round(n_total ** (1.0 / dim)))
    t = np.linspace(-radius, radius, k)
    grids = np.meshgrid(*([t] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def random_contracting(rng, dim, alpha=0.5):
    """Random polynomial map with an alpha-contracting linear part whose
    sup norm is below 1 (so small cubes are mapped into themselves)."""
    while True:
        mods = rng.uniform(0.5, 0.6, size=dim)
        D = np.diag(mods * rng.choice([-1.0, 1.0], size=dim))
        if dim >= 2 and rng.random() < 0.5:
            th = rng.uniform(0.3, 2.5)
            D[:2, :2] = mods[0] * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        Q = np.eye(dim) + 0.3 * rng.normal(size=(dim, dim))
        L = Q @ D @ np.linalg.inv(Q)
        if opnorm(L) < 0.95 and classify(L, alpha).alpha_hyperbolic:
            break
    terms = []
    for _ in range(4):
        e = rng.multinomial(int(rng.integers(2, 4)), np.ones(dim) / dim)
        terms.append((float(rng.normal() * 0.3), [int(v) for v in e], int(rng.integers(dim))))
    return MapBundle(L, PolyMap(dim, terms), 0.5, f"random{dim}d")


def hartman_closed_form(X, b=3.0, a=4.0, c=0.5, eps=1.0):
    X = np.atleast_2d(X)
    out = X.copy()
    out[:, 1] += b * eps / (b - a * c) * X[:, 0] * X[:, 2]
    return out
