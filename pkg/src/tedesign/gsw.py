"""Gram-Schmidt walk design and the Horvitz-Thompson estimator.

Each unit j gets the augmented vector b_j = (sqrt(phi) e_j ; sqrt(1-phi) x_j / xi),
with xi the largest covariate row norm. The walk starts at z = 0 and moves
along directions whose augmented image is orthogonal to the alive units other
than the pivot, freezing at least one coordinate at +-1 per step. The random
step sign is chosen so that z stays a martingale, which gives every unit a
marginal probability of 1/2 for each arm.

The step direction solves

    min_v || b_p + sum_{j in A} v_j b_j ||,   A = alive units except the pivot p,

whose normal equations (phi I + c X_A X_A') v = -c X_A x_p, c = (1-phi)/xi^2,
reduce to v = -c X_A (phi I_d + c X_A' X_A)^{-1} x_p. Rows are divided by xi
up front, so c = 1 - phi inside the walk. Only a d x d system is
solved per step, and the d x d Gram matrix is downdated as units freeze.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DimensionMismatch, ZeroCovariates
from .linalg import as_array

FREEZE_TOL = 1e-12


@dataclass(frozen=True)
class GswParams:
    phi: float = 0.5
    max_retries: int = 8

    def __post_init__(self):
        if not 0.0 < self.phi <= 1.0:
            raise ValueError(f"phi must lie in (0, 1], got {self.phi}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


@dataclass(frozen=True)
class Assignment:
    z: np.ndarray
    iterations: int = 0

    def __post_init__(self):
        z = np.asarray(self.z)
        if z.ndim != 1 or not np.all(np.abs(z) == 1):
            raise ValueError("assignment entries must be +1 or -1")
        z = z.astype(np.int8)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return len(self.z)

    @property
    def s_plus(self) -> np.ndarray:
        return np.flatnonzero(self.z > 0)

    @property
    def s_minus(self) -> np.ndarray:
        return np.flatnonzero(self.z < 0)


def _scale(A, phi):
    """Return (X / xi, 1 - phi): the walk only ever sees covariates scaled by xi."""
    top = float(np.abs(A).max()) if A.size else 0.0
    if top == 0.0:
        if phi < 1.0:
            raise ZeroCovariates("all covariate rows are zero; use phi=1 for pure randomization")
        return A, 0.0
    # divide by the largest entry first so subnormal rows do not underflow the norm
    B = A / top
    B = B / float(np.linalg.norm(B, axis=1).max())
    return np.ascontiguousarray(B), 1.0 - phi


@njit(cache=True)
def _chol_solve(M, b, L, y):
    """Solve M x = b for symmetric positive definite M, using L and y as scratch."""
    d = M.shape[0]
    for i in range(d):
        for j in range(i + 1):
            acc = M[i, j]
            for q in range(j):
                acc -= L[i, q] * L[j, q]
            if i == j:
                L[i, i] = np.sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
    for i in range(d):
        acc = b[i]
        for q in range(i):
            acc -= L[i, q] * y[q]
        y[i] = acc / L[i, i]
    x = np.empty(d)
    for i in range(d - 1, -1, -1):
        acc = y[i]
        for q in range(i + 1, d):
            acc -= L[q, i] * x[q]
        x[i] = acc / L[i, i]
    return x


@njit(cache=True)
def _walk_kernel(X, phi, c, u_pivot, u_step, tol):
    n, d = X.shape
    # alive units are kept compacted in the first k slots of Xc / zc / ids
    Xc = X.copy()
    zc = np.zeros(n)
    ids = np.arange(n)
    pos = np.arange(n)
    alive = np.ones(n, dtype=np.bool_)
    k = n
    M = phi * np.eye(d) + c * (X.T @ X)
    MA = np.empty((d, d))
    L = np.zeros((d, d))
    y = np.empty(d)
    row = np.empty(d)
    pivot = -1
    n_pivots = 0
    it = 0
    while k > 0:
        if pivot < 0:
            target = int(u_pivot[n_pivots] * k)
            if target >= k:
                target = k - 1
            n_pivots += 1
            seen = 0
            for j in range(n):
                if alive[j]:
                    if seen == target:
                        pivot = j
                        break
                    seen += 1
        xp = X[pivot]
        for a in range(d):
            for b in range(d):
                MA[a, b] = M[a, b] - c * xp[a] * xp[b]
        w = _chol_solve(MA, xp, L, y)
        for q in range(d):
            w[q] *= -c
        u = Xc[:k] @ w
        u[pos[pivot]] = 1.0
        dplus = np.inf
        dminus = np.inf
        tplus = pos[pivot]
        tminus = tplus
        for t in range(k):
            ut = u[t]
            if ut > 0.0:
                a_ = (1.0 - zc[t]) / ut
                b_ = (1.0 + zc[t]) / ut
            elif ut < 0.0:
                a_ = (-1.0 - zc[t]) / ut
                b_ = (zc[t] - 1.0) / ut
            else:
                continue
            if a_ < dplus:
                dplus = a_
                tplus = t
            if b_ < dminus:
                dminus = b_
                tminus = t
        if u_step[it] * (dplus + dminus) < dminus:
            delta = dplus
            tb = tplus
        else:
            delta = -dminus
            tb = tminus
        for t in range(k):
            zc[t] += delta * u[t]
        zc[tb] = 1.0 if zc[tb] > 0.0 else -1.0
        t = 0
        while t < k:
            if abs(zc[t]) >= 1.0 - tol:
                j = ids[t]
                zc[t] = 1.0 if zc[t] > 0.0 else -1.0
                alive[j] = False
                if c != 0.0:
                    for a in range(d):
                        for b in range(d):
                            M[a, b] -= c * Xc[t, a] * Xc[t, b]
                k -= 1
                # swap slot t with the last alive slot k
                jk = ids[k]
                row[:] = Xc[t]
                Xc[t] = Xc[k]
                Xc[k] = row
                zt = zc[t]
                zc[t] = zc[k]
                zc[k] = zt
                ids[t] = jk
                ids[k] = j
                pos[jk] = t
                pos[j] = k
                if j == pivot:
                    pivot = -1
            else:
                t += 1
        it += 1
    z = np.empty(n)
    for t in range(n):
        z[ids[t]] = zc[t]
    return z, it


def _walk_reference(X, phi, c, u_pivot, u_step, tol, trace=None):
    """Plain numpy version of the walk; slow, but every step is inspectable.

    ``trace`` is called after every step with (iteration, z, alive, pivot).
    """
    n, d = X.shape
    z = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    pivot = -1
    n_pivots = 0
    it = 0
    while alive.any():
        if pivot < 0:
            idx = np.flatnonzero(alive)
            target = min(int(u_pivot[n_pivots] * len(idx)), len(idx) - 1)
            pivot = int(idx[target])
            n_pivots += 1
        others = alive.copy()
        others[pivot] = False
        XA = X[others]
        w = np.linalg.solve(phi * np.eye(d) + c * XA.T @ XA, X[pivot])
        u = np.zeros(n)
        u[others] = -c * (XA @ w)
        u[pivot] = 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(alive & (u > 0), (1.0 - z) / u, np.inf)
            up = np.where(alive & (u < 0), (-1.0 - z) / u, up)
            dn = np.where(alive & (u > 0), (1.0 + z) / u, np.inf)
            dn = np.where(alive & (u < 0), (z - 1.0) / u, dn)
        jplus, jminus = int(np.argmin(up)), int(np.argmin(dn))
        dplus, dminus = up[jplus], dn[jminus]
        if u_step[it] * (dplus + dminus) < dminus:
            delta, jb = dplus, jplus
        else:
            delta, jb = -dminus, jminus
        z[alive] += delta * u[alive]
        z[jb] = np.sign(z[jb])
        frozen = alive & (np.abs(z) >= 1.0 - tol)
        z[frozen] = np.sign(z[frozen])
        alive &= ~frozen
        if not alive[pivot]:
            pivot = -1
        it += 1
        if trace is not None:
            trace(it, z.copy(), alive.copy(), pivot)
    return z, it


def gsw_assign(X, params: GswParams | None = None, rng=None, *, reference=False, trace=None) -> Assignment:
    """Draw one +-1 assignment from the Gram-Schmidt walk design."""
    params = params or GswParams()
    rng = np.random.default_rng() if rng is None else rng
    A = np.ascontiguousarray(as_array(X), dtype=float)
    n = A.shape[0]
    if n < 1:
        raise DimensionMismatch("need at least one unit")
    A, c = _scale(A, params.phi)
    u_pivot = rng.random(n)
    u_step = rng.random(n)
    if reference or trace is not None:
        z, it = _walk_reference(A, params.phi, c, u_pivot, u_step, FREEZE_TOL, trace)
    else:
        z, it = _walk_kernel(A, params.phi, c, u_pivot, u_step, FREEZE_TOL)
    return Assignment(z=z, iterations=int(it))


def imbalance(X, z) -> float:
    """Euclidean norm of X' z, the covariate gap between the two groups."""
    A = as_array(X)
    zz = np.asarray(z.z if isinstance(z, Assignment) else z, dtype=float)
    if zz.shape != (A.shape[0],):
        raise DimensionMismatch(f"assignment has length {zz.shape[0]}, matrix has {A.shape[0]} rows")
    return float(np.linalg.norm(A.T @ zz))


def ht_estimate(z, oracle, n=None) -> float:
    """Horvitz-Thompson estimate (2/n)(sum_{S+} y1 - sum_{S-} y0)."""
    if not isinstance(z, Assignment):
        z = Assignment(z)
    n = z.n if n is None else n
    treated = oracle.read(1, z.s_plus)
    control = oracle.read(0, z.s_minus)
    return 2.0 / n * (treated.sum() - control.sum())
