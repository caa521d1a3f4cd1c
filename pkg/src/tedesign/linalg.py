"""Dense linear algebra used by both designs.

Everything here is desk scale: a thin SVD of an n x d matrix with d in the
tens, computed once per dataset.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptySpectrum, NonFiniteInput

# relative cutoff for numerical rank: sigma_i > max(n, d) * sigma_1 * RANK_RTOL
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class CovariateMatrix:
    """Covariates for n individuals, one row each.

    ``scale`` is the factor the raw rows were divided by when the matrix was
    normalized (1.0 if it never was).
    """

    data: np.ndarray
    normalized: bool = False
    scale: float = 1.0

    def __post_init__(self):
        arr = np.array(self.data, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch(f"covariates must be a non-empty 2-d array, got shape {arr.shape}")
        _check_finite(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.data, axis=1)


@dataclass(frozen=True)
class SVDFactors:
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray
    rank: int

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.T


@dataclass(frozen=True)
class SmoothedMatrix:
    gamma: float
    kept_indices: np.ndarray
    matrix: np.ndarray
    factors: SVDFactors
    # largest singular value that was dropped, 0.0 if none
    residual_norm: float = 0.0

    @property
    def d_prime(self) -> int:
        return len(self.kept_indices)


@dataclass(frozen=True)
class LeverageProfile:
    scores: np.ndarray
    source_rank: int

    @property
    def n(self) -> int:
        return len(self.scores)


def as_array(X) -> np.ndarray:
    """Return the raw float array behind a matrix-like argument."""
    if isinstance(X, CovariateMatrix):
        return X.data
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def _check_finite(arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("input contains NaN or infinite entries")


def numerical_rank(singular_values, shape) -> int:
    if len(singular_values) == 0 or singular_values[0] == 0.0:
        return 0
    tol = max(shape) * singular_values[0] * RANK_RTOL
    return int(np.count_nonzero(singular_values > tol))


def svd(X) -> SVDFactors:
    """Thin SVD with the numerical rank attached.

    All min(n, d) singular values are returned; ``rank`` says how many of them
    count as nonzero.
    """
    A = as_array(X)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionMismatch(f"expected a non-empty matrix, got shape {A.shape}")
    _check_finite(A)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return SVDFactors(U=U, singular_values=s, V=Vt.T, rank=numerical_rank(s, A.shape))


def leverage_scores(X, factors: SVDFactors | None = None) -> LeverageProfile:
    """Leverage of every row, as squared row norms of the rank-r left factor."""
    if factors is None:
        factors = svd(X)
    Ur = factors.U[:, : factors.rank]
    scores = np.einsum("ij,ij->i", Ur, Ur)
    return LeverageProfile(scores=scores, source_rank=factors.rank)


def smoothed_matrix(X, gamma: float, factors: SVDFactors | None = None) -> SmoothedMatrix:
    """Project X onto the singular directions with sigma_i >= sqrt(gamma).

    Ties at exactly sqrt(gamma) are kept. Raises EmptySpectrum when nothing
    survives.
    """
    if gamma < 0 or not np.isfinite(gamma):
        raise ValueError(f"gamma must be a finite non-negative number, got {gamma}")
    A = as_array(X)
    if factors is None:
        factors = svd(A)
    s = factors.singular_values
    if gamma == 0:
        kept = np.arange(len(s))
    else:
        kept = np.flatnonzero(s >= np.sqrt(gamma))
    if len(kept) == 0:
        raise EmptySpectrum(
            f"no singular value reaches sqrt(gamma)={np.sqrt(gamma):.6g}; largest is {s[0]:.6g}"
        )
    U, sv, V = factors.U[:, kept], s[kept], factors.V[:, kept]
    if gamma == 0:
        matrix = A.copy()
    else:
        matrix = (U * sv) @ V.T
    dropped = np.setdiff1d(np.arange(len(s)), kept)
    residual = float(s[dropped].max()) if len(dropped) else 0.0
    sub = SVDFactors(U=U, singular_values=sv, V=V, rank=numerical_rank(sv, A.shape))
    return SmoothedMatrix(
        gamma=float(gamma), kept_indices=kept, matrix=matrix, factors=sub, residual_norm=residual
    )


def min_norm_least_squares(A, b) -> np.ndarray:
    """Minimum-norm minimizer of ||A beta - b||^2 (pseudo-inverse solution)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if b.shape != (A.shape[0],):
        raise DimensionMismatch(f"A has {A.shape[0]} rows but b has shape {b.shape}")
    if A.shape[0] == 0:
        return np.zeros(A.shape[1])
    _check_finite(A)
    _check_finite(b)
    beta, *_ = np.linalg.lstsq(A, b, rcond=None)
    return beta


def ridge_loss(X, y1, y0) -> float:
    """Unit-ridge loss of the mean outcome, scaled by 2/n.

    Uses the identity min_b ||v - X b||^2 + ||b||^2 = v' (I + X X')^{-1} v,
    evaluated through the thin SVD.
    """
    A = as_array(X)
    y1 = np.asarray(y1, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    n = A.shape[0]
    if y1.shape != (n,) or y0.shape != (n,):
        raise DimensionMismatch(f"outcomes must have length {n}")
    v = (y1 + y0) / 2
    f = svd(A)
    proj = f.U.T @ v
    shrink = f.singular_values**2 / (1 + f.singular_values**2)
    value = v @ v - np.sum(shrink * proj**2)
    return max(0.0, 2.0 * float(value) / n)
