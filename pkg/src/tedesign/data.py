"""Synthetic instances, row normalization and CSV persistence."""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ParseError, ZeroMatrix
from .linalg import CovariateMatrix, as_array

FLOAT_FMT = "{:.17g}"
OUTCOME_HEADER = ["y1", "y0"]


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 2000
    d: int = 25
    sigma: float | None = None  # noise standard deviation, defaults to 1/sqrt(d)
    cov_scale: float = 2.0
    decay: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got n={self.n}, d={self.d}")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")

    @property
    def noise_sd(self) -> float:
        return 1.0 / math.sqrt(self.d) if self.sigma is None else float(self.sigma)


@dataclass(frozen=True)
class PotentialOutcomes:
    y1: np.ndarray
    y0: np.ndarray
    beta1: np.ndarray | None = None
    beta0: np.ndarray | None = None
    sigma: float | None = None

    def __post_init__(self):
        y1 = np.asarray(self.y1, dtype=float)
        y0 = np.asarray(self.y0, dtype=float)
        if y1.ndim != 1 or y1.shape != y0.shape:
            raise DimensionMismatch(f"y1 and y0 must be equal-length vectors, got {y1.shape}, {y0.shape}")
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y0", y0)

    @property
    def n(self) -> int:
        return len(self.y1)

    @property
    def ite(self) -> np.ndarray:
        return self.y1 - self.y0

    @property
    def ate(self) -> float:
        return float(np.mean(self.y1 - self.y0))


def t_covariance(d, scale=2.0, decay=0.5) -> np.ndarray:
    """Toeplitz covariance with entries scale * decay**|i - j|."""
    idx = np.arange(d)
    return scale * decay ** np.abs(idx[:, None] - idx[None, :])


def row_normalize(X) -> CovariateMatrix:
    """Divide every row by the largest row norm.

    A matrix whose largest row norm is already 1 (within 1e-12) is returned
    unchanged, which makes the operation idempotent bit for bit.
    """
    prior_scale = X.scale if isinstance(X, CovariateMatrix) else 1.0
    A = as_array(X)
    norms = np.linalg.norm(A, axis=1)
    top = float(norms.max()) if len(norms) else 0.0
    if top == 0.0:
        raise ZeroMatrix("cannot normalize a matrix whose rows are all zero")
    if abs(top - 1.0) <= 1e-12:
        return CovariateMatrix(A, normalized=True, scale=prior_scale)
    return CovariateMatrix(A / top, normalized=True, scale=prior_scale * top)


def gen_t_covariates(spec: SyntheticSpec, rng) -> CovariateMatrix:
    """Multivariate t rows with one degree of freedom, then row-normalized."""
    sigma = t_covariance(spec.d, spec.cov_scale, spec.decay)
    chol = np.linalg.cholesky(sigma)
    g = rng.standard_normal((spec.n, spec.d)) @ chol.T
    u = rng.chisquare(1.0, size=spec.n)
    return row_normalize(g / np.sqrt(u)[:, None])


def gen_unit_beta(d, rng) -> np.ndarray:
    beta = rng.uniform(0.0, 1.0, size=d)
    norm = np.linalg.norm(beta)
    while norm == 0.0:  # probability zero, but keep the result a unit vector
        beta = rng.uniform(0.0, 1.0, size=d)
        norm = np.linalg.norm(beta)
    return beta / norm


def gen_outcomes(X, beta1, beta0, sigma, rng) -> PotentialOutcomes:
    A = as_array(X)
    beta1 = np.asarray(beta1, dtype=float)
    beta0 = np.asarray(beta0, dtype=float)
    if beta1.shape != (A.shape[1],) or beta0.shape != (A.shape[1],):
        raise DimensionMismatch(f"coefficients must have length {A.shape[1]}")
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    n = A.shape[0]
    noise1 = rng.normal(0.0, sigma, size=n) if sigma > 0 else np.zeros(n)
    noise0 = rng.normal(0.0, sigma, size=n) if sigma > 0 else np.zeros(n)
    return PotentialOutcomes(
        y1=A @ beta1 + noise1, y0=A @ beta0 + noise0, beta1=beta1, beta0=beta0, sigma=float(sigma)
    )


def make_synthetic(spec: SyntheticSpec) -> tuple[CovariateMatrix, PotentialOutcomes]:
    """Draw covariates, both coefficient vectors and noisy outcomes from ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    X = gen_t_covariates(spec, rng)
    beta1 = gen_unit_beta(spec.d, rng)
    beta0 = gen_unit_beta(spec.d, rng)
    return X, gen_outcomes(X, beta1, beta0, spec.noise_sd, rng)


# --- CSV persistence ---------------------------------------------------------


def _fmt_row(values):
    return ",".join(FLOAT_FMT.format(float(v)) for v in values)


def save_covariates(path, X, header=False):
    A = as_array(X)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header:
            fh.write(",".join(f"x{j + 1}" for j in range(A.shape[1])) + "\n")
        for row in A:
            fh.write(_fmt_row(row) + "\n")


def save_outcomes(path, outcomes: PotentialOutcomes):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(OUTCOME_HEADER) + "\n")
        for a, b in zip(outcomes.y1, outcomes.y0):
            fh.write(_fmt_row((a, b)) + "\n")


def save_dataset(covariate_path, outcome_path, X, outcomes, header=False):
    save_covariates(covariate_path, X, header=header)
    save_outcomes(outcome_path, outcomes)


def _parse_float(text, row, col):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", row=row, column=col) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value: {text!r}", row=row, column=col)
    return value


def _read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]


def load_covariates(path, header=False, normalize=True) -> CovariateMatrix:
    """Read a covariate CSV; rows are normalized on ingest unless told otherwise."""
    rows = _read_rows(path)
    first = 1
    if header:
        rows = rows[1:]
        first = 2
    if not rows:
        raise ParseError(f"{path}: no data rows")
    width = len(rows[0])
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"{path}: expected {width} fields, got {len(row)}", row=i + first)
        for j, cell in enumerate(row):
            data[i, j] = _parse_float(cell.strip(), i + first, j + 1)
    if normalize:
        return row_normalize(data)
    return CovariateMatrix(data)


def load_outcomes(path, shift=None) -> PotentialOutcomes:
    """Read an outcome CSV.

    The file normally has the header ``y1,y0``. With ``shift`` set, a
    single-column control file (header ``y0`` or ``y``) is accepted and the
    treated arm is built as y0 + shift.
    """
    rows = _read_rows(path)
    if not rows:
        raise ParseError(f"{path}: empty outcome file", row=1)
    head = [c.strip() for c in rows[0]]
    body = rows[1:]
    if head == OUTCOME_HEADER:
        ncol = 2
    elif shift is not None and len(head) == 1 and head[0] in ("y0", "y"):
        ncol = 1
    else:
        raise ParseError(f"{path}: outcome header must be 'y1,y0', got {','.join(head)!r}", row=1)
    vals = np.empty((len(body), ncol))
    for i, row in enumerate(body):
        if len(row) != ncol:
            raise ParseError(f"{path}: expected {ncol} fields, got {len(row)}", row=i + 2)
        for j, cell in enumerate(row):
            vals[i, j] = _parse_float(cell.strip(), i + 2, j + 1)
    y0 = vals[:, -1]
    y1 = vals[:, 0] if ncol == 2 else y0
    if shift is not None:
        y1 = y0 + float(shift)
    return PotentialOutcomes(y1=y1, y0=y0)


def load_dataset(covariate_path, outcome_path, header=False, shift=None):
    X = load_covariates(covariate_path, header=header)
    outcomes = load_outcomes(outcome_path, shift=shift)
    if outcomes.n != X.n:
        raise DimensionMismatch(
            f"{Path(covariate_path).name} has {X.n} rows but {Path(outcome_path).name} has {outcomes.n}"
        )
    return X, outcomes
