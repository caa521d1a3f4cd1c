"""Average treatment effect designs under a sample budget.

``recursive_balance`` splits the population with the Gram-Schmidt walk, keeps
the smaller side and splits again until the set being split has at most ``s``
units. Only that last split is measured, with the Horvitz-Thompson weights
scaled by 2^k for k splits.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePartition
from .gsw import Assignment, GswParams, gsw_assign, ht_estimate
from .linalg import as_array

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RecursiveDesign:
    chain: tuple  # ((units partitioned, Assignment over those units), ...)
    final_plus: np.ndarray
    final_minus: np.ndarray
    delta_prime: float
    retries: int = 0

    @property
    def depth_k(self) -> int:
        return len(self.chain)

    @property
    def scale(self) -> int:
        return 2**self.depth_k

    @property
    def sizes(self) -> list[int]:
        return [len(units) for units, _ in self.chain]


@dataclass(frozen=True)
class AteEstimate:
    tau_hat: float
    method: str
    realized_sample_size: int
    depth: int | None = None


def confidence_parameter(n, s) -> float:
    """ln(16 ln(n/s)); NaN when s >= n or the inner log is too small to be defined."""
    if s >= n:
        return math.nan
    inner = 16.0 * math.log(n / s)
    return math.log(inner) if inner > 0 else math.nan


def recursive_balance(X, s, params: GswParams | None = None, rng=None) -> RecursiveDesign:
    """Build the chain of nested walk partitions. No outcome is read here."""
    params = params or GswParams()
    rng = np.random.default_rng() if rng is None else rng
    A = as_array(X)
    n = A.shape[0]
    if s < 1:
        raise ValueError(f"budget s must be at least 1, got {s}")
    units = np.arange(n)
    chain = []
    retries = 0
    while True:
        for attempt in range(params.max_retries + 1):
            a = gsw_assign(A[units], params, rng)
            plus, minus = units[a.s_plus], units[a.s_minus]
            if len(units) <= s:
                break
            # ties recurse on the minus side
            smaller = minus if len(plus) >= len(minus) else plus
            if len(smaller) > 0:
                break
            retries += 1
            log.warning("walk put all %d units on one side; retry %d", len(units), attempt + 1)
        else:
            raise DegeneratePartition(
                f"walk left one side empty on {len(units)} units after {params.max_retries} retries"
            )
        chain.append((units, a))
        if len(units) <= s:
            break
        units = smaller
    return RecursiveDesign(
        chain=tuple(chain),
        final_plus=plus,
        final_minus=minus,
        delta_prime=confidence_parameter(n, s),
        retries=retries,
    )


def recursive_estimate(design: RecursiveDesign, oracle, n=None) -> AteEstimate:
    """Scaled Horvitz-Thompson estimate on the last partition of the chain."""
    n = oracle.n if n is None else n
    treated = oracle.read(1, design.final_plus)
    control = oracle.read(0, design.final_minus)
    tau = design.scale / n * (treated.sum() - control.sum())
    return AteEstimate(
        tau_hat=float(tau),
        method="Recursive-GSW",
        realized_sample_size=oracle.revealed_count(),
        depth=design.depth_k,
    )


def recursive_gsw_ate(X, s, params, oracle, rng) -> AteEstimate:
    return recursive_estimate(recursive_balance(X, s, params, rng), oracle)


def uniform_ate(s, oracle, rng, n=None) -> AteEstimate:
    """Measure a uniform size-s subset, each unit treated by a fair coin.

    The estimate (2/s)(sum_T y1 - sum_C y0) inverts the s/n * 1/2 inclusion
    probability of each arm.
    """
    n = oracle.n if n is None else n
    if not 1 <= s <= n:
        raise ValueError(f"budget must lie in [1, {n}], got {s}")
    sample = rng.choice(n, size=s, replace=False)
    coins = rng.random(s) < 0.5
    treated = oracle.read(1, sample[coins])
    control = oracle.read(0, sample[~coins])
    tau = 2.0 / s * (treated.sum() - control.sum())
    return AteEstimate(tau_hat=float(tau), method="Uniform", realized_sample_size=oracle.revealed_count())


def complete_randomization_ate(oracle, rng, n=None) -> AteEstimate:
    n = oracle.n if n is None else n
    z = np.where(rng.random(n) < 0.5, 1, -1)
    tau = ht_estimate(Assignment(z), oracle, n)
    return AteEstimate(
        tau_hat=float(tau), method="Complete-randomization", realized_sample_size=oracle.revealed_count()
    )


def gsw_pop_ate(X, params, oracle, rng) -> AteEstimate:
    a = gsw_assign(X, params, rng)
    tau = ht_estimate(a, oracle, a.n)
    return AteEstimate(tau_hat=float(tau), method="GSW-pop", realized_sample_size=oracle.revealed_count(), depth=1)
