"""Leverage-score sampling design for individual treatment effects.

Two independent Bernoulli passes pick a control set and a treatment set from
the rows of a spectrally smoothed covariate matrix; units drawn twice are
dropped from the treatment set. Each arm is then fit by reweighted least
squares and the ITE estimate is the difference of the two fitted vectors.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptySpectrum, InvalidDimension, ZeroLeverage
from .linalg import (
    LeverageProfile,
    as_array,
    leverage_scores,
    min_norm_least_squares,
    smoothed_matrix,
    svd,
)

log = logging.getLogger(__name__)

PI_CAP = 0.5


@dataclass(frozen=True)
class SamplingPlan:
    pi: np.ndarray
    mode: str
    epsilon: float | None = None
    gamma: float | None = None
    c0: float | None = None
    target_s: float | None = None
    saturated: bool = False

    @property
    def n(self) -> int:
        return len(self.pi)

    @property
    def expected_total(self) -> float:
        """Expected |S0| + |S1| after overlap removal."""
        return float(np.sum(self.pi + self.pi * (1.0 - self.pi)))


@dataclass(frozen=True)
class SampleSets:
    s0: np.ndarray
    s1: np.ndarray
    w0: np.ndarray
    w1: np.ndarray

    @property
    def size(self) -> int:
        return len(self.s0) + len(self.s1)


@dataclass(frozen=True)
class IteEstimate:
    ite_hat: np.ndarray
    beta1_hat: np.ndarray
    beta0_hat: np.ndarray
    sets: SampleSets
    plan: SamplingPlan | None = None
    degenerate: bool = False
    gamma_clipped: bool = False
    info: dict = field(default_factory=dict)

    @property
    def realized_sample_size(self) -> int:
        return self.sets.size


def theory_epsilon(d, s, c0=1.0) -> float:
    """Accuracy parameter 120 c0 d ln(d) / s."""
    if d < 2:
        raise InvalidDimension(f"theory settings need d >= 2, got d={d}")
    if s < 1 or c0 <= 0:
        raise ValueError(f"need s >= 1 and c0 > 0, got s={s}, c0={c0}")
    return 120.0 * c0 * d * math.log(d) / s


def theory_gamma(rank_bound, epsilon, c0=1.0) -> float:
    """Smoothing threshold 4 c0 max{ln(rank_bound), 30/epsilon}."""
    if rank_bound < 2:
        raise InvalidDimension(f"rank bound must be >= 2, got {rank_bound}")
    if epsilon <= 0 or c0 <= 0:
        raise ValueError(f"need epsilon > 0 and c0 > 0, got epsilon={epsilon}, c0={c0}")
    return 4.0 * c0 * max(math.log(rank_bound), 30.0 / epsilon)


def _scores(lev):
    if isinstance(lev, LeverageProfile):
        return lev.scores, lev.source_rank
    scores = np.asarray(lev, dtype=float)
    return scores, int(round(scores.sum()))


def theory_probabilities(lev, epsilon, c0=1.0, gamma=None) -> SamplingPlan:
    scores, rank = _scores(lev)
    if epsilon <= 0 or c0 <= 0:
        raise ValueError(f"need epsilon > 0 and c0 > 0, got epsilon={epsilon}, c0={c0}")
    factor = c0 * (math.log(max(rank, 1)) + 30.0 / epsilon)
    pi = np.minimum(1.0, np.clip(scores, 0.0, None) * factor)
    return SamplingPlan(pi=pi, mode="theory", epsilon=float(epsilon), gamma=gamma, c0=float(c0))


def regression_probabilities(lev, epsilon, delta, c=1.0) -> np.ndarray:
    """Inclusion probabilities min{1, l_j c (ln rank + 1/(delta epsilon))} for one regression."""
    scores, rank = _scores(lev)
    factor = c * (math.log(max(rank, 1)) + 1.0 / (delta * epsilon))
    return np.minimum(1.0, np.clip(scores, 0.0, None) * factor)


def budget_probabilities(lev, s, cap=PI_CAP, tol=1e-6) -> SamplingPlan:
    """Scale leverage to an expected total sample size of ``s``.

    pi_j = min{cap, lam * l_j} with lam chosen by bisection so that
    sum(pi + pi (1 - pi)) hits ``s``. If every positive-leverage unit hits the
    cap first, the capped plan is returned with ``saturated`` set.
    """
    scores, _ = _scores(lev)
    scores = np.clip(scores, 0.0, None)
    n = len(scores)
    if s < 0 or s > n:
        raise ValueError(f"budget must lie in [0, n={n}], got {s}")
    if s == 0:
        return SamplingPlan(pi=np.zeros(n), mode="budget", target_s=0.0)
    if scores.sum() == 0.0:
        raise ZeroLeverage("all leverage scores are zero")

    # bisect on log(lam) so that tiny scores cannot overflow the bracket
    pos = scores > 0
    log_scores = np.full(n, -np.inf)
    log_scores[pos] = np.log(scores[pos])
    log_cap = math.log(cap)

    def probs(t):
        return np.where(log_scores + t >= log_cap, cap, np.exp(np.minimum(log_scores + t, log_cap)))

    def total(t):
        p = probs(t)
        return float(np.sum(2.0 * p - p * p))

    t_hi = log_cap - log_scores[pos].min()
    if total(t_hi) <= s:
        pi = np.where(pos, cap, 0.0)
        return SamplingPlan(pi=pi, mode="budget", target_s=float(s), saturated=True)
    t_lo = log_cap - log_scores[pos].max() + math.log(s / (2.0 * n * cap))
    for _ in range(200):
        mid = 0.5 * (t_lo + t_hi)
        val = total(mid)
        if abs(val - s) <= 0.25 * tol * s:
            t_lo = t_hi = mid
            break
        if val < s:
            t_lo = mid
        else:
            t_hi = mid
    return SamplingPlan(pi=probs(0.5 * (t_lo + t_hi)), mode="budget", target_s=float(s))


def uniform_probabilities(n, s, literal=False) -> SamplingPlan:
    """Uniform plan: pi = s/n verbatim, or matched to the same expected total as budget mode."""
    if literal:
        return SamplingPlan(pi=np.full(n, min(1.0, s / n)), mode="literal", target_s=float(s))
    plan = budget_probabilities(np.ones(n), s)
    return SamplingPlan(pi=plan.pi, mode="uniform", target_s=float(s), saturated=plan.saturated)


def draw_sample_sets(plan: SamplingPlan, rng) -> SampleSets:
    pi = plan.pi
    in0 = rng.random(plan.n) < pi
    in1 = (rng.random(plan.n) < pi) & ~in0
    s0 = np.flatnonzero(in0)
    s1 = np.flatnonzero(in1)
    return SampleSets(
        s0=s0,
        s1=s1,
        w0=1.0 / np.sqrt(pi[s0]),
        w1=1.0 / np.sqrt(pi[s1] * (1.0 - pi[s1])),
    )


def weighted_fit(A, rows, weights, y) -> np.ndarray:
    """Least-squares coefficients on the reweighted rows ``weights * A[rows]``."""
    return min_norm_least_squares(A[rows] * weights[:, None], y * weights)


def run_design(A, plan: SamplingPlan, oracle, rng, **info) -> IteEstimate:
    """Draw both sample sets on ``A``, query the oracle and fit each arm."""
    A = as_array(A)
    if plan.n != A.shape[0] or oracle.n != A.shape[0]:
        raise DimensionMismatch(f"plan ({plan.n}), oracle ({oracle.n}) and matrix ({A.shape[0]}) disagree")
    sets = draw_sample_sets(plan, rng)
    y0 = oracle.read(0, sets.s0)
    y1 = oracle.read(1, sets.s1)
    beta0 = weighted_fit(A, sets.s0, sets.w0, y0)
    beta1 = weighted_fit(A, sets.s1, sets.w1, y1)
    degenerate = len(sets.s0) == 0 or len(sets.s1) == 0
    return IteEstimate(
        ite_hat=A @ beta1 - A @ beta0,
        beta1_hat=beta1,
        beta0_hat=beta0,
        sets=sets,
        plan=plan,
        degenerate=degenerate,
        gamma_clipped=info.pop("gamma_clipped", False),
        info=info,
    )


def resolve_gamma(d, *, mode, s=None, epsilon=None, c0=1.0) -> tuple[float, float | None]:
    """Smoothing threshold (and the epsilon behind it) for a design on d covariates."""
    if mode == "theory":
        if epsilon is None:
            if s is None:
                raise ValueError("theory mode needs epsilon or s")
            epsilon = theory_epsilon(d, s, c0)
        return theory_gamma(d, epsilon, c0), epsilon
    if mode == "budget":
        if s is None:
            raise ValueError("budget mode needs a target sample size s")
        if d < 2:
            return 0.0, None
        epsilon = theory_epsilon(d, max(s, 1), c0)
        return theory_gamma(d, epsilon, c0), epsilon
    raise ValueError(f"unknown mode {mode!r}")


def smooth_for_design(A, gamma, factors=None, on_empty="rank1"):
    """Smoothed matrix for the design, retaining the top direction if gamma removes all.

    Returns (SmoothedMatrix, clipped) where ``clipped`` says the fallback fired.
    """
    factors = svd(A) if factors is None else factors
    try:
        return smoothed_matrix(A, gamma, factors), False
    except EmptySpectrum:
        if on_empty != "rank1":
            raise
        top = float(factors.singular_values[0])
        if top == 0.0:
            raise
        log.info("gamma=%.4g exceeds sigma_1^2=%.4g; keeping the top direction only", gamma, top**2)
        return smoothed_matrix(A, top**2, factors), True


def leverage_plan(
    X, *, mode="budget", s=None, epsilon=None, c0=1.0, gamma=None, on_empty="rank1", factors=None
):
    """Smoothed matrix and sampling plan for the leverage design.

    Returns (SmoothedMatrix, SamplingPlan, clipped); see ``sampling_ite``.
    """
    A = as_array(X)
    d = A.shape[1]
    if mode == "theory" and d < 2 and gamma is None:
        raise InvalidDimension("theory mode needs d >= 2")
    if gamma is None:
        gamma, epsilon = resolve_gamma(d, mode=mode, s=s, epsilon=epsilon, c0=c0)
    elif mode == "theory" and epsilon is None:
        if s is None:
            raise ValueError("theory mode needs epsilon or s")
        epsilon = theory_epsilon(d, s, c0)
    sm, clipped = smooth_for_design(A, gamma, factors, on_empty)
    lev = leverage_scores(sm.matrix, sm.factors)
    if mode == "theory":
        plan = theory_probabilities(lev, epsilon, c0, gamma=gamma)
    else:
        scaled = budget_probabilities(lev, s)
        plan = SamplingPlan(
            pi=scaled.pi, mode="budget", epsilon=epsilon, gamma=gamma, c0=c0,
            target_s=scaled.target_s, saturated=scaled.saturated,
        )
    return sm, plan, clipped


def sampling_ite(
    X,
    oracle,
    rng,
    *,
    mode="budget",
    s=None,
    epsilon=None,
    c0=1.0,
    gamma=None,
    on_empty="rank1",
    factors=None,
) -> IteEstimate:
    """Estimate every individual treatment effect from a leverage-sampled subset.

    ``mode="theory"`` uses pi_j = min{1, l_j c0 (ln rank + 30/epsilon)} with the
    matched threshold gamma; ``mode="budget"`` rescales leverage so the
    expected number of measured units equals ``s``. ``gamma`` overrides the
    smoothing threshold. When gamma exceeds sigma_1^2 the top singular
    direction is kept (``on_empty="rank1"``) and the estimate is flagged, or
    EmptySpectrum propagates (``on_empty="raise"``).
    """
    sm, plan, clipped = leverage_plan(
        X, mode=mode, s=s, epsilon=epsilon, c0=c0, gamma=gamma, on_empty=on_empty, factors=factors
    )
    return run_design(sm.matrix, plan, oracle, rng, gamma_clipped=clipped, d_prime=sm.d_prime)


def rmse(ite_hat, y1, y0) -> float:
    ite_hat = np.asarray(ite_hat, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if not (ite_hat.shape == y1.shape == y0.shape) or ite_hat.ndim != 1 or len(ite_hat) == 0:
        raise DimensionMismatch("rmse needs three vectors of the same non-zero length")
    return float(np.linalg.norm(ite_hat - (y1 - y0)) / math.sqrt(len(ite_hat)))
