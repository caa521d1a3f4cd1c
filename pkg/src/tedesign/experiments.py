"""Monte Carlo harness: sweep sample fractions, run every method, aggregate.

Every (method, fraction, trial) cell draws from its own generator, derived
from the master seed and the cell's position, so results do not depend on
which worker ran the cell or on which other methods were selected.
"""

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ate import complete_randomization_ate, gsw_pop_ate, recursive_gsw_ate, uniform_ate
from .errors import DegeneratePartition, EmptyInput, MissingGroundTruth, ParseError
from .gsw import GswParams
from .ite import budget_probabilities, leverage_plan, rmse, run_design, uniform_probabilities
from .linalg import as_array, leverage_scores, min_norm_least_squares, svd
from .oracle import OutcomeOracle

log = logging.getLogger(__name__)

ITE_METHODS = ("Leverage", "Uniform", "Leverage-nothresh", "Lin-regression")
ATE_METHODS = ("Recursive-GSW", "Uniform", "GSW-pop", "Complete-randomization")
DEFAULT_FRACTIONS = tuple(round(0.1 * k, 1) for k in range(1, 11))

RECORD_HEADER = ["method", "fraction", "trial", "metric", "value", "sample_size"]
SUMMARY_HEADER = ["method", "fraction", "mean", "p30", "p70", "mean_sample_size", "trial_count"]


def methods_for(task):
    if task == "ite":
        return ITE_METHODS
    if task == "ate":
        return ATE_METHODS
    raise ValueError(f"task must be 'ite' or 'ate', got {task!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    methods: tuple = ()
    fractions: tuple = DEFAULT_FRACTIONS
    trials: int = 1000
    master_seed: int = 0
    phi: float = 0.5
    c0: float = 1.0
    mode: str = "budget"
    literal_uniform: bool = False
    jobs: int = 1

    def __post_init__(self):
        allowed = methods_for(self.task)
        methods = tuple(self.methods) or allowed
        bad = [m for m in methods if m not in allowed]
        if bad:
            raise ValueError(f"unknown {self.task} methods {bad}; choose from {list(allowed)}")
        object.__setattr__(self, "methods", methods)
        fractions = tuple(float(f) for f in self.fractions)
        if not fractions or any(not 0.0 < f <= 1.0 for f in fractions):
            raise ValueError(f"fractions must lie in (0, 1], got {fractions}")
        object.__setattr__(self, "fractions", fractions)
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.mode not in ("budget", "theory"):
            raise ValueError(f"mode must be 'budget' or 'theory', got {self.mode!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")


@dataclass(frozen=True)
class TrialRecord:
    method: str
    fraction: float
    trial: int
    metric: str
    value: float
    sample_size: int


@dataclass(frozen=True)
class SummaryRow:
    method: str
    fraction: float
    mean: float
    p30: float
    p70: float
    mean_sample_size: float
    trial_count: int


@dataclass
class ExperimentResult:
    records: list
    degenerate: dict = field(default_factory=dict)  # (method, fraction) -> count


def budget_size(fraction, n) -> int:
    """Integer budget ceil(fraction * n), ignoring float fuzz like 0.3 * 2000."""
    return max(1, min(n, math.ceil(fraction * n - 1e-9)))


def trial_rng(master_seed, method_index, fraction_index, trial):
    seq = np.random.SeedSequence(master_seed, spawn_key=(method_index, fraction_index, trial))
    return np.random.default_rng(seq)


class _Context:
    """Per-dataset precomputation shared by all trials in one process."""

    def __init__(self, X, outcomes, config):
        if outcomes is None or outcomes.y1 is None or outcomes.y0 is None:
            raise MissingGroundTruth("both potential outcomes are needed to score estimates")
        self.A = np.ascontiguousarray(as_array(X))
        self.n = self.A.shape[0]
        self.y1 = outcomes.y1
        self.y0 = outcomes.y0
        self.config = config
        self.tau = float(np.mean(self.y1 - self.y0))
        self._factors = None
        self._cache = {}

    @property
    def factors(self):
        if self._factors is None:
            self._factors = svd(self.A)
        return self._factors

    def cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def oracle(self, full_information=False):
        return OutcomeOracle(self.y1, self.y0, full_information=full_information)

    # -- ITE ------------------------------------------------------------------

    def ite_trial(self, method, fraction, rng):
        cfg = self.config
        s = fraction * self.n
        if method == "Lin-regression":
            value = self.cached("linreg", self._lin_regression)
            return value, self.n
        if method == "Leverage":
            A, plan = self.cached(("lev", fraction), lambda: self._leverage_plan(s))
        elif method == "Uniform":
            A = self.A
            plan = self.cached(("uni", fraction), lambda: uniform_probabilities(self.n, s, cfg.literal_uniform))
        elif method == "Leverage-nothresh":
            A = self.A
            plan = self.cached(("raw", fraction), lambda: budget_probabilities(self._raw_leverage(), s))
        else:
            raise ValueError(method)
        est = run_design(A, plan, self.oracle(), rng)
        if est.degenerate:
            return None, est.realized_sample_size
        return rmse(est.ite_hat, self.y1, self.y0), est.realized_sample_size

    def _leverage_plan(self, s):
        cfg = self.config
        sm, plan, clipped = leverage_plan(self.A, mode=cfg.mode, s=s, c0=cfg.c0, factors=self.factors)
        if clipped:
            log.info("leverage design at s=%.6g keeps only the top singular direction", s)
        return sm.matrix, plan

    def _raw_leverage(self):
        return self.cached("rawlev", lambda: leverage_scores(self.A, self.factors))

    def _lin_regression(self):
        oracle = self.oracle(full_information=True)
        y1 = oracle.read_all(1)
        y0 = oracle.read_all(0)
        b1 = min_norm_least_squares(self.A, y1)
        b0 = min_norm_least_squares(self.A, y0)
        return rmse(self.A @ b1 - self.A @ b0, self.y1, self.y0)

    # -- ATE ------------------------------------------------------------------

    def ate_trial(self, method, fraction, rng):
        cfg = self.config
        s = budget_size(fraction, self.n)
        params = GswParams(phi=cfg.phi)
        oracle = self.oracle()
        try:
            if method == "Recursive-GSW":
                est = recursive_gsw_ate(self.A, s, params, oracle, rng)
            elif method == "Uniform":
                est = uniform_ate(s, oracle, rng)
            elif method == "GSW-pop":
                est = gsw_pop_ate(self.A, params, oracle, rng)
            elif method == "Complete-randomization":
                est = complete_randomization_ate(oracle, rng)
            else:
                raise ValueError(method)
        except DegeneratePartition as exc:
            log.warning("%s at fraction %g: %s", method, fraction, exc)
            return None, oracle.revealed_count()
        return abs(est.tau_hat - self.tau), est.realized_sample_size

    def run_cell(self, method, fraction_index, trials):
        cfg = self.config
        method_index = methods_for(cfg.task).index(method)
        fraction = cfg.fractions[fraction_index]
        run = self.ite_trial if cfg.task == "ite" else self.ate_trial
        metric = "rmse" if cfg.task == "ite" else "deviation"
        out = []
        for trial in trials:
            rng = trial_rng(cfg.master_seed, method_index, fraction_index, trial)
            value, size = run(method, fraction, rng)
            out.append((trial, None if value is None else TrialRecord(method, fraction, trial, metric, float(value), int(size))))
        return method, fraction_index, out


_WORKER = None


def _init_worker(X, outcomes, config):
    global _WORKER
    _WORKER = _Context(X, outcomes, config)


def _run_in_worker(task):
    return _WORKER.run_cell(*task)


def _chunks(trials, jobs):
    size = max(1, math.ceil(trials / (4 * jobs)))
    return [range(a, min(trials, a + size)) for a in range(0, trials, size)]


def run_experiment(X, outcomes, config: ExperimentConfig) -> ExperimentResult:
    """Run every configured (method, fraction, trial) cell.

    Records come back in canonical order: method (as configured), then
    fraction, then trial. Degenerate trials produce no record and are counted
    in ``ExperimentResult.degenerate``.
    """
    tasks = [
        (m, fi, chunk)
        for m in config.methods
        for fi in range(len(config.fractions))
        for chunk in _chunks(config.trials, config.jobs)
    ]
    if config.jobs == 1:
        ctx = _Context(X, outcomes, config)
        results = [ctx.run_cell(*t) for t in tasks]
    else:
        with ProcessPoolExecutor(
            max_workers=config.jobs, initializer=_init_worker, initargs=(X, outcomes, config)
        ) as pool:
            results = list(pool.map(_run_in_worker, tasks))
    by_cell = {}
    for method, fi, rows in results:
        by_cell.setdefault((method, fi), []).extend(rows)
    records, degenerate = [], {}
    for m in config.methods:
        for fi, fraction in enumerate(config.fractions):
            for _, rec in sorted(by_cell[(m, fi)], key=lambda r: r[0]):
                if rec is None:
                    degenerate[(m, fraction)] = degenerate.get((m, fraction), 0) + 1
                else:
                    records.append(rec)
    return ExperimentResult(records=records, degenerate=degenerate)


def run_ite_experiment(X, outcomes, config: ExperimentConfig) -> ExperimentResult:
    if config.task != "ite":
        raise ValueError("config.task must be 'ite'")
    return run_experiment(X, outcomes, config)


def run_ate_experiment(X, outcomes, config: ExperimentConfig) -> ExperimentResult:
    if config.task != "ate":
        raise ValueError("config.task must be 'ate'")
    return run_experiment(X, outcomes, config)


def summarize(records) -> list[SummaryRow]:
    """Mean and 30/70 percentiles (linear interpolation) per (method, fraction)."""
    records = list(records)
    if not records:
        raise EmptyInput("no records to summarize")
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.fraction), []).append(r)
    rows = []
    for (method, fraction), group in groups.items():
        values = np.array([r.value for r in group])
        sizes = np.array([r.sample_size for r in group], dtype=float)
        p30, p70 = np.percentile(values, [30, 70])
        rows.append(
            SummaryRow(method, fraction, float(values.mean()), float(p30), float(p70), float(sizes.mean()), len(group))
        )
    return rows


# --- CSV ---------------------------------------------------------------------


def _num(x):
    return repr(float(x))


def write_records(path, records):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(RECORD_HEADER) + "\n")
        for r in records:
            fh.write(f"{r.method},{_num(r.fraction)},{r.trial},{r.metric},{_num(r.value)},{r.sample_size}\n")


def read_records(path) -> list[TrialRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RECORD_HEADER:
            raise ParseError(f"{path}: record header must be {','.join(RECORD_HEADER)}", row=1)
        out = []
        for i, row in enumerate(reader, start=2):
            try:
                out.append(
                    TrialRecord(
                        row["method"], float(row["fraction"]), int(row["trial"]), row["metric"],
                        float(row["value"]), int(row["sample_size"]),
                    )
                )
            except (TypeError, ValueError):
                raise ParseError(f"{path}: malformed record", row=i) from None
        return out


def write_summary(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(SUMMARY_HEADER) + "\n")
        for r in rows:
            fh.write(
                f"{r.method},{_num(r.fraction)},{_num(r.mean)},{_num(r.p30)},{_num(r.p70)},"
                f"{_num(r.mean_sample_size)},{r.trial_count}\n"
            )
