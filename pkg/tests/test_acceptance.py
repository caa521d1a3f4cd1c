"""Acceptance criteria, one test each.

Every test records its criterion number and the measured quantities; the
terminal summary prints one PASS/FAIL line per criterion.
"""

import math

import numpy as np
import pytest

from tedesign import ate as ate_module
from tedesign.ate import complete_randomization_ate, recursive_balance, recursive_estimate
from tedesign.cli import run_cli
from tedesign.data import gen_outcomes, gen_unit_beta, row_normalize
from tedesign.errors import EmptySpectrum
from tedesign.experiments import ExperimentConfig, run_experiment
from tedesign.gsw import GswParams, gsw_assign, ht_estimate, imbalance
from tedesign.ite import draw_sample_sets, leverage_plan, regression_probabilities, run_design
from tedesign.linalg import leverage_scores, min_norm_least_squares, smoothed_matrix, svd
from tedesign.oracle import OutcomeOracle

pytestmark = pytest.mark.acceptance


def report(record_property, number, detail):
    record_property("criterion", number)
    record_property("detail", detail)


def random_matrix(rng, n, d, rank=None):
    if rank is None:
        return rng.standard_normal((n, d)) * rng.uniform(0.01, 100)
    return rng.standard_normal((n, rank)) @ rng.standard_normal((rank, d))


def normalized_matrix(rng, n, d):
    # t(1)-like rows so some rows carry much more leverage than others
    A = rng.standard_normal((n, d)) / np.sqrt(rng.chisquare(1.0, size=n))[:, None]
    return row_normalize(A).data


def mean_by(records, method, fraction):
    return np.array([r.value for r in records if r.method == method and r.fraction == fraction])


def binomial_two_sided(k, n):
    """Exact two-sided binomial test p-value for k successes out of n at p = 1/2."""
    tail = min(k, n - k)
    mass = sum(math.comb(n, i) for i in range(tail + 1))
    return min(1.0, 2 * mass / 2**n)


def test_criterion_01_leverage_mass(record_property):
    rng = np.random.default_rng(101)
    worst = 0.0
    for i in range(100):
        n, d = int(rng.integers(2, 40)), int(rng.integers(1, 10))
        rank = int(rng.integers(1, min(n, d) + 1)) if i % 2 else None
        lev = leverage_scores(random_matrix(rng, n, d, rank))
        worst = max(worst, abs(lev.scores.sum() - lev.source_rank))
    report(record_property, 1, f"max |sum(l) - rank| = {worst:.2e} (tol 1e-8)")
    assert worst <= 1e-8


def test_criterion_02_smoothed_leverage_cap(record_property):
    rng = np.random.default_rng(102)
    worst, checked = -np.inf, 0
    for _ in range(50):
        X = normalized_matrix(rng, int(rng.integers(20, 300)), int(rng.integers(2, 10)))
        f = svd(X)
        for gamma in (0.05, 0.1, 0.5):
            try:
                sm = smoothed_matrix(X, gamma, f)
            except EmptySpectrum:
                continue
            lev = leverage_scores(sm.matrix, sm.factors).scores
            worst = max(worst, lev.max() - 1 / gamma)
            checked += 1
    report(record_property, 2, f"{checked} (X, gamma) pairs, max(l - 1/gamma) = {worst:.3g} (tol 1e-10)")
    assert checked > 0 and worst <= 1e-10


def test_criterion_03_smoothing_error(record_property):
    rng = np.random.default_rng(103)
    worst = -np.inf
    for _ in range(200):
        X = random_matrix(rng, int(rng.integers(3, 40)), int(rng.integers(1, 8)))
        f = svd(X)
        gamma = rng.uniform(0, f.singular_values[0] ** 2)
        sm = smoothed_matrix(X, gamma, f)
        beta = rng.standard_normal(X.shape[1])
        worst = max(worst, np.linalg.norm(sm.matrix @ beta - X @ beta) - math.sqrt(gamma) * np.linalg.norm(beta))
    report(record_property, 3, f"max(||X*b - Xb|| - sqrt(gamma)||b||) = {worst:.3g} (tol 1e-8)")
    assert worst <= 1e-8


def test_criterion_04_theory_probabilities_capped(record_property):
    rng = np.random.default_rng(104)
    top, tested, skipped = 0.0, 0, 0
    while tested < 100:
        d = int(rng.integers(2, 9))
        # light-tailed rows keep sigma_1^2 above the theory threshold often enough
        X = row_normalize(rng.standard_normal((int(rng.integers(200, 800)), d))).data
        epsilon, c0 = rng.uniform(1.0, 30.0), rng.uniform(0.5, 2.0)
        try:
            _, plan, _ = leverage_plan(X, mode="theory", epsilon=epsilon, c0=c0, on_empty="raise")
        except EmptySpectrum:
            skipped += 1
            continue
        top = max(top, plan.pi.max())
        tested += 1
    report(record_property, 4, f"max pi = {top:.4f} over {tested} instances ({skipped} fully truncated, redrawn)")
    assert top <= 0.5


def test_criterion_05_disjoint_sets_and_single_arm_reads(record_property):
    rng = np.random.default_rng(105)
    X = normalized_matrix(rng, 300, 5)
    y1, y0 = rng.standard_normal((2, 300))
    _, plan, _ = leverage_plan(X, mode="budget", s=60, gamma=0.0)
    overlaps = dual = mismatched = 0
    for _ in range(10_000):
        oracle = OutcomeOracle(y1, y0)
        est = run_design(X, plan, oracle, rng)
        overlaps += len(np.intersect1d(est.sets.s0, est.sets.s1)) > 0
        dual += int(oracle.both_read.any())
        mismatched += not (
            np.array_equal(oracle.units_read(0), est.sets.s0) and np.array_equal(oracle.units_read(1), est.sets.s1)
        )
    report(record_property, 5, f"overlaps={overlaps}, dual-arm reads={dual}, reads off the sample sets={mismatched}")
    assert overlaps == dual == mismatched == 0


def test_criterion_06_subsampled_regression(record_property):
    rng = np.random.default_rng(106)
    n, d = 500, 5
    Q, _ = np.linalg.qr(rng.standard_normal((n, d)))
    X = Q @ np.diag([3.0, 2.5, 2.0, 1.5, 1.0])
    y = X @ rng.standard_normal(d) + 0.5 * rng.standard_normal(n)
    opt = np.linalg.norm(X @ min_norm_least_squares(X, y) - y)
    pi = regression_probabilities(leverage_scores(X), epsilon=0.5, delta=0.1)
    good = 0
    for _ in range(200):
        rows = np.flatnonzero(rng.random(n) < pi)
        w = 1 / np.sqrt(pi[rows])
        beta = min_norm_least_squares(X[rows] * w[:, None], y[rows] * w)
        good += np.linalg.norm(X @ beta - y) <= 1.5 * opt
    report(record_property, 6, f"{good}/200 trials within 1.5x optimum (need >= 160); mean sample {pi.sum():.0f}")
    assert good >= 160


def test_criterion_07_budget_honesty(record_property, synthetic):
    X, _ = synthetic
    rng = np.random.default_rng(107)
    details, ok = [], True
    for frac in (0.1, 0.2, 0.4):
        s = frac * X.n
        _, plan, _ = leverage_plan(X, mode="budget", s=s)
        q = plan.pi + plan.pi * (1 - plan.pi)  # chance unit j ends up in S0 or S1
        se = math.sqrt(np.sum(q * (1 - q)) / 10_000)
        sizes = np.array([draw.size for draw in (draw_sample_sets(plan, rng) for _ in range(10_000))])
        target = plan.expected_total if plan.saturated else s
        exact = plan.saturated or abs(plan.expected_total - s) <= 1e-6 * s
        within = abs(sizes.mean() - target) <= 3 * se
        ok &= exact and within
        details.append(f"s={s:.0f}: E={plan.expected_total:.4f}, mean={sizes.mean():.2f}, 3SE={3 * se:.2f}")
    report(record_property, 7, "; ".join(details))
    assert ok


def test_criterion_08_walk_structure(record_property):
    rng = np.random.default_rng(108)
    n, runs = 10, 10_000
    X = normalized_matrix(rng, n, 3)
    Z = np.empty((runs, n))
    max_iter = 0
    for r in range(runs):
        a = gsw_assign(X, GswParams(0.5), rng)
        Z[r] = a.z
        max_iter = max(max_iter, a.iterations)
    signs_ok = bool(np.all(np.abs(Z) == 1))
    marg = (Z > 0).mean(axis=0)
    totals = Z.sum(axis=1)
    pos, neg = int((totals > 0).sum()), int((totals < 0).sum())
    p_sign = binomial_two_sided(pos, pos + neg)
    worst_box = 0.0

    def trace(it, z, alive, pivot):
        nonlocal worst_box
        worst_box = max(worst_box, float(np.abs(z).max()))

    for _ in range(200):
        gsw_assign(X, GswParams(0.5), rng, trace=trace)
    report(
        record_property, 8,
        f"signs ok={signs_ok}, max iterations={max_iter}, marginals in [{marg.min():.4f}, {marg.max():.4f}], "
        f"sign test p={p_sign:.3f}, max |z_frac|={worst_box:.15f}",
    )
    assert signs_ok and max_iter <= n
    assert 0.47 <= marg.min() and marg.max() <= 0.53
    assert p_sign > 0.01
    assert worst_box <= 1 + 1e-12


def test_criterion_09_balance_dominance(record_property):
    rng = np.random.default_rng(109)
    n, d = 200, 10
    shared = rng.standard_normal(d)
    X = row_normalize(shared + 0.5 * rng.standard_normal((n, d))).data
    gsw = [imbalance(X, gsw_assign(X, GswParams(0.5), rng)) for _ in range(500)]
    coin = [imbalance(X, np.where(rng.random(n) < 0.5, 1, -1)) for _ in range(500)]
    report(record_property, 9, f"median imbalance: walk {np.median(gsw):.3f}, complete randomization {np.median(coin):.3f}")
    assert np.median(gsw) < np.median(coin)


def test_criterion_10_ht_unbiased(record_property):
    rng = np.random.default_rng(110)
    y1 = rng.normal(1.0, 1.0, 50)
    y0 = rng.normal(0.0, 1.0, 50)
    tau = float(np.mean(y1 - y0))
    est = np.array([complete_randomization_ate(OutcomeOracle(y1, y0), rng).tau_hat for _ in range(100_000)])
    se = est.std(ddof=1) / math.sqrt(len(est))
    report(record_property, 10, f"mean {est.mean():.5f} vs tau {tau:.5f}, |gap|/SE = {abs(est.mean() - tau) / se:.2f}")
    assert abs(est.mean() - tau) <= 3 * se


def test_criterion_11_recursive_structure(record_property, monkeypatch):
    rng = np.random.default_rng(111)
    X = normalized_matrix(rng, 1000, 5)
    calls = []
    real = ate_module.gsw_assign

    def counted(*args, **kwargs):
        calls.append(1)
        return real(*args, **kwargs)

    monkeypatch.setattr(ate_module, "gsw_assign", counted)
    over = scale_bad = 0
    depths = []
    for _ in range(1000):
        calls.clear()
        design = recursive_balance(X, 100, GswParams(0.5), rng)
        over += len(design.final_plus) + len(design.final_minus) > 100
        scale_bad += design.scale != 2 ** (len(calls) - design.retries)
        depths.append(design.depth_k)
    monkeypatch.undo()
    identical = 0
    for _ in range(100):
        Xs = normalized_matrix(rng, 40, 3)
        y1, y0 = rng.standard_normal((2, 40))
        design = recursive_balance(Xs, 40, GswParams(0.5), rng)
        rec = recursive_estimate(design, OutcomeOracle(y1, y0), 40).tau_hat
        ht = ht_estimate(design.chain[0][1], OutcomeOracle(y1, y0), 40)
        identical += rec == ht
    report(
        record_property, 11,
        f"over budget={over}/1000, scale mismatches={scale_bad}, depths {min(depths)}-{max(depths)}, "
        f"depth-1 bit-identical {identical}/100",
    )
    assert over == 0 and scale_bad == 0 and identical == 100


def test_criterion_12_ate_against_baselines(record_property, recursive_runs, ate_baselines):
    rec = mean_by(recursive_runs.records, "Recursive-GSW", 0.3)
    uni = mean_by(ate_baselines.records, "Uniform", 0.3)
    pop = mean_by(ate_baselines.records, "GSW-pop", 0.3)
    p30, p70 = np.percentile(pop, [30, 70])
    median_ok = np.median(rec) < np.median(uni)
    band_ok = p30 <= rec.mean() <= p70
    report(
        record_property, 12,
        f"median dev Recursive-GSW {np.median(rec):.5f} vs Uniform {np.median(uni):.5f} ({'ok' if median_ok else 'not below'}); "
        f"mean Recursive-GSW {rec.mean():.5f} vs GSW-pop band [{p30:.5f}, {p70:.5f}] ({'inside' if band_ok else 'outside'}); "
        f"trials {len(rec)}/{len(uni)}/{len(pop)}",
    )
    assert median_ok and band_ok


def test_criterion_13_ite_against_baselines(record_property, synthetic):
    X, out = synthetic
    cfg = ExperimentConfig(task="ite", methods=("Leverage", "Uniform", "Lin-regression"), fractions=(0.2,), trials=1000)
    res = run_experiment(X, out, cfg)
    lev = mean_by(res.records, "Leverage", 0.2).mean()
    uni = mean_by(res.records, "Uniform", 0.2).mean()
    lin = mean_by(res.records, "Lin-regression", 0.2).mean()
    report(
        record_property, 13,
        f"mean RMSE Leverage {lev:.4f}, Uniform {uni:.4f}, Lin-regression {lin:.4f} "
        f"(ratio {lev / lin:.3f}, need <= 1.25); degenerate trials {sum(res.degenerate.values())}",
    )
    assert lev < uni and lev <= 1.25 * lin


def test_criterion_14_gaussian_norm(record_property):
    rng = np.random.default_rng(114)
    n, d, sigma = 1000, 5, 0.3
    X = normalized_matrix(rng, n, d)
    beta = gen_unit_beta(d, rng)
    inside = 0
    for _ in range(10_000):
        out = gen_outcomes(X, beta, beta, sigma, rng)
        inside += np.linalg.norm(out.y1 - X @ beta) <= 2 * sigma * math.sqrt(n)
    report(record_property, 14, f"{inside}/10000 draws with ||zeta|| <= 2 sigma sqrt(n) (need >= 9990)")
    assert inside >= 9990


def test_criterion_15_parallel_determinism(record_property, tmp_path):
    same = []
    for task in ("ite", "ate"):
        paths = []
        for jobs in (1, 3):
            path = tmp_path / f"{task}-{jobs}.csv"
            argv = ["experiment", task, "--synthetic", "n=300", "d=5", "--trials", "10", "--seed", "9",
                    "--jobs", str(jobs), "--out", str(path)]
            assert run_cli(argv) == 0
            paths.append(path)
        same.append(paths[0].read_bytes() == paths[1].read_bytes())
    report(record_property, 15, f"byte-identical records with --jobs 1 vs 3: ite={same[0]}, ate={same[1]}")
    assert all(same)
