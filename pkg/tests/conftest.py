import pytest

from tedesign.data import SyntheticSpec, make_synthetic
from tedesign.experiments import ExperimentConfig, run_experiment

# the heavy-tailed synthetic instance used by the statistical checks
SYNTHETIC = SyntheticSpec(n=2000, d=25, seed=0)
TRIALS = 1000


@pytest.fixture(scope="session")
def synthetic():
    return make_synthetic(SYNTHETIC)


@pytest.fixture(scope="session")
def recursive_runs(synthetic):
    """Recursive-GSW deviations at four budgets, 1000 trials each."""
    X, out = synthetic
    cfg = ExperimentConfig(task="ate", methods=("Recursive-GSW",), fractions=(0.1, 0.3, 0.5, 1.0), trials=TRIALS)
    return run_experiment(X, out, cfg)


@pytest.fixture(scope="session")
def ate_baselines(synthetic):
    X, out = synthetic
    cfg = ExperimentConfig(task="ate", methods=("Uniform", "GSW-pop", "Complete-randomization"), fractions=(0.3,), trials=TRIALS)
    return run_experiment(X, out, cfg)


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props and rep.when == "call":
                rows.append((props["criterion"], "PASS" if outcome == "passed" else "FAIL", props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, verdict, detail in sorted(rows, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {detail}")
