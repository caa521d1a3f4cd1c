"""Treatment-effect experimental designs under a sample budget."""

from .ate import (
    AteEstimate,
    RecursiveDesign,
    complete_randomization_ate,
    confidence_parameter,
    gsw_pop_ate,
    recursive_balance,
    recursive_estimate,
    recursive_gsw_ate,
    uniform_ate,
)
from .data import (
    PotentialOutcomes,
    SyntheticSpec,
    gen_outcomes,
    gen_t_covariates,
    gen_unit_beta,
    load_dataset,
    make_synthetic,
    row_normalize,
    save_dataset,
)
from .errors import *  # noqa: F401,F403
from .experiments import (
    ExperimentConfig,
    SummaryRow,
    TrialRecord,
    run_ate_experiment,
    run_experiment,
    run_ite_experiment,
    summarize,
)
from .gsw import Assignment, GswParams, gsw_assign, ht_estimate, imbalance
from .ite import (
    IteEstimate,
    SampleSets,
    SamplingPlan,
    budget_probabilities,
    draw_sample_sets,
    rmse,
    sampling_ite,
    theory_epsilon,
    theory_gamma,
    theory_probabilities,
    uniform_probabilities,
)
from .linalg import (
    CovariateMatrix,
    LeverageProfile,
    SmoothedMatrix,
    SVDFactors,
    leverage_scores,
    min_norm_least_squares,
    ridge_loss,
    smoothed_matrix,
    svd,
)
from .oracle import OutcomeOracle

__version__ = "0.1.0"
