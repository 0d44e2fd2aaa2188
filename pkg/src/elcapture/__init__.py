"""Two-step semiparametric empirical-likelihood abundance estimation.

Capture-recapture data with covariates missing at random: a logistic
model for the non-missingness probability is fitted first, then the
abundance, capture-model coefficients, and inclusion probability are
estimated by maximizing a semiparametric empirical likelihood over the
complete cases.  Scaled likelihood-ratio confidence intervals, a
one-inflation score test, and Monte Carlo study drivers are included.
"""

__version__ = "0.1.0"

from .data import (
    CaptureDataset,
    CaptureModelSpec,
    Observation,
    read_csv,
    stack_z,
    validate,
)
from .el import (
    ELFit,
    ELParams,
    ELWeights,
    FitOptions,
    XiSolution,
    el_ratio,
    el_weights,
    fit_mele,
    profile_loglik,
    solve_xi,
)
from .estimator import TwoStepAbundance
from .inference import (
    ConfidenceInterval,
    ScoreTestResult,
    VarianceEstimate,
    abundance_se,
    estimate_S_blocks,
    estimate_variance,
    one_inflation_test,
    scaled_ci,
    score_U_s,
    sigma_and_scale,
)
from .missingness import MissingnessFit, fit_missingness, pi, u_matrix
from .models import (
    TruncationBounds,
    cond_prob_given_captured,
    f_pmf,
    h_pmf,
    phi,
    phi_e,
    truncation_bounds,
    v_f,
)
from .simulate import SimulationReport, SimulationScenario, generate, run_study

__all__ = [
    "__version__",
    "CaptureDataset",
    "CaptureModelSpec",
    "Observation",
    "read_csv",
    "stack_z",
    "validate",
    "ELFit",
    "ELParams",
    "ELWeights",
    "FitOptions",
    "XiSolution",
    "el_ratio",
    "el_weights",
    "fit_mele",
    "profile_loglik",
    "solve_xi",
    "TwoStepAbundance",
    "ConfidenceInterval",
    "ScoreTestResult",
    "VarianceEstimate",
    "abundance_se",
    "estimate_S_blocks",
    "estimate_variance",
    "one_inflation_test",
    "scaled_ci",
    "score_U_s",
    "sigma_and_scale",
    "MissingnessFit",
    "fit_missingness",
    "pi",
    "u_matrix",
    "TruncationBounds",
    "cond_prob_given_captured",
    "f_pmf",
    "h_pmf",
    "phi",
    "phi_e",
    "truncation_bounds",
    "v_f",
    "SimulationReport",
    "SimulationScenario",
    "generate",
    "run_study",
]
