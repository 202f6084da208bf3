"""Kernel matching on propensity scores for ATE/ATT estimation."""

from .errors import (
    BootstrapDegenerateError,
    DataFormatError,
    DegenerateScoreError,
    DegenerateTreatmentError,
    DenominatorUnderflow,
    EstimationError,
    RankError,
    SeparationError,
)
from .estimators import (
    EffectEstimate,
    Estimand,
    ImputedOutcomes,
    Method,
    ObservationalSample,
    dr,
    impute,
    ipw,
    kernel_match,
    kernel_match_ate,
    kernel_match_att,
    nn_match,
    ols_outcome_model,
)
from .kernels import KernelFamily, KernelSpec, eval_kernel, verify_moments
from .propensity import PropensityFit, add_intercept, fit_logistic, predict, score_and_information

from .resampling import BootstrapResult, IntervalMethod, bootstrap, percentile_interval, normal_interval
from .dgp import GeneratedData, ScenarioSpec, generate
from .mcharness import ExperimentConfig, MethodSpec, MonteCarloReport, default_panel, matching_panel, run, sweep
from .dataio import NswData, balance_table, load_nsw, welch_t_test

__version__ = "0.1.0"
