"""Smooth-hazard survival models with scalable per-subject frailty.

Proportional-hazards models are reformulated as penalized Poisson
regressions over quadrature-expanded pseudo-observations; frailty is
estimated either jointly (one stage) or by alternating the smooth fit with
per-subject Laplace / adaptive Gauss-Hermite integration (two stages).
"""

from .backfit import BackfitConfig, BackfitResult, predict_survival, two_stage_fit
from .basis import PenaltyDecomposition, SplineBasis, build_basis, evaluate_basis
from .bench import Measurement, bias_metric, run_design
from .cox import CoxFit, breslow_baseline, cox_partial_fit, poisson_semiparametric_fit
from .data import Dataset, SurvivalRecord, load_dataset, make_dataset, save_dataset, validate_for_fit
from .errors import CalibrationError, DataValidationError, FitError, SurvgamError
from .frailty import FrailtyFit, fit_frailty, subject_marginal, subject_mode
from .gam import GamConfig, GamFit, one_stage_fit, optimize_smoothing, pirls, reml_criterion, standard_errors
from .quadrature import ExpandedDataset, LobattoRule, RiskSetPartition, expand, lobatto_rule, partition_at_events
from .simulate import (
    DesignPoint,
    SimulatedDataset,
    SimulationConfig,
    calibrate_weibull,
    derive_counts,
    draw_weibull_time,
    kaplan_meier,
    pilot_trial_dataset,
    simulate_dataset,
)

__version__ = "0.1.0"
