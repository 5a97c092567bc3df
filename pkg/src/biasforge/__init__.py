"""Structural model of biased loan-approval decisions.

Simulates evaluator belief dynamics over synthetic lending worlds,
recovers taste-based and belief-based gender bias parameters from decision
logs by maximum likelihood, runs de-biasing counterfactual grids, and
audits how machine learners trained on each decision regime inherit bias.
"""

__version__ = "0.1.0"

from .core import (
    ApplicantProfile,
    BeliefState,
    ChoiceShock,
    Gender,
    LoanTerms,
    ModelParams,
    RepaymentSignals,
    SignalMap,
    SignalTransform,
    Updater,
    approval_prob,
    initial_belief,
    non_default_prob,
    prior_quality_mean,
    reference_params,
    signal_implied_quality,
    update_belief,
    update_belief_bayes,
)
from .counterfactual import (
    ScenarioConfig,
    ScenarioReport,
    apply_scenario,
    run_scenario,
    scenario_grid,
)
from .estimation import (
    EstimateReport,
    EstimationConfig,
    EstimationData,
    fit,
    log_likelihood,
    log_likelihood_gradient,
)
from .metrics import expected_cohort_stats, expected_profit, tpr_gap
from .world import (
    DecisionMode,
    DecisionRecord,
    FullSampleDataset,
    Outcome,
    WorldConfig,
    generate_outcome,
    generate_population,
    generate_signals,
    simulate_decisions,
    simulate_full_sample,
)
from .audit import AuditConfig, TrainingSet, audit, build_training_set, train_learner
from .boosting import BoostConfig, BoostedTreesClassifier

__all__ = [
    "ApplicantProfile", "AuditConfig", "BeliefState", "BoostConfig",
    "BoostedTreesClassifier", "ChoiceShock", "DecisionMode", "DecisionRecord",
    "EstimateReport", "EstimationConfig", "EstimationData",
    "FullSampleDataset", "Gender", "LoanTerms", "ModelParams", "Outcome",
    "RepaymentSignals", "ScenarioConfig", "ScenarioReport", "SignalMap",
    "SignalTransform", "TrainingSet", "Updater", "WorldConfig",
    "apply_scenario", "approval_prob", "audit", "build_training_set",
    "expected_cohort_stats", "expected_profit", "fit", "generate_outcome",
    "generate_population", "generate_signals", "initial_belief",
    "log_likelihood", "log_likelihood_gradient", "non_default_prob",
    "prior_quality_mean", "reference_params", "run_scenario",
    "scenario_grid", "signal_implied_quality", "simulate_decisions",
    "simulate_full_sample", "tpr_gap", "train_learner", "update_belief",
    "update_belief_bayes",
]
