"""Machine-learning bias audit pipeline.

Builds a training set the way a platform would from one decision regime
(approved loans keep their true labels; rejected applications get labels
imputed from matched approved neighbours), trains a learner on it, scores
the entire full sample, and reports the same fairness and profit metrics
as the human scenario grid with ``decision_maker = "machine"``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.neighbors import NearestNeighbors

from .boosting import BoostConfig, BoostedTreesClassifier
from .counterfactual import ScenarioConfig, ScenarioReport, apply_scenario, report_from_log
from .exceptions import ConfigurationError, DegenerateDataError
from .world import DecisionLog, DecisionMode, FullSampleDataset, simulate_decisions


class Imputation(str, Enum):
    NEAREST_NEIGHBOR = "nearest_neighbor"
    DROP_REJECTED = "drop_rejected"


class LearnerKind(str, Enum):
    BOOSTED_TREES = "boosted_trees"
    LOGISTIC = "logistic"


class DecisionRuleKind(str, Enum):
    PROFIT_THRESHOLD = "profit_threshold"
    FIXED_THRESHOLD = "fixed_threshold"


@dataclass(frozen=True)
class DecisionRule:
    kind: DecisionRuleKind = DecisionRuleKind.PROFIT_THRESHOLD
    theta: float = 0.5

    def __post_init__(self) -> None:
        if not isinstance(self.kind, DecisionRuleKind):
            object.__setattr__(self, "kind", DecisionRuleKind(self.kind))
        if self.kind is DecisionRuleKind.FIXED_THRESHOLD and not 0.0 < self.theta < 1.0:
            raise ConfigurationError("fixed threshold must lie in (0, 1)")

    def thresholds(self, dataset: FullSampleDataset, rows: np.ndarray) -> np.ndarray:
        if self.kind is DecisionRuleKind.FIXED_THRESHOLD:
            return np.full(rows[0].shape, self.theta)
        i, t = rows
        gain, loss = dataset.gain[i, t], dataset.loss[i, t]
        return loss / (gain + loss)


@dataclass(frozen=True)
class AuditConfig:
    scenario: ScenarioConfig
    imputation: Imputation = Imputation.NEAREST_NEIGHBOR
    k_neighbors: int = 1
    learner: LearnerKind = LearnerKind.BOOSTED_TREES
    learner_hyperparams: BoostConfig = field(default_factory=BoostConfig)
    decision_rule: DecisionRule = field(default_factory=DecisionRule)
    include_gender: bool = False
    include_lagged_signals: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.imputation, Imputation):
            object.__setattr__(self, "imputation", Imputation(self.imputation))
        if not isinstance(self.learner, LearnerKind):
            object.__setattr__(self, "learner", LearnerKind(self.learner))
        if self.k_neighbors < 1:
            raise ConfigurationError("k_neighbors must be >= 1")


@dataclass
class TrainingSet:
    feature_names: List[str]
    X: np.ndarray               # (m, p)
    y: np.ndarray               # (m,) 1.0 = repaid
    imputed: np.ndarray         # (m,) bool
    applicant_index: np.ndarray
    t: np.ndarray               # 1-based

    def __len__(self) -> int:
        return int(self.y.shape[0])


def feature_matrix(
    dataset: FullSampleDataset, config: AuditConfig
) -> Tuple[np.ndarray, List[str], Tuple[np.ndarray, np.ndarray]]:
    """Feature rows for every application in canonical order.

    Returns the matrix, the column names, and the (applicant, t) indices of
    each row.  Lagged-signal columns describe the previous loan and are zero
    (with ``has_history`` = 0) on first applications.
    """
    i, t = np.nonzero(dataset.present)
    cols: List[Tuple[str, np.ndarray]] = []
    for k, name in enumerate(dataset.covariate_names):
        if name == "constant":
            continue
        cols.append((name, dataset.X[i, k]))
    cols.append(("amount", dataset.amount[i, t]))
    cols.append(("term_months", dataset.term_months[i, t]))
    cols.append(("annual_rate", dataset.annual_rate[i, t]))
    if config.include_gender:
        cols.append(("gender_male", dataset.male[i].astype(np.float64)))
    if config.include_lagged_signals:
        has_history = (t > 0).astype(np.float64)
        prev = np.maximum(t - 1, 0)
        lag = lambda arr: np.where(t > 0, arr[i, prev], 0.0)
        cols.append(("has_history", has_history))
        cols.append(("prev_overdue_days_log1p", np.log1p(lag(dataset.overdue_days))))
        cols.append(("prev_overdue_frac", lag(dataset.overdue_frac)))
        cols.append(("prev_attitude_frac", lag(dataset.attitude_frac)))
        cols.append(("prev_help_frac", lag(dataset.help_frac)))
    names = [c[0] for c in cols]
    X = np.column_stack([c[1] for c in cols])
    return X, names, (i, t)


def _impute_labels(
    X: np.ndarray, approved: np.ndarray, labels: np.ndarray, k: int
) -> np.ndarray:
    """Majority label of the k nearest approved rows, z-scored Euclidean."""
    pool = np.nonzero(approved)[0]
    need = np.nonzero(~approved)[0]
    if pool.size == 0:
        raise DegenerateDataError("no approved applications to match against")
    if k > pool.size:
        warnings.warn(
            "k_neighbors=%d exceeds approved pool size %d; lowered" % (k, pool.size),
            stacklevel=3,
        )
        k = pool.size
    mu = X[pool].mean(axis=0)
    sd = X[pool].std(axis=0)
    sd[sd == 0.0] = 1.0
    Z = (X - mu) / sd
    nn = NearestNeighbors(n_neighbors=k).fit(Z[pool])
    _, idx = nn.kneighbors(Z[need])
    neighbor_labels = labels[pool[idx]]          # (n_need, k)
    votes = neighbor_labels.mean(axis=1)
    out = labels.copy()
    # majority; exact ties resolved by the single nearest neighbour
    out[need] = np.where(votes > 0.5, 1.0, np.where(votes < 0.5, 0.0, neighbor_labels[:, 0]))
    return out


def build_training_set(
    dataset: FullSampleDataset,
    scenario: ScenarioConfig,
    config: AuditConfig,
) -> TrainingSet:
    """Training data as produced under one decision regime.

    Decisions are sampled from the scenario's evaluator; approved rows keep
    their true labels, rejected rows are dropped or imputed by matching.
    """
    log = simulate_decisions(
        dataset, apply_scenario(scenario), DecisionMode.SAMPLE_DECISIONS, seed=config.seed
    )
    X, names, (i, t) = feature_matrix(dataset, config)
    approved = log.approved
    true_labels = dataset.repaid[i, t].astype(np.float64)

    if config.imputation is Imputation.DROP_REJECTED:
        keep = approved
        return TrainingSet(
            feature_names=names,
            X=X[keep],
            y=true_labels[keep],
            imputed=np.zeros(int(keep.sum()), dtype=bool),
            applicant_index=log.applicant_index[keep],
            t=log.t[keep],
        )

    labels = _impute_labels(X, approved, true_labels, config.k_neighbors)
    return TrainingSet(
        feature_names=names,
        X=X,
        y=labels,
        imputed=~approved,
        applicant_index=log.applicant_index.copy(),
        t=log.t.copy(),
    )


class LogisticScorer:
    """L2 logistic regression on standardized features."""

    def __init__(self, mu: np.ndarray, sd: np.ndarray, coef: np.ndarray, intercept: float,
                 feature_names: List[str]):
        self.mu, self.sd, self.coef, self.intercept = mu, sd, coef, intercept
        self.feature_names = feature_names

    @staticmethod
    def train(X: np.ndarray, y: np.ndarray, feature_names: List[str]) -> "LogisticScorer":
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd == 0.0] = 1.0
        clf = LogisticRegression(max_iter=2000).fit((X - mu) / sd, y)
        return LogisticScorer(mu, sd, clf.coef_[0].copy(), float(clf.intercept_[0]),
                              feature_names)

    def predict_score(self, X: np.ndarray) -> np.ndarray:
        z = ((X - self.mu) / self.sd) @ self.coef + self.intercept
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        e = np.exp(z[~pos])
        out[~pos] = e / (1.0 + e)
        return out

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "kind": "logistic",
            "version": 1,
            "feature_names": list(self.feature_names),
            "mu": self.mu.tolist(),
            "sd": self.sd.tolist(),
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
        }


def train_learner(train: TrainingSet, config: AuditConfig):
    """Fit the configured learner; scores are non-default probabilities."""
    classes = np.unique(train.y)
    if classes.size < 2:
        raise DegenerateDataError("training set has a single outcome class")
    if config.learner is LearnerKind.BOOSTED_TREES:
        return BoostedTreesClassifier(config.learner_hyperparams).fit(
            train.X, train.y, feature_names=train.feature_names
        )
    return LogisticScorer.train(train.X, train.y, train.feature_names)


@dataclass
class AuditResult:
    report: ScenarioReport
    model: object
    training_set: TrainingSet
    log: DecisionLog
    scores: np.ndarray


def machine_log_from_scores(
    dataset: FullSampleDataset,
    scores: np.ndarray,
    rule: DecisionRule,
) -> DecisionLog:
    """Hard machine decisions over the full sample from per-row scores."""
    i, t = np.nonzero(dataset.present)
    if scores.shape[0] != i.shape[0]:
        raise ConfigurationError("one score per application required")
    thresholds = rule.thresholds(dataset, (i, t))
    approved = scores > thresholds
    with np.errstate(divide="ignore"):
        margin = np.log(scores) - np.log1p(-scores)
    return DecisionLog(
        mode=DecisionMode.SAMPLE_DECISIONS,
        applicant_index=i,
        applicant_id=dataset.applicant_ids[i],
        t=(t + 1).astype(np.int64),
        male=dataset.male[i],
        belief_mean=margin,
        approval_prob=scores,
        approved=approved,
        repaid=dataset.repaid[i, t],
        realized_profit=dataset.profit[i, t],
    )


def audit(dataset: FullSampleDataset, config: AuditConfig) -> AuditResult:
    """Train on the scenario's world, score the full sample, report bias."""
    train = build_training_set(dataset, config.scenario, config)
    model = train_learner(train, config)
    X_all, _, _ = feature_matrix(dataset, config)
    scores = model.predict_score(X_all)
    log = machine_log_from_scores(dataset, scores, config.decision_rule)
    report = report_from_log(
        log,
        zero_pref_bias=config.scenario.zero_pref_bias,
        zero_belief_bias=config.scenario.zero_belief_bias,
        decision_maker="machine",
    )
    return AuditResult(report=report, model=model, training_set=train, log=log,
                       scores=scores)
