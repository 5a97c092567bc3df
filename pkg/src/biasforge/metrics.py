"""Shared fairness and profit metric kernel.

Every decision maker in the toolkit (the human evaluator model and audited
machine learners) emits the same DecisionLog shape, so all reports flow
through these functions and cannot drift apart.

Approval "weight" means the sampled approve/reject indicator when decisions
were drawn, and the approval probability otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .exceptions import DataError, UndefinedMetricError
from .world import DecisionLog

GENDERS = ("female", "male")


def _weights(log: DecisionLog) -> np.ndarray:
    return log.approval_weight()


def tpr_by_gender(log: DecisionLog) -> Dict[str, float]:
    """Mean approval among truly repaid applications, per gender."""
    w = _weights(log)
    out = {}
    for name, mask in (("female", ~log.male), ("male", log.male)):
        qualified = mask & log.repaid
        if not qualified.any():
            raise UndefinedMetricError(
                "no repaid applications for gender %r; TPR undefined" % name
            )
        out[name] = float(w[qualified].mean())
    return out


def tpr_gap(log: DecisionLog) -> float:
    """Equal-opportunity gap: female TPR minus male TPR."""
    rates = tpr_by_gender(log)
    return rates["female"] - rates["male"]


def tpr_gap_se(log: DecisionLog) -> float:
    """Delta-method standard error of the TPR gap, clustering applications
    by applicant (the independent unit of the sampling design)."""
    w = _weights(log)
    var = 0.0
    for mask in (~log.male, log.male):
        qualified = mask & log.repaid
        m = int(qualified.sum())
        if m == 0:
            raise UndefinedMetricError("a gender has no repaid applications")
        rate = float(w[qualified].mean())
        ids = log.applicant_index[qualified]
        resid = w[qualified] - rate
        order = np.argsort(ids, kind="stable")
        sums = np.add.reduceat(
            resid[order], np.searchsorted(ids[order], np.unique(ids[order]))
        )
        var += float(np.sum(sums ** 2)) / m ** 2
    return float(np.sqrt(var))


def approval_rate_by_gender(log: DecisionLog) -> Dict[str, float]:
    w = _weights(log)
    out = {}
    for name, mask in (("female", ~log.male), ("male", log.male)):
        out[name] = float(w[mask].mean()) if mask.any() else float("nan")
    return out


def expected_profit(log: DecisionLog) -> float:
    """Sum of approval weight times each loan's realized profit."""
    return float(np.dot(_weights(log), log.realized_profit))


@dataclass(frozen=True)
class CohortStats:
    """Expected composition of approved users at one application index."""

    t: int
    expected_user_count: float
    expected_female_count: float
    mean_housing: float
    mean_dpi: float
    mean_education: float
    mean_income: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "t": self.t,
            "expected_user_count": self.expected_user_count,
            "expected_female_count": self.expected_female_count,
            "mean_housing": self.mean_housing,
            "mean_dpi": self.mean_dpi,
            "mean_education": self.mean_education,
            "mean_income": self.mean_income,
        }


def expected_cohort_stats(log: DecisionLog, dataset) -> List[CohortStats]:
    """Survival-weighted cohort composition per application index.

    An applicant reaches index t only if every application up to t was
    approved, so their weight at t is the product of approval weights
    through t; covariate means are taken under those weights.
    """
    w = _weights(log)
    n = dataset.n_applicants
    T = int(log.t.max()) if len(log) else 0
    cols = {name: k for k, name in enumerate(dataset.covariate_names)}
    missing = [c for c in ("housing", "dpi", "education", "income") if c not in cols]
    if missing:
        raise DataError("dataset lacks covariates needed for cohort stats: %s"
                        % ", ".join(missing))

    survival = np.ones(n)
    out: List[CohortStats] = []
    for t in range(1, T + 1):
        at_t = log.t == t
        idx = log.applicant_index[at_t]
        weight_t = survival[idx] * w[at_t]
        survival[idx] = weight_t
        total = float(weight_t.sum())
        female = float(weight_t[~log.male[at_t]].sum())

        def wmean(col: str) -> float:
            if total == 0.0:
                return float("nan")
            return float(np.dot(weight_t, dataset.X[idx, cols[col]]) / total)

        out.append(
            CohortStats(
                t=t,
                expected_user_count=total,
                expected_female_count=female,
                mean_housing=wmean("housing"),
                mean_dpi=wmean("dpi"),
                mean_education=wmean("education"),
                mean_income=wmean("income"),
            )
        )
    return out
