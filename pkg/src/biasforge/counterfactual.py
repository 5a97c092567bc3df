"""De-biasing scenario grid over a full-sample dataset.

Four evaluator variants are compared: the fitted baseline, the same
parameters with the taste penalty zeroed, with the prior gender shift
zeroed, and with both zeroed.  Each variant replays the full sample and is
scored on expected profit and equal-opportunity gaps, overall and split by
new (first application) versus repeated applicants.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Tuple

import numpy as np

from .core import ModelParams
from .metrics import (
    approval_rate_by_gender,
    expected_profit,
    tpr_by_gender,
    tpr_gap,
    tpr_gap_se,
)
from .runtime import worker_count
from .world import DecisionLog, DecisionMode, FullSampleDataset, simulate_decisions

SEGMENTS = ("all", "new_only", "repeated_only")

GRID_CELLS: Dict[str, Tuple[bool, bool]] = {
    "baseline": (False, False),
    "pref0": (True, False),
    "belief0": (False, True),
    "both0": (True, True),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Which bias parameters to zero out before replaying decisions."""

    base_params: ModelParams
    zero_pref_bias: bool = False
    zero_belief_bias: bool = False
    segments: Tuple[str, ...] = SEGMENTS

    def __post_init__(self) -> None:
        bad = set(self.segments) - set(SEGMENTS)
        if bad:
            raise ValueError("unknown segments: %s" % ", ".join(sorted(bad)))


def apply_scenario(config: ScenarioConfig) -> ModelParams:
    """Base parameters with exactly the flagged bias fields zeroed."""
    params = config.base_params
    kwargs = {}
    if config.zero_pref_bias:
        kwargs["pref_bias_male"] = 0.0
    if config.zero_belief_bias:
        kwargs["beta_male"] = 0.0
    return replace(params, **kwargs) if kwargs else params


@dataclass(frozen=True)
class SegmentMetrics:
    n_applications: int
    expected_profit: float
    tpr_by_gender: Dict[str, float]
    tpr_gap: float
    tpr_gap_se: float
    approval_rate_by_gender: Dict[str, float]

    def to_dict(self) -> Dict[str, object]:
        return {
            "n_applications": self.n_applications,
            "expected_profit": self.expected_profit,
            "tpr_by_gender": dict(self.tpr_by_gender),
            "tpr_gap": self.tpr_gap,
            "tpr_gap_se": self.tpr_gap_se,
            "approval_rate_by_gender": dict(self.approval_rate_by_gender),
        }


@dataclass(frozen=True)
class ScenarioReport:
    """Metric bundle for one scenario; top-level fields mirror the 'all'
    segment, with per-segment copies alongside."""

    zero_pref_bias: bool
    zero_belief_bias: bool
    decision_maker: str
    expected_profit: float
    tpr_by_gender: Dict[str, float]
    tpr_gap: float
    tpr_gap_se: float
    approval_rate_by_gender: Dict[str, float]
    segments: Dict[str, SegmentMetrics]

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "scenario": {
                "zero_pref_bias": self.zero_pref_bias,
                "zero_belief_bias": self.zero_belief_bias,
            },
            "decision_maker": self.decision_maker,
            "expected_profit": self.expected_profit,
            "tpr_by_gender": dict(self.tpr_by_gender),
            "tpr_gap": self.tpr_gap,
            "tpr_gap_se": self.tpr_gap_se,
            "approval_rate_by_gender": dict(self.approval_rate_by_gender),
            "segments": {k: v.to_dict() for k, v in self.segments.items()},
        }


def _segment_mask(log: DecisionLog, segment: str) -> np.ndarray:
    if segment == "all":
        return np.ones(len(log), dtype=bool)
    if segment == "new_only":
        return log.t == 1
    return log.t > 1


def slice_log(log: DecisionLog, mask: np.ndarray) -> DecisionLog:
    return DecisionLog(
        mode=log.mode,
        applicant_index=log.applicant_index[mask],
        applicant_id=log.applicant_id[mask],
        t=log.t[mask],
        male=log.male[mask],
        belief_mean=log.belief_mean[mask],
        approval_prob=log.approval_prob[mask],
        approved=None if log.approved is None else log.approved[mask],
        repaid=log.repaid[mask],
        realized_profit=log.realized_profit[mask],
    )


def _segment_metrics(log: DecisionLog) -> SegmentMetrics:
    return SegmentMetrics(
        n_applications=len(log),
        expected_profit=expected_profit(log),
        tpr_by_gender=tpr_by_gender(log),
        tpr_gap=tpr_gap(log),
        tpr_gap_se=tpr_gap_se(log),
        approval_rate_by_gender=approval_rate_by_gender(log),
    )


def report_from_log(
    log: DecisionLog,
    zero_pref_bias: bool = False,
    zero_belief_bias: bool = False,
    decision_maker: str = "human",
    segments: Tuple[str, ...] = SEGMENTS,
) -> ScenarioReport:
    """Metric bundle for any decision log (human replay or machine audit)."""
    seg_metrics = {
        seg: _segment_metrics(slice_log(log, _segment_mask(log, seg)))
        for seg in segments
    }
    top = seg_metrics.get("all") or _segment_metrics(log)
    return ScenarioReport(
        zero_pref_bias=zero_pref_bias,
        zero_belief_bias=zero_belief_bias,
        decision_maker=decision_maker,
        expected_profit=top.expected_profit,
        tpr_by_gender=top.tpr_by_gender,
        tpr_gap=top.tpr_gap,
        tpr_gap_se=top.tpr_gap_se,
        approval_rate_by_gender=top.approval_rate_by_gender,
        segments=seg_metrics,
    )


def run_scenario(
    dataset: FullSampleDataset,
    config: ScenarioConfig,
    sampled_decisions: bool = False,
    seed: int = 0,
) -> ScenarioReport:
    """Replay the full sample under the scenario's parameters and score it.

    By default approvals are probability-weighted (low-variance expected
    metrics); ``sampled_decisions=True`` draws hard approve/reject instead.
    """
    params = apply_scenario(config)
    mode = DecisionMode.SAMPLE_DECISIONS if sampled_decisions else DecisionMode.KEEP_PROBABILITIES
    log = simulate_decisions(dataset, params, mode, seed=seed)
    return report_from_log(
        log,
        zero_pref_bias=config.zero_pref_bias,
        zero_belief_bias=config.zero_belief_bias,
        decision_maker="human",
        segments=config.segments,
    )


def scenario_grid(
    dataset: FullSampleDataset,
    base_params: ModelParams,
    sampled_decisions: bool = False,
    seed: int = 0,
) -> Dict[str, ScenarioReport]:
    """All four de-biasing cells, keyed baseline/pref0/belief0/both0."""

    def run_cell(cell: str) -> ScenarioReport:
        pref, belief = GRID_CELLS[cell]
        cfg = ScenarioConfig(
            base_params=base_params, zero_pref_bias=pref, zero_belief_bias=belief
        )
        return run_scenario(dataset, cfg, sampled_decisions=sampled_decisions, seed=seed)

    cells = list(GRID_CELLS)
    with ThreadPoolExecutor(max_workers=min(worker_count(), len(cells))) as pool:
        reports = list(pool.map(run_cell, cells))
    return dict(zip(cells, reports))


def grid_to_rows(grid: Dict[str, ScenarioReport]) -> List[Dict[str, object]]:
    """Flatten a grid into one row per scenario and segment (CSV-ready)."""
    rows = []
    for cell in GRID_CELLS:
        report = grid[cell]
        for seg_name, seg in report.segments.items():
            rows.append(
                {
                    "scenario": cell,
                    "segment": seg_name,
                    "decision_maker": report.decision_maker,
                    "n_applications": seg.n_applications,
                    "expected_profit": seg.expected_profit,
                    "tpr_female": seg.tpr_by_gender["female"],
                    "tpr_male": seg.tpr_by_gender["male"],
                    "tpr_gap": seg.tpr_gap,
                    "tpr_gap_se": seg.tpr_gap_se,
                    "approval_rate_female": seg.approval_rate_by_gender["female"],
                    "approval_rate_male": seg.approval_rate_by_gender["male"],
                }
            )
    return rows
