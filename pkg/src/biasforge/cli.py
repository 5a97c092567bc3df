"""Command-line operator surface.

Subcommands wire generation, estimation, counterfactual grids and ML
audits together with file persistence and run manifests.

Exit codes are a stable contract: 0 success, 2 config or data error,
3 I/O failure, 4 estimator non-convergence (report still written),
5 degenerate training data.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

from . import io as bio
from .audit import AuditConfig, DecisionRule, DecisionRuleKind, Imputation, LearnerKind, audit
from .boosting import BoostConfig
from .counterfactual import (
    GRID_CELLS,
    ScenarioConfig,
    grid_to_rows,
    run_scenario,
    scenario_grid,
)
from .estimation import fit
from .exceptions import (
    BiasforgeError,
    ConfigurationError,
    DataError,
    DegenerateDataError,
    NumericalError,
    ParameterDomainError,
    SingularityError,
    UndefinedMetricError,
)
from .metrics import expected_cohort_stats
from .world import DecisionMode, simulate_decisions, simulate_full_sample

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NONCONVERGENCE = 4
EXIT_DEGENERATE = 5

_LOCK_NAME = ".biasforge.lock"


class _OutDirLock:
    """Advisory lock against concurrent writers in one output directory."""

    def __init__(self, directory: Path):
        self.path = Path(directory) / _LOCK_NAME
        self.fd: Optional[int] = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OSError(
                "output directory is locked by another run: %s" % self.path
            ) from None
        return self

    def __exit__(self, *exc):
        if self.fd is not None:
            os.close(self.fd)
        try:
            os.unlink(self.path)
        except OSError:
            pass
        return False


def _manifest_path(out: Path) -> Path:
    return Path(str(out) + ".manifest.json")


def cmd_generate(args) -> int:
    start = time.time()
    config = bio.load_json(Path(args.config))
    if not isinstance(config, dict) or "world" not in config:
        raise ConfigurationError("config error at world: field is required")
    if args.seed is not None:
        config.setdefault("world", {})["seed"] = args.seed
        if "decisions" in config:
            config["decisions"]["seed"] = args.seed
    world_cfg = bio.world_config_from_dict(config["world"])
    out_dir = Path(args.out_dir)
    with _OutDirLock(out_dir):
        dataset = simulate_full_sample(world_cfg)
        outputs = bio.write_dataset(dataset, out_dir)
        if "decisions" in config:
            dec = config["decisions"]
            params = bio.load_params(dec.get("params", "reference"), "decisions.params")
            log = simulate_decisions(
                dataset, params, DecisionMode.SAMPLE_DECISIONS,
                seed=int(dec.get("seed", world_cfg.seed)),
            )
            outputs.append(bio.write_decisions(log, out_dir))
        effective = {"world": bio.world_config_to_dict(world_cfg),
                     "decisions": config.get("decisions")}
        manifest = bio.build_manifest(
            command="generate",
            effective_config=effective,
            seed=world_cfg.seed,
            inputs={"config": str(args.config)},
            outputs=[str(p) for p in outputs],
            wall_time=time.time() - start,
        )
        bio.dump_json(out_dir / "manifest.json", manifest)
    return EXIT_OK


def cmd_estimate(args) -> int:
    start = time.time()
    raw = bio.load_json(Path(args.config)) if args.config else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    config = bio.estimation_config_from_dict(raw)
    data = bio.read_estimation_data(Path(args.data_dir))
    report = fit(data, config)
    out = Path(args.out)
    bio.dump_json(out, report.to_json_dict())
    manifest = bio.build_manifest(
        command="estimate",
        effective_config=raw,
        seed=config.seed,
        inputs={"data_dir": str(args.data_dir),
                "config": str(args.config) if args.config else ""},
        outputs=[str(out)],
        wall_time=time.time() - start,
    )
    bio.dump_json(_manifest_path(out), manifest)
    if not report.converged:
        print("estimation did not converge (gradient norm %.3g); report written to %s"
              % (report.gradient_norm_at_optimum, out), file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_counterfact(args) -> int:
    start = time.time()
    params = bio.load_params(args.params)
    dataset = bio.read_dataset(Path(args.data_dir), require_signals=True)
    out = Path(args.out)
    scenario = args.scenario
    if scenario == "grid":
        grid = scenario_grid(dataset, params)
        payload = {cell: grid[cell].to_json_dict() for cell in GRID_CELLS}
        rows = grid_to_rows(grid)
    else:
        pref, belief = GRID_CELLS[scenario]
        report = run_scenario(
            dataset,
            ScenarioConfig(base_params=params, zero_pref_bias=pref,
                           zero_belief_bias=belief),
        )
        payload = report.to_json_dict()
        rows = _single_rows(scenario, report)
    bio.dump_json(out, payload)
    csv_path = out.with_suffix(".csv")
    bio.write_grid_csv(rows, csv_path)
    outputs = [str(out), str(csv_path)]
    if args.cohort_stats:
        log = simulate_decisions(dataset, params, DecisionMode.KEEP_PROBABILITIES)
        stats = expected_cohort_stats(log, dataset)
        bio.write_cohort_stats_csv(stats, Path(args.cohort_stats))
        outputs.append(str(args.cohort_stats))
    manifest = bio.build_manifest(
        command="counterfact",
        effective_config={"scenario": scenario, "params": bio.params_to_dict(params)},
        seed=None,
        inputs={"data_dir": str(args.data_dir), "params": str(args.params)},
        outputs=outputs,
        wall_time=time.time() - start,
    )
    bio.dump_json(_manifest_path(out), manifest)
    return EXIT_OK


def _single_rows(name: str, report) -> List[Dict[str, object]]:
    rows = []
    for seg_name, seg in report.segments.items():
        rows.append({
            "scenario": name,
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
        })
    return rows


def _audit_config_from_dict(d, base_params) -> AuditConfig:
    scen = dict(d.get("scenario", {}))
    scenario = ScenarioConfig(
        base_params=base_params,
        zero_pref_bias=bool(scen.get("zero_pref_bias", False)),
        zero_belief_bias=bool(scen.get("zero_belief_bias", False)),
    )
    hp = dict(d.get("learner_hyperparams", {}))
    boost = BoostConfig(
        n_rounds=int(hp.get("n_rounds", 100)),
        max_depth=int(hp.get("max_depth", 3)),
        learning_rate=float(hp.get("learning_rate", 0.1)),
        min_leaf=int(hp.get("min_leaf", 20)),
        reg_lambda=float(hp.get("reg_lambda", 1.0)),
        n_bins=int(hp.get("n_bins", 256)),
    )
    rule = dict(d.get("decision_rule", {}))
    try:
        return AuditConfig(
            scenario=scenario,
            imputation=Imputation(d.get("imputation", "nearest_neighbor")),
            k_neighbors=int(d.get("k_neighbors", 1)),
            learner=LearnerKind(d.get("learner", "boosted_trees")),
            learner_hyperparams=boost,
            decision_rule=DecisionRule(
                kind=DecisionRuleKind(rule.get("kind", "profit_threshold")),
                theta=float(rule.get("theta", 0.5)),
            ),
            include_gender=bool(d.get("include_gender", False)),
            include_lagged_signals=bool(d.get("include_lagged_signals", False)),
            seed=int(d.get("seed", 0)),
        )
    except ValueError as exc:
        raise ConfigurationError("config error at audit: %s" % exc)


def cmd_ml_audit(args) -> int:
    start = time.time()
    params = bio.load_params(args.params)
    raw = bio.load_json(Path(args.config)) if args.config else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    config = _audit_config_from_dict(raw, params)
    dataset = bio.read_dataset(Path(args.data_dir), require_signals=True)
    result = audit(dataset, config)
    out = Path(args.out)
    bio.dump_json(out, result.report.to_json_dict())
    model_out = Path(args.model_out) if args.model_out else out.with_name(
        out.stem + ".model.json"
    )
    bio.dump_json(model_out, result.model.to_json_dict())
    manifest = bio.build_manifest(
        command="ml-audit",
        effective_config={"audit": raw, "params": bio.params_to_dict(params)},
        seed=config.seed,
        inputs={"data_dir": str(args.data_dir), "params": str(args.params),
                "config": str(args.config) if args.config else ""},
        outputs=[str(out), str(model_out)],
        wall_time=time.time() - start,
    )
    bio.dump_json(_manifest_path(out), manifest)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biasforge",
        description="Structural lending-bias toolkit: simulate, estimate, "
                    "de-bias, audit.",
    )
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed everywhere")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic full-sample dataset")
    g.add_argument("--config", required=True, help="world config JSON")
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("estimate", help="fit the evaluator model to a decision log")
    e.add_argument("--data-dir", required=True)
    e.add_argument("--config", default=None, help="estimation config JSON")
    e.add_argument("--out", required=True, help="estimate report JSON path")
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("counterfact", help="run de-biasing scenarios")
    c.add_argument("--data-dir", required=True)
    c.add_argument("--params", required=True,
                   help="params JSON path or the literal 'reference'")
    c.add_argument("--out", required=True)
    c.add_argument("--scenario", default="grid",
                   choices=["baseline", "pref0", "belief0", "both0", "grid"])
    c.add_argument("--cohort-stats", default=None,
                   help="optional CSV path for expected cohort composition")
    c.set_defaults(func=cmd_counterfact)

    m = sub.add_parser("ml-audit", help="train a learner on a decision regime "
                                        "and audit inherited bias")
    m.add_argument("--data-dir", required=True)
    m.add_argument("--params", required=True)
    m.add_argument("--config", default=None, help="audit config JSON")
    m.add_argument("--out", required=True)
    m.add_argument("--model-out", default=None)
    m.set_defaults(func=cmd_ml_audit)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigurationError, DataError, ParameterDomainError,
            SingularityError, UndefinedMetricError, NumericalError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateDataError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as exc:
        print("i/o error: %s" % exc, file=sys.stderr)
        return EXIT_IO
    except BiasforgeError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
