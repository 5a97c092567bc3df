"""File formats: CSV dataset schemas, parameter and config JSON, manifests.

All emitters are deterministic: fixed column orders, shortest round-trip
float formatting, sorted JSON keys, LF newlines, UTF-8.  Reruns with the
same inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import (
    ChoiceShock,
    Gender,
    ModelParams,
    SignalMap,
    SignalTransform,
    Updater,
    reference_params,
)
from .estimation import EstimationConfig, EstimationData, OptimizerKind, SeMethod
from .exceptions import ConfigurationError, DataError
from .metrics import CohortStats
from .world import (
    Dist,
    FullSampleDataset,
    ReapplicationSpec,
    TermsSpec,
    WorldConfig,
)

APPLICANTS_CSV = "applicants.csv"
LOANS_CSV = "loans.csv"
SIGNALS_CSV = "signals.csv"
OUTCOMES_CSV = "outcomes.csv"
DECISIONS_CSV = "decisions.csv"

APPLICANT_COLUMNS = ["id", "gender", "first_app_month", "housing", "education",
                     "income", "dpi"]
LOAN_COLUMNS = ["applicant_id", "t", "amount", "term_months", "annual_rate", "a", "b"]
SIGNAL_COLUMNS = ["applicant_id", "t", "overdue_days", "overdue_frac",
                  "attitude_frac", "help_frac"]
OUTCOME_COLUMNS = ["applicant_id", "t", "outcome", "realized_profit"]
DECISION_COLUMNS = ["applicant_id", "t", "approved"]

CSV_COVARIATES = ["first_app_month", "housing", "education", "income", "dpi"]


def _fmt(x) -> str:
    """Shortest round-trip decimal form; integers stay integral."""
    f = float(x)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


# ---------------------------------------------------------------------------
# JSON helpers, hashing, manifests
# ---------------------------------------------------------------------------


def canonical_json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json_bytes(obj)).hexdigest()


def dump_json(path: Path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path: Path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError("invalid JSON in %s: %s" % (path, exc)) from None


TOOL_VERSION = "biasforge 0.1.0"


def build_manifest(
    command: str,
    effective_config,
    seed: Optional[int],
    inputs: Mapping[str, str],
    outputs: Sequence[str],
    wall_time: float,
) -> Dict[str, object]:
    return {
        "command": command,
        "config_hash": config_hash(effective_config),
        "seed": seed,
        "tool_version": TOOL_VERSION,
        "inputs": dict(inputs),
        "outputs": sorted(str(p) for p in outputs),
        "wall_time": wall_time,
    }


# ---------------------------------------------------------------------------
# Model parameters <-> JSON
# ---------------------------------------------------------------------------


def params_to_dict(params: ModelParams) -> Dict[str, object]:
    return {
        "preset_version": None,
        "beta": {k: float(v) for k, v in sorted(params.beta.items())},
        "beta_male": params.beta_male,
        "pref_bias_male": params.pref_bias_male,
        "price": params.price,
        "signal_maps": {
            name: {
                "slope": m.slope,
                "intercept": m.intercept,
                "weight": m.weight,
                "transform": m.transform.value,
            }
            for name, m in params.signal_maps.items()
        },
        "sigma_q0": params.sigma_q0,
        "signal_noise_sd": {k: float(v) for k, v in sorted(params.signal_noise_sd.items())},
        "updater": params.updater.value,
        "choice_shock": params.choice_shock.value,
    }


def params_from_dict(d: Mapping[str, object], path: str = "params") -> ModelParams:
    try:
        maps = {}
        for name, m in dict(d["signal_maps"]).items():
            maps[name] = SignalMap(
                slope=float(m["slope"]),
                intercept=float(m["intercept"]),
                weight=float(m["weight"]),
                transform=SignalTransform(m.get("transform", "identity")),
            )
        return ModelParams(
            beta={k: float(v) for k, v in dict(d["beta"]).items()},
            beta_male=float(d["beta_male"]),
            pref_bias_male=float(d["pref_bias_male"]),
            price=float(d["price"]),
            signal_maps=maps,
            sigma_q0=float(d.get("sigma_q0", 1.0)),
            signal_noise_sd={k: float(v) for k, v in dict(d.get("signal_noise_sd", {})).items()},
            updater=Updater(d.get("updater", "weighted_sum")),
            choice_shock=ChoiceShock(d.get("choice_shock", "logistic")),
        )
    except KeyError as missing:
        raise ConfigurationError("config error at %s: missing field %s" % (path, missing))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("config error at %s: %s" % (path, exc))


def reference_params_path() -> Path:
    """Location of the versioned built-in parameter preset file."""
    return Path(__file__).parent / "data" / "params_reference.json"


def default_world_config_path() -> Path:
    return Path(__file__).parent / "data" / "world_default.json"


def load_params(spec, base: str = "params") -> ModelParams:
    """Accepts 'reference', a JSON file path, or an inline mapping."""
    if spec == "reference":
        return reference_params()
    if isinstance(spec, Mapping):
        return params_from_dict(spec, base)
    p = Path(spec)
    if not p.exists():
        raise ConfigurationError("params file not found: %s" % p)
    return params_from_dict(load_json(p), str(p))


# ---------------------------------------------------------------------------
# World config <-> JSON
# ---------------------------------------------------------------------------


def world_config_from_dict(d: Mapping[str, object], path: str = "world") -> WorldConfig:
    def need(key, caster=lambda x: x):
        if key not in d:
            raise ConfigurationError("config error at %s.%s: field is required" % (path, key))
        try:
            return caster(d[key])
        except (TypeError, ValueError) as exc:
            raise ConfigurationError("config error at %s.%s: %s" % (path, key, exc))

    kwargs: Dict[str, object] = {"n_applicants": need("n_applicants", int)}
    if "seed" in d:
        kwargs["seed"] = int(d["seed"])
    for key, caster in (
        ("max_applications", int), ("female_share", float),
        ("true_gamma_male", float), ("true_quality_sd", float),
        ("outcome_noise", str),
    ):
        if key in d:
            kwargs[key] = caster(d[key])
    if "covariates" in d:
        kwargs["covariates"] = {
            name: Dist.from_dict(spec, "%s.covariates.%s" % (path, name))
            for name, spec in dict(d["covariates"]).items()
        }
    if "true_beta" in d:
        kwargs["true_beta"] = {k: float(v) for k, v in dict(d["true_beta"]).items()}
    if "reapplication" in d:
        r = dict(d["reapplication"])
        kwargs["reapplication"] = ReapplicationSpec(
            approved_repaid=float(r.get("approved_repaid", 0.65)),
            approved_defaulted=float(r.get("approved_defaulted", 0.0)),
            rejected=float(r.get("rejected", 0.0)),
        )
    if "terms" in d:
        t = dict(d["terms"])
        tkw = {}
        for key in ("amount", "term_months", "annual_rate"):
            if key in t:
                tkw[key] = Dist.from_dict(t[key], "%s.terms.%s" % (path, key))
        if "loss_rate" in t:
            tkw["loss_rate"] = float(t["loss_rate"])
        kwargs["terms"] = TermsSpec(**tkw)
    if "signal_maps" in d:
        maps = {}
        for name, m in dict(d["signal_maps"]).items():
            maps[name] = SignalMap(
                slope=float(m["slope"]), intercept=float(m["intercept"]),
                weight=float(m.get("weight", 0.0)),
                transform=SignalTransform(m.get("transform", "identity")),
            )
        kwargs["signal_maps"] = maps
    if "signal_noise_sd" in d:
        kwargs["signal_noise_sd"] = {
            k: float(v) for k, v in dict(d["signal_noise_sd"]).items()
        }
    return WorldConfig(**kwargs)


def world_config_to_dict(cfg: WorldConfig) -> Dict[str, object]:
    return {
        "n_applicants": cfg.n_applicants,
        "seed": cfg.seed,
        "max_applications": cfg.max_applications,
        "female_share": cfg.female_share,
        "covariates": {k: v.to_dict() for k, v in sorted(cfg.covariates.items())},
        "true_beta": {k: float(v) for k, v in sorted(cfg.true_beta.items())},
        "true_gamma_male": cfg.true_gamma_male,
        "true_quality_sd": cfg.true_quality_sd,
        "outcome_noise": cfg.outcome_noise,
        "reapplication": {
            "approved_repaid": cfg.reapplication.approved_repaid,
            "approved_defaulted": cfg.reapplication.approved_defaulted,
            "rejected": cfg.reapplication.rejected,
        },
        "terms": {
            "amount": cfg.terms.amount.to_dict(),
            "term_months": cfg.terms.term_months.to_dict(),
            "annual_rate": cfg.terms.annual_rate.to_dict(),
            "loss_rate": cfg.terms.loss_rate,
        },
        "signal_maps": {
            name: {"slope": m.slope, "intercept": m.intercept, "weight": m.weight,
                   "transform": m.transform.value}
            for name, m in sorted(cfg.signal_maps.items())
        },
        "signal_noise_sd": {k: float(v) for k, v in sorted(cfg.signal_noise_sd.items())},
    }


# ---------------------------------------------------------------------------
# Estimation config
# ---------------------------------------------------------------------------


def estimation_config_from_dict(d: Mapping[str, object], path: str = "estimation") -> EstimationConfig:
    initial = load_params(d.get("initial_params", "reference"),
                          "%s.initial_params" % path)
    free = d.get("free_params")
    policy = d.get("transform_policy")
    try:
        return EstimationConfig(
            initial_params=initial,
            free_params=None if free is None else set(map(str, free)),
            transform_policy=None if policy is None else {
                str(k): str(v) for k, v in dict(policy).items()
            },
            optimizer=OptimizerKind(d.get("optimizer", "quasi_newton")),
            max_iters=int(d.get("max_iters", 400)),
            tol=float(d.get("tol", 1e-7)),
            se_method=SeMethod(d.get("se_method", "hessian_inverse")),
            multistart=int(d.get("multistart", 5)),
            seed=int(d.get("seed", 0)),
        )
    except ValueError as exc:
        raise ConfigurationError("config error at %s: %s" % (path, exc))


# ---------------------------------------------------------------------------
# Dataset CSV writers
# ---------------------------------------------------------------------------


def _open_writer(path: Path):
    fh = open(path, "w", encoding="utf-8", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def write_dataset(dataset: FullSampleDataset, out_dir: Path) -> List[Path]:
    """Write applicants/loans/signals/outcomes CSVs in canonical order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    missing = [c for c in CSV_COVARIATES if c not in dataset.covariate_names]
    if missing:
        raise ConfigurationError(
            "dataset covariates do not match the CSV schema; missing: %s"
            % ", ".join(missing)
        )
    col_idx = {c: dataset.covariate_names.index(c) for c in CSV_COVARIATES}
    paths = []

    p = out_dir / APPLICANTS_CSV
    fh, w = _open_writer(p)
    with fh:
        w.writerow(APPLICANT_COLUMNS)
        for i in range(dataset.n_applicants):
            row = [str(int(dataset.applicant_ids[i])),
                   "male" if dataset.male[i] else "female"]
            row += [_fmt(dataset.X[i, col_idx[c]]) for c in CSV_COVARIATES]
            w.writerow(row)
    paths.append(p)

    idx_i, idx_t = np.nonzero(dataset.present)

    p = out_dir / LOANS_CSV
    fh, w = _open_writer(p)
    with fh:
        w.writerow(LOAN_COLUMNS)
        for i, t in zip(idx_i, idx_t):
            w.writerow([
                str(int(dataset.applicant_ids[i])), str(t + 1),
                _fmt(dataset.amount[i, t]), _fmt(dataset.term_months[i, t]),
                _fmt(dataset.annual_rate[i, t]), _fmt(dataset.gain[i, t]),
                _fmt(dataset.loss[i, t]),
            ])
    paths.append(p)

    p = out_dir / SIGNALS_CSV
    fh, w = _open_writer(p)
    with fh:
        w.writerow(SIGNAL_COLUMNS)
        for i, t in zip(idx_i, idx_t):
            w.writerow([
                str(int(dataset.applicant_ids[i])), str(t + 1),
                _fmt(dataset.overdue_days[i, t]), _fmt(dataset.overdue_frac[i, t]),
                _fmt(dataset.attitude_frac[i, t]), _fmt(dataset.help_frac[i, t]),
            ])
    paths.append(p)

    p = out_dir / OUTCOMES_CSV
    fh, w = _open_writer(p)
    with fh:
        w.writerow(OUTCOME_COLUMNS)
        for i, t in zip(idx_i, idx_t):
            w.writerow([
                str(int(dataset.applicant_ids[i])), str(t + 1),
                "repaid" if dataset.repaid[i, t] else "defaulted",
                _fmt(dataset.profit[i, t]),
            ])
    paths.append(p)
    return paths


def write_decisions(log, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if log.approved is None:
        raise DataError("decision log has no sampled decisions to write")
    p = out_dir / DECISIONS_CSV
    fh, w = _open_writer(p)
    with fh:
        w.writerow(DECISION_COLUMNS)
        for j in range(len(log)):
            w.writerow([str(int(log.applicant_id[j])), str(int(log.t[j])),
                        "1" if log.approved[j] else "0"])
    return p


# ---------------------------------------------------------------------------
# Dataset CSV readers
# ---------------------------------------------------------------------------


def _read_rows(path: Path, expected_header: List[str]):
    if not path.exists():
        raise DataError("missing data file: %s" % path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("%s: empty file" % path) from None
        if header != expected_header:
            raise DataError(
                "%s: header mismatch; expected %s" % (path, ",".join(expected_header))
            )
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(expected_header):
                raise DataError("%s:%d: expected %d fields, got %d"
                                % (path, lineno, len(expected_header), len(row)))
            yield lineno, row


def _parse_float(path, lineno, name, raw) -> float:
    try:
        return float(raw)
    except ValueError:
        raise DataError("%s:%d: field %r is not a number: %r"
                        % (path, lineno, name, raw)) from None


def read_dataset(data_dir: Path, require_signals: bool = True) -> FullSampleDataset:
    """Assemble a dataset from the CSV schema files.

    ``require_signals=False`` permits estimation inputs where signals of
    never-approved loans are unobserved (rows simply absent).
    """
    data_dir = Path(data_dir)
    ids: List[int] = []
    genders: List[bool] = []
    covs: List[List[float]] = []
    path = data_dir / APPLICANTS_CSV
    for lineno, row in _read_rows(path, APPLICANT_COLUMNS):
        ids.append(int(_parse_float(path, lineno, "id", row[0])))
        if row[1] not in ("male", "female"):
            raise DataError("%s:%d: gender must be male or female" % (path, lineno))
        genders.append(row[1] == "male")
        covs.append([_parse_float(path, lineno, c, row[2 + k])
                     for k, c in enumerate(CSV_COVARIATES)])
    if not ids:
        raise DataError("%s: no applicants" % path)
    applicant_ids = np.array(ids, dtype=np.int64)
    order = np.argsort(applicant_ids, kind="stable")
    applicant_ids = applicant_ids[order]
    male = np.array(genders, dtype=bool)[order]
    cov_arr = np.array(covs, dtype=np.float64)[order]
    row_of = {int(a): k for k, a in enumerate(applicant_ids)}
    if len(row_of) != len(ids):
        raise DataError("%s: duplicate applicant ids" % path)

    covariate_names = ["constant"] + sorted(CSV_COVARIATES)
    n = len(ids)
    X = np.ones((n, len(covariate_names)))
    for k, c in enumerate(CSV_COVARIATES):
        X[:, covariate_names.index(c)] = cov_arr[:, k]

    loans: Dict[Tuple[int, int], List[float]] = {}
    path = data_dir / LOANS_CSV
    max_t = 0
    for lineno, row in _read_rows(path, LOAN_COLUMNS):
        a = int(_parse_float(path, lineno, "applicant_id", row[0]))
        t = int(_parse_float(path, lineno, "t", row[1]))
        if a not in row_of:
            raise DataError("%s:%d: unknown applicant_id %d" % (path, lineno, a))
        if t < 1:
            raise DataError("%s:%d: t must be >= 1" % (path, lineno))
        key = (a, t)
        if key in loans:
            raise DataError("%s:%d: duplicate loan (%d, %d)" % (path, lineno, a, t))
        loans[key] = [_parse_float(path, lineno, c, row[2 + k])
                      for k, c in enumerate(LOAN_COLUMNS[2:])]
        max_t = max(max_t, t)
    if not loans:
        raise DataError("%s: no loans" % path)

    T = max_t
    shape = (n, T)
    present = np.zeros(shape, dtype=bool)
    amount = np.zeros(shape)
    term_months = np.zeros(shape)
    annual_rate = np.zeros(shape)
    gain = np.zeros(shape)
    loss = np.zeros(shape)
    for (a, t), vals in loans.items():
        i = row_of[a]
        present[i, t - 1] = True
        amount[i, t - 1], term_months[i, t - 1], annual_rate[i, t - 1] = vals[0:3]
        gain[i, t - 1], loss[i, t - 1] = vals[3:5]
    gaps = ~present[:, :-1] & present[:, 1:] if T > 1 else np.zeros((n, 0), dtype=bool)
    if gaps.any():
        i = int(np.nonzero(gaps.any(axis=1))[0][0])
        raise DataError("loans.csv: application index gap for applicant %d"
                        % int(applicant_ids[i]))

    fill = np.nan if not require_signals else 0.0
    overdue_days = np.full(shape, fill)
    overdue_frac = np.full(shape, fill)
    attitude_frac = np.full(shape, fill)
    help_frac = np.full(shape, fill)
    seen_signals = np.zeros(shape, dtype=bool)
    path = data_dir / SIGNALS_CSV
    for lineno, row in _read_rows(path, SIGNAL_COLUMNS):
        a = int(_parse_float(path, lineno, "applicant_id", row[0]))
        t = int(_parse_float(path, lineno, "t", row[1]))
        if (a, t) not in loans:
            raise DataError("%s:%d: signals for unknown loan (%d, %d)"
                            % (path, lineno, a, t))
        i = row_of[a]
        overdue_days[i, t - 1] = _parse_float(path, lineno, "overdue_days", row[2])
        overdue_frac[i, t - 1] = _parse_float(path, lineno, "overdue_frac", row[3])
        attitude_frac[i, t - 1] = _parse_float(path, lineno, "attitude_frac", row[4])
        help_frac[i, t - 1] = _parse_float(path, lineno, "help_frac", row[5])
        seen_signals[i, t - 1] = True
    if require_signals and (present & ~seen_signals).any():
        raise DataError("signals.csv: missing signals for some loans")
    if not require_signals:
        unseen = present & ~seen_signals
        overdue_days[unseen] = np.nan
        overdue_frac[unseen] = np.nan
        attitude_frac[unseen] = np.nan
        help_frac[unseen] = np.nan
    blank = ~present
    for arr in (overdue_days, overdue_frac, attitude_frac, help_frac):
        arr[blank] = 0.0

    repaid = np.zeros(shape, dtype=bool)
    profit = np.zeros(shape)
    seen_outcome = np.zeros(shape, dtype=bool)
    path = data_dir / OUTCOMES_CSV
    for lineno, row in _read_rows(path, OUTCOME_COLUMNS):
        a = int(_parse_float(path, lineno, "applicant_id", row[0]))
        t = int(_parse_float(path, lineno, "t", row[1]))
        if (a, t) not in loans:
            raise DataError("%s:%d: outcome for unknown loan (%d, %d)"
                            % (path, lineno, a, t))
        if row[2] not in ("repaid", "defaulted"):
            raise DataError("%s:%d: outcome must be repaid or defaulted" % (path, lineno))
        i = row_of[a]
        repaid[i, t - 1] = row[2] == "repaid"
        profit[i, t - 1] = _parse_float(path, lineno, "realized_profit", row[3])
        seen_outcome[i, t - 1] = True
    if (present & ~seen_outcome).any():
        raise DataError("outcomes.csv: missing outcomes for some loans")

    return FullSampleDataset(
        covariate_names=covariate_names,
        applicant_ids=applicant_ids,
        X=X,
        male=male,
        true_quality=np.full(n, np.nan),
        present=present,
        amount=amount,
        term_months=term_months,
        annual_rate=annual_rate,
        gain=gain,
        loss=loss,
        overdue_days=overdue_days,
        overdue_frac=overdue_frac,
        attitude_frac=attitude_frac,
        help_frac=help_frac,
        repaid=repaid,
        profit=profit,
    )


def read_estimation_data(data_dir: Path) -> EstimationData:
    """Decision log plus covariates/terms/signals for likelihood work."""
    data_dir = Path(data_dir)
    dataset = read_dataset(data_dir, require_signals=False)
    approved = np.zeros(dataset.present.shape, dtype=bool)
    seen = np.zeros(dataset.present.shape, dtype=bool)
    row_of = {int(a): k for k, a in enumerate(dataset.applicant_ids)}
    path = data_dir / DECISIONS_CSV
    for lineno, row in _read_rows(path, DECISION_COLUMNS):
        a = int(_parse_float(path, lineno, "applicant_id", row[0]))
        t = int(_parse_float(path, lineno, "t", row[1]))
        if a not in row_of or t < 1 or t > dataset.present.shape[1] \
                or not dataset.present[row_of[a], t - 1]:
            raise DataError("%s:%d: decision for unknown application (%d, %d)"
                            % (path, lineno, a, t))
        if row[2] not in ("0", "1"):
            raise DataError("%s:%d: approved must be 0 or 1" % (path, lineno))
        approved[row_of[a], t - 1] = row[2] == "1"
        seen[row_of[a], t - 1] = True
    if (dataset.present & ~seen).any():
        raise DataError("decisions.csv: missing decision rows for some applications")
    if dataset.n_applications == 0:
        raise DataError("decision log is empty")
    return EstimationData(
        covariate_names=dataset.covariate_names,
        X=dataset.X,
        male=dataset.male,
        present=dataset.present,
        approved=approved,
        gain=dataset.gain,
        loss=dataset.loss,
        overdue_days=dataset.overdue_days,
        overdue_frac=dataset.overdue_frac,
        attitude_frac=dataset.attitude_frac,
        help_frac=dataset.help_frac,
    )


# ---------------------------------------------------------------------------
# Report emitters
# ---------------------------------------------------------------------------


def write_grid_csv(rows: Iterable[Mapping[str, object]], path: Path) -> None:
    rows = list(rows)
    if not rows:
        raise DataError("no rows to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh, w = _open_writer(path)
    with fh:
        header = list(rows[0])
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[c]) if isinstance(r[c], (int, float)) and not isinstance(r[c], bool)
                        else str(r[c]) for c in header])


def write_cohort_stats_csv(stats: Sequence[CohortStats], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh, w = _open_writer(path)
    with fh:
        cols = ["t", "expected_user_count", "expected_female_count",
                "mean_housing", "mean_dpi", "mean_education", "mean_income"]
        w.writerow(cols)
        for s in stats:
            d = s.to_dict()
            w.writerow([_fmt(d[c]) for c in cols])
