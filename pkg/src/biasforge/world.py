"""Synthetic lending worlds with known ground truth.

Generates populations, full-sample application histories (every application
approved, so every loan's true outcome is observed), and replays of the
evaluator model over those histories.

Randomness is drawn from counter-based Philox streams keyed on the config
seed.  Every applicant's history consumes a fixed block of uniforms indexed
by (applicant, application, draw), so generation is reproducible and
independent of worker scheduling; values are produced by inverse-CDF
transforms of those uniforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

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
    reference_params,
)
from .exceptions import ConfigurationError

# Stream ids for the Philox key; keeps sub-streams of one seed disjoint.
_POPULATION_STREAM = 1
_HISTORY_STREAM = 2
_DECISION_STREAM = 3

# Column layout of the per-(applicant, application) uniform block.
_U_AMOUNT, _U_TERM, _U_RATE, _U_D, _U_M, _U_A, _U_H, _U_OUTCOME, _U_REAPPLY = range(9)
_HISTORY_COLS = 9

_UNIFORM_EPS = 1e-12


class Outcome(str, Enum):
    REPAID = "repaid"
    DEFAULTED = "defaulted"


class DecisionMode(str, Enum):
    SAMPLE_DECISIONS = "sample_decisions"
    KEEP_PROBABILITIES = "keep_probabilities"


def stream(seed: int, stream_id: int) -> np.random.Generator:
    """Counter-based generator for one named sub-stream of a seed."""
    key = np.array([seed % 2 ** 64, stream_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _std_normal_from_uniform(u: np.ndarray) -> np.ndarray:
    return ndtri(np.clip(u, _UNIFORM_EPS, 1.0 - _UNIFORM_EPS))


# ---------------------------------------------------------------------------
# Distribution specs
# ---------------------------------------------------------------------------

_DIST_KINDS = ("constant", "uniform", "uniform_int", "normal", "bernoulli", "categorical")


@dataclass(frozen=True)
class Dist:
    """Declarative scalar distribution, sampled by inverse CDF from U(0,1)."""

    kind: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", dict(self.params))
        self._validate()

    def _validate(self) -> None:
        k, p = self.kind, self.params
        if k not in _DIST_KINDS:
            raise ConfigurationError(
                "unknown distribution kind %r (expected one of %s)" % (k, ", ".join(_DIST_KINDS))
            )
        try:
            if k == "constant":
                float(p["value"])
            elif k in ("uniform", "uniform_int"):
                lo, hi = float(p["low"]), float(p["high"])
                if hi < lo:
                    raise ConfigurationError("uniform bounds reversed: [%r, %r]" % (lo, hi))
            elif k == "normal":
                float(p["mean"])
                if float(p["sd"]) < 0:
                    raise ConfigurationError("normal sd must be >= 0")
            elif k == "bernoulli":
                prob = float(p["p"])
                if not 0.0 <= prob <= 1.0:
                    raise ConfigurationError("bernoulli p must lie in [0, 1]")
            elif k == "categorical":
                values = [float(v) for v in p["values"]]
                probs = [float(v) for v in p["probs"]]
                if len(values) != len(probs) or not values:
                    raise ConfigurationError("categorical values/probs must be equal nonzero length")
                if any(q < 0 for q in probs) or abs(sum(probs) - 1.0) > 1e-9:
                    raise ConfigurationError("categorical probs must be >= 0 and sum to 1")
        except KeyError as missing:
            raise ConfigurationError(
                "distribution %r is missing parameter %s" % (k, missing)
            ) from None

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0,1) to draws from this distribution."""
        u = np.asarray(u, dtype=np.float64)
        k, p = self.kind, self.params
        if k == "constant":
            return np.full_like(u, float(p["value"]))
        if k == "uniform":
            lo, hi = float(p["low"]), float(p["high"])
            return lo + u * (hi - lo)
        if k == "uniform_int":
            lo, hi = int(p["low"]), int(p["high"])
            return np.minimum(np.floor(lo + u * (hi - lo + 1)), hi).astype(np.float64)
        if k == "normal":
            return float(p["mean"]) + float(p["sd"]) * _std_normal_from_uniform(u)
        if k == "bernoulli":
            return (u < float(p["p"])).astype(np.float64)
        # categorical
        values = np.asarray([float(v) for v in p["values"]])
        cum = np.cumsum(np.asarray([float(v) for v in p["probs"]]))
        idx = np.minimum(np.searchsorted(cum, u, side="right"), len(values) - 1)
        return values[idx]

    @staticmethod
    def from_dict(d: Mapping[str, object], path: str) -> "Dist":
        if not isinstance(d, Mapping) or "kind" not in d:
            raise ConfigurationError("config error at %s: expected a distribution object with 'kind'" % path)
        params = {k: v for k, v in d.items() if k != "kind"}
        try:
            return Dist(kind=str(d["kind"]), params=params)
        except ConfigurationError as exc:
            raise ConfigurationError("config error at %s: %s" % (path, exc)) from None

    def to_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {"kind": self.kind}
        out.update(self.params)
        return out


# ---------------------------------------------------------------------------
# World configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReapplicationSpec:
    """Probability a borrower files another application, by last-loan status."""

    approved_repaid: float = 0.65
    approved_defaulted: float = 0.0
    rejected: float = 0.0

    def __post_init__(self) -> None:
        for name in ("approved_repaid", "approved_defaulted", "rejected"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError("reapplication.%s must lie in [0, 1]" % name)

    def probability(self, approved: bool, defaulted: bool) -> float:
        if not approved:
            return self.rejected
        return self.approved_defaulted if defaulted else self.approved_repaid


@dataclass(frozen=True)
class TermsSpec:
    """How loan terms are drawn; platform gain is the interest income and
    the loss on default is ``loss_rate`` times the principal."""

    amount: Dist = field(default_factory=lambda: Dist("uniform", {"low": 150.0, "high": 770.0}))
    term_months: Dist = field(default_factory=lambda: Dist("uniform_int", {"low": 3, "high": 8}))
    annual_rate: Dist = field(default_factory=lambda: Dist("uniform", {"low": 0.13, "high": 0.19}))
    loss_rate: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.loss_rate <= 1.0:
            raise ConfigurationError("terms.loss_rate must lie in (0, 1]")


def default_covariate_dists() -> Dict[str, Dist]:
    return {
        "first_app_month": Dist("uniform_int", {"low": 0, "high": 32}),
        "housing": Dist("bernoulli", {"p": 0.17}),
        "education": Dist("categorical", {"values": [1, 2, 3, 4],
                                          "probs": [0.12, 0.55, 0.28, 0.05]}),
        "income": Dist("categorical", {"values": [1, 2, 3, 4, 5, 6, 7],
                                       "probs": [0.16, 0.20, 0.21, 0.16, 0.12, 0.09, 0.06]}),
        "dpi": Dist("uniform", {"low": 0.3, "high": 4.7}),
    }


def default_true_beta() -> Dict[str, float]:
    # Same covariate loadings as the reference evaluator preset, with the
    # intercept lifted so the typical borrower repays ~3 times out of 4.
    beta = dict(reference_params().beta)
    beta["constant"] = 0.3
    return beta


def default_world_signal_maps() -> Dict[str, SignalMap]:
    maps = dict(reference_params().signal_maps)
    maps["M"] = SignalMap(slope=-0.04, intercept=0.10, weight=0.0)
    return maps


def default_signal_noise() -> Dict[str, float]:
    return {"D": 0.5, "M": 0.15, "A": 0.15, "H": 0.15}


@dataclass(frozen=True)
class WorldConfig:
    """Everything needed to generate a synthetic lending world."""

    n_applicants: int
    seed: int = 0
    max_applications: int = 8
    female_share: float = 0.19
    covariates: Mapping[str, Dist] = field(default_factory=default_covariate_dists)
    true_beta: Mapping[str, float] = field(default_factory=default_true_beta)
    true_gamma_male: float = 0.0
    true_quality_sd: float = 1.0
    outcome_noise: str = "bernoulli"
    reapplication: ReapplicationSpec = field(default_factory=ReapplicationSpec)
    terms: TermsSpec = field(default_factory=TermsSpec)
    signal_maps: Mapping[str, SignalMap] = field(default_factory=default_world_signal_maps)
    signal_noise_sd: Mapping[str, float] = field(default_factory=default_signal_noise)

    def __post_init__(self) -> None:
        object.__setattr__(self, "covariates", dict(self.covariates))
        object.__setattr__(self, "true_beta", dict(self.true_beta))
        object.__setattr__(self, "signal_maps", dict(self.signal_maps))
        object.__setattr__(self, "signal_noise_sd", dict(self.signal_noise_sd))
        if self.n_applicants < 1:
            raise ConfigurationError("n_applicants must be >= 1")
        if self.max_applications < 1:
            raise ConfigurationError("max_applications must be >= 1")
        if not 0.0 <= self.female_share <= 1.0:
            raise ConfigurationError("female_share must lie in [0, 1]")
        if self.true_quality_sd <= 0:
            raise ConfigurationError("true_quality_sd must be > 0")
        if self.outcome_noise != "bernoulli":
            raise ConfigurationError("outcome_noise must be 'bernoulli'")
        if "constant" in self.covariates:
            raise ConfigurationError("covariates must not declare 'constant'; it is implicit")
        missing = [n for n in ["constant", *self.covariates] if n not in self.true_beta]
        if missing:
            raise ConfigurationError("true_beta is missing entries for: %s" % ", ".join(missing))
        for name in ("D", "M", "A", "H"):
            if name not in self.signal_maps:
                raise ConfigurationError("signal_maps must define %r" % name)
            if self.signal_noise_sd.get(name, 0.0) < 0:
                raise ConfigurationError("signal_noise_sd[%r] must be >= 0" % name)

    @property
    def covariate_names(self) -> List[str]:
        """Canonical covariate ordering: constant first, then sorted names."""
        return ["constant"] + sorted(self.covariates)


# ---------------------------------------------------------------------------
# Generated data containers
# ---------------------------------------------------------------------------


@dataclass
class FullSampleDataset:
    """A population plus one full-sample history per applicant.

    Array fields are (n,) per applicant or (n, T) per application slot,
    with ``present`` masking real applications.  Every present application
    was granted, so all signals and outcomes are observed.
    """

    covariate_names: List[str]
    applicant_ids: np.ndarray         # (n,) int64
    X: np.ndarray                     # (n, p) covariate matrix, constant first
    male: np.ndarray                  # (n,) bool
    true_quality: np.ndarray          # (n,)
    present: np.ndarray               # (n, T) bool
    amount: np.ndarray                # (n, T)
    term_months: np.ndarray           # (n, T)
    annual_rate: np.ndarray           # (n, T)
    gain: np.ndarray                  # (n, T) platform gain if repaid
    loss: np.ndarray                  # (n, T) platform loss if defaulted
    overdue_days: np.ndarray          # (n, T)
    overdue_frac: np.ndarray          # (n, T)
    attitude_frac: np.ndarray         # (n, T)
    help_frac: np.ndarray             # (n, T)
    repaid: np.ndarray                # (n, T) bool
    profit: np.ndarray                # (n, T) realized profit of each loan

    @property
    def n_applicants(self) -> int:
        return int(self.applicant_ids.shape[0])

    @property
    def max_applications(self) -> int:
        return int(self.present.shape[1])

    @property
    def n_applications(self) -> int:
        return int(self.present.sum())

    def history_lengths(self) -> np.ndarray:
        return self.present.sum(axis=1).astype(np.int64)

    def gender(self, i: int) -> Gender:
        return Gender.MALE if self.male[i] else Gender.FEMALE

    def profile(self, i: int) -> ApplicantProfile:
        covs = dict(zip(self.covariate_names, self.X[i]))
        return ApplicantProfile(
            applicant_id=int(self.applicant_ids[i]),
            gender=self.gender(i),
            covariates=covs,
        )

    @property
    def profiles(self) -> List[ApplicantProfile]:
        return [self.profile(i) for i in range(self.n_applicants)]

    def terms(self, i: int, t: int) -> LoanTerms:
        return LoanTerms(
            amount=float(self.amount[i, t]),
            term_months=int(self.term_months[i, t]),
            annual_rate=float(self.annual_rate[i, t]),
            gain_if_repaid=float(self.gain[i, t]),
            loss_if_default=float(self.loss[i, t]),
        )

    def signals(self, i: int, t: int) -> RepaymentSignals:
        return RepaymentSignals(
            overdue_days=float(self.overdue_days[i, t]),
            overdue_frac=float(self.overdue_frac[i, t]),
            attitude_frac=float(self.attitude_frac[i, t]),
            help_frac=float(self.help_frac[i, t]),
        )

    def history(self, i: int) -> List["LoanRecord"]:
        out = []
        for t in range(self.max_applications):
            if not self.present[i, t]:
                break
            out.append(
                LoanRecord(
                    terms=self.terms(i, t),
                    signals=self.signals(i, t),
                    outcome=Outcome.REPAID if self.repaid[i, t] else Outcome.DEFAULTED,
                    realized_profit=float(self.profit[i, t]),
                )
            )
        return out

    def with_genders_flipped(self) -> "FullSampleDataset":
        """Same world with every gender label swapped (for symmetry checks)."""
        import copy

        flipped = copy.copy(self)
        flipped.male = ~self.male
        return flipped


@dataclass(frozen=True)
class LoanRecord:
    terms: LoanTerms
    signals: RepaymentSignals
    outcome: Outcome
    realized_profit: float


@dataclass(frozen=True)
class DecisionRecord:
    """One application event as seen by a decision maker."""

    applicant_id: int
    t: int
    gender: Gender
    belief_mean: float
    approval_prob: float
    approved: Optional[bool]
    outcome: Outcome
    realized_profit: float


@dataclass
class DecisionLog:
    """Column-oriented stream of decision records in canonical order
    (ascending applicant id, then application index)."""

    mode: DecisionMode
    applicant_index: np.ndarray      # (m,) row index into the dataset
    applicant_id: np.ndarray         # (m,)
    t: np.ndarray                    # (m,) 1-based application index
    male: np.ndarray                 # (m,) bool
    belief_mean: np.ndarray          # (m,)
    approval_prob: np.ndarray        # (m,)
    approved: Optional[np.ndarray]   # (m,) bool, None when probabilities kept
    repaid: np.ndarray               # (m,) bool
    realized_profit: np.ndarray      # (m,)

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def approval_weight(self) -> np.ndarray:
        """Approval indicator if decisions were sampled, else the probability."""
        if self.approved is not None:
            return self.approved.astype(np.float64)
        return self.approval_prob

    def records(self) -> Iterator[DecisionRecord]:
        for j in range(len(self)):
            yield DecisionRecord(
                applicant_id=int(self.applicant_id[j]),
                t=int(self.t[j]),
                gender=Gender.MALE if self.male[j] else Gender.FEMALE,
                belief_mean=float(self.belief_mean[j]),
                approval_prob=float(self.approval_prob[j]),
                approved=None if self.approved is None else bool(self.approved[j]),
                outcome=Outcome.REPAID if self.repaid[j] else Outcome.DEFAULTED,
                realized_profit=float(self.realized_profit[j]),
            )


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def _population_arrays(config: WorldConfig):
    n = config.n_applicants
    names = sorted(config.covariates)
    rng = stream(config.seed, _POPULATION_STREAM)
    u = rng.random((n, 2 + len(names)))
    male = u[:, 0] >= config.female_share
    X = np.empty((n, 1 + len(names)))
    X[:, 0] = 1.0
    for j, name in enumerate(names):
        X[:, 1 + j] = config.covariates[name].sample(u[:, 2 + j])
    beta = np.array([config.true_beta[c] for c in ["constant", *names]])
    mean_quality = X @ beta + np.where(male, config.true_gamma_male, 0.0)
    quality = mean_quality + config.true_quality_sd * _std_normal_from_uniform(u[:, 1])
    ids = np.arange(n, dtype=np.int64)
    return ids, X, male, quality


def generate_population(config: WorldConfig) -> List[Tuple[ApplicantProfile, float]]:
    """Draw the applicant pool with its latent true credit qualities."""
    ids, X, male, quality = _population_arrays(config)
    names = ["constant"] + sorted(config.covariates)
    out = []
    for i in range(config.n_applicants):
        profile = ApplicantProfile(
            applicant_id=int(ids[i]),
            gender=Gender.MALE if male[i] else Gender.FEMALE,
            covariates=dict(zip(names, X[i])),
        )
        out.append((profile, float(quality[i])))
    return out


def _signal_panel(
    quality: np.ndarray, z: Mapping[str, np.ndarray], config: WorldConfig
) -> Dict[str, np.ndarray]:
    """Signals around their quality-implied means, clamped to valid ranges.

    ``z`` holds standard-normal noise per signal; overdue days are generated
    on the log1p scale and inverted.
    """
    out: Dict[str, np.ndarray] = {}
    q = quality[..., None] if quality.ndim < z["D"].ndim else quality
    for name in ("D", "M", "A", "H"):
        smap = config.signal_maps[name]
        level = smap.intercept + smap.slope * q + config.signal_noise_sd.get(name, 0.0) * z[name]
        if name == "D":
            out["D"] = np.expm1(np.maximum(level, 0.0))
        else:
            out[name] = np.clip(level, 0.0, 1.0)
    return out


def generate_signals(
    true_quality: float, config: WorldConfig, rng: np.random.Generator
) -> RepaymentSignals:
    """Draw one loan's repayment signals given the borrower's quality."""
    u = rng.random(4)
    z = {
        name: np.asarray(_std_normal_from_uniform(u[k]))
        for k, name in enumerate(("D", "M", "A", "H"))
    }
    panel = _signal_panel(np.asarray(float(true_quality)), z, config)
    return RepaymentSignals(
        overdue_days=float(panel["D"]),
        overdue_frac=float(panel["M"]),
        attitude_frac=float(panel["A"]),
        help_frac=float(panel["H"]),
    )


def generate_outcome(true_quality: float, rng: np.random.Generator) -> Outcome:
    """Repaid with probability sigmoid(quality), else defaulted."""
    p = 1.0 / (1.0 + math.exp(-true_quality)) if true_quality > -700 else 0.0
    return Outcome.REPAID if rng.random() < p else Outcome.DEFAULTED


def simulate_full_sample(config: WorldConfig) -> FullSampleDataset:
    """Generate the screening-free world: every application is approved.

    Histories extend while the borrower repays and chooses to reapply;
    a defaulted loan ends the history unconditionally (platform ban).
    """
    ids, X, male, quality = _population_arrays(config)
    n, T = config.n_applicants, config.max_applications

    rng = stream(config.seed, _HISTORY_STREAM)
    u = rng.random((n, T, _HISTORY_COLS))

    amount = config.terms.amount.sample(u[:, :, _U_AMOUNT])
    term_months = config.terms.term_months.sample(u[:, :, _U_TERM])
    annual_rate = config.terms.annual_rate.sample(u[:, :, _U_RATE])
    gain = amount * annual_rate * term_months / 12.0
    loss = amount * config.terms.loss_rate

    z = {
        name: _std_normal_from_uniform(u[:, :, col])
        for name, col in (("D", _U_D), ("M", _U_M), ("A", _U_A), ("H", _U_H))
    }
    panel = _signal_panel(quality[:, None], z, config)

    repay_prob = _choice_prob(quality, logistic=True)
    repaid = u[:, :, _U_OUTCOME] < repay_prob[:, None]

    p_reapply = config.reapplication.probability(approved=True, defaulted=False)
    wants_more = u[:, :, _U_REAPPLY] < p_reapply
    # history continues past loan t only if repaid (ban rule) and reapplying
    cont = repaid & wants_more
    present = np.empty((n, T), dtype=bool)
    present[:, 0] = True
    if T > 1:
        present[:, 1:] = np.logical_and.accumulate(cont[:, :-1], axis=1)

    profit = np.where(repaid, gain, -loss)

    blank = ~present
    for arr in (amount, term_months, annual_rate, gain, loss, profit,
                panel["D"], panel["M"], panel["A"], panel["H"]):
        arr[blank] = 0.0
    repaid = repaid & present

    return FullSampleDataset(
        covariate_names=config.covariate_names,
        applicant_ids=ids,
        X=X,
        male=male,
        true_quality=quality,
        present=present,
        amount=amount,
        term_months=term_months,
        annual_rate=annual_rate,
        gain=gain,
        loss=loss,
        overdue_days=panel["D"],
        overdue_frac=panel["M"],
        attitude_frac=panel["A"],
        help_frac=panel["H"],
        repaid=repaid,
        profit=profit,
    )


# ---------------------------------------------------------------------------
# Evaluator replay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompiledParams:
    """Parameter vector flattened into arrays aligned with a dataset."""

    beta_vec: np.ndarray             # aligned with covariate_names
    beta_male: float
    pref_bias_male: float
    price: float
    retention: float
    signal_names: List[str]
    alphas: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray
    log1p_flags: np.ndarray          # bool per signal
    logistic_shock: bool

    @property
    def gains(self) -> np.ndarray:
        return self.alphas / self.slopes


def compile_params(params: ModelParams, covariate_names: Sequence[str]) -> CompiledParams:
    beta_vec = np.empty(len(covariate_names))
    for j, name in enumerate(covariate_names):
        if name not in params.beta:
            raise ConfigurationError("no belief coefficient for covariate %r" % name)
        beta_vec[j] = params.beta[name]
    names = list(params.signal_maps)
    maps = [params.signal_maps[n] for n in names]
    return CompiledParams(
        beta_vec=beta_vec,
        beta_male=params.beta_male,
        pref_bias_male=params.pref_bias_male,
        price=params.price,
        retention=params.retention(),
        signal_names=names,
        alphas=np.array([m.weight for m in maps]),
        slopes=np.array([m.slope for m in maps]),
        intercepts=np.array([m.intercept for m in maps]),
        log1p_flags=np.array([m.transform is SignalTransform.LOG1P for m in maps]),
        logistic_shock=params.choice_shock is ChoiceShock.LOGISTIC,
    )


def transformed_signal_panel(dataset: FullSampleDataset, cp: CompiledParams) -> np.ndarray:
    """Signals of each loan on the scale the evaluator reads them,
    shape (n_signals, n, T)."""
    raw = {
        "D": dataset.overdue_days,
        "M": dataset.overdue_frac,
        "A": dataset.attitude_frac,
        "H": dataset.help_frac,
    }
    out = np.empty((len(cp.signal_names), *dataset.present.shape))
    for k, name in enumerate(cp.signal_names):
        out[k] = np.log1p(raw[name]) if cp.log1p_flags[k] else raw[name]
    return out


def _choice_prob(v: np.ndarray, logistic: bool) -> np.ndarray:
    if logistic:
        out = np.empty_like(v)
        pos = v >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        ev = np.exp(v[~pos])
        out[~pos] = ev / (1.0 + ev)
        return out
    return ndtr(v)


def simulate_decisions(
    dataset: FullSampleDataset,
    params: ModelParams,
    mode: DecisionMode = DecisionMode.KEEP_PROBABILITIES,
    seed: int = 0,
) -> DecisionLog:
    """Replay every history through the evaluator model.

    In KEEP_PROBABILITIES mode the approval probability of every application
    is recorded against the full-sample truth, and beliefs consume every
    previous loan's signals (in this world all of them were granted).  In
    SAMPLE_DECISIONS mode approve/reject is drawn, and a rejection blinds
    the evaluator: no signals are observed and the belief stays put.
    """
    cp = compile_params(params, dataset.covariate_names)
    n, T = dataset.present.shape
    present = dataset.present
    male = dataset.male

    q = dataset.X @ cp.beta_vec + np.where(male, cp.beta_male, 0.0)
    bias = np.where(male, cp.pref_bias_male, 0.0)
    y_panel = transformed_signal_panel(dataset, cp)
    gains = cp.gains
    innovation_base = np.tensordot(gains, y_panel, axes=(0, 0)) - float(
        np.dot(gains, cp.intercepts)
    )  # (n, T): weighted signal content of each loan

    sample = mode is DecisionMode.SAMPLE_DECISIONS
    if sample:
        u = stream(seed, _DECISION_STREAM).random((n, T))
        approved = np.zeros((n, T), dtype=bool)

    belief = np.full((n, T), np.nan)
    approval = np.full((n, T), np.nan)
    for t in range(T):
        active = present[:, t]
        p = _choice_prob(q, logistic=True)
        v = cp.price * (p * dataset.gain[:, t] - (1.0 - p) * dataset.loss[:, t]) - bias
        prob = _choice_prob(v, cp.logistic_shock)
        belief[active, t] = q[active]
        approval[active, t] = prob[active]
        if sample:
            approved[:, t] = active & (u[:, t] < prob)
        if t + 1 < T:
            upd = present[:, t + 1]
            if sample:
                upd = upd & approved[:, t]
            q = np.where(upd, cp.retention * q + innovation_base[:, t], q)

    idx_i, idx_t = np.nonzero(present)
    return DecisionLog(
        mode=mode,
        applicant_index=idx_i,
        applicant_id=dataset.applicant_ids[idx_i],
        t=(idx_t + 1).astype(np.int64),
        male=male[idx_i],
        belief_mean=belief[idx_i, idx_t],
        approval_prob=approval[idx_i, idx_t],
        approved=approved[idx_i, idx_t] if sample else None,
        repaid=dataset.repaid[idx_i, idx_t],
        realized_profit=dataset.profit[idx_i, idx_t],
    )
