"""Evaluator decision model for loan approvals.

A single evaluator forms a prior belief about an applicant's latent credit
quality from demographics, revises it from repayment signals observed on
previously granted loans, maps quality to a non-default probability, and
approves when the utility of approving beats a random shock.

Two sources of gender bias are carried explicitly:

* a prior-belief shift for male applicants (``beta_male``), which decays as
  repayment signals accumulate, and
* a persistent taste penalty for male applicants in the approval utility
  (``pref_bias_male``), which no amount of observed behaviour removes.

All functions here are pure and operate on scalars; the simulation and
estimation modules provide vectorized equivalents over the same parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

from .exceptions import ConfigurationError, ParameterDomainError, SingularityError

# Slopes below this magnitude are treated as singular rather than divided by.
SLOPE_TOLERANCE = 1e-8

PRESET_VERSION = "reference-v1"


class Gender(str, Enum):
    MALE = "male"
    FEMALE = "female"


class SignalTransform(str, Enum):
    """How a raw signal is mapped before entering the quality relation."""

    LOG1P = "log1p"
    IDENTITY = "identity"


class Updater(str, Enum):
    WEIGHTED_SUM = "weighted_sum"
    CONJUGATE_BAYES = "conjugate_bayes"


class ChoiceShock(str, Enum):
    """Distribution of the additive shock in the approval utility."""

    LOGISTIC = "logistic"
    PROBIT = "probit"


def sigmoid(x: float) -> float:
    """Numerically stable logistic function."""
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _shock_cdf(v: float, shock: ChoiceShock) -> float:
    if shock is ChoiceShock.LOGISTIC:
        return sigmoid(v)
    return 0.5 * math.erfc(-v / math.sqrt(2.0))


@dataclass(frozen=True)
class ApplicantProfile:
    """Demographics entering the prior belief.

    ``covariates`` must contain a ``constant`` entry equal to 1; any further
    named covariates are allowed as long as the parameter set prices them.
    """

    applicant_id: int
    gender: Gender
    covariates: Mapping[str, float]

    def __post_init__(self) -> None:
        if not isinstance(self.gender, Gender):
            object.__setattr__(self, "gender", Gender(self.gender))
        cov = dict(self.covariates)
        if cov.get("constant") != 1:
            raise ConfigurationError(
                "profile %r: covariate 'constant' must be present and equal 1"
                % (self.applicant_id,)
            )
        for name, value in cov.items():
            if not math.isfinite(value):
                raise ConfigurationError(
                    "profile %r: covariate %r is not finite" % (self.applicant_id, name)
                )
        object.__setattr__(self, "covariates", cov)


@dataclass(frozen=True)
class RepaymentSignals:
    """Observed repayment behaviour of one granted loan.

    ``overdue_days`` is the final number of days overdue; the three fractions
    are per-installment shares (overdue, positive attitude, financial help).
    """

    overdue_days: float
    overdue_frac: float
    attitude_frac: float
    help_frac: float

    def __post_init__(self) -> None:
        if not all(
            math.isfinite(v)
            for v in (self.overdue_days, self.overdue_frac, self.attitude_frac, self.help_frac)
        ):
            raise ConfigurationError("repayment signals must be finite")
        if self.overdue_days < 0:
            raise ConfigurationError("overdue_days must be >= 0")
        for name in ("overdue_frac", "attitude_frac", "help_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError("%s must lie in [0, 1], got %r" % (name, v))

    def value(self, name: str) -> float:
        """Raw signal value for a map key (D, M, A or H)."""
        try:
            return {
                "D": self.overdue_days,
                "M": self.overdue_frac,
                "A": self.attitude_frac,
                "H": self.help_frac,
            }[name]
        except KeyError:
            raise ConfigurationError("unknown signal name %r" % (name,)) from None


@dataclass(frozen=True)
class SignalMap:
    """Linear relation between a signal's (transformed) level and quality.

    The evaluator believes ``transform(signal) = intercept + slope * quality``
    and assigns the signal ``weight`` when folding it into the belief.
    """

    slope: float
    intercept: float
    weight: float
    transform: SignalTransform = SignalTransform.IDENTITY

    def __post_init__(self) -> None:
        if not isinstance(self.transform, SignalTransform):
            object.__setattr__(self, "transform", SignalTransform(self.transform))
        if abs(self.slope) < SLOPE_TOLERANCE:
            raise SingularityError(
                "signal slope %r is below tolerance %g" % (self.slope, SLOPE_TOLERANCE)
            )
        if self.weight < 0:
            raise ParameterDomainError("signal weight must be >= 0, got %r" % (self.weight,))

    def transformed(self, raw: float) -> float:
        if self.transform is SignalTransform.LOG1P:
            return math.log1p(raw)
        return raw


@dataclass(frozen=True)
class ModelParams:
    """Complete parameter vector of the evaluator model.

    ``beta`` prices the prior covariates; ``beta_male`` shifts the prior for
    males (the female shift is normalized to zero), ``pref_bias_male`` is the
    persistent utility penalty against males (female penalty normalized to
    zero), ``price`` converts money into utility.  ``sigma_q0`` and
    ``signal_noise_sd`` only matter to the conjugate-Bayes updater variant.
    """

    beta: Mapping[str, float]
    beta_male: float
    pref_bias_male: float
    price: float
    signal_maps: Mapping[str, SignalMap]
    sigma_q0: float = 1.0
    signal_noise_sd: Mapping[str, float] = field(default_factory=dict)
    updater: Updater = Updater.WEIGHTED_SUM
    choice_shock: ChoiceShock = ChoiceShock.LOGISTIC

    def __post_init__(self) -> None:
        if not isinstance(self.updater, Updater):
            object.__setattr__(self, "updater", Updater(self.updater))
        if not isinstance(self.choice_shock, ChoiceShock):
            object.__setattr__(self, "choice_shock", ChoiceShock(self.choice_shock))
        object.__setattr__(self, "beta", dict(self.beta))
        object.__setattr__(self, "signal_maps", dict(self.signal_maps))
        object.__setattr__(self, "signal_noise_sd", dict(self.signal_noise_sd))
        if self.price <= 0:
            raise ParameterDomainError("price must be > 0, got %r" % (self.price,))
        if self.sigma_q0 <= 0:
            raise ParameterDomainError("sigma_q0 must be > 0, got %r" % (self.sigma_q0,))
        total = self.weight_sum()
        if total < 0.0 or total > 1.0 + 1e-12:
            raise ParameterDomainError(
                "signal weights must sum to a value in [0, 1], got %r" % (total,)
            )

    def weight_sum(self) -> float:
        return sum(m.weight for m in self.signal_maps.values())

    def retention(self) -> float:
        """Weight left on the previous belief after one update."""
        return 1.0 - self.weight_sum()

    def pref_bias(self, gender: Gender) -> float:
        return self.pref_bias_male if gender is Gender.MALE else 0.0


@dataclass(frozen=True)
class BeliefState:
    """Evaluator's current belief about an applicant's credit quality.

    ``variance`` is carried for the conjugate-Bayes variant only; the
    weighted-sum updater ignores it.
    """

    mean: float
    variance: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.mean):
            raise ParameterDomainError("belief mean must be finite")
        if self.variance < 0:
            raise ParameterDomainError("belief variance must be >= 0")


@dataclass(frozen=True)
class LoanTerms:
    """One loan's contractual terms and the platform's stake in it."""

    amount: float
    term_months: int
    annual_rate: float
    gain_if_repaid: float
    loss_if_default: float

    def __post_init__(self) -> None:
        if self.amount <= 0:
            raise ConfigurationError("loan amount must be > 0")
        if self.term_months < 1:
            raise ConfigurationError("term_months must be >= 1")
        if self.gain_if_repaid <= 0 or self.loss_if_default <= 0:
            raise ConfigurationError("gain_if_repaid and loss_if_default must be > 0")


def prior_quality_mean(profile: ApplicantProfile, params: ModelParams) -> float:
    """Mean of the prior quality belief for a fresh applicant.

    Raises ConfigurationError naming the first profile covariate that the
    parameter set does not price.
    """
    total = 0.0
    for name, value in profile.covariates.items():
        try:
            total += params.beta[name] * value
        except KeyError:
            raise ConfigurationError(
                "no belief coefficient for covariate %r (applicant %r)"
                % (name, profile.applicant_id)
            ) from None
    if profile.gender is Gender.MALE:
        total += params.beta_male
    return total


def initial_belief(profile: ApplicantProfile, params: ModelParams) -> BeliefState:
    """Belief held before any repayment behaviour is observed."""
    return BeliefState(
        mean=prior_quality_mean(profile, params),
        variance=params.sigma_q0 ** 2,
    )


def signal_implied_quality(
    signals: RepaymentSignals, map_name: str, params: ModelParams
) -> float:
    """Quality level a single signal points at under its linear relation."""
    try:
        smap = params.signal_maps[map_name]
    except KeyError:
        raise ConfigurationError("no signal map named %r" % (map_name,)) from None
    if abs(smap.slope) < SLOPE_TOLERANCE:
        raise SingularityError("slope of signal map %r is below tolerance" % (map_name,))
    return (smap.transformed(signals.value(map_name)) - smap.intercept) / smap.slope


def update_belief(
    prev: BeliefState, signals: Optional[RepaymentSignals], params: ModelParams
) -> BeliefState:
    """One weighted-sum belief revision.

    The new mean mixes the previous mean (weight = retention) with each
    signal's implied quality (its map weight).  ``signals=None`` models a
    rejected previous application: nothing was observed, belief unchanged.
    """
    if signals is None:
        return prev
    weights = [m.weight for m in params.signal_maps.values()]
    if any(w < 0 for w in weights) or sum(weights) > 1.0 + 1e-12:
        raise ParameterDomainError("signal weights must be >= 0 and sum to <= 1")
    mean = params.retention() * prev.mean
    for name in params.signal_maps:
        mean += params.signal_maps[name].weight * signal_implied_quality(signals, name, params)
    return BeliefState(mean=mean, variance=prev.variance)


def update_belief_bayes(
    prev: BeliefState, signals: Optional[RepaymentSignals], params: ModelParams
) -> BeliefState:
    """Normal-normal conjugate belief revision (the rejected alternative).

    Each signal is read as a noisy linear measurement of quality with known
    noise sd from ``signal_noise_sd``; the posterior pools prior and
    measurements by precision.
    """
    if signals is None:
        return prev
    if prev.variance <= 0:
        raise SingularityError("conjugate update requires positive prior variance")
    prior_precision = 1.0 / prev.variance
    precision = prior_precision
    weighted = prior_precision * prev.mean
    for name, smap in params.signal_maps.items():
        noise_sd = params.signal_noise_sd.get(name, 0.0)
        if noise_sd <= 0:
            raise SingularityError(
                "conjugate update requires positive noise sd for signal %r" % (name,)
            )
        if abs(smap.slope) < SLOPE_TOLERANCE:
            raise SingularityError("slope of signal map %r is below tolerance" % (name,))
        innovation = smap.transformed(signals.value(name)) - smap.intercept
        precision += (smap.slope / noise_sd) ** 2
        weighted += smap.slope * innovation / noise_sd ** 2
    variance = 1.0 / precision
    return BeliefState(mean=variance * weighted, variance=variance)


def non_default_prob(belief: BeliefState) -> float:
    """Probability of full repayment implied by the belief mean."""
    return sigmoid(belief.mean)


def decision_utility(
    p: float, terms: LoanTerms, gender: Gender, params: ModelParams
) -> float:
    """Deterministic part of the approval utility at non-default prob ``p``."""
    expected_profit = p * terms.gain_if_repaid - (1.0 - p) * terms.loss_if_default
    return params.price * expected_profit - params.pref_bias(gender)


def approval_prob(
    p: float, terms: LoanTerms, gender: Gender, params: ModelParams
) -> float:
    """Probability the application is approved given non-default prob ``p``.

    The evaluator approves when utility plus an i.i.d. shock is positive;
    with the default logistic shock this is the logit choice probability.
    """
    return _shock_cdf(decision_utility(p, terms, gender, params), params.choice_shock)


def reference_params() -> ModelParams:
    """Built-in parameter preset (version ``reference-v1``).

    The canonical estimated parameter set shipped with the toolkit: weights
    concentrate heavily on the attitude signal, the prior is shifted down
    for males, and a positive taste penalty is applied to males.
    """
    return ModelParams(
        beta={
            "constant": -0.8961,
            "first_app_month": -0.0201,
            "housing": 0.1458,
            "education": 0.2443,
            "income": 0.0936,
            "dpi": 0.1176,
        },
        beta_male=-0.1042,
        pref_bias_male=0.2390,
        price=0.0154,
        signal_maps={
            "D": SignalMap(slope=-0.0138, intercept=0.5219, weight=0.0097,
                           transform=SignalTransform.LOG1P),
            "A": SignalMap(slope=0.3492, intercept=0.3788, weight=0.9780),
            "H": SignalMap(slope=0.9803, intercept=0.1252, weight=0.0121),
        },
        sigma_q0=1.0,
        signal_noise_sd={"D": 0.5, "A": 0.15, "H": 0.15},
        updater=Updater.WEIGHTED_SUM,
        choice_shock=ChoiceShock.LOGISTIC,
    )
