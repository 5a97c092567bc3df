"""Maximum-likelihood estimation of the evaluator model from decision logs.

The likelihood replays each applicant's belief trajectory exactly as the
decision simulator does (updates fire only after an approved application)
and scores observed approve/reject outcomes with the choice probability.

Optimization runs in an unconstrained space: the price parameter is fitted
on the log scale and the signal weights through a stick-breaking map that
keeps them positive with total mass at most one.  Gradients are analytic
(forward-mode accumulation through the belief recursion) for the
weighted-sum updater; the conjugate-Bayes variant falls back to central
finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_ndtr

from .core import ModelParams, SignalMap, Updater
from .exceptions import (
    ConfigurationError,
    DataError,
    NumericalError,
    ParameterDomainError,
)
from .world import DecisionLog, DecisionMode, FullSampleDataset, compile_params

LOG_FLOOR = math.log(1e-300)

# A fit is reported converged only when the per-observation gradient is
# at most this large in the infinity norm.
CONVERGED_GRAD_NORM = 1e-3

_FD_STEP = 1e-5


class OptimizerKind(str, Enum):
    QUASI_NEWTON = "quasi_newton"
    NELDER_MEAD = "nelder_mead"


class SeMethod(str, Enum):
    HESSIAN_INVERSE = "hessian_inverse"
    OPG = "opg"


# ---------------------------------------------------------------------------
# Estimation data panel
# ---------------------------------------------------------------------------


@dataclass
class EstimationData:
    """Decision log flattened into padded applicant-by-application arrays.

    Signals may be NaN where unobserved; they are only consulted for loans
    whose application was approved and followed by another application.
    """

    covariate_names: List[str]
    X: np.ndarray                # (n, p)
    male: np.ndarray             # (n,) bool
    present: np.ndarray          # (n, T) bool
    approved: np.ndarray         # (n, T) bool
    gain: np.ndarray             # (n, T)
    loss: np.ndarray             # (n, T)
    overdue_days: np.ndarray     # (n, T)
    overdue_frac: np.ndarray     # (n, T)
    attitude_frac: np.ndarray    # (n, T)
    help_frac: np.ndarray        # (n, T)

    def __post_init__(self) -> None:
        if self.present.size and self.present.shape[1] > 1:
            gap = ~self.present[:, :-1] & self.present[:, 1:]
            if gap.any():
                i = int(np.nonzero(gap.any(axis=1))[0][0])
                raise DataError(
                    "application index gap for applicant row %d: "
                    "t sequence must be contiguous from 1" % i
                )
        if (self.approved & ~self.present).any():
            raise DataError("approval flag set outside a present application")

    @property
    def n_records(self) -> int:
        return int(self.present.sum())

    def signal_panel(self, cp) -> np.ndarray:
        raw = {
            "D": self.overdue_days,
            "M": self.overdue_frac,
            "A": self.attitude_frac,
            "H": self.help_frac,
        }
        out = np.empty((len(cp.signal_names), *self.present.shape))
        for k, name in enumerate(cp.signal_names):
            out[k] = np.log1p(raw[name]) if cp.log1p_flags[k] else raw[name]
        return out

    @staticmethod
    def from_simulation(dataset: FullSampleDataset, log: DecisionLog) -> "EstimationData":
        if log.mode is not DecisionMode.SAMPLE_DECISIONS or log.approved is None:
            raise DataError("estimation requires a sampled decision log")
        approved = np.zeros(dataset.present.shape, dtype=bool)
        approved[log.applicant_index, log.t - 1] = log.approved
        return EstimationData(
            covariate_names=dataset.covariate_names,
            X=dataset.X,
            male=dataset.male,
            present=dataset.present.copy(),
            approved=approved,
            gain=dataset.gain,
            loss=dataset.loss,
            overdue_days=dataset.overdue_days,
            overdue_frac=dataset.overdue_frac,
            attitude_frac=dataset.attitude_frac,
            help_frac=dataset.help_frac,
        )


# ---------------------------------------------------------------------------
# Parameter space: names, freezing, unconstrained reparameterization
# ---------------------------------------------------------------------------


def _logit(x: float) -> float:
    return math.log(x / (1.0 - x))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


class ParameterSpace:
    """Named view of the parameter vector with freeze and transform support.

    Natural-space names: ``z``, ``pref_bias_male``, ``beta.<covariate>``,
    ``beta.male``, and per active signal ``alpha.<s>``, ``slope.<s>``,
    ``intercept.<s>`` (plus ``sigma_q0`` and ``noise.<s>`` under the
    conjugate-Bayes updater).
    """

    def __init__(
        self,
        template: ModelParams,
        covariate_names: Sequence[str],
        free_params: Optional[Set[str]] = None,
        transform_policy: Optional[Dict[str, str]] = None,
    ):
        self.template = template
        self.covariate_names = list(covariate_names)
        self.signal_names = list(template.signal_maps)
        bayes = template.updater is Updater.CONJUGATE_BAYES

        names: List[str] = ["z", "pref_bias_male"]
        names += ["beta.%s" % c for c in self.covariate_names]
        names += ["beta.male"]
        names += ["alpha.%s" % s for s in self.signal_names]
        names += ["slope.%s" % s for s in self.signal_names]
        names += ["intercept.%s" % s for s in self.signal_names]
        if bayes:
            names += ["sigma_q0"] + ["noise.%s" % s for s in self.signal_names]
        self.names = names
        self.index = {n: i for i, n in enumerate(names)}

        if free_params is None:
            free = set(names)
        else:
            unknown = set(free_params) - set(names)
            if unknown:
                raise ConfigurationError(
                    "unknown free parameter(s): %s" % ", ".join(sorted(unknown))
                )
            free = set(free_params)
        if not free:
            raise ConfigurationError("at least one parameter must be free")
        self.free_names = [n for n in names if n in free]
        self.free_alpha_names = [n for n in self.free_names if n.startswith("alpha.")]
        # default policy: log for positive scale parameters, stick-breaking
        # for the weight simplex, identity elsewhere
        self._log_names = {"z"}
        if bayes:
            self._log_names |= {"sigma_q0"} | {"noise.%s" % s for s in self.signal_names}
        for name, kind in (transform_policy or {}).items():
            if name not in self.index:
                raise ConfigurationError("transform_policy names unknown parameter %r" % name)
            if name.startswith("alpha."):
                raise ConfigurationError(
                    "signal weights always use the stick-breaking transform"
                )
            if kind == "log":
                self._log_names.add(name)
            elif kind == "identity":
                self._log_names.discard(name)
            else:
                raise ConfigurationError(
                    "transform_policy[%r] must be 'log' or 'identity'" % name
                )

        frozen_alpha = sum(
            template.signal_maps[s].weight
            for s in self.signal_names
            if "alpha.%s" % s not in free
        )
        self._alpha_mass = 1.0 - frozen_alpha
        if self.free_alpha_names and self._alpha_mass <= 0:
            raise ParameterDomainError("frozen signal weights already exhaust the simplex")

    # -- natural vector ----------------------------------------------------

    def natural_from_params(self, params: ModelParams) -> np.ndarray:
        v = np.empty(len(self.names))
        v[self.index["z"]] = params.price
        v[self.index["pref_bias_male"]] = params.pref_bias_male
        for c in self.covariate_names:
            if c not in params.beta:
                raise ConfigurationError("no belief coefficient for covariate %r" % c)
            v[self.index["beta.%s" % c]] = params.beta[c]
        v[self.index["beta.male"]] = params.beta_male
        for s in self.signal_names:
            m = params.signal_maps[s]
            v[self.index["alpha.%s" % s]] = m.weight
            v[self.index["slope.%s" % s]] = m.slope
            v[self.index["intercept.%s" % s]] = m.intercept
        if "sigma_q0" in self.index:
            v[self.index["sigma_q0"]] = params.sigma_q0
            for s in self.signal_names:
                v[self.index["noise.%s" % s]] = params.signal_noise_sd.get(s, 0.0)
        return v

    def params_from_natural(self, v: np.ndarray) -> ModelParams:
        t = self.template
        beta = {c: float(v[self.index["beta.%s" % c]]) for c in self.covariate_names}
        maps = {}
        for s in self.signal_names:
            old = t.signal_maps[s]
            maps[s] = SignalMap(
                slope=float(v[self.index["slope.%s" % s]]),
                intercept=float(v[self.index["intercept.%s" % s]]),
                weight=float(v[self.index["alpha.%s" % s]]),
                transform=old.transform,
            )
        noise = dict(t.signal_noise_sd)
        sigma_q0 = t.sigma_q0
        if "sigma_q0" in self.index:
            sigma_q0 = float(v[self.index["sigma_q0"]])
            noise = {s: float(v[self.index["noise.%s" % s]]) for s in self.signal_names}
        return ModelParams(
            beta=beta,
            beta_male=float(v[self.index["beta.male"]]),
            pref_bias_male=float(v[self.index["pref_bias_male"]]),
            price=float(v[self.index["z"]]),
            signal_maps=maps,
            sigma_q0=sigma_q0,
            signal_noise_sd=noise,
            updater=t.updater,
            choice_shock=t.choice_shock,
        )

    # -- transformed (unconstrained) vector over free params ---------------

    def to_transformed(self, natural: np.ndarray) -> np.ndarray:
        x = np.empty(len(self.free_names))
        mass = self._alpha_mass
        for k, name in enumerate(self.free_names):
            val = natural[self.index[name]]
            if name in self._log_names:
                if val <= 0:
                    raise ParameterDomainError("%s must be > 0 to transform" % name)
                x[k] = math.log(val)
            elif name in self.free_alpha_names:
                if not 0.0 < val < mass:
                    raise ParameterDomainError(
                        "%s=%r outside the open stick (0, %r)" % (name, val, mass)
                    )
                x[k] = _logit(val / mass)
                mass -= val
            else:
                x[k] = val
        return x

    def to_natural(self, x: np.ndarray) -> np.ndarray:
        v = self.natural_from_params(self.template).copy()
        mass = self._alpha_mass
        for k, name in enumerate(self.free_names):
            if name in self._log_names:
                v[self.index[name]] = math.exp(x[k])
            elif name in self.free_alpha_names:
                a = mass * _sigmoid(x[k])
                v[self.index[name]] = a
                mass -= a
            else:
                v[self.index[name]] = x[k]
        return v

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """d(natural free values)/d(transformed vector), lower triangular."""
        k = len(self.free_names)
        J = np.zeros((k, k))
        mass = self._alpha_mass
        dmass = np.zeros(k)  # gradient of the remaining stick mass wrt x
        for i, name in enumerate(self.free_names):
            if name in self._log_names:
                J[i, i] = math.exp(x[i])
            elif name in self.free_alpha_names:
                s = _sigmoid(x[i])
                J[i, :] = s * dmass
                J[i, i] = mass * s * (1.0 - s)
                dmass = dmass - J[i, :]
                mass -= mass * s
            else:
                J[i, i] = 1.0
        return J

    def params_from_transformed(self, x: np.ndarray) -> ModelParams:
        return self.params_from_natural(self.to_natural(x))


# ---------------------------------------------------------------------------
# Likelihood and gradient
# ---------------------------------------------------------------------------


def _log_choice(v: np.ndarray, approved: np.ndarray, logistic: bool) -> np.ndarray:
    """log P(observed decision) with the probability floored before the log."""
    if logistic:
        lp_yes = -np.logaddexp(0.0, -v)
        lp_no = -np.logaddexp(0.0, v)
    else:
        lp_yes = log_ndtr(v)
        lp_no = log_ndtr(-v)
    return np.maximum(np.where(approved, lp_yes, lp_no), LOG_FLOOR)


def _dlog_choice_dv(v: np.ndarray, approved: np.ndarray, logistic: bool) -> np.ndarray:
    if logistic:
        F = np.empty_like(v)
        pos = v >= 0
        F[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        ev = np.exp(v[~pos])
        F[~pos] = ev / (1.0 + ev)
        return np.where(approved, 1.0 - F, -F)
    log_pdf = -0.5 * v * v - 0.5 * math.log(2.0 * math.pi)
    ratio_yes = np.exp(log_pdf - log_ndtr(v))
    ratio_no = np.exp(log_pdf - log_ndtr(-v))
    return np.where(approved, ratio_yes, -ratio_no)


def _sigmoid_vec(q: np.ndarray) -> np.ndarray:
    out = np.empty_like(q)
    pos = q >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-q[pos]))
    e = np.exp(q[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _belief_means(data: EstimationData, params: ModelParams) -> np.ndarray:
    """Belief mean before each application, (n, T), following observed
    decisions: only approved applications reveal signals."""
    cp = compile_params(params, data.covariate_names)
    n, T = data.present.shape
    y = data.signal_panel(cp)
    out = np.empty((n, T))
    q = data.X @ cp.beta_vec + np.where(data.male, cp.beta_male, 0.0)
    if params.updater is Updater.WEIGHTED_SUM:
        gains = cp.gains
        innov = np.tensordot(gains, y, axes=(0, 0)) - float(np.dot(gains, cp.intercepts))
        for t in range(T):
            out[:, t] = q
            if t + 1 < T:
                upd = data.approved[:, t] & data.present[:, t + 1]
                _check_signals_observed(y, upd, t)
                q = np.where(upd, cp.retention * q + innov[:, t], q)
        return out

    # conjugate-Bayes propagation of mean and variance
    noise = np.array([params.signal_noise_sd.get(s, 0.0) for s in cp.signal_names])
    if (noise <= 0).any():
        raise ParameterDomainError("conjugate updater requires positive signal noise sds")
    k2 = float(np.sum((cp.slopes / noise) ** 2))
    weights = cp.slopes / noise ** 2
    var = np.full(n, params.sigma_q0 ** 2)
    for t in range(T):
        out[:, t] = q
        if t + 1 < T:
            upd = data.approved[:, t] & data.present[:, t + 1]
            _check_signals_observed(y, upd, t)
            innovations = y[:, :, t] - cp.intercepts[:, None]
            weighted = np.tensordot(weights, innovations, axes=(0, 0))
            prior_prec = 1.0 / var
            new_var = 1.0 / (prior_prec + k2)
            new_q = new_var * (prior_prec * q + weighted)
            q = np.where(upd, new_q, q)
            var = np.where(upd, new_var, var)
    return out


def _check_signals_observed(y: np.ndarray, upd: np.ndarray, t: int) -> None:
    if upd.any() and np.isnan(y[:, upd, t]).any():
        raise DataError(
            "approved application at t=%d is missing repayment signals "
            "needed for the following belief update" % (t + 1)
        )


def _loglik_terms(data: EstimationData, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """(n, T) matrix of per-record log-choice terms and the utilities."""
    cp = compile_params(params, data.covariate_names)
    beliefs = _belief_means(data, params)
    p = _sigmoid_vec(beliefs)
    bias = np.where(data.male, cp.pref_bias_male, 0.0)
    v = cp.price * (p * data.gain - (1.0 - p) * data.loss) - bias[:, None]
    terms = _log_choice(v, data.approved, cp.logistic_shock)
    return np.where(data.present, terms, 0.0), v


def log_likelihood(data: EstimationData, params: ModelParams) -> float:
    """Total log-likelihood of the observed decisions."""
    if data.n_records == 0:
        return 0.0
    terms, _ = _loglik_terms(data, params)
    return float(terms.sum())


def _analytic_gradient_natural(
    data: EstimationData, params: ModelParams, space: ParameterSpace,
    per_applicant: bool = False,
):
    """Gradient of the total log-likelihood in natural parameters
    (weighted-sum updater, analytic forward-mode)."""
    cp = compile_params(params, data.covariate_names)
    n, T = data.present.shape
    p_cov = data.X.shape[1]
    S = len(cp.signal_names)
    idx = space.index

    # belief-sensitive columns: betas, beta.male, alphas, slopes, intercepts
    belief_cols = (
        [idx["beta.%s" % c] for c in space.covariate_names]
        + [idx["beta.male"]]
        + [idx["alpha.%s" % s] for s in cp.signal_names]
        + [idx["slope.%s" % s] for s in cp.signal_names]
        + [idx["intercept.%s" % s] for s in cp.signal_names]
    )
    col_of = {nat: k for k, nat in enumerate(belief_cols)}
    K = len(belief_cols)

    y = data.signal_panel(cp)
    male_f = data.male.astype(np.float64)

    q = data.X @ cp.beta_vec + np.where(data.male, cp.beta_male, 0.0)
    dQ = np.zeros((n, K))
    dQ[:, :p_cov] = data.X
    dQ[:, p_cov] = male_f

    g = np.zeros(len(space.names))
    scores = np.zeros((n, len(space.names))) if per_applicant else None
    total = 0.0

    a_base = p_cov + 1
    s_base = a_base + S
    i_base = s_base + S

    for t in range(T):
        active = data.present[:, t]
        if not active.any():
            break
        qa = q[active]
        pa = _sigmoid_vec(qa)
        gain_t, loss_t = data.gain[active, t], data.loss[active, t]
        v = cp.price * (pa * gain_t - (1.0 - pa) * loss_t) - cp.pref_bias_male * male_f[active]
        approved_t = data.approved[active, t]
        total += float(_log_choice(v, approved_t, cp.logistic_shock).sum())

        e = _dlog_choice_dv(v, approved_t, cp.logistic_shock)
        dv_dz = pa * gain_t - (1.0 - pa) * loss_t
        dv_dc = -male_f[active]
        w = e * cp.price * (gain_t + loss_t) * pa * (1.0 - pa)

        g[idx["z"]] += float(np.dot(e, dv_dz))
        g[idx["pref_bias_male"]] += float(np.dot(e, dv_dc))
        belief_contrib = dQ[active] * w[:, None]
        for k, nat in enumerate(belief_cols):
            g[nat] += float(belief_contrib[:, k].sum())
        if per_applicant:
            rows = np.nonzero(active)[0]
            scores[rows, idx["z"]] += e * dv_dz
            scores[rows, idx["pref_bias_male"]] += e * dv_dc
            scores[np.ix_(rows, belief_cols)] += belief_contrib

        if t + 1 < T:
            upd = data.approved[:, t] & data.present[:, t + 1]
            if upd.any():
                _check_signals_observed(y, upd, t)
                q_old = q[upd]
                qs = (y[:, upd, t] - cp.intercepts[:, None]) / cp.slopes[:, None]  # (S, m)
                innov = cp.alphas @ qs
                dQu = dQ[upd] * cp.retention
                dQu[:, a_base:s_base] += qs.T - q_old[:, None]
                dQu[:, s_base:i_base] += -(cp.alphas[None, :] * qs.T) / cp.slopes[None, :]
                dQu[:, i_base:i_base + S] += -(cp.alphas / cp.slopes)[None, :]
                dQ[upd] = dQu
                q[upd] = cp.retention * q_old + innov

    if not np.isfinite(g).all():
        bad = space.names[int(np.nonzero(~np.isfinite(g))[0][0])]
        raise NumericalError("non-finite gradient component for parameter %r" % bad)
    return total, g, scores


def _gradient_transformed(
    data: EstimationData,
    params_of_x,
    space: ParameterSpace,
    x: np.ndarray,
    per_applicant: bool = False,
):
    """(loglik, gradient in transformed space[, per-applicant scores])."""
    params = params_of_x(x)
    if params.updater is Updater.WEIGHTED_SUM:
        total, g_nat, scores = _analytic_gradient_natural(
            data, params, space, per_applicant=per_applicant
        )
        free_idx = [space.index[nm] for nm in space.free_names]
        J = space.jacobian(x)
        g = J.T @ g_nat[free_idx]
        sc = scores[:, free_idx] @ J if per_applicant else None
        return total, g, sc

    # finite-difference fallback (conjugate-Bayes)
    total = log_likelihood(data, params)
    g = np.empty(len(x))
    for k in range(len(x)):
        h = _FD_STEP * (1.0 + abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (log_likelihood(data, params_of_x(xp)) - log_likelihood(data, params_of_x(xm))) / (2 * h)
    if not np.isfinite(g).all():
        bad = space.free_names[int(np.nonzero(~np.isfinite(g))[0][0])]
        raise NumericalError("non-finite gradient component for parameter %r" % bad)
    return total, g, None


def log_likelihood_gradient(
    data: EstimationData,
    params: ModelParams,
    free_params: Optional[Set[str]] = None,
) -> Dict[str, float]:
    """Gradient of the total log-likelihood in the transformed space,
    one entry per free parameter."""
    space = ParameterSpace(params, data.covariate_names, free_params)
    x = space.to_transformed(space.natural_from_params(params))
    _, g, _ = _gradient_transformed(data, space.params_from_transformed, space, x)
    return dict(zip(space.free_names, g.tolist()))


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimationConfig:
    initial_params: ModelParams
    free_params: Optional[Set[str]] = None
    transform_policy: Optional[Dict[str, str]] = None
    optimizer: OptimizerKind = OptimizerKind.QUASI_NEWTON
    max_iters: int = 400
    tol: float = 1e-7
    se_method: SeMethod = SeMethod.HESSIAN_INVERSE
    multistart: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.optimizer, OptimizerKind):
            object.__setattr__(self, "optimizer", OptimizerKind(self.optimizer))
        if not isinstance(self.se_method, SeMethod):
            object.__setattr__(self, "se_method", SeMethod(self.se_method))
        if self.tol <= 0:
            raise ConfigurationError("tol must be > 0")
        if self.multistart < 1:
            raise ConfigurationError("multistart must be >= 1")


@dataclass
class EstimateReport:
    point_estimates: ModelParams
    std_errors: Dict[str, float]
    log_likelihood: float
    converged: bool
    n_observations: int
    gradient_norm_at_optimum: float
    estimates_flat: Dict[str, float]
    free_params: List[str]
    start_logliks: List[float]
    diagnostics: str = ""

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "estimates": self.estimates_flat,
            "std_errors": self.std_errors,
            "loglik": self.log_likelihood,
            "converged": self.converged,
            "grad_norm": self.gradient_norm_at_optimum,
            "n_obs": self.n_observations,
            "free_params": self.free_params,
            "diagnostics": self.diagnostics,
        }


def _multistart_points(space: ParameterSpace, x0: np.ndarray, count: int, seed: int):
    """Start points: the supplied initial point plus natural-space
    perturbations of roughly +-50 percent."""
    points = [x0]
    rng = np.random.Generator(np.random.Philox(key=np.array([seed % 2 ** 64, 4], dtype=np.uint64)))
    nat0 = space.to_natural(x0)
    free_idx = [space.index[nm] for nm in space.free_names]
    attempts = 0
    while len(points) < count and attempts < count * 20:
        attempts += 1
        nat = nat0.copy()
        for j, nm in zip(free_idx, space.free_names):
            v = nat0[j]
            if abs(v) < 1e-3:
                nat[j] = v + rng.uniform(-0.1, 0.1)
            else:
                nat[j] = v * rng.uniform(0.5, 1.5)
        alphas = [nat[space.index[nm]] for nm in space.free_alpha_names]
        mass = space._alpha_mass
        if alphas and sum(alphas) >= mass:
            scale = 0.9 * mass / sum(alphas)
            for nm in space.free_alpha_names:
                nat[space.index[nm]] *= scale
        try:
            points.append(space.to_transformed(nat))
        except ParameterDomainError:
            continue
    return points


def _fd_hessian(fn_grad, x: np.ndarray) -> np.ndarray:
    k = len(x)
    H = np.empty((k, k))
    for j in range(k):
        h = 1e-4 * (1.0 + abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        H[:, j] = (fn_grad(xp) - fn_grad(xm)) / (2 * h)
    return 0.5 * (H + H.T)


def fit(data: EstimationData, config: EstimationConfig) -> EstimateReport:
    """Maximize the decision-log likelihood and report estimates with
    standard errors (inverse Hessian or outer product of applicant scores,
    delta-method mapped back to the natural parameter scale)."""
    if data.n_records == 0:
        raise DataError("cannot fit on an empty decision log")
    space = ParameterSpace(config.initial_params, data.covariate_names,
                           config.free_params, config.transform_policy)
    m = data.n_records

    def params_of_x(x: np.ndarray) -> ModelParams:
        return space.params_from_transformed(x)

    def objective(x: np.ndarray):
        total, g, _ = _gradient_transformed(data, params_of_x, space, x)
        return -total / m, -g / m

    def objective_value(x: np.ndarray) -> float:
        return -log_likelihood(data, params_of_x(x)) / m

    x0 = space.to_transformed(space.natural_from_params(config.initial_params))
    starts = _multistart_points(space, x0, config.multistart, config.seed)
    start_logliks = [-objective_value(x) * m for x in starts]

    best = None
    any_success = False
    for x_start in starts:
        if config.optimizer is OptimizerKind.QUASI_NEWTON:
            res = minimize(
                objective, x_start, jac=True, method="L-BFGS-B",
                options={"maxiter": config.max_iters, "ftol": 1e-12, "gtol": config.tol},
            )
        else:
            res = minimize(
                objective_value, x_start, method="Nelder-Mead",
                options={"maxiter": config.max_iters * max(10, len(x_start)),
                         "xatol": config.tol * 100, "fatol": config.tol},
            )
        any_success = any_success or bool(res.success)
        if best is None or res.fun < best.fun:
            best = res

    x_hat = np.asarray(best.x, dtype=np.float64)
    total, g, _ = _gradient_transformed(data, params_of_x, space, x_hat)
    grad_norm = float(np.abs(g / m).max())
    if grad_norm > CONVERGED_GRAD_NORM and config.optimizer is OptimizerKind.QUASI_NEWTON:
        # polish: restart once from the incumbent
        res = minimize(objective, x_hat, jac=True, method="L-BFGS-B",
                       options={"maxiter": config.max_iters, "ftol": 1e-14, "gtol": config.tol})
        if res.fun <= best.fun:
            best = res
            x_hat = np.asarray(res.x, dtype=np.float64)
            total, g, _ = _gradient_transformed(data, params_of_x, space, x_hat)
            grad_norm = float(np.abs(g / m).max())

    converged = bool(any_success or best.success) and grad_norm <= CONVERGED_GRAD_NORM
    params_hat = params_of_x(x_hat)

    std_errors: Dict[str, float] = {}
    diagnostics = ""
    try:
        if config.se_method is SeMethod.HESSIAN_INVERSE:
            def grad_only(x):
                _, gg, _ = _gradient_transformed(data, params_of_x, space, x)
                return -gg

            H = _fd_hessian(grad_only, x_hat)
            cov_t = np.linalg.inv(H)
        else:
            _, _, scores = _gradient_transformed(
                data, params_of_x, space, x_hat, per_applicant=True
            )
            opg = scores.T @ scores
            cov_t = np.linalg.inv(opg)
        J = space.jacobian(x_hat)
        cov_nat = J @ cov_t @ J.T
        variances = np.diag(cov_nat)
        if (variances < 0).any() or not np.isfinite(variances).all():
            raise np.linalg.LinAlgError("negative or non-finite variance")
        std_errors = {
            nm: float(math.sqrt(variances[k])) for k, nm in enumerate(space.free_names)
        }
    except np.linalg.LinAlgError as exc:
        diagnostics = "standard errors unavailable: %s" % exc

    nat_hat = space.to_natural(x_hat)
    estimates_flat = {nm: float(nat_hat[space.index[nm]]) for nm in space.names}

    return EstimateReport(
        point_estimates=params_hat,
        std_errors=std_errors,
        log_likelihood=float(total),
        converged=converged,
        n_observations=m,
        gradient_norm_at_optimum=grad_norm,
        estimates_flat=estimates_flat,
        free_params=list(space.free_names),
        start_logliks=start_logliks,
        diagnostics=diagnostics,
    )
