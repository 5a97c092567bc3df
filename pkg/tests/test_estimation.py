"""Likelihood, gradient-oracle, and fitting tests."""

import math

import numpy as np
import pytest

from biasforge.core import (
    ChoiceShock,
    ModelParams,
    SignalMap,
    Updater,
    reference_params,
)
from biasforge.estimation import (
    EstimateReport,
    EstimationConfig,
    EstimationData,
    OptimizerKind,
    ParameterSpace,
    SeMethod,
    fit,
    log_likelihood,
    log_likelihood_gradient,
)
from biasforge.exceptions import ConfigurationError, DataError, ParameterDomainError
from biasforge.world import (
    DecisionMode,
    TermsSpec,
    WorldConfig,
    simulate_decisions,
    simulate_full_sample,
)


def sim_data(n=200, seed=7, params=None, decision_seed=3):
    cfg = WorldConfig(n_applicants=n, seed=seed, terms=TermsSpec(loss_rate=0.12))
    ds = simulate_full_sample(cfg)
    log = simulate_decisions(
        ds, params or reference_params(), DecisionMode.SAMPLE_DECISIONS, seed=decision_seed
    )
    return ds, log, EstimationData.from_simulation(ds, log)


def single_record_data(approved=True, a=10.0, b=10.0, male=False):
    shape = (1, 1)
    return EstimationData(
        covariate_names=["constant"],
        X=np.ones((1, 1)),
        male=np.array([male]),
        present=np.ones(shape, dtype=bool),
        approved=np.array([[approved]]),
        gain=np.full(shape, a),
        loss=np.full(shape, b),
        overdue_days=np.zeros(shape),
        overdue_frac=np.zeros(shape),
        attitude_frac=np.zeros(shape),
        help_frac=np.zeros(shape),
    )


def flat_params(c_m=0.0, beta_male=0.0):
    base = reference_params()
    return ModelParams(
        beta={"constant": 0.0},
        beta_male=beta_male,
        pref_bias_male=c_m,
        price=base.price,
        signal_maps=base.signal_maps,
    )


class TestLogLikelihood:
    def test_single_even_odds_approval(self):
        ll = log_likelihood(single_record_data(approved=True), flat_params())
        assert ll == pytest.approx(math.log(0.5), abs=1e-12)

    def test_single_even_odds_rejection(self):
        ll = log_likelihood(single_record_data(approved=False), flat_params())
        assert ll == pytest.approx(math.log(0.5), abs=1e-12)

    def test_empty_log_is_zero(self):
        data = EstimationData(
            covariate_names=["constant"],
            X=np.ones((0, 1)),
            male=np.zeros(0, dtype=bool),
            present=np.zeros((0, 1), dtype=bool),
            approved=np.zeros((0, 1), dtype=bool),
            gain=np.zeros((0, 1)),
            loss=np.zeros((0, 1)),
            overdue_days=np.zeros((0, 1)),
            overdue_frac=np.zeros((0, 1)),
            attitude_frac=np.zeros((0, 1)),
            help_frac=np.zeros((0, 1)),
        )
        assert log_likelihood(data, flat_params()) == 0.0

    def test_matches_replay_probabilities(self):
        """Total likelihood must equal the sum of log choice probabilities
        the decision simulator itself reported."""
        params = reference_params()
        _, log, data = sim_data(n=150, seed=11)
        probs = log.approval_prob
        y = log.approved
        expected = float(
            np.sum(np.where(y, np.log(probs), np.log1p(-probs)))
        )
        assert log_likelihood(data, params) == pytest.approx(expected, rel=1e-10)

    def test_application_index_gap_is_data_error(self):
        present = np.array([[True, False, True]])
        with pytest.raises(DataError, match="gap"):
            EstimationData(
                covariate_names=["constant"],
                X=np.ones((1, 1)),
                male=np.zeros(1, dtype=bool),
                present=present,
                approved=present.copy(),
                gain=np.ones((1, 3)),
                loss=np.ones((1, 3)),
                overdue_days=np.zeros((1, 3)),
                overdue_frac=np.zeros((1, 3)),
                attitude_frac=np.zeros((1, 3)),
                help_frac=np.zeros((1, 3)),
            )

    def test_truth_beats_perturbations(self):
        params = reference_params()
        _, _, data = sim_data(n=5000, seed=19)
        ll_truth = log_likelihood(data, params)
        space = ParameterSpace(params, data.covariate_names)
        x0 = space.to_transformed(space.natural_from_params(params))
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = x0 + rng.uniform(-0.3, 0.3, size=x0.shape)
            assert ll_truth >= log_likelihood(data, space.params_from_transformed(x))

    def test_reordering_applicants_preserves_likelihood(self):
        params = reference_params()
        _, _, data = sim_data(n=300, seed=23)
        rng = np.random.default_rng(0)
        perm = rng.permutation(data.X.shape[0])
        shuffled = EstimationData(
            covariate_names=data.covariate_names,
            X=data.X[perm],
            male=data.male[perm],
            present=data.present[perm],
            approved=data.approved[perm],
            gain=data.gain[perm],
            loss=data.loss[perm],
            overdue_days=data.overdue_days[perm],
            overdue_frac=data.overdue_frac[perm],
            attitude_frac=data.attitude_frac[perm],
            help_frac=data.help_frac[perm],
        )
        a, b = log_likelihood(data, params), log_likelihood(shuffled, params)
        assert b == pytest.approx(a, rel=1e-9)


def fd_gradient(data, space, x, step=1e-6):
    g = np.empty(len(x))
    for k in range(len(x)):
        h = step * (1.0 + abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (
            log_likelihood(data, space.params_from_transformed(xp))
            - log_likelihood(data, space.params_from_transformed(xm))
        ) / (2 * h)
    return g


def max_rel_err(a, b):
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


class TestGradient:
    def test_matches_central_differences(self):
        params = reference_params()
        _, _, data = sim_data(n=200, seed=29)
        space = ParameterSpace(params, data.covariate_names)
        x0 = space.to_transformed(space.natural_from_params(params))
        rng = np.random.default_rng(17)
        for _ in range(10):
            x = x0 + rng.uniform(-0.4, 0.4, size=x0.shape)
            p = space.params_from_transformed(x)
            g = log_likelihood_gradient(data, p)
            analytic = np.array([g[n] for n in space.free_names])
            fd = fd_gradient(data, space, x)
            assert max_rel_err(analytic, fd) < 1e-5

    def test_probit_gradient_matches_fd(self):
        base = reference_params()
        params = ModelParams(
            beta=base.beta, beta_male=base.beta_male,
            pref_bias_male=base.pref_bias_male, price=base.price,
            signal_maps=base.signal_maps, choice_shock=ChoiceShock.PROBIT,
        )
        _, _, data = sim_data(n=120, seed=31, params=params)
        space = ParameterSpace(params, data.covariate_names)
        x = space.to_transformed(space.natural_from_params(params))
        g = log_likelihood_gradient(data, params)
        analytic = np.array([g[n] for n in space.free_names])
        fd = fd_gradient(data, space, x)
        assert max_rel_err(analytic, fd) < 1e-5

    def test_frozen_parameter_absent(self):
        params = reference_params()
        _, _, data = sim_data(n=50, seed=37)
        g = log_likelihood_gradient(data, params, free_params={"z", "pref_bias_male"})
        assert set(g) == {"z", "pref_bias_male"}

    def test_pref_bias_gradient_flips_with_gender_permutation(self):
        # crafted so the summed score is exactly zero: two approved males,
        # two rejected females, all at even odds
        data = EstimationData(
            covariate_names=["constant"],
            X=np.ones((4, 1)),
            male=np.array([True, True, False, False]),
            present=np.ones((4, 1), dtype=bool),
            approved=np.array([[True], [True], [False], [False]]),
            gain=np.full((4, 1), 10.0),
            loss=np.full((4, 1), 10.0),
            overdue_days=np.zeros((4, 1)),
            overdue_frac=np.zeros((4, 1)),
            attitude_frac=np.zeros((4, 1)),
            help_frac=np.zeros((4, 1)),
        )
        flipped = EstimationData(
            covariate_names=data.covariate_names,
            X=data.X, male=~data.male, present=data.present,
            approved=data.approved, gain=data.gain, loss=data.loss,
            overdue_days=data.overdue_days, overdue_frac=data.overdue_frac,
            attitude_frac=data.attitude_frac, help_frac=data.help_frac,
        )
        params = flat_params(c_m=0.0)
        g = log_likelihood_gradient(data, params)["pref_bias_male"]
        g_flip = log_likelihood_gradient(flipped, params)["pref_bias_male"]
        assert g != 0.0
        assert g_flip == pytest.approx(-g, abs=1e-12)

    def test_bayes_updater_uses_fd_path(self):
        base = reference_params()
        params = ModelParams(
            beta=base.beta, beta_male=base.beta_male,
            pref_bias_male=base.pref_bias_male, price=base.price,
            signal_maps=base.signal_maps, sigma_q0=1.0,
            signal_noise_sd={"D": 0.5, "A": 0.15, "H": 0.15},
            updater=Updater.CONJUGATE_BAYES,
        )
        _, _, data = sim_data(n=60, seed=41, params=params)
        g = log_likelihood_gradient(data, params, free_params={"z", "sigma_q0"})
        assert set(g) == {"z", "sigma_q0"}
        assert all(np.isfinite(v) for v in g.values())


class TestParameterSpace:
    def test_round_trip_bijective(self):
        params = reference_params()
        space = ParameterSpace(params, ["constant", "dpi", "education",
                                        "first_app_month", "housing", "income"])
        nat = space.natural_from_params(params)
        x = space.to_transformed(nat)
        back = space.to_natural(x)
        assert np.allclose(back, nat, atol=1e-12)
        rng = np.random.default_rng(2)
        for _ in range(50):
            x2 = x + rng.uniform(-2, 2, size=x.shape)
            nat2 = space.to_natural(x2)
            assert np.allclose(space.to_transformed(nat2), x2, atol=1e-10)

    def test_weights_stay_on_simplex(self):
        params = reference_params()
        space = ParameterSpace(params, ["constant"])
        rng = np.random.default_rng(3)
        x = space.to_transformed(space.natural_from_params(params))
        for _ in range(200):
            x2 = x + rng.uniform(-6, 6, size=x.shape)
            p = space.params_from_transformed(x2)
            assert p.weight_sum() <= 1.0 + 1e-12
            assert all(m.weight >= 0 for m in p.signal_maps.values())

    def test_frozen_alpha_keeps_its_value(self):
        params = reference_params()
        free = {"alpha.A", "alpha.H", "z"}
        space = ParameterSpace(params, ["constant"], free_params=free)
        x = space.to_transformed(space.natural_from_params(params))
        p = space.params_from_transformed(x + 0.5)
        assert p.signal_maps["D"].weight == params.signal_maps["D"].weight
        assert p.weight_sum() <= 1.0 + 1e-12

    def test_jacobian_matches_fd(self):
        params = reference_params()
        space = ParameterSpace(params, ["constant"])
        x = space.to_transformed(space.natural_from_params(params)) + 0.3
        J = space.jacobian(x)
        free_idx = [space.index[m] for m in space.free_names]
        for k in range(len(x)):
            h = 1e-7
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            col = (space.to_natural(xp)[free_idx] - space.to_natural(xm)[free_idx]) / (2 * h)
            assert np.allclose(J[:, k], col, atol=1e-6)

    def test_unknown_free_name_rejected(self):
        with pytest.raises(ConfigurationError):
            ParameterSpace(reference_params(), ["constant"], free_params={"nope"})

    def test_transform_policy_override(self):
        params = reference_params()
        space = ParameterSpace(params, ["constant"],
                               transform_policy={"z": "identity"})
        nat = space.natural_from_params(params)
        x = space.to_transformed(nat)
        k = space.free_names.index("z")
        assert x[k] == params.price  # identity instead of log
        assert np.allclose(space.to_natural(x), nat, atol=1e-12)
        with pytest.raises(ConfigurationError):
            ParameterSpace(params, ["constant"], transform_policy={"alpha.A": "log"})
        with pytest.raises(ConfigurationError):
            ParameterSpace(params, ["constant"], transform_policy={"z": "sqrt"})


class TestFit:
    def test_small_recovery_and_report_shape(self):
        params = reference_params()
        _, _, data = sim_data(n=3000, seed=43)
        frozen = {
            "slope.D", "slope.A", "slope.H",
            "intercept.D", "intercept.A", "intercept.H",
        }
        space = ParameterSpace(params, data.covariate_names)
        free = set(space.names) - frozen
        config = EstimationConfig(
            initial_params=params, free_params=free, multistart=2, seed=1,
        )
        report = fit(data, config)
        assert report.n_observations == data.n_records
        assert set(report.std_errors) == free
        assert report.log_likelihood >= max(report.start_logliks) - 1e-6
        se = report.std_errors["pref_bias_male"]
        assert abs(report.estimates_flat["pref_bias_male"] - 0.2390) < 4 * se

    def test_monotone_improvement_over_starts(self):
        params = reference_params()
        _, _, data = sim_data(n=400, seed=47)
        config = EstimationConfig(
            initial_params=params, free_params={"z", "pref_bias_male", "beta.constant"},
            multistart=4, seed=2,
        )
        report = fit(data, config)
        assert all(report.log_likelihood >= s - 1e-6 for s in report.start_logliks)

    def test_nelder_mead_small_problem(self):
        params = reference_params()
        _, _, data = sim_data(n=300, seed=53)
        config = EstimationConfig(
            initial_params=params, free_params={"pref_bias_male", "beta.male"},
            optimizer=OptimizerKind.NELDER_MEAD, multistart=1,
        )
        report = fit(data, config)
        assert math.isfinite(report.log_likelihood)
        assert set(report.std_errors) == {"pref_bias_male", "beta.male"}

    def test_opg_standard_errors(self):
        params = reference_params()
        _, _, data = sim_data(n=800, seed=59)
        config = EstimationConfig(
            initial_params=params, free_params={"pref_bias_male", "z"},
            se_method=SeMethod.OPG, multistart=1,
        )
        report = fit(data, config)
        assert set(report.std_errors) == {"pref_bias_male", "z"}
        assert all(v > 0 for v in report.std_errors.values())

    def test_empty_data_rejected(self):
        data = EstimationData(
            covariate_names=["constant"],
            X=np.ones((0, 1)), male=np.zeros(0, dtype=bool),
            present=np.zeros((0, 1), dtype=bool),
            approved=np.zeros((0, 1), dtype=bool),
            gain=np.zeros((0, 1)), loss=np.zeros((0, 1)),
            overdue_days=np.zeros((0, 1)), overdue_frac=np.zeros((0, 1)),
            attitude_frac=np.zeros((0, 1)), help_frac=np.zeros((0, 1)),
        )
        with pytest.raises(DataError):
            fit(data, EstimationConfig(initial_params=reference_params()))
