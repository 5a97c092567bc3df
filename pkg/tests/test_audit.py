"""ML-audit pipeline tests."""

import json
import warnings

import numpy as np
import pytest

from biasforge.audit import (
    AuditConfig,
    DecisionRule,
    DecisionRuleKind,
    Imputation,
    LearnerKind,
    audit,
    build_training_set,
    feature_matrix,
    machine_log_from_scores,
    train_learner,
)
from biasforge.boosting import BoostConfig
from biasforge.core import ModelParams, reference_params
from biasforge.counterfactual import ScenarioConfig, report_from_log
from biasforge.exceptions import DegenerateDataError
from biasforge.metrics import tpr_by_gender, tpr_gap
from biasforge.world import (
    DecisionMode,
    TermsSpec,
    WorldConfig,
    simulate_decisions,
    simulate_full_sample,
)

FAST_BOOST = BoostConfig(n_rounds=25, max_depth=3, learning_rate=0.2, min_leaf=10)


def world(n=1500, seed=71, **kw):
    defaults = dict(terms=TermsSpec(loss_rate=0.12), female_share=0.5,
                    true_gamma_male=0.0)
    defaults.update(kw)
    return simulate_full_sample(WorldConfig(n_applicants=n, seed=seed, **defaults))


def base_scenario():
    return ScenarioConfig(base_params=reference_params())


def config(**kw):
    defaults = dict(scenario=base_scenario(), learner_hyperparams=FAST_BOOST)
    defaults.update(kw)
    return AuditConfig(**defaults)


class TestBuildTrainingSet:
    def test_imputed_count_matches_rejections(self):
        ds = world()
        cfg = config(seed=3)
        log = simulate_decisions(ds, reference_params(),
                                 DecisionMode.SAMPLE_DECISIONS, seed=3)
        train = build_training_set(ds, cfg.scenario, cfg)
        assert len(train) == ds.n_applications
        assert int(train.imputed.sum()) == int((~log.approved).sum())

    def test_approved_rows_keep_true_labels(self):
        ds = world(seed=73)
        cfg = config(seed=5)
        train = build_training_set(ds, cfg.scenario, cfg)
        i, t = train.applicant_index, train.t - 1
        truth = ds.repaid[i, t].astype(float)
        kept = ~train.imputed
        assert np.array_equal(train.y[kept], truth[kept])

    def test_drop_rejected_keeps_only_approved(self):
        ds = world(seed=79)
        cfg = config(imputation=Imputation.DROP_REJECTED, seed=7)
        log = simulate_decisions(ds, reference_params(),
                                 DecisionMode.SAMPLE_DECISIONS, seed=7)
        train = build_training_set(ds, cfg.scenario, cfg)
        assert len(train) == int(log.approved.sum())
        assert not train.imputed.any()

    def test_identical_covariates_copy_neighbor_label(self):
        ds = world(n=400, seed=83)
        cfg = config(k_neighbors=1, seed=11)
        train = build_training_set(ds, cfg.scenario, cfg)
        X, _, _ = feature_matrix(ds, cfg)
        approved = ~train.imputed
        pool = np.nonzero(approved)[0]
        for row in np.nonzero(train.imputed)[0][:20]:
            dup = pool[np.all(np.isclose(X[pool], X[row]), axis=1)]
            if dup.size:
                assert train.y[row] == train.y[dup[0]]

    def test_k_larger_than_pool_warns_and_shrinks(self):
        ds = world(n=60, seed=89)
        cfg = config(k_neighbors=10_000, seed=13)
        with pytest.warns(UserWarning, match="lowered"):
            train = build_training_set(ds, cfg.scenario, cfg)
        assert len(train) == ds.n_applications

    def test_empty_approved_pool_is_pipeline_error(self):
        ds = world(n=100, seed=97)
        reject_all = ModelParams(
            beta={c: -50.0 if c == "constant" else 0.0
                  for c in reference_params().beta},
            beta_male=0.0, pref_bias_male=0.0, price=1000.0,
            signal_maps=reference_params().signal_maps,
        )
        cfg = config(scenario=ScenarioConfig(base_params=reject_all), seed=17)
        with pytest.raises(DegenerateDataError):
            build_training_set(ds, cfg.scenario, cfg)


class TestTrainLearner:
    def test_single_class_rejected(self):
        ds = world(n=200, seed=101)
        cfg = config(seed=19)
        train = build_training_set(ds, cfg.scenario, cfg)
        train.y[:] = 1.0
        with pytest.raises(DegenerateDataError):
            train_learner(train, cfg)

    def test_logistic_learner(self):
        ds = world(n=800, seed=103)
        cfg = config(learner=LearnerKind.LOGISTIC, seed=23)
        train = build_training_set(ds, cfg.scenario, cfg)
        model = train_learner(train, cfg)
        scores = model.predict_score(train.X)
        assert scores.shape == train.y.shape
        assert ((scores > 0) & (scores < 1)).all()
        blob = model.to_json_dict()
        assert blob["kind"] == "logistic"


class TestAudit:
    def test_truth_oracle_scores_give_unit_tpr_and_zero_gap(self):
        ds = world(n=600, seed=107)
        i, t = np.nonzero(ds.present)
        scores = np.where(ds.repaid[i, t], 0.999999, 1e-6)
        log = machine_log_from_scores(ds, scores, DecisionRule())
        rates = tpr_by_gender(log)
        assert rates["female"] == 1.0
        assert rates["male"] == 1.0
        assert tpr_gap(log) == 0.0

    def test_threshold_invariant_to_monotone_transform(self):
        ds = world(n=500, seed=109)
        i, t = np.nonzero(ds.present)
        rng = np.random.default_rng(4)
        scores = rng.uniform(0.01, 0.99, i.shape[0])
        rule = DecisionRule()
        approved_p = machine_log_from_scores(ds, scores, rule).approved
        thr = ds.loss[i, t] / (ds.gain[i, t] + ds.loss[i, t])
        logit = lambda p: np.log(p) - np.log1p(-p)
        approved_logit = logit(scores) > logit(thr)
        assert np.array_equal(approved_p, approved_logit)

    def test_report_shape_and_determinism(self):
        ds = world(n=900, seed=113)
        cfg = config(seed=29)
        a = audit(ds, cfg)
        b = audit(ds, cfg)
        assert a.report.decision_maker == "machine"
        assert set(a.report.segments) == {"all", "new_only", "repeated_only"}
        dump = lambda r: json.dumps(r.model.to_json_dict(), sort_keys=True)
        assert dump(a) == dump(b)
        assert a.report.to_json_dict() == b.report.to_json_dict()

    def test_gender_blind_audit_symmetric_world_small_gap(self):
        ds = world(n=6000, seed=127)
        cfg = config(seed=31)
        result = audit(ds, cfg)
        assert "gender_male" not in result.training_set.feature_names
        seg = result.report.segments["all"]
        assert abs(seg.tpr_gap) < max(3 * seg.tpr_gap_se, 0.02)

    def test_fixed_threshold_rule(self):
        ds = world(n=400, seed=131)
        cfg = config(
            decision_rule=DecisionRule(kind=DecisionRuleKind.FIXED_THRESHOLD, theta=0.5),
            seed=37,
        )
        result = audit(ds, cfg)
        assert np.array_equal(result.log.approved, result.scores > 0.5)

    def test_lagged_signal_features_flagged_in(self):
        ds = world(n=300, seed=137)
        cfg = config(include_lagged_signals=True, seed=41)
        X, names, (i, t) = feature_matrix(ds, cfg)
        assert "prev_attitude_frac" in names and "has_history" in names
        first = t == 0
        col = names.index("prev_attitude_frac")
        assert np.all(X[first, col] == 0.0)
        hh = names.index("has_history")
        assert np.array_equal(X[:, hh], (t > 0).astype(float))
