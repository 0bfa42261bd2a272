from __future__ import annotations

import math

import numpy as np
import pytest

from evident.errors import CorpusError
from evident.nam import (
    RiskModel,
    TrainConfig,
    inverse_sigmoid,
    load_model,
    loss_and_gradient,
    predict,
    prior,
    recalibrate,
    save_model,
    sigmoid,
    train,
    train_prevalence_of,
    vote,
)


def model_q1(w=(1.0, -1.0), prevalence=0.25):
    return RiskModel(
        conditions=("pneumonia",),
        weights=np.array([w], dtype=np.float64),
        biases=inverse_sigmoid(np.array([prevalence])),
        train_prevalence=np.array([prevalence]),
        embedder_id="test",
        d=len(w),
    )


def random_model(rng, q=None, d=None):
    q = q or rng.integers(1, 4)
    d = d or rng.integers(2, 9)
    prevalence = rng.uniform(0.1, 0.9, size=q)
    return RiskModel(
        conditions=tuple(f"c{i}" for i in range(q)),
        weights=rng.normal(size=(q, d)) / np.sqrt(d),
        biases=inverse_sigmoid(prevalence),
        train_prevalence=prevalence,
        embedder_id="test",
        d=int(d),
    )


class TestSigmoid:
    def test_round_trip(self):
        for p in (0.01, 0.25, 0.5, 0.9, 0.999):
            assert sigmoid(inverse_sigmoid(p)) == pytest.approx(p, abs=1e-12)

    def test_inverse_rejects_boundary(self):
        for p in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(ValueError):
                inverse_sigmoid(p)

    def test_stability_at_extremes(self):
        assert sigmoid(800.0) == 1.0
        assert sigmoid(-800.0) == 0.0


class TestPrior:
    def test_half(self):
        assert prior(model_q1(prevalence=0.5))[0] == pytest.approx(0.5)

    def test_quarter_bias_value(self):
        model = model_q1(prevalence=0.25)
        assert model.biases[0] == pytest.approx(math.log(1 / 3), abs=1e-12)
        assert prior(model)[0] == pytest.approx(0.25, abs=1e-12)

    def test_high_prevalence(self):
        assert prior(model_q1(prevalence=0.9))[0] == pytest.approx(0.9, abs=1e-12)


class TestPredict:
    def test_no_evidence_is_prior(self):
        model = model_q1(prevalence=0.3)
        pred = predict(model, [])
        assert pred.probabilities[0] == pytest.approx(0.3, abs=1e-12)
        assert pred.per_evidence.shape == (0, 1)
        assert pred.aggregate_log_odds[0] == 0.0
        assert pred.relative_risk[0] == pytest.approx(1.0)

    def test_worked_example(self):
        # w=(1,-1), prevalence 0.25, features {(2,0),(0,2)}: mean (1,1),
        # log-odds 1-1=0, probability = prior = 0.25
        model = model_q1()
        pred = predict(model, [np.array([2.0, 0.0]), np.array([0.0, 2.0])])
        assert pred.aggregate_log_odds[0] == pytest.approx(0.0, abs=1e-12)
        assert pred.probabilities[0] == pytest.approx(0.25, abs=1e-12)

    def test_zero_weights_give_prevalence(self):
        model = model_q1(w=(0.0, 0.0), prevalence=0.25)
        pred = predict(model, [np.array([5.0, -3.0])])
        assert pred.probabilities[0] == pytest.approx(0.25, abs=1e-12)

    def test_invariants_hold_exactly(self):
        rng = np.random.default_rng(0)
        model = random_model(rng, q=3, d=4)
        features = rng.normal(size=(5, 4))
        pred = predict(model, features)
        assert np.array_equal(pred.aggregate_log_odds, pred.per_evidence.mean(axis=0))
        assert np.array_equal(pred.probabilities, sigmoid(model.biases + pred.aggregate_log_odds))
        assert np.array_equal(pred.relative_risk, pred.probabilities / sigmoid(model.biases))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            predict(model_q1(), [np.zeros(3)])

    def test_monotonicity_in_single_vote(self):
        model = model_q1(w=(1.0, 0.0))
        low = predict(model, [np.array([1.0, 0.0]), np.array([0.0, 1.0])])
        high = predict(model, [np.array([2.0, 0.0]), np.array([0.0, 1.0])])
        assert high.probabilities[0] > low.probabilities[0]


class TestVote:
    def test_worked_example(self):
        probs, log_odds = vote(model_q1(), np.array([2.0, 0.0]))
        assert log_odds[0] == pytest.approx(2.0, abs=1e-12)
        # sigmoid(2 + log(1/3)) = e^2 / (e^2 + 3)
        expected = math.exp(2) / (math.exp(2) + 3)
        assert probs[0] == pytest.approx(expected, abs=1e-9)
        assert probs[0] == pytest.approx(0.7113, abs=1e-4)

    def test_zero_feature_is_prior(self):
        probs, log_odds = vote(model_q1(prevalence=0.4), np.zeros(2))
        assert log_odds[0] == 0.0
        assert probs[0] == pytest.approx(0.4, abs=1e-12)

    def test_mean_vote_equals_aggregate(self):
        rng = np.random.default_rng(1)
        model = random_model(rng, q=2, d=6)
        features = rng.normal(size=(7, 6))
        pred = predict(model, features)
        votes = np.stack([vote(model, f)[1] for f in features])
        assert np.allclose(votes.mean(axis=0), pred.aggregate_log_odds, atol=1e-12)


class TestRecalibrate:
    def test_recalibrate_to_train_prevalence_is_identity(self):
        model = model_q1(prevalence=0.25)
        again = recalibrate(model, model.train_prevalence)
        assert np.array_equal(again.biases, model.biases)

    def test_votes_unchanged(self):
        rng = np.random.default_rng(2)
        model = random_model(rng, q=2, d=4)
        feature = rng.normal(size=4)
        before = vote(model, feature)[1]
        after = vote(recalibrate(model, [0.9, 0.01]), feature)[1]
        assert np.array_equal(before, after)

    def test_probabilities_follow_new_prior(self):
        model = model_q1()
        new = recalibrate(model, [0.5])
        probs, log_odds = vote(new, np.array([2.0, 0.0]))
        assert probs[0] == pytest.approx(float(sigmoid(2.0)), abs=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            recalibrate(model_q1(), [0.0])
        with pytest.raises(ValueError):
            recalibrate(model_q1(), [1.0])


class TestLossAndGradient:
    def test_loss_nonnegative(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            model = random_model(rng)
            batch = [
                (rng.normal(size=(rng.integers(0, 4), model.d)), rng.integers(0, 2, size=len(model.conditions)))
                for _ in range(3)
            ]
            loss, _ = loss_and_gradient(model, batch)
            assert loss >= 0.0

    def test_saturated_prediction_zero_gradient(self):
        model = model_q1(w=(50.0, 0.0), prevalence=0.5)
        batch = [(np.array([[1.0, 0.0]]), np.array([1.0]))]
        loss, grad = loss_and_gradient(model, batch)
        assert np.all(grad == 0.0)
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_empty_feature_list_contributes_prior_loss_zero_gradient(self):
        model = model_q1(w=(3.0, 1.0), prevalence=0.25)
        loss, grad = loss_and_gradient(model, [(np.zeros((0, 2)), np.array([1.0]))])
        assert np.all(grad == 0.0)
        assert loss == pytest.approx(-math.log(0.25), abs=1e-9)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        model = random_model(rng, q=2, d=3)
        batch = [
            (rng.normal(size=(2, 3)), np.array([1.0, 0.0])),
            (rng.normal(size=(0, 3)), np.array([0.0, 1.0])),
            (rng.normal(size=(3, 3)), np.array([1.0, 1.0])),
        ]
        _, grad = loss_and_gradient(model, batch)
        h = 1e-6
        for i in range(2):
            for j in range(3):
                bumped_up = model.weights.copy()
                bumped_up[i, j] += h
                bumped_down = model.weights.copy()
                bumped_down[i, j] -= h
                up, _ = loss_and_gradient(
                    RiskModel(model.conditions, bumped_up, model.biases, model.train_prevalence, "test", 3),
                    batch,
                )
                down, _ = loss_and_gradient(
                    RiskModel(model.conditions, bumped_down, model.biases, model.train_prevalence, "test", 3),
                    batch,
                )
                assert grad[i, j] == pytest.approx((up - down) / (2 * h), abs=1e-6)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            loss_and_gradient(model_q1(), [])


def toy_dataset(rng, n=16, d=4, q=2, separable=True):
    examples = []
    for _ in range(n):
        labels = rng.integers(0, 2, size=q).astype(float)
        base = np.concatenate([labels, rng.normal(scale=0.1, size=d - q)]) if separable else rng.normal(size=d)
        features = np.stack([base + rng.normal(scale=0.05, size=d) for _ in range(rng.integers(1, 4))])
        examples.append((features, labels))
    return examples


class TestTrain:
    def _sets(self, seed=0):
        rng = np.random.default_rng(seed)
        train_set = toy_dataset(rng, n=20)
        val_set = toy_dataset(rng, n=12)
        return train_set, val_set

    def test_checkpoint_count(self):
        train_set, val_set = self._sets()
        result = train(train_set, val_set, ("a", "b"), "test", TrainConfig(epochs=10, lr=0.5, batch_size=8, seed=0))
        assert len(result.history) == 200

    def test_lr_zero_keeps_initialization(self):
        train_set, val_set = self._sets()
        result = train(train_set, val_set, ("a", "b"), "test", TrainConfig(epochs=2, lr=0.0, batch_size=8, seed=0))
        assert np.all(result.model.weights == 0.0)
        metrics = [h.val_macro_auroc for h in result.history]
        assert len(set(metrics)) == 1
        # first-occurrence tie-break
        assert result.best_step == result.history[0].step

    def test_deterministic_given_seed(self):
        train_set, val_set = self._sets()
        config = TrainConfig(epochs=3, lr=0.5, batch_size=4, seed=11)
        first = train(train_set, val_set, ("a", "b"), "test", config)
        second = train(train_set, val_set, ("a", "b"), "test", config)
        assert first.history == second.history
        assert np.array_equal(first.model.weights, second.model.weights)

    def test_best_checkpoint_is_argmax_first_occurrence(self):
        train_set, val_set = self._sets()
        result = train(train_set, val_set, ("a", "b"), "test", TrainConfig(epochs=2, lr=0.5, batch_size=8, seed=3))
        metrics = [h.val_macro_auroc for h in result.history]
        best = max(metrics)
        assert result.history[metrics.index(best)].step == result.best_step

    def test_learns_separable_data(self):
        train_set, val_set = self._sets(seed=5)
        result = train(train_set, val_set, ("a", "b"), "test", TrainConfig(epochs=10, lr=2.0, batch_size=4, seed=0))
        assert max(h.val_macro_auroc for h in result.history) >= 0.9

    def test_empty_sets_rejected(self):
        train_set, val_set = self._sets()
        with pytest.raises(CorpusError):
            train([], val_set, ("a", "b"), "test")
        with pytest.raises(CorpusError):
            train(train_set, [], ("a", "b"), "test")

    def test_single_class_condition_rejected(self):
        rng = np.random.default_rng(0)
        bad = [(rng.normal(size=(1, 4)), np.array([1.0, 1.0])) for _ in range(4)]
        with pytest.raises(CorpusError, match="prevalence"):
            train_prevalence_of(bad, ("a", "b"))


class TestCheckpointFile:
    def test_round_trip(self, tmp_path):
        train_set = toy_dataset(np.random.default_rng(0))
        val_set = toy_dataset(np.random.default_rng(1), n=8)
        result = train(train_set, val_set, ("a", "b"), "hashing-64-s13", TrainConfig(epochs=1, lr=0.5, batch_size=8, seed=0))
        path = tmp_path / "model.ckpt"
        save_model(result, path)
        loaded, meta = load_model(path)
        assert np.array_equal(loaded.weights, result.model.weights)
        assert np.array_equal(loaded.biases, result.model.biases)
        assert loaded.conditions == ("a", "b")
        assert meta["format_version"] == 1
        assert len(meta["checkpoint_history"]) == 20
        assert meta["training_config"]["epochs"] == 1

    def test_version_check(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_model(model_q1(), path)
        payload = path.read_text().replace('"format_version": 1', '"format_version": 99')
        path.write_text(payload)
        with pytest.raises(CorpusError, match="format_version"):
            load_model(path)
