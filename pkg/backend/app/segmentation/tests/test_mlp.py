"""Tests for the frame classifier: forward pass, training, gradients and model files."""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from app.segmentation.exceptions import ModelFileError, SequenceError, SkillSegError
from app.segmentation.mlp import (
    MlpModel,
    ProbSequence,
    TrainConfig,
    evaluate,
    forward,
    gradient_check,
    init_model,
    load_model,
    predict_sequence,
    sample_loss,
    save_model,
    train,
    write_loss_history,
)
from app.segmentation.pose import FeatureSequence
from app.segmentation.serializers import ACTIVATIONS

SMALL_DIMS = (75, 8, 8, 8, 10)


class ForwardTests(SimpleTestCase):
    def test_output_is_a_distribution(self) -> None:
        model = init_model(SMALL_DIMS, seed=1)
        probs = forward(model, np.random.default_rng(0).normal(size=75))
        self.assertEqual(probs.shape, (10,))
        self.assertTrue(np.all(probs >= 0))
        self.assertAlmostEqual(float(probs.sum()), 1.0, delta=1e-9)

    def test_zero_model_is_uniform(self) -> None:
        model = MlpModel((75, 10), [np.zeros((75, 10))], [np.zeros(10)])
        np.testing.assert_allclose(forward(model, np.ones(75)), np.full(10, 0.1))

    def test_deterministic(self) -> None:
        model = init_model(seed=4)
        x = np.random.default_rng(9).uniform(size=75)
        np.testing.assert_array_equal(forward(model, x), forward(model, x))

    def test_dimension_mismatch(self) -> None:
        with self.assertRaisesMessage(SkillSegError, "dimension mismatch"):
            forward(init_model(SMALL_DIMS), np.zeros(74))

    def test_leaky_relu_slope_only_on_negative_side(self) -> None:
        model = MlpModel(
            (75, 1, 10),
            [np.eye(75, 1), np.ones((1, 10)) * np.arange(10)],
            [np.zeros(1), np.zeros(10)],
        )
        positive = np.zeros(75)
        positive[0] = 2.0
        negative = -positive
        # hidden = 2 and -0.02; logits are hidden * k, so the log-ratio of the
        # last two classes recovers the hidden value.
        for x, hidden in ((positive, 2.0), (negative, -0.02)):
            probs = forward(model, x)
            self.assertAlmostEqual(float(np.log(probs[9] / probs[8])), hidden, places=9)


class GradientCheckTests(SimpleTestCase):
    def test_backprop_matches_finite_differences(self) -> None:
        rng = np.random.default_rng(2024)
        for trial in range(20):
            activation = ACTIVATIONS[trial % len(ACTIVATIONS)]
            with self.subTest(trial=trial, activation=activation):
                model = init_model(SMALL_DIMS, activation, seed=trial)
                x = rng.uniform(0.25, 1.0, size=75)
                y = int(rng.integers(0, 10))
                self.assertLess(gradient_check(model, (x, y)), 1e-4)

    def test_zero_input_gives_finite_gradients(self) -> None:
        error = gradient_check(init_model(SMALL_DIMS, seed=3), (np.zeros(75), 4))
        self.assertTrue(np.isfinite(error))


class TrainTests(SimpleTestCase):
    def test_memorizes_random_samples(self) -> None:
        rng = np.random.default_rng(0)
        x = rng.standard_normal((64, 75))
        y = np.arange(64) % 10
        model, history = train(init_model(seed=0), x, y, TrainConfig())
        self.assertEqual(history.shape, (500,))
        predictions = np.argmax(forward(model, x), axis=1)
        self.assertEqual(float(np.mean(predictions == y)), 1.0)

    def test_one_step_decreases_sample_loss(self) -> None:
        model = init_model(SMALL_DIMS, seed=5)
        x = np.random.default_rng(5).uniform(size=(1, 75))
        y = np.array([3])
        trained, _ = train(model, x, y, TrainConfig(epochs=1, batch_size=1, learning_rate=1e-3))
        self.assertLess(sample_loss(trained, x, y), sample_loss(model, x, y))

    def test_same_seed_same_run(self) -> None:
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=(40, 75)), rng.integers(0, 10, size=40)
        cfg = TrainConfig(epochs=5, batch_size=16, seed=3)
        first, history_a = train(init_model(SMALL_DIMS, seed=1), x, y, cfg)
        second, history_b = train(init_model(SMALL_DIMS, seed=1), x, y, cfg)
        np.testing.assert_array_equal(history_a, history_b)
        for a, b in zip(first.parameters(), second.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_input_model_is_left_untouched(self) -> None:
        model = init_model(SMALL_DIMS, seed=1)
        before = [p.copy() for p in model.parameters()]
        train(model, np.ones((4, 75)), np.zeros(4, dtype=int), TrainConfig(epochs=2))
        for a, b in zip(before, model.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_empty_dataset(self) -> None:
        with self.assertRaisesMessage(SequenceError, "empty dataset"):
            train(init_model(SMALL_DIMS), np.zeros((0, 75)), np.zeros(0, dtype=int), TrainConfig(epochs=1))

    def test_evaluate_reports_loss(self) -> None:
        rng = np.random.default_rng(8)
        x, y = rng.normal(size=(30, 75)), rng.integers(0, 10, size=30)
        report = evaluate(init_model(SMALL_DIMS), x, y)
        self.assertGreater(report.loss, 0)
        self.assertTrue(0 <= report.accuracy <= 1)


class PredictTests(SimpleTestCase):
    def test_one_row_per_frame(self) -> None:
        frames = np.random.default_rng(0).uniform(size=(12, 75))
        probs = predict_sequence(init_model(SMALL_DIMS), FeatureSequence("v", 24.0, frames, np.ones(12, bool)))
        self.assertEqual(probs.probs.shape, (12, 10))
        np.testing.assert_allclose(probs.probs.sum(axis=1), 1.0, atol=1e-9)
        self.assertEqual(probs.video_id, "v")

    def test_uniform_row_argmax_is_lowest_class(self) -> None:
        self.assertEqual(ProbSequence(np.full((1, 10), 0.1)).argmax_labels().tolist(), [0])


class ModelFileTests(SimpleTestCase):
    def setUp(self) -> None:
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.root = Path(tmp.name)

    def test_round_trip_keeps_predictions(self) -> None:
        model = init_model(SMALL_DIMS, "tanh", seed=6)
        save_model(self.root / "m.npz", model)
        loaded = load_model(self.root / "m.npz")
        x = np.random.default_rng(6).normal(size=(5, 75))
        self.assertEqual(loaded.activation, "tanh")
        np.testing.assert_array_equal(forward(loaded, x), forward(model, x))

    def test_truncated_file(self) -> None:
        save_model(self.root / "m.npz", init_model(SMALL_DIMS))
        raw = (self.root / "m.npz").read_bytes()
        (self.root / "m.npz").write_bytes(raw[: len(raw) // 2])
        with self.assertRaises(ModelFileError):
            load_model(self.root / "m.npz")

    def test_unknown_activation(self) -> None:
        header = {"format_version": 1, "layer_dims": [75, 10], "activation": "gelu", "config": {}}
        with open(self.root / "m.npz", "wb") as handle:
            np.savez(handle, header=np.array(json.dumps(header)), W0=np.zeros((75, 10)), b0=np.zeros(10))
        with self.assertRaisesMessage(ModelFileError, "unsupported activation"):
            load_model(self.root / "m.npz")

    def test_version_mismatch(self) -> None:
        header = {"format_version": 99, "layer_dims": [75, 10], "activation": "relu", "config": {}}
        with open(self.root / "m.npz", "wb") as handle:
            np.savez(handle, header=np.array(json.dumps(header)), W0=np.zeros((75, 10)), b0=np.zeros(10))
        with self.assertRaisesMessage(ModelFileError, "format version 99"):
            load_model(self.root / "m.npz")

    def test_loss_history_csv(self) -> None:
        write_loss_history(self.root / "loss.csv", np.array([2.3, 1.9, 1.5]))
        frame = pd.read_csv(self.root / "loss.csv")
        self.assertEqual(list(frame.columns), ["epoch", "mean_loss"])
        self.assertEqual(frame["epoch"].tolist(), [1, 2, 3])
