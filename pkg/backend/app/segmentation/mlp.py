"""Per-frame skill classifier: a NumPy multilayer perceptron trained with Adam.

The network maps a 75-dim pose vector through three hidden layers to ten
logits; probabilities are the softmax of the logits and the loss is the mean
cross-entropy. Everything is float64 so analytic gradients can be checked
against central finite differences.
"""

from __future__ import annotations

import copy
import json
import logging
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .exceptions import ConfigError, ModelFileError, SequenceError, SkillSegError
from .serializers import ACTIVATIONS, ModelHeaderSerializer, first_error
from .storage import PathLike, atomic_write, write_csv
from .timeline import DEFAULT_FPS, N_CLASSES, LabelSequence

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
LEAKY_SLOPE = 0.01
PROB_FLOOR = 1e-12
N_INPUTS = 75


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _leaky_relu(z):
    return np.where(z >= 0, z, LEAKY_SLOPE * z)


def _leaky_relu_grad(z):
    return np.where(z >= 0, 1.0, LEAKY_SLOPE)


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z):
    return (z > 0).astype(np.float64)


def _sigmoid_grad(z):
    s = _sigmoid(z)
    return s * (1.0 - s)


def _tanh_grad(z):
    t = np.tanh(z)
    return 1.0 - t * t


def _silu(z):
    return z * _sigmoid(z)


def _silu_grad(z):
    s = _sigmoid(z)
    return s + z * s * (1.0 - s)


# name -> (f, f')
_ACTIVATION_FUNCS: Dict[str, Tuple[Callable, Callable]] = {
    "leaky_relu": (_leaky_relu, _leaky_relu_grad),
    "relu": (_relu, _relu_grad),
    "sigmoid": (_sigmoid, _sigmoid_grad),
    "tanh": (np.tanh, _tanh_grad),
    "silu": (_silu, _silu_grad),
}
assert set(_ACTIVATION_FUNCS) == set(ACTIVATIONS)


def _check_activation(name: str) -> str:
    if name not in _ACTIVATION_FUNCS:
        raise ModelFileError(f'unsupported activation "{name}"')
    return name


@dataclass
class MlpModel:
    layer_dims: Tuple[int, ...]
    weights: List[np.ndarray]  # weights[l] has shape (layer_dims[l], layer_dims[l + 1])
    biases: List[np.ndarray]
    activation: str = "leaky_relu"
    config: Dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        _check_activation(self.activation)
        expected = list(zip(self.layer_dims[:-1], self.layer_dims[1:]))
        if [w.shape for w in self.weights] != expected or [b.shape for b in self.biases] != [
            (d,) for _, d in expected
        ]:
            raise ModelFileError("parameter shapes do not match layer_dims")

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def parameters(self) -> List[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    epochs: int = 500
    learning_rate: float = 0.0001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    activation: str = "leaky_relu"
    hidden: Tuple[int, ...] = (256, 128, 64)
    log_every: int = 50

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be at least 1")
        if min(self.learning_rate, self.beta1, self.beta2, self.adam_eps) <= 0:
            raise ConfigError("learning rate and Adam constants must be positive")
        if self.activation not in _ACTIVATION_FUNCS:
            raise ConfigError(f'unsupported activation "{self.activation}"')


@dataclass(frozen=True, eq=False)
class ProbSequence:
    """Per-frame class probabilities, one row per frame."""

    probs: np.ndarray
    video_id: str = ""
    fps: float = DEFAULT_FPS

    def __len__(self) -> int:
        return int(self.probs.shape[0])

    def argmax_labels(self) -> LabelSequence:
        # np.argmax returns the first maximum: ties go to the lowest class id.
        return LabelSequence(np.argmax(self.probs, axis=1), self.fps)


def init_model(
    layer_dims: Sequence[int] = (N_INPUTS, 256, 128, 64, N_CLASSES),
    activation: str = "leaky_relu",
    seed: int = 0,
) -> MlpModel:
    """Kaiming-style uniform fan-in initialisation."""

    _check_activation(activation)
    rng = np.random.default_rng(seed)
    if activation == "leaky_relu":
        hidden_bound = np.sqrt(6.0 / (1.0 + LEAKY_SLOPE**2))
    elif activation == "relu":
        hidden_bound = np.sqrt(6.0)
    else:
        hidden_bound = np.sqrt(3.0)
    weights, biases = [], []
    pairs = list(zip(layer_dims[:-1], layer_dims[1:]))
    for index, (fan_in, fan_out) in enumerate(pairs):
        bound = (hidden_bound if index < len(pairs) - 1 else np.sqrt(3.0)) / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bias_bound = 1.0 / np.sqrt(fan_in)
        biases.append(rng.uniform(-bias_bound, bias_bound, size=fan_out))
    return MlpModel(tuple(layer_dims), weights, biases, activation)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _check_inputs(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_inputs:
        raise SkillSegError(f"dimension mismatch: expected {model.n_inputs} features, got {x.shape[-1]}")
    return x


def _forward(model: MlpModel, x: np.ndarray):
    f = _ACTIVATION_FUNCS[model.activation][0]
    h = x
    cache = []
    last = len(model.weights) - 1
    for index, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        cache.append((h, z))
        if index < last:
            h = f(z)
    return z, cache


def forward(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Class probabilities for one 75-vector (or a batch of them)."""

    x = _check_inputs(model, features)
    logits, _ = _forward(model, x)
    return softmax(logits)


def _loss_and_grads(model: MlpModel, x: np.ndarray, y: np.ndarray):
    f_grad = _ACTIVATION_FUNCS[model.activation][1]
    logits, cache = _forward(model, x)
    log_probs = _log_softmax(logits)
    rows = np.arange(y.size)
    loss = -log_probs[rows, y].mean()

    delta = np.exp(log_probs)
    delta[rows, y] -= 1.0
    delta /= y.size
    grads_w: List[np.ndarray] = [None] * len(model.weights)
    grads_b: List[np.ndarray] = [None] * len(model.weights)
    for index in range(len(model.weights) - 1, -1, -1):
        h_in, _ = cache[index]
        grads_w[index] = h_in.T @ delta
        grads_b[index] = delta.sum(axis=0)
        if index:
            delta = (delta @ model.weights[index].T) * f_grad(cache[index - 1][1])
    return float(loss), grads_w, grads_b


def sample_loss(model: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    x = _check_inputs(model, np.atleast_2d(x))
    logits, _ = _forward(model, x)
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    return float(-_log_softmax(logits)[np.arange(y.size), y].mean())


class Adam:
    def __init__(self, params: List[np.ndarray], cfg: TrainConfig) -> None:
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        cfg = self.cfg
        self.t += 1
        correction1 = 1.0 - cfg.beta1**self.t
        correction2 = 1.0 - cfg.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= cfg.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + cfg.adam_eps)


def _check_dataset(model: MlpModel, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x = _check_inputs(model, np.atleast_2d(x))
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.size == 0:
        raise SequenceError("empty dataset")
    if x.shape[0] != y.size:
        raise SkillSegError(f"dimension mismatch: {x.shape[0]} samples but {y.size} labels")
    if y.min() < 0 or y.max() >= model.n_classes:
        raise SkillSegError(f"labels must lie in [0, {model.n_classes - 1}]")
    return x, y


def train(model: MlpModel, x: np.ndarray, y: np.ndarray, cfg: TrainConfig = TrainConfig()):
    """Mini-batch Adam on mean cross-entropy.

    Returns ``(trained_model, loss_history)`` where ``loss_history[e]`` is the
    sample-weighted mean loss of epoch ``e``. The input model is not modified.
    """

    x, y = _check_dataset(model, x, y)
    model = copy.deepcopy(model)
    model.config = asdict(cfg)
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(model.parameters(), cfg)
    history = np.empty(cfg.epochs)
    n = y.size
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads_w, grads_b = _loss_and_grads(model, x[batch], y[batch])
            total += loss * batch.size
            grads = [g for pair in zip(grads_w, grads_b) for g in pair]
            optimizer.step(model.parameters(), grads)
        history[epoch] = total / n
        if cfg.log_every and (epoch + 1) % cfg.log_every == 0:
            logger.debug("epoch %d/%d mean loss %.6f", epoch + 1, cfg.epochs, history[epoch])
    logger.info("trained %d epochs on %d frames, final loss %.6f", cfg.epochs, n, history[-1])
    return model, history


def predict_proba(model: MlpModel, x: np.ndarray) -> np.ndarray:
    return forward(model, np.atleast_2d(x))


def predict_sequence(model: MlpModel, feats) -> ProbSequence:
    """One probability row per frame of a ``FeatureSequence``."""

    return ProbSequence(predict_proba(model, feats.frames), feats.video_id, feats.fps)


def gradient_check(model: MlpModel, sample: Tuple[np.ndarray, int], step: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences."""

    x = _check_inputs(model, np.atleast_2d(sample[0]))
    y = np.atleast_1d(np.asarray(sample[1], dtype=np.int64))
    _, grads_w, grads_b = _loss_and_grads(model, x, y)
    analytic = [g for pair in zip(grads_w, grads_b) for g in pair]
    worst = 0.0
    for param, grad in zip(model.parameters(), analytic):
        flat = param.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            plus = sample_loss(model, x, y)
            flat[i] = saved - step
            minus = sample_loss(model, x, y)
            flat[i] = saved
            numeric = (plus - minus) / (2.0 * step)
            denom = max(1e-8, abs(flat_grad[i]) + abs(numeric))
            worst = max(worst, abs(flat_grad[i] - numeric) / denom)
    return worst


def evaluate(model: MlpModel, x: np.ndarray, y: np.ndarray):
    """Frame report on a labeled set, with the mean cross-entropy attached."""

    from .metrics import frame_metrics

    x, y = _check_dataset(model, x, y)
    probs = predict_proba(model, x)
    report = frame_metrics(LabelSequence(np.argmax(probs, axis=1)), LabelSequence(y))
    report.loss = float(-np.log(np.maximum(probs[np.arange(y.size), y], PROB_FLOOR)).mean())
    return report


def save_model(path: PathLike, model: MlpModel) -> None:
    """Versioned ``.npz`` container: JSON header plus ``W{l}``/``b{l}`` arrays."""

    header = {
        "format_version": MODEL_FORMAT_VERSION,
        "layer_dims": list(model.layer_dims),
        "activation": model.activation,
        "config": model.config,
    }
    arrays = {"header": np.array(json.dumps(header))}
    for index, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"W{index}"] = w
        arrays[f"b{index}"] = b
    with atomic_write(path, "wb") as handle:
        np.savez(handle, **arrays)


def load_model(path: PathLike) -> MlpModel:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            serializer = ModelHeaderSerializer(data=header)
            if not serializer.is_valid():
                raise ModelFileError(f"{path.name}: {first_error(serializer.errors)}", serializer.errors)
            meta = serializer.validated_data
            if meta["format_version"] != MODEL_FORMAT_VERSION:
                raise ModelFileError(
                    f"{path.name}: model format version {meta['format_version']}, "
                    f"expected {MODEL_FORMAT_VERSION}"
                )
            count = len(meta["layer_dims"]) - 1
            weights = [np.array(data[f"W{i}"], dtype=np.float64) for i in range(count)]
            biases = [np.array(data[f"b{i}"], dtype=np.float64) for i in range(count)]
    except ModelFileError:
        raise
    except (OSError, EOFError, KeyError, ValueError, zipfile.BadZipFile) as exc:
        raise ModelFileError(f"{path.name}: corrupt model file ({exc})") from exc
    return MlpModel(tuple(meta["layer_dims"]), weights, biases, meta["activation"], dict(meta["config"]))


def write_loss_history(path: PathLike, history: np.ndarray) -> None:
    write_csv(path, pd.DataFrame({"epoch": np.arange(1, len(history) + 1), "mean_loss": history}))
