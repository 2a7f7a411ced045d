"""Markov smoothing of per-frame class probabilities.

The label chain switches class with probability ``epsilon`` per other class
and stays with probability ``1 - (K - 1) * epsilon``. The most probable label
path given the classifier's rows is found exactly by dynamic programming in
the log domain, with a uniform prior on the first frame.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .exceptions import ConfigError, SequenceError
from .mlp import PROB_FLOOR, ProbSequence
from .timeline import DEFAULT_FPS, N_CLASSES, LabelSequence

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 10 ** 6

Probs = Union[ProbSequence, np.ndarray, Sequence[Sequence[float]]]


@dataclass(frozen=True)
class TransitionModel:
    n_classes: int = N_CLASSES
    epsilon: float = 0.01

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ConfigError("at least two classes are needed")
        bound = 1.0 / self.n_classes
        if not (0 < self.epsilon <= bound or math.isclose(self.epsilon, bound)):
            raise ConfigError(
                f"epsilon must lie in (0, {bound:g}] for {self.n_classes} classes, got {self.epsilon:g}"
            )

    @property
    def self_weight(self) -> float:
        if math.isclose(self.epsilon, 1.0 / self.n_classes):
            return self.epsilon
        return 1.0 - (self.n_classes - 1) * self.epsilon

    def log_matrix(self) -> np.ndarray:
        """``K x K`` log transition weights, rows indexed by the previous class."""

        matrix = np.full((self.n_classes, self.n_classes), math.log(self.epsilon))
        np.fill_diagonal(matrix, math.log(self.self_weight))
        return matrix


def transition_logprob(model: TransitionModel, prev: int, cur: int) -> float:
    for label in (prev, cur):
        if not 0 <= int(label) < model.n_classes:
            raise ConfigError(f"class {label} outside [0, {model.n_classes - 1}]")
    return math.log(model.self_weight if int(prev) == int(cur) else model.epsilon)


def _emissions(probs: Probs, model: TransitionModel) -> np.ndarray:
    """Validated, row-normalised, floored log emissions."""

    rows = probs.probs if isinstance(probs, ProbSequence) else probs
    try:
        rows = np.asarray(rows, dtype=np.float64)
    except (TypeError, ValueError):
        raise SequenceError("malformed rows: not a numeric array") from None
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise SequenceError("empty sequence" if rows.size == 0 else "malformed rows: expected an n x K array")
    if rows.shape[1] != model.n_classes:
        raise SequenceError(f"malformed rows: {rows.shape[1]} columns for {model.n_classes} classes")
    if not np.all(np.isfinite(rows)) or np.any(rows < 0):
        raise SequenceError("malformed rows: probabilities must be finite and non-negative")
    sums = rows.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        bad = int(np.flatnonzero(sums[:, 0] <= 0)[0])
        raise SequenceError(f"malformed rows: row {bad} sums to zero")
    return np.log(np.maximum(rows / sums, PROB_FLOOR))


def _fps(probs: Probs) -> float:
    return probs.fps if isinstance(probs, ProbSequence) else DEFAULT_FPS


def viterbi_decode(probs: Probs, model: TransitionModel = TransitionModel()) -> LabelSequence:
    log_e = _emissions(probs, model)
    n, k = log_e.shape
    log_t = model.log_matrix()
    back = np.zeros((n, k), dtype=np.int64)
    delta = log_e[0] - math.log(k)
    for i in range(1, n):
        scores = delta[:, None] + log_t
        back[i] = np.argmax(scores, axis=0)
        delta = scores[back[i], np.arange(k)] + log_e[i]
    path = np.empty(n, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for i in range(n - 1, 0, -1):
        path[i - 1] = back[i, path[i]]
    logger.debug(
        "viterbi: %d frames, %d switches (epsilon=%g)", n, int(np.count_nonzero(np.diff(path))), model.epsilon
    )
    return LabelSequence(path, _fps(probs))


def path_score(probs: Probs, model: TransitionModel, labels: Union[LabelSequence, Sequence[int]]) -> float:
    """Log probability of ``labels`` under the chain, prior included."""

    log_e = _emissions(probs, model)
    path = labels.labels if isinstance(labels, LabelSequence) else np.asarray(labels, dtype=np.int64)
    if path.size != log_e.shape[0]:
        raise SequenceError(f"length mismatch: {path.size} labels for {log_e.shape[0]} frames")
    log_t = model.log_matrix()
    score = -math.log(log_e.shape[1]) + float(log_e[np.arange(path.size), path].sum())
    return score + float(log_t[path[:-1], path[1:]].sum())


def brute_force_decode(probs: Probs, model: TransitionModel = TransitionModel()) -> LabelSequence:
    """Exact argmax by enumerating every label path; small instances only."""

    log_e = _emissions(probs, model)
    n, k = log_e.shape
    if k ** n > BRUTE_FORCE_LIMIT:
        raise ConfigError(f"instance too large: {k}^{n} label paths")
    log_t = model.log_matrix()
    best, best_score = None, -math.inf
    for candidate in itertools.product(range(k), repeat=n):
        path = np.asarray(candidate)
        score = float(log_e[np.arange(n), path].sum() + log_t[path[:-1], path[1:]].sum())
        if score > best_score:
            best, best_score = path, score
    return LabelSequence(best, _fps(probs))
