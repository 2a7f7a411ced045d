"""Synthetic timelines and simulated classifier outputs.

Videos alternate background (``NONE``) and skill segments. Classifier rows
put mass ``alpha`` on the true class and spread the rest evenly; with
probability ``noise`` a row's peak moves to a random wrong class. In
edge-biased mode that probability is tripled for frames close to a segment
edge, which is where a real classifier goes wrong most.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import ConfigError
from .metrics import edge_distances
from .mlp import ProbSequence
from .storage import PathLike, write_probs, write_timeline
from .timeline import DEFAULT_FPS, N_CLASSES, LabelSequence, Segment, Timeline, segments_to_labels

logger = logging.getLogger(__name__)

Bundle = List[Tuple[Timeline, ProbSequence]]


@dataclass(frozen=True)
class SynthConfig:
    n_videos: int = 10
    frames: Tuple[int, int] = (600, 1200)  # target length; the last segment may run past it
    segment_frames: Tuple[int, int] = (72, 208)  # mean 140 frames, 5.83 s at 24 fps
    n_classes: int = N_CLASSES
    noise: float = 0.05
    alpha: float = 0.8
    seed: int = 0
    fps: float = DEFAULT_FPS
    edge_biased: bool = False
    edge_width: int = 5
    edge_factor: float = 3.0

    def __post_init__(self) -> None:
        lo, hi = self.segment_frames
        if lo < 1 or hi < lo:
            raise ConfigError(f"infeasible segment length range {lo}..{hi}")
        if self.frames[0] < 1 or self.frames[1] < self.frames[0]:
            raise ConfigError(f"infeasible frame range {self.frames[0]}..{self.frames[1]}")
        if not 2 <= self.n_classes <= N_CLASSES:
            raise ConfigError(f"class count must lie in [2, {N_CLASSES}]")
        if not 0 <= self.noise < 1:
            raise ConfigError("noise must lie in [0, 1)")
        if not 1.0 / self.n_classes < self.alpha <= 1:
            raise ConfigError(f"alpha must lie in (1/{self.n_classes}, 1]")
        if self.n_videos < 0 or self.fps <= 0:
            raise ConfigError("n_videos must not be negative and fps must be positive")

    @property
    def background(self) -> int:
        """The class playing ``NONE``: the last class id."""

        return self.n_classes - 1


def gen_timeline(cfg: SynthConfig, rng: np.random.Generator, video_id: str = "") -> Timeline:
    target = int(rng.integers(cfg.frames[0], cfg.frames[1] + 1))
    lo, hi = cfg.segment_frames
    skill = bool(rng.random() < 0.5)
    segments: List[Segment] = []
    total = 0
    while total < target:
        length = int(rng.integers(lo, hi + 1))
        label = int(rng.integers(0, cfg.background)) if skill else cfg.background
        segments.append(Segment(label, total, total + length - 1))
        total += length
        skill = not skill
    return Timeline(tuple(segments), total, cfg.fps, video_id)


def _flip_rate(gt: Timeline, cfg: SynthConfig) -> np.ndarray:
    rate = np.full(gt.n_frames, cfg.noise)
    if cfg.edge_biased:
        near = edge_distances(gt) < cfg.edge_width
        rate[near] = min(1.0, cfg.noise * cfg.edge_factor)
    return rate


def gen_probs(gt: Timeline, cfg: SynthConfig, rng: np.random.Generator) -> ProbSequence:
    k = cfg.n_classes
    truth = segments_to_labels(gt).labels
    n = truth.size
    if truth.max() >= k:
        raise ConfigError(f"timeline uses class {int(truth.max())} beyond {k} classes")
    rows = np.full((n, k), (1.0 - cfg.alpha) / (k - 1))
    peak = truth.copy()
    flipped = rng.random(n) < _flip_rate(gt, cfg)
    peak[flipped] = (truth[flipped] + rng.integers(1, k, size=int(flipped.sum()))) % k
    rows[np.arange(n), peak] = cfg.alpha
    logger.debug("%s: %d of %d rows corrupted", gt.video_id or "video", int(flipped.sum()), n)
    return ProbSequence(rows, gt.video_id, gt.fps)


def corrupt_labels(
    labels: LabelSequence,
    p: float,
    rng: np.random.Generator,
    n_classes: int = N_CLASSES,
) -> LabelSequence:
    """Replace each frame, with probability ``p``, by a different random class."""

    if not 0 <= p < 1:
        raise ConfigError("p must lie in [0, 1)")
    values = labels.labels.copy()
    hit = rng.random(values.size) < p
    values[hit] = (values[hit] + rng.integers(1, n_classes, size=int(hit.sum()))) % n_classes
    return LabelSequence(values, labels.fps)


def gen_bundle(cfg: SynthConfig, seed: Optional[int] = None) -> Bundle:
    """``n_videos`` ground-truth timelines with simulated classifier outputs.

    Each video draws from its own child of ``SeedSequence(seed)``, so a video
    does not change when ``n_videos`` grows.
    """

    seed = cfg.seed if seed is None else seed
    bundle: Bundle = []
    for index, child in enumerate(np.random.SeedSequence(seed).spawn(cfg.n_videos)):
        rng = np.random.default_rng(child)
        gt = gen_timeline(cfg, rng, f"synth_{index:03d}")
        bundle.append((gt, gen_probs(gt, cfg, rng)))
    logger.info("generated %d synthetic videos (seed %d)", len(bundle), seed)
    return bundle


def write_bundle(out_dir: PathLike, bundle: Bundle) -> Tuple[Path, Path]:
    """Write ``gt/<video>.json`` Timeline files and ``probs/<video>.json`` ProbSequence files."""

    out_dir = Path(out_dir)
    gt_dir, probs_dir = out_dir / "gt", out_dir / "probs"
    for gt, probs in bundle:
        write_timeline(gt_dir / f"{gt.video_id}.json", gt)
        write_probs(probs_dir / f"{gt.video_id}.json", probs.video_id, probs.fps, probs.probs)
    return gt_dir, probs_dir
