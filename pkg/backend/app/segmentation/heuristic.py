"""Heuristic temporal segmentation of per-frame labels.

Three passes over the raw labels:

* sliding window mode extraction (``swme``) turns the frame axis into
  interval records ``(mode, first index, last index)``,
* filtering and noise removal (``fnr``) replaces each record's class by the
  mode of its neighbourhood of records,
* timeline reconstruction (``tr``) merges equal neighbours and splits the
  frames between merged spans into a contiguous timeline.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from .exceptions import ConfigError, SequenceError
from .timeline import DEFAULT_FPS, N_CLASSES, LabelSequence, SkillClass, Timeline, build_timeline

logger = logging.getLogger(__name__)

MIN_WINDOW = 2


@dataclass(frozen=True)
class HeuristicConfig:
    m: int = 32
    up_num: float = 0.14
    dw_num: float = -0.11
    stride: int = 3
    fnr_radius: int = 2

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ConfigError("m must be at least 1")
        if self.stride < 1:
            raise ConfigError("stride must be at least 1")
        if self.fnr_radius < 0:
            raise ConfigError("fnr_radius must not be negative")


@dataclass(frozen=True)
class IntervalRecord:
    mode_class: SkillClass
    idx_start: int
    idx_end: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode_class", SkillClass(int(self.mode_class)))
        if not 0 <= self.idx_start <= self.idx_end:
            raise SequenceError(f"invalid record bounds {self.idx_start}..{self.idx_end}")


def _values(labels: Union[LabelSequence, Sequence[int]]) -> np.ndarray:
    if isinstance(labels, LabelSequence):
        return labels.labels
    return LabelSequence(np.asarray(labels, dtype=np.int64)).labels


def base_window(labels: Union[LabelSequence, Sequence[int]], cfg: HeuristicConfig = HeuristicConfig()) -> int:
    """Window size from the share of equal adjacent frames over the whole video.

    ``s = 0.5 + (up_num * equal_pairs + dw_num * differing_pairs) / n`` and
    ``w_b = floor((1 - s) * m)``, never below 2.
    """

    values = _values(labels)
    n = values.size
    if n < 2:
        raise SequenceError("sequence too short")
    equal = int(np.count_nonzero(values[1:] == values[:-1]))
    differ = n - 1 - equal
    s = 0.5 + (cfg.up_num * equal + cfg.dw_num * differ) / n
    return max(MIN_WINDOW, int(math.floor((1 - s) * cfg.m)))


def _window_mode(window: np.ndarray) -> Optional[int]:
    counts = np.bincount(window, minlength=N_CLASSES)
    top = counts.max()
    if np.count_nonzero(counts == top) > 1:
        return None
    return int(np.argmax(counts))


def swme(
    labels: Union[LabelSequence, Sequence[int]],
    cfg: HeuristicConfig = HeuristicConfig(),
    w_b: Optional[int] = None,
) -> List[IntervalRecord]:
    """Scan the labels with a window ending at ``c``, emitting one record per unique mode.

    After a record the window resets to ``w_b`` frames and its end advances
    by ``w_b - stride`` (at least one frame, clamped so the last frame is
    always scanned). A tied window grows to the right by one frame; a tie
    that survives to the last frame goes to the lowest class id. Record
    starts never move backwards.
    """

    values = _values(labels)
    n = values.size
    if w_b is None:
        w_b = base_window(values, cfg)
    if n < w_b:
        raise SequenceError(f"sequence too short: {n} frames for a window of {w_b}")
    step = max(1, w_b - cfg.stride)
    records: List[IntervalRecord] = []
    c, w_s = w_b - 1, w_b
    while True:
        start = c - w_s + 1
        window = values[start : c + 1]
        mode = _window_mode(window)
        if mode is None and c < n - 1:
            w_s += 1
            c += 1
            continue
        if mode is None:
            counts = np.bincount(window, minlength=N_CLASSES)
            mode = int(np.argmax(counts))  # first maximum: lowest class id
        hits = np.flatnonzero(window == mode)
        first = start + int(hits[0])
        if records:
            first = max(first, records[-1].idx_start)
        records.append(IntervalRecord(SkillClass(mode), first, start + int(hits[-1])))
        if c == n - 1:
            break
        w_s = w_b
        c = min(c + step, n - 1)
    logger.debug("swme: %d records from %d frames (w_b=%d)", len(records), n, w_b)
    return records


def fnr(records: Sequence[IntervalRecord], cfg: HeuristicConfig = HeuristicConfig()) -> List[IntervalRecord]:
    """Replace each record's class by the mode of records ``j - r .. j + r``.

    Indices are clamped to the record list, so edge records count repeated
    neighbours. Updates read the original classes only; a tied mode keeps the
    record's own class.
    """

    if not records:
        raise SequenceError("empty sequence")
    classes = np.array([int(r.mode_class) for r in records], dtype=np.int64)
    w = classes.size
    radius = cfg.fnr_radius
    out: List[IntervalRecord] = []
    for j, record in enumerate(records):
        idx = np.clip(np.arange(j - radius, j + radius + 1), 0, w - 1)
        mode = _window_mode(classes[idx])
        if mode is None or mode == classes[j]:
            out.append(record)
        else:
            out.append(replace(record, mode_class=SkillClass(mode)))
    return out


def _split(lo: int, hi: int, left: int, right: int, values: Optional[np.ndarray]) -> int:
    """Last frame of the left span when frames ``lo + 1 .. hi`` are contested."""

    midpoint = lo + (hi - lo + 1) // 2
    if values is None or hi <= lo:
        return midpoint
    contested = values[lo + 1 : hi + 1]
    left_hits = np.concatenate(([0], np.cumsum(contested == left)))
    right_hits = np.concatenate(([0], np.cumsum(contested == right)))
    agree = left_hits + (right_hits[-1] - right_hits)
    candidates = np.arange(lo, hi + 1)
    order = sorted(
        range(candidates.size),
        key=lambda k: (-agree[k], abs(candidates[k] - midpoint), -candidates[k]),
    )
    return int(candidates[order[0]])


def tr(
    records: Sequence[IntervalRecord],
    n_frames: int,
    labels: Optional[Union[LabelSequence, Sequence[int]]] = None,
    fps: Optional[float] = None,
    video_id: str = "",
) -> Timeline:
    """Merge consecutive records of one class and expand them into a timeline.

    The first span is stretched to frame 0 and the last to ``n_frames - 1``.
    Frames between two spans (or claimed by both) go to the left span up to
    the midpoint, the left span taking the extra frame. When ``labels`` are
    given the split instead follows the per-frame labels inside that range,
    falling back to the midpoint on ties.
    """

    if not records or n_frames < 1:
        raise SequenceError("empty sequence")
    values = _values(labels) if labels is not None else None
    if values is not None and values.size != n_frames:
        raise SequenceError(f"length mismatch: {values.size} labels for {n_frames} frames")

    spans: List[List[int]] = []
    for record in records:
        if spans and spans[-1][0] == record.mode_class:
            spans[-1][2] = record.idx_end
        else:
            spans.append([int(record.mode_class), record.idx_start, record.idx_end])
    if len(spans) > n_frames:
        raise SequenceError(f"{len(spans)} spans cannot fit {n_frames} frames")

    ends = []
    for (left, _, left_end), (right, right_start, _) in zip(spans, spans[1:]):
        lo, hi = min(left_end, right_start - 1), max(left_end, right_start - 1)
        ends.append(_split(lo, hi, left, right, values))
    ends.append(n_frames - 1)

    # Every span keeps at least one frame and boundaries stay increasing.
    previous = -1
    for j in range(len(ends)):
        ends[j] = max(ends[j], previous + 1)
        previous = ends[j]
    for j in range(len(ends) - 2, -1, -1):
        ends[j] = min(ends[j], ends[j + 1] - 1)

    starts = [0] + [end + 1 for end in ends[:-1]]
    if fps is None:
        fps = labels.fps if isinstance(labels, LabelSequence) else DEFAULT_FPS
    return build_timeline(
        ((label, start, end) for (label, _, _), start, end in zip(spans, starts, ends)),
        n_frames,
        fps,
        video_id,
    )


def heuristic_segment(
    labels: Union[LabelSequence, Sequence[int]],
    cfg: HeuristicConfig = HeuristicConfig(),
    video_id: str = "",
) -> Timeline:
    if not isinstance(labels, LabelSequence):
        labels = LabelSequence(np.asarray(labels, dtype=np.int64))
    w_b = base_window(labels, cfg)
    records = fnr(swme(labels, cfg, w_b), cfg)
    timeline = tr(records, len(labels), labels, labels.fps, video_id)
    logger.debug("heuristic: %d frames -> %d segments (w_b=%d)", len(labels), len(timeline), w_b)
    return timeline
