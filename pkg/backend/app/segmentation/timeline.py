"""Skill classes, label sequences, segments and timelines.

Frame indices are inclusive on both ends, so a segment covering frames
``start..end`` lasts ``end - start + 1`` frames. Conversions between frames
and seconds always go through the sequence's ``fps``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np

from .exceptions import SequenceError

DEFAULT_FPS = 24.0


class SkillClass(IntEnum):
    """The nine isometric skills plus the ``NONE`` background class."""

    BL = 0
    FL = 1
    FLAG = 2
    IC = 3
    MAL = 4
    OAFL = 5
    OAHS = 6
    PL = 7
    VSIT = 8
    NONE = 9

    @classmethod
    def from_name(cls, name: str) -> "SkillClass":
        try:
            return cls[name]
        except KeyError:
            raise SequenceError(f'unknown class "{name}"') from None


N_CLASSES = len(SkillClass)
CLASS_NAMES: Tuple[str, ...] = tuple(member.name for member in SkillClass)


def _frozen_labels(values: Union[Sequence[int], np.ndarray]) -> np.ndarray:
    labels = np.array(values, dtype=np.int64).reshape(-1)
    labels.setflags(write=False)
    return labels


@dataclass(frozen=True, eq=False)
class LabelSequence:
    """One class id per frame of a video."""

    labels: np.ndarray
    fps: float = DEFAULT_FPS

    def __post_init__(self) -> None:
        labels = _frozen_labels(self.labels)
        if labels.size and (labels.min() < 0 or labels.max() >= N_CLASSES):
            raise SequenceError(f"labels must lie in [0, {N_CLASSES - 1}]")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def of(cls, values: Iterable[int], fps: float = DEFAULT_FPS) -> "LabelSequence":
        return cls(np.fromiter((int(v) for v in values), dtype=np.int64), fps)

    def __len__(self) -> int:
        return int(self.labels.size)

    def __iter__(self) -> Iterator[int]:
        return (int(v) for v in self.labels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelSequence):
            return NotImplemented
        return self.fps == other.fps and np.array_equal(self.labels, other.labels)

    def tolist(self) -> List[int]:
        return self.labels.tolist()


@dataclass(frozen=True)
class Segment:
    """A labeled run of frames, ``start`` and ``end`` inclusive."""

    label: SkillClass
    start: int
    end: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "label", SkillClass(int(self.label)))
        if not 0 <= self.start <= self.end:
            raise SequenceError(f"invalid segment bounds {self.start}..{self.end}")

    @property
    def duration_frames(self) -> int:
        return self.end - self.start + 1

    def duration_seconds(self, fps: float = DEFAULT_FPS) -> float:
        return self.duration_frames / fps


@dataclass(frozen=True)
class Timeline:
    """Contiguous, maximal, sorted segments covering frames ``0..n_frames-1``."""

    segments: Tuple[Segment, ...]
    n_frames: int
    fps: float = DEFAULT_FPS
    video_id: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        check_contiguous(self.segments, self.n_frames)
        for prev, nxt in zip(self.segments, self.segments[1:]):
            if prev.label == nxt.label:
                raise SequenceError(
                    f"adjacent segments share class {prev.label.name} at frame {nxt.start}"
                )

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self.segments)

    def segments_of(self, label: int) -> List[Segment]:
        return [seg for seg in self.segments if seg.label == label]


def check_contiguous(segments: Sequence[Segment], n_frames: int) -> None:
    """Raise ``SequenceError`` naming the first gap or overlap."""

    if n_frames < 1 or not segments:
        raise SequenceError("empty sequence")
    expected = 0
    for seg in segments:
        if seg.start > expected:
            raise SequenceError(f"gap at frame {expected}")
        if seg.start < expected:
            raise SequenceError(f"overlap at frame {seg.start}")
        expected = seg.end + 1
    if expected != n_frames:
        if expected < n_frames:
            raise SequenceError(f"gap at frame {expected}")
        raise SequenceError(f"overlap at frame {n_frames}: segment ends past frame {n_frames - 1}")


def labels_to_segments(labels: Union[LabelSequence, Sequence[int]], video_id: str = "") -> Timeline:
    """Run-length encode a label sequence into a timeline."""

    if not isinstance(labels, LabelSequence):
        labels = LabelSequence(np.asarray(labels, dtype=np.int64))
    values = labels.labels
    if values.size == 0:
        raise SequenceError("empty sequence")
    starts = np.flatnonzero(np.diff(values)) + 1
    starts = np.concatenate(([0], starts))
    ends = np.concatenate((starts[1:] - 1, [values.size - 1]))
    segments = tuple(
        Segment(SkillClass(int(values[s])), int(s), int(e)) for s, e in zip(starts, ends)
    )
    return Timeline(segments, int(values.size), labels.fps, video_id)


def segments_to_labels(timeline: Timeline) -> LabelSequence:
    """Expand a timeline to one label per frame."""

    check_contiguous(timeline.segments, timeline.n_frames)
    out = np.empty(timeline.n_frames, dtype=np.int64)
    for seg in timeline.segments:
        out[seg.start : seg.end + 1] = int(seg.label)
    return LabelSequence(out, timeline.fps)


def segment_iou(a: Segment, b: Segment) -> float:
    """Intersection over union of two frame spans (0 when disjoint)."""

    inter = min(a.end, b.end) - max(a.start, b.start) + 1
    if inter <= 0:
        return 0.0
    union = a.duration_frames + b.duration_frames - inter
    return inter / union


def build_timeline(
    spans: Iterable[Tuple[int, int, int]],
    n_frames: int,
    fps: float = DEFAULT_FPS,
    video_id: str = "",
) -> Timeline:
    """Timeline from ``(class, start, end)`` triples, merging equal neighbours."""

    merged: List[Segment] = []
    for label, start, end in spans:
        if merged and merged[-1].label == label and merged[-1].end + 1 == start:
            merged[-1] = Segment(merged[-1].label, merged[-1].start, end)
        else:
            merged.append(Segment(SkillClass(int(label)), int(start), int(end)))
    return Timeline(tuple(merged), n_frames, fps, video_id)
