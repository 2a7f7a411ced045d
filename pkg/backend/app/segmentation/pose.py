"""OpenPose BODY_25B keypoints to normalized 75-dimensional feature vectors.

Feature layout is the OpenPose flat array: index ``3j`` is the x of joint
``j``, ``3j + 1`` its y and ``3j + 2`` its confidence. Coordinates are divided
by the frame dimensions; confidences pass through. A frame without a
detected person becomes an all-zero vector flagged ``detected=False``.

Upstream extraction used ``number_people_max=1`` and ``net_resolution=208``;
any file following the OpenPose output schema is accepted.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import train_test_split

from .exceptions import ChecksumMismatch, ConfigError, KeypointError, SchemaError, SequenceError
from .serializers import KeypointFileSerializer, VideoMetaSerializer, first_error
from .storage import PathLike, atomic_write, parse_timeline, read_json
from .timeline import DEFAULT_FPS, Timeline, segments_to_labels

logger = logging.getLogger(__name__)

N_JOINTS = 25
N_FEATURES = 3 * N_JOINTS

_FRAME_INDEX = re.compile(r"(\d+)_keypoints\.json$")


@dataclass(frozen=True, eq=False)
class PoseFrame:
    joints: np.ndarray  # (25, 3): x, y, confidence
    detected: bool

    @property
    def features(self) -> np.ndarray:
        return self.joints.reshape(-1)


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    video_id: str
    fps: float
    frames: np.ndarray  # (n, 75)
    detected: np.ndarray  # (n,) bool

    def __len__(self) -> int:
        return int(self.frames.shape[0])


@dataclass(frozen=True)
class VideoMeta:
    width: float = 960.0
    height: float = 540.0
    fps: float = DEFAULT_FPS

    @classmethod
    def from_payload(cls, payload: Any, source: str = "metadata") -> "VideoMeta":
        serializer = VideoMetaSerializer(data=payload)
        if not serializer.is_valid():
            raise SchemaError(f"{source}: {first_error(serializer.errors)}", serializer.errors)
        return cls(**serializer.validated_data)


@dataclass(frozen=True)
class GroundTruth:
    video_id: str
    timeline: Timeline
    md5: Optional[str] = None


@dataclass(frozen=True)
class DatasetSplit:
    train: Tuple[str, ...]
    test: Tuple[str, ...]
    seed: int


def parse_pose_frame(record: Mapping[str, Any], frame_width: float, frame_height: float) -> PoseFrame:
    """Normalize one OpenPose frame record; the first listed person is used."""

    if frame_width <= 0 or frame_height <= 0:
        raise KeypointError(f"frame dimensions must be positive, got {frame_width}x{frame_height}")
    serializer = KeypointFileSerializer(data=record)
    if not serializer.is_valid():
        raise KeypointError(f"malformed keypoints: {first_error(serializer.errors)}", serializer.errors)
    people = serializer.validated_data["people"]
    if not people:
        return PoseFrame(np.zeros((N_JOINTS, 3)), False)
    if len(people) > 1:
        logger.debug("%d people in frame, keeping the first", len(people))
    flat = people[0].get("pose_keypoints_2d")
    try:
        values = np.asarray(flat, dtype=np.float64)
    except (TypeError, ValueError):
        raise KeypointError("malformed keypoints: non-numeric values") from None
    if values.ndim != 1 or values.size != N_FEATURES:
        size = values.size if values.ndim == 1 else "nested"
        raise KeypointError(f"malformed keypoints: expected {N_FEATURES} values, got {size}")
    joints = values.reshape(N_JOINTS, 3).copy()
    joints[:, 0] /= frame_width
    joints[:, 1] /= frame_height
    return PoseFrame(joints, True)


def _frame_index(name: str) -> Optional[int]:
    match = _FRAME_INDEX.search(name)
    return int(match.group(1)) if match else None


def _keypoint_sources(path: Path) -> List[Tuple[str, bytes]]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file() and p.suffix == ".json")
        return [(p.name, p.read_bytes()) for p in files if p.name != "meta.json"]
    if zipfile.is_zipfile(path):
        with zipfile.ZipFile(path) as archive:
            names = sorted(n for n in archive.namelist() if n.endswith(".json"))
            return [
                (Path(n).name, archive.read(n)) for n in names if Path(n).name != "meta.json"
            ]
    raise FileNotFoundError(f"not a keypoint directory or zip archive: {path}")


def _ordered(sources: List[Tuple[str, bytes]]) -> List[Tuple[int, str, bytes]]:
    indices = [_frame_index(name) for name, _ in sources]
    if all(index is None for index in indices):
        return [(i, name, raw) for i, (name, raw) in enumerate(sources)]
    if any(index is None for index in indices):
        stray = next(name for (name, _), index in zip(sources, indices) if index is None)
        raise SequenceError(f"{stray}: no frame index in filename")
    ordered = sorted(zip(indices, sources), key=lambda item: item[0])
    first = ordered[0][0]
    present = {index for index, _ in ordered}
    if len(present) != len(ordered):
        raise SequenceError("duplicate frame index in keypoint files")
    missing = sorted(set(range(first, first + len(ordered))) - present)
    if missing:
        shown = ", ".join(str(i) for i in missing[:10])
        raise SequenceError(f"missing keypoint frames: {shown}")
    return [(index - first, name, raw) for index, (name, raw) in ordered]


def load_video_features(path: PathLike, meta: Optional[VideoMeta] = None, video_id: str = "") -> FeatureSequence:
    """Parse a directory or zip archive of per-frame keypoint files.

    ``meta`` defaults to a ``meta.json`` record next to the frames, then to a
    960x540 frame at 24 fps.
    """

    path = Path(path)
    if meta is None:
        meta_path = path / "meta.json" if path.is_dir() else path.with_suffix(".meta.json")
        meta = VideoMeta.from_payload(read_json(meta_path), meta_path.name) if meta_path.exists() else VideoMeta()
    frames = []
    detected = []
    for index, name, raw in _ordered(_keypoint_sources(path)):
        try:
            record = json.loads(raw)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise KeypointError(f"frame {index} ({name}): unreadable record: {exc}") from exc
        try:
            frame = parse_pose_frame(record, meta.width, meta.height)
        except KeypointError as exc:
            raise KeypointError(f"frame {index} ({name}): {exc}") from exc
        frames.append(frame.features)
        detected.append(frame.detected)
    if not frames:
        raise SequenceError(f"{path.name}: empty sequence")
    sequence = FeatureSequence(
        video_id or path.name.split(".")[0],
        meta.fps,
        np.vstack(frames),
        np.asarray(detected, dtype=bool),
    )
    missed = int((~sequence.detected).sum())
    logger.info("%s: %d frames, %d without a detected person", sequence.video_id, len(sequence), missed)
    return sequence


def save_features(path: PathLike, sequence: FeatureSequence) -> None:
    """Feature cache: ``.npz`` with ``features`` (n x 75), ``detected``, ``video_id``, ``fps``."""

    with atomic_write(path, "wb") as handle:
        np.savez(
            handle,
            features=sequence.frames,
            detected=sequence.detected,
            video_id=np.array(sequence.video_id),
            fps=np.array(sequence.fps),
        )


def load_features(path: PathLike) -> FeatureSequence:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            frames = np.asarray(data["features"], dtype=np.float64)
            sequence = FeatureSequence(
                str(data["video_id"]), float(data["fps"]), frames, np.asarray(data["detected"], dtype=bool)
            )
    except (OSError, KeyError, ValueError, zipfile.BadZipFile) as exc:
        raise SchemaError(f"{path.name}: unreadable feature cache ({exc})") from exc
    if frames.ndim != 2 or frames.shape[1] != N_FEATURES:
        raise SchemaError(f"{path.name}: feature cache must be n x {N_FEATURES}")
    return sequence


def load_annotation(path: PathLike) -> GroundTruth:
    path = Path(path)
    timeline, md5 = parse_timeline(read_json(path), path.name)
    return GroundTruth(timeline.video_id or path.stem, timeline, md5)


def verify_checksum(gt: GroundTruth, video_path: PathLike) -> Optional[str]:
    """MD5 of ``video_path``; raises ``ChecksumMismatch`` if it differs from the annotation."""

    if not gt.md5:
        return None
    digest = hashlib.md5()
    with open(video_path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    actual = digest.hexdigest()
    if actual.lower() != gt.md5.lower():
        raise ChecksumMismatch(f"{gt.video_id}: md5 {actual} does not match annotation {gt.md5}")
    return actual


def split_dataset(ids: Sequence[str], ratio: float = 0.8, seed: int = 0) -> DatasetSplit:
    """Random train/test split with ``round(ratio * len(ids))`` training videos."""

    if not 0 < ratio < 1:
        raise ConfigError("ratio must lie in (0, 1)")
    if not ids:
        raise ConfigError("ids must not be empty")
    ordered = sorted(ids)
    n_train = int(round(ratio * len(ordered)))
    if n_train in (0, len(ordered)):
        shuffled = list(np.random.default_rng(seed).permutation(ordered))
        return DatasetSplit(tuple(shuffled[:n_train]), tuple(shuffled[n_train:]), seed)
    train, test = train_test_split(ordered, train_size=n_train, random_state=seed, shuffle=True)
    return DatasetSplit(tuple(train), tuple(test), seed)


def assemble_frames(
    features: Mapping[str, FeatureSequence],
    annotations: Mapping[str, GroundTruth],
    ids: Iterable[str],
) -> Tuple[np.ndarray, np.ndarray]:
    """Stack the labeled frames of ``ids`` into ``(X, y)`` for training."""

    xs, ys = [], []
    for video_id in ids:
        sequence = features[video_id]
        timeline = annotations[video_id].timeline
        if len(sequence) != timeline.n_frames:
            raise SequenceError(
                f"{video_id}: {len(sequence)} feature frames but annotation has {timeline.n_frames}"
            )
        xs.append(sequence.frames)
        ys.append(segments_to_labels(timeline).labels)
    if not xs:
        raise SequenceError("empty sequence")
    return np.vstack(xs), np.concatenate(ys)

