"""File formats and atomic writes.

Timeline files: ``{"video_id", "fps", "n_frames", "segments": [{"class",
"start_frame", "end_frame"}]}`` (optionally ``"md5"``).
ProbSequence files: ``{"video_id", "fps", "classes", "probs"}`` where
``probs`` is an n x K list of floats.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Any, Dict, Iterator, List, Tuple, Union

import numpy as np

from .exceptions import SchemaError
from .serializers import ProbSequenceFileSerializer, TimelineFileSerializer, first_error
from .timeline import CLASS_NAMES, Timeline

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


@contextmanager
def atomic_write(path: PathLike, mode: str = "w") -> Iterator[IO]:
    """Write to a temporary sibling of ``path`` and rename it into place."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    encoding = None if "b" in mode else "utf-8"
    try:
        with os.fdopen(fd, mode, encoding=encoding) as handle:
            yield handle
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise


def write_json(path: PathLike, payload: Any) -> None:
    with atomic_write(path) as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def read_json(path: PathLike) -> Any:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as handle:
            return json.load(handle)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path.name}: not valid JSON ({exc.msg} at line {exc.lineno})") from exc


def parse_timeline(payload: Any, source: str = "timeline") -> Tuple[Timeline, Any]:
    """Validate a Timeline-file payload; returns the timeline and its md5."""

    serializer = TimelineFileSerializer(data=payload)
    if not serializer.is_valid():
        raise SchemaError(f"{source}: {first_error(serializer.errors)}", serializer.errors)
    data = serializer.validated_data
    return data["timeline"], data.get("md5")


def read_timeline(path: PathLike) -> Timeline:
    path = Path(path)
    timeline, _ = parse_timeline(read_json(path), path.name)
    return timeline


def write_timeline(path: PathLike, timeline: Timeline, md5: Any = None) -> None:
    write_json(path, TimelineFileSerializer.dump(timeline, md5))
    logger.debug("wrote timeline %s (%d segments)", path, len(timeline))


def read_probs(path: PathLike) -> Tuple[str, float, np.ndarray]:
    """Return ``(video_id, fps, probs)`` from a ProbSequence file."""

    path = Path(path)
    serializer = ProbSequenceFileSerializer(data=read_json(path))
    if not serializer.is_valid():
        raise SchemaError(f"{path.name}: {first_error(serializer.errors)}", serializer.errors)
    data = serializer.validated_data
    return data.get("video_id") or path.stem, data["fps"], data["probs"]


def write_probs(path: PathLike, video_id: str, fps: float, probs: np.ndarray) -> None:
    payload: Dict[str, Any] = {
        "video_id": video_id,
        "fps": fps,
        "classes": list(CLASS_NAMES[: probs.shape[1]]),
        "probs": np.asarray(probs, dtype=np.float64).tolist(),
    }
    write_json(path, payload)


def list_inputs(path: PathLike, suffix: str) -> List[Path]:
    """A single file, or every ``*suffix`` file of a directory in name order."""

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file or directory: {path}")
    if path.is_file():
        return [path]
    return sorted(p for p in path.iterdir() if p.is_file() and p.name.endswith(suffix))


def write_csv(path: PathLike, frame, index: bool = False) -> None:
    """Write a ``pandas.DataFrame`` as CSV through ``atomic_write``."""

    with atomic_write(path) as handle:
        frame.to_csv(handle, index=index)
