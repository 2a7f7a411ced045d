"""Exception hierarchy shared by the segmentation modules."""

from __future__ import annotations

from typing import Any, Optional


class SkillSegError(ValueError):
    """Base class for every error raised by the pipeline."""


class SequenceError(SkillSegError):
    """Empty, too short, gapped or overlapping sequences and timelines."""


class SchemaError(SkillSegError):
    """A file does not follow its documented format."""

    def __init__(self, message: str, detail: Optional[Any] = None) -> None:
        super().__init__(message)
        self.detail = detail


class KeypointError(SchemaError):
    """A keypoint record cannot be turned into a pose frame."""


class ModelFileError(SchemaError):
    """A model container is truncated, corrupt or of another version."""


class ConfigError(SkillSegError):
    """A parameter lies outside its admissible range."""


class ChecksumMismatch(SkillSegError):
    """A video file does not match the MD5 recorded in its annotation."""
