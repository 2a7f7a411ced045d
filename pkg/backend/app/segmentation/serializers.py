# backend/app/segmentation/serializers.py

from typing import Any, Dict, List

import numpy as np
from rest_framework import serializers

from .exceptions import SequenceError
from .timeline import CLASS_NAMES, Segment, SkillClass, Timeline

ACTIVATIONS = ("leaky_relu", "relu", "sigmoid", "tanh", "silu")


def first_error(detail: Any, path: str = "") -> str:
    """Flatten a DRF error structure to ``"field.sub: message"``."""

    if isinstance(detail, dict):
        for key, value in detail.items():
            if not value:
                continue
            if key == "non_field_errors":
                return first_error(value, path)
            return first_error(value, f"{path}.{key}" if path else str(key))
    if isinstance(detail, (list, tuple)):
        for index, item in enumerate(detail):
            if not item:
                continue
            if isinstance(item, dict):
                return first_error(item, f"{path}.{index}" if path else str(index))
            return first_error(item, path)
    return f"{path}: {detail}" if path else str(detail)


class SegmentSerializer(serializers.Serializer):
    class_ = serializers.ChoiceField(
        choices=CLASS_NAMES,
        error_messages={"invalid_choice": 'unknown class "{input}"'},
    )
    start_frame = serializers.IntegerField()
    end_frame = serializers.IntegerField()

    def get_fields(self):
        # "class" is a keyword, so the field is declared under another name.
        fields = super().get_fields()
        fields["class"] = fields.pop("class_")
        return fields


class TimelineFileSerializer(serializers.Serializer):
    """``{"video_id", "fps", "n_frames", "segments": [...]}``; optional ``md5``."""

    video_id = serializers.CharField(allow_blank=True, required=False, default="")
    fps = serializers.FloatField(required=False, default=24.0)
    n_frames = serializers.IntegerField(min_value=1)
    segments = SegmentSerializer(many=True, allow_empty=False)
    md5 = serializers.RegexField(r"^[0-9a-fA-F]{32}$", required=False, allow_null=True)

    def validate_fps(self, value: float) -> float:
        if value <= 0:
            raise serializers.ValidationError("fps must be positive.")
        return value

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        n_frames = attrs["n_frames"]
        segments: List[Segment] = []
        for index, item in enumerate(attrs["segments"]):
            start, end = item["start_frame"], item["end_frame"]
            if start < 0 or end > n_frames - 1 or start > end:
                raise serializers.ValidationError(
                    {"segments": f"segment {index} bounds {start}..{end} outside [0, {n_frames - 1}]"}
                )
            segments.append(Segment(SkillClass[item["class"]], start, end))
        try:
            attrs["timeline"] = Timeline(
                tuple(segments), n_frames, attrs["fps"], attrs.get("video_id", "")
            )
        except SequenceError as exc:
            raise serializers.ValidationError({"segments": str(exc)}) from exc
        return attrs

    @staticmethod
    def dump(timeline: Timeline, md5: Any = None) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "video_id": timeline.video_id,
            "fps": timeline.fps,
            "n_frames": timeline.n_frames,
            "segments": [
                {"class": seg.label.name, "start_frame": seg.start, "end_frame": seg.end}
                for seg in timeline.segments
            ],
        }
        if md5:
            data["md5"] = md5
        return data


class ProbSequenceFileSerializer(serializers.Serializer):
    """``{"video_id", "fps", "classes", "probs": n x K floats}``."""

    video_id = serializers.CharField(allow_blank=True, required=False, default="")
    fps = serializers.FloatField(required=False, default=24.0)
    classes = serializers.ListField(child=serializers.CharField(), required=False)
    probs = serializers.ListField(allow_empty=False)

    def validate_probs(self, value: list) -> np.ndarray:
        try:
            probs = np.asarray(value, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise serializers.ValidationError("probs must be a rectangular array of numbers.") from exc
        if probs.ndim != 2 or probs.shape[1] < 1:
            raise serializers.ValidationError("probs must be an n x K array.")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise serializers.ValidationError("probs must be finite and non-negative.")
        return probs


class VideoMetaSerializer(serializers.Serializer):
    """Per-video metadata record shipped next to the keypoint files."""

    width = serializers.FloatField()
    height = serializers.FloatField()
    fps = serializers.FloatField(required=False, default=24.0)

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        for key in ("width", "height", "fps"):
            if attrs[key] <= 0:
                raise serializers.ValidationError({key: f"{key} must be positive."})
        return attrs


class KeypointFileSerializer(serializers.Serializer):
    """One OpenPose frame file; only ``people[*].pose_keypoints_2d`` is read."""

    people = serializers.ListField(child=serializers.DictField(), allow_empty=True)


class ModelHeaderSerializer(serializers.Serializer):
    format_version = serializers.IntegerField()
    layer_dims = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=2)
    activation = serializers.ChoiceField(
        choices=ACTIVATIONS,
        error_messages={"invalid_choice": 'unsupported activation "{input}"'},
    )
    config = serializers.DictField(required=False, default=dict)
