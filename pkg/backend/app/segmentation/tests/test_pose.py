"""Tests for keypoint parsing, feature caches, annotations and dataset splits."""

from __future__ import annotations

import hashlib
import json
import tempfile
import zipfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from app.segmentation.exceptions import ChecksumMismatch, KeypointError, SchemaError, SequenceError
from app.segmentation.pose import (
    N_FEATURES,
    VideoMeta,
    assemble_frames,
    load_annotation,
    load_features,
    load_video_features,
    parse_pose_frame,
    save_features,
    split_dataset,
    verify_checksum,
)


def keypoint_record(points=None, people=1):
    """OpenPose frame record; ``points`` maps joint index to ``(x, y, c)``."""

    if people == 0:
        return {"version": 1.3, "people": []}
    flat = [0.0] * N_FEATURES
    for joint, (x, y, c) in (points or {}).items():
        flat[3 * joint : 3 * joint + 3] = [x, y, c]
    return {"version": 1.3, "people": [{"person_id": [-1], "pose_keypoints_2d": flat}] * people}


def write_frames(directory: Path, records, stem: str = "clip") -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for index, record in enumerate(records):
        (directory / f"{stem}_{index:012d}_keypoints.json").write_text(json.dumps(record))


def annotation(segments, n_frames, **extra):
    payload = {
        "video_id": "v1",
        "fps": 24,
        "n_frames": n_frames,
        "segments": [{"class": c, "start_frame": s, "end_frame": e} for c, s, e in segments],
    }
    payload.update(extra)
    return payload


class ParsePoseFrameTests(SimpleTestCase):
    def test_midpoint_normalization(self) -> None:
        frame = parse_pose_frame(keypoint_record({0: (480, 270, 0.7)}), 960, 540)
        self.assertTrue(frame.detected)
        np.testing.assert_allclose(frame.features[:3], [0.5, 0.5, 0.7])

    def test_frame_corner_maps_to_one(self) -> None:
        frame = parse_pose_frame(keypoint_record({24: (960, 540, 0.9)}), 960, 540)
        np.testing.assert_allclose(frame.features[72:75], [1.0, 1.0, 0.9])

    def test_empty_people_list_is_an_undetected_zero_frame(self) -> None:
        frame = parse_pose_frame(keypoint_record(people=0), 960, 540)
        self.assertFalse(frame.detected)
        self.assertEqual(frame.features.shape, (N_FEATURES,))
        self.assertFalse(frame.features.any())

    def test_first_person_is_used(self) -> None:
        record = keypoint_record({1: (96, 54, 1.0)}, people=2)
        record["people"][1] = {"pose_keypoints_2d": [1.0] * N_FEATURES}
        frame = parse_pose_frame(record, 960, 540)
        np.testing.assert_allclose(frame.features[3:6], [0.1, 0.1, 1.0])

    def test_wrong_keypoint_count(self) -> None:
        record = {"people": [{"pose_keypoints_2d": [0.0] * 74}]}
        with self.assertRaisesMessage(KeypointError, "malformed keypoints"):
            parse_pose_frame(record, 960, 540)

    def test_non_positive_frame_size(self) -> None:
        with self.assertRaises(KeypointError):
            parse_pose_frame(keypoint_record(), 0, 540)

    def test_normalization_is_resolution_independent(self) -> None:
        rng = np.random.default_rng(3)
        points = {j: (rng.uniform(0, 960), rng.uniform(0, 540), rng.uniform()) for j in range(25)}
        scaled = {j: (2.5 * x, 2.5 * y, c) for j, (x, y, c) in points.items()}
        a = parse_pose_frame(keypoint_record(points), 960, 540).features
        b = parse_pose_frame(keypoint_record(scaled), 2400, 1350).features
        np.testing.assert_allclose(a, b, atol=1e-12)


class LoadVideoFeaturesTests(SimpleTestCase):
    def setUp(self) -> None:
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.root = Path(tmp.name)

    def test_one_vector_per_frame_in_index_order(self) -> None:
        records = [keypoint_record({0: (i, 0, 1.0)}) for i in range(140)]
        write_frames(self.root / "clip", records)
        sequence = load_video_features(self.root / "clip", VideoMeta(960, 540, 24))
        self.assertEqual(len(sequence), 140)
        self.assertEqual(sequence.video_id, "clip")
        np.testing.assert_allclose(sequence.frames[:, 0], np.arange(140) / 960)

    def test_malformed_record_names_its_frame(self) -> None:
        records = [keypoint_record() for _ in range(10)]
        records[7] = {"people": [{"pose_keypoints_2d": [1.0, 2.0]}]}
        write_frames(self.root / "clip", records)
        with self.assertRaisesMessage(KeypointError, "frame 7"):
            load_video_features(self.root / "clip")

    def test_all_empty_detections(self) -> None:
        write_frames(self.root / "clip", [keypoint_record(people=0)] * 5)
        sequence = load_video_features(self.root / "clip")
        self.assertFalse(sequence.detected.any())
        self.assertFalse(sequence.frames.any())

    def test_missing_frame_index_is_listed(self) -> None:
        write_frames(self.root / "clip", [keypoint_record()] * 5)
        (self.root / "clip" / "clip_000000000003_keypoints.json").unlink()
        with self.assertRaisesMessage(SequenceError, "missing keypoint frames: 3"):
            load_video_features(self.root / "clip")

    def test_meta_json_sets_frame_size(self) -> None:
        write_frames(self.root / "clip", [keypoint_record({0: (100, 100, 1.0)})])
        (self.root / "clip" / "meta.json").write_text(json.dumps({"width": 200, "height": 400, "fps": 30}))
        sequence = load_video_features(self.root / "clip")
        self.assertEqual(sequence.fps, 30)
        np.testing.assert_allclose(sequence.frames[0, :2], [0.5, 0.25])

    def test_zip_archive(self) -> None:
        archive = self.root / "clip.zip"
        with zipfile.ZipFile(archive, "w") as handle:
            for index in range(3):
                handle.writestr(f"clip/clip_{index:012d}_keypoints.json", json.dumps(keypoint_record()))
        self.assertEqual(len(load_video_features(archive)), 3)

    def test_feature_cache_round_trip(self) -> None:
        write_frames(self.root / "clip", [keypoint_record({2: (10, 20, 0.5)})] * 4)
        sequence = load_video_features(self.root / "clip")
        save_features(self.root / "clip.npz", sequence)
        loaded = load_features(self.root / "clip.npz")
        self.assertEqual(loaded.video_id, "clip")
        np.testing.assert_array_equal(loaded.frames, sequence.frames)
        np.testing.assert_array_equal(loaded.detected, sequence.detected)


class AnnotationTests(SimpleTestCase):
    def setUp(self) -> None:
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.root = Path(tmp.name)

    def write(self, payload) -> Path:
        path = self.root / "v1.json"
        path.write_text(json.dumps(payload))
        return path

    def test_valid_annotation(self) -> None:
        gt = load_annotation(self.write(annotation([("NONE", 0, 23), ("PL", 24, 119), ("NONE", 120, 139)], 140)))
        self.assertEqual(gt.video_id, "v1")
        self.assertEqual(len(gt.timeline), 3)
        self.assertEqual(gt.timeline.segments[1].duration_frames, 96)

    def test_unknown_class(self) -> None:
        with self.assertRaisesMessage(SchemaError, "unknown class"):
            load_annotation(self.write(annotation([("XYZ", 0, 9)], 10)))

    def test_gap_between_segments(self) -> None:
        with self.assertRaisesMessage(SchemaError, "gap at frame 51"):
            load_annotation(self.write(annotation([("PL", 0, 50), ("NONE", 60, 100)], 101)))

    def test_bounds_outside_video(self) -> None:
        with self.assertRaises(SchemaError):
            load_annotation(self.write(annotation([("PL", 0, 10)], 5)))

    def test_checksum(self) -> None:
        video = self.root / "v1.mp4"
        video.write_bytes(b"not really a video")
        digest = hashlib.md5(b"not really a video").hexdigest()
        gt = load_annotation(self.write(annotation([("PL", 0, 9)], 10, md5=digest)))
        self.assertEqual(verify_checksum(gt, video), digest)
        bad = load_annotation(self.write(annotation([("PL", 0, 9)], 10, md5="0" * 32)))
        with self.assertRaises(ChecksumMismatch):
            verify_checksum(bad, video)

    def test_assemble_frames_stacks_labels(self) -> None:
        gt = load_annotation(self.write(annotation([("NONE", 0, 1), ("PL", 2, 4)], 5)))
        write_frames(self.root / "v1", [keypoint_record()] * 5)
        features = {"v1": load_video_features(self.root / "v1")}
        x, y = assemble_frames(features, {"v1": gt}, ["v1"])
        self.assertEqual(x.shape, (5, N_FEATURES))
        self.assertEqual(y.tolist(), [9, 9, 7, 7, 7])


class SplitDatasetTests(SimpleTestCase):
    def test_full_dataset_sizes(self) -> None:
        split = split_dataset([f"v{i:03d}" for i in range(839)], 0.8, seed=0)
        self.assertEqual((len(split.train), len(split.test)), (671, 168))
        self.assertFalse(set(split.train) & set(split.test))
        self.assertEqual(len(set(split.train) | set(split.test)), 839)

    def test_deterministic_for_a_seed(self) -> None:
        ids = [f"v{i}" for i in range(10)]
        self.assertEqual(split_dataset(ids, 0.8, 5), split_dataset(list(reversed(ids)), 0.8, 5))

    def test_small_split(self) -> None:
        split = split_dataset(["a", "b", "c", "d", "e"], 0.8, 1)
        self.assertEqual((len(split.train), len(split.test)), (4, 1))

    def test_ratio_must_be_a_fraction(self) -> None:
        with self.assertRaises(ValueError):
            split_dataset(["a", "b"], 1.0)
