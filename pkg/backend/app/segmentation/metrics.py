"""Frame-level and segment-level evaluation.

Segment F1 (SF1) at threshold ``t`` matches a predicted segment to a ground
truth segment of the same class and video when their IoU exceeds ``t``
(identical spans always match, so SF1(1.0) is 1 for a perfect prediction).
Matching is one-to-one and greedy in descending IoU. Segments are pooled over
all videos before precision and recall are computed. ASF1 averages SF1 over
the threshold grid ``{0.01, ..., 1.00}``; mASF1 averages ASF1 over the
classes that occur in the prediction or the ground truth.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from .exceptions import ConfigError, SequenceError
from .storage import PathLike, atomic_write
from .timeline import CLASS_NAMES, N_CLASSES, LabelSequence, SkillClass, Timeline, segment_iou

logger = logging.getLogger(__name__)

TimelineSet = Union[Timeline, Sequence[Timeline], Mapping[str, Timeline]]


def threshold_grid(count: int = 100) -> np.ndarray:
    """``count`` evenly spaced thresholds ending at 1: ``{1/count, ..., 1}``."""

    return np.arange(1, count + 1) / count


THRESHOLDS = threshold_grid()


@dataclass
class FrameReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray  # rows: ground truth, columns: prediction
    macro_precision: float
    macro_recall: float
    macro_f1: float
    loss: Optional[float] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "class": CLASS_NAMES[: len(self.f1)],
                "precision": self.precision,
                "recall": self.recall,
                "f1": self.f1,
                "support": self.support,
            }
        )

    def summary(self) -> Dict[str, float]:
        data = {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }
        if self.loss is not None:
            data["loss"] = self.loss
        return data


def _as_array(labels: Union[LabelSequence, Sequence[int], np.ndarray]) -> np.ndarray:
    if isinstance(labels, LabelSequence):
        return labels.labels
    return np.asarray(labels, dtype=np.int64).reshape(-1)


def frame_metrics(pred, gt, n_classes: int = N_CLASSES) -> FrameReport:
    pred = _as_array(pred)
    gt = _as_array(gt)
    if pred.size != gt.size:
        raise SequenceError(f"length mismatch: {pred.size} predicted frames, {gt.size} ground truth")
    if gt.size == 0:
        raise SequenceError("empty sequence")
    labels = list(range(n_classes))
    precision, recall, f1, support = precision_recall_fscore_support(
        gt, pred, labels=labels, zero_division=0
    )
    confusion = confusion_matrix(gt, pred, labels=labels)
    present = (support > 0) | (confusion.sum(axis=0) > 0)
    return FrameReport(
        accuracy=float(np.mean(pred == gt)),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        confusion=confusion,
        macro_precision=float(precision[present].mean()),
        macro_recall=float(recall[present].mean()),
        macro_f1=float(f1[present].mean()),
    )


def _pairs(pred: TimelineSet, gt: TimelineSet) -> List[Tuple[Timeline, Timeline]]:
    if isinstance(gt, Timeline):
        return [(pred, gt)]
    if isinstance(gt, Mapping):
        missing = sorted(set(gt) - set(pred))
        if missing:
            raise SequenceError(f"no prediction for video {missing[0]}")
        return [(pred[key], gt[key]) for key in sorted(gt)]
    pred, gt = list(pred), list(gt)
    if len(pred) != len(gt):
        raise SequenceError(f"{len(pred)} predicted timelines for {len(gt)} ground truth timelines")
    return list(zip(pred, gt))


def _greedy_matches(pairs: List[Tuple[Timeline, Timeline]], label: int) -> Tuple[np.ndarray, int, int]:
    """IoUs of the greedy one-to-one matching, plus pooled segment counts.

    Greedy matching over pairs sorted by descending IoU restricted to
    ``IoU > t`` is a prefix of the unrestricted run, so one pass serves every
    threshold.
    """

    matched: List[float] = []
    n_pred = n_gt = 0
    for pred_tl, gt_tl in pairs:
        if pred_tl.n_frames != gt_tl.n_frames:
            raise SequenceError(
                f"{gt_tl.video_id or 'video'}: prediction covers {pred_tl.n_frames} frames, "
                f"ground truth {gt_tl.n_frames}"
            )
        p_segs = pred_tl.segments_of(label)
        g_segs = gt_tl.segments_of(label)
        n_pred += len(p_segs)
        n_gt += len(g_segs)
        candidates = []
        for i, p in enumerate(p_segs):
            for j, g in enumerate(g_segs):
                if g.start > p.end:
                    break
                iou = segment_iou(p, g)
                if iou > 0:
                    candidates.append((-iou, p.start, g.start, i, j))
        candidates.sort()
        used_p, used_g = set(), set()
        for neg_iou, _, _, i, j in candidates:
            if i in used_p or j in used_g:
                continue
            used_p.add(i)
            used_g.add(j)
            matched.append(-neg_iou)
    return np.asarray(matched), n_pred, n_gt


def _sf1_curve(matched: np.ndarray, n_pred: int, n_gt: int, thresholds: np.ndarray) -> np.ndarray:
    hits = np.array([np.count_nonzero((matched > t) | (matched == 1.0)) for t in thresholds], dtype=float)
    precision = hits / n_pred if n_pred else np.zeros_like(hits)
    recall = hits / n_gt if n_gt else np.zeros_like(hits)
    denom = precision + recall
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    return scores


def sf1(pred: TimelineSet, gt: TimelineSet, label: int, t: float) -> Optional[float]:
    """Segment F1 of one class at one threshold; ``None`` if the class never occurs."""

    if not 0 < t <= 1:
        raise ConfigError("threshold must lie in (0, 1]")
    matched, n_pred, n_gt = _greedy_matches(_pairs(pred, gt), int(label))
    if n_pred == 0 and n_gt == 0:
        return None
    return float(_sf1_curve(matched, n_pred, n_gt, np.array([t]))[0])


def asf1(pred: TimelineSet, gt: TimelineSet, label: int, thresholds: np.ndarray = THRESHOLDS) -> Optional[float]:
    matched, n_pred, n_gt = _greedy_matches(_pairs(pred, gt), int(label))
    if n_pred == 0 and n_gt == 0:
        return None
    return float(_sf1_curve(matched, n_pred, n_gt, thresholds).mean())


@dataclass
class SegReport:
    asf1: Dict[str, float]
    masf1: float
    curves: pd.DataFrame  # index: threshold; one column per scored class plus "mean"
    thresholds: np.ndarray = field(default_factory=lambda: THRESHOLDS)

    def to_row(self, method: str) -> Dict[str, object]:
        row: Dict[str, object] = {"method": method, "mASF1": round(self.masf1, 3)}
        for name in sorted(CLASS_NAMES):
            score = self.asf1.get(name)
            row[name] = round(score, 3) if score is not None else None
        return row


def sf1_curve(
    pred: TimelineSet,
    gt: TimelineSet,
    classes: Optional[Iterable[int]] = None,
    thresholds: np.ndarray = THRESHOLDS,
) -> pd.DataFrame:
    pairs = _pairs(pred, gt)
    columns: Dict[str, np.ndarray] = {}
    for label in classes if classes is not None else range(N_CLASSES):
        matched, n_pred, n_gt = _greedy_matches(pairs, int(label))
        if n_pred == 0 and n_gt == 0:
            continue
        columns[SkillClass(int(label)).name] = _sf1_curve(matched, n_pred, n_gt, thresholds)
    curves = pd.DataFrame(columns, index=pd.Index(thresholds, name="threshold"))
    curves["mean"] = curves.mean(axis=1) if columns else 0.0
    return curves


def segment_report(pred: TimelineSet, gt: TimelineSet, thresholds: np.ndarray = THRESHOLDS) -> SegReport:
    curves = sf1_curve(pred, gt, thresholds=thresholds)
    scores = {name: float(curves[name].mean()) for name in curves.columns if name != "mean"}
    masf1 = float(np.mean(list(scores.values()))) if scores else 0.0
    logger.info("mASF1 %.4f over %d classes", masf1, len(scores))
    return SegReport(scores, masf1, curves, thresholds)


def masf1(pred: TimelineSet, gt: TimelineSet, thresholds: np.ndarray = THRESHOLDS) -> float:
    return segment_report(pred, gt, thresholds).masf1


def edge_distances(gt: Timeline) -> np.ndarray:
    """Per frame, the distance in frames to the nearest edge of its segment."""

    out = np.empty(gt.n_frames, dtype=np.int64)
    for seg in gt.segments:
        idx = np.arange(seg.start, seg.end + 1)
        out[seg.start : seg.end + 1] = np.minimum(idx - seg.start, seg.end - idx)
    return out


def edge_distance_accuracy(pred, gt, bin_width: int = 5) -> pd.DataFrame:
    """Accuracy per edge-distance bin.

    ``pred``/``gt`` are one ``LabelSequence`` and its ``Timeline``, or
    parallel sequences of them (frames are then pooled).
    """

    if bin_width < 1:
        raise ConfigError("bin_width must be at least 1")
    if isinstance(gt, Timeline):
        pred, gt = [pred], [gt]
    pred, gt = list(pred), list(gt)
    if len(pred) != len(gt):
        raise SequenceError(f"{len(pred)} predicted sequences for {len(gt)} ground truth timelines")
    distances, correct = [], []
    for labels, timeline in zip(pred, gt):
        labels = _as_array(labels)
        if labels.size != timeline.n_frames:
            raise SequenceError(
                f"length mismatch: {labels.size} predicted frames, {timeline.n_frames} ground truth"
            )
        truth = np.empty(timeline.n_frames, dtype=np.int64)
        for seg in timeline.segments:
            truth[seg.start : seg.end + 1] = int(seg.label)
        distances.append(edge_distances(timeline))
        correct.append(labels == truth)
    bins = np.concatenate(distances) // bin_width
    hits = np.concatenate(correct)
    frames = np.bincount(bins)
    right = np.bincount(bins, weights=hits.astype(float), minlength=frames.size)
    keep = frames > 0
    index = np.flatnonzero(keep)
    return pd.DataFrame(
        {
            "bin": index,
            "distance_from": index * bin_width,
            "distance_to": (index + 1) * bin_width - 1,
            "frames": frames[keep],
            "accuracy": right[keep] / frames[keep],
        }
    )


def _figure_format(path: PathLike) -> str:
    return Path(path).suffix.lstrip(".") or "svg"


def plot_sf1_curves(curves: Mapping[str, pd.DataFrame], path: PathLike) -> None:
    """Mean SF1 against threshold, one line per method."""

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for method, frame in curves.items():
        ax.plot(frame.index, frame["mean"], label=method)
    ax.set_xlabel("threshold")
    ax.set_ylabel("SF1")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend()
    with atomic_write(path, "wb") as handle:
        fig.savefig(handle, format=_figure_format(path), bbox_inches="tight")
    plt.close(fig)


def plot_edge_accuracy(table: pd.DataFrame, path: PathLike) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(table["distance_from"], table["accuracy"], width=table["distance_to"] - table["distance_from"] + 1, align="edge")
    ax.set_xlabel("distance from segment edge (frames)")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1)
    with atomic_write(path, "wb") as handle:
        fig.savefig(handle, format=_figure_format(path), bbox_inches="tight")
    plt.close(fig)
