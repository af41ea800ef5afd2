"""Detection and classification metrics: IoU, Pascal-VOC average precision
(all-points interpolation), precision/recall/F1, and rank-based AUC.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .geo import PixelBox


@dataclass(frozen=True)
class GroundTruthBox:
    box: PixelBox
    label: str
    image_ref: str


@dataclass(frozen=True)
class PRCurve:
    recalls: tuple[float, ...]
    precisions: tuple[float, ...]
    ap: float | None  # None when both detections and ground truth are empty


def iou(a: PixelBox, b: PixelBox) -> float:
    """Intersection over union of two pixel boxes."""
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    if inter == 0:
        return 0.0
    area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min)
    area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min)
    return inter / (area_a + area_b - inter)


def _box_key(b: PixelBox) -> tuple:
    return (b.x_min, b.y_min, b.x_max, b.y_max)


def average_precision(dets, gts, iou_threshold: float = 0.5) -> PRCurve:
    """Single-class average precision with greedy IoU matching.

    Detections are sorted by descending score (equal scores break by box
    lexicographic order); each ground-truth box can be matched at most once.
    AP is the area under the interpolated precision envelope over all points.

    `dets` are objects with .box, .score and an image reference accessor
    (either .image_ref or .request.image_ref); `gts` are GroundTruthBox.
    """
    if not gts and not dets:
        return PRCurve(recalls=(), precisions=(), ap=None)
    if not gts:
        return PRCurve(recalls=(), precisions=(), ap=0.0)

    def image_of(d):
        return d.image_ref if hasattr(d, "image_ref") else d.request.image_ref

    order = sorted(dets, key=lambda d: (-d.score, _box_key(d.box)))
    gt_by_image: dict[str, list] = {}
    for g in gts:
        gt_by_image.setdefault(g.image_ref, []).append(g)
    matched: set[int] = set()

    tp = np.zeros(len(order))
    for i, d in enumerate(order):
        best_iou, best_g = 0.0, None
        for g in gt_by_image.get(image_of(d), []):
            if id(g) in matched:
                continue
            v = iou(d.box, g.box)
            if v > best_iou:
                best_iou, best_g = v, g
        if best_g is not None and best_iou >= iou_threshold:
            matched.add(id(best_g))
            tp[i] = 1.0

    cum_tp = np.cumsum(tp)
    recalls = cum_tp / len(gts)
    precisions = cum_tp / np.arange(1, len(order) + 1)

    # All-points interpolation: precision envelope, summed over recall steps.
    env = np.maximum.accumulate(precisions[::-1])[::-1]
    r_prev = 0.0
    ap = 0.0
    for r, p in zip(recalls, env):
        ap += (r - r_prev) * p
        r_prev = r
    return PRCurve(recalls=tuple(recalls), precisions=tuple(precisions), ap=float(ap))


def mean_average_precision(dets, gts, iou_threshold: float = 0.5) -> float:
    """Mean of per-class AP over the labels present in the ground truth."""
    labels = sorted({g.label for g in gts})
    if not labels:
        raise DomainError("mAP undefined without ground truth")
    aps = []
    for label in labels:
        curve = average_precision(
            [d for d in dets if d.label == label],
            [g for g in gts if g.label == label],
            iou_threshold,
        )
        aps.append(curve.ap if curve.ap is not None else 0.0)
    return float(np.mean(aps))


def classification_metrics(pairs) -> dict:
    """Binary metrics with `infested` as the positive class.

    `pairs` is a list of (true_label, ClassificationResult). Precision,
    recall, and F1 come from argmax labels; AUC is the Mann-Whitney rank
    statistic over the infested probability. AUC is None when only one class
    is present.
    """
    if not pairs:
        raise DomainError("classification metrics need at least one pair")
    tp = fp = fn = 0
    pos_scores, neg_scores = [], []
    for true_label, result in pairs:
        pred = result.label
        score = result.probs.get("infested", 0.0)
        if true_label == "infested":
            pos_scores.append(score)
            if pred == "infested":
                tp += 1
            else:
                fn += 1
        else:
            neg_scores.append(score)
            if pred == "infested":
                fp += 1

    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    auc = None
    if pos_scores and neg_scores:
        pos = np.asarray(pos_scores)
        neg = np.asarray(neg_scores)
        greater = (pos[:, None] > neg[None, :]).sum()
        equal = (pos[:, None] == neg[None, :]).sum()
        auc = float((greater + 0.5 * equal) / (len(pos) * len(neg)))

    return {"precision": precision, "recall": recall, "f1": f1, "auc": auc}


def load_annotations(text: str) -> list[GroundTruthBox]:
    """Parse the JSON-lines annotation format: image_ref, box, label."""
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        out.append(
            GroundTruthBox(
                box=PixelBox(*rec["box"]), label=rec["label"], image_ref=rec["image_ref"]
            )
        )
    return out
