"""Triplet recall metrics: mR@K over IoU thresholds and their average (AR).

Predictions and ground truth are dicts keyed by image id.  A prediction is
``(ind_xyxy, grp_xyxy, class_id, score)``; a ground truth is
``(ind_xyxy, grp_xyxy, class_id)``.  Any consistent box units work.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import corner_iou

KS = (25, 50, 100)
THRESHOLDS = (0.25, 0.5, 0.75)


def match_triplet(pred, gt, t: float) -> bool:
    return (int(pred[2]) == int(gt[2])
            and corner_iou(pred[0], gt[0]) >= t
            and corner_iou(pred[1], gt[1]) >= t)


def _iou(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = area_a[:, None] + area_b[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def top_k(preds, k: int):
    """Highest-scoring ``k`` predictions; stable for equal scores."""
    order = sorted(range(len(preds)), key=lambda i: -preds[i][3])
    return [preds[i] for i in order[:k]]


def match_image(preds, gts, k: int, t: float) -> np.ndarray:
    """Boolean recalled-flag per ground truth for one image.

    Predictions are visited in score order; each takes the unmatched ground
    truth of its class that clears ``t`` on both boxes with the largest
    summed IoU (lowest index on ties).
    """
    recalled = np.zeros(len(gts), dtype=bool)
    preds = top_k(preds, k)
    if not preds or not gts:
        return recalled
    ind = _iou([p[0] for p in preds], [g[0] for g in gts])
    grp = _iou([p[1] for p in preds], [g[1] for g in gts])
    pc = np.array([p[2] for p in preds])
    gc = np.array([g[2] for g in gts])
    ok = (ind >= t) & (grp >= t) & (pc[:, None] == gc[None, :])
    quality = ind + grp
    for i in range(len(preds)):
        cand = np.flatnonzero(ok[i] & ~recalled)
        if cand.size:
            recalled[cand[np.argmax(quality[i, cand])]] = True
    return recalled


def recall_at_k(preds_per_image: dict, gts_per_image: dict, k: int, t: float) -> dict:
    """class_id -> (recalled, total) summed over the split."""
    counts: dict[int, list[int]] = {}
    for image_id, gts in gts_per_image.items():
        flags = match_image(preds_per_image.get(image_id, []), gts, k, t)
        for g, f in zip(gts, flags):
            c = counts.setdefault(int(g[2]), [0, 0])
            c[0] += int(f)
            c[1] += 1
    return {c: (r, n) for c, (r, n) in sorted(counts.items())}


@dataclass
class MetricReport:
    classes: list
    # (K, threshold) -> {class: recall fraction}
    per_class: dict = field(default_factory=dict)
    mean_recall: dict = field(default_factory=dict)   # K -> percent
    ar: float = 0.0
    class_names: list | None = None

    def class_recall(self, k: int) -> dict:
        """Threshold-averaged per-class recall at K, percent."""
        return {c: 100.0 * float(np.mean([self.per_class[(k, t)][c] for t in THRESHOLDS]))
                for c in self.classes}

    def _name(self, c):
        if self.class_names and c < len(self.class_names):
            return self.class_names[c]
        return str(c)

    def to_text(self, per_class: bool = False) -> str:
        lines = [f"{'metric':<14}{'value':>9}"]
        for k in KS:
            lines.append(f"{'mR@' + str(k):<14}{self.mean_recall[k]:>9.2f}")
        lines.append(f"{'AR':<14}{self.ar:>9.2f}")
        if per_class:
            lines.append("")
            lines.append(f"{'class':<16}" + "".join(f"{'R@' + str(k):>9}" for k in KS))
            recs = {k: self.class_recall(k) for k in KS}
            for c in self.classes:
                lines.append(f"{self._name(c):<16}" + "".join(f"{recs[k][c]:>9.2f}" for k in KS))
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        lines = [f"mR@{k}={self.mean_recall[k]!r}" for k in KS]
        lines.append(f"AR={self.ar!r}")
        for k in KS:
            for c, v in self.class_recall(k).items():
                lines.append(f"R@{k}.{self._name(c)}={v!r}")
        return "\n".join(lines) + "\n"


def evaluate(preds: dict, gts: dict, class_names=None) -> MetricReport:
    """Full report over a split; image ids of both sides must agree."""
    missing = sorted(set(gts) - set(preds))
    extra = sorted(set(preds) - set(gts))
    if missing or extra:
        msg = []
        if missing:
            msg.append(f"no predictions for {len(missing)} images: {missing[:10]}")
        if extra:
            msg.append(f"predictions for {len(extra)} unknown images: {extra[:10]}")
        raise ValueError("image id mismatch; " + "; ".join(msg))
    per_class = {}
    classes = set()
    for k in KS:
        for t in THRESHOLDS:
            counts = recall_at_k(preds, gts, k, t)
            per_class[(k, t)] = {c: r / n for c, (r, n) in counts.items()}
            classes.update(counts)
    classes = sorted(classes)
    report = MetricReport(classes, per_class, class_names=list(class_names) if class_names else None)
    for k in KS:
        if classes:
            report.mean_recall[k] = float(np.mean(list(report.class_recall(k).values())))
        else:
            report.mean_recall[k] = 0.0
    report.ar = float(np.mean([report.mean_recall[k] for k in KS]))
    return report
