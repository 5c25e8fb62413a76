"""Triplet assembly from network outputs and triplet NMS.

Prediction file format (JSON lines, one record per image)::

    {"image_id": str, "width": int, "height": int,
     "triplets": [[ix1, iy1, ix2, iy2, gx1, gy1, gx2, gy2, class_id, score], ...]}

Box corners are pixel coordinates; triplets are sorted by descending score.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .geometry import Box, from_corners, to_corners

DEFAULT_NMS_THRESHOLD = 0.5
MAX_TRIPLETS = 100


@dataclass(frozen=True)
class Triplet:
    individual_box: Box
    group_box: Box
    class_id: int
    score: float
    individual_index: int = -1
    group_index: int = -1

    def corners(self):
        return to_corners(self.individual_box), to_corners(self.group_box)


def _safe_box(cxcywh) -> Box:
    x1, y1, x2, y2 = np.clip(_corners(cxcywh), 0.0, 1.0)
    eps = 1e-6
    if x2 - x1 < eps:
        x1, x2 = min(x1, 1 - eps), min(x1, 1 - eps) + eps
    if y2 - y1 < eps:
        y1, y2 = min(y1, 1 - eps), min(y1, 1 - eps) + eps
    return from_corners(float(x1), float(y1), float(x2), float(y2))


def _corners(b):
    cx, cy, w, h = (float(v) for v in b)
    return [cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2]


def assemble_triplets(boxes, group_boxes, class_logits, similarity, score_floor: float = 0.0):
    """Triplets for one image.

    Each group query takes the individual with the highest similarity
    (lowest index on ties) and emits one triplet per class whose sigmoid
    score is at least ``score_floor``.
    """
    boxes = torch.as_tensor(boxes).detach().double().cpu()
    group_boxes = torch.as_tensor(group_boxes).detach().double().cpu()
    scores = torch.as_tensor(class_logits).detach().double().sigmoid().cpu().numpy()
    sim = torch.as_tensor(similarity).detach().cpu().numpy()
    # np.argmax returns the first maximal index
    best = sim.argmax(axis=1)
    ind_cache = {}
    out = []
    for g in range(scores.shape[0]):
        j = int(best[g])
        if j not in ind_cache:
            ind_cache[j] = _safe_box(boxes[j])
        gbox = _safe_box(group_boxes[g])
        for k in range(scores.shape[1]):
            s = float(scores[g, k])
            if s >= score_floor:
                out.append(Triplet(ind_cache[j], gbox, k, s, j, g))
    return out


def _order(ts):
    return sorted(range(len(ts)), key=lambda i: (-ts[i].score, ts[i].group_index, ts[i].class_id))


def _iou_matrix(corners):
    c = np.asarray(corners, dtype=np.float64).reshape(-1, 4)
    area = (c[:, 2] - c[:, 0]) * (c[:, 3] - c[:, 1])
    lt = np.maximum(c[:, None, :2], c[None, :, :2])
    rb = np.minimum(c[:, None, 2:], c[None, :, 2:])
    wh = np.clip(rb - lt, 0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = area[:, None] + area[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def triplet_nms(ts, theta: float = DEFAULT_NMS_THRESHOLD):
    """Greedy triplet suppression, highest score first.

    A triplet is dropped when a kept triplet with higher rank has the same
    class and IoU strictly above ``theta`` for both the individual and the
    group boxes.
    """
    if not 0 < theta <= 1:
        raise ValueError("theta must be in (0, 1]")
    ts = list(ts)
    if not ts:
        return []
    order = _order(ts)
    ts = [ts[i] for i in order]
    ind = _iou_matrix([to_corners(t.individual_box) for t in ts])
    grp = _iou_matrix([to_corners(t.group_box) for t in ts])
    cls = np.array([t.class_id for t in ts])
    dup = (ind > theta) & (grp > theta) & (cls[:, None] == cls[None, :])
    suppressed = np.zeros(len(ts), dtype=bool)
    keep = []
    for i in range(len(ts)):
        if suppressed[i]:
            continue
        keep.append(ts[i])
        suppressed |= dup[i]
    return keep


def postprocess(pred, theta=DEFAULT_NMS_THRESHOLD, score_floor=0.0, max_triplets=MAX_TRIPLETS):
    """Per-image triplet lists for a batched :class:`PredictionSet`."""
    out = []
    for b in range(pred.boxes.shape[0]):
        ts = assemble_triplets(pred.boxes[b], pred.group_boxes[b], pred.class_logits[b],
                               pred.similarity[b], score_floor)
        out.append(triplet_nms(ts, theta)[:max_triplets])
    return out


def triplets_to_pixel_rows(ts, width, height):
    rows = []
    for t in ts:
        ib, gb = t.corners()
        rows.append([ib[0] * width, ib[1] * height, ib[2] * width, ib[3] * height,
                     gb[0] * width, gb[1] * height, gb[2] * width, gb[3] * height,
                     int(t.class_id), float(t.score)])
    return rows


def write_predictions(path, records):
    """``records`` is an iterable of ``(image_id, width, height, triplets)``."""
    with open(path, "w") as fh:
        for image_id, width, height, ts in records:
            fh.write(json.dumps({"image_id": image_id, "width": width, "height": height,
                                 "triplets": triplets_to_pixel_rows(ts, width, height)}) + "\n")


def read_predictions(path) -> dict:
    """image_id -> list of ``(ind_xyxy, grp_xyxy, class_id, score)`` in pixels."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            rows = [(tuple(map(float, r[0:4])), tuple(map(float, r[4:8])), int(r[8]), float(r[9]))
                    for r in rec["triplets"]]
            image_id = str(rec["image_id"])
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ValueError(f"{path}:{n}: malformed prediction record ({exc})") from None
        if image_id in out:
            raise ValueError(f"{path}:{n}: duplicate image id {image_id!r}")
        out[image_id] = rows
    return out
