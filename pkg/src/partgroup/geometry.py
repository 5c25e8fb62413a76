"""Box representations, format conversions and overlap measures.

Boxes live in normalized center format ``(cx, cy, w, h)``.  Scalar helpers
operate on :class:`Box` in double precision; the ``box_*`` tensor helpers are
batched, differentiable and used by the losses and matching costs.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            v = getattr(self, name)
            if v != v:
                raise ValueError(f"Box.{name} is NaN")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"box center out of [0, 1]: {self}")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"box size must be in (0, 1]: {self}")

    def to_corners(self) -> tuple[float, float, float, float]:
        return to_corners(self)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)


def to_corners(b: Box) -> tuple[float, float, float, float]:
    hw, hh = b.w / 2.0, b.h / 2.0
    return (b.cx - hw, b.cy - hh, b.cx + hw, b.cy + hh)


def from_corners(x1: float, y1: float, x2: float, y2: float) -> Box:
    return Box((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)


def _corner_iou_parts(a, b):
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    enclose = (max(ax2, bx2) - min(ax1, bx1)) * (max(ay2, by2) - min(ay1, by1))
    return inter, union, enclose


def corner_iou(a, b) -> float:
    """IoU of two ``(x1, y1, x2, y2)`` tuples (any consistent units)."""
    inter, union, _ = _corner_iou_parts(a, b)
    return inter / union if union > 0 else 0.0


def iou(a: Box, b: Box) -> float:
    return corner_iou(to_corners(a), to_corners(b))


def giou(a: Box, b: Box) -> float:
    inter, union, enclose = _corner_iou_parts(to_corners(a), to_corners(b))
    return inter / union - (enclose - union) / enclose


# --- batched tensor versions -------------------------------------------------

# guards zero-area unions; far below any real box area
_EPS = 1e-12

def box_cxcywh_to_xyxy(x: torch.Tensor) -> torch.Tensor:
    cx, cy, w, h = x.unbind(-1)
    return torch.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], dim=-1)


def box_xyxy_to_cxcywh(x: torch.Tensor) -> torch.Tensor:
    x1, y1, x2, y2 = x.unbind(-1)
    return torch.stack([(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1], dim=-1)


def box_area(boxes: torch.Tensor) -> torch.Tensor:
    return (boxes[..., 2] - boxes[..., 0]) * (boxes[..., 3] - boxes[..., 1])


def pairwise_iou(boxes1: torch.Tensor, boxes2: torch.Tensor):
    """Pairwise IoU of xyxy boxes, shapes (N, 4) x (M, 4) -> (N, M).

    Also returns the union areas, which :func:`pairwise_giou` reuses.
    """
    area1 = box_area(boxes1)
    area2 = box_area(boxes2)
    lt = torch.max(boxes1[:, None, :2], boxes2[None, :, :2])
    rb = torch.min(boxes1[:, None, 2:], boxes2[None, :, 2:])
    wh = (rb - lt).clamp(min=0)
    inter = wh[..., 0] * wh[..., 1]
    union = (area1[:, None] + area2[None, :] - inter).clamp(min=_EPS)
    return inter / union, union


def pairwise_giou(boxes1: torch.Tensor, boxes2: torch.Tensor) -> torch.Tensor:
    iou_, union = pairwise_iou(boxes1, boxes2)
    lt = torch.min(boxes1[:, None, :2], boxes2[None, :, :2])
    rb = torch.max(boxes1[:, None, 2:], boxes2[None, :, 2:])
    wh = rb - lt
    enclose = (wh[..., 0] * wh[..., 1]).clamp(min=_EPS)
    return iou_ - (enclose - union) / enclose


def elementwise_giou(boxes1: torch.Tensor, boxes2: torch.Tensor) -> torch.Tensor:
    """GIoU between row-aligned xyxy boxes, (N, 4) x (N, 4) -> (N,)."""
    area1 = box_area(boxes1)
    area2 = box_area(boxes2)
    lt = torch.max(boxes1[:, :2], boxes2[:, :2])
    rb = torch.min(boxes1[:, 2:], boxes2[:, 2:])
    wh = (rb - lt).clamp(min=0)
    inter = wh[:, 0] * wh[:, 1]
    union = (area1 + area2 - inter).clamp(min=_EPS)
    lt_c = torch.min(boxes1[:, :2], boxes2[:, :2])
    rb_c = torch.max(boxes1[:, 2:], boxes2[:, 2:])
    wh_c = rb_c - lt_c
    enclose = (wh_c[:, 0] * wh_c[:, 1]).clamp(min=_EPS)
    return inter / union - (enclose - union) / enclose


def clamp_unit(boxes: torch.Tensor) -> torch.Tensor:
    """Clamp xyxy boxes to the unit square. Inference only."""
    return boxes.clamp(0.0, 1.0)
