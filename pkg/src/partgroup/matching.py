"""Bipartite assignment between predictions and ground truth.

Individuals and groups are matched in two independent runs.  Cost entries
reuse the loss coefficients so that matching and training agree.
"""
from __future__ import annotations

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

from .geometry import box_cxcywh_to_xyxy, pairwise_giou


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimal-cost injection of every column (ground truth) into the rows.

    Returns ``(prediction, ground_truth)`` pairs sorted by ground-truth index.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {c.shape}")
    rows, cols = c.shape
    if cols > rows:
        raise ValueError(
            f"{cols} ground-truth instances but only {rows} queries; "
            "increase the query count"
        )
    if not np.isfinite(c).all():
        raise ValueError("cost matrix has non-finite entries")
    if cols == 0:
        return []
    r, k = linear_sum_assignment(c)
    pairs = sorted(zip(r.tolist(), k.tolist()), key=lambda p: p[1])
    return pairs


def assignment_cost(cost, pairs) -> float:
    c = np.asarray(cost, dtype=np.float64)
    return float(sum(c[i, j] for i, j in pairs))


def _box_cost(pred_boxes, gt_boxes, w_l1, w_giou):
    l1 = torch.cdist(pred_boxes, gt_boxes, p=1)
    giou = pairwise_giou(box_cxcywh_to_xyxy(pred_boxes), box_cxcywh_to_xyxy(gt_boxes))
    return w_l1 * l1 + w_giou * (1.0 - giou)


@torch.no_grad()
def individual_match_cost(pred_boxes, pred_objectness, gt_boxes,
                          w_obj=1.0, w_l1=2.5, w_giou=1.0) -> torch.Tensor:
    """Cost matrix (N_I, G) for individual queries.

    ``pred_objectness`` are probabilities in [0, 1], boxes are cxcywh.
    """
    obj = (1.0 - pred_objectness)[:, None]
    return w_obj * obj + _box_cost(pred_boxes, gt_boxes, w_l1, w_giou)


@torch.no_grad()
def group_match_cost(pred_group_boxes, pred_class_logits, gt_group_boxes, gt_class_vectors,
                     w_cls=2.0, w_l1=2.5, w_giou=1.0,
                     assoc_prob=None, w_assoc=0.0) -> torch.Tensor:
    """Cost matrix (N_G, G) for group queries.

    The class term is the mean absolute gap between predicted sigmoid
    probabilities and the multi-hot targets.  ``assoc_prob`` (N_G, G), when
    given, holds each query's association probability with the instance's
    representative individual and adds ``w_assoc * (1 - prob)``.
    """
    prob = pred_class_logits.sigmoid()
    cls = (prob[:, None, :] - gt_class_vectors[None, :, :].to(prob.dtype)).abs().mean(-1)
    cost = w_cls * cls + _box_cost(pred_group_boxes, gt_group_boxes, w_l1, w_giou)
    if assoc_prob is not None and w_assoc > 0:
        cost = cost + w_assoc * (1.0 - assoc_prob)
    return cost
