"""Training losses and their weighted combination."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import torch
import torch.nn.functional as F

from .geometry import box_cxcywh_to_xyxy, elementwise_giou


@dataclass
class LossWeights:
    ind: float = 1.0
    cls: float = 2.0
    loc: float = 1.0
    l1: float = 2.5
    giou: float = 1.0
    part: float = 10.0
    assn: float = 5.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"loss weight {f.name} must be finite and >= 0, got {v}")


COMPONENTS = ("ind", "cls", "loc", "part", "assn")


def bce_with_logits(logits, targets):
    return F.binary_cross_entropy_with_logits(logits, targets.to(logits.dtype), reduction="none")


def focal_loss(logits, targets, gamma=2.0, alpha=0.25, reduction="mean"):
    """Sigmoid focal loss.

    ``alpha=None`` disables class balancing; with ``gamma=0`` the result is
    then plain binary cross-entropy.
    """
    targets = targets.to(logits.dtype)
    p = logits.sigmoid()
    ce = bce_with_logits(logits, targets)
    p_t = p * targets + (1 - p) * (1 - targets)
    loss = ce * (1 - p_t) ** gamma if gamma else ce
    if alpha is not None:
        loss = (alpha * targets + (1 - alpha) * (1 - targets)) * loss
    return _reduce(loss, reduction)


def asl_loss(logits, targets, gamma_pos=0.0, gamma_neg=4.0, margin=0.05,
             eps=1e-8, reduction="mean"):
    """Asymmetric multi-label loss with probability shifting on negatives."""
    targets = targets.to(logits.dtype)
    p = logits.sigmoid()
    log_p = F.logsigmoid(logits)
    if margin > 0:
        p_neg = (p - margin).clamp(min=0)
        log_not_p = torch.log((1 - p_neg).clamp(min=eps))
    else:
        p_neg = p
        log_not_p = F.logsigmoid(-logits)
    pos = targets * log_p
    neg = (1 - targets) * log_not_p
    if gamma_pos:
        pos = pos * (1 - p) ** gamma_pos
    if gamma_neg:
        neg = neg * p_neg ** gamma_neg
    return _reduce(-(pos + neg), reduction)


def loc_loss(pred_boxes, gt_boxes, w_l1=2.5, w_giou=1.0):
    """Weighted L1 + GIoU over matched cxcywh box pairs.

    L1 is summed over the four coordinates and averaged over pairs.
    """
    if pred_boxes.shape[0] == 0:
        return pred_boxes.sum() * 0.0
    l1 = (pred_boxes - gt_boxes).abs().sum(-1).mean()
    g = elementwise_giou(box_cxcywh_to_xyxy(pred_boxes), box_cxcywh_to_xyxy(gt_boxes))
    return w_l1 * l1 + w_giou * (1.0 - g).mean()


def part_loss(attn, masks, weight=None):
    """Squared error between attention maps and part masks.

    ``attn`` and ``masks`` are (N, P, H, W).  Each map contributes its mean
    over spatial cells; maps are averaged over the supervised (query, part)
    pairs selected by the boolean ``weight`` (N, P), all pairs by default.
    """
    if attn.shape != masks.shape:
        raise ValueError(f"attention {tuple(attn.shape)} vs masks {tuple(masks.shape)}")
    per_map = ((attn - masks.to(attn.dtype)) ** 2).flatten(2).mean(-1)
    if weight is None:
        return per_map.mean() if per_map.numel() else attn.sum() * 0.0
    weight = weight.to(attn.dtype)
    n = weight.sum()
    if n == 0:
        return attn.sum() * 0.0
    return (per_map * weight).sum() / n


def assn_loss(sim_logits, membership, group_idx, indiv_idx):
    """BCE between similarity logits and membership over matched entries.

    ``sim_logits`` is (N_G, N_I).  ``membership`` is (G, J) with rows for
    ground-truth groups and columns for ground-truth individuals.
    ``group_idx[i]`` is the query matched to ground-truth group ``i`` and
    ``indiv_idx[j]`` the query matched to ground-truth individual ``j``.
    """
    group_idx = torch.as_tensor(group_idx, dtype=torch.long)
    indiv_idx = torch.as_tensor(indiv_idx, dtype=torch.long)
    if group_idx.numel() == 0 or indiv_idx.numel() == 0:
        return sim_logits.sum() * 0.0
    picked = sim_logits[group_idx][:, indiv_idx]
    return bce_with_logits(picked, membership).mean()


def total_loss(components: dict, w: LossWeights):
    terms = [getattr(w, k) * components[k] for k in COMPONENTS if getattr(w, k) != 0]
    if not terms:
        return sum(components[k] for k in COMPONENTS) * 0.0
    return sum(terms)


def _reduce(loss, reduction):
    if reduction == "mean":
        return loss.mean()
    if reduction == "sum":
        return loss.sum()
    return loss
