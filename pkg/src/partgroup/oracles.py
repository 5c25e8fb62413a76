"""Slow, independent reference implementations used to cross-check the fast paths.

Nothing here is used by training or inference; the test suite and the
``selftest`` command compare the production code against these.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
import torch


# -- assignment -----------------------------------------------------------------

def brute_force_assignment(cost) -> float:
    """Minimum total cost over every injective map ground truth -> prediction.

    ``cost`` is (num_pred, num_gt) with num_gt <= num_pred.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n_pred, n_gt = cost.shape
    if n_gt == 0:
        return 0.0
    perms = np.array(list(itertools.permutations(range(n_pred), n_gt)))
    totals = np.zeros(len(perms))
    # accumulate column by column so the summation order matches a plain loop
    for c in range(n_gt):
        totals += cost[perms[:, c], c]
    return float(totals.min())


# -- boxes ------------------------------------------------------------------------

def xyxy_iou(a, b) -> float:
    """IoU of two corner boxes, written out longhand."""
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


# -- triplet NMS -----------------------------------------------------------------

def nms_oracle(triplets, theta: float = 0.5):
    """Greedy suppression with explicit loops and no precomputed matrices.

    ``triplets`` are ``(ind_xyxy, grp_xyxy, class_id, score, group_index)``
    tuples.  Returns kept tuples in visiting order.
    """
    order = sorted(triplets, key=lambda t: (-t[3], t[4], t[2]))
    kept = []
    for cand in order:
        dominated = False
        for k in kept:
            if (k[2] == cand[2] and xyxy_iou(k[0], cand[0]) > theta
                    and xyxy_iou(k[1], cand[1]) > theta):
                dominated = True
                break
        if not dominated:
            kept.append(cand)
    return kept


# -- evaluation --------------------------------------------------------------------

def brute_force_recall(preds: dict, gts: dict, ks=(25, 50, 100), thresholds=(0.25, 0.5, 0.75)):
    """``(counts, mean_recall, AR)`` recomputed from scratch.

    Predictions are ``(ind, grp, cls, score)``; ground truths ``(ind, grp, cls)``.
    ``counts[(k, t)]`` maps class -> (recalled, total); ``mean_recall`` is
    {K: percent}.
    """
    mean_recall, counts = {}, {}
    for k in ks:
        per_t = []
        for t in thresholds:
            hit, total = {}, {}
            for image_id, gt_list in gts.items():
                ranked = sorted(enumerate(preds[image_id]), key=lambda ip: (-ip[1][3], ip[0]))
                ranked = [p for _, p in ranked][:k]
                taken = [False] * len(gt_list)
                for p in ranked:
                    best_j, best_q = -1, -1.0
                    for j, g in enumerate(gt_list):
                        if taken[j] or g[2] != p[2]:
                            continue
                        a, b = xyxy_iou(p[0], g[0]), xyxy_iou(p[1], g[1])
                        if a >= t and b >= t and a + b > best_q:
                            best_j, best_q = j, a + b
                    if best_j >= 0:
                        taken[best_j] = True
                for j, g in enumerate(gt_list):
                    total[g[2]] = total.get(g[2], 0) + 1
                    hit[g[2]] = hit.get(g[2], 0) + int(taken[j])
            counts[(k, t)] = {c: (hit[c], total[c]) for c in sorted(total)}
            per_t.append({c: hit[c] / total[c] for c in total})
        classes = sorted(per_t[0])
        if not classes:
            mean_recall[k] = 0.0
            continue
        per_class = [sum(r[c] for r in per_t) / len(per_t) for c in classes]
        mean_recall[k] = 100.0 * sum(per_class) / len(per_class)
    return counts, mean_recall, sum(mean_recall.values()) / len(mean_recall)


# -- part masks --------------------------------------------------------------------

def analytic_window_cells(x: float, y: float, size: float, grid_hw, stride: float) -> int:
    """Grid cells whose centers fall in the closed square window, by interval counting."""
    def count(c, n):
        lo = math.ceil((c - size / 2) / stride - 0.5)
        hi = math.floor((c + size / 2) / stride - 0.5)
        lo, hi = max(lo, 0), min(hi, n - 1)
        return max(0, hi - lo + 1)
    return count(y, grid_hw[0]) * count(x, grid_hw[1])


def mask_violations(mask, x: float, y: float, size: float, stride: float) -> int:
    """Cells whose on/off state disagrees with the window inequality."""
    bad = 0
    h, w = mask.shape
    for v in range(h):
        for u in range(w):
            inside = (abs((u + 0.5) * stride - x) <= size / 2
                      and abs((v + 0.5) * stride - y) <= size / 2)
            bad += int(bool(mask[v, u]) != inside)
    return bad


# -- embedding equations -----------------------------------------------------------

def direct_part_queries(e_i: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """(N, D) embeddings and (P, D, D) projections -> (N, P, D), one matmul per pair."""
    n, p = e_i.shape[0], weights.shape[0]
    out = torch.empty(n, p, weights.shape[2], dtype=e_i.dtype)
    for i in range(n):
        for k in range(p):
            out[i, k] = e_i[i] @ weights[k]
    return out


def direct_fuse(e_i: torch.Tensor, e_p: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    """``W [e_i; e_p1; ...; e_pP]`` evaluated one individual at a time."""
    rows = []
    for i in range(e_i.shape[0]):
        stacked = torch.cat([e_i[i]] + [e_p[i, k] for k in range(e_p.shape[1])])
        rows.append(weight @ stacked)
    return torch.stack(rows)


def _mlp(x, layers):
    for i, (w, b) in enumerate(layers):
        x = w @ x + b
        if i < len(layers) - 1:
            x = torch.clamp(x, min=0)
    return x


def direct_similarity(e_g, e_i, group_layers, indiv_layers) -> torch.Tensor:
    """Dot products of per-vector MLP outputs; layers are ``(weight, bias)`` pairs."""
    out = torch.empty(e_g.shape[0], e_i.shape[0], dtype=e_g.dtype)
    for a in range(e_g.shape[0]):
        ga = _mlp(e_g[a], group_layers)
        for b in range(e_i.shape[0]):
            out[a, b] = torch.dot(ga, _mlp(e_i[b], indiv_layers))
    return out


# -- gradients ---------------------------------------------------------------------

def finite_difference_grad(fn, x: torch.Tensor, step: float = 1e-6) -> torch.Tensor:
    """Central differences of scalar ``fn`` at double-precision ``x``."""
    x = x.detach().clone().double()
    grad = torch.zeros_like(x)
    flat, gflat = x.view(-1), grad.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            up = float(fn(x))
            flat[i] = orig - step
            down = float(fn(x))
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
    return grad


def gradient_relative_error(fn, x: torch.Tensor, step: float = 1e-6) -> float:
    """``max|g_a - g_fd| / max(max|g_fd|, max|g_a|, 1e-12)`` for scalar ``fn``."""
    xa = x.detach().clone().double().requires_grad_(True)
    fn(xa).backward()
    analytic = xa.grad.detach()
    numeric = finite_difference_grad(fn, x, step)
    scale = max(numeric.abs().max().item(), analytic.abs().max().item(), 1e-12)
    return (analytic - numeric).abs().max().item() / scale
