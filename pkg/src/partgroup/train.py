"""Training loop, target preparation, checkpoints and batched inference."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig, train_config_from_text, train_config_text
from .data import Scene, group_instances
from .inference import postprocess
from .losses import (COMPONENTS, asl_loss, assn_loss, focal_loss, loc_loss, part_loss,
                     total_loss)
from .matching import group_match_cost, hungarian, individual_match_cost
from .network import ModelConfig, PartGroupNet, parameter_groups
from .partmask import masks_for_individuals, perturb_keypoints, window_sizes

log = logging.getLogger(__name__)


@dataclass
class SceneTargets:
    boxes: torch.Tensor        # (n, 4) cxcywh
    inst_boxes: torch.Tensor   # (K, 4)
    inst_classes: torch.Tensor # (K, N_C)
    inst_rep: torch.Tensor     # (K,)
    inst_assoc: torch.Tensor   # (K, n)
    masks: torch.Tensor | None       # (n, P, H, W)
    mask_valid: torch.Tensor | None  # (n, P)


def images_tensor(scenes) -> torch.Tensor:
    imgs = np.stack([s.load_image() for s in scenes]).astype(np.float32) / 255.0
    return torch.from_numpy(imgs).permute(0, 3, 1, 2).contiguous()


def prepare_targets(scenes, mcfg: ModelConfig, tcfg: TrainConfig, seed: int | None = None):
    """Tensors consumed by the losses, one :class:`SceneTargets` per scene.

    With ``tcfg.pose_noise > 0`` keypoints are perturbed once per scene, as
    if produced by a noisier pose estimator.
    """
    seed = tcfg.seed if seed is None else seed
    out = []
    for idx, s in enumerate(scenes):
        mcfg.check_input(s.height, s.width)
        grid = (s.height // mcfg.stride, s.width // mcfg.stride)
        ib, ic, rep, assoc = group_instances(s, mcfg.num_classes)
        masks = valid = None
        if s.keypoints is not None:
            wh = s.person_boxes[:, 2:] - s.person_boxes[:, :2]
            kps = s.keypoints
            if tcfg.pose_noise > 0:
                rng = np.random.default_rng([seed, idx, 7919])
                kps = perturb_keypoints(kps, tcfg.pose_noise, window_sizes(wh, tcfg.window_alpha), rng)
            m, v = masks_for_individuals(kps, wh, tcfg.window_alpha, grid, mcfg.stride, mcfg.num_parts)
            masks, valid = torch.from_numpy(m).float(), torch.from_numpy(v)
        out.append(SceneTargets(
            torch.from_numpy(s.individual_cxcywh()).float(),
            torch.from_numpy(ib).float(), torch.from_numpy(ic), torch.from_numpy(rep),
            torch.from_numpy(assoc), masks, valid))
    return out


def _finite(cost):
    # a diverged prediction should surface as a named non-finite loss, not a
    # matching failure
    return torch.nan_to_num(cost, nan=1e6, posinf=1e6, neginf=-1e6).numpy()


def match_batch(pred, targets, tcfg: TrainConfig):
    """Hungarian matches per image: (individual pairs, group pairs)."""
    w = tcfg.loss_weights()
    matches = []
    for b, t in enumerate(targets):
        obj = pred.objectness[b].detach().sigmoid()
        c_ind = individual_match_cost(pred.boxes[b].detach(), obj, t.boxes,
                                      w_obj=w.ind, w_l1=w.l1, w_giou=w.giou)
        ind_pairs = hungarian(_finite(c_ind))
        tau = torch.tensor([p for p, _ in ind_pairs], dtype=torch.long)
        assoc_prob = None
        if tcfg.match_assn and len(t.inst_rep):
            assoc_prob = pred.similarity[b].detach()[:, tau[t.inst_rep]].sigmoid()
        c_grp = group_match_cost(pred.group_boxes[b].detach(), pred.class_logits[b].detach(),
                                 t.inst_boxes, t.inst_classes, w_cls=w.cls, w_l1=w.l1,
                                 w_giou=w.giou, assoc_prob=assoc_prob, w_assoc=w.assn)
        grp_pairs = hungarian(_finite(c_grp))
        matches.append((ind_pairs, grp_pairs))
    return matches


def compute_losses(emb, pred, targets, matches, tcfg: TrainConfig) -> dict:
    w = tcfg.loss_weights()
    obj_target = torch.zeros_like(pred.objectness)
    cls_target = torch.zeros_like(pred.class_logits)
    pb, gb, pgb, ggb = [], [], [], []
    attn, masks, valid = [], [], []
    assn = []
    for b, (t, (ind_pairs, grp_pairs)) in enumerate(zip(targets, matches)):
        qi = torch.tensor([p for p, _ in ind_pairs], dtype=torch.long)
        gi = torch.tensor([g for _, g in ind_pairs], dtype=torch.long)
        qg = torch.tensor([p for p, _ in grp_pairs], dtype=torch.long)
        gg = torch.tensor([g for _, g in grp_pairs], dtype=torch.long)
        obj_target[b, qi] = 1.0
        cls_target[b, qg] = t.inst_classes[gg].to(cls_target.dtype)
        pb.append(pred.boxes[b, qi]); gb.append(t.boxes[gi])
        pgb.append(pred.group_boxes[b, qg]); ggb.append(t.inst_boxes[gg])
        if t.masks is not None:
            attn.append(emb.part_attn[b, qi]); masks.append(t.masks[gi]); valid.append(t.mask_valid[gi])
        # hungarian pairs come sorted by ground-truth index, so qi / qg are the
        # matched queries for ground truths 0..n-1 / 0..K-1
        if len(qg) and len(qi):
            assn.append(assn_loss(pred.similarity[b], t.inst_assoc, qg, qi))
    ind = focal_loss(pred.objectness, obj_target, tcfg.focal_gamma, tcfg.focal_alpha)
    cls = asl_loss(pred.class_logits, cls_target, tcfg.asl_gamma_pos, tcfg.asl_gamma_neg,
                   tcfg.asl_margin)
    loc = (loc_loss(torch.cat(pb), torch.cat(gb), w.l1, w.giou)
           + loc_loss(torch.cat(pgb), torch.cat(ggb), w.l1, w.giou))
    if attn:
        part = part_loss(torch.cat(attn), torch.cat(masks), torch.cat(valid))
    else:
        part = pred.boxes.sum() * 0.0
    assn_v = torch.stack(assn).mean() if assn else pred.similarity.sum() * 0.0
    return {"ind": ind, "cls": cls, "loc": loc, "part": part, "assn": assn_v}


def make_optimizer(model, tcfg: TrainConfig):
    backbone, rest = parameter_groups(model)
    return torch.optim.AdamW(
        [{"params": rest, "lr": tcfg.lr, "base_lr": tcfg.lr},
         {"params": backbone, "lr": tcfg.backbone_lr, "base_lr": tcfg.backbone_lr}],
        lr=tcfg.lr, betas=(tcfg.beta1, tcfg.beta2), eps=tcfg.adam_eps,
        weight_decay=tcfg.weight_decay)


def set_epoch_lr(opt, tcfg: TrainConfig, epoch: int):
    for g in opt.param_groups:
        g["lr"] = g["base_lr"] if epoch < tcfg.lr_drop_epoch else min(g["base_lr"], tcfg.lr_after_drop)


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def format_log(step, epoch, lr, total, comps) -> str:
    parts = [f"step={step}", f"epoch={epoch}", f"lr={lr!r}", f"loss={total!r}"]
    parts += [f"{k}={comps[k]!r}" for k in COMPONENTS]
    return " ".join(parts)


def save_checkpoint(path, model, mcfg, tcfg, opt=None, step=0):
    state = {
        "model_config": mcfg.to_text(),
        "train_config": train_config_text(tcfg),
        "state_dict": model.state_dict(),
        "step": step,
    }
    if opt is not None:
        state["optimizer"] = opt.state_dict()
    torch.save(state, path)


def load_checkpoint(path, expect: ModelConfig | None = None):
    """Model rebuilt from the stored config, plus the raw checkpoint dict."""
    state = torch.load(path, map_location="cpu", weights_only=False)
    mcfg = ModelConfig.from_text(state["model_config"])
    if expect is not None and expect != mcfg:
        raise ValueError(f"checkpoint config mismatch:\n stored {mcfg}\n expected {expect}")
    model = PartGroupNet(mcfg)
    model.load_state_dict(state["state_dict"])
    state["train_config_obj"] = train_config_from_text(state["train_config"])
    return model, mcfg, state


class NonFiniteLoss(FloatingPointError):
    pass


def train(mcfg: ModelConfig, tcfg: TrainConfig, scenes, out_dir=None, resume=None,
          images=None, targets=None, max_steps=None, log_lines=None, callback=None):
    """Train and return ``(model, log_lines)``.

    ``out_dir`` receives ``train.log`` and checkpoints; ``resume`` is a
    checkpoint path to continue from.  ``max_steps`` (default
    ``tcfg.max_steps``, 0 = unlimited) stops early.
    """
    torch.manual_seed(tcfg.seed)
    model = PartGroupNet(mcfg)
    opt = make_optimizer(model, tcfg)
    step = 0
    if resume is not None:
        state = torch.load(resume, map_location="cpu", weights_only=False)
        if ModelConfig.from_text(state["model_config"]) != mcfg:
            raise ValueError("resume checkpoint has a different model config")
        model.load_state_dict(state["state_dict"])
        if "optimizer" in state:
            opt.load_state_dict(state["optimizer"])
        step = int(state["step"])
    if images is None:
        images = images_tensor(scenes)
    if targets is None:
        targets = prepare_targets(scenes, mcfg, tcfg)
    n = len(targets)
    if n == 0:
        raise ValueError("empty training set")
    steps_per_epoch = math.ceil(n / tcfg.batch_size)
    limit = tcfg.max_steps if max_steps is None else max_steps
    total_steps = tcfg.epochs * steps_per_epoch
    if limit:
        total_steps = min(total_steps, limit)
    w = tcfg.loss_weights()
    lines = [] if log_lines is None else log_lines
    log_fh = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "train.log", "a" if resume else "w")
    model.train()
    try:
        while step < total_steps:
            epoch, pos = divmod(step, steps_per_epoch)
            set_epoch_lr(opt, tcfg, epoch)
            order = epoch_order(n, tcfg.seed, epoch)
            idx = order[pos * tcfg.batch_size:(pos + 1) * tcfg.batch_size]
            batch_t = [targets[i] for i in idx]
            emb, pred = model(images[torch.as_tensor(idx)])
            matches = match_batch(pred, batch_t, tcfg)
            comps = compute_losses(emb, pred, batch_t, matches, tcfg)
            for k, v in comps.items():
                if not torch.isfinite(v):
                    raise NonFiniteLoss(f"non-finite {k} loss at step {step}: {v.item()}")
            loss = total_loss(comps, w)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            if tcfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), tcfg.grad_clip)
            opt.step()
            step += 1
            if tcfg.log_every and step % tcfg.log_every == 0:
                line = format_log(step, epoch, opt.param_groups[0]["lr"], loss.item(),
                                  {k: v.item() for k, v in comps.items()})
                lines.append(line)
                if log_fh:
                    log_fh.write(line + "\n")
                    log_fh.flush()
            if callback is not None:
                callback(step, model)
            if out_dir is not None and tcfg.checkpoint_every and step % tcfg.checkpoint_every == 0:
                save_checkpoint(out_dir / f"checkpoint_{step:06d}.pt", model, mcfg, tcfg, opt, step)
    finally:
        if log_fh:
            log_fh.close()
    if out_dir is not None:
        save_checkpoint(out_dir / "checkpoint_last.pt", model, mcfg, tcfg, opt, step)
    return model, lines


@torch.no_grad()
def predict(model, images, tcfg: TrainConfig, batch_size: int = 16):
    """Triplet lists (normalized boxes) for every image."""
    model.eval()
    out = []
    for i in range(0, len(images), batch_size):
        _, pred = model(images[i:i + batch_size])
        out.extend(postprocess(pred, tcfg.nms_threshold, tcfg.score_floor))
    return out


def predictions_for_eval(scenes, triplet_lists):
    """Prediction dict in pixel corners, keyed by image id."""
    preds = {}
    for s, ts in zip(scenes, triplet_lists):
        rows = []
        for t in ts:
            ib, gb = t.corners()
            sx, sy = s.width, s.height
            rows.append(((ib[0] * sx, ib[1] * sy, ib[2] * sx, ib[3] * sy),
                         (gb[0] * sx, gb[1] * sy, gb[2] * sx, gb[3] * sy), t.class_id, t.score))
        preds[s.image_id] = rows
    return preds
