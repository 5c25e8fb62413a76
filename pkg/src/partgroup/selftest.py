"""Oracle cross-checks shared by the ``selftest`` command and the acceptance tests.

Every ``check_*`` function returns a :class:`CheckResult`; none of them
raise on a mismatch.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from . import oracles
from .evaluation import evaluate, recall_at_k
from .geometry import Box, to_corners
from .inference import Triplet, triplet_nms
from .losses import asl_loss, assn_loss, bce_with_logits, focal_loss, loc_loss, part_loss
from .matching import assignment_cost, hungarian
from .network import ModelConfig, PartGroupNet
from .partmask import keypoints_to_masks, window_size


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}: {self.detail}"


# -- assignment -------------------------------------------------------------------

def random_cost(rng, n_gt, n_pred):
    # multiples of 1/1024 with small magnitude: every partial sum is exact,
    # so equal optimal costs compare equal bit for bit
    return rng.integers(0, 4096, size=(n_pred, n_gt)) / 1024.0


def check_hungarian(trials=500, max_gt=7, seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    elapsed, worst = 0.0, 0
    for _ in range(trials):
        n_gt = int(rng.integers(1, max_gt + 1))
        n_pred = int(rng.integers(n_gt, max_gt + 2))
        cost = random_cost(rng, n_gt, n_pred)
        t0 = time.perf_counter()
        pairs = hungarian(cost)
        elapsed += time.perf_counter() - t0
        ok = (sorted(g for _, g in pairs) == list(range(n_gt))
              and len({p for p, _ in pairs}) == n_gt
              and assignment_cost(cost, pairs) == oracles.brute_force_assignment(cost))
        worst += int(not ok)
    return CheckResult("hungarian", worst == 0 and elapsed < 10.0,
                       f"{trials - worst}/{trials} optimal, solver time {elapsed:.3f}s")


# -- gradients --------------------------------------------------------------------

def _grad_cases(rng):
    """Scalar loss closures over a random double tensor, keyed by loss name."""
    def focal():
        t = torch.from_numpy(rng.integers(0, 2, (3, 4))).double()
        return lambda x: focal_loss(x, t), torch.from_numpy(rng.normal(0, 2, (3, 4)))

    def asl():
        t = torch.from_numpy(rng.integers(0, 2, (3, 5))).double()
        return lambda x: asl_loss(x, t), torch.from_numpy(rng.normal(0, 2, (3, 5)))

    def loc():
        gt = torch.from_numpy(np.concatenate([rng.uniform(0.3, 0.7, (4, 2)),
                                              rng.uniform(0.1, 0.4, (4, 2))], 1))
        x = torch.from_numpy(np.concatenate([rng.uniform(0.3, 0.7, (4, 2)),
                                             rng.uniform(0.1, 0.4, (4, 2))], 1))
        return lambda b: loc_loss(b, gt), x

    def part():
        m = torch.from_numpy(rng.integers(0, 2, (2, 3, 4, 4))).double()
        w = torch.from_numpy(rng.integers(0, 2, (2, 3)).astype(bool))
        w[0, 0] = True
        return lambda a: part_loss(a, m, w), torch.from_numpy(rng.uniform(0, 1, (2, 3, 4, 4)))

    def assn():
        memb = torch.from_numpy(rng.integers(0, 2, (2, 3))).double()
        gq = torch.tensor(rng.permutation(5)[:2])
        iq = torch.tensor(rng.permutation(6)[:3])
        return lambda s: assn_loss(s, memb, gq, iq), torch.from_numpy(rng.normal(0, 2, (5, 6)))

    return {"focal": focal, "asl": asl, "loc": loc, "part": part, "assn": assn}


def check_gradients(instances=20, tol=1e-4, step=1e-6, seed=0) -> list[CheckResult]:
    out = []
    for name, make in _grad_cases(np.random.default_rng(seed)).items():
        errs = []
        for _ in range(instances):
            fn, x = make()
            errs.append(oracles.gradient_relative_error(fn, x, step))
        worst = max(errs)
        out.append(CheckResult(f"gradient[{name}]", worst <= tol,
                               f"max relative error {worst:.2e} over {instances} instances"))
    return out


# -- loss reductions ----------------------------------------------------------------

def check_reductions(batches=100, tol=1e-9, seed=0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst_f = worst_a = 0.0
    for _ in range(batches):
        shape = (int(rng.integers(1, 9)), int(rng.integers(1, 9)))
        x = torch.from_numpy(rng.normal(0, 3, shape))
        t = torch.from_numpy(rng.integers(0, 2, shape)).double()
        bce = bce_with_logits(x, t)
        f = focal_loss(x, t, gamma=0.0, alpha=None, reduction="none")
        a = asl_loss(x, t, gamma_pos=0.0, gamma_neg=0.0, margin=0.0, reduction="none")
        worst_f = max(worst_f, (f - bce).abs().max().item())
        worst_a = max(worst_a, (a - bce).abs().max().item())
    return [CheckResult("focal(gamma=0) == bce", worst_f <= tol, f"max abs diff {worst_f:.1e}"),
            CheckResult("asl(0,0,0) == bce", worst_a <= tol, f"max abs diff {worst_a:.1e}")]


# -- embedding equations ---------------------------------------------------------------

def check_embedding_ops(seed=0, tol=1e-6) -> list[CheckResult]:
    torch.manual_seed(seed)
    cfg = ModelConfig(dim=16, heads=2, num_individual_queries=5, num_group_queries=4,
                      num_parts=13, ffn_dim=32, sim_dim=8, stem_channels=(8, 8, 8))
    model = PartGroupNet(cfg).double()
    with torch.no_grad():
        for p in model.parameters():
            p.normal_(0, 0.5)
    g = torch.Generator().manual_seed(seed)
    e_i = torch.randn(cfg.num_individual_queries, cfg.dim, generator=g, dtype=torch.double)
    e_p = torch.randn(cfg.num_individual_queries, cfg.num_parts, cfg.dim, generator=g,
                      dtype=torch.double)
    e_g = torch.randn(cfg.num_group_queries, cfg.dim, generator=g, dtype=torch.double)
    with torch.no_grad():
        d_q = (model.make_part_queries(e_i)
               - oracles.direct_part_queries(e_i, model.part_proj)).abs().max().item()
        d_f = (model.fuse(e_i, e_p)
               - oracles.direct_fuse(e_i, e_p, model.fuse_proj.weight)).abs().max().item()
        layers = lambda m: [(l.weight, l.bias) for l in m.layers]  # noqa: E731
        d_s = (model.similarity(e_g, e_i)
               - oracles.direct_similarity(e_g, e_i, layers(model.sim_group),
                                           layers(model.sim_individual))).abs().max().item()
    return [CheckResult("part queries", d_q <= tol, f"max abs diff {d_q:.1e}"),
            CheckResult("fusion", d_f <= tol, f"max abs diff {d_f:.1e}"),
            CheckResult("similarity", d_s <= tol, f"max abs diff {d_s:.1e}")]


# -- part masks -------------------------------------------------------------------------

def check_masks(trials=200, seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad_count = bad_cells = 0
    for _ in range(trials):
        stride = int(rng.choice([4, 8, 16]))
        gh, gw = int(rng.integers(4, 20)), int(rng.integers(4, 20))
        # keypoints may sit outside the image so clipping is exercised
        x = float(rng.uniform(-20, gw * stride + 20))
        y = float(rng.uniform(-20, gh * stride + 20))
        wh = (float(rng.uniform(5, 150)), float(rng.uniform(5, 150)))
        alpha = float(rng.uniform(0.0, 1.0))
        s = window_size(wh, alpha)
        mask = keypoints_to_masks(np.array([[[x, y, 1.0]]]), [s], (gh, gw), stride)[0, 0]
        bad_count += int(mask.sum() != oracles.analytic_window_cells(x, y, s, (gh, gw), stride))
        bad_cells += oracles.mask_violations(mask, x, y, s, stride)
    return CheckResult("part masks", bad_count == 0 and bad_cells == 0,
                       f"{bad_count} count mismatches, {bad_cells} cell violations "
                       f"over {trials} windows")


# -- NMS --------------------------------------------------------------------------------

def random_triplets(rng, n=None):
    """Random triplets with deliberate near-duplicates and score ties."""
    n = int(rng.integers(1, 30)) if n is None else n
    anchors = rng.uniform(0.2, 0.8, (4, 4))
    out = []
    for i in range(n):
        def box(k):
            cx, cy = anchors[k, :2] + rng.normal(0, 0.03, 2)
            w, h = anchors[k, 2:] * 0.5 * (1 + rng.normal(0, 0.1, 2))
            return Box(float(np.clip(cx, 0, 1)), float(np.clip(cy, 0, 1)),
                       float(np.clip(w, 0.01, 1)), float(np.clip(h, 0.01, 1)))
        score = float(rng.integers(0, 10)) / 10 if rng.random() < 0.3 else float(rng.random())
        out.append(Triplet(box(int(rng.integers(4))), box(int(rng.integers(4))),
                           int(rng.integers(0, 3)), score, -1, i))
    return out


def _as_tuples(ts):
    return [(to_corners(t.individual_box), to_corners(t.group_box), t.class_id, t.score,
             t.group_index) for t in ts]


def check_nms(trials=200, seed=0, theta=0.5, theta_hi=0.7) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    agree = idem = mono = 0
    for _ in range(trials):
        ts = random_triplets(rng)
        kept = triplet_nms(ts)
        agree += int(_as_tuples(kept) == oracles.nms_oracle(_as_tuples(ts), theta))
        idem += int(triplet_nms(kept) == kept)
        # a looser threshold never drops a triplet kept under the stricter one
        mono += int(set(kept) <= set(triplet_nms(ts, theta_hi)))
    return [CheckResult("nms vs oracle", agree == trials, f"{agree}/{trials} identical"),
            CheckResult("nms idempotent", idem == trials, f"{idem}/{trials}"),
            CheckResult(f"nms monotone {theta}->{theta_hi}", mono == trials, f"{mono}/{trials}")]


# -- evaluator ---------------------------------------------------------------------------

def evaluator_fixture():
    """Three images in pixel corners: (predictions, ground truths)."""
    a, b, c = (10, 10, 50, 90), (60, 10, 100, 90), (110, 20, 150, 90)
    ab, bc = (10, 10, 100, 90), (60, 10, 150, 90)
    shift = lambda bx, d: (bx[0] + d, bx[1], bx[2] + d, bx[3])  # noqa: E731
    gts = {
        "img0": [(a, ab, 4), (b, ab, 4), (c, c, 0)],
        "img1": [(a, ab, 5), (b, bc, 6), (c, bc, 6), (a, a, 1)],
        "img2": [(b, b, 2), (c, c, 2)],
    }
    preds = {
        # duplicate of one ground truth plus a shifted box that only clears 0.25
        "img0": [(a, ab, 4, 0.9), (a, ab, 4, 0.8), (shift(b, 18), ab, 4, 0.7),
                 (c, c, 1, 0.95), (c, c, 0, 0.2)],
        # right class but wrong group for one member; 40 confident false
        # positives push the true hits out of the top 25
        "img1": [(a, ab, 5, 0.6), (b, ab, 6, 0.99), (c, bc, 6, 0.5), (shift(a, 9), a, 1, 0.4)]
                + [((0, 0, 5, 5), (0, 0, 5, 5), 3, 0.61 + 0.001 * i) for i in range(40)],
        "img2": [(shift(b, 3), shift(b, 3), 2, 0.3), (c, c, 2, 0.3), (c, c, 2, 0.29)],
    }
    return preds, gts


def check_evaluator() -> list[CheckResult]:
    preds, gts = evaluator_fixture()
    report = evaluate(preds, gts)
    counts, mr, ar = oracles.brute_force_recall(preds, gts)
    # hit counts must agree exactly; the averages only differ by summation order
    same = (all(recall_at_k(preds, gts, k, t) == v for (k, t), v in counts.items())
            and all(abs(report.mean_recall[k] - mr[k]) <= 1e-9 for k in mr)
            and abs(report.ar - ar) <= 1e-9)
    perfect = evaluate({k: [(g[0], g[1], g[2], 1.0) for g in v] for k, v in gts.items()}, gts)
    return [CheckResult("evaluator vs brute force", same,
                        f"AR {report.ar:.4f} vs {ar:.4f}"),
            CheckResult("perfect predictions", round(perfect.ar, 2) == 100.0,
                        f"AR {perfect.ar:.2f}")]


def run_all(verbose=print) -> bool:
    results = [check_hungarian()]
    results += check_gradients()
    results += check_reductions()
    results += check_embedding_ops()
    results.append(check_masks())
    results += check_nms()
    results += check_evaluator()
    for r in results:
        verbose(r.line())
    return all(r.ok for r in results)
