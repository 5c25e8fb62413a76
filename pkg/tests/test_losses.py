import math

import numpy as np
import pytest
import torch

from partgroup.geometry import Box, giou
from partgroup.losses import (COMPONENTS, LossWeights, asl_loss, assn_loss, bce_with_logits,
                              focal_loss, loc_loss, part_loss, total_loss)
from partgroup.oracles import gradient_relative_error
from partgroup.selftest import check_gradients, check_reductions


def test_focal_reduces_to_bce(rng):
    x = torch.from_numpy(rng.normal(0, 3, (6, 5)))
    t = torch.from_numpy(rng.integers(0, 2, (6, 5))).double()
    f = focal_loss(x, t, gamma=0.0, alpha=None, reduction="none")
    assert torch.allclose(f, bce_with_logits(x, t), rtol=0, atol=1e-9)


def test_focal_limits_and_scalar_value():
    big = focal_loss(torch.tensor([40.0], dtype=torch.double), torch.tensor([1.0], dtype=torch.double))
    assert big.item() < 1e-12
    v = focal_loss(torch.tensor([0.0], dtype=torch.double), torch.tensor([1.0], dtype=torch.double),
                   gamma=2.0, alpha=0.25)
    assert v.item() == pytest.approx(-0.25 * 0.5 ** 2 * math.log(0.5), rel=1e-12)


def test_asl_reduces_to_bce(rng):
    x = torch.from_numpy(rng.normal(0, 3, (4, 8)))
    t = torch.from_numpy(rng.integers(0, 2, (4, 8))).double()
    a = asl_loss(x, t, 0.0, 0.0, 0.0, reduction="none")
    assert torch.allclose(a, bce_with_logits(x, t), rtol=0, atol=1e-9)


def test_asl_confident_and_scalar():
    t = torch.tensor([[1.0, 0.0, 1.0, 0.0]], dtype=torch.double)
    x = (t * 2 - 1) * 40
    assert asl_loss(x, t).item() < 1e-12
    # one negative: -(p - m)^4 log(1 - (p - m))
    logit = 1.3
    p = 1 / (1 + math.exp(-logit))
    pm = p - 0.05
    want = -(pm ** 4) * math.log(1 - pm)
    got = asl_loss(torch.tensor([logit], dtype=torch.double), torch.tensor([0.0], dtype=torch.double),
                   gamma_pos=0.0, gamma_neg=4.0, margin=0.05)
    assert got.item() == pytest.approx(want, rel=1e-12)
    # one positive with gamma_pos = 0 is plain -log p
    got = asl_loss(torch.tensor([logit], dtype=torch.double), torch.tensor([1.0], dtype=torch.double))
    assert got.item() == pytest.approx(-math.log(p), rel=1e-12)


def test_asl_margin_zeroes_easy_negatives():
    # p below the margin contributes nothing
    got = asl_loss(torch.tensor([-5.0], dtype=torch.double), torch.tensor([0.0], dtype=torch.double))
    assert got.item() == 0.0


def test_loc_identical_and_known_offset():
    b = torch.tensor([[0.4, 0.5, 0.2, 0.3]], dtype=torch.double)
    assert loc_loss(b, b).item() == pytest.approx(0.0, abs=1e-12)
    p = torch.tensor([[0.45, 0.5, 0.2, 0.25]], dtype=torch.double)
    offset_sum = 0.05 + 0.0 + 0.0 + 0.05
    g = giou(Box(0.45, 0.5, 0.2, 0.25), Box(0.4, 0.5, 0.2, 0.3))
    assert loc_loss(p, b).item() == pytest.approx(2.5 * offset_sum + 1.0 * (1 - g), abs=1e-12)


def test_loc_averages_over_pairs():
    gt = torch.tensor([[0.4, 0.5, 0.2, 0.3], [0.6, 0.5, 0.2, 0.3]], dtype=torch.double)
    single = loc_loss(gt[:1] + 0.01, gt[:1])
    both = loc_loss(gt + 0.01, gt)
    assert both.item() == pytest.approx(single.item(), rel=1e-9)
    assert loc_loss(gt[:0], gt[:0]).item() == 0.0


def test_part_loss_examples():
    m = torch.zeros(2, 3, 4, 5)
    m[0, 1, 1:3, 2:4] = 1
    assert part_loss(m.clone(), m).item() == 0.0
    uniform = torch.full((2, 3, 4, 5), 1 / 20)
    assert part_loss(uniform, torch.zeros_like(uniform)).item() == pytest.approx((1 / 20) ** 2)
    with pytest.raises(ValueError):
        part_loss(uniform, torch.zeros(2, 3, 4, 4))


def test_part_loss_weight_selects_pairs():
    a = torch.rand(1, 2, 3, 3, dtype=torch.double)
    m = torch.zeros_like(a)
    w = torch.tensor([[True, False]])
    assert part_loss(a, m, w).item() == pytest.approx((a[0, 0] ** 2).mean().item())
    assert part_loss(a, m, torch.zeros(1, 2, dtype=torch.bool)).item() == 0.0


def test_assn_examples():
    memb = torch.tensor([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]], dtype=torch.double)
    gq, iq = torch.tensor([3, 0]), torch.tensor([1, 4, 2])
    s = torch.zeros(5, 6, dtype=torch.double)
    assert assn_loss(s, memb, gq, iq).item() == pytest.approx(math.log(2), abs=1e-12)
    for i, g in enumerate(gq):
        for j, q in enumerate(iq):
            s[g, q] = 20.0 if memb[i, j] else -20.0
    assert assn_loss(s, memb, gq, iq).item() < 1e-6


def test_assn_hand_expanded(rng):
    memb = torch.tensor([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]], dtype=torch.double)
    s = torch.from_numpy(rng.normal(0, 2, (4, 5)))
    gq, iq = [2, 1], [0, 3, 4]
    total = 0.0
    for i in range(2):
        for j in range(3):
            p = 1 / (1 + math.exp(-s[gq[i], iq[j]].item()))
            a = memb[i, j].item()
            total += -(a * math.log(p) + (1 - a) * math.log(1 - p))
    assert assn_loss(s, memb, gq, iq).item() == pytest.approx(total / 6, rel=1e-12)


def test_total_loss_weights():
    ones = {k: torch.tensor(1.0) for k in COMPONENTS}
    zeros = {k: torch.tensor(0.0) for k in COMPONENTS}
    assert total_loss(zeros, LossWeights()).item() == 0.0
    assert total_loss(ones, LossWeights()).item() == pytest.approx(19.0)
    ablate = LossWeights(assn=0.0)
    comps = dict(ones, assn=torch.tensor(float("nan")))
    # a zero weight removes the term entirely, even a non-finite one
    assert total_loss(comps, ablate).item() == pytest.approx(14.0)


@pytest.mark.parametrize("field", ["ind", "part", "assn"])
def test_loss_weights_validated(field):
    with pytest.raises(ValueError):
        LossWeights(**{field: -1.0})


def test_gradients_match_finite_differences():
    for r in check_gradients(instances=5, seed=3):
        assert r.ok, r.line()


def test_reductions_helper():
    assert all(r.ok for r in check_reductions(batches=10, seed=5))


def test_gradient_error_detects_wrong_gradient():
    class Bad(torch.autograd.Function):
        @staticmethod
        def forward(ctx, x):
            return (x ** 2).sum()

        @staticmethod
        def backward(ctx, g):
            return g * torch.ones(3, dtype=torch.double)
    assert gradient_relative_error(Bad.apply, torch.tensor([1.0, 2.0, 3.0])) > 0.1
