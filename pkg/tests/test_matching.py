import itertools

import numpy as np
import pytest
import torch

from partgroup.matching import (assignment_cost, group_match_cost, hungarian,
                                individual_match_cost)
from partgroup.oracles import brute_force_assignment


def test_trivial_and_two_by_two():
    assert hungarian([[5.0]]) == [(0, 0)]
    pairs = hungarian([[1.0, 2.0], [2.0, 1.0]])
    assert pairs == [(0, 0), (1, 1)]
    assert assignment_cost([[1.0, 2.0], [2.0, 1.0]], pairs) == 2.0


def test_six_by_six_against_all_permutations(rng):
    for _ in range(20):
        c = rng.uniform(0, 10, (6, 6))
        best = min(sum(c[p[j], j] for j in range(6)) for p in itertools.permutations(range(6)))
        assert assignment_cost(c, hungarian(c)) == pytest.approx(best, abs=1e-12)


def test_rectangular_and_empty():
    c = np.array([[3.0], [1.0], [2.0]])
    assert hungarian(c) == [(1, 0)]
    assert hungarian(np.zeros((4, 0))) == []


@pytest.mark.parametrize("cost, msg", [
    (np.zeros((2, 3)), "only 2 queries"),
    (np.array([[np.nan]]), "non-finite"),
    (np.zeros(3), "2-D"),
])
def test_invalid_cost(cost, msg):
    with pytest.raises(ValueError, match=msg):
        hungarian(cost)


def test_individual_cost_zero_for_exact_match():
    boxes = torch.tensor([[0.3, 0.4, 0.2, 0.2], [0.7, 0.6, 0.1, 0.3]])
    c = individual_match_cost(boxes, torch.ones(2), boxes)
    assert c[0, 0].item() == pytest.approx(0.0, abs=1e-6)
    assert c[1, 1].item() == pytest.approx(0.0, abs=1e-6)


def test_crossed_predictions_pair_with_exact_overlap():
    gt = torch.tensor([[0.3, 0.4, 0.2, 0.2], [0.7, 0.6, 0.1, 0.3]])
    pred = gt.flip(0)
    pairs = hungarian(individual_match_cost(pred, torch.ones(2), gt).numpy())
    assert pairs == [(1, 0), (0, 1)]


def test_individual_cost_hand_computed():
    pred = torch.tensor([[0.5, 0.5, 0.2, 0.2]], dtype=torch.double)
    gt = torch.tensor([[0.55, 0.5, 0.2, 0.2]], dtype=torch.double)
    # corners: pred (0.4,0.4,0.6,0.6), gt (0.45,0.4,0.65,0.6)
    inter, union, enclose = 0.15 * 0.2, 2 * 0.04 - 0.15 * 0.2, 0.25 * 0.2
    g = inter / union - (enclose - union) / enclose
    want = 1.0 * (1 - 0.8) + 2.5 * 0.05 + 1.0 * (1 - g)
    c = individual_match_cost(pred, torch.tensor([0.8], dtype=torch.double), gt)
    assert c.item() == pytest.approx(want, abs=1e-12)


def _group_instance(rng, n_pred, n_gt, n_cls=4):
    pb = torch.from_numpy(np.c_[rng.uniform(0.3, 0.7, (n_pred, 2)), rng.uniform(0.1, 0.4, (n_pred, 2))])
    gb = torch.from_numpy(np.c_[rng.uniform(0.3, 0.7, (n_gt, 2)), rng.uniform(0.1, 0.4, (n_gt, 2))])
    logits = torch.from_numpy(rng.normal(0, 2, (n_pred, n_cls)))
    labels = torch.from_numpy(rng.integers(0, 2, (n_gt, n_cls))).double()
    return pb, logits, gb, labels


def test_group_cost_exact_prediction_is_row_minimum(rng):
    pb, logits, gb, labels = _group_instance(rng, 4, 3)
    pb[1] = gb[2]
    logits[1] = (labels[2] * 2 - 1) * 30
    c = group_match_cost(pb, logits, gb, labels)
    assert c[1].argmin().item() == 2
    assert c[1, 2].item() == pytest.approx(0.0, abs=1e-9)


def test_group_cost_equivariant_under_gt_permutation(rng):
    pb, logits, gb, labels = _group_instance(rng, 5, 3)
    perm = torch.tensor([2, 0, 1])
    c = group_match_cost(pb, logits, gb, labels)
    cp = group_match_cost(pb, logits, gb[perm], labels[perm])
    assert torch.allclose(cp, c[:, perm])
    a = dict((g, p) for p, g in hungarian(c.numpy()))
    b = dict((g, p) for p, g in hungarian(cp.numpy()))
    assert all(b[i] == a[perm[i].item()] for i in range(3))


def test_group_cost_four_by_three_brute_force(rng):
    for _ in range(10):
        c = group_match_cost(*_group_instance(rng, 4, 3)).numpy()
        assert assignment_cost(c, hungarian(c)) == pytest.approx(brute_force_assignment(c), abs=1e-12)


def test_group_cost_association_term():
    pb = torch.tensor([[0.5, 0.5, 0.4, 0.4]] * 2)
    logits = torch.zeros(2, 3)
    labels = torch.zeros(1, 3)
    assoc = torch.tensor([[0.9], [0.1]])
    c = group_match_cost(pb, logits, pb[:1], labels, assoc_prob=assoc, w_assoc=5.0)
    assert (c[1, 0] - c[0, 0]).item() == pytest.approx(5.0 * 0.8, abs=1e-6)
    # disabled when the weight is zero
    c0 = group_match_cost(pb, logits, pb[:1], labels, assoc_prob=assoc, w_assoc=0.0)
    assert c0[0, 0].item() == pytest.approx(c0[1, 0].item())
