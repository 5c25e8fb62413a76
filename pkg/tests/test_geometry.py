import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from partgroup.geometry import (Box, box_cxcywh_to_xyxy, box_xyxy_to_cxcywh, elementwise_giou,
                                from_corners, giou, iou, pairwise_giou, pairwise_iou, to_corners)


def test_to_corners_examples():
    assert to_corners(Box(0.5, 0.5, 1.0, 1.0)) == (0.0, 0.0, 1.0, 1.0)
    assert to_corners(Box(0.25, 0.25, 0.5, 0.5)) == (0.0, 0.0, 0.5, 0.5)


def test_round_trip_random(rng):
    for _ in range(1000):
        w, h = rng.uniform(0.01, 1.0, 2)
        b = Box(*rng.uniform(0, 1, 2), w, h)
        back = from_corners(*to_corners(b))
        assert back.as_tuple() == pytest.approx(b.as_tuple(), abs=1e-12)


@pytest.mark.parametrize("bad", [(0.5, 0.5, 0.0, 0.2), (1.2, 0.5, 0.1, 0.1), (0.5, 0.5, 0.1, 1.5),
                                 (float("nan"), 0.5, 0.1, 0.1)])
def test_box_rejects_invalid(bad):
    with pytest.raises(ValueError):
        Box(*bad)


def test_iou_examples():
    a = Box(0.3, 0.4, 0.2, 0.3)
    assert iou(a, a) == 1.0
    assert iou(Box(0.1, 0.1, 0.1, 0.1), Box(0.8, 0.8, 0.1, 0.1)) == 0.0
    # corners (0,0,1,1) vs (0.5,0,1.5,1): intersection 0.5, union 1.5; halve everything
    left = from_corners(0.0, 0.0, 0.5, 0.5)
    right = from_corners(0.25, 0.0, 0.75, 0.5)
    assert iou(left, right) == pytest.approx(1 / 3, abs=1e-12)


def test_giou_examples():
    a = Box(0.3, 0.4, 0.2, 0.3)
    assert giou(a, a) == pytest.approx(1.0)
    touching = giou(from_corners(0.0, 0.0, 0.5, 0.5), from_corners(0.5, 0.0, 1.0, 0.5))
    assert touching == pytest.approx(0.0, abs=1e-12)


def test_giou_far_apart_matches_direct_formula():
    a, b = from_corners(0.0, 0.0, 0.01, 0.01), from_corners(0.99, 0.99, 1.0, 1.0)
    union = 2 * 0.01 ** 2
    enclose = 1.0
    assert giou(a, b) == pytest.approx(-(enclose - union) / enclose, abs=1e-12)
    assert giou(a, b) < -0.99


boxes = st.builds(lambda cx, cy, w, h: Box(cx, cy, w, h),
                  st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 1), st.floats(0.01, 1))


@settings(max_examples=200, deadline=None)
@given(boxes, boxes)
def test_overlap_ranges_and_symmetry(a, b):
    assert 0.0 <= iou(a, b) <= 1.0
    assert -1.0 <= giou(a, b) <= iou(a, b) + 1e-12
    assert iou(a, b) == pytest.approx(iou(b, a))
    assert giou(a, b) == pytest.approx(giou(b, a))


def test_tensor_helpers_agree_with_scalar(rng):
    a = [Box(*rng.uniform(0.2, 0.8, 2), *rng.uniform(0.05, 0.4, 2)) for _ in range(5)]
    b = [Box(*rng.uniform(0.2, 0.8, 2), *rng.uniform(0.05, 0.4, 2)) for _ in range(4)]
    ta = box_cxcywh_to_xyxy(torch.tensor([x.as_tuple() for x in a], dtype=torch.double))
    tb = box_cxcywh_to_xyxy(torch.tensor([x.as_tuple() for x in b], dtype=torch.double))
    m_iou, _ = pairwise_iou(ta, tb)
    m_giou = pairwise_giou(ta, tb)
    for i in range(5):
        for j in range(4):
            assert m_iou[i, j].item() == pytest.approx(iou(a[i], b[j]), abs=1e-12)
            assert m_giou[i, j].item() == pytest.approx(giou(a[i], b[j]), abs=1e-12)
    diag = elementwise_giou(ta[:4], tb)
    assert torch.allclose(diag, torch.diagonal(m_giou[:4]))
    assert torch.allclose(box_xyxy_to_cxcywh(ta),
                          torch.tensor([x.as_tuple() for x in a], dtype=torch.double))


def test_giou_is_not_nan_for_degenerate_tensor_boxes():
    z = torch.zeros(1, 4, dtype=torch.double)
    g = pairwise_giou(z, z)
    assert not math.isnan(g.item())
