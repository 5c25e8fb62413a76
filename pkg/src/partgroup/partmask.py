"""Pose-guided binary part masks used as attention targets.

Keypoints are privileged training input read from a sidecar file; nothing in
this module is needed at inference time.
"""
from __future__ import annotations

import numpy as np

# Order of the 13 keypoints in every sidecar file (COCO body joints without
# the four eye/ear points).
PART_NAMES = (
    "face",
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
    "left_hip", "right_hip",
    "left_knee", "right_knee",
    "left_ankle", "right_ankle",
)
NUM_PARTS = len(PART_NAMES)


def window_size(box_wh, alpha: float) -> float:
    """Side length of the square window, ``alpha * max(w, h)`` in pixels."""
    w, h = box_wh
    return alpha * max(w, h)


def window_sizes(boxes_wh: np.ndarray, alpha: float) -> np.ndarray:
    boxes_wh = np.asarray(boxes_wh, dtype=np.float64).reshape(-1, 2)
    return alpha * boxes_wh.max(axis=1)


def keypoints_to_masks(keypoints, sizes, grid_hw, stride) -> np.ndarray:
    """Rasterize square windows around keypoints onto the feature grid.

    keypoints: (N, P, 3) pixel ``(x, y, valid)`` triples.
    sizes: (N,) window side per individual, pixels.
    Returns uint8 masks of shape (N, P, H, W).  A cell is on iff its
    pixel-space center lies inside the (closed) window; invalid keypoints
    give all-zero masks.
    """
    kps = np.asarray(keypoints, dtype=np.float64)
    if kps.ndim != 3 or kps.shape[-1] != 3:
        raise ValueError(f"keypoints must be (N, P, 3), got {kps.shape}")
    sizes = np.asarray(sizes, dtype=np.float64).reshape(-1)
    if sizes.shape[0] != kps.shape[0]:
        raise ValueError("one window size per individual required")
    gh, gw = grid_hw
    cy = (np.arange(gh) + 0.5) * stride
    cx = (np.arange(gw) + 0.5) * stride
    half = sizes[:, None, None] / 2.0
    in_x = np.abs(cx[None, None, :] - kps[..., 0:1]) <= half
    in_y = np.abs(cy[None, None, :] - kps[..., 1:2]) <= half
    masks = in_y[..., :, None] & in_x[..., None, :]
    masks &= (kps[..., 2] > 0)[..., None, None]
    return masks.astype(np.uint8)


def masks_for_individuals(keypoints, boxes_wh, alpha, grid_hw, stride, num_parts=NUM_PARTS):
    """Masks plus the (N, P) validity flags that select supervised pairs."""
    kps = np.asarray(keypoints, dtype=np.float64)
    if kps.shape[1:] != (num_parts, 3):
        raise ValueError(f"expected {num_parts} keypoints per individual, got shape {kps.shape}")
    masks = keypoints_to_masks(kps, window_sizes(boxes_wh, alpha), grid_hw, stride)
    return masks, kps[..., 2] > 0


def perturb_keypoints(keypoints, eps: float, sizes, rng: np.random.Generator) -> np.ndarray:
    """Shift every keypoint by independent ``Uniform(-eps*s, eps*s)`` offsets in x and y.

    ``sizes`` holds the window side ``s`` of each individual.  Validity flags
    are kept; ``eps == 0`` returns an unchanged copy without drawing.
    """
    kps = np.array(keypoints, dtype=np.float64, copy=True)
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if eps == 0 or kps.size == 0:
        return kps
    s = np.asarray(sizes, dtype=np.float64).reshape(-1, 1, 1)
    shift = rng.uniform(-1.0, 1.0, size=kps[..., :2].shape) * (eps * s)
    kps[..., :2] += shift
    return kps
