"""Annotation schema, split loading/saving and the synthetic scene generator.

On-disk format (``schema_version`` 1), JSON::

    {"schema_version": 1,
     "class_names": [...],
     "scenes": [{"image_id": str, "image": relative path, "width": int, "height": int,
                 "persons": [{"box": [x1, y1, x2, y2]}, ...],
                 "groups": [{"box": [x1, y1, x2, y2], "members": [int, ...],
                             "classes": [int, ...]}, ...]}]}

All coordinates on disk are pixel-space floats.  Keypoints live in a sidecar
file (see :func:`save_keypoints`).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .geometry import Box
from .partmask import NUM_PARTS, PART_NAMES

SCHEMA_VERSION = 1

# Synthetic interaction taxonomy.  The first four are decided per person, the
# rest per pair of persons.
CLASS_NAMES = (
    "wave",           # hand: a wrist above the face
    "point",          # hand: arm stretched horizontally
    "akimbo",         # hand: both wrists on the hips
    "wide-stance",    # posture: ankles far apart
    "mutual-gaze",    # face: two people facing each other
    "handshake",      # hand: wrists of two people touching
    "back-to-back",   # face: facing away from each other, close
    "side-by-side",   # distance: same facing direction, close
)
INDIVIDUAL_CLASSES = (0, 1, 2, 3)
PAIR_CLASSES = (4, 5, 6, 7)
NUM_CLASSES = len(CLASS_NAMES)

# indices into PART_NAMES
FACE, LSH, RSH, LEL, REL, LWR, RWR, LHIP, RHIP, LKN, RKN, LANK, RANK = range(NUM_PARTS)


class SchemaError(ValueError):
    """Raised for malformed annotation or keypoint records."""


@dataclass
class Group:
    box: np.ndarray          # pixel xyxy
    members: tuple
    classes: np.ndarray      # multi-hot (N_C,)


@dataclass
class Scene:
    image_id: str
    width: int
    height: int
    person_boxes: np.ndarray             # (n, 4) pixel xyxy
    groups: list = field(default_factory=list)
    keypoints: np.ndarray | None = None  # (n, P, 3) pixel (x, y, valid)
    image: np.ndarray | None = None      # (H, W, 3) uint8
    image_path: str | None = None

    @property
    def num_persons(self) -> int:
        return len(self.person_boxes)

    def _normalize(self, xyxy):
        xyxy = np.asarray(xyxy, dtype=np.float64).reshape(-1, 4)
        scale = np.array([self.width, self.height, self.width, self.height], dtype=np.float64)
        n = xyxy / scale
        return np.stack([(n[:, 0] + n[:, 2]) / 2, (n[:, 1] + n[:, 3]) / 2,
                         n[:, 2] - n[:, 0], n[:, 3] - n[:, 1]], axis=1)

    def boxes(self) -> list[Box]:
        """Normalized individual boxes."""
        return [Box(*map(float, b)) for b in self.individual_cxcywh()]

    def individual_cxcywh(self) -> np.ndarray:
        return self._normalize(self.person_boxes)

    def group_cxcywh(self) -> np.ndarray:
        return self._normalize([g.box for g in self.groups])

    def load_image(self) -> np.ndarray:
        if self.image is None:
            if self.image_path is None:
                raise FileNotFoundError(f"scene {self.image_id} has no image")
            import matplotlib.image as mpimg
            img = mpimg.imread(self.image_path)
            if img.dtype != np.uint8:
                img = np.round(img[..., :3] * 255).astype(np.uint8)
            self.image = img[..., :3]
        return self.image


# --- targets -------------------------------------------------------------------

def derive_group_targets(scene: Scene, num_classes: int = NUM_CLASSES):
    """Group boxes (G, 4) normalized cxcywh, membership (G, n), classes (G, N_C)."""
    g = len(scene.groups)
    membership = np.zeros((g, scene.num_persons), dtype=np.float32)
    classes = np.zeros((g, num_classes), dtype=np.float32)
    for i, grp in enumerate(scene.groups):
        membership[i, list(grp.members)] = 1.0
        classes[i] = grp.classes[:num_classes]
    return scene.group_cxcywh().reshape(g, 4), membership, classes


def group_instances(scene: Scene, num_classes: int = NUM_CLASSES):
    """Per-(group, member) training instances.

    Each ground-truth triplet set ``(member, group, classes)`` becomes one
    instance that a single group query must predict.  Returns boxes (K, 4),
    classes (K, N_C), the representative individual (K,) and one-hot
    association rows (K, n).
    """
    gboxes, _, gcls = derive_group_targets(scene, num_classes)
    boxes, cls, rep = [], [], []
    for gi, grp in enumerate(scene.groups):
        for m in grp.members:
            boxes.append(gboxes[gi])
            cls.append(gcls[gi])
            rep.append(m)
    k = len(rep)
    assoc = np.zeros((k, scene.num_persons), dtype=np.float32)
    assoc[np.arange(k), rep] = 1.0
    return (np.asarray(boxes, dtype=np.float64).reshape(k, 4),
            np.asarray(cls, dtype=np.float32).reshape(k, num_classes),
            np.asarray(rep, dtype=np.int64), assoc)


def scene_triplets(scene: Scene):
    """Ground-truth triplets as ``(individual xyxy, group xyxy, class)`` in pixels."""
    out = []
    for grp in scene.groups:
        for m in grp.members:
            for k in np.flatnonzero(grp.classes):
                out.append((tuple(map(float, scene.person_boxes[m])), tuple(map(float, grp.box)), int(k)))
    return out


# --- validation & IO -------------------------------------------------------------

def _check_box(box, width, height, where):
    if len(box) != 4:
        raise SchemaError(f"{where}: box must have 4 numbers, got {box!r}")
    x1, y1, x2, y2 = (float(v) for v in box)
    if not all(np.isfinite([x1, y1, x2, y2])):
        raise SchemaError(f"{where}: non-finite box {box!r}")
    if not (0 <= x1 < x2 <= width and 0 <= y1 < y2 <= height):
        raise SchemaError(f"{where}: box {box!r} outside {width}x{height} image or empty")
    return np.array([x1, y1, x2, y2], dtype=np.float64)


def scene_from_record(rec: dict, num_classes: int = NUM_CLASSES, root: str | os.PathLike = ".",
                      where: str = "scene") -> Scene:
    try:
        image_id = str(rec["image_id"])
        width, height = int(rec["width"]), int(rec["height"])
        persons = rec["persons"]
        groups = rec.get("groups", [])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: missing or malformed field ({exc})") from None
    where = f"{where} ({image_id})"
    if width <= 0 or height <= 0:
        raise SchemaError(f"{where}: image size must be positive")
    pboxes = np.array([_check_box(p["box"], width, height, f"{where} persons[{i}]")
                       for i, p in enumerate(persons)], dtype=np.float64).reshape(-1, 4)
    glist = []
    for gi, g in enumerate(groups):
        gw = f"{where} groups[{gi}]"
        box = _check_box(g["box"], width, height, gw)
        members = tuple(int(m) for m in g["members"])
        if not members:
            raise SchemaError(f"{gw}: group has no members")
        bad = [m for m in members if not 0 <= m < len(pboxes)]
        if bad:
            raise SchemaError(f"{gw}: member indices {bad} out of range for {len(pboxes)} persons")
        if len(set(members)) != len(members):
            raise SchemaError(f"{gw}: duplicate members {members}")
        cls = np.zeros(num_classes, dtype=np.uint8)
        for k in g["classes"]:
            if not 0 <= int(k) < num_classes:
                raise SchemaError(f"{gw}: class id {k} outside [0, {num_classes})")
            cls[int(k)] = 1
        glist.append(Group(box, members, cls))
    image = rec.get("image")
    path = str(Path(root) / image) if image else None
    return Scene(image_id, width, height, pboxes, glist, image_path=path)


def scene_to_record(scene: Scene, root: str | os.PathLike | None = None) -> dict:
    image = scene.image_path
    if image is not None and root is not None:
        image = os.path.relpath(image, root)
    return {
        "image_id": scene.image_id,
        "image": image,
        "width": scene.width,
        "height": scene.height,
        "persons": [{"box": [float(v) for v in b]} for b in scene.person_boxes],
        "groups": [{"box": [float(v) for v in g.box], "members": list(g.members),
                    "classes": [int(k) for k in np.flatnonzero(g.classes)]} for g in scene.groups],
    }


def load_split(path, keypoints_path=None, num_classes: int | None = None) -> list[Scene]:
    """Read and validate an annotation file (and optional keypoint sidecar)."""
    path = Path(path)
    text = path.read_text()
    if not text.strip():
        return []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")
    if num_classes is None:
        num_classes = len(doc.get("class_names", CLASS_NAMES))
    scenes = [scene_from_record(r, num_classes, path.parent, f"{path}: scenes[{i}]")
              for i, r in enumerate(doc.get("scenes", []))]
    ids = [s.image_id for s in scenes]
    if len(set(ids)) != len(ids):
        raise SchemaError(f"{path}: duplicate image ids")
    if keypoints_path is not None:
        attach_keypoints(scenes, load_keypoints(keypoints_path))
    return scenes


def save_split(scenes, path, class_names=CLASS_NAMES):
    path = Path(path)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "class_names": list(class_names),
        "scenes": [scene_to_record(s, path.parent) for s in scenes],
    }
    path.write_text(json.dumps(doc, indent=1))


def save_keypoints(scenes, path):
    """Sidecar: ``{"schema_version", "part_names", "keypoints": {image_id: [[[x, y, v] * P] * n]}}``."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "part_names": list(PART_NAMES),
        "keypoints": {s.image_id: [[[float(x), float(y), int(v)] for x, y, v in person]
                                   for person in s.keypoints]
                      for s in scenes if s.keypoints is not None},
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_keypoints(path, num_parts: int = NUM_PARTS) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")
    out = {}
    for image_id, persons in doc.get("keypoints", {}).items():
        arr = np.asarray(persons, dtype=np.float64)
        if arr.size == 0:
            arr = arr.reshape(0, num_parts, 3)
        if arr.ndim != 3 or arr.shape[1:] != (num_parts, 3):
            raise SchemaError(f"{path}: {image_id}: expected (n, {num_parts}, 3) keypoints, got {arr.shape}")
        out[image_id] = arr
    return out


def attach_keypoints(scenes, kps: dict):
    for s in scenes:
        if s.image_id not in kps:
            continue
        arr = kps[s.image_id]
        if len(arr) != s.num_persons:
            raise SchemaError(f"{s.image_id}: {len(arr)} keypoint sets for {s.num_persons} persons")
        s.keypoints = arr


# --- interaction rules ----------------------------------------------------------

def _unit(kp):
    return abs(kp[RSH, 0] - kp[LSH, 0])


def facing(kp) -> int:
    """+1 when the face sits right of the shoulder midpoint, else -1."""
    mid = (kp[LSH, 0] + kp[RSH, 0]) / 2
    return 1 if kp[FACE, 0] > mid else -1


def individual_labels(kp) -> np.ndarray:
    """Multi-hot over CLASS_NAMES using only the per-person rules."""
    u = _unit(kp)
    out = np.zeros(NUM_CLASSES, dtype=np.uint8)
    if min(kp[LWR, 1], kp[RWR, 1]) < kp[FACE, 1] - 0.05 * u:
        out[0] = 1
    for wr, sh in ((LWR, LSH), (RWR, RSH)):
        if abs(kp[wr, 1] - kp[sh, 1]) < 0.25 * u and abs(kp[wr, 0] - kp[sh, 0]) > 0.8 * u:
            out[1] = 1
    if (np.hypot(*(kp[LWR, :2] - kp[LHIP, :2])) < 0.18 * u
            and np.hypot(*(kp[RWR, :2] - kp[RHIP, :2])) < 0.18 * u):
        out[2] = 1
    if abs(kp[LANK, 0] - kp[RANK, 0]) > 1.4 * u:
        out[3] = 1
    return out


def pair_labels(ka, kb) -> np.ndarray:
    """Multi-hot over CLASS_NAMES for an unordered pair of persons."""
    if (ka[LSH, 0] + ka[RSH, 0]) > (kb[LSH, 0] + kb[RSH, 0]):
        ka, kb = kb, ka
    u = (_unit(ka) + _unit(kb)) / 2
    fa, fb = facing(ka), facing(kb)
    out = np.zeros(NUM_CLASSES, dtype=np.uint8)
    face_dy = abs(ka[FACE, 1] - kb[FACE, 1])
    if fa == 1 and fb == -1 and face_dy < 0.5 * u and 0 < kb[FACE, 0] - ka[FACE, 0] < 4.0 * u:
        out[4] = 1
    wrists_a = ka[[LWR, RWR], :2]
    wrists_b = kb[[LWR, RWR], :2]
    if np.min(np.linalg.norm(wrists_a[:, None] - wrists_b[None], axis=-1)) < 0.2 * u:
        out[5] = 1
    hip_a = ka[[LHIP, RHIP], :2].mean(0)
    hip_b = kb[[LHIP, RHIP], :2].mean(0)
    if fa == -1 and fb == 1 and np.linalg.norm(hip_a - hip_b) < 2.0 * u:
        out[6] = 1
    sh_a = ka[[LSH, RSH], :2].mean(0)
    sh_b = kb[[LSH, RSH], :2].mean(0)
    if fa == fb and np.linalg.norm(sh_a - sh_b) < 2.2 * u:
        out[7] = 1
    return out


def hull(boxes) -> np.ndarray:
    b = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    return np.array([b[:, 0].min(), b[:, 1].min(), b[:, 2].max(), b[:, 3].max()])


def groups_from_rules(keypoints, person_boxes) -> list[Group]:
    """Recompute every group of a scene from keypoint geometry."""
    groups = []
    for i, kp in enumerate(keypoints):
        lab = individual_labels(kp)
        if lab.any():
            groups.append(Group(np.asarray(person_boxes[i], dtype=np.float64).copy(), (i,), lab))
    for i, j in combinations(range(len(keypoints)), 2):
        lab = pair_labels(keypoints[i], keypoints[j])
        if lab.any():
            groups.append(Group(hull([person_boxes[i], person_boxes[j]]), (i, j), lab))
    return groups


# --- synthetic generator ----------------------------------------------------------

@dataclass
class SynthSpec:
    num_scenes: int = 64
    image_size: int = 128
    persons: tuple = (2, 3)
    groups: tuple = (1, 8)
    height_range: tuple = (40.0, 50.0)
    seed: int = 0
    max_tries: int = 200

    def validate(self):
        lo, hi = self.persons
        if not (1 <= lo <= hi <= 3):
            raise ValueError("persons per scene must lie within [1, 3] (two rows, one pair)")
        if self.groups[0] > self.groups[1] or self.groups[0] < 0:
            raise ValueError("invalid groups range")
        hmin, hmax = self.height_range
        if not (0 < hmin <= hmax) or 2 * hmax * 1.2 > self.image_size or 2.2 * hmax > self.image_size:
            raise ValueError(f"person heights {self.height_range} do not fit a {self.image_size}px image")


PART_COLORS = np.array([
    (255, 220, 0),                      # face
    (230, 25, 75), (60, 180, 75),       # shoulders
    (0, 130, 200), (245, 130, 48),      # elbows
    (145, 30, 180), (70, 240, 240),     # wrists
    (240, 50, 230), (210, 245, 60),     # hips
    (0, 128, 128), (170, 110, 40),      # knees
    (128, 0, 0), (0, 0, 128),           # ankles
], dtype=np.uint8)


def _skeleton(cx, y0, h, face_dir, arms, wide):
    """Keypoints (P, 2) for a person; ``arms`` gives the (left, right) arm state."""
    sw = 0.36 * h
    kp = np.zeros((NUM_PARTS, 2))
    kp[FACE] = (cx + 0.08 * h * face_dir, y0 + 0.10 * h)
    kp[LSH] = (cx - sw / 2, y0 + 0.24 * h)
    kp[RSH] = (cx + sw / 2, y0 + 0.24 * h)
    kp[LHIP] = (cx - 0.14 * h, y0 + 0.55 * h)
    kp[RHIP] = (cx + 0.14 * h, y0 + 0.55 * h)
    kx, ax = (0.24, 0.34) if wide else (0.14, 0.14)
    kp[LKN] = (cx - kx * h, y0 + 0.76 * h)
    kp[RKN] = (cx + kx * h, y0 + 0.76 * h)
    kp[LANK] = (cx - ax * h, y0 + 0.97 * h)
    kp[RANK] = (cx + ax * h, y0 + 0.97 * h)
    for side, state, sh, el, wr, hip in ((-1, arms[0], LSH, LEL, LWR, LHIP),
                                         (1, arms[1], RSH, REL, RWR, RHIP)):
        sx, sy = kp[sh]
        if state == "down":
            kp[el] = (sx + side * 0.04 * h, y0 + 0.40 * h)
            kp[wr] = (sx + side * 0.08 * h, y0 + 0.55 * h)
        elif state == "raised":
            kp[el] = (sx + side * 0.08 * h, y0 + 0.12 * h)
            kp[wr] = (sx + side * 0.10 * h, y0 - 0.02 * h)
        elif state == "hip":
            kp[el] = (sx + side * 0.16 * h, y0 + 0.40 * h)
            kp[wr] = (kp[hip, 0] + side * 0.02 * h, y0 + 0.52 * h)
        elif state == "point":
            kp[el] = (sx + side * 0.20 * h, sy)
            kp[wr] = (sx + side * 0.42 * h, sy)
        elif state == "shake":
            kp[el] = (sx + side * 0.14 * h, y0 + 0.40 * h)
            kp[wr] = (sx + side * 0.30 * h, y0 + 0.45 * h)
        else:
            raise ValueError(f"unknown arm state {state!r}")
    return kp


def _person_box(kp, h):
    r = 0.09 * h
    pts = np.concatenate([kp, kp[FACE] + np.array([[-r, -r], [r, r]])])
    pad = 2.0
    return np.array([pts[:, 0].min() - pad, pts[:, 1].min() - pad,
                     pts[:, 0].max() + pad, pts[:, 1].max() + pad])


def _random_arms(rng, face_dir):
    if rng.random() < 0.2:
        return ("hip", "hip")
    arms = []
    for side in (-1, 1):
        choices = ["down", "down", "raised"]
        if side == face_dir:
            choices.append("point")
        arms.append(choices[rng.integers(len(choices))])
    return tuple(arms)


def _face_arm(arms, face_dir, state):
    arms = list(arms)
    arms[0 if face_dir == -1 else 1] = state
    if "hip" in arms:
        arms = [state if a == state else "down" for a in arms]
    return tuple(arms)


def _sample_layout(rng, spec: SynthSpec):
    """Person parameters ``(cx, y0, h, face_dir, arms, wide)`` for one scene."""
    size = spec.image_size
    n = int(rng.integers(spec.persons[0], spec.persons[1] + 1))
    hmin, hmax = spec.height_range
    rows = [4.0, size / 2 + 4.0]
    pair_row = int(rng.integers(2))
    people = []
    scenario = "solo" if n == 1 else ("handshake", "mutual", "back", "side", "solo")[rng.integers(5)]
    if scenario == "solo":
        for k in range(min(n, 2)):
            row = rows[(pair_row + k) % 2] + rng.uniform(0, 3)
            h = rng.uniform(hmin, hmax)
            f = int(rng.choice([-1, 1]))
            people.append([rng.uniform(0.3 * size, 0.7 * size), row, h, f, _random_arms(rng, f),
                           rng.random() < 0.3])
        n = len(people)
    else:
        h = rng.uniform(hmin, hmax)
        y0 = rows[pair_row] + rng.uniform(0, 3)
        if scenario == "handshake":
            fa, fb = 1, -1
            gap = 0.96 * h + rng.uniform(-0.03, 0.03) * h
        elif scenario == "mutual":
            fa, fb = 1, -1
            gap = rng.uniform(1.05, 1.35) * h
        elif scenario == "back":
            fa, fb = -1, 1
            gap = rng.uniform(0.62, 0.7) * h
        else:
            fa = fb = int(rng.choice([-1, 1]))
            gap = rng.uniform(0.62, 0.75) * h
        ax = rng.uniform(0.5 * size - gap / 2 - 6, 0.5 * size - gap / 2 + 6)
        arms_a, arms_b = _random_arms(rng, fa), _random_arms(rng, fb)
        if scenario == "handshake":
            arms_a, arms_b = _face_arm(arms_a, fa, "shake"), _face_arm(arms_b, fb, "shake")
        else:
            # inner arms hang down so neighbours never touch hands
            if arms_a != ("hip", "hip"):
                arms_a = (arms_a[0], "down")
            if arms_b != ("hip", "hip"):
                arms_b = ("down", arms_b[1])
        people.append([ax, y0, h, fa, arms_a, rng.random() < 0.3])
        people.append([ax + gap, y0, h, fb, arms_b, rng.random() < 0.3])
        if n == 3:
            h3 = rng.uniform(hmin, hmax)
            f3 = int(rng.choice([-1, 1]))
            people.append([rng.uniform(0.3 * size, 0.7 * size), rows[1 - pair_row] + rng.uniform(0, 3),
                           h3, f3, _random_arms(rng, f3), rng.random() < 0.3])
    return people


def _render(size, people_kps, people, rng):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    base = rng.uniform(150, 230, size=3)
    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = base
    img += rng.normal(0, 4.0, size=img.shape)

    def seg(p, q, r, color):
        d = q - p
        t = np.clip(((xx - p[0]) * d[0] + (yy - p[1]) * d[1]) / max(d @ d, 1e-9), 0, 1)
        dist = np.hypot(xx - (p[0] + t * d[0]), yy - (p[1] + t * d[1]))
        img[dist <= r] = color

    limbs = ((LSH, LEL), (LEL, LWR), (RSH, REL), (REL, RWR), (LHIP, LKN), (LKN, LANK),
             (RHIP, RKN), (RKN, RANK), (LSH, RSH), (LHIP, RHIP), (LSH, LHIP), (RSH, RHIP))
    for kp, (cx, y0, h, f, arms, wide) in zip(people_kps, people):
        body = rng.uniform(40, 110, size=3)
        torso_c = kp[[LSH, RSH, LHIP, RHIP]].mean(0)
        seg(kp[[LSH, RSH]].mean(0), kp[[LHIP, RHIP]].mean(0), 0.1 * h, body)
        for a, b in limbs:
            seg(kp[a], kp[b], max(1.2, 0.035 * h), body)
        seg(torso_c, torso_c, 0.12 * h, body)
        head_r = 0.09 * h
        img[np.hypot(xx - kp[FACE, 0], yy - kp[FACE, 1]) <= head_r] = (235, 190, 150)
        eye = kp[FACE] + np.array([f * 0.05 * h, -0.01 * h])
        img[np.hypot(xx - eye[0], yy - eye[1]) <= 1.2] = (20, 20, 20)
        for p in range(NUM_PARTS):
            x, y = kp[p]
            img[(np.abs(xx - x) <= 1.5) & (np.abs(yy - y) <= 1.5)] = PART_COLORS[p]
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def generate_scene(rng: np.random.Generator, spec: SynthSpec, image_id: str) -> Scene:
    size = spec.image_size
    for _ in range(spec.max_tries):
        people = _sample_layout(rng, spec)
        kps = [_skeleton(*p) for p in people]
        boxes = np.array([_person_box(kp, p[2]) for kp, p in zip(kps, people)])
        if boxes.min() < 0.5 or boxes.max() > size - 0.5:
            continue
        groups = groups_from_rules(kps, boxes)
        if not spec.groups[0] <= len(groups) <= spec.groups[1]:
            continue
        keypoints = np.concatenate([np.stack(kps), np.ones((len(kps), NUM_PARTS, 1))], axis=-1)
        image = _render(size, kps, people, rng)
        return Scene(image_id, size, size, boxes, groups, keypoints, image)
    raise ValueError(f"could not place persons for {image_id} within {spec.max_tries} tries; "
                     "spec ranges are infeasible for the image size")


def generate_synthetic(spec: SynthSpec) -> list[Scene]:
    """Deterministic synthetic split; scene ``i`` uses its own child seed."""
    spec.validate()
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.num_scenes)
    return [generate_scene(np.random.default_rng(s), spec, f"synth_{i:05d}")
            for i, s in enumerate(seeds)]


def write_synthetic(scenes, out_dir, class_names=CLASS_NAMES):
    """Write images, ``annotations.json`` and ``keypoints.json`` under ``out_dir``."""
    import matplotlib.image as mpimg

    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    for s in scenes:
        path = out / "images" / f"{s.image_id}.png"
        mpimg.imsave(path, s.image, format="png", metadata={"Software": None})
        s.image_path = str(path)
    save_split(scenes, out / "annotations.json", class_names)
    save_keypoints(scenes, out / "keypoints.json")
    return out / "annotations.json", out / "keypoints.json"
