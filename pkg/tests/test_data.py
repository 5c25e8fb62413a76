import copy
import json

import numpy as np
import pytest

from partgroup.data import (CLASS_NAMES, NUM_CLASSES, Group, Scene, SchemaError, SynthSpec,
                            derive_group_targets, generate_synthetic, group_instances,
                            groups_from_rules, load_split, save_keypoints, save_split,
                            scene_triplets, write_synthetic)


def _scene(groups, n=4):
    boxes = np.array([[10 + 30 * i, 10, 30 + 30 * i, 60] for i in range(n)], dtype=float)
    gl = [Group(np.array([10.0, 10, 30 + 30 * max(m), 60]), tuple(m), np.eye(NUM_CLASSES, dtype=np.uint8)[c])
          for m, c in groups]
    return Scene("s", 128, 64, boxes, gl)


@pytest.fixture(scope="module")
def synth():
    return generate_synthetic(SynthSpec(num_scenes=12, seed=3))


def test_empty_split(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text("")
    assert load_split(p) == []


def _write(tmp_path, scenes_doc):
    p = tmp_path / "ann.json"
    p.write_text(json.dumps({"schema_version": 1, "class_names": list(CLASS_NAMES),
                             "scenes": scenes_doc}))
    return p


def test_member_out_of_range_rejected(tmp_path):
    rec = {"image_id": "x", "width": 100, "height": 100,
           "persons": [{"box": [1, 1, 20, 40]}, {"box": [30, 1, 50, 40]}],
           "groups": [{"box": [1, 1, 50, 40], "members": [0, 2], "classes": [4]}]}
    with pytest.raises(SchemaError, match=r"groups\[0\].*member indices \[2\]"):
        load_split(_write(tmp_path, [rec]))


@pytest.mark.parametrize("patch, msg", [
    ({"persons": [{"box": [1, 1, 120, 40]}]}, "outside"),
    ({"persons": [{"box": [5, 5, 5, 40]}]}, "empty"),
    ({"groups": [{"box": [1, 1, 20, 40], "members": [], "classes": []}]}, "no members"),
    ({"groups": [{"box": [1, 1, 20, 40], "members": [0], "classes": [9]}]}, "class id 9"),
    ({"width": 0}, "positive"),
])
def test_invalid_records(tmp_path, patch, msg):
    rec = {"image_id": "x", "width": 100, "height": 100, "persons": [{"box": [1, 1, 20, 40]}],
           "groups": []}
    rec.update(patch)
    with pytest.raises(SchemaError, match=msg):
        load_split(_write(tmp_path, [rec]))


def test_wrong_schema_version(tmp_path):
    p = tmp_path / "ann.json"
    p.write_text(json.dumps({"schema_version": 7, "scenes": []}))
    with pytest.raises(SchemaError, match="schema_version"):
        load_split(p)


def test_round_trip_bit_exact(tmp_path, synth):
    rng = np.random.default_rng(0)
    synth = copy.deepcopy(synth)
    # off-grid coordinates exercise float formatting
    for s in synth:
        s.person_boxes = s.person_boxes + rng.uniform(0, 0.3, s.person_boxes.shape)
    save_split(synth, tmp_path / "a.json")
    save_keypoints(synth, tmp_path / "k.json")
    back = load_split(tmp_path / "a.json", tmp_path / "k.json")
    assert len(back) == len(synth)
    for a, b in zip(synth, back):
        assert (a.image_id, a.width, a.height) == (b.image_id, b.width, b.height)
        assert np.array_equal(a.person_boxes, b.person_boxes)
        assert np.array_equal(a.keypoints, b.keypoints)
        assert len(a.groups) == len(b.groups)
        for ga, gb in zip(a.groups, b.groups):
            assert np.array_equal(ga.box, gb.box) and ga.members == gb.members
            assert np.array_equal(ga.classes, gb.classes)


def test_generator_closure_and_invariants(tmp_path, synth):
    ann, kps = write_synthetic(synth, tmp_path)
    loaded = load_split(ann, kps)
    for s, l in zip(synth, loaded):
        assert np.array_equal(s.image, l.load_image())
        # boxes normalized at load time
        for arr in (l.individual_cxcywh(), l.group_cxcywh()):
            assert ((arr >= 0) & (arr <= 1)).all()
        _, memb, _ = derive_group_targets(l)
        assert (memb.sum(1) >= 1).all()
        for g in l.groups:
            members = l.person_boxes[list(g.members)]
            assert (g.box[:2] <= members[:, :2].min(0)).all()
            assert (g.box[2:] >= members[:, 2:].max(0)).all()


def test_generator_byte_identical(tmp_path):
    spec = SynthSpec(num_scenes=4, seed=11)
    write_synthetic(generate_synthetic(spec), tmp_path / "a")
    write_synthetic(generate_synthetic(spec), tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 4 + 2
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_rule_replay_on_1000_scenes():
    scenes = generate_synthetic(SynthSpec(num_scenes=1000, seed=21))
    bad = 0
    for s in scenes:
        replay = groups_from_rules(s.keypoints[..., :2], s.person_boxes)
        same = len(replay) == len(s.groups) and all(
            a.members == b.members and np.array_equal(a.classes, b.classes)
            and np.array_equal(a.box, b.box) for a, b in zip(replay, s.groups))
        bad += not same
    assert bad == 0


def test_every_class_is_generated():
    scenes = generate_synthetic(SynthSpec(num_scenes=200, seed=5))
    seen = np.zeros(NUM_CLASSES)
    for s in scenes:
        for g in s.groups:
            seen += g.classes
    assert (seen > 0).all(), dict(zip(CLASS_NAMES, seen))


def test_membership_examples():
    _, m, _ = derive_group_targets(_scene([((0, 1, 2, 3), 7)]))
    assert m.tolist() == [[1, 1, 1, 1]]
    _, m, _ = derive_group_targets(_scene([((0, 1), 4), ((2, 3), 5)]))
    assert m.tolist() == [[1, 1, 0, 0], [0, 0, 1, 1]]
    boxes, m, cls = derive_group_targets(_scene([((0, 1), 4), ((1, 2), 5)]))
    assert m[:, 1].tolist() == [1, 1] and m.sum(0).tolist() == [1, 2, 1, 0]
    assert boxes.shape == (2, 4) and cls.argmax(1).tolist() == [4, 5]


def test_instances_and_triplets():
    s = _scene([((0, 1), 4), ((2,), 0)])
    boxes, cls, rep, assoc = group_instances(s)
    assert rep.tolist() == [0, 1, 2]
    assert assoc.tolist() == [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]]
    assert np.array_equal(boxes[0], boxes[1]) and cls[2].argmax() == 0
    trip = scene_triplets(s)
    assert len(trip) == 3 and {t[2] for t in trip} == {0, 4}


def test_synth_spec_validation():
    with pytest.raises(ValueError):
        generate_synthetic(SynthSpec(num_scenes=1, persons=(1, 5)))
    with pytest.raises(ValueError):
        generate_synthetic(SynthSpec(num_scenes=1, image_size=64, height_range=(40, 50)))
