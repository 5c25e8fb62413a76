import dataclasses

import pytest

from partgroup.config import (PROFILES, TrainConfig, build_configs, parse_overrides, read_kv,
                              train_config_from_text, train_config_text)
from partgroup.losses import LossWeights
from partgroup.network import ModelConfig


def test_full_profile_defaults():
    m, t = build_configs("paper")
    assert (m.dim, m.num_individual_queries, m.num_group_queries, m.num_parts) == (256, 24, 32, 13)
    assert (m.enc_layers, m.ind_dec_layers, m.enh_layers, m.grp_dec_layers, m.heads) == (6, 3, 3, 3, 8)
    assert (t.epochs, t.lr, t.backbone_lr, t.lr_drop_epoch, t.lr_after_drop) == (90, 1e-4, 1e-5, 60, 1e-5)
    assert (t.beta1, t.beta2, t.adam_eps) == (0.9, 0.999, 1e-8)
    assert t.loss_weights() == LossWeights(1.0, 2.0, 1.0, 2.5, 1.0, 10.0, 5.0)
    assert (t.window_alpha, t.nms_threshold, t.batch_size) == (0.2, 0.5, 16)


def test_desk_profile_defaults():
    m, t = build_configs("desk")
    assert (m.dim, m.num_individual_queries, m.num_group_queries, m.heads) == (64, 12, 16, 4)
    assert (m.enc_layers, m.ind_dec_layers, m.enh_layers, m.grp_dec_layers) == (2, 2, 2, 2)
    assert t.batch_size == 8 and t.max_steps == 2000


def test_precedence(tmp_path):
    f = tmp_path / "cfg.txt"
    f.write_text("# comment\ndim = 32\nlr = 0.002\n\nlambda_assn=0\n")
    m, t = build_configs("paper", read_kv(f), {"lr": "3e-4"})
    assert m.dim == 32 and t.lr == 3e-4 and t.lambda_assn == 0.0 and t.epochs == 90


def test_every_field_settable():
    for klass in (ModelConfig, TrainConfig):
        for f in dataclasses.fields(klass):
            assert f.name in {**parse_overrides({f.name: _text(f.default)})[0],
                              **parse_overrides({f.name: _text(f.default)})[1]}


def _text(v):
    return ",".join(map(str, v)) if isinstance(v, tuple) else str(v)


def test_typed_parsing():
    m, t = parse_overrides({"stem-channels": "8,16,32", "match_assn": "false", "epochs": "5"})
    assert m == {"stem_channels": (8, 16, 32)}
    assert t == {"match_assn": False, "epochs": 5}


@pytest.mark.parametrize("bad", [{"nope": "1"}])
def test_unknown_key(bad):
    with pytest.raises(ValueError, match="unknown config key"):
        parse_overrides(bad)


@pytest.mark.parametrize("kw", [dict(lr=0.0), dict(lr_drop_epoch=300), dict(lambda_part=-1.0),
                                dict(nms_threshold=0.0), dict(batch_size=0), dict(pose_noise=-1.0)])
def test_invalid_train_config(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_bad_config_line(tmp_path):
    f = tmp_path / "cfg.txt"
    f.write_text("dim 32\n")
    with pytest.raises(ValueError, match="expected 'key = value'"):
        read_kv(f)


def test_unknown_profile():
    with pytest.raises(ValueError, match="unknown profile"):
        build_configs("huge")
    assert set(PROFILES) == {"desk", "paper"}


def test_text_round_trip():
    t = TrainConfig.paper(seed=4, match_assn=False)
    assert train_config_from_text(train_config_text(t)) == t
