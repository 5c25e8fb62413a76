"""Training configuration and the flat ``key = value`` config file format.

One file holds both model and training knobs; keys are the field names of
:class:`~partgroup.network.ModelConfig` and :class:`TrainConfig`.  Lines
starting with ``#`` are comments.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .losses import LossWeights
from .network import ModelConfig, _parse_like


@dataclass
class TrainConfig:
    epochs: int = 250
    batch_size: int = 8
    max_steps: int = 2000
    lr: float = 5e-4
    backbone_lr: float = 5e-4
    lr_drop_epoch: int = 200
    lr_after_drop: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    grad_clip: float = 0.1
    seed: int = 0
    # loss coefficients
    lambda_ind: float = 1.0
    lambda_cls: float = 2.0
    lambda_loc: float = 1.0
    lambda_l1: float = 2.5
    lambda_giou: float = 1.0
    lambda_part: float = 10.0
    lambda_assn: float = 5.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    asl_gamma_pos: float = 0.0
    asl_gamma_neg: float = 4.0
    asl_margin: float = 0.05
    match_assn: bool = True
    # part supervision
    window_alpha: float = 0.2
    pose_noise: float = 0.0
    # inference
    nms_threshold: float = 0.5
    score_floor: float = 0.0
    # bookkeeping
    log_every: int = 1
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        for name in ("lr", "backbone_lr", "lr_after_drop"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.lr_drop_epoch < self.epochs:
            raise ValueError(f"lr_drop_epoch ({self.lr_drop_epoch}) must be < epochs ({self.epochs})")
        if not 0 < self.nms_threshold <= 1:
            raise ValueError("nms_threshold must be in (0, 1]")
        if self.window_alpha < 0 or self.pose_noise < 0:
            raise ValueError("window_alpha and pose_noise must be >= 0")
        self.loss_weights()

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_ind, self.lambda_cls, self.lambda_loc, self.lambda_l1,
                           self.lambda_giou, self.lambda_part, self.lambda_assn)

    @classmethod
    def paper(cls, **overrides):
        """Full-size schedule: 90 epochs, 1e-4 -> 1e-5 after epoch 60, batch 16."""
        base = dict(epochs=90, batch_size=16, max_steps=0, lr=1e-4, backbone_lr=1e-5,
                    lr_drop_epoch=60, lr_after_drop=1e-5)
        base.update(overrides)
        return cls(**base)


PROFILES = {
    "desk": (ModelConfig, TrainConfig),
    "paper": (ModelConfig.paper, TrainConfig.paper),
}


def _field_defaults(klass):
    return {f.name: f.default for f in fields(klass)}


def parse_overrides(pairs: dict):
    """Split ``{key: str}`` into typed model and train keyword dicts."""
    mdef, tdef = _field_defaults(ModelConfig), _field_defaults(TrainConfig)
    model_kw, train_kw = {}, {}
    for key, val in pairs.items():
        key = key.replace("-", "_")
        if key in mdef:
            model_kw[key] = _parse_like(mdef[key], str(val))
        elif key in tdef:
            train_kw[key] = _parse_like(tdef[key], str(val))
        else:
            raise ValueError(f"unknown config key {key!r}")
    return model_kw, train_kw


def read_kv(path) -> dict:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected 'key = value'")
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def build_configs(profile: str = "desk", file_values: dict | None = None,
                  cli_values: dict | None = None):
    """Profile defaults, then config-file values, then CLI values."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    make_model, make_train = PROFILES[profile]
    merged = dict(file_values or {})
    merged.update(cli_values or {})
    model_kw, train_kw = parse_overrides(merged)
    return make_model(**model_kw), make_train(**train_kw)


def train_config_text(cfg: TrainConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in asdict(cfg).items())


def train_config_from_text(text: str) -> TrainConfig:
    values = {}
    for line in text.splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            values[k.strip()] = v.strip()
    _, train_kw = parse_overrides(values)
    return TrainConfig(**train_kw)


def with_overrides(cfg, **kw):
    return replace(cfg, **kw)
