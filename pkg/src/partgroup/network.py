"""Part-aware bottom-up group reasoning network.

Pipeline: conv stem + transformer encoder -> individual decoder -> part
queries -> embedding enhancer -> fusion -> group decoder -> similarity head.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import torch
from torch import nn
import torch.nn.functional as F


@dataclass
class ModelConfig:
    dim: int = 64
    num_individual_queries: int = 12
    num_group_queries: int = 16
    num_parts: int = 13
    num_classes: int = 8
    enc_layers: int = 2
    ind_dec_layers: int = 2
    enh_layers: int = 2
    grp_dec_layers: int = 2
    heads: int = 4
    ffn_dim: int = 128
    stride: int = 8
    stem_channels: tuple = (32, 64, 64)
    sim_dim: int = 64
    dropout: float = 0.0

    def __post_init__(self):
        self.stem_channels = tuple(int(c) for c in self.stem_channels)
        if self.dim % self.heads:
            raise ValueError(f"dim={self.dim} not divisible by heads={self.heads}")
        if self.num_parts < 1:
            raise ValueError("num_parts must be >= 1")
        if self.stride != 2 ** len(self.stem_channels):
            raise ValueError(
                f"stride {self.stride} must equal 2**len(stem_channels)={2 ** len(self.stem_channels)}"
            )
        for name in ("num_individual_queries", "num_group_queries", "num_classes",
                     "enc_layers", "ind_dec_layers", "enh_layers", "grp_dec_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @classmethod
    def paper(cls, **overrides):
        """Full-size profile (ResNet stem replaced by the conv stem)."""
        base = dict(dim=256, num_individual_queries=24, num_group_queries=32, num_parts=13,
                    enc_layers=6, ind_dec_layers=3, enh_layers=3, grp_dec_layers=3,
                    heads=8, ffn_dim=2048, sim_dim=256)
        base.update(overrides)
        return cls(**base)

    def check_input(self, height: int, width: int):
        if height % self.stride or width % self.stride:
            raise ValueError(f"input {height}x{width} not divisible by stride {self.stride}")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        kinds = {f.name: f.default for f in fields(cls)}
        kw = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in kinds:
                raise ValueError(f"unknown model config key {key!r}")
            kw[key] = _parse_like(kinds[key], val)
        return cls(**kw)


def _parse_like(default, val: str):
    if isinstance(default, tuple):
        return tuple(int(x) for x in val.split(",") if x)
    if isinstance(default, bool):
        return val.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(val)
    if isinstance(default, float):
        return float(val)
    return val


def sine_position_encoding(h: int, w: int, dim: int, temperature: float = 10000.0) -> torch.Tensor:
    """Fixed 2-D sinusoidal encoding, (h*w, dim), normalized coordinates."""
    npf = dim // 2
    y = torch.arange(1, h + 1, dtype=torch.float32)[:, None].expand(h, w) / h * 2 * math.pi
    x = torch.arange(1, w + 1, dtype=torch.float32)[None, :].expand(h, w) / w * 2 * math.pi
    dim_t = torch.arange(npf, dtype=torch.float32)
    dim_t = temperature ** (2 * (dim_t // 2) / npf)
    px = x[..., None] / dim_t
    py = y[..., None] / dim_t
    px = torch.stack((px[..., 0::2].sin(), px[..., 1::2].cos()), dim=-1).flatten(2)
    py = torch.stack((py[..., 0::2].sin(), py[..., 1::2].cos()), dim=-1).flatten(2)
    return torch.cat((py, px), dim=-1).reshape(h * w, dim)


class MLP(nn.Module):
    def __init__(self, in_dim, hidden, out_dim, num_layers):
        super().__init__()
        dims = [in_dim] + [hidden] * (num_layers - 1)
        self.layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(dims, dims[1:] + [out_dim]))

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.relu(x)
        return x


def _with_pos(x, pos):
    return x if pos is None else x + pos


class Attention(nn.Module):
    """Multi-head attention returning head-averaged weights alongside outputs."""

    def __init__(self, dim, heads, dropout=0.0):
        super().__init__()
        self.attn = nn.MultiheadAttention(dim, heads, dropout=dropout, batch_first=True)

    def forward(self, q, k, v, key_padding_mask=None, need_weights=False):
        out, weights = self.attn(q, k, v, key_padding_mask=key_padding_mask,
                                 need_weights=need_weights, average_attn_weights=True)
        return out, weights


class FFN(nn.Module):
    def __init__(self, dim, hidden, dropout):
        super().__init__()
        self.lin1 = nn.Linear(dim, hidden)
        self.lin2 = nn.Linear(hidden, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        return self.lin2(self.drop(F.relu(self.lin1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, dim, heads, ffn_dim, dropout):
        super().__init__()
        self.self_attn = Attention(dim, heads, dropout)
        self.ffn = FFN(dim, ffn_dim, dropout)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, pos):
        qk = _with_pos(x, pos)
        x = self.norm1(x + self.drop(self.self_attn(qk, qk, x)[0]))
        return self.norm2(x + self.drop(self.ffn(x)))


class DecoderLayer(nn.Module):
    """Self-attention over queries, then one cross-attention per memory source."""

    def __init__(self, dim, heads, ffn_dim, dropout, num_memories=1):
        super().__init__()
        self.self_attn = Attention(dim, heads, dropout)
        self.cross = nn.ModuleList(Attention(dim, heads, dropout) for _ in range(num_memories))
        self.norms = nn.ModuleList(nn.LayerNorm(dim) for _ in range(num_memories + 2))
        self.ffn = FFN(dim, ffn_dim, dropout)
        self.drop = nn.Dropout(dropout)

    def forward(self, tgt, query_pos, memories, need_weights=False):
        """``memories`` is a list of ``(memory, memory_pos, key_padding_mask)``."""
        qk = _with_pos(tgt, query_pos)
        tgt = self.norms[0](tgt + self.drop(self.self_attn(qk, qk, tgt)[0]))
        weights = []
        for i, (mem, mem_pos, kpm) in enumerate(memories):
            out, w = self.cross[i](_with_pos(tgt, query_pos), _with_pos(mem, mem_pos), mem,
                                   key_padding_mask=kpm, need_weights=need_weights)
            tgt = self.norms[i + 1](tgt + self.drop(out))
            weights.append(w)
        tgt = self.norms[-1](tgt + self.drop(self.ffn(tgt)))
        return tgt, weights


class ConvStem(nn.Module):
    """Strided conv stack standing in for a pretrained backbone."""

    def __init__(self, channels, dim):
        super().__init__()
        layers = []
        c_in = 3
        for c in channels:
            layers += [nn.Conv2d(c_in, c, 3, stride=2, padding=1), nn.GroupNorm(8 if c % 8 == 0 else 1, c),
                       nn.ReLU(inplace=True)]
            c_in = c
        self.body = nn.Sequential(*layers)
        self.proj = nn.Conv2d(c_in, dim, 1)

    def forward(self, x):
        return self.proj(self.body(x))


@dataclass
class EmbeddingSet:
    feature: torch.Tensor         # (B, H*W, D)
    feature_hw: tuple
    individual: torch.Tensor      # (B, N_I, D)
    part: torch.Tensor            # (B, N_I, P, D)
    part_aware: torch.Tensor      # (B, N_I, D)
    group: torch.Tensor           # (B, N_G, D)
    part_attn: torch.Tensor       # (B, N_I, P, H, W)


@dataclass
class PredictionSet:
    boxes: torch.Tensor           # (B, N_I, 4) cxcywh in [0, 1]
    objectness: torch.Tensor      # (B, N_I) logits
    group_boxes: torch.Tensor     # (B, N_G, 4)
    class_logits: torch.Tensor    # (B, N_G, N_C)
    similarity: torch.Tensor      # (B, N_G, N_I) logits

    def detach(self) -> "PredictionSet":
        return PredictionSet(*(t.detach() for t in (self.boxes, self.objectness, self.group_boxes,
                                                    self.class_logits, self.similarity)))


class PartGroupNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d, h, f, p = cfg.dim, cfg.heads, cfg.ffn_dim, cfg.dropout
        self.backbone = ConvStem(cfg.stem_channels, d)
        self.encoder = nn.ModuleList(EncoderLayer(d, h, f, p) for _ in range(cfg.enc_layers))

        self.individual_queries = nn.Embedding(cfg.num_individual_queries, d)
        self.ind_decoder = nn.ModuleList(DecoderLayer(d, h, f, p) for _ in range(cfg.ind_dec_layers))
        self.box_head = MLP(d, d, 4, 3)
        self.objectness_head = nn.Linear(d, 1)

        # one D x D projection per body part
        # near-identity init: every part query starts close to its individual
        self.part_proj = nn.Parameter(torch.eye(d) + 0.02 * torch.randn(cfg.num_parts, d, d))
        self.part_pos = nn.Embedding(cfg.num_parts, d)
        self.enh_self = nn.ModuleList(Attention(d, h, p) for _ in range(cfg.enh_layers))
        self.enh_cross = nn.ModuleList(Attention(d, h, p) for _ in range(cfg.enh_layers))
        self.enh_ffn = nn.ModuleList(FFN(d, f, p) for _ in range(cfg.enh_layers))
        self.enh_norms = nn.ModuleList(
            nn.ModuleList(nn.LayerNorm(d) for _ in range(3)) for _ in range(cfg.enh_layers))
        self.fuse_proj = nn.Linear((cfg.num_parts + 1) * d, d, bias=False)

        self.group_queries = nn.Embedding(cfg.num_group_queries, d)
        self.grp_decoder = nn.ModuleList(
            DecoderLayer(d, h, f, p, num_memories=2) for _ in range(cfg.grp_dec_layers))
        self.group_box_head = MLP(d, d, 4, 3)
        self.class_head = nn.Linear(d, cfg.num_classes)

        self.sim_group = MLP(d, d, cfg.sim_dim, 2)
        self.sim_individual = MLP(d, d, cfg.sim_dim, 2)

    # -- stages ---------------------------------------------------------------

    def encode(self, images):
        """Images (B, 3, H0, W0) in [0, 1] -> features (B, H*W, D), pos, (H, W)."""
        self.cfg.check_input(images.shape[-2], images.shape[-1])
        x = self.backbone(images - 0.5)
        b, d, hh, ww = x.shape
        x = x.flatten(2).transpose(1, 2)
        pos = sine_position_encoding(hh, ww, d).to(x)[None]
        for layer in self.encoder:
            x = layer(x, pos)
        return x, pos, (hh, ww)

    def decode_individuals(self, feature, pos, query_embed=None):
        qe = self.individual_queries.weight if query_embed is None else query_embed
        qpos = qe[None].expand(feature.shape[0], -1, -1)
        # queries seed the content stream too; a zero start leaves the first
        # self-attention without gradient
        tgt = qpos
        for layer in self.ind_decoder:
            tgt, _ = layer(tgt, qpos, [(feature, pos, None)])
        boxes = self.box_head(tgt).sigmoid()
        objectness = self.objectness_head(tgt).squeeze(-1)
        return tgt, boxes, objectness

    def make_part_queries(self, e_i):
        """(..., N_I, D) -> (..., N_I, P, D); slice p is ``e_i @ W_p``."""
        return torch.einsum("...nd,pde->...npe", e_i, self.part_proj)

    def enhance(self, q_p, feature, pos):
        """Refine part queries; returns part embeddings and final-layer attention maps.

        Self-attention mixes the P queries of one individual only.
        """
        b, n, p, d = q_p.shape
        part_pos = self.part_pos.weight[None, None].expand(b, n, p, d)
        tgt = q_p
        attn = None
        for i in range(len(self.enh_self)):
            norms = self.enh_norms[i]
            x = tgt.reshape(b * n, p, d)
            qk = x + part_pos.reshape(b * n, p, d)
            x = norms[0](x + self.enh_self[i](qk, qk, x)[0])
            x = x.reshape(b, n * p, d)
            last = i == len(self.enh_self) - 1
            out, w = self.enh_cross[i](x + part_pos.reshape(b, n * p, d), feature + pos, feature,
                                       need_weights=last)
            x = norms[1](x + out)
            x = norms[2](x + self.enh_ffn[i](x))
            tgt = x.reshape(b, n, p, d)
            if last:
                attn = w.reshape(b, n, p, -1)
        return tgt, attn

    def fuse(self, e_i, e_p):
        """Concatenate ``[E_I, E_P^1..E_P^P]`` and project back to D."""
        cat = torch.cat([e_i.unsqueeze(-2), e_p], dim=-2).flatten(-2)
        return self.fuse_proj(cat)

    def decode_groups(self, e_a, feature, pos, individual_mask=None):
        """Group queries: self-attn -> cross-attn to E_A -> cross-attn to F.

        ``individual_mask`` (B, N_I) bool marks individuals to hide from the
        cross-attention.
        """
        qpos = self.group_queries.weight[None].expand(feature.shape[0], -1, -1)
        tgt = qpos
        for layer in self.grp_decoder:
            tgt, _ = layer(tgt, qpos, [(e_a, None, individual_mask), (feature, pos, None)])
        return tgt, self.group_box_head(tgt).sigmoid(), self.class_head(tgt)

    def similarity(self, e_g, e_i):
        return self.sim_group(e_g) @ self.sim_individual(e_i).transpose(-1, -2)

    def forward(self, images):
        feature, pos, (hh, ww) = self.encode(images)
        e_i, boxes, objectness = self.decode_individuals(feature, pos)
        q_p = self.make_part_queries(e_i)
        e_p, attn = self.enhance(q_p, feature, pos)
        e_a = self.fuse(e_i, e_p)
        e_g, gboxes, logits = self.decode_groups(e_a, feature, pos)
        sim = self.similarity(e_g, e_i)
        b, n, p, _ = e_p.shape
        emb = EmbeddingSet(feature, (hh, ww), e_i, e_p, e_a, e_g, attn.reshape(b, n, p, hh, ww))
        return emb, PredictionSet(boxes, objectness, gboxes, logits, sim)


def parameter_groups(model: PartGroupNet):
    """Split parameters into backbone and the rest (separate learning rates)."""
    backbone = [p for n, p in model.named_parameters() if n.startswith("backbone.")]
    rest = [p for n, p in model.named_parameters() if not n.startswith("backbone.")]
    return backbone, rest
