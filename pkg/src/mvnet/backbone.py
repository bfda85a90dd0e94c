"""The full network: 3D-conv patch embedding, two conv stages with channel
attention, a decoupled spatial/spectral attention bridge, two mixer/attention
stages, and a pooled linear head.

Stage wiring: the patch embedding produces a block x block token grid at
embed_dim channels. Stages 1-2 are conv residual blocks at that width.
Stages 3-4 each start with a strided 2x2 downsample that halves the spatial
extents (ceil) and doubles the channels, so widths run E, E, 2E, 4E. A
stage of depth zero contributes nothing, including its entry downsample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, DimensionError, FormatError
from .rng import Rng
from .mixers import (
    HsiLayer,
    Linear,
    hsi_layer_forward,
    hsi_layer_param_tensors,
    init_hsi_layer,
    init_linear,
)
from .tensor import (
    Tensor,
    as_tensor,
    concat,
    conv2d,
    conv3d,
    matmul,
    mean,
    reshape,
    sigmoid,
    silu,
)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ModelConfig:
    stage_depths: tuple = (1, 3, 8, 16)
    windows: tuple = (4, 4, 7, 7)
    heads: tuple = (2, 4, 8, 16)
    mlp_ratio: int = 4
    drop_rate: float = 0.2
    embed_dim: int = 80
    block: int = 13
    bands: int = 200
    classes: int = 16
    channel_attention_reduction: int = 4

    def __post_init__(self):
        self.stage_depths = tuple(int(d) for d in self.stage_depths)
        self.windows = tuple(int(w) for w in self.windows)
        self.heads = tuple(int(h) for h in self.heads)
        for name, seq in (("stage_depths", self.stage_depths),
                          ("windows", self.windows), ("heads", self.heads)):
            if len(seq) != 4:
                raise ConfigError(f"{name} must have 4 entries, got {len(seq)}")
        if any(d < 0 for d in self.stage_depths):
            raise ConfigError(f"stage depths must be >= 0, got {self.stage_depths}")
        if any(w < 1 for w in self.windows) or any(h < 1 for h in self.heads):
            raise ConfigError("windows and heads must be positive")
        if self.block < 3 or self.block % 2 == 0:
            raise ConfigError(f"block must be odd and >= 3, got {self.block}")
        if self.classes < 2:
            raise ConfigError(f"need >= 2 classes, got {self.classes}")
        if self.bands < 3:
            raise ConfigError(f"need >= 3 bands (3x3x3 embed kernel), got {self.bands}")
        if self.embed_dim % 2 != 0 or self.embed_dim < 2:
            raise ConfigError(f"embed_dim must be even and >= 2, got {self.embed_dim}")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ConfigError(f"drop_rate must be in [0, 1), got {self.drop_rate}")
        if self.mlp_ratio < 1:
            raise ConfigError(f"mlp_ratio must be >= 1, got {self.mlp_ratio}")
        if self.channel_attention_reduction < 1:
            raise ConfigError("channel_attention_reduction must be >= 1")
        for stage in stage_plan(self):
            if stage.kind == "hsi" and stage.depth > 0:
                if stage.width % stage.heads != 0:
                    raise ConfigError(
                        f"heads {stage.heads} must divide width {stage.width} "
                        f"in stage {stage.index + 1}"
                    )
                if stage.width % 2 != 0:
                    raise ConfigError(
                        f"stage {stage.index + 1} width {stage.width} must be even"
                    )

    def to_json(self) -> str:
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        for key in ("stage_depths", "windows", "heads"):
            doc[key] = list(doc[key])
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise FormatError(f"model config is not valid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise FormatError("model config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise FormatError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class Stage:
    index: int  # 0-based
    kind: str  # "conv" | "hsi"
    depth: int
    width: int
    spatial: tuple
    downsample: bool
    window: int = 1
    heads: int = 1


def stage_plan(cfg: ModelConfig) -> list[Stage]:
    """Widths, extents and downsample flags for the four stages."""
    width = cfg.embed_dim
    h = w = cfg.block
    plan = []
    for i in range(4):
        kind = "conv" if i < 2 else "hsi"
        down = i >= 2 and cfg.stage_depths[i] > 0
        if down:
            width *= 2
            h = -(-h // 2)
            w = -(-w // 2)
        plan.append(Stage(index=i, kind=kind, depth=cfg.stage_depths[i],
                          width=width, spatial=(h, w), downsample=down,
                          window=cfg.windows[i], heads=cfg.heads[i]))
    return plan


# ---------------------------------------------------------------------------
# weight bundles
# ---------------------------------------------------------------------------

@dataclass
class ChannelAttentionW:
    """Squeeze-and-excitation gate: spatial mean -> C/r -> C -> sigmoid."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


def init_channel_attention(c: int, reduction: int, rng: Rng, dtype=None) -> ChannelAttentionW:
    if c < reduction:
        raise ConfigError(f"channel attention needs C >= reduction, got C={c}, r={reduction}")
    hidden = max(c // reduction, 1)
    return ChannelAttentionW(
        w1=Tensor(rng.normal((c, hidden)) / np.sqrt(c), requires_grad=True, dtype=dtype),
        b1=Tensor(np.zeros(hidden), requires_grad=True, dtype=dtype),
        w2=Tensor(rng.normal((hidden, c)) / np.sqrt(hidden), requires_grad=True, dtype=dtype),
        b2=Tensor(np.zeros(c), requires_grad=True, dtype=dtype),
    )


def channel_attention(ca: ChannelAttentionW, x, return_gate: bool = False):
    """x [..., H, W, C] scaled per channel by a gate in (0, 1)^C."""
    x = as_tensor(x)
    squeezed = mean(x, axis=(-3, -2))  # [..., C]
    gate = sigmoid(matmul(silu(matmul(squeezed, ca.w1) + ca.b1), ca.w2) + ca.b2)
    lead = gate.shape[:-1]
    gate_b = reshape(gate, lead + (1, 1, gate.shape[-1]))
    out = x * gate_b
    if return_gate:
        return out, gate
    return out


@dataclass
class ConvBlock:
    """Residual 3x3 conv + channel attention, with an optional sparse skip:
    samples whose mean gate falls below the threshold contribute nothing."""

    conv_w: Tensor
    conv_b: Tensor
    ca: ChannelAttentionW


def init_conv_block(c: int, reduction: int, rng: Rng, dtype=None) -> ConvBlock:
    return ConvBlock(
        conv_w=Tensor(rng.normal((3, 3, c, c)) / np.sqrt(9 * c), requires_grad=True, dtype=dtype),
        conv_b=Tensor(np.zeros(c), requires_grad=True, dtype=dtype),
        ca=init_channel_attention(c, reduction, rng.spawn("ca"), dtype),
    )


def conv_block_forward(block: ConvBlock, x, gate_threshold: float = 0.0) -> Tensor:
    x = as_tensor(x)
    branch = silu(conv2d(x, block.conv_w, stride=1, pad=1) + block.conv_b)
    branch, gate = channel_attention(block.ca, branch, return_gate=True)
    if gate_threshold > 0.0:
        keep = (gate.data.mean(axis=-1, keepdims=True) >= gate_threshold).astype(np.float64)
        lead = gate.shape[:-1]
        branch = branch * Tensor(keep.reshape(lead + (1, 1, 1)), dtype=branch.dtype)
    return x + branch


@dataclass
class DecoupledW:
    """Spatial gate from the channel-pooled map, spectral gate from SE;
    the two gated copies are concatenated and projected back to C."""

    spatial_w: Tensor
    spatial_b: Tensor
    se: ChannelAttentionW
    fuse: Linear


def init_decoupled(c: int, reduction: int, rng: Rng, dtype=None) -> DecoupledW:
    return DecoupledW(
        spatial_w=Tensor(rng.normal((3, 3, 1, 1)) / 3.0, requires_grad=True, dtype=dtype),
        spatial_b=Tensor(np.zeros(1), requires_grad=True, dtype=dtype),
        se=init_channel_attention(c, reduction, rng.spawn("se"), dtype),
        fuse=init_linear(2 * c, c, rng.spawn("fuse"), dtype),
    )


def decoupled_attention(dw: DecoupledW, x) -> Tensor:
    """x [..., H, W, C] -> [..., H, W, C]."""
    x = as_tensor(x)
    pooled = mean(x, axis=-1, keepdims=True)  # [..., H, W, 1]
    s = sigmoid(conv2d(pooled, dw.spatial_w, stride=1, pad=1) + dw.spatial_b)
    spatial_part = x * s
    spectral_part = channel_attention(dw.se, x)
    return dw.fuse(concat([spatial_part, spectral_part], axis=-1))


@dataclass
class Downsample:
    w: Tensor  # [2, 2, C, 2C]
    b: Tensor


def init_downsample(c: int, rng: Rng, dtype=None) -> Downsample:
    return Downsample(
        w=Tensor(rng.normal((2, 2, c, 2 * c)) / np.sqrt(4 * c), requires_grad=True, dtype=dtype),
        b=Tensor(np.zeros(2 * c), requires_grad=True, dtype=dtype),
    )


def downsample_forward(d: Downsample, x) -> Tensor:
    h, w = x.shape[-3], x.shape[-2]
    return conv2d(x, d.w, stride=2, pad=((0, h % 2), (0, w % 2))) + d.b


# ---------------------------------------------------------------------------
# the assembled model
# ---------------------------------------------------------------------------

@dataclass
class MvnetModel:
    cfg: ModelConfig
    patch_w: Tensor
    patch_b: Tensor
    stage1: list
    stage2: list
    bridge: DecoupledW | None
    down3: Downsample | None
    stage3: list
    down4: Downsample | None
    stage4: list
    head: Linear
    gate_threshold: float = 0.0
    state_size: int = 8

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {
            "patch_embed.w": self.patch_w,
            "patch_embed.b": self.patch_b,
        }
        for si, blocks in (("stage1", self.stage1), ("stage2", self.stage2)):
            for i, blk in enumerate(blocks):
                p = f"{si}.block{i}"
                out[f"{p}.conv.w"] = blk.conv_w
                out[f"{p}.conv.b"] = blk.conv_b
                out[f"{p}.ca.w1"] = blk.ca.w1
                out[f"{p}.ca.b1"] = blk.ca.b1
                out[f"{p}.ca.w2"] = blk.ca.w2
                out[f"{p}.ca.b2"] = blk.ca.b2
        if self.bridge is not None:
            out["bridge.spatial.w"] = self.bridge.spatial_w
            out["bridge.spatial.b"] = self.bridge.spatial_b
            out["bridge.se.w1"] = self.bridge.se.w1
            out["bridge.se.b1"] = self.bridge.se.b1
            out["bridge.se.w2"] = self.bridge.se.w2
            out["bridge.se.b2"] = self.bridge.se.b2
            out["bridge.fuse.w"] = self.bridge.fuse.w
            out["bridge.fuse.b"] = self.bridge.fuse.b
        for si, down, layers in (("stage3", self.down3, self.stage3),
                                 ("stage4", self.down4, self.stage4)):
            if down is not None:
                out[f"{si}.down.w"] = down.w
                out[f"{si}.down.b"] = down.b
            for i, layer in enumerate(layers):
                out.update(hsi_layer_param_tensors(layer, f"{si}.layer{i}"))
        out["head.w"] = self.head.w
        out["head.b"] = self.head.b
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(arrays)
        extra = set(arrays) - set(params)
        if missing or extra:
            raise FormatError(
                f"checkpoint/model mismatch: missing {sorted(missing)[:4]}, "
                f"unexpected {sorted(extra)[:4]}"
            )
        for name, t in params.items():
            arr = np.asarray(arrays[name])
            if arr.shape != t.shape:
                raise DimensionError(
                    f"parameter {name}: checkpoint shape {arr.shape} vs model {t.shape}"
                )
            t.data = arr.astype(t.data.dtype)


def init_model(cfg: ModelConfig, rng: Rng, dtype=None, gate_threshold: float = 0.0,
               state_size: int = 8) -> MvnetModel:
    plan = stage_plan(cfg)
    e = cfg.embed_dim
    r = cfg.channel_attention_reduction
    patch_rng = rng.spawn("patch_embed")

    def conv_stage(idx):
        return [
            init_conv_block(plan[idx].width, r, rng.spawn(f"stage{idx + 1}.block{i}"), dtype)
            for i in range(cfg.stage_depths[idx])
        ]

    def hsi_stage(idx):
        stage = plan[idx]
        n_mix = stage.depth // 2
        layers = []
        for i in range(stage.depth):
            kind = "mixer" if i < n_mix else "attention"
            layers.append(
                init_hsi_layer(
                    stage.width, kind, rng.spawn(f"stage{idx + 1}.layer{i}"),
                    heads=stage.heads, window=stage.window,
                    mlp_ratio=cfg.mlp_ratio, drop_rate=cfg.drop_rate,
                    state_size=state_size, dtype=dtype,
                )
            )
        return layers

    needs_bridge = cfg.stage_depths[2] + cfg.stage_depths[3] > 0
    return MvnetModel(
        cfg=cfg,
        patch_w=Tensor(patch_rng.normal((3, 3, 3, 1, e)) / np.sqrt(27),
                       requires_grad=True, dtype=dtype),
        patch_b=Tensor(np.zeros(e), requires_grad=True, dtype=dtype),
        stage1=conv_stage(0),
        stage2=conv_stage(1),
        bridge=init_decoupled(e, r, rng.spawn("bridge"), dtype) if needs_bridge else None,
        down3=init_downsample(e, rng.spawn("down3"), dtype)
        if plan[2].downsample else None,
        stage3=hsi_stage(2),
        down4=init_downsample(plan[2].width, rng.spawn("down4"), dtype)
        if plan[3].downsample else None,
        stage4=hsi_stage(3),
        head=init_linear(plan[3].width, cfg.classes, rng.spawn("head"), dtype),
        gate_threshold=gate_threshold,
        state_size=state_size,
    )


def patch_embed(model: MvnetModel, batch) -> Tensor:
    """[B, M, N, L] cube patches -> [B, M, N, embed_dim] token grids.

    One 3x3x3 conv, stride 1 spatially and 4 along the band axis, then the
    remaining band axis is folded by a mean."""
    x = as_tensor(batch)
    if x.ndim != 4:
        raise DimensionError(f"patch batch must be [B, M, N, L], got {x.shape}")
    m = model.cfg.block
    l_bands = model.cfg.bands
    if x.shape[1] != m or x.shape[2] != m or x.shape[3] != l_bands:
        raise DimensionError(
            f"input stage: expected [B, {m}, {m}, {l_bands}], got {x.shape}"
        )
    if l_bands < 3:
        raise ConfigError(f"bands ({l_bands}) smaller than embed kernel 3")
    x = reshape(x, x.shape + (1,))
    x = conv3d(x, model.patch_w, stride=(1, 1, 4), pad=((1, 1), (1, 1), (1, 1)))
    x = x + model.patch_b
    return mean(x, axis=3)


def model_forward(model: MvnetModel, batch, training: bool = False,
                  rng: Rng | None = None) -> Tensor:
    """Cube patches [B, M, N, L] -> logits [B, classes]."""
    x = patch_embed(model, batch)
    for blk in model.stage1:
        x = conv_block_forward(blk, x, model.gate_threshold)
    for blk in model.stage2:
        x = conv_block_forward(blk, x, model.gate_threshold)
    if model.bridge is not None:
        x = decoupled_attention(model.bridge, x)
    for down, layers in ((model.down3, model.stage3), (model.down4, model.stage4)):
        if down is not None:
            x = downsample_forward(down, x)
        for layer in layers:
            x = hsi_layer_forward(layer, x, training=training, rng=rng)
    pooled = mean(x, axis=(1, 2))  # [B, C]
    return model.head(pooled)


def param_count(cfg: ModelConfig, state_size: int = 8) -> dict[str, int]:
    """Exhaustive per-module parameter counts plus the total."""
    model = init_model(cfg, Rng(0), state_size=state_size)
    groups: dict[str, int] = {}
    for name, t in model.named_parameters().items():
        top = name.split(".")[0]
        groups[top] = groups.get(top, 0) + t.size
    groups["total"] = sum(v for k, v in groups.items() if k != "total")
    return groups
