"""Token mixers: the dual-branch SSM/conv mixer, multi-head and windowed
self-attention, and the residual layer that wraps either with an MLP.

The mixer splits the embedding into two half-width branches:

    x1 = Scan(SiLU(Conv(Linear_{C->C/2}(x))))      # state-space branch
    x2 = SiLU(Conv(Linear_{C->C/2}(x)))            # symmetric branch
    out = Linear_{C->C}(Concat(x1, x2))

Both branch convolutions default to 'same' (non-causal) mode so position t
can respond to later tokens; forcing 'causal' restores one-sided behaviour
and is kept around as an ablation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .rng import Rng
from .ssm import SelectiveParams, init_selective, selective_scan, selective_param_tensors
from .tensor import (
    Tensor,
    as_tensor,
    concat,
    conv1d,
    dropout,
    layer_norm,
    matmul,
    pad,
    reshape,
    silu,
    slice_,
    softmax,
    transpose,
)

DEFAULT_STATE_SIZE = 8
DEFAULT_CONV_KERNEL = 3


# ---------------------------------------------------------------------------
# small weight bundles
# ---------------------------------------------------------------------------

@dataclass
class Linear:
    w: Tensor
    b: Tensor

    def __call__(self, x) -> Tensor:
        return matmul(as_tensor(x), self.w) + self.b


def init_linear(cin: int, cout: int, rng: Rng, dtype=None) -> Linear:
    w = rng.normal((cin, cout)) / np.sqrt(cin)
    return Linear(
        w=Tensor(w, requires_grad=True, dtype=dtype),
        b=Tensor(np.zeros(cout), requires_grad=True, dtype=dtype),
    )


@dataclass
class ConvBranch:
    w: Tensor  # [K, C, C]
    b: Tensor  # [C]


def init_conv_branch(c: int, k: int, rng: Rng, dtype=None) -> ConvBranch:
    w = rng.normal((k, c, c)) / np.sqrt(k * c)
    return ConvBranch(
        w=Tensor(w, requires_grad=True, dtype=dtype),
        b=Tensor(np.zeros(c), requires_grad=True, dtype=dtype),
    )


# ---------------------------------------------------------------------------
# dual-branch mixer
# ---------------------------------------------------------------------------

@dataclass
class MixerWeights:
    in_proj_ssm: Linear
    in_proj_sym: Linear
    conv_ssm: ConvBranch
    conv_sym: ConvBranch
    selective: SelectiveParams
    out_proj: Linear

    @property
    def width(self) -> int:
        return self.out_proj.w.shape[1]


def init_mixer(c: int, rng: Rng, state_size: int = DEFAULT_STATE_SIZE,
               kernel: int = DEFAULT_CONV_KERNEL, dtype=None) -> MixerWeights:
    if c % 2 != 0:
        raise ConfigError(f"mixer width must be even, got {c}")
    half = c // 2
    return MixerWeights(
        in_proj_ssm=init_linear(c, half, rng.spawn("in_ssm"), dtype),
        in_proj_sym=init_linear(c, half, rng.spawn("in_sym"), dtype),
        conv_ssm=init_conv_branch(half, kernel, rng.spawn("conv_ssm"), dtype),
        conv_sym=init_conv_branch(half, kernel, rng.spawn("conv_sym"), dtype),
        selective=init_selective(half, state_size, rng.spawn("selective"), dtype),
        out_proj=init_linear(c, c, rng.spawn("out"), dtype),
    )


def mixer_forward(mw: MixerWeights, x, conv_mode: str = "same") -> Tensor:
    """x [..., T, C] -> [..., T, C]; C must be even (two C/2 branches)."""
    x = as_tensor(x)
    c = x.shape[-1]
    if c % 2 != 0:
        raise ConfigError(f"mixer input width must be even, got {c}")
    a = mw.in_proj_ssm(x)
    a = silu(conv1d(a, mw.conv_ssm.w, mode=conv_mode) + mw.conv_ssm.b)
    x1 = selective_scan(mw.selective, a)
    b = mw.in_proj_sym(x)
    x2 = silu(conv1d(b, mw.conv_sym.w, mode=conv_mode) + mw.conv_sym.b)
    return mw.out_proj(concat([x1, x2], axis=-1))


def mixer_param_count(mw_or_c, state_size: int = DEFAULT_STATE_SIZE,
                      kernel: int = DEFAULT_CONV_KERNEL) -> int:
    """Parameters in the dual-branch mixer (enumerated from real tensors)."""
    if isinstance(mw_or_c, MixerWeights):
        mw = mw_or_c
    else:
        mw = init_mixer(int(mw_or_c), Rng(0), state_size=state_size, kernel=kernel)
    return sum(t.size for t in mixer_param_tensors(mw, "m").values())


def reference_param_count(c: int, state_size: int = DEFAULT_STATE_SIZE,
                          kernel: int = DEFAULT_CONV_KERNEL) -> int:
    """Single-branch block at full width C, as in the original design:
    in-projection C->C, depthwise conv of width K, selective scan over C
    channels, out-projection C->C."""
    in_proj = c * c + c
    conv_depthwise = kernel * c + c
    selective = 3 * c * state_size + c * c + c
    out_proj = c * c + c
    return in_proj + conv_depthwise + selective + out_proj


def parity_report(c: int, state_size: int = DEFAULT_STATE_SIZE,
                  kernel: int = DEFAULT_CONV_KERNEL) -> dict:
    dual = mixer_param_count(c, state_size, kernel)
    ref = reference_param_count(c, state_size, kernel)
    return {"width": c, "dual_branch": dual, "single_branch_full_width": ref,
            "ratio": dual / ref}


def mixer_param_tensors(mw: MixerWeights, prefix: str) -> dict[str, Tensor]:
    out = {
        f"{prefix}.in_proj_ssm.w": mw.in_proj_ssm.w,
        f"{prefix}.in_proj_ssm.b": mw.in_proj_ssm.b,
        f"{prefix}.in_proj_sym.w": mw.in_proj_sym.w,
        f"{prefix}.in_proj_sym.b": mw.in_proj_sym.b,
        f"{prefix}.conv_ssm.w": mw.conv_ssm.w,
        f"{prefix}.conv_ssm.b": mw.conv_ssm.b,
        f"{prefix}.conv_sym.w": mw.conv_sym.w,
        f"{prefix}.conv_sym.b": mw.conv_sym.b,
        f"{prefix}.out_proj.w": mw.out_proj.w,
        f"{prefix}.out_proj.b": mw.out_proj.b,
    }
    out.update(selective_param_tensors(mw.selective, f"{prefix}.selective"))
    return out


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------

@dataclass
class AttentionWeights:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    heads: int
    window: int

    def __post_init__(self):
        c = self.w_q.shape[0]
        if self.heads < 1 or c % self.heads != 0:
            raise ConfigError(f"heads ({self.heads}) must divide width ({c})")
        if self.window < 1:
            raise ConfigError(f"window must be positive, got {self.window}")

    @property
    def width(self) -> int:
        return self.w_q.shape[0]

    @property
    def head_dim(self) -> int:
        return self.width // self.heads


def init_attention(c: int, heads: int, window: int, rng: Rng, dtype=None) -> AttentionWeights:
    def mat(name):
        return Tensor(rng.spawn(name).normal((c, c)) / np.sqrt(c),
                      requires_grad=True, dtype=dtype)

    return AttentionWeights(
        w_q=mat("q"), w_k=mat("k"), w_v=mat("v"), w_o=mat("o"),
        heads=heads, window=window,
    )


def mhsa_forward(w: AttentionWeights, x, key_mask: np.ndarray | None = None,
                 return_weights: bool = False):
    """Scaled dot-product attention over tokens, per head; no positions.

    x [..., T, C]. key_mask, when given, is a boolean [..., T] marking valid
    keys; invalid keys are excluded from every softmax row (used internally
    by windowed attention to ignore padding). With return_weights the
    row-stochastic attention matrix is returned alongside the output.
    """
    x = as_tensor(x)
    c = x.shape[-1]
    if c != w.width:
        raise DimensionError(f"attention width {w.width} vs input {x.shape}")
    t_len = x.shape[-2]
    lead = x.shape[:-2]
    dh = w.head_dim

    def split_heads(m):
        m = reshape(m, lead + (t_len, w.heads, dh))
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return transpose(m, axes)  # [..., heads, T, dh]

    q = split_heads(matmul(x, w.w_q))
    k = split_heads(matmul(x, w.w_k))
    v = split_heads(matmul(x, w.w_v))
    scores = matmul(q, transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)))
    scores = scores * Tensor(np.asarray(1.0 / np.sqrt(dh)), dtype=scores.dtype)
    if key_mask is not None:
        bias = np.where(np.asarray(key_mask, dtype=bool), 0.0, -1e30)
        bias = bias[..., None, None, :]  # broadcast over heads and queries
        scores = scores + Tensor(bias, dtype=scores.dtype)
    attn = softmax(scores, axis=-1)
    ctx = matmul(attn, v)  # [..., heads, T, dh]
    axes = tuple(range(ctx.ndim - 3)) + (ctx.ndim - 2, ctx.ndim - 3, ctx.ndim - 1)
    merged = reshape(transpose(ctx, axes), lead + (t_len, c))
    out = matmul(merged, w.w_o)
    if return_weights:
        return out, attn.data
    return out


def windowed_attention(w: AttentionWeights, x) -> Tensor:
    """Partition the grid into window x window tiles and attend per tile.

    x [..., H, W, C]. The grid is zero-padded bottom/right to a multiple of
    the window; padded tokens are masked out of the attention and removed
    again, so results match global attention whenever one window covers the
    whole grid.
    """
    x = as_tensor(x)
    if x.ndim < 3:
        raise DimensionError(f"windowed attention expects [..., H, W, C], got {x.shape}")
    lead = x.shape[:-3]
    h, wd, c = x.shape[-3:]
    win = w.window
    hp = -(-h // win) * win
    wp = -(-wd // win) * win
    nh, nw = hp // win, wp // win

    padded = pad(x, ((0, 0),) * len(lead) + ((0, hp - h), (0, wp - wd), (0, 0)))
    valid = np.zeros((hp, wp), dtype=bool)
    valid[:h, :wd] = True

    nlead = len(lead)
    tiles = reshape(padded, lead + (nh, win, nw, win, c))
    axes = tuple(range(nlead)) + (nlead, nlead + 2, nlead + 1, nlead + 3, nlead + 4)
    tiles = transpose(tiles, axes)  # [..., nh, nw, win, win, C]
    tiles = reshape(tiles, lead + (nh * nw, win * win, c))
    mask = (
        valid.reshape(nh, win, nw, win)
        .transpose(0, 2, 1, 3)
        .reshape(nh * nw, win * win)
    )
    out = mhsa_forward(w, tiles, key_mask=mask)
    out = reshape(out, lead + (nh, nw, win, win, c))
    inv = tuple(range(nlead)) + (nlead, nlead + 2, nlead + 1, nlead + 3, nlead + 4)
    out = transpose(out, inv)
    out = reshape(out, lead + (hp, wp, c))
    if hp != h or wp != wd:
        idx = (slice(None),) * nlead + (slice(0, h), slice(0, wd), slice(None))
        out = slice_(out, idx)
    return out


def attention_param_tensors(aw: AttentionWeights, prefix: str) -> dict[str, Tensor]:
    return {
        f"{prefix}.w_q": aw.w_q,
        f"{prefix}.w_k": aw.w_k,
        f"{prefix}.w_v": aw.w_v,
        f"{prefix}.w_o": aw.w_o,
    }


# ---------------------------------------------------------------------------
# residual layer: pre-norm mix + pre-norm MLP
# ---------------------------------------------------------------------------

@dataclass
class LayerNormW:
    gain: Tensor
    bias: Tensor

    def __call__(self, x) -> Tensor:
        return layer_norm(x, self.gain, self.bias)


def init_norm(c: int, rng: Rng, dtype=None) -> LayerNormW:
    del rng  # identity init; kept for signature symmetry
    return LayerNormW(
        gain=Tensor(np.ones(c), requires_grad=True, dtype=dtype),
        bias=Tensor(np.zeros(c), requires_grad=True, dtype=dtype),
    )


@dataclass
class HsiLayer:
    """One mixing layer: pre-norm residual mixer/attention, pre-norm residual MLP."""

    kind: str  # "mixer" | "attention"
    norm1: LayerNormW
    norm2: LayerNormW
    mlp_in: Linear
    mlp_out: Linear
    drop_rate: float
    mixer: MixerWeights | None = None
    attention: AttentionWeights | None = None

    def __post_init__(self):
        if self.kind not in ("mixer", "attention"):
            raise ConfigError(f"layer kind must be 'mixer' or 'attention', got {self.kind!r}")


def init_hsi_layer(c: int, kind: str, rng: Rng, heads: int = 1, window: int = 1,
                   mlp_ratio: int = 4, drop_rate: float = 0.0,
                   state_size: int = DEFAULT_STATE_SIZE, dtype=None) -> HsiLayer:
    layer = HsiLayer(
        kind=kind,
        norm1=init_norm(c, rng, dtype),
        norm2=init_norm(c, rng, dtype),
        mlp_in=init_linear(c, mlp_ratio * c, rng.spawn("mlp_in"), dtype),
        mlp_out=init_linear(mlp_ratio * c, c, rng.spawn("mlp_out"), dtype),
        drop_rate=drop_rate,
    )
    if kind == "mixer":
        layer.mixer = init_mixer(c, rng.spawn("mixer"), state_size=state_size, dtype=dtype)
    else:
        layer.attention = init_attention(c, heads, window, rng.spawn("attn"), dtype)
    return layer


def hsi_layer_forward(layer: HsiLayer, x, training: bool = False,
                      rng: Rng | None = None, conv_mode: str = "same") -> Tensor:
    """x is a token grid [..., H, W, C]; shape is preserved.

    Mixer layers flatten the grid row-major into a length H*W sequence;
    attention layers work on window tiles of the grid directly.
    """
    x = as_tensor(x)
    lead = x.shape[:-3]
    h, wd, c = x.shape[-3:]

    normed = layer.norm1(x)
    if layer.kind == "mixer":
        seq = reshape(normed, lead + (h * wd, c))
        mixed = mixer_forward(layer.mixer, seq, conv_mode=conv_mode)
        mixed = reshape(mixed, lead + (h, wd, c))
    else:
        mixed = windowed_attention(layer.attention, normed)
    x = x + dropout(mixed, layer.drop_rate, rng, training)

    ff = layer.mlp_out(silu(layer.mlp_in(layer.norm2(x))))
    return x + dropout(ff, layer.drop_rate, rng, training)


def hsi_layer_param_tensors(layer: HsiLayer, prefix: str) -> dict[str, Tensor]:
    out = {
        f"{prefix}.norm1.gain": layer.norm1.gain,
        f"{prefix}.norm1.bias": layer.norm1.bias,
        f"{prefix}.norm2.gain": layer.norm2.gain,
        f"{prefix}.norm2.bias": layer.norm2.bias,
        f"{prefix}.mlp_in.w": layer.mlp_in.w,
        f"{prefix}.mlp_in.b": layer.mlp_in.b,
        f"{prefix}.mlp_out.w": layer.mlp_out.w,
        f"{prefix}.mlp_out.b": layer.mlp_out.b,
    }
    if layer.mixer is not None:
        out.update(mixer_param_tensors(layer.mixer, f"{prefix}.mixer"))
    if layer.attention is not None:
        out.update(attention_param_tensors(layer.attention, f"{prefix}.attn"))
    return out
