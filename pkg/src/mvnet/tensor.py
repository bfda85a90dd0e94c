"""Dense tensors with reverse-mode differentiation on a numpy substrate.

Design rules that the tests lean on:

* storage is 32-bit by default with a 64-bit verification mode
  (``set_default_dtype`` / ``precision``); reductions and matrix products
  always accumulate in 64-bit regardless of storage width;
* every forward op checks its result for NaN/Inf and raises
  ``NumericError`` naming the op instead of propagating poison;
* "convolution" means cross-correlation (no kernel flip), the usual
  deep-learning convention;
* conv3d accumulates kernel taps in a fixed (kd, kh, kw, ci) order so a
  naive nested-loop reference reproduces it bit for bit;
* gradients are held and propagated as float64 arrays.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import ConfigError, DimensionError, NumericError, UsageError
from .rng import Rng

_DEFAULT_DTYPE = np.float32


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ConfigError(f"unsupported storage dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(mode: str):
    """Temporarily switch default storage width: 'f32' or 'f64'."""
    if mode not in ("f32", "f64"):
        raise ConfigError(f"precision must be 'f32' or 'f64', got {mode!r}")
    old = _DEFAULT_DTYPE
    set_default_dtype(np.float64 if mode == "f64" else np.float32)
    try:
        yield
    finally:
        set_default_dtype(old)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by op '{op}'")


class Tensor:
    """Value-semantic dense array participating in one reverse-mode tape."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else _DEFAULT_DTYPE)
        _check_finite(arr, "leaf")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    # ---- construction of op nodes -------------------------------------
    @staticmethod
    def _from_op(data: np.ndarray, parents, vjp, op: str) -> "Tensor":
        _check_finite(data, op)
        t = Tensor.__new__(Tensor)
        t.data = data
        t.grad = None
        t.op = op
        if any(p.requires_grad for p in parents):
            t.requires_grad = True
            t._parents = tuple(parents)
            t._vjp = vjp
        else:
            t.requires_grad = False
            t._parents = ()
            t._vjp = None
        return t

    # ---- basic protocol -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, op={self.op!r})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    # ---- reverse pass ----------------------------------------------------
    def backward(self) -> None:
        """Populate .grad on every requires_grad tensor reachable from here."""
        if self.data.size != 1:
            raise UsageError(
                f"backward requires a scalar loss, got shape {self.shape}"
            )
        order = _toposort(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones(self.shape, dtype=np.float64)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._vjp is None:
                continue
            parent_grads = node._vjp(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if not np.all(np.isfinite(pg)):
                    raise NumericError(f"NaN/Inf gradient out of op '{node.op}'")
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _toposort(root: Tensor) -> list[Tensor]:
    """Reverse topological order (root first), iterative."""
    seen: set[int] = set()
    post: list[Tensor] = []
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            post.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    post.reverse()
    return post


def zero_grads(params) -> None:
    for p in params.values() if isinstance(params, dict) else params:
        p.grad = None


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _result_dtype(*tensors) -> np.dtype:
    return np.result_type(*[t.data.dtype for t in tensors])


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(out, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(out, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        )

    return Tensor._from_op(out, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def vjp(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return Tensor._from_op(out, (a, b), vjp, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g / a.data,), "log")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x)))).astype(x.dtype)

    def vjp(g):
        o = out.astype(np.float64)
        return (g * o * (1.0 - o),)

    return Tensor._from_op(out, (a,), vjp, "sigmoid")


def silu(a) -> Tensor:
    """x * sigmoid(x)."""
    a = as_tensor(a)
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = (x * s).astype(x.dtype)

    def vjp(g):
        s64 = s.astype(np.float64)
        return (g * (s64 * (1.0 + x * (1.0 - s64))),)

    return Tensor._from_op(out, (a,), vjp, "silu")


def softplus(a) -> Tensor:
    """log(1 + e^x), computed without overflow."""
    a = as_tensor(a)
    x = a.data
    out = (np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))).astype(x.dtype)

    def vjp(g):
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return (g * s,)

    return Tensor._from_op(out, (a,), vjp, "softplus")


# ---------------------------------------------------------------------------
# shape plumbing
# ---------------------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    return Tensor._from_op(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.transpose(a.data, axes)
    return Tensor._from_op(out, (a,), lambda g: (np.transpose(g, inv),), "transpose")


def concat(tensors, axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(out, tuple(tensors), vjp, "concat")


def pad(a, pads) -> Tensor:
    """Zero-pad; pads is a ((before, after), ...) tuple per axis."""
    a = as_tensor(a)
    pads = tuple((int(b), int(e)) for b, e in pads)
    out = np.pad(a.data, pads)
    sl = tuple(slice(b, b + s) for (b, _), s in zip(pads, a.shape))
    return Tensor._from_op(out, (a,), lambda g: (g[sl],), "pad")


def slice_(a, index) -> Tensor:
    """Basic (non-fancy) slicing; gradients scatter back into zeros."""
    a = as_tensor(a)
    out = a.data[index]

    def vjp(g):
        full = np.zeros(a.shape, dtype=np.float64)
        full[index] = g
        return (full,)

    return Tensor._from_op(out, (a,), vjp, "slice")


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(a.data.dtype)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return Tensor._from_op(out, (a,), vjp, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims, dtype=np.float64).astype(a.data.dtype)
    if axis is None:
        n = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([a.shape[ax] for ax in axes]))

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / n, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / n, a.shape).copy(),)

    return Tensor._from_op(out, (a,), vjp, "mean")


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product with leading batch dims; 64-bit accumulation.

    1D operands follow the usual vector promotion: a 1D left operand is a
    row vector, a 1D right operand a column, and the unit axis is dropped.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1:
        raise DimensionError(f"matmul got a scalar operand: {a.shape} x {b.shape}")
    if a.ndim == 1 and b.ndim >= 2:
        out = matmul(reshape(a, (1, a.shape[0])), b)
        return reshape(out, out.shape[:-2] + (out.shape[-1],))
    if b.ndim == 1 and a.ndim >= 2:
        out = matmul(a, reshape(b, (b.shape[0], 1)))
        return reshape(out, out.shape[:-1])
    if a.ndim == 1 and b.ndim == 1:
        out = matmul(reshape(a, (1, a.shape[0])), reshape(b, (b.shape[0], 1)))
        return reshape(out, ())
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner extents differ: {a.shape} x {b.shape}"
        )
    a64 = a.data.astype(np.float64, copy=False)
    b64 = b.data.astype(np.float64, copy=False)
    out = np.matmul(a64, b64).astype(_result_dtype(a, b))

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b64, -1, -2))
        gb = np.matmul(np.swapaxes(a64, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._from_op(out, (a, b), vjp, "matmul")


# ---------------------------------------------------------------------------
# softmax / layer norm
# ---------------------------------------------------------------------------

def softmax(a, axis: int = -1) -> Tensor:
    """Max-stabilized softmax along one axis."""
    a = as_tensor(a)
    x = a.data.astype(np.float64, copy=False)
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = y.astype(a.data.dtype)

    def vjp(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return Tensor._from_op(out, (a,), vjp, "softmax")


_LN_EPS = 1e-5


def layer_norm(a, gain, bias) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    c = a.shape[-1]
    if c < 2:
        raise ConfigError(f"layer_norm needs >= 2 features, got {c}")
    x = a.data.astype(np.float64, copy=False)
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    ivar = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * ivar
    out = (xhat * gain.data + bias.data).astype(_result_dtype(a, gain, bias))

    def vjp(g):
        g64 = g.astype(np.float64, copy=False)
        gxhat = g64 * gain.data
        gi = gxhat * ivar
        gvar = (gxhat * xc).sum(axis=-1, keepdims=True) * (-0.5) * ivar ** 3
        gmu = -gi.sum(axis=-1, keepdims=True) + gvar * (-2.0 / c) * xc.sum(
            axis=-1, keepdims=True
        )
        gx = gi + gvar * (2.0 / c) * xc + gmu / c
        red = tuple(range(g64.ndim - 1))
        ggain = (g64 * xhat).sum(axis=red)
        gbias = g64.sum(axis=red)
        return gx, _unbroadcast(ggain, gain.shape), _unbroadcast(gbias, bias.shape)

    return Tensor._from_op(out, (a, gain, bias), vjp, "layer_norm")


def normalized(a) -> Tensor:
    """layer_norm without the affine step (unit gain, zero bias)."""
    c = as_tensor(a).shape[-1]
    return layer_norm(a, Tensor(np.ones(c)), Tensor(np.zeros(c)))


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def dropout(a, rate: float, rng: Rng | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate == 0."""
    a = as_tensor(a)
    if not training or rate <= 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise UsageError("training-mode dropout needs an Rng")
    keep = (rng.uniform(a.shape) >= rate) / (1.0 - rate)
    out = (a.data * keep).astype(a.data.dtype)
    return Tensor._from_op(out, (a,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------------------
# convolutions (cross-correlation semantics)
# ---------------------------------------------------------------------------

def conv1d(x, w, mode: str = "same") -> Tensor:
    """1D convolution over tokens: x [..., T, C] * w [K, C, Cout].

    'causal' pads K-1 on the left so output t sees inputs <= t;
    'same' (K odd) pads symmetrically so output t sees a centered window.
    """
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 3:
        raise DimensionError(f"conv1d weight must be [K, C, Cout], got {w.shape}")
    k, c, cout = w.shape
    if x.shape[-1] != c:
        raise DimensionError(
            f"conv1d channel mismatch: input {x.shape} vs weight {w.shape}"
        )
    if mode == "causal":
        before, after = k - 1, 0
    elif mode == "same":
        if k % 2 == 0:
            raise ConfigError(f"'same' conv1d needs odd K, got K={k}")
        before = after = (k - 1) // 2
    else:
        raise ConfigError(f"conv1d mode must be 'causal' or 'same', got {mode!r}")

    t = x.shape[-2]
    pads = [(0, 0)] * (x.ndim - 2) + [(before, after), (0, 0)]
    xp = np.pad(x.data.astype(np.float64, copy=False), pads)
    # windows stacked on a new axis: [..., T, K, C]
    cols = np.stack([xp[..., i : i + t, :] for i in range(k)], axis=-2)
    w64 = w.data.astype(np.float64, copy=False)
    out = np.matmul(cols.reshape(*cols.shape[:-2], k * c), w64.reshape(k * c, cout))
    out = out.astype(_result_dtype(x, w))

    def vjp(g):
        g64 = g.astype(np.float64, copy=False)
        lead = tuple(range(g64.ndim - 2))
        gw = np.tensordot(cols, g64, axes=(lead + (g64.ndim - 2,), lead + (g64.ndim - 2,)))
        gcols = np.matmul(g64, w64.reshape(k * c, cout).T).reshape(*g64.shape[:-1], k, c)
        gxp = np.zeros(xp.shape, dtype=np.float64)
        for i in range(k):
            gxp[..., i : i + t, :] += gcols[..., i, :]
        gx = gxp[..., before : before + t, :]
        return gx, gw.reshape(k, c, cout)

    return Tensor._from_op(out, (x, w), vjp, "conv1d")


def _norm_pairs(v, n, name):
    """stride/pad arguments: int, per-axis ints, or per-axis (before, after)."""
    if isinstance(v, (int, np.integer)):
        return [(int(v), int(v))] * n if name == "pad" else [int(v)] * n
    v = list(v)
    if len(v) != n:
        raise ConfigError(f"{name} must have {n} entries, got {len(v)}")
    if name != "pad":
        return [int(s) for s in v]
    out = []
    for item in v:
        if isinstance(item, (int, np.integer)):
            out.append((int(item), int(item)))
        else:
            b, e = item
            out.append((int(b), int(e)))
    return out


def _convnd(x: Tensor, w: Tensor, stride, pads, nsp: int, op: str) -> Tensor:
    """Shared N-spatial-axis convolution core.

    x: [..., S1..Sn, Cin]; w: [K1..Kn, Cin, Cout]. Accumulation over kernel
    taps runs in a fixed (k1, ..., kn, ci) order in float64, so a naive
    nested-loop reference with the same loop nesting matches bit for bit.
    """
    ks = w.shape[:nsp]
    cin, cout = w.shape[nsp], w.shape[nsp + 1]
    if x.shape[-1] != cin:
        raise DimensionError(f"{op} channel mismatch: input {x.shape} vs weight {w.shape}")
    sp_in = x.shape[-1 - nsp : -1]
    padded = [sp_in[i] + pads[i][0] + pads[i][1] for i in range(nsp)]
    sp_out = [(padded[i] - ks[i]) // stride[i] + 1 for i in range(nsp)]
    if any(o < 1 for o in sp_out) or any(padded[i] < ks[i] for i in range(nsp)):
        raise DimensionError(
            f"{op}: non-positive output extent for input {x.shape}, "
            f"kernel {w.shape}, stride {tuple(stride)}, pad {tuple(pads)}"
        )

    lead = x.shape[: -1 - nsp]
    full_pads = [(0, 0)] * len(lead) + list(pads) + [(0, 0)]
    xp = np.pad(x.data.astype(np.float64, copy=False), full_pads)
    w64 = w.data.astype(np.float64, copy=False)

    def tap_slice(offsets):
        return tuple(
            slice(offsets[i], offsets[i] + (sp_out[i] - 1) * stride[i] + 1, stride[i])
            for i in range(nsp)
        )

    out = np.zeros(lead + tuple(sp_out) + (cout,), dtype=np.float64)
    for offs in np.ndindex(*ks):
        sl = (Ellipsis,) + tap_slice(offs)
        for ci in range(cin):
            out += xp[sl + (ci,)][..., None] * w64[offs + (ci,)]
    result = out.astype(_result_dtype(x, w))

    def vjp(g):
        g64 = g.astype(np.float64, copy=False)
        red = tuple(range(g64.ndim - 1))
        gw = np.zeros(w.shape, dtype=np.float64)
        gxp = np.zeros(xp.shape, dtype=np.float64)
        for offs in np.ndindex(*ks):
            sl = (Ellipsis,) + tap_slice(offs)
            patch = xp[sl + (slice(None),)]  # [..., *sp_out, Cin]
            gw[offs] = np.tensordot(patch, g64, axes=(red, red))
            gxp[sl + (slice(None),)] += np.matmul(g64, w64[offs].T)
        sl_in = tuple(slice(pads[i][0], pads[i][0] + sp_in[i]) for i in range(nsp))
        gx = gxp[(Ellipsis,) + sl_in + (slice(None),)]
        return gx, gw

    return Tensor._from_op(result, (x, w), vjp, op)


def conv3d(x, w, stride=1, pad=0) -> Tensor:
    """3D convolution: x [..., D, H, W, Cin] * w [KD, KH, KW, Cin, Cout]."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 5:
        raise DimensionError(f"conv3d weight must have rank 5, got {w.shape}")
    if x.ndim < 4:
        raise DimensionError(f"conv3d input must have rank >= 4, got {x.shape}")
    return _convnd(x, w, _norm_pairs(stride, 3, "stride"), _norm_pairs(pad, 3, "pad"), 3, "conv3d")


def conv2d(x, w, stride=1, pad=0) -> Tensor:
    """2D convolution: x [..., H, W, Cin] * w [KH, KW, Cin, Cout]."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 4:
        raise DimensionError(f"conv2d weight must have rank 4, got {w.shape}")
    if x.ndim < 3:
        raise DimensionError(f"conv2d input must have rank >= 3, got {x.shape}")
    return _convnd(x, w, _norm_pairs(stride, 2, "stride"), _norm_pairs(pad, 2, "pad"), 2, "conv2d")


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(f, inputs, tol: float = 1e-4, h: float = 1e-5, seed: int = 0):
    """Compare reverse-mode gradients of f(*inputs) to central differences.

    Runs in float64. The output is probed through a fixed random linear
    functional so the whole Jacobian is exercised. The reported error is
    max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf, 1e-12),
    per input tensor; the check passes when every input is within tol.
    """
    xs = [
        Tensor(
            np.array(x.data if isinstance(x, Tensor) else x,
                     dtype=np.float64, copy=True, order="C"),
            requires_grad=True, dtype=np.float64)
        for x in inputs
    ]
    probe_rng = Rng(seed, stream=0xC0FFEE)

    def loss_of(ts):
        y = f(*ts)
        # copy: ops like reshape return views of the probed input buffer
        return y, np.array(y.data, dtype=np.float64, copy=True)

    y0, _ = loss_of(xs)
    r = probe_rng.normal(y0.shape)

    # scalar probe: L = sum(y * r)
    L = sum_(mul(y0, Tensor(r, dtype=np.float64)))
    L.backward()

    report = []
    ok = True
    for xi in xs:
        analytic = np.ascontiguousarray(
            xi.grad if xi.grad is not None else np.zeros(xi.shape)
        )
        numeric = np.zeros(xi.shape, dtype=np.float64)
        flat = xi.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            _, yp = loss_of(xs)
            flat[j] = orig - h
            _, ym = loss_of(xs)
            flat[j] = orig
            nflat[j] = float(((yp - ym) * r).sum()) / (2.0 * h)
        denom = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
        err = float(np.abs(analytic - numeric).max(initial=0.0) / denom)
        report.append(err)
        ok = ok and err <= tol
    return ok, report
