"""State-space sequence machinery.

Three routes from input to output, kept deliberately independent so they
can check each other:

* ``recurrent_scan``: h(t) = Ab h(t-1) + Bb x(t), y(t) = Cb h(t), linear in T;
* ``conv_kernel`` / ``kernel_apply``: the same LTI map as one global
  convolution with kernel (Cb Bb, Cb Ab Bb, ..., Cb Ab^{T-1} Bb), quadratic in T;
* ``selective_scan``: the input-dependent variant where B, C and the step
  are projections of the current token, discretized per step.

Discretization follows the zero-order hold rule: Ab = exp(dt A) and
Bb = dt (I + dt A/2! + (dt A)^2/3! + ...) B, the series form staying
regular at A = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, DimensionError, NumericError
from .rng import Rng
from .tensor import Tensor, as_tensor, matmul, softplus

SERIES_TERMS = 30
# after SERIES_TERMS terms the next-term bound must fall below this
SERIES_TAIL_TOL = 1e-12


# ---------------------------------------------------------------------------
# parameter bundles
# ---------------------------------------------------------------------------

@dataclass
class SSMParams:
    """Continuous-time parameters (A, B, C, dt) of one SISO system.

    A may be stored dense [M, M] or, with diagonal=True, as its diagonal [M].
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dt: float
    diagonal: bool = False

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.B = np.asarray(self.B, dtype=np.float64).reshape(-1, 1)
        self.C = np.asarray(self.C, dtype=np.float64).reshape(1, -1)
        self.dt = float(self.dt)
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        m = self.state_size
        if self.diagonal:
            if self.A.ndim != 1 or self.A.shape[0] != m:
                raise DimensionError(f"diagonal A must be [{m}], got {self.A.shape}")
        elif self.A.shape != (m, m):
            raise DimensionError(f"A must be [{m}, {m}], got {self.A.shape}")
        if self.C.shape[1] != m:
            raise DimensionError(f"C must have {m} columns, got {self.C.shape}")

    @property
    def state_size(self) -> int:
        return self.B.shape[0]

    def dense_a(self) -> np.ndarray:
        return np.diag(self.A) if self.diagonal else self.A


@dataclass
class SSMDiscrete:
    """Discretized bundle (Ab, Bb, Cb); Cb is carried over unchanged."""

    Ab: np.ndarray
    Bb: np.ndarray
    Cb: np.ndarray

    def __post_init__(self):
        self.Ab = np.asarray(self.Ab, dtype=np.float64)
        self.Bb = np.asarray(self.Bb, dtype=np.float64).reshape(-1, 1)
        self.Cb = np.asarray(self.Cb, dtype=np.float64).reshape(1, -1)
        m = self.Bb.shape[0]
        if self.Ab.shape != (m, m) or self.Cb.shape[1] != m:
            raise DimensionError(
                f"inconsistent extents: Ab {self.Ab.shape}, Bb {self.Bb.shape}, Cb {self.Cb.shape}"
            )


@dataclass
class SelectiveParams:
    """Input-dependent scan parameters for a bank of channels.

    a_diag: [C, N] negative diagonal state matrices, one row per channel.
    w_b / w_c: [C, N] projections giving B(t), C(t) from the token.
    w_dt [C, C] and b_dt [C]: step projection; dt(t) = softplus(x W + b) > 0.
    """

    a_diag: Tensor
    w_b: Tensor
    w_c: Tensor
    w_dt: Tensor
    b_dt: Tensor

    def __post_init__(self):
        c, n = self.a_diag.shape
        for name, t, want in (
            ("w_b", self.w_b, (c, n)),
            ("w_c", self.w_c, (c, n)),
            ("w_dt", self.w_dt, (c, c)),
            ("b_dt", self.b_dt, (c,)),
        ):
            if tuple(t.shape) != want:
                raise DimensionError(f"{name} must be {want}, got {tuple(t.shape)}")

    @property
    def channels(self) -> int:
        return self.a_diag.shape[0]

    @property
    def state_size(self) -> int:
        return self.a_diag.shape[1]


def init_selective(channels: int, state_size: int, rng: Rng,
                   dtype=None) -> SelectiveParams:
    """Default initialization: negative diagonal log-spaced in [-1e-2, -1],
    step bias set so initial dt lands log-uniformly in [1e-3, 1e-1]."""
    a = -np.logspace(-2, 0, state_size)
    a_diag = np.tile(a, (channels, 1))
    scale = 1.0 / np.sqrt(channels)
    dt0 = np.exp(rng.uniform((channels,), np.log(1e-3), np.log(1e-1)))
    b_dt = dt0 + np.log(-np.expm1(-dt0))  # inverse softplus
    return SelectiveParams(
        a_diag=Tensor(a_diag, requires_grad=True, dtype=dtype),
        w_b=Tensor(rng.normal((channels, state_size)) * scale, requires_grad=True, dtype=dtype),
        w_c=Tensor(rng.normal((channels, state_size)) * scale, requires_grad=True, dtype=dtype),
        w_dt=Tensor(rng.normal((channels, channels)) * scale, requires_grad=True, dtype=dtype),
        b_dt=Tensor(b_dt, requires_grad=True, dtype=dtype),
    )


# ---------------------------------------------------------------------------
# zero-order hold discretization
# ---------------------------------------------------------------------------

def _phi_series(da: np.ndarray) -> np.ndarray:
    """(I + da/2! + da^2/3! + ...) as a truncated series; regular at da = 0."""
    m = da.shape[0]
    total = np.eye(m)
    term = np.eye(m)
    for k in range(1, SERIES_TERMS):
        term = term @ da / (k + 1)
        total = total + term
    tail = np.linalg.norm(term, ord=np.inf)
    if tail > SERIES_TAIL_TOL * max(np.linalg.norm(total, ord=np.inf), 1.0):
        raise NumericError(
            f"ZOH series did not converge in {SERIES_TERMS} terms "
            f"(|dt A| too large; last term norm {tail:.2e})"
        )
    return total


def zoh_discretize(p: SSMParams) -> SSMDiscrete:
    """Zero-order hold: Ab = exp(dt A); Bb via the series so A -> 0 is smooth."""
    a = p.dense_a()
    da = p.dt * a
    if p.diagonal:
        ab = np.diag(np.exp(p.dt * p.A))
    else:
        ab = expm(da)
    bb = p.dt * (_phi_series(da) @ p.B)
    return SSMDiscrete(Ab=ab, Bb=bb, Cb=p.C.copy())


# ---------------------------------------------------------------------------
# the two LTI routes
# ---------------------------------------------------------------------------

def recurrent_scan(d, x) -> Tensor:
    """Linear-time recurrence from zero initial state; y(t) = Cb h(t).

    d is an SSMDiscrete or an (Ab, Bb, Cb) triple; triples may hold Tensors
    so gradients can flow into the discrete parameters.
    """
    if isinstance(d, SSMDiscrete):
        ab_t, bb_t, cb_t = as_tensor(d.Ab), as_tensor(d.Bb), as_tensor(d.Cb)
    else:
        ab_t, bb_t, cb_t = (as_tensor(v) for v in d)
    x = as_tensor(x)
    if x.ndim != 1:
        raise DimensionError(f"recurrent_scan expects a 1D sequence, got {x.shape}")

    ab = ab_t.data.astype(np.float64, copy=False)
    bb = bb_t.data.astype(np.float64, copy=False).reshape(-1)
    cb = cb_t.data.astype(np.float64, copy=False).reshape(-1)
    xs = x.data.astype(np.float64, copy=False)
    t_len = xs.shape[0]
    m = bb.shape[0]

    hs = np.zeros((t_len + 1, m))
    y = np.zeros(t_len)
    for t in range(t_len):
        hs[t + 1] = ab @ hs[t] + bb * xs[t]
        y[t] = cb @ hs[t + 1]
    out = y.astype(x.data.dtype)

    def vjp(g):
        g64 = g.astype(np.float64, copy=False)
        gab = np.zeros_like(ab)
        gbb = np.zeros_like(bb)
        gcb = np.zeros_like(cb)
        gx = np.zeros_like(xs)
        gh = np.zeros(m)
        for t in range(t_len - 1, -1, -1):
            gh = gh + g64[t] * cb
            gcb += g64[t] * hs[t + 1]
            gab += np.outer(gh, hs[t])
            gbb += gh * xs[t]
            gx[t] = bb @ gh
            gh = ab.T @ gh
        return gab, gbb.reshape(bb_t.shape), gcb.reshape(cb_t.shape), gx

    return Tensor._from_op(out, (ab_t, bb_t, cb_t, x), vjp, "recurrent_scan")


def conv_kernel(d: SSMDiscrete, t_len: int) -> np.ndarray:
    """Global-convolution kernel (Cb Bb, Cb Ab Bb, ..., Cb Ab^{T-1} Bb)."""
    if t_len < 1:
        raise ConfigError(f"kernel length must be >= 1, got {t_len}")
    v = d.Bb.astype(np.float64).reshape(-1)
    cb = d.Cb.astype(np.float64).reshape(-1)
    k = np.zeros(t_len)
    for t in range(t_len):
        k[t] = cb @ v
        v = d.Ab @ v
    return k


def kernel_apply(k: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y(t) = sum_{s<=t} k(t-s) x(s), by direct (quadratic) convolution."""
    k = np.asarray(k, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if k.ndim != 1 or x.ndim != 1:
        raise DimensionError("kernel_apply expects 1D kernel and sequence")
    return np.convolve(x, k)[: x.shape[0]]


# ---------------------------------------------------------------------------
# stable helpers for the per-step diagonal discretization
# ---------------------------------------------------------------------------

_SERIES_CUT = 1e-3


def _g0(z: np.ndarray) -> np.ndarray:
    """(e^z - 1)/z with series fallback near 0."""
    small = np.abs(z) < _SERIES_CUT
    zs = np.where(small, 1.0, z)
    exact = np.expm1(zs) / zs
    series = 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    return np.where(small, series, exact)


def _g1(z: np.ndarray) -> np.ndarray:
    """d/dz of (e^z - 1)/z with series fallback near 0."""
    small = np.abs(z) < _SERIES_CUT
    zs = np.where(small, 1.0, z)
    exact = (np.exp(zs) * (zs - 1.0) + 1.0) / (zs * zs)
    series = 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0
    return np.where(small, series, exact)


# ---------------------------------------------------------------------------
# selective scan
# ---------------------------------------------------------------------------

def selective_scan_core(u, a_diag, b_seq, c_seq, dt) -> Tensor:
    """Recurrence with per-step diagonal ZOH.

    u [..., T, C]; a_diag [C, N]; b_seq, c_seq [..., T, N]; dt [..., T, C].
    Per step: ab = exp(dt a), bb = (ab - 1)/a * B(t) (series at a -> 0),
    h = ab h + bb u, y = sum_n C(t) h.
    """
    u, a_diag, b_seq, c_seq, dt = map(as_tensor, (u, a_diag, b_seq, c_seq, dt))
    if u.ndim == 2:
        squeeze = True
        u2, b2, c2, dt2 = (v.data[None] for v in (u, b_seq, c_seq, dt))
    elif u.ndim == 3:
        squeeze = False
        u2, b2, c2, dt2 = u.data, b_seq.data, c_seq.data, dt.data
    else:
        raise DimensionError(f"selective scan input must be 2D or 3D, got {u.shape}")
    if not np.all(np.isfinite(dt2)):
        raise NumericError("non-finite step sizes entering selective scan")

    a = a_diag.data.astype(np.float64, copy=False)  # [C, N]
    u64 = u2.astype(np.float64, copy=False)
    b64 = b2.astype(np.float64, copy=False)
    c64 = c2.astype(np.float64, copy=False)
    dt64 = dt2.astype(np.float64, copy=False)
    nb, t_len, ch = u64.shape
    n = a.shape[1]

    hs = np.zeros((t_len + 1, nb, ch, n))
    y = np.zeros((nb, t_len, ch))
    for t in range(t_len):
        z = dt64[:, t, :, None] * a  # [B, C, N]
        ab = np.exp(z)
        phi = dt64[:, t, :, None] * _g0(z)
        hs[t + 1] = ab * hs[t] + phi * b64[:, t, None, :] * u64[:, t, :, None]
        y[:, t, :] = (hs[t + 1] * c64[:, t, None, :]).sum(-1)

    out = y.astype(u.data.dtype)
    if squeeze:
        out = out[0]

    def vjp(g):
        g64 = g.astype(np.float64, copy=False)
        if squeeze:
            g64 = g64[None]
        ga = np.zeros_like(a)
        gu = np.zeros_like(u64)
        gb = np.zeros_like(b64)
        gc = np.zeros_like(c64)
        gdt = np.zeros_like(dt64)
        carry = np.zeros((nb, ch, n))
        for t in range(t_len - 1, -1, -1):
            z = dt64[:, t, :, None] * a
            ab = np.exp(z)
            g0 = _g0(z)
            phi = dt64[:, t, :, None] * g0
            gy = g64[:, t, :, None]  # [B, C, 1]
            gc[:, t, :] = (g64[:, t, :, None] * hs[t + 1]).sum(1)
            gh = gy * c64[:, t, None, :] + carry
            g_ab = gh * hs[t]
            g_phi = gh * b64[:, t, None, :] * u64[:, t, :, None]
            gdt[:, t, :] = (g_ab * a * ab + g_phi * ab).sum(-1)
            ga += (
                g_ab * dt64[:, t, :, None] * ab
                + g_phi * dt64[:, t, :, None] ** 2 * _g1(z)
            ).sum(0)
            gb[:, t, :] = (gh * phi * u64[:, t, :, None]).sum(1)
            gu[:, t, :] = (gh * phi * b64[:, t, None, :]).sum(-1)
            carry = ab * gh
        if squeeze:
            gu, gb, gc, gdt = gu[0], gb[0], gc[0], gdt[0]
        return gu, ga, gb, gc, gdt

    return Tensor._from_op(out, (u, a_diag, b_seq, c_seq, dt), vjp, "selective_scan")


def selective_scan(sp: SelectiveParams, u) -> Tensor:
    """Full selective path: project B(t), C(t), dt(t) from the token, scan."""
    u = as_tensor(u)
    b_seq = matmul(u, sp.w_b)
    c_seq = matmul(u, sp.w_c)
    dt = softplus(matmul(u, sp.w_dt) + sp.b_dt)
    return selective_scan_core(u, sp.a_diag, b_seq, c_seq, dt)


def selective_param_tensors(sp: SelectiveParams, prefix: str) -> dict[str, Tensor]:
    return {
        f"{prefix}.a_diag": sp.a_diag,
        f"{prefix}.w_b": sp.w_b,
        f"{prefix}.w_c": sp.w_c,
        f"{prefix}.w_dt": sp.w_dt,
        f"{prefix}.b_dt": sp.b_dt,
    }
