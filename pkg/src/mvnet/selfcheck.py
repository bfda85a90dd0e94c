"""Built-in verification suite: every mathematical property the package
relies on, runnable from the CLI as one pass/fail report.

Each check reports its tolerance so the output doubles as a contract
listing. `kernel_apply_fn` is injectable so a deliberately broken kernel
path can be shown to trip the duality check (mutation probe).
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .data import HsiCube, edge_pad, stratified_split, PatchSet
from .mixers import (
    init_attention,
    init_mixer,
    mhsa_forward,
    mixer_forward,
    parity_report,
    windowed_attention,
)
from .rng import Rng
from .ssm import (
    SSMDiscrete,
    SSMParams,
    conv_kernel,
    kernel_apply,
    recurrent_scan,
    selective_scan_core,
    zoh_discretize,
)
from .tensor import Tensor
from .training import compute_metrics


@dataclass
class CheckResult:
    name: str
    tolerance: str
    passed: bool
    detail: str


def _zoh_scalar(_):
    d = zoh_discretize(SSMParams(A=[[-1.0]], B=[1.0], C=[1.0], dt=np.log(2.0)))
    err = max(abs(d.Ab[0, 0] - 0.5), abs(d.Bb[0, 0] - 0.5))
    return err <= 1e-12, f"max err {err:.2e}"


def _zoh_continuity(_):
    b = np.ones(3)
    d0 = zoh_discretize(SSMParams(A=np.zeros((3, 3)), B=b, C=b, dt=0.7))
    err = max(
        float(np.abs(d0.Ab - np.eye(3)).max()),
        float(np.abs(d0.Bb.reshape(-1) - 0.7 * b).max()),
    )
    return err <= 1e-12, f"A=0 limit err {err:.2e}"


def _zoh_series(_):
    rng = Rng(1001)
    worst = 0.0
    for _ in range(5):
        a = rng.normal((4, 4)) * 0.3
        a = a - (float(np.max(np.linalg.eigvals(a).real)) + 0.2) * np.eye(4)
        p = SSMParams(A=a, B=rng.normal((4,)), C=rng.normal((4,)), dt=0.5)
        d = zoh_discretize(p)
        acc = np.eye(4)
        term = np.eye(4)
        for k in range(1, 31):
            term = term @ (p.dt * a) / k
            acc = acc + term
        worst = max(worst, float(np.abs(d.Ab - acc).max()))
    return worst <= 1e-10, f"worst |expm - series| {worst:.2e}"


def _duality(kernel_apply_fn, trials: int = 50):
    rng = Rng(1002)
    worst = 0.0
    for _ in range(trials):
        m = int(rng.integers(1, 9))
        t_len = int(rng.integers(2, 65))
        a = rng.normal((m, m)) * 0.3
        a = a - (float(np.max(np.linalg.eigvals(a).real)) + float(rng.uniform((), 0.05, 0.5))) * np.eye(m)
        p = SSMParams(A=a, B=rng.normal((m,)), C=rng.normal((m,)), dt=float(rng.uniform((), 0.1, 1.0)))
        d = zoh_discretize(p)
        x = rng.normal((t_len,))
        scan = recurrent_scan(d, x).data
        conv = kernel_apply_fn(conv_kernel(d, t_len), x)
        worst = max(worst, float(np.abs(scan - conv).max() / max(np.abs(scan).max(), 1e-12)))
    return worst <= 1e-6, f"worst rel err {worst:.2e} over {trials} instances"


def _selective_reduction(_):
    rng = Rng(1003)
    ch, n, t_len = 3, 5, 24
    a = -np.abs(rng.normal((ch, n))) - 0.05
    b0, c0 = rng.normal((n,)), rng.normal((n,))
    dt0 = 0.4
    u = rng.normal((t_len, ch))
    y = selective_scan_core(
        Tensor(u), Tensor(a),
        Tensor(np.tile(b0, (t_len, 1))), Tensor(np.tile(c0, (t_len, 1))),
        Tensor(np.full((t_len, ch), dt0)),
    ).data
    worst = 0.0
    for c in range(ch):
        ab = np.exp(dt0 * a[c])
        bb = (ab - 1.0) / a[c] * b0
        ref = recurrent_scan(SSMDiscrete(Ab=np.diag(ab), Bb=bb, Cb=c0), u[:, c]).data
        worst = max(worst, float(np.abs(y[:, c] - ref).max() / max(np.abs(ref).max(), 1e-12)))
    return worst <= 1e-6, f"worst rel err {worst:.2e}"


def _gradients(_):
    rng = Rng(1004)
    checks = [
        ("matmul", T.matmul, [rng.normal((4, 3)), rng.normal((3, 5))]),
        ("conv1d", lambda x, w: T.conv1d(x, w, mode="same"),
         [rng.normal((6, 2)), rng.normal((3, 2, 2))]),
        ("conv3d", lambda x, w: T.conv3d(x, w, pad=1),
         [rng.normal((3, 3, 3, 2)), rng.normal((3, 3, 3, 2, 2))]),
        ("softmax", lambda x: T.softmax(x, axis=-1), [rng.normal((3, 4))]),
        ("layer_norm", T.layer_norm,
         [rng.normal((3, 6)), rng.normal((6,)), rng.normal((6,))]),
        ("silu", T.silu, [rng.normal((8,))]),
        ("selective_scan", selective_scan_core,
         [rng.normal((4, 2)), -np.abs(rng.normal((2, 3))) - 0.1,
          rng.normal((4, 3)) * 0.5, rng.normal((4, 3)) * 0.5,
          np.abs(rng.normal((4, 2))) * 0.3 + 0.1]),
    ]
    worst_name, worst = "", 0.0
    for name, fn, args in checks:
        ok, errs = T.grad_check(fn, args)
        e = max(errs)
        if e > worst:
            worst_name, worst = name, e
        if not ok:
            return False, f"{name} rel err {e:.2e}"
    return True, f"worst {worst_name} rel err {worst:.2e}"


def _metrics_oracle(_):
    m = compute_metrics([[40, 10], [20, 30]])
    err = max(abs(m.oa - 0.7), abs(m.aa - 0.7), abs(m.kappa - 0.4))
    diag = compute_metrics(np.diag([3, 4, 5]))
    ok = err <= 1e-12 and diag.oa == diag.aa == diag.kappa == 1.0
    return ok, f"2x2 oracle err {err:.2e}; diagonal gives all 1"


def _split_arithmetic(_):
    ps = PatchSet(
        patches=np.zeros((10, 3, 3, 2), np.float32),
        labels=np.ones(10, np.int64),
        coords=np.zeros((10, 2), np.int64),
        classes=1,
    )
    spec = stratified_split(ps, (6, 1, 3), seed=0)
    got = (len(spec.train), len(spec.val), len(spec.test))
    return got == (6, 1, 3), f"10 samples at 6:1:3 -> {got}"


def _pad_arithmetic(_):
    cube = HsiCube(np.zeros((145, 145, 3), np.float32),
                   np.zeros((145, 145), np.uint16), classes=2)
    padded = edge_pad(cube, 5)
    got = padded.data.shape[:2]
    return got == (155, 155), f"145x145 + 5 -> {got[0]}x{got[1]}"


def _parity(_):
    ratios = {c: parity_report(c)["ratio"] for c in (16, 32, 80)}
    ok = all(0.8 <= r <= 1.25 for r in ratios.values())
    return ok, "ratios " + ", ".join(f"C={c}: {r:.3f}" for c, r in ratios.items())


def _attention_properties(_):
    rng = Rng(1005)
    aw = init_attention(8, heads=2, window=9, rng=rng)
    x = rng.normal((5, 6, 8))
    tiled = windowed_attention(aw, Tensor(x)).data.reshape(30, 8)
    flat = mhsa_forward(aw, Tensor(x.reshape(30, 8))).data
    err_window = float(np.abs(tiled - flat).max())
    perm = rng.permutation(30)
    a = mhsa_forward(aw, Tensor(x.reshape(30, 8))).data[perm]
    b = mhsa_forward(aw, Tensor(x.reshape(30, 8)[perm])).data
    err_perm = float(np.abs(a - b).max())
    _, attn = mhsa_forward(aw, Tensor(x.reshape(30, 8)), return_weights=True)
    err_rows = float(np.abs(attn.sum(-1) - 1.0).max())
    worst = max(err_window, err_perm, err_rows)
    return worst <= 1e-6, (
        f"windowed==global {err_window:.2e}, permutation {err_perm:.2e}, "
        f"rows {err_rows:.2e}"
    )


def _bidirectionality(_):
    rng = Rng(1006)
    mw = init_mixer(8, rng)
    x = rng.normal((16, 8))
    xp = x.copy()
    xp[7] += 1.0
    same_effect = float(np.abs(
        mixer_forward(mw, Tensor(xp)).data[6] - mixer_forward(mw, Tensor(x)).data[6]
    ).max())
    causal_effect = float(np.abs(
        mixer_forward(mw, Tensor(xp), conv_mode="causal").data[:7]
        - mixer_forward(mw, Tensor(x), conv_mode="causal").data[:7]
    ).max())
    ok = same_effect >= 1e-6 and causal_effect <= 1e-12
    return ok, f"same-conv effect {same_effect:.2e}, causal effect {causal_effect:.2e}"


def _checkpoint_roundtrip(_):
    params = {"a.w": Rng(1007).normal((4, 5)).astype(np.float32)}
    fd, path = tempfile.mkstemp(suffix=".mvnw")
    os.close(fd)
    try:
        save_checkpoint(params, path)
        back = load_checkpoint(path)
        ok = back["a.w"].tobytes() == params["a.w"].tobytes()
    finally:
        os.unlink(path)
    return ok, "float32 payload bit-exact"


CHECKS = [
    ("zoh_scalar_closed_form", "1e-12", _zoh_scalar),
    ("zoh_continuity_at_zero", "1e-12", _zoh_continuity),
    ("zoh_matches_series_oracle", "1e-10", _zoh_series),
    ("scan_kernel_duality", "1e-6 rel", _duality),
    ("selective_reduces_to_lti", "1e-6 rel", _selective_reduction),
    ("gradient_suite", "1e-4 rel", _gradients),
    ("metrics_oracle", "1e-12", _metrics_oracle),
    ("split_arithmetic", "exact", _split_arithmetic),
    ("pad_arithmetic", "exact", _pad_arithmetic),
    ("mixer_param_parity", "[0.8, 1.25]", _parity),
    ("attention_properties", "1e-6", _attention_properties),
    ("mixer_bidirectionality", ">=1e-6 / <=1e-12", _bidirectionality),
    ("checkpoint_round_trip", "bit-exact", _checkpoint_roundtrip),
]


def run_selfcheck(kernel_apply_fn=None) -> list[CheckResult]:
    """Run every check in 64-bit mode; returns one result per property."""
    fn = kernel_apply_fn if kernel_apply_fn is not None else kernel_apply
    results = []
    with T.precision("f64"):
        for name, tol, check in CHECKS:
            try:
                passed, detail = check(fn)
            except Exception as e:  # a raising check is a failing check
                passed, detail = False, f"raised {type(e).__name__}: {e}"
            results.append(CheckResult(name=name, tolerance=tol, passed=passed,
                                       detail=detail))
    return results
