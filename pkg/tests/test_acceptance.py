"""Acceptance gate: every primary criterion at its stated tolerance.

Each test prints one `ACCEPTANCE PASS/FAIL <criterion>` line (visible with
`pytest tests/test_acceptance.py -s`). Tolerances are pinned here and must
not be loosened.
"""

import time

import numpy as np
import pytest

from mvnet import Rng, Tensor
from mvnet import tensor as T
from mvnet.backbone import ModelConfig
from mvnet.data import (
    HsiCube,
    PatchSet,
    edge_pad,
    extract_patches,
    prototype_separation,
    stratified_split,
    synthesize_dataset,
)
from mvnet.mixers import (
    hsi_layer_param_tensors,
    init_attention,
    init_hsi_layer,
    init_mixer,
    mhsa_forward,
    mixer_forward,
    parity_report,
    windowed_attention,
)
from mvnet.selfcheck import run_selfcheck
from mvnet.ssm import (
    SSMParams,
    conv_kernel,
    kernel_apply,
    recurrent_scan,
    selective_scan_core,
    zoh_discretize,
)
from mvnet.training import TrainConfig, compute_metrics, evaluate, train
from mvnet.cli import run_bench


@pytest.fixture(autouse=True)
def f64_mode():
    T.set_default_dtype(np.float64)
    yield
    T.set_default_dtype(np.float32)


def report(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


def stable_lti(rng: Rng, m: int):
    a = rng.normal((m, m)) * 0.3
    margin = float(rng.uniform((), 0.05, 0.5))
    a = a - (float(np.max(np.linalg.eigvals(a).real)) + margin) * np.eye(m)
    p = SSMParams(A=a, B=rng.normal((m,)), C=rng.normal((m,)),
                  dt=float(rng.uniform((), 0.1, 1.0)))
    return zoh_discretize(p)


def test_scan_kernel_duality_200():
    """200 random LTI instances, M <= 8, T <= 64, rho(Ab) < 1; 1e-6 rel."""
    rng = Rng(2024, 1)
    t0 = time.time()
    worst = 0.0
    for _ in range(200):
        m = int(rng.integers(1, 9))
        t_len = int(rng.integers(2, 65))
        d = stable_lti(rng, m)
        assert np.max(np.abs(np.linalg.eigvals(d.Ab))) < 1.0
        x = rng.normal((t_len,))
        scan = recurrent_scan(d, x).data
        conv = kernel_apply(conv_kernel(d, t_len), x)
        worst = max(worst, float(np.abs(scan - conv).max() / max(np.abs(scan).max(), 1e-12)))
    elapsed = time.time() - t0
    report(
        "scan/kernel duality",
        worst <= 1e-6 and elapsed < 10.0,
        f"worst rel err {worst:.2e} over 200 instances in {elapsed:.2f}s",
    )


def test_zoh_correctness():
    """Scalar closed form 1e-12; 4x4 vs 30-term series 1e-10; A->0 1e-12."""
    d = zoh_discretize(SSMParams(A=[[-1.0]], B=[1.0], C=[1.0], dt=np.log(2.0)))
    scalar_err = max(abs(d.Ab[0, 0] - 0.5), abs(d.Bb[0, 0] - 0.5))

    rng = Rng(2024, 2)
    series_err = 0.0
    for _ in range(10):
        a = rng.normal((4, 4)) * 0.3
        a = a - (float(np.max(np.linalg.eigvals(a).real)) + 0.2) * np.eye(4)
        dt = float(rng.uniform((), 0.1, 1.0))
        dd = zoh_discretize(SSMParams(A=a, B=rng.normal((4,)), C=rng.normal((4,)), dt=dt))
        acc, term = np.eye(4), np.eye(4)
        for k in range(1, 31):
            term = term @ (dt * a) / k
            acc = acc + term
        series_err = max(series_err, float(np.abs(dd.Ab - acc).max()))

    b = np.ones(3)
    d0 = zoh_discretize(SSMParams(A=np.zeros((3, 3)), B=b, C=b, dt=0.7))
    zero_err = max(float(np.abs(d0.Ab - np.eye(3)).max()),
                   float(np.abs(d0.Bb.reshape(-1) - 0.7 * b).max()))

    ok = scalar_err <= 1e-12 and series_err <= 1e-10 and zero_err <= 1e-12
    report(
        "ZOH correctness",
        ok,
        f"scalar {scalar_err:.2e} (<=1e-12), series {series_err:.2e} (<=1e-10), "
        f"A->0 {zero_err:.2e} (<=1e-12)",
    )


def test_gradient_suite():
    """Every differentiable op + one full layer vs central differences,
    rel err <= 1e-4, 64-bit, h = 1e-5; runtime < 2 min."""
    t0 = time.time()
    rng = Rng(2024, 3)
    worst = 0.0
    checks = {
        "matmul": (T.matmul, [rng.normal((4, 3)), rng.normal((3, 5))]),
        "add": (T.add, [rng.normal((3, 4)), rng.normal((4,))]),
        "mul": (T.mul, [rng.normal((3, 4)), rng.normal((3, 4))]),
        "div": (T.div, [rng.normal((5,)), 1.5 + np.abs(rng.normal((5,)))]),
        "conv1d_same": (lambda x, w: T.conv1d(x, w, "same"),
                        [rng.normal((6, 2)), rng.normal((3, 2, 3))]),
        "conv1d_causal": (lambda x, w: T.conv1d(x, w, "causal"),
                          [rng.normal((6, 2)), rng.normal((2, 2, 3))]),
        "conv2d": (lambda x, w: T.conv2d(x, w, stride=2, pad=1),
                   [rng.normal((5, 5, 2)), rng.normal((2, 2, 2, 3))]),
        "conv3d": (lambda x, w: T.conv3d(x, w, stride=(1, 1, 2), pad=1),
                   [rng.normal((3, 3, 4, 2)), rng.normal((3, 3, 3, 2, 2))]),
        "softmax": (lambda x: T.softmax(x, axis=-1), [rng.normal((3, 5))]),
        "layer_norm": (T.layer_norm,
                       [rng.normal((3, 6)), rng.normal((6,)), rng.normal((6,))]),
        "silu": (T.silu, [rng.normal((8,))]),
        "sigmoid": (T.sigmoid, [rng.normal((8,))]),
        "softplus": (T.softplus, [rng.normal((8,))]),
        "exp": (T.exp, [rng.normal((6,)) * 0.5]),
        "log": (T.log, [1.0 + np.abs(rng.normal((6,)))]),
        "sum": (lambda x: T.sum_(x, axis=0), [rng.normal((4, 3))]),
        "mean": (lambda x: T.mean(x, axis=1), [rng.normal((4, 3))]),
        "reshape": (lambda x: T.reshape(x, (6, 2)), [rng.normal((3, 4))]),
        "transpose": (lambda x: T.transpose(x, (1, 0)), [rng.normal((3, 4))]),
        "concat": (lambda a, b: T.concat([a, b], axis=1),
                   [rng.normal((2, 3)), rng.normal((2, 2))]),
        "pad": (lambda x: T.pad(x, ((1, 0), (0, 2))), [rng.normal((3, 3))]),
        "slice": (lambda x: T.slice_(x, (slice(1, 3),)), [rng.normal((4, 3))]),
        "recurrent_scan": (lambda ab, bb, cb, x: recurrent_scan((ab, bb, cb), x),
                           [np.eye(3) * 0.4, rng.normal((3, 1)),
                            rng.normal((1, 3)), rng.normal((6,))]),
        "selective_scan": (selective_scan_core,
                           [rng.normal((4, 2)), -np.abs(rng.normal((2, 3))) - 0.1,
                            rng.normal((4, 3)) * 0.5, rng.normal((4, 3)) * 0.5,
                            np.abs(rng.normal((4, 2))) * 0.3 + 0.1]),
    }
    failures = []
    for name, (fn, args) in checks.items():
        # three random shapes are exercised by per-op unit tests; here each
        # op gets one canonical check inside the timed budget
        ok, errs = T.grad_check(fn, args, tol=1e-4, h=1e-5)
        worst = max(worst, max(errs))
        if not ok:
            failures.append(name)

    # one full mixing layer, all parameters and the input
    layer = init_hsi_layer(4, "mixer", Rng(2024, 4), state_size=3)
    tensors = hsi_layer_param_tensors(layer, "L")
    names = sorted(tensors)

    def set_by_path(path, value):
        parts = path.split(".")[1:]
        obj = layer
        for part in parts[:-1]:
            obj = getattr(obj, part)
        setattr(obj, parts[-1], value)

    def layer_fn(x, *params):
        from mvnet.mixers import hsi_layer_forward

        for n, p in zip(names, params):
            set_by_path(n, p)
        try:
            return hsi_layer_forward(layer, x)
        finally:
            for n in names:
                set_by_path(n, tensors[n])

    ok, errs = T.grad_check(
        layer_fn, [Rng(2024, 5).normal((2, 2, 4))] + [tensors[n] for n in names],
        tol=1e-4, h=1e-5,
    )
    worst = max(worst, max(errs))
    if not ok:
        failures.append("hsi_layer")
    elapsed = time.time() - t0
    report(
        "gradient suite",
        not failures and elapsed < 120.0,
        f"worst rel err {worst:.2e} (<=1e-4) across {len(checks) + 1} checks "
        f"in {elapsed:.1f}s" + (f"; failures {failures}" if failures else ""),
    )


def test_bidirectionality():
    """Perturbation at t+1 moves output at t by >= 1e-6 with same-mode
    convs; the causal ablation response is <= 1e-12."""
    rng = Rng(2024, 6)
    mw = init_mixer(8, rng)
    x = rng.normal((16, 8))
    t = 6
    xp = x.copy()
    xp[t + 1] += 1.0
    same_effect = float(np.abs(
        mixer_forward(mw, Tensor(xp)).data[t] - mixer_forward(mw, Tensor(x)).data[t]
    ).max())
    causal_effect = float(np.abs(
        mixer_forward(mw, Tensor(xp), conv_mode="causal").data[: t + 1]
        - mixer_forward(mw, Tensor(x), conv_mode="causal").data[: t + 1]
    ).max())
    report(
        "bidirectionality",
        same_effect >= 1e-6 and causal_effect <= 1e-12,
        f"same-conv effect {same_effect:.2e} (>=1e-6), "
        f"causal effect {causal_effect:.2e} (<=1e-12)",
    )


def test_parameter_parity():
    """Dual-branch C/2 mixer within [0.8, 1.25] of the full-width single
    branch for C in {16, 32, 80}."""
    reps = {c: parity_report(c) for c in (16, 32, 80)}
    ok = all(0.8 <= r["ratio"] <= 1.25 for r in reps.values())
    report(
        "parameter parity",
        ok,
        ", ".join(f"C={c}: {r['dual_branch']}/{r['single_branch_full_width']}"
                  f"={r['ratio']:.3f}" for c, r in reps.items()),
    )


def test_attention_properties():
    """Row-stochastic attention, permutation equivariance, windowed==global,
    all to 1e-6."""
    rng = Rng(2024, 7)
    aw = init_attention(8, heads=2, window=9, rng=rng)
    x = rng.normal((5, 6, 8))
    flat = x.reshape(30, 8)
    _, attn = mhsa_forward(aw, Tensor(flat), return_weights=True)
    rows_err = float(np.abs(attn.sum(-1) - 1.0).max())
    perm = rng.permutation(30)
    perm_err = float(np.abs(
        mhsa_forward(aw, Tensor(flat)).data[perm]
        - mhsa_forward(aw, Tensor(flat[perm])).data
    ).max())
    window_err = float(np.abs(
        windowed_attention(aw, Tensor(x)).data.reshape(30, 8)
        - mhsa_forward(aw, Tensor(flat)).data
    ).max())
    ok = rows_err <= 1e-6 and perm_err <= 1e-6 and window_err <= 1e-6
    report(
        "attention properties",
        ok,
        f"rows {rows_err:.2e}, permutation {perm_err:.2e}, "
        f"windowed==global {window_err:.2e} (all <=1e-6)",
    )


def test_metrics_oracle():
    """[[40,10],[20,30]] -> OA 70.00%, AA 70.00%, Kappa 0.4000; diagonal -> 1."""
    m = compute_metrics([[40, 10], [20, 30]])
    rows = dict(m.rows())
    diag = compute_metrics(np.diag([5, 9, 2]))
    ok = (
        rows["OA"] == "70.00" and rows["AA"] == "70.00" and rows["Kappa"] == "0.4000"
        and abs(m.oa - 0.7) < 1e-12 and abs(m.aa - 0.7) < 1e-12
        and abs(m.kappa - 0.4) < 1e-12
        and diag.oa == 1.0 and diag.aa == 1.0 and diag.kappa == 1.0
    )
    report(
        "metrics oracle",
        ok,
        f"OA {rows['OA']}% AA {rows['AA']}% Kappa {rows['Kappa']}; diagonal all 1",
    )


def test_data_pipeline_arithmetic():
    """145+2x5 -> 155; 10 samples at 6:1:3 -> 6/1/3; patch count == labeled
    pixels over fuzzed masks."""
    cube = HsiCube(np.zeros((145, 145, 3), np.float32),
                   np.zeros((145, 145), np.uint16), classes=2)
    padded_ok = edge_pad(cube, 5).data.shape[:2] == (155, 155)

    ps = PatchSet(np.zeros((10, 3, 3, 2), np.float32), np.ones(10, np.int64),
                  np.zeros((10, 2), np.int64), classes=1)
    spec = stratified_split(ps, (6, 1, 3), seed=0)
    split_ok = (len(spec.train), len(spec.val), len(spec.test)) == (6, 1, 3)

    rng = Rng(2024, 8)
    fuzz_ok = True
    for _ in range(25):
        h = int(rng.integers(3, 10))
        w = int(rng.integers(3, 10))
        block = int(rng.integers(0, 3)) * 2 + 3
        labels = (rng.uniform((h, w)) < 0.5).astype(np.uint16)
        c = HsiCube(rng.normal((h, w, 4)).astype(np.float32), labels, classes=1)
        got = len(extract_patches(edge_pad(c, (block - 1) // 2), block))
        fuzz_ok = fuzz_ok and got == int(labels.astype(bool).sum())

    ok = padded_ok and split_ok and fuzz_ok
    report(
        "data-pipeline arithmetic",
        ok,
        f"pad 145->155 {padded_ok}, 6:1:3 of 10 -> 6/1/3 {split_ok}, "
        f"fuzzed patch counts {fuzz_ok}",
    )


def test_complexity_contrast():
    """Scan time ratio T=4096/T=512 in [6, 10]; kernel ratio > 20."""
    rows, agreement = run_bench([512, 4096])
    scan_ratio = rows[1][1] / rows[0][1]
    kernel_ratio = rows[1][2] / rows[0][2]
    ok = 6.0 <= scan_ratio <= 10.0 and kernel_ratio > 20.0 and agreement <= 1e-6
    report(
        "complexity contrast",
        ok,
        f"scan ratio {scan_ratio:.2f} (in [6,10]), kernel ratio {kernel_ratio:.1f} "
        f"(>20), agreement {agreement:.2e} (<=1e-6)",
    )


def test_toy_end_to_end():
    """32x32x16, K=3 separable cube; reduced net (embed 16, depths 1/1/2/2,
    windows 2/2/2/2); 6:1:3 split; val OA >= 95% within 200 epochs in under
    5 minutes; rerun with the same seed is bit-exact (64-bit mode)."""
    sigma = 0.05
    cube = synthesize_dataset(32, 32, 16, 3, sigma, seed=9)
    assert prototype_separation(cube) / sigma >= 6.0

    # nearest-centroid oracle must be perfect on this draw
    centroids = np.stack([cube.data[cube.labels == k].mean(axis=0) for k in (1, 2, 3)])
    flat = cube.data.reshape(-1, cube.bands)
    d2 = ((flat[:, None, :] - centroids[None]) ** 2).sum(-1)
    oracle_ok = bool((d2.argmin(1).reshape(cube.labels.shape) + 1 == cube.labels).all())

    ps = extract_patches(edge_pad(cube, 2), 5)
    split = stratified_split(ps, (6, 1, 3), seed=9)
    cfg = ModelConfig(
        stage_depths=(1, 1, 2, 2), windows=(2, 2, 2, 2), heads=(2, 4, 8, 16),
        mlp_ratio=4, drop_rate=0.0, embed_dim=16, block=5, bands=16, classes=3,
        channel_attention_reduction=4,
    )
    tcfg = TrainConfig(epochs=200, lr=1e-3, batch_size=32, seed=9, patience=30)

    t0 = time.time()
    first = train(cfg, ps, split, tcfg)
    elapsed = time.time() - t0
    metrics_a, _ = evaluate(first.model, ps, split.test)

    second = train(cfg, ps, split, tcfg)
    metrics_b, _ = evaluate(second.model, ps, split.test)

    bit_exact = (
        first.history == second.history
        and np.array_equal(metrics_a.confusion, metrics_b.confusion)
        and metrics_a.oa == metrics_b.oa
        and metrics_a.kappa == metrics_b.kappa
        and all(np.array_equal(first.best_arrays[k], second.best_arrays[k])
                for k in first.best_arrays)
    )
    loss_first = first.history[0][1]
    loss_last = first.history[-1][1]
    loss_drop_ok = loss_last < 0.5 * loss_first

    ok = (
        oracle_ok and first.best_val_oa >= 0.95 and len(first.history) <= 200
        and elapsed < 300.0 and bit_exact and loss_drop_ok
    )
    report(
        "toy end-to-end",
        ok,
        f"oracle 100% {oracle_ok}; best val OA {100 * first.best_val_oa:.2f}% "
        f"at epoch {first.best_epoch} ({len(first.history)} run) in {elapsed:.0f}s; "
        f"loss {loss_first:.3f}->{loss_last:.3f}; rerun bit-exact {bit_exact}",
    )


def test_selfcheck_suite_green():
    """The operator-facing selfcheck must agree with the gate."""
    results = run_selfcheck()
    bad = [r.name for r in results if not r.passed]
    report("selfcheck suite", not bad, f"{len(results)} checks, failures: {bad or 'none'}")
