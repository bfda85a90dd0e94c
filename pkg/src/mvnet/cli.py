"""Command-line surface: synth, train, eval, map, selfcheck, bench.

Every command validates its inputs before writing anything, emits a run
manifest JSON capturing seeds/configs/input hashes, and maps failures to
exit codes: 0 ok, 2 usage, 3 data/format, 4 numeric.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from . import tensor as T
from .backbone import ModelConfig, init_model
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    HsiCube,
    edge_pad,
    extract_patches,
    load_hsic,
    save_hsic,
    stratified_split,
    synthesize_dataset,
)
from .errors import DataError, MvnetError, UsageError
from .rng import Rng
from .selfcheck import run_selfcheck
from .ssm import SSMParams, conv_kernel, kernel_apply, recurrent_scan, zoh_discretize
from .training import TrainConfig, evaluate, train

# 16 visually distinct colors; class 0 (unlabeled) renders black.
PALETTE = [
    (0, 0, 0),
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
    (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
]


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: str, command: str, args: dict, inputs: dict,
                   outputs: dict, seeds: dict, extra: dict | None = None) -> None:
    plain = {
        k: (list(v) if isinstance(v, tuple) else v)
        for k, v in args.items()
        if isinstance(v, (str, int, float, bool, tuple, list, type(None)))
    }
    doc = {
        "tool": "mvnet",
        "version": __version__,
        "command": command,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "args": plain,
        "seeds": seeds,
        "input_hashes": {k: sha256_file(v) for k, v in inputs.items()},
        "outputs": outputs,
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def parse_ratios(text: str) -> tuple:
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"ratios must look like 6:1:3, got {text!r}")
    try:
        ratios = tuple(int(p) for p in parts)
    except ValueError:
        raise UsageError(f"ratios must be integers, got {text!r}") from None
    if any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise UsageError(f"ratios must be non-negative with a positive sum: {text!r}")
    return ratios


def _precision_ctx(name: str):
    if name not in ("f32", "f64"):
        raise UsageError(f"--precision must be f32 or f64, got {name!r}")
    return T.precision(name)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.height < 1 or args.width < 1 or args.bands < 3:
        raise UsageError("height/width must be >= 1 and bands >= 3")
    cube = synthesize_dataset(args.height, args.width, args.bands, args.classes,
                              args.noise, args.seed)
    save_hsic(cube, args.out)
    write_manifest(
        args.out + ".manifest.json", "synth", vars(args), {},
        {"cube": sha256_file(args.out)}, {"seed": args.seed},
    )
    print(f"wrote {args.out}: {cube.height}x{cube.width}x{cube.bands}, "
          f"{cube.classes} classes")
    return 0


def _load_model_cfg(path: str | None, cube: HsiCube, block: int) -> ModelConfig:
    if path is None:
        return ModelConfig(block=block, bands=cube.bands, classes=cube.classes)
    with open(path) as fh:
        cfg = ModelConfig.from_json(fh.read())
    if cfg.block != block:
        raise UsageError(f"--block {block} disagrees with model config block {cfg.block}")
    if cfg.bands != cube.bands or cfg.classes != cube.classes:
        raise DataError(
            f"model config (bands {cfg.bands}, classes {cfg.classes}) does not "
            f"match cube (bands {cube.bands}, classes {cube.classes})"
        )
    return cfg


def cmd_train(args) -> int:
    if args.block % 2 == 0 or args.block < 3:
        raise UsageError(f"--block must be odd and >= 3, got {args.block}")
    ratios = parse_ratios(args.ratios)
    cube = load_hsic(args.data)
    model_cfg = _load_model_cfg(args.model, cube, args.block)
    if args.train is None:
        train_cfg = TrainConfig()
    else:
        with open(args.train) as fh:
            train_cfg = TrainConfig.from_json(fh.read())
    if args.seed is not None:
        train_cfg.seed = int(args.seed)

    os.makedirs(args.out, exist_ok=True)
    with _precision_ctx(args.precision):
        padded = edge_pad(cube, (args.block - 1) // 2)
        patchset = extract_patches(padded, args.block)
        split = stratified_split(patchset, ratios, seed=train_cfg.seed)
        print(f"patches {len(patchset)} ({args.block}x{args.block}x{patchset.bands}); "
              f"split {len(split.train)}/{len(split.val)}/{len(split.test)}")
        result = train(model_cfg, patchset, split, train_cfg,
                       log=lambda msg: print(msg, flush=True))
        metrics, _ = evaluate(result.model, patchset, split.test)

    ck_path = os.path.join(args.out, "checkpoint.mvnw")
    save_checkpoint(result.best_arrays, ck_path)
    hist_path = os.path.join(args.out, "history.csv")
    with open(hist_path, "w") as fh:
        fh.write(result.history_csv())
    model_path = os.path.join(args.out, "model.json")
    with open(model_path, "w") as fh:
        fh.write(model_cfg.to_json() + "\n")
    metrics_path = os.path.join(args.out, "metrics.csv")
    with open(metrics_path, "w") as fh:
        fh.write("name,value\n")
        for name, value in metrics.rows():
            fh.write(f"{name},{value}\n")
    write_manifest(
        os.path.join(args.out, "manifest.json"), "train", vars(args),
        {"data": args.data},
        {"checkpoint": sha256_file(ck_path), "history": sha256_file(hist_path),
         "metrics": sha256_file(metrics_path)},
        {"seed": train_cfg.seed},
        extra={
            "model_config": json.loads(model_cfg.to_json()),
            "train_config": json.loads(train_cfg.to_json()),
            "ratios": list(ratios),
            "block": args.block,
            "precision": args.precision,
            "best_epoch": result.best_epoch,
            "best_val_oa": result.best_val_oa,
        },
    )
    print(f"best val OA {100 * result.best_val_oa:.2f} at epoch {result.best_epoch}; "
          f"test OA {100 * metrics.oa:.2f}")
    return 0


def _restore_run(checkpoint: str):
    """Load run directory artifacts: model config, manifest, weights."""
    run_dir = checkpoint if os.path.isdir(checkpoint) else os.path.dirname(checkpoint)
    ck_path = checkpoint if not os.path.isdir(checkpoint) else os.path.join(
        checkpoint, "checkpoint.mvnw")
    manifest_path = os.path.join(run_dir, "manifest.json")
    model_path = os.path.join(run_dir, "model.json")
    for p in (ck_path, manifest_path, model_path):
        if not os.path.exists(p):
            raise DataError(f"missing run artifact: {p}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    with open(model_path) as fh:
        cfg = ModelConfig.from_json(fh.read())
    return cfg, manifest, ck_path


def _rebuild_eval_state(args):
    cfg, manifest, ck_path = _restore_run(args.checkpoint)
    cube = load_hsic(args.data)
    block = int(manifest["block"])
    seed = int(manifest["seeds"]["seed"])
    padded = edge_pad(cube, (block - 1) // 2)
    patchset = extract_patches(padded, block)
    split = stratified_split(patchset, tuple(manifest["ratios"]), seed=seed)
    model = init_model(cfg, Rng(seed).spawn("init"), dtype=T.get_default_dtype())
    model.load_arrays(load_checkpoint(ck_path))
    return cfg, manifest, cube, patchset, split, model


def cmd_eval(args) -> int:
    with _precision_ctx(args.precision):
        cfg, manifest, cube, patchset, split, model = _rebuild_eval_state(args)
        indices = split.split(args.split)
        metrics, _ = evaluate(model, patchset, indices)
    print("name,value")
    for name, value in metrics.rows():
        print(f"{name},{value}")
    return 0


def cmd_map(args) -> int:
    with _precision_ctx(args.precision):
        cfg, manifest, cube, patchset, split, model = _rebuild_eval_state(args)
        all_idx = np.arange(len(patchset))
        _, pred_map = evaluate(model, patchset, all_idx,
                               map_shape=(cube.height, cube.width))
    palette = np.array(PALETTE + [(255, 255, 255)] * 240, dtype=np.uint8)
    img = palette[np.minimum(pred_map, len(palette) - 1)]
    with open(args.out, "wb") as fh:
        fh.write(f"P6\n{cube.width} {cube.height}\n255\n".encode())
        fh.write(img.tobytes())
    write_manifest(
        args.out + ".manifest.json", "map", vars(args),
        {"data": args.data}, {"map": sha256_file(args.out)},
        {"seed": manifest["seeds"]["seed"]},
    )
    print(f"wrote {args.out} ({cube.width}x{cube.height})")
    return 0


def cmd_selfcheck(args) -> int:
    results = run_selfcheck()
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name}  (tol {r.tolerance})  {r.detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 4


def _timed_sample(fn, inner: int) -> float:
    t0 = time.perf_counter()
    for _ in range(inner):
        fn()
    return (time.perf_counter() - t0) / inner


def run_bench(lengths, state_size: int = 8, seed: int = 0, rounds: int = 9,
              min_sample_s: float = 0.02):
    """Time the linear scan against the quadratic kernel route per length.

    Returns (rows, agreement): rows of (T, scan_seconds, kernel_seconds);
    both paths are checked to agree to 1e-6 relative before timing. Short
    workloads are looped inside each sample, and samples for all lengths
    are interleaved round-robin so machine-load drift hits every length
    alike; the per-length minimum is reported.
    """
    rng = Rng(seed, 2001)
    a = rng.normal((state_size, state_size)) * 0.3
    a = a - (float(np.max(np.linalg.eigvals(a).real)) + 0.2) * np.eye(state_size)
    p = SSMParams(A=a, B=rng.normal((state_size,)), C=rng.normal((state_size,)), dt=0.3)
    d = zoh_discretize(p)

    cases = []
    agreement = 0.0
    for t_len in lengths:
        x = rng.normal((t_len,))
        k = conv_kernel(d, t_len)
        scan = recurrent_scan(d, x).data
        conv = kernel_apply(k, x)
        agreement = max(agreement, float(np.abs(scan - conv).max() / max(np.abs(scan).max(), 1e-12)))
        scan_fn = lambda d=d, x=x: recurrent_scan(d, x)
        kernel_fn = lambda k=k, x=x: kernel_apply(k, x)
        inner_scan = max(1, int(np.ceil(min_sample_s / max(_timed_sample(scan_fn, 1), 1e-9))))
        inner_kernel = max(1, int(np.ceil(min_sample_s / max(_timed_sample(kernel_fn, 1), 1e-9))))
        cases.append({"t": t_len, "scan": scan_fn, "kernel": kernel_fn,
                      "inner_scan": inner_scan, "inner_kernel": inner_kernel,
                      "best_scan": np.inf, "best_kernel": np.inf})

    for _ in range(rounds):
        for case in cases:
            case["best_scan"] = min(case["best_scan"],
                                    _timed_sample(case["scan"], case["inner_scan"]))
            case["best_kernel"] = min(case["best_kernel"],
                                      _timed_sample(case["kernel"], case["inner_kernel"]))

    rows = [(c["t"], c["best_scan"], c["best_kernel"]) for c in cases]
    return rows, agreement


def cmd_bench(args) -> int:
    try:
        lengths = [int(p) for p in args.lengths.split(",") if p]
    except ValueError:
        raise UsageError(f"--lengths must be comma-separated ints, got {args.lengths!r}")
    if not lengths or any(n < 2 for n in lengths):
        raise UsageError("--lengths needs values >= 2")
    rows, agreement = run_bench(lengths)
    if agreement > 1e-6:
        raise MvnetError(f"scan/kernel disagree before timing: {agreement:.2e}")
    print("T,scan_seconds,kernel_seconds")
    for t_len, scan_s, kernel_s in rows:
        print(f"{t_len},{scan_s:.6f},{kernel_s:.6f}")
    if len(rows) >= 2:
        first, last = rows[0], rows[-1]
        print(f"# scan ratio T={last[0]}/T={first[0]}: {last[1] / first[1]:.2f}")
        print(f"# kernel ratio T={last[0]}/T={first[0]}: {last[2] / first[2]:.2f}")
        print(f"# max rel disagreement before timing: {agreement:.2e}")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mvnet",
                                 description="hybrid SSM/attention HSI classifier")
    ap.add_argument("--version", action="version", version=f"mvnet {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic HSIC cube")
    synth.add_argument("--out", required=True)
    synth.add_argument("--height", type=int, default=32)
    synth.add_argument("--width", type=int, default=32)
    synth.add_argument("--bands", type=int, default=16)
    synth.add_argument("--classes", type=int, default=3)
    synth.add_argument("--noise", type=float, default=0.05)
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(fn=cmd_synth)

    tr = sub.add_parser("train", help="train on an HSIC cube")
    tr.add_argument("--data", required=True)
    tr.add_argument("--model", default=None, help="model config JSON")
    tr.add_argument("--train", default=None, help="train config JSON")
    tr.add_argument("--ratios", default="6:1:3")
    tr.add_argument("--block", type=int, default=13)
    tr.add_argument("--out", required=True, help="run directory")
    tr.add_argument("--seed", type=int, default=None, help="override config seed")
    tr.add_argument("--precision", default="f32", choices=("f32", "f64"))
    tr.set_defaults(fn=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    ev.add_argument("--checkpoint", required=True, help="run dir or checkpoint.mvnw")
    ev.add_argument("--data", required=True)
    ev.add_argument("--split", default="test", choices=("train", "val", "test"))
    ev.add_argument("--precision", default="f32", choices=("f32", "f64"))
    ev.set_defaults(fn=cmd_eval)

    mp = sub.add_parser("map", help="render a classification map as PPM")
    mp.add_argument("--checkpoint", required=True)
    mp.add_argument("--data", required=True)
    mp.add_argument("--out", required=True)
    mp.add_argument("--precision", default="f32", choices=("f32", "f64"))
    mp.set_defaults(fn=cmd_map)

    sc = sub.add_parser("selfcheck", help="run the built-in verification suite")
    sc.set_defaults(fn=cmd_selfcheck)

    be = sub.add_parser("bench", help="scan vs kernel timing contrast")
    be.add_argument("--lengths", default="512,1024,2048,4096")
    be.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors already
        return int(e.code or 0)
    try:
        return args.fn(args)
    except MvnetError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return DataError.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
