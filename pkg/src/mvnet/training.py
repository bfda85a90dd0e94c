"""Optimizer, loss, metrics, and the training/evaluation loops."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

import numpy as np

from .backbone import ModelConfig, MvnetModel, init_model, model_forward
from .data import PatchSet, SplitSpec
from .errors import ConfigError, DataError, DimensionError, FormatError, NumericError
from .rng import Rng
from .tensor import Tensor, as_tensor, get_default_dtype, zero_grads


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 80
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    seed: int = 0
    patience: int = 20

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")

    def to_json(self) -> str:
        return json.dumps({f.name: getattr(self, f.name) for f in fields(self)}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise FormatError(f"train config is not valid JSON: {e}") from e
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise FormatError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**doc)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class AdamState:
    def __init__(self):
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(params: dict[str, Tensor], state: AdamState, cfg: TrainConfig) -> None:
    """Standard bias-corrected Adam update, in a fixed name order."""
    state.step += 1
    t = state.step
    for name in sorted(params):
        p = params[name]
        if p.grad is None:
            continue
        g = np.asarray(p.grad, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"NaN/Inf gradient for parameter {name}")
        if g.shape != p.data.shape:
            raise DimensionError(f"gradient shape {g.shape} vs parameter {p.data.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1 - cfg.beta1**t)
        v_hat = v / (1 - cfg.beta2**t)
        update = cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        p.data = (p.data.astype(np.float64) - update).astype(p.data.dtype)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def cross_entropy(logits, labels) -> Tensor:
    """Mean softmax cross-entropy; labels are 0-based int indices."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(
            f"cross_entropy wants logits [B, K] and labels [B], got {logits.shape}, {labels.shape}"
        )
    b, k = logits.shape
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise DataError(f"labels out of range [0, {k})")
    x = logits.data.astype(np.float64, copy=False)
    m = x.max(axis=1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True)) + m
    picked = x[np.arange(b), labels]
    loss = float((lse.reshape(-1) - picked).mean())
    out = np.asarray(loss, dtype=logits.data.dtype)

    def vjp(g):
        soft = np.exp(x - lse)
        soft[np.arange(b), labels] -= 1.0
        return (float(g) * soft / b,)

    return Tensor._from_op(out, (logits,), vjp, "cross_entropy")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass
class Metrics:
    confusion: np.ndarray  # rows = truth, cols = prediction
    oa: float
    aa: float
    kappa: float
    per_class: np.ndarray  # recall per class; NaN where the class is absent

    def rows(self) -> list[tuple[str, str]]:
        """Table rows, percentages with two decimals (never a bare '1')."""
        out = []
        for i, r in enumerate(self.per_class):
            out.append((f"class_{i + 1}", "-" if np.isnan(r) else f"{100 * r:.2f}"))
        out.append(("OA", f"{100 * self.oa:.2f}"))
        out.append(("AA", f"{100 * self.aa:.2f}"))
        out.append(("Kappa", f"{self.kappa:.4f}"))
        return out


def compute_metrics(confusion) -> Metrics:
    confusion = np.asarray(confusion, dtype=np.int64)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise DimensionError(f"confusion must be square, got {confusion.shape}")
    total = int(confusion.sum())
    if total == 0:
        raise DataError("empty confusion matrix")
    diag = np.diag(confusion).astype(np.float64)
    row = confusion.sum(axis=1).astype(np.float64)
    col = confusion.sum(axis=0).astype(np.float64)
    oa = float(diag.sum() / total)
    with np.errstate(invalid="ignore", divide="ignore"):
        recalls = np.where(row > 0, diag / np.where(row > 0, row, 1.0), np.nan)
    present = row > 0
    aa = float(np.nanmean(recalls[present]))
    pe = float((row * col).sum() / (total * total))
    if pe >= 1.0:
        kappa = 1.0 if oa == 1.0 else 0.0
    else:
        kappa = (oa - pe) / (1.0 - pe)
    return Metrics(confusion=confusion, oa=oa, aa=aa, kappa=float(kappa),
                   per_class=recalls)


def confusion_from_predictions(truth: np.ndarray, pred: np.ndarray, classes: int) -> np.ndarray:
    """truth/pred hold 1-based class ids; rows = truth, cols = prediction."""
    confusion = np.zeros((classes, classes), dtype=np.int64)
    for t, p in zip(np.asarray(truth).ravel(), np.asarray(pred).ravel()):
        confusion[int(t) - 1, int(p) - 1] += 1
    return confusion


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: MvnetModel
    best_arrays: dict[str, np.ndarray]
    history: list  # (epoch, train_loss, val_oa)
    best_epoch: int
    best_val_oa: float
    stopped_early: bool

    def history_csv(self) -> str:
        lines = ["epoch,train_loss,val_oa"]
        for epoch, loss, oa in self.history:
            lines.append(f"{epoch},{loss:.10g},{oa:.10g}")
        return "\n".join(lines) + "\n"


def _predict_ids(model: MvnetModel, patches: np.ndarray, batch_size: int) -> np.ndarray:
    """1-based class predictions, eval mode, fixed batch order."""
    n = patches.shape[0]
    out = np.empty(n, dtype=np.int64)
    dtype = get_default_dtype()
    for start in range(0, n, batch_size):
        xb = Tensor(patches[start : start + batch_size].astype(dtype))
        logits = model_forward(model, xb, training=False)
        out[start : start + batch_size] = logits.data.argmax(axis=1) + 1
    return out


def train(model_cfg: ModelConfig, patchset: PatchSet, split: SplitSpec,
          train_cfg: TrainConfig, gate_threshold: float = 0.0,
          state_size: int = 8, log=None) -> TrainResult:
    """Train with Adam and validation-based early stopping.

    Keeps the parameter snapshot of the best validation OA; history holds
    one (epoch, mean train loss, val OA) row per completed epoch.
    """
    if len(split.train) == 0 or len(split.val) == 0:
        raise DataError("train and val splits must be nonempty")
    dtype = get_default_dtype()
    rng = Rng(train_cfg.seed)
    model = init_model(model_cfg, rng.spawn("init"), dtype=dtype,
                       gate_threshold=gate_threshold, state_size=state_size)
    params = model.named_parameters()
    state = AdamState()
    order_rng = rng.spawn("batch_order")
    drop_rng = rng.spawn("dropout")

    train_x = patchset.patches[split.train]
    train_y = patchset.labels[split.train] - 1
    val_x = patchset.patches[split.val]
    val_y = patchset.labels[split.val]

    history = []
    best_val = -1.0
    best_epoch = 0
    best_arrays = {k: v.data.copy() for k, v in params.items()}
    since_best = 0
    stopped = False

    for epoch in range(1, train_cfg.epochs + 1):
        order = order_rng.permutation(len(train_x))
        loss_sum = 0.0
        for start in range(0, len(order), train_cfg.batch_size):
            idx = order[start : start + train_cfg.batch_size]
            xb = Tensor(train_x[idx].astype(dtype))
            yb = train_y[idx]
            logits = model_forward(model, xb, training=True, rng=drop_rng)
            loss = cross_entropy(logits, yb)
            if not np.isfinite(loss.item()):
                raise NumericError(f"training diverged (NaN loss) at epoch {epoch}")
            zero_grads(params)
            loss.backward()
            adam_step(params, state, train_cfg)
            loss_sum += loss.item() * len(idx)
        epoch_loss = loss_sum / len(order)
        pred = _predict_ids(model, val_x, train_cfg.batch_size)
        confusion = confusion_from_predictions(val_y, pred, patchset.classes)
        val_oa = compute_metrics(confusion).oa
        history.append((epoch, epoch_loss, val_oa))
        if log is not None:
            log(f"epoch {epoch}: train_loss {epoch_loss:.4f} val_oa {val_oa:.4f}")
        if val_oa > best_val:
            best_val = val_oa
            best_epoch = epoch
            best_arrays = {k: v.data.copy() for k, v in params.items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= train_cfg.patience:
                stopped = True
                break

    model.load_arrays(best_arrays)
    return TrainResult(model=model, best_arrays=best_arrays, history=history,
                       best_epoch=best_epoch, best_val_oa=best_val,
                       stopped_early=stopped)


def evaluate(model: MvnetModel, patchset: PatchSet, indices: np.ndarray,
             map_shape: tuple | None = None, batch_size: int = 64):
    """Metrics over one split plus an H x W prediction map (0 elsewhere)."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise DataError("cannot evaluate an empty split")
    pred = _predict_ids(model, patchset.patches[indices], batch_size)
    truth = patchset.labels[indices]
    confusion = confusion_from_predictions(truth, pred, patchset.classes)
    metrics = compute_metrics(confusion)
    pred_map = None
    if map_shape is not None:
        pred_map = np.zeros(map_shape, dtype=np.uint16)
        coords = patchset.coords[indices]
        pred_map[coords[:, 0], coords[:, 1]] = pred
    return metrics, pred_map
