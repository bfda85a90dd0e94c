"""Scikit-learn estimator facade over the functional training pipeline.

``MVNetClassifier`` consumes neighboring-pixel blocks [n, M, M, L] and their
labels, so it composes with sklearn model selection and pipelines; the
heavy lifting stays in ``mvnet.training``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .backbone import ModelConfig, model_forward
from .data import PatchSet, stratified_split
from .errors import DataError, DimensionError
from .tensor import Tensor, get_default_dtype, precision, softmax
from .training import TrainConfig, _predict_ids, train


def check_patch_array(x) -> np.ndarray:
    """Validate an [n, M, M, L] block array: 4D, square odd spatial, finite."""
    x = np.asarray(x)
    if x.ndim != 4:
        raise DimensionError(f"expected patches [n, M, M, L], got shape {x.shape}")
    if x.shape[1] != x.shape[2]:
        raise DimensionError(f"patch spatial extents differ: {x.shape}")
    if x.shape[1] % 2 == 0 or x.shape[1] < 3:
        raise DimensionError(f"patch side must be odd and >= 3, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise DataError("patches contain non-finite values")
    return x.astype(np.float32, copy=False)


def check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise DimensionError(f"labels must be [{n}], got {y.shape}")
    return y


class MVNetClassifier(BaseEstimator, ClassifierMixin):
    """Hybrid conv / state-space / attention classifier for HSI blocks.

    Parameters mirror the model and optimizer configuration; ``fit`` carves
    an internal stratified validation split for early stopping.
    """

    def __init__(self, embed_dim=16, stage_depths=(1, 1, 2, 2), windows=(2, 2, 2, 2),
                 heads=(2, 4, 8, 16), mlp_ratio=4, drop_rate=0.0,
                 channel_attention_reduction=4, state_size=8, epochs=80, lr=1e-3,
                 batch_size=32, patience=20, val_ratio=(9, 1, 0), seed=0,
                 use_float64=False):
        self.embed_dim = embed_dim
        self.stage_depths = stage_depths
        self.windows = windows
        self.heads = heads
        self.mlp_ratio = mlp_ratio
        self.drop_rate = drop_rate
        self.channel_attention_reduction = channel_attention_reduction
        self.state_size = state_size
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.patience = patience
        self.val_ratio = val_ratio
        self.seed = seed
        self.use_float64 = use_float64

    def _mode(self):
        return precision("f64" if self.use_float64 else "f32")

    def fit(self, X, y):
        X = check_patch_array(X)
        y = check_labels(y, X.shape[0])
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise DataError("need at least 2 classes to fit")
        patchset = PatchSet(
            patches=X,
            labels=encoded.astype(np.int64) + 1,
            coords=np.zeros((X.shape[0], 2), dtype=np.int64),
            classes=len(self.classes_),
        )
        split = stratified_split(patchset, self.val_ratio, seed=self.seed)
        cfg = ModelConfig(
            stage_depths=self.stage_depths,
            windows=self.windows,
            heads=self.heads,
            mlp_ratio=self.mlp_ratio,
            drop_rate=self.drop_rate,
            embed_dim=self.embed_dim,
            block=X.shape[1],
            bands=X.shape[3],
            classes=len(self.classes_),
            channel_attention_reduction=self.channel_attention_reduction,
        )
        tcfg = TrainConfig(
            epochs=self.epochs, lr=self.lr, batch_size=self.batch_size,
            seed=self.seed, patience=self.patience,
        )
        with self._mode():
            result = train(cfg, patchset, split, tcfg, state_size=self.state_size)
        self.model_ = result.model
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.n_features_in_ = X.shape[1] * X.shape[2] * X.shape[3]
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise DataError("classifier is not fitted; call fit first")

    def predict(self, X):
        self._check_fitted()
        X = check_patch_array(X)
        with self._mode():
            ids = _predict_ids(self.model_, X, self.batch_size)
        return self.classes_[ids - 1]

    def predict_proba(self, X):
        self._check_fitted()
        X = check_patch_array(X)
        with self._mode():
            dtype = get_default_dtype()
            rows = []
            for start in range(0, X.shape[0], self.batch_size):
                xb = Tensor(X[start : start + self.batch_size].astype(dtype))
                logits = model_forward(self.model_, xb, training=False)
                rows.append(softmax(logits, axis=-1).data)
        return np.concatenate(rows, axis=0)
