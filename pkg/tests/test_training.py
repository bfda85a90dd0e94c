"""Optimizer, loss, metrics, and small end-to-end training runs."""

import numpy as np
import pytest

from mvnet import DataError, NumericError, Rng, Tensor
from mvnet import tensor as T
from mvnet.backbone import ModelConfig
from mvnet.data import edge_pad, extract_patches, stratified_split, synthesize_dataset
from mvnet.training import (
    AdamState,
    TrainConfig,
    adam_step,
    compute_metrics,
    confusion_from_predictions,
    cross_entropy,
    evaluate,
    train,
)


@pytest.fixture(autouse=True)
def f64_mode():
    T.set_default_dtype(np.float64)
    yield
    T.set_default_dtype(np.float32)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class TestAdam:
    def test_hand_computed_first_step(self):
        # theta = 1, f = theta^2: g = 2, m_hat = 2, v_hat = 4, step = lr
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([2.0])
        cfg = TrainConfig(epochs=1, lr=1e-3)
        adam_step({"p": p}, AdamState(), cfg)
        assert abs(p.data[0] - 0.999) < 1e-9

    def test_zero_gradient_keeps_parameters(self):
        p = Tensor(np.array([1.5, -2.5]), requires_grad=True)
        p.grad = np.zeros(2)
        adam_step({"p": p}, AdamState(), TrainConfig())
        assert np.array_equal(p.data, [1.5, -2.5])

    def test_nan_gradient_rejected(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([np.nan])
        with pytest.raises(NumericError) as e:
            adam_step({"p": p}, AdamState(), TrainConfig())
        assert "p" in str(e.value)

    def test_bit_identical_trajectories(self):
        def run():
            rng = Rng(5, 50)
            p = Tensor(rng.normal((4, 4)), requires_grad=True)
            state = AdamState()
            cfg = TrainConfig(lr=0.01)
            for step in range(10):
                loss = T.sum_(T.mul(p, p))
                p.grad = None
                loss.backward()
                adam_step({"p": p}, state, cfg)
            return p.data.tobytes()

        assert run() == run()


# ---------------------------------------------------------------------------
# cross entropy
# ---------------------------------------------------------------------------

class TestCrossEntropy:
    def test_uniform_logits_give_log_k(self):
        for k in (2, 5, 9):
            logits = Tensor(np.zeros((3, k)))
            loss = cross_entropy(logits, np.zeros(3, dtype=int))
            assert abs(loss.item() - np.log(k)) < 1e-12

    def test_confident_correct_drives_loss_down(self):
        losses = []
        for scale in (1.0, 5.0, 25.0, 125.0):
            logits = np.zeros((1, 4))
            logits[0, 2] = scale
            losses.append(cross_entropy(Tensor(logits), np.array([2])).item())
        assert all(a > b for a, b in zip(losses, losses[1:]))
        assert losses[-1] < 1e-10

    def test_gradient_matches_finite_differences(self):
        labels = np.array([0, 2, 1])
        ok, errs = T.grad_check(
            lambda lg: cross_entropy(lg, labels), [Rng(6, 51).normal((3, 4))]
        )
        assert ok, errs


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

class TestMetrics:
    def test_perfect_classifier(self):
        m = compute_metrics(np.diag([7, 3, 5]))
        assert m.oa == 1.0 and m.aa == 1.0 and m.kappa == 1.0

    def test_hand_computed_2x2(self):
        m = compute_metrics([[40, 10], [20, 30]])
        assert abs(m.oa - 0.70) < 1e-12
        assert abs(m.aa - 0.70) < 1e-12
        assert abs(m.kappa - 0.40) < 1e-12

    def test_never_predicted_class(self):
        # column for class 2 empty; kappa well-defined, AA counts 0 recall
        m = compute_metrics([[5, 0], [3, 0]])
        assert m.per_class[1] == 0.0
        assert np.isfinite(m.kappa)
        assert abs(m.aa - 0.5) < 1e-12

    def test_absent_class_excluded_from_aa(self):
        m = compute_metrics([[4, 0, 0], [0, 6, 0], [0, 0, 0]])
        assert np.isnan(m.per_class[2])
        assert m.aa == 1.0

    def test_kappa_zero_for_marginal_product(self):
        # confusion equal to the outer product of its marginals
        row = np.array([0.6, 0.4])
        col = np.array([0.5, 0.5])
        confusion = np.outer(row, col) * 200
        m = compute_metrics(confusion.astype(int))
        assert abs(m.kappa) < 1e-12

    def test_kappa_one_iff_diagonal(self):
        assert compute_metrics([[12]]).kappa == 1.0
        assert compute_metrics([[12, 0], [0, 1]]).kappa == 1.0
        assert compute_metrics([[12, 1], [0, 1]]).kappa < 1.0

    def test_empty_confusion_rejected(self):
        with pytest.raises(DataError):
            compute_metrics(np.zeros((3, 3), dtype=int))

    def test_table_rows_format(self):
        rows = compute_metrics([[40, 10], [20, 30]]).rows()
        d = dict(rows)
        assert d["OA"] == "70.00" and d["AA"] == "70.00" and d["Kappa"] == "0.4000"


# ---------------------------------------------------------------------------
# training on a tiny separable problem
# ---------------------------------------------------------------------------

def tiny_problem(block=3, hw=10, bands=8, classes=3, seed=0):
    cube = synthesize_dataset(hw, hw, bands, classes, 0.02, seed=seed)
    padded = edge_pad(cube, (block - 1) // 2)
    ps = extract_patches(padded, block)
    split = stratified_split(ps, (6, 1, 3), seed=seed)
    return cube, ps, split


def tiny_cfg(block=3, bands=8, classes=3, **kw):
    base = dict(
        stage_depths=(1, 0, 1, 1),
        windows=(2, 2, 2, 2),
        heads=(2, 2, 2, 2),
        mlp_ratio=2,
        drop_rate=0.0,
        embed_dim=8,
        block=block,
        bands=bands,
        classes=classes,
        channel_attention_reduction=4,
    )
    base.update(kw)
    return ModelConfig(**base)


class TestTrainLoop:
    def test_loss_decreases_and_history_shape(self):
        _, ps, split = tiny_problem()
        cfg = tiny_cfg()
        tc = TrainConfig(epochs=6, lr=3e-3, batch_size=16, seed=1, patience=20)
        result = train(cfg, ps, split, tc)
        assert len(result.history) <= tc.epochs
        assert result.history[-1][1] < result.history[0][1]

    def test_zero_lr_freezes_parameters(self):
        _, ps, split = tiny_problem(seed=2)
        cfg = tiny_cfg()
        tc = TrainConfig(epochs=3, lr=0.0, batch_size=16, seed=1, patience=20)
        result = train(cfg, ps, split, tc)
        losses = [row[1] for row in result.history]
        assert max(losses) - min(losses) < 1e-7

    def test_reproducible_bit_exact(self):
        _, ps, split = tiny_problem(seed=3)
        cfg = tiny_cfg()
        tc = TrainConfig(epochs=3, lr=1e-3, batch_size=16, seed=7, patience=20)
        a = train(cfg, ps, split, tc)
        b = train(cfg, ps, split, tc)
        assert a.history == b.history
        for k in a.best_arrays:
            assert np.array_equal(a.best_arrays[k], b.best_arrays[k])

    def test_early_stopping_fires(self):
        _, ps, split = tiny_problem(seed=4)
        cfg = tiny_cfg()
        tc = TrainConfig(epochs=50, lr=0.0, batch_size=32, seed=1, patience=2)
        result = train(cfg, ps, split, tc)
        assert result.stopped_early
        assert len(result.history) < 50

    def test_evaluate_consistency_and_map(self):
        cube, ps, split = tiny_problem(seed=5)
        cfg = tiny_cfg()
        tc = TrainConfig(epochs=2, lr=1e-3, batch_size=16, seed=1, patience=20)
        result = train(cfg, ps, split, tc)
        metrics, pred_map = evaluate(
            result.model, ps, split.test, map_shape=cube.labels.shape
        )
        again = compute_metrics(metrics.confusion)
        assert metrics.oa == again.oa and metrics.kappa == again.kappa
        assert pred_map.shape == cube.labels.shape
        coords = ps.coords[split.test]
        assert (pred_map[coords[:, 0], coords[:, 1]] >= 1).all()
        untouched = np.ones(cube.labels.shape, dtype=bool)
        untouched[coords[:, 0], coords[:, 1]] = False
        assert pred_map[untouched].max(initial=0) == 0

    def test_memorization_sanity(self):
        # a model evaluated on its own training split of an easy problem
        _, ps, split = tiny_problem(seed=6)
        cfg = tiny_cfg()
        tc = TrainConfig(epochs=30, lr=3e-3, batch_size=16, seed=2, patience=30)
        result = train(cfg, ps, split, tc)
        metrics, _ = evaluate(result.model, ps, split.train)
        assert metrics.oa >= 0.9
