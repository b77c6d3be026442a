import json
import math

import numpy as np
import pytest

from newssim import _kernels
from newssim.errors import ArgumentError, DimensionError, EmptyDatasetError, NotFoundError
from newssim.features import MetricKind
from newssim.model import (
    DEFAULT_HIDDEN,
    PARAM_FIELDS,
    MomentumState,
    RegressionHead,
    TrainConfig,
    backward,
    forward,
    init_head,
    load_head,
    mse_loss,
    predict_pair,
    save_head,
    sgd_momentum_step,
    train,
)

SMALL = dict(input_dim=8, hidden=(5, 4))


def small_head(seed: int, metric: MetricKind = MetricKind.OVERALL) -> RegressionHead:
    return init_head(metric, SMALL["input_dim"], seed, SMALL["hidden"])


def loss_of(head, x, target) -> float:
    return (forward(head, x) - target) ** 2


def finite_diff_grads(head, x, target, eps=1e-5):
    """Central-difference gradient oracle, independent of backward()."""
    grads = []
    for name in PARAM_FIELDS:
        p = getattr(head, name)
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eps
            lp = loss_of(head, x, target)
            p[idx] = orig - eps
            lm = loss_of(head, x, target)
            p[idx] = orig
            g[idx] = (lp - lm) / (2 * eps)
        grads.append(g)
    return tuple(grads)


def max_rel_error(analytic, numeric) -> float:
    worst = 0.0
    for a, f in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


# ---------------------------------------------------------------------------
# init_head
# ---------------------------------------------------------------------------


class TestInitHead:
    def test_deterministic(self):
        h1, h2 = small_head(3), small_head(3)
        for name in PARAM_FIELDS:
            np.testing.assert_array_equal(getattr(h1, name), getattr(h2, name))

    def test_seeds_differ(self):
        assert not np.array_equal(small_head(1).W1, small_head(2).W1)

    def test_metrics_differ(self):
        a = init_head(MetricKind.GEOGRAPHY, 8, 1, (5, 4))
        b = init_head(MetricKind.TIME, 8, 1, (5, 4))
        assert not np.array_equal(a.W1, b.W1)

    def test_weight_bound(self):
        head = init_head(MetricKind.OVERALL, 768, 0)
        assert np.max(np.abs(head.W1)) <= 1 / math.sqrt(768)
        assert np.max(np.abs(head.W2)) <= 1 / math.sqrt(120)
        assert np.max(np.abs(head.W3)) <= 1 / math.sqrt(84)

    def test_biases_zero(self):
        head = small_head(0)
        assert not head.b1.any() and not head.b2.any() and not head.b3.any()

    def test_default_layer_sizes(self):
        head = init_head(MetricKind.STYLE, 768, 0)
        assert head.W1.shape == (120, 768)
        assert head.W2.shape == (84, 120)
        assert head.W3.shape == (1, 84)
        assert head.hidden == DEFAULT_HIDDEN


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


class TestForward:
    def test_zero_parameters_give_half(self):
        head = small_head(0)
        for name in PARAM_FIELDS:
            getattr(head, name)[:] = 0.0
        x = np.random.default_rng(0).normal(size=8)
        assert forward(head, x) == 0.5

    def test_output_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(1)
        for seed in range(25):
            head = small_head(seed)
            y = forward(head, rng.normal(size=8))
            assert 0.0 < y < 1.0

    def test_hand_computed_tiny_head(self):
        # 1 -> 2 -> 2 -> 1 net evaluated by hand:
        # a1 = [2.5, -1.5], h1 = [2.5, 0]
        # a2 = [2.5, 1.5],  h2 = [2.5, 1.5]
        # z  = 2*2.5 - 1*1.5 + 0.1 = 3.6
        head = RegressionHead(
            metric=MetricKind.OVERALL,
            input_dim=1,
            W1=np.array([[1.0], [-1.0]]),
            b1=np.array([0.5, 0.5]),
            W2=np.array([[1.0, 1.0], [0.5, -0.5]]),
            b2=np.array([0.0, 0.25]),
            W3=np.array([[2.0, -1.0]]),
            b3=np.array([0.1]),
        )
        expected = 1.0 / (1.0 + math.exp(-3.6))
        assert forward(head, np.array([2.0])) == pytest.approx(expected, abs=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionError):
            forward(small_head(0), np.zeros(9))


# ---------------------------------------------------------------------------
# mse_loss
# ---------------------------------------------------------------------------


class TestMseLoss:
    def test_zero_on_equal(self):
        assert mse_loss([0.1, 0.9], [0.1, 0.9]) == 0.0

    def test_example(self):
        assert mse_loss([0.2, 0.4], [0.0, 0.0]) == pytest.approx(0.10, abs=1e-15)

    def test_unit(self):
        assert mse_loss([0.0], [1.0]) == 1.0

    def test_symmetric_exact(self):
        rng = np.random.default_rng(0)
        a, b = rng.uniform(size=(2, 40))
        assert mse_loss(a, b) == mse_loss(b, a)

    @pytest.mark.parametrize("preds,targets", [([], []), ([1.0], [1.0, 2.0])])
    def test_bad_args(self, preds, targets):
        with pytest.raises(ArgumentError):
            mse_loss(preds, targets)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


class TestBackward:
    def test_gradient_check_100_cases(self):
        # Biases are randomized so no relu pre-activation sits on its kink,
        # where central differences stop being a valid derivative oracle.
        rng = np.random.default_rng(2024)
        worst = 0.0
        for seed in range(100):
            head = small_head(seed, metric=list(MetricKind)[seed % 7])
            head.b1[:] = rng.uniform(-0.3, 0.3, head.b1.shape)
            head.b2[:] = rng.uniform(-0.3, 0.3, head.b2.shape)
            head.b3[:] = rng.uniform(-0.3, 0.3, head.b3.shape)
            x = rng.normal(size=8)
            target = rng.uniform()
            analytic = backward(head, x, target)
            numeric = finite_diff_grads(head, x, target)
            worst = max(worst, max_rel_error(analytic, numeric))
        assert worst < 1e-4

    def test_zero_residual_zero_grads(self):
        head = small_head(5)
        x = np.random.default_rng(3).normal(size=8)
        target = forward(head, x)
        for g in backward(head, x, target):
            np.testing.assert_array_equal(g, np.zeros_like(g))

    def test_dead_relu_path(self):
        # x = 0 with zero biases leaves every first-layer unit at relu'(0)=0.
        head = small_head(6)
        grads = backward(head, np.zeros(8), 0.9)
        np.testing.assert_array_equal(grads[0], np.zeros_like(head.W1))

    def test_dim_mismatch(self):
        with pytest.raises(DimensionError):
            backward(small_head(0), np.zeros(4), 0.5)


# ---------------------------------------------------------------------------
# sgd_momentum_step
# ---------------------------------------------------------------------------


class TestSgdMomentumStep:
    def test_zero_momentum_is_plain_sgd(self):
        head = small_head(7)
        before = [p.copy() for p in head.params()]
        grads = tuple(np.full_like(p, 0.25) for p in head.params())
        sgd_momentum_step(head, grads, MomentumState.zeros(head), lr=0.1, momentum=0.0)
        for prev, now, g in zip(before, head.params(), grads):
            np.testing.assert_array_equal(now, prev - 0.1 * g)

    def test_two_steps_constant_gradient(self):
        # v1 = g, v2 = g(1 + mu): total displacement lr * g * (2 + mu).
        head = small_head(8)
        before = [p.copy() for p in head.params()]
        grads = tuple(np.full_like(p, 0.5) for p in head.params())
        state = MomentumState.zeros(head)
        mu, lr = 0.9, 0.01
        sgd_momentum_step(head, grads, state, lr, mu)
        sgd_momentum_step(head, grads, state, lr, mu)
        for prev, now, g in zip(before, head.params(), grads):
            np.testing.assert_allclose(now, prev - lr * g * (2 + mu), atol=1e-15)

    def test_zero_grad_zero_state_is_identity(self):
        head = small_head(9)
        before = [p.copy() for p in head.params()]
        grads = tuple(np.zeros_like(p) for p in head.params())
        sgd_momentum_step(head, grads, MomentumState.zeros(head), 0.01, 0.9)
        for prev, now in zip(before, head.params()):
            np.testing.assert_array_equal(now, prev)

    def test_shape_mismatch(self):
        head = small_head(10)
        grads = tuple(np.zeros((2, 2)) for _ in range(6))
        with pytest.raises(DimensionError):
            sgd_momentum_step(head, grads, MomentumState.zeros(head), 0.01, 0.9)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def make_examples(n: int, seed: int, dim: int = 8):
    rng = np.random.default_rng(seed)
    return [(rng.normal(size=dim), float(rng.uniform())) for _ in range(n)]


class TestTrain:
    def test_history_length_matches_epochs(self):
        trained, history = train(
            small_head(0), make_examples(6, 1), TrainConfig(epochs=8, seed=2)
        )
        assert len(history) == 8

    def test_bit_identical_reruns(self):
        config = TrainConfig(epochs=5, seed=3)
        h1, hist1 = train(small_head(1), make_examples(10, 4), config)
        h2, hist2 = train(small_head(1), make_examples(10, 4), config)
        assert hist1 == hist2
        for name in PARAM_FIELDS:
            np.testing.assert_array_equal(getattr(h1, name), getattr(h2, name))

    def test_input_head_unchanged_and_isolation(self):
        heads = {m: init_head(m, 8, 11, (5, 4)) for m in MetricKind}
        snapshots = {
            m: [p.copy() for p in h.params()] for m, h in heads.items()
        }
        train(heads[MetricKind.GEOGRAPHY], make_examples(6, 5), TrainConfig(epochs=3, seed=1))
        for m in MetricKind:
            for prev, now in zip(snapshots[m], heads[m].params()):
                np.testing.assert_array_equal(prev, now)

    def test_empty_dataset(self):
        with pytest.raises(EmptyDatasetError):
            train(small_head(0), [], TrainConfig(seed=0))

    def test_matches_step_composition(self):
        # train() must equal the public backward + sgd_momentum_step loop.
        examples = make_examples(5, 6)
        config = TrainConfig(epochs=3, seed=7, shuffle=False, momentum=0.9)
        trained, _ = train(small_head(2), examples, config)

        manual = small_head(2).copy()
        state = MomentumState.zeros(manual)
        for _ in range(config.epochs):
            for x, y in examples:
                grads = backward(manual, x, y)
                sgd_momentum_step(manual, grads, state, config.learning_rate, config.momentum)
        for name in PARAM_FIELDS:
            np.testing.assert_allclose(
                getattr(trained, name), getattr(manual, name), rtol=1e-12, atol=1e-15
            )

    def test_constant_target_convergence(self):
        target = 0.8
        rng = np.random.default_rng(8)
        examples = [(rng.normal(size=8), target) for _ in range(12)]
        trained, _ = train(small_head(3), examples, TrainConfig(epochs=200, seed=9))
        preds = [forward(trained, x) for x, _ in examples]
        assert np.mean(np.abs(np.array(preds) - target)) < 0.05

    def test_loss_history_is_prefix_stable(self):
        # First epochs of a longer run match a shorter run exactly.
        examples = make_examples(8, 10)
        _, short = train(small_head(4), examples, TrainConfig(epochs=3, seed=5))
        _, full = train(small_head(4), examples, TrainConfig(epochs=6, seed=5))
        assert full[:3] == short


# ---------------------------------------------------------------------------
# momentum equivalence against an independent straight-line implementation
# ---------------------------------------------------------------------------


def reference_plain_gd(head: RegressionHead, examples, lr: float, sweeps: int):
    """Textbook per-example gradient descent, written straight-line with no
    momentum machinery; returns parameters after every sweep."""
    W1, b1, W2, b2, W3, b3 = (p.copy() for p in head.params())
    trajectory = []
    for _ in range(sweeps):
        for x, t in examples:
            a1 = W1 @ x + b1
            h1 = np.maximum(a1, 0.0)
            a2 = W2 @ h1 + b2
            h2 = np.maximum(a2, 0.0)
            z = (W3 @ h2)[0] + b3[0]
            y = 1.0 / (1.0 + np.exp(-z))
            dz = 2.0 * (y - t) * y * (1.0 - y)
            gb3 = np.array([dz])
            gW3 = dz * h2.reshape(1, -1)
            dh2 = dz * W3[0]
            da2 = np.where(a2 > 0.0, dh2, 0.0)
            gW2 = np.outer(da2, h1)
            dh1 = W2.T @ da2
            da1 = np.where(a1 > 0.0, dh1, 0.0)
            gW1 = np.outer(da1, x)
            W1 = W1 - lr * gW1
            b1 = b1 - lr * da1
            W2 = W2 - lr * gW2
            b2 = b2 - lr * da2
            W3 = W3 - lr * gW3
            b3 = b3 - lr * gb3
        trajectory.append((W1.copy(), b1.copy(), W2.copy(), b2.copy(), W3.copy(), b3.copy()))
    return trajectory


class TestMomentumEquivalence:
    def test_zero_momentum_bit_matches_plain_gd(self, monkeypatch):
        # Production training with momentum=0 must reproduce plain gradient
        # descent bit for bit (numpy backend: identical BLAS call sequence).
        examples = make_examples(3, 20)
        head = small_head(21)
        reference = reference_plain_gd(head, examples, lr=0.01, sweeps=10)

        kernels = _kernels.get_kernels("numpy")
        monkeypatch.setattr(_kernels, "_KERNELS", kernels)
        current = head
        for sweep in range(10):
            current, _ = train(
                current, examples,
                TrainConfig(learning_rate=0.01, momentum=0.0, epochs=1, seed=0, shuffle=False),
            )
            for got, want in zip(current.params(), reference[sweep]):
                np.testing.assert_array_equal(got, want)

    def test_backends_agree(self):
        # numba departs from numpy only through one-ulp scalar exp wobble.
        try:
            numba_kernels = _kernels.get_kernels("numba")
        except ImportError:
            pytest.skip("numba unavailable")
        numpy_kernels = _kernels.get_kernels("numpy")
        examples = make_examples(6, 22)
        head = small_head(23)
        X = np.vstack([x for x, _ in examples])
        Y = np.asarray([y for _, y in examples])
        orders = np.tile(np.arange(6, dtype=np.int64), (4, 1))

        results = []
        for kernels in (numba_kernels, numpy_kernels):
            h = head.copy()
            hist = kernels["train_epochs"](*h.params(), X, Y, orders, 0.01, 0.9)
            results.append((h, hist))
        (h_nb, hist_nb), (h_np, hist_np) = results
        np.testing.assert_allclose(hist_nb, hist_np, rtol=1e-9, atol=1e-12)
        for name in PARAM_FIELDS:
            np.testing.assert_allclose(
                getattr(h_nb, name), getattr(h_np, name), rtol=1e-9, atol=1e-12
            )


# ---------------------------------------------------------------------------
# predict_pair + checkpoints
# ---------------------------------------------------------------------------


class TestPredictPair:
    def make_bundles(self):
        from newssim.features import FeatureBundle

        return (
            {m: FeatureBundle(m, ["alpha beta"], False) for m in MetricKind},
            {m: FeatureBundle(m, ["beta gamma"], False) for m in MetricKind},
        )

    def test_zeroed_heads_score_half(self):
        from newssim.embedding import StubProvider

        provider = StubProvider(dim=8, seed=1)
        heads = {}
        for m in MetricKind:
            head = init_head(m, 16, 0, (5, 4))
            for name in PARAM_FIELDS:
                getattr(head, name)[:] = 0.0
            heads[m] = head
        b1, b2 = self.make_bundles()
        scores = predict_pair(heads, b1, b2, provider)
        assert set(scores) == set(MetricKind)
        assert all(v == 0.5 for v in scores.values())

    def test_deterministic_and_asymmetric(self):
        from newssim.embedding import StubProvider

        provider = StubProvider(dim=8, seed=1)
        heads = {m: init_head(m, 16, 3, (5, 4)) for m in MetricKind}
        b1, b2 = self.make_bundles()
        s1 = predict_pair(heads, b1, b2, provider)
        s2 = predict_pair(heads, b1, b2, provider)
        assert s1 == s2
        swapped = predict_pair(heads, b2, b1, provider)
        assert any(s1[m] != swapped[m] for m in MetricKind)

    def test_missing_head(self):
        heads = {m: init_head(m, 16, 3, (5, 4)) for m in list(MetricKind)[:-1]}
        b1, b2 = self.make_bundles()
        with pytest.raises(NotFoundError):
            predict_pair(heads, b1, b2, None)


class TestCheckpoints:
    def test_round_trip_preserves_predictions(self, tmp_path):
        head, history = train(
            small_head(12), make_examples(6, 13), TrainConfig(epochs=2, seed=14)
        )
        path = save_head(tmp_path / "h.json", head, TrainConfig(epochs=2, seed=14), history)
        loaded, config_echo, loaded_history = load_head(path)

        rng = np.random.default_rng(15)
        for _ in range(20):
            x = rng.normal(size=8)
            assert abs(forward(loaded, x) - forward(head, x)) < 1e-9
        assert loaded_history == history
        assert config_echo["epochs"] == 2
        assert loaded.metric is head.metric

    def test_round_trip_is_exact(self, tmp_path):
        head = small_head(16)
        path = save_head(tmp_path / "h.json", head)
        loaded, _, _ = load_head(path)
        for name in PARAM_FIELDS:
            np.testing.assert_array_equal(getattr(loaded, name), getattr(head, name))

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(NotFoundError):
            load_head(tmp_path / "none.json")

    def test_file_is_json_with_metric(self, tmp_path):
        path = save_head(tmp_path / "h.json", small_head(17))
        payload = json.loads(path.read_text())
        assert payload["metric"] == "overall"
        assert payload["input_dim"] == 8
