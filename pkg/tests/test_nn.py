"""Model core: shapes, loss, gradients (finite-difference oracle), SGD."""

import numpy as np
import pytest

from webfed import nn
from webfed.errors import ConfigError, DataError, DimensionError

SPEC = nn.model_spec()


def rng(seed):
    return np.random.Generator(np.random.Philox(key=seed))


def random_batch(seed, b=2):
    r = rng(seed)
    x = r.random((b, 28, 28, 1)).astype(np.float32)
    y = nn.one_hot(r.integers(0, 10, b))
    return x, y


def fd_loss(weights, x, y):
    """Independent scalar loss used by the finite-difference oracle."""
    logits = nn.forward(weights, x, np.float64)
    logp = nn._log_softmax(logits)
    return float(-(y * logp).sum(dtype=np.float64) / x.shape[0])


def fd_gradient(weights, x, y, delta):
    """Central finite differences over every coordinate, float64 compute."""
    vec = weights.to_vector().astype(np.float64)
    grad = np.zeros_like(vec)
    for j in range(len(vec)):
        vp = vec.copy()
        vp[j] += delta
        vm = vec.copy()
        vm[j] -= delta
        lp = fd_loss(nn.WeightsBundle.from_vector(SPEC, vp.astype(np.float32)), x, y)
        lm = fd_loss(nn.WeightsBundle.from_vector(SPEC, vm.astype(np.float32)), x, y)
        grad[j] = (lp - lm) / (2 * delta)
    return grad


def per_tensor_rel_errors(analytic_vec, numeric_vec):
    out = {}
    off = 0
    for name, shape in SPEC.param_shapes:
        n = int(np.prod(shape))
        a = analytic_vec[off : off + n]
        b = numeric_vec[off : off + n]
        out[name] = np.linalg.norm(a - b) / max(
            np.linalg.norm(a), np.linalg.norm(b), 1e-12
        )
        off += n
    return out


def smooth_check_point(seed):
    """Seeded random point where the loss is differentiable at FD scale.

    Positive conv weights plus a ramped input keep every pre-activation
    strictly positive and give every pool window a uniquely ordered
    maximum with a wide margin, so a delta=1e-3 central difference never
    crosses a ReLU or argmax kink.
    """
    r = rng(seed)
    items = []
    for name, shape in SPEC.param_shapes:
        if name.startswith("conv") and name.endswith(".w"):
            items.append((name, r.uniform(0.05, 0.25, shape)))
        elif name.startswith("conv") and name.endswith(".b"):
            items.append((name, r.uniform(0.01, 0.05, shape)))
        else:
            items.append((name, r.uniform(-0.2, 0.2, shape)))
    w = nn.WeightsBundle(items)
    i = np.arange(28)
    ramp = (i[:, None] + i[None, :]).astype(np.float32) * 0.03
    x = r.random((2, 28, 28, 1)).astype(np.float32) * 0.05 + ramp[None, :, :, None]
    y = nn.one_hot(r.integers(0, 10, 2))
    return w, x, y


class TestModelSpec:
    def test_parameter_counts_by_hand(self):
        # conv1: 5*5*1*8 + 8, conv2: (5*5*8+1)*16, dense: 256*10 + 10
        counts = {name: int(np.prod(shape)) for name, shape in SPEC.param_shapes}
        assert counts["conv1.w"] + counts["conv1.b"] == 5 * 5 * 1 * 8 + 8 == 208
        assert counts["conv2.w"] + counts["conv2.b"] == (5 * 5 * 8 + 1) * 16 == 3216
        assert counts["dense1.w"] + counts["dense1.b"] == 256 * 10 + 10 == 2570
        assert SPEC.param_count == 208 + 3216 + 2570 == 5994

    def test_unknown_architecture_rejected(self):
        with pytest.raises(ConfigError):
            nn.model_spec("lenet-cifar-v9")


class TestInitWeights:
    def test_same_seed_is_bit_identical(self):
        a = nn.init_weights(SPEC, 1234)
        b = nn.init_weights(SPEC, 1234)
        assert a.bit_equal(b)

    def test_different_seeds_differ(self):
        assert not nn.init_weights(SPEC, 1).bit_equal(nn.init_weights(SPEC, 2))

    def test_biases_are_zero(self):
        w = nn.init_weights(SPEC, 7)
        for name in ("conv1.b", "conv2.b", "dense1.b"):
            assert np.all(w.tensor(name) == 0)

    def test_glorot_bounds(self):
        w = nn.init_weights(SPEC, 7)
        for name, fan_in, fan_out in (
            ("conv1.w", 25, 200),
            ("conv2.w", 200, 400),
            ("dense1.w", 256, 10),
        ):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            t = w.tensor(name)
            assert np.abs(t).max() <= bound
            assert np.abs(t).max() > 0.5 * bound  # actually fills the range


class TestForward:
    def test_zero_weights_zero_input_gives_zero_logits(self):
        w = nn.WeightsBundle([(n, np.zeros(s)) for n, s in SPEC.param_shapes])
        logits = nn.forward(w, np.zeros((1, 28, 28, 1), np.float32))
        assert logits.shape == (1, 10)
        assert np.all(logits == 0)

    def test_intermediate_shape_chain(self):
        # 28-5+1=24, 24/2=12, 12-5+1=8, 8/2=4, 4*4*16=256
        w = nn.init_weights(SPEC, 3)
        x, _ = random_batch(3, b=2)
        _, cache = nn._forward_cached(w, x, np.float32)
        _, _, z1, _, _, p1, z2, _, _, p2, flat = cache
        assert z1.shape == (2, 24, 24, 8)
        assert p1.shape == (2, 12, 12, 8)
        assert z2.shape == (2, 8, 8, 16)
        assert p2.shape == (2, 4, 4, 16)
        assert flat.shape == (2, 256)

    def test_batch_dimension_preserved(self):
        w = nn.init_weights(SPEC, 3)
        x, _ = random_batch(4, b=3)
        assert nn.forward(w, x).shape == (3, 10)

    def test_bad_shape_rejected(self):
        w = nn.init_weights(SPEC, 3)
        for bad in (np.zeros((2, 27, 28, 1)), np.zeros((28, 28, 1)), np.zeros((0, 28, 28, 1))):
            with pytest.raises(DimensionError):
                nn.forward(w, bad)

    def test_outputs_finite_on_random_inputs(self):
        w = nn.init_weights(SPEC, 5)
        x, _ = random_batch(6, b=8)
        assert np.isfinite(nn.forward(w, x)).all()


class TestLossAndGrad:
    def test_uniform_logits_loss_is_ln10(self):
        w = nn.WeightsBundle([(n, np.zeros(s)) for n, s in SPEC.param_shapes])
        x, y = random_batch(0, b=4)
        loss, _ = nn.loss_and_grad(w, x, y)
        assert loss == pytest.approx(np.log(10.0), abs=1e-6)

    def test_logit_gradient_is_softmax_minus_target_over_batch(self):
        # dL/db of the output layer equals the mean of (softmax - y).
        w = nn.init_weights(SPEC, 9)
        x, y = random_batch(9, b=5)
        logits = nn.forward(w, x)
        p = np.exp(nn._log_softmax(logits.astype(np.float64)))
        _, grads = nn.loss_and_grad(w, x, y)
        expected = (p - y).mean(axis=0)
        np.testing.assert_allclose(grads.tensor("dense1.b"), expected, atol=1e-6)

    def test_non_one_hot_labels_rejected(self):
        w = nn.init_weights(SPEC, 9)
        x, y = random_batch(9, b=3)
        bad_sum = y.copy()
        bad_sum[0, 0] = bad_sum[0, 1] = 1
        with pytest.raises(DataError):
            nn.loss_and_grad(w, x, bad_sum)
        with pytest.raises(DataError):
            nn.loss_and_grad(w, x, y * 0.5)
        with pytest.raises(DataError):
            nn.loss_and_grad(w, x, y[:, :9])

    def test_loss_positive(self):
        w = nn.init_weights(SPEC, 11)
        x, y = random_batch(11, b=6)
        loss, _ = nn.loss_and_grad(w, x, y)
        assert loss > 0

    def test_dead_paths_get_zero_gradient(self):
        # Negative conv weights + positive input -> all conv activations
        # are clipped at zero, so nothing upstream of the dense bias moves.
        items = []
        for name, shape in SPEC.param_shapes:
            if name.startswith("conv") and name.endswith(".w"):
                items.append((name, -0.1 * np.ones(shape, np.float32)))
            else:
                items.append((name, np.zeros(shape, np.float32)))
        w = nn.WeightsBundle(items)
        x = np.full((2, 28, 28, 1), 0.5, np.float32)
        y = nn.one_hot(np.array([3, 7]))
        _, grads = nn.loss_and_grad(w, x, y)
        for name in ("conv1.w", "conv1.b", "conv2.w", "conv2.b", "dense1.w"):
            assert np.all(grads.tensor(name) == 0), name
        assert np.any(grads.tensor("dense1.b") != 0)

    def test_gradient_matches_finite_differences_generic_point(self):
        # Generic random point: ReLU masks and pool routing are mixed.
        # delta is small so kink crossings pollute a negligible share of
        # coordinates; compare per-tensor l2 norms.
        w = nn.init_weights(SPEC, 0)
        x, y = random_batch(100, b=2)
        _, grads = nn.loss_and_grad(w, x, y, dtype=np.float64)
        numeric = fd_gradient(w, x, y, delta=1e-5)
        rels = per_tensor_rel_errors(grads.to_vector().astype(np.float64), numeric)
        assert max(rels.values()) < 1e-3, rels


class TestPoolingPrimitives:
    def test_maxpool_routes_gradient_to_argmax(self):
        x = np.array(
            [[1.0, 2.0, 5.0, 0.0], [3.0, 0.0, 1.0, 1.0],
             [0.0, 9.0, 2.0, 2.0], [8.0, 0.0, 2.0, 2.0]],
            np.float32,
        ).reshape(1, 4, 4, 1)
        out, idx = nn._maxpool_forward(x)
        np.testing.assert_array_equal(out[0, :, :, 0], [[3, 5], [9, 2]])
        dout = np.ones_like(out)
        dx = nn._maxpool_backward(dout, idx, x.shape)
        expected = np.zeros((4, 4))
        expected[1, 0] = expected[0, 2] = expected[2, 1] = 1
        expected[2, 2] = 1  # first of the four tied 2.0 entries in scan order
        np.testing.assert_array_equal(dx[0, :, :, 0], expected)


class TestSgdStep:
    def test_zero_eta_is_identity(self):
        w = nn.init_weights(SPEC, 13)
        _, grads = nn.loss_and_grad(w, *random_batch(13, b=2))
        assert nn.sgd_step(w, grads, 0.0).bit_equal(w)

    def test_hand_arithmetic(self):
        spec_small = [("dense1.b", (2,))]
        w = nn.WeightsBundle([("dense1.b", np.array([1.0, 2.0]))])
        g = nn.WeightsBundle([("dense1.b", np.array([0.5, -1.0]))])
        out = nn.sgd_step(w, g, 0.1)
        np.testing.assert_allclose(out.tensor("dense1.b"), [0.95, 2.1], rtol=1e-6)

    def test_two_half_steps_equal_one_double_step(self):
        # values chosen exactly representable in binary so equality is exact
        w = nn.WeightsBundle([("t", np.array([1.0, 2.0, -0.5]))])
        g = nn.WeightsBundle([("t", np.array([0.5, -1.0, 0.25]))])
        once = nn.sgd_step(w, g, 0.5)
        twice = nn.sgd_step(nn.sgd_step(w, g, 0.25), g, 0.25)
        assert once.bit_equal(twice)

    def test_inputs_unmodified(self):
        w = nn.init_weights(SPEC, 14)
        before = w.to_vector().copy()
        _, g = nn.loss_and_grad(w, *random_batch(14, b=2))
        nn.sgd_step(w, g, 0.1)
        np.testing.assert_array_equal(w.to_vector(), before)

    def test_structure_mismatch_rejected(self):
        w = nn.init_weights(SPEC, 15)
        g = nn.WeightsBundle([("other", np.zeros(3))])
        with pytest.raises(DimensionError):
            nn.sgd_step(w, g, 0.1)


class _ArrayDataset:
    def __init__(self, images, labels):
        self.images = images
        self.labels = labels


class TestEvaluate:
    def test_constant_predictor_on_balanced_set(self):
        # zero weights -> uniform logits -> argmax tie -> class 0
        w = nn.WeightsBundle([(n, np.zeros(s)) for n, s in SPEC.param_shapes])
        labels = np.repeat(np.arange(10), 5).astype(np.uint8)
        images = rng(20).random((50, 28, 28, 1)).astype(np.float32)
        acc, _ = nn.evaluate(w, _ArrayDataset(images, labels))
        assert acc == pytest.approx(0.1)

    def test_single_correct_sample(self):
        w = nn.init_weights(SPEC, 21)
        x = rng(21).random((1, 28, 28, 1)).astype(np.float32)
        pred = int(nn.forward(w, x).argmax())
        acc, _ = nn.evaluate(w, _ArrayDataset(x, np.array([pred], np.uint8)))
        assert acc == 1.0

    def test_matches_brute_force_recount(self):
        w = nn.init_weights(SPEC, 22)
        r = rng(22)
        images = r.random((50, 28, 28, 1)).astype(np.float32)
        labels = r.integers(0, 10, 50).astype(np.uint8)
        acc, loss = nn.evaluate(w, _ArrayDataset(images, labels), batch_size=7)
        hits = 0
        losses = []
        for i in range(50):
            logits = nn.forward(w, images[i : i + 1])[0]
            if int(np.argmax(logits)) == labels[i]:
                hits += 1
            z = logits.astype(np.float64)
            losses.append(-(z[labels[i]] - np.log(np.exp(z - z.max()).sum()) - z.max()))
        assert acc == hits / 50
        assert loss == pytest.approx(np.mean(losses), rel=1e-6)

    def test_empty_dataset_rejected(self):
        w = nn.init_weights(SPEC, 23)
        with pytest.raises(DataError):
            nn.evaluate(w, _ArrayDataset(np.zeros((0, 28, 28, 1), np.float32), np.zeros(0, np.uint8)))


class TestDeterminism:
    def test_k_steps_bit_identical(self):
        def run():
            w = nn.init_weights(SPEC, 31)
            r = rng(31)
            for _ in range(5):
                x = r.random((4, 28, 28, 1)).astype(np.float32)
                y = nn.one_hot(r.integers(0, 10, 4))
                _, g = nn.loss_and_grad(w, x, y)
                w = nn.sgd_step(w, g, 0.05)
            return w

        assert run().bit_equal(run())
