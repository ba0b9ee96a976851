"""Convolution, pixel shuffle, weight normalization and batch normalization."""

import numpy as np
import pytest

from src.autograd import Tensor, backward, mean, total
from src.errors import DimensionError, ModeError, NumericalError
from src.nn import (
    BatchNormState,
    Conv2dParams,
    ConvLayer,
    WeightNormParams,
    batch_norm_infer,
    batch_norm_train,
    conv2d,
    pixel_shuffle,
    pixel_unshuffle,
    weight_norm_effective,
)


def naive_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Six nested loops over zero-padded input."""
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((n, cout, h, wd))
    for i in range(n):
        for o in range(cout):
            for y in range(h):
                for xx in range(wd):
                    acc = b[o]
                    for c in range(cin):
                        for dy in range(kh):
                            for dx in range(kw):
                                sy, sx = y + dy - ph, xx + dx - pw
                                if 0 <= sy < h and 0 <= sx < wd:
                                    acc += x[i, c, sy, sx] * w[o, c, dy, dx]
                    out[i, o, y, xx] = acc
    return out


def conv_params(w, b, dtype=np.float64) -> Conv2dParams:
    return Conv2dParams(Tensor(w, requires_grad=True, dtype=dtype), Tensor(b, requires_grad=True, dtype=dtype))


class TestConv2d:

    def test_ones_kernel_counts_neighbours(self):
        out = conv2d(Tensor(np.ones((1, 1, 3, 3))), conv_params(np.ones((1, 1, 3, 3)), np.zeros(1)))
        assert out.data[0, 0, 1, 1] == 9
        assert out.data[0, 0, 0, 0] == 4
        assert out.data[0, 0, 0, 1] == 6

    def test_pointwise_scaling(self, rng):
        x = rng.standard_normal((1, 1, 4, 5))
        out = conv2d(Tensor(x, dtype=np.float64), conv_params(np.full((1, 1, 1, 1), 2.0), np.zeros(1)))
        np.testing.assert_allclose(out.data, 2 * x)

    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_matches_naive_oracle(self, rng, k):
        x = rng.standard_normal((2, 3, 5, 5))
        w = rng.standard_normal((4, 3, k, k))
        b = rng.standard_normal(4)
        out = conv2d(Tensor(x, dtype=np.float64), conv_params(w, b))
        assert np.max(np.abs(out.data - naive_conv(x, w, b))) <= 1e-5

    def test_matches_oracle_on_random_shapes(self, rng):
        for _ in range(4):
            n, cin, cout = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
            h, w_ = rng.integers(1, 6), rng.integers(1, 6)
            k = int(rng.choice([1, 3, 5]))
            x = rng.standard_normal((n, cin, h, w_))
            w = rng.standard_normal((cout, cin, k, k))
            b = rng.standard_normal(cout)
            out = conv2d(Tensor(x, dtype=np.float64), conv_params(w, b))
            assert np.max(np.abs(out.data - naive_conv(x, w, b))) <= 1e-5

    def test_bias_gradient_is_output_grad_sum(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 4)), dtype=np.float64)
        p = conv_params(rng.standard_normal((5, 3, 3, 3)), np.zeros(5))
        backward(total(conv2d(x, p)))
        np.testing.assert_allclose(p.bias.grad, np.full(5, 2 * 4 * 4))

    def test_homogeneous_without_bias(self, rng):
        x = rng.standard_normal((2, 3, 5, 5))
        p = conv_params(rng.standard_normal((4, 3, 3, 3)), np.zeros(4))
        base = conv2d(Tensor(x, dtype=np.float64), p).data
        for a in (-2.5, 0.0, 3.0):
            scaled = conv2d(Tensor(a * x, dtype=np.float64), p).data
            np.testing.assert_allclose(scaled, a * base, rtol=1e-12, atol=1e-12)

    def test_channel_mismatch(self, rng):
        with pytest.raises(DimensionError):
            conv2d(Tensor(np.zeros((1, 2, 4, 4))), conv_params(np.zeros((3, 3, 3, 3)), np.zeros(3)))

    def test_even_kernel_rejected(self):
        with pytest.raises(DimensionError):
            conv_params(np.zeros((1, 1, 2, 2)), np.zeros(1))


class TestPixelShuffle:

    def test_index_formula(self):
        x = Tensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1, 1))
        np.testing.assert_array_equal(pixel_shuffle(x, 2).data[0, 0], [[1.0, 2.0], [3.0, 4.0]])

    @pytest.mark.parametrize("s", [2, 3, 4])
    def test_bijection(self, rng, s):
        x = rng.standard_normal((2, 3 * s * s, 3, 4))
        shuffled = pixel_shuffle(Tensor(x, dtype=np.float64), s)
        assert shuffled.shape == (2, 3, 3 * s, 4 * s)
        np.testing.assert_array_equal(pixel_unshuffle(shuffled, s).data, x)

    def test_general_element(self, rng):
        s = 3
        x = rng.standard_normal((1, 2 * s * s, 2, 2))
        out = pixel_shuffle(Tensor(x, dtype=np.float64), s).data
        n, c, h, w, dy, dx = 0, 1, 1, 0, 2, 1
        assert out[n, c, s * h + dy, s * w + dx] == x[n, c * s * s + dy * s + dx, h, w]

    def test_backward_is_inverse_permutation(self, rng):
        x = Tensor(rng.standard_normal((1, 8, 2, 2)), requires_grad=True, dtype=np.float64)
        weights = rng.standard_normal((1, 2, 4, 4))
        backward(total(pixel_shuffle(x, 2) * Tensor(weights, dtype=np.float64)))
        np.testing.assert_array_equal(x.grad, pixel_unshuffle(Tensor(weights, dtype=np.float64), 2).data)

    def test_output_is_a_permutation(self, rng):
        x = rng.integers(0, 5, (2, 18, 3, 4)).astype(np.float64)
        out = pixel_shuffle(Tensor(x, dtype=np.float64), 3).data
        np.testing.assert_array_equal(np.sort(out, axis=None), np.sort(x, axis=None))

    def test_bad_channel_count(self):
        with pytest.raises(DimensionError):
            pixel_shuffle(Tensor(np.zeros((1, 5, 2, 2))), 2)


class TestWeightNorm:

    def test_three_four_five(self):
        p = WeightNormParams(
            v=Tensor(np.array([3.0, 4.0]).reshape(1, 2, 1, 1), requires_grad=True, dtype=np.float64),
            g=Tensor([10.0], requires_grad=True, dtype=np.float64),
            bias=Tensor([0.0], requires_grad=True, dtype=np.float64),
        )
        np.testing.assert_allclose(weight_norm_effective(p).data.reshape(-1), [6.0, 8.0])

    def test_identity_reparameterization(self, rng):
        w = rng.standard_normal((4, 3, 3, 3))
        p = WeightNormParams.from_weight(w, np.zeros(4))
        np.testing.assert_allclose(weight_norm_effective(p).data, w, rtol=1e-12)

    def test_norm_equals_g_on_random_parameterizations(self, rng):
        worst = 0.0
        for _ in range(1000):
            cout, cin, k = rng.integers(1, 5), rng.integers(1, 5), int(rng.choice([1, 3, 5]))
            v = rng.standard_normal((cout, cin, k, k)).astype(np.float32)
            g = rng.uniform(0.1, 5.0, cout).astype(np.float32)
            p = WeightNormParams(Tensor(v), Tensor(g), Tensor(np.zeros(cout)))
            w = weight_norm_effective(p).data.astype(np.float64)
            norms = np.sqrt((w.reshape(cout, -1) ** 2).sum(axis=1))
            worst = max(worst, float(np.max(np.abs(norms - g) / g)))
        assert worst <= 1e-5

    def test_conv_matches_plain_conv(self, rng):
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        norms = np.sqrt((w.reshape(4, -1) ** 2).sum(axis=1))
        p = WeightNormParams(Tensor(w, dtype=np.float64), Tensor(norms, dtype=np.float64), Tensor(b, dtype=np.float64))
        x = Tensor(rng.standard_normal((2, 3, 6, 6)), dtype=np.float64)
        wn_out = conv2d(x, Conv2dParams(weight_norm_effective(p), p.bias)).data
        np.testing.assert_allclose(wn_out, conv2d(x, conv_params(w, b)).data, rtol=1e-10, atol=1e-10)

    def test_zero_direction_raises(self):
        p = WeightNormParams(Tensor(np.zeros((2, 1, 1, 1))), Tensor([1.0, 1.0]), Tensor([0.0, 0.0]))
        with pytest.raises(NumericalError, match="zero norm"):
            weight_norm_effective(p)

    def test_grad_v_orthogonal_to_v(self, rng):
        v = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True, dtype=np.float64)
        g = Tensor(rng.uniform(0.5, 2, 3), requires_grad=True, dtype=np.float64)
        p = WeightNormParams(v, g, Tensor(np.zeros(3), dtype=np.float64))
        weights = Tensor(rng.standard_normal((3, 2, 3, 3)), dtype=np.float64)
        backward(total(weight_norm_effective(p) * weights))
        dots = (v.grad.reshape(3, -1) * v.data.reshape(3, -1)).sum(axis=1)
        np.testing.assert_allclose(dots, 0.0, atol=1e-10)


class TestBatchNorm:

    def test_two_values_normalize_to_plus_minus_one(self):
        s = BatchNormState.create(1, epsilon=1e-12, dtype=np.float64)
        x = Tensor(np.array([1.0, 3.0]).reshape(2, 1, 1, 1), dtype=np.float64)
        np.testing.assert_allclose(batch_norm_train(x, s).data.reshape(-1), [-1.0, 1.0], atol=1e-6)

    def test_constant_channel_gives_beta(self):
        s = BatchNormState.create(2, dtype=np.float64)
        s.beta.data[...] = [0.5, -2.0]
        x = Tensor(np.full((3, 2, 2, 2), 7.0), dtype=np.float64)
        out = batch_norm_train(x, s).data
        np.testing.assert_allclose(out[:, 0], 0.5)
        np.testing.assert_allclose(out[:, 1], -2.0)

    def test_train_output_has_beta_mean_and_gamma_variance(self, rng):
        s = BatchNormState.create(2, dtype=np.float64)
        s.gamma.data[...] = [2.0, 0.5]
        s.beta.data[...] = [1.0, -3.0]
        x = Tensor(rng.standard_normal((4, 2, 6, 6)) * 3 + 5, dtype=np.float64)
        out = batch_norm_train(x, s).data
        np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), [1.0, -3.0], atol=1e-6)
        np.testing.assert_allclose(out.var(axis=(0, 2, 3)), [4.0, 0.25], rtol=1e-4)

    def test_infer_converges_to_train_output(self, rng):
        s = BatchNormState.create(2, momentum=0.1, dtype=np.float64)

        def draw():
            return Tensor(rng.standard_normal((16, 2, 8, 8)) * 2 + 3, dtype=np.float64)

        def gap(x):
            train_out = batch_norm_train(x, s).data
            s.mode = "infer"
            infer_out = batch_norm_infer(x, s).data
            s.mode = "train"
            return float(np.mean(np.abs(train_out - infer_out)))

        early = gap(draw())
        for _ in range(200):
            batch_norm_train(draw(), s)
        late = gap(draw())
        assert early > 1.0
        assert late < 0.1
        np.testing.assert_allclose(s.running_mean, 3.0, atol=0.1)
        np.testing.assert_allclose(s.running_var, 4.0, rtol=0.1)

    def test_single_patch_train_and_infer_differ(self, rng):
        s = BatchNormState.create(2, dtype=np.float64)
        for _ in range(100):
            batch_norm_train(Tensor(rng.standard_normal((16, 2, 8, 8)) * 2 + 3, dtype=np.float64), s)
        patch = Tensor(rng.standard_normal((1, 2, 8, 8)) * 2 + 5, dtype=np.float64)
        train_out = batch_norm_train(patch, s).data
        s.mode = "infer"
        infer_out = batch_norm_infer(patch, s).data
        assert float(np.mean(np.abs(train_out - infer_out))) > 0.25

    def test_running_stats_update(self, rng):
        s = BatchNormState.create(3, momentum=0.1)
        assert not s.initialized
        data = rng.standard_normal((4, 3, 5, 5)) * 2 + 1
        batch_norm_train(Tensor(data), s)
        np.testing.assert_allclose(s.running_mean, 0.1 * data.mean(axis=(0, 2, 3)), rtol=1e-4)
        np.testing.assert_allclose(s.running_var, 0.9 + 0.1 * data.var(axis=(0, 2, 3)), rtol=1e-4)

    def test_infer_identity_stats(self, rng):
        s = BatchNormState.create(3, dtype=np.float64)
        s.running_mean, s.running_var, s.mode = np.zeros(3), np.ones(3), "infer"
        x = rng.standard_normal((2, 3, 4, 4))
        np.testing.assert_allclose(batch_norm_infer(Tensor(x, dtype=np.float64), s).data, x, atol=1e-4)

    def test_infer_never_mutates(self, rng):
        s = BatchNormState.create(3)
        s.running_mean, s.running_var, s.mode = np.ones(3, np.float32), np.full(3, 2.0, np.float32), "infer"
        batch_norm_infer(Tensor(rng.standard_normal((2, 3, 4, 4))), s)
        np.testing.assert_array_equal(s.running_mean, np.ones(3))
        np.testing.assert_array_equal(s.running_var, np.full(3, 2.0))

    def test_infer_before_any_training_is_an_error(self):
        s = BatchNormState.create(3)
        s.mode = "infer"
        with pytest.raises(ModeError):
            batch_norm_infer(Tensor(np.zeros((1, 3, 2, 2))), s)

    def test_mode_mismatch(self):
        s = BatchNormState.create(3)
        s.mode = "infer"
        with pytest.raises(ModeError):
            batch_norm_train(Tensor(np.zeros((1, 3, 2, 2))), s)

    def test_single_sample_rejected(self):
        with pytest.raises(DimensionError):
            batch_norm_train(Tensor(np.zeros((1, 3, 1, 1))), BatchNormState.create(3))

    def test_gradient_sums_to_zero_per_channel(self, rng):
        s = BatchNormState.create(2, dtype=np.float64)
        x = Tensor(rng.standard_normal((3, 2, 2, 2)), requires_grad=True, dtype=np.float64)
        backward(total(batch_norm_train(x, s) * Tensor(rng.standard_normal((3, 2, 2, 2)), dtype=np.float64)))
        np.testing.assert_allclose(x.grad.sum(axis=(0, 2, 3)), 0.0, atol=1e-10)


class TestConvLayer:

    @pytest.mark.parametrize("normalization,names", [
        ("plain", {"weight", "bias"}),
        ("weight-norm", {"v", "g", "bias"}),
        ("batch-norm", {"weight", "bias", "bn.gamma", "bn.beta"}),
    ])
    def test_parameterizations(self, normalization, names):
        layer = ConvLayer(3, 4, 3, normalization)
        assert set(layer.named_parameters()) == names

    def test_weight_norm_starts_at_plain_init(self):
        plain = ConvLayer(3, 4, 3, "plain", np.random.default_rng(7))
        wn = ConvLayer(3, 4, 3, "weight-norm", np.random.default_rng(7))
        np.testing.assert_allclose(wn.effective_weight().data, plain.effective_weight().data, rtol=1e-5)

    def test_init_bound(self):
        layer = ConvLayer(8, 4, 3, "plain", np.random.default_rng(0))
        assert np.abs(layer.params.weight.data).max() <= np.sqrt(1 / (8 * 9))
        np.testing.assert_array_equal(layer.params.bias.data, 0.0)

    def test_eval_switches_bn_mode(self, rng):
        layer = ConvLayer(3, 4, 3, "batch-norm")
        layer(Tensor(rng.standard_normal((2, 3, 4, 4))))
        layer.eval()
        assert layer.bn.mode == "infer"
        assert set(layer.named_buffers()) == {"bn.running_mean", "bn.running_var"}
        before = layer.bn.running_mean.copy()
        layer(Tensor(rng.standard_normal((1, 3, 4, 4))))
        np.testing.assert_array_equal(layer.bn.running_mean, before)

    def test_loss_decreases_under_gradient_step(self, rng):
        layer = ConvLayer(2, 2, 3, "weight-norm", rng)
        x = Tensor(rng.standard_normal((1, 2, 4, 4)))
        target = Tensor(rng.standard_normal((1, 2, 4, 4)))
        losses = []
        for _ in range(2):
            loss = mean((layer(x) - target) * (layer(x) - target))
            losses.append(loss.item())
            backward(loss)
            for p in layer.parameters():
                p.data -= 0.01 * p.grad
                p.zero_grad()
        assert losses[1] < losses[0]
