"""WDSR and EDSR-baseline networks."""

import logging

import numpy as np
import pytest

from conftest import tiny_net_spec, zero_module
from src.autograd import Graph, Tensor, backward, mean
from src.errors import ConfigError
from src.models import BlockSpec, NetSpec, audit_resolution, build_model
from src.nn import pixel_shuffle


class TestNetSpec:

    def test_rejects_unknown_topology(self):
        with pytest.raises(ConfigError):
            tiny_net_spec(topology="srcnn")

    def test_rejects_unsupported_scale(self):
        with pytest.raises(ConfigError):
            tiny_net_spec(scale=5)

    def test_edsr_needs_vanilla_blocks(self):
        with pytest.raises(ConfigError):
            tiny_net_spec(topology="edsr-baseline", family="wdsr-a")

    def test_roundtrip(self):
        spec = tiny_net_spec(family="wdsr-b", normalization="batch-norm", scale=3)
        assert NetSpec.from_dict(spec.to_dict()) == spec


class TestWdsrNet:

    @pytest.mark.parametrize("scale", [2, 3, 4])
    def test_shape_contract(self, rng, scale):
        model = build_model(tiny_net_spec(scale=scale))
        out = model(Tensor(rng.uniform(0, 255, (1, 3, 12, 12))))
        assert out.shape == (1, 3, 12 * scale, 12 * scale)

    def test_narrow_pathway_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            build_model(tiny_net_spec(width=8, r=4, scale=4))
        assert "3*S^2 = 48" in caplog.text

    def test_wide_pathway_is_quiet(self, caplog):
        with caplog.at_level(logging.WARNING):
            build_model(tiny_net_spec(width=16, r=2, scale=2))
        assert "3*S^2" not in caplog.text

    def test_shape_at_24(self, rng):
        model = build_model(tiny_net_spec(scale=2))
        assert model(Tensor(rng.uniform(0, 255, (1, 3, 24, 24)))).shape == (1, 3, 48, 48)

    def test_zero_body_leaves_skip_path(self, rng):
        model = build_model(tiny_net_spec(n_blocks=2))
        for block in model.blocks:
            zero_module(block)
        zero_module(model.head)
        zero_module(model.tail)
        x = Tensor(rng.uniform(0, 255, (1, 3, 6, 6)))
        centered = x - model.rgb_mean
        skip = pixel_shuffle(model.skip(centered), 2) + model.rgb_mean
        np.testing.assert_allclose(model(x).data, skip.data, rtol=1e-6, atol=1e-4)

    def test_mean_roundtrip_through_zero_network(self):
        spec = tiny_net_spec(normalization="plain")
        model = build_model(spec)
        zero_module(model)
        mean_image = np.broadcast_to(np.asarray(spec.rgb_mean).reshape(1, 3, 1, 1), (1, 3, 5, 5))
        out = model(Tensor(mean_image)).data
        np.testing.assert_allclose(out, np.broadcast_to(mean_image[:, :, :1, :1], out.shape), rtol=1e-6)

    def test_every_conv_runs_at_lr_size(self, rng):
        model = build_model(tiny_net_spec(family="wdsr-b", n_blocks=2))
        model(Tensor(rng.uniform(0, 255, (1, 3, 7, 9))))
        for name, conv, resolution in model.conv_inventory():
            assert resolution == 1, name
            assert conv.last_input_hw == (7, 9), name
        assert audit_resolution(model) == []

    def test_seeded_init_is_deterministic(self):
        a = build_model(tiny_net_spec(), seed=3)
        b = build_model(tiny_net_spec(), seed=3)
        for (name, p), q in zip(a.named_parameters().items(), b.parameters()):
            np.testing.assert_array_equal(p.data, q.data, err_msg=name)

    def test_backward_reaches_every_parameter(self, rng):
        model = build_model(tiny_net_spec(family="wdsr-b", normalization="batch-norm"))
        out = model(Tensor(rng.uniform(0, 255, (2, 3, 4, 4))))
        backward(mean(out))
        missing = [n for n, p in model.named_parameters().items() if p.grad is None]
        assert missing == []

    def test_graph_has_two_pixel_shuffles(self, rng):
        model = build_model(tiny_net_spec())
        x = Tensor(rng.uniform(0, 255, (1, 3, 4, 4)), requires_grad=True)
        assert len(Graph.from_output(mean(model(x))).ops("pixel_shuffle")) == 2


class TestEdsrBaseline:

    def test_shape_contract(self, rng):
        model = build_model(tiny_net_spec(topology="edsr-baseline", family="vanilla", scale=3))
        assert model(Tensor(rng.uniform(0, 255, (1, 3, 5, 5)))).shape == (1, 3, 15, 15)

    def test_x4_uses_two_x2_stages(self, rng):
        model = build_model(tiny_net_spec(topology="edsr-baseline", family="vanilla", scale=4))
        assert model.stages == [2, 2]
        x = Tensor(rng.uniform(0, 255, (1, 3, 3, 3)), requires_grad=True)
        out = model(x)
        assert out.shape == (1, 3, 12, 12)
        assert len(Graph.from_output(mean(out)).ops("pixel_shuffle")) == 2

    def test_more_parameters_than_wdsr(self):
        block = BlockSpec(family="vanilla", w1=16)
        wdsr = build_model(NetSpec("wdsr", 2, 2, block))
        edsr = build_model(NetSpec("edsr-baseline", 2, 2, block))
        assert edsr.parameter_count() > wdsr.parameter_count()

    def test_table_one_counts(self):
        edsr = build_model(NetSpec("edsr-baseline", 2, 1, BlockSpec(family="vanilla", w1=64)))
        wdsr = build_model(NetSpec("wdsr", 2, 1, BlockSpec(family="wdsr-a", w1=32, r=4)))
        assert edsr.parameter_count() == 262_019
        assert wdsr.parameter_count() == 79_164
        assert abs(edsr.parameter_count() - 0.26e6) / 0.26e6 <= 0.15
        assert abs(wdsr.parameter_count() - 0.08e6) / 0.08e6 <= 0.15

    def test_upsampler_runs_above_lr(self):
        model = build_model(tiny_net_spec(topology="edsr-baseline", family="vanilla", scale=4))
        assert audit_resolution(model) == ["upsampler.1", "tail"]
