"""Kernels, layers, model assembly, AdamW, schedules and parameter checkpoints"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gs_compositor.business.services.diagnostics_service import (
    GRAD_CASES, GRAD_TOLERANCE, run_grad_checks,
)
from gs_compositor.config.constants import MIN_LR
from gs_compositor.core.errors import ConfigError, DataIOError, DomainError, NumericalError
from gs_compositor.nn import functional as F
from gs_compositor.nn import layers as L
from gs_compositor.nn.gradcheck import grad_check
from gs_compositor.nn.model import (
    effective_window, init_params, m2d_forward, model_backward, model_forward,
)
from gs_compositor.nn.optim import Optimizer, adamw_step, clip_grad_norm, lr_schedule
from gs_compositor.nn.params import (
    ModelParams, check_compatible, load_params, params_from_bytes, params_to_bytes, save_params,
)
from tests.fixtures.sample_data import tiny_model


def _zero_layer_params(c: int):
    params = {
        "ln1.gamma": np.ones(c), "ln1.beta": np.zeros(c),
        "ln2.gamma": np.ones(c), "ln2.beta": np.zeros(c),
        "mlp.w1": np.zeros((c, 4 * c)), "mlp.b1": np.zeros(4 * c),
        "mlp.w2": np.zeros((4 * c, c)), "mlp.b2": np.zeros(c),
    }
    for proj in "qkvo":
        params[f"attn.w{proj}"] = np.zeros((c, c))
        params[f"attn.b{proj}"] = np.zeros(c)
    return params


def _linear_op(p, x):
    out, cache = F.linear_fwd(x, p["w"], p["b"])
    return out, lambda d: F.linear_bwd(d, cache)


class TestKernels:

    def test_layer_norm_example(self):
        out, _ = F.layer_norm_fwd(np.array([1.0, 2.0, 3.0]), np.ones(3), np.zeros(3))
        assert_allclose(out, [-1.2247, 0.0, 1.2247], atol=1e-4)

    def test_layer_norm_of_constant_is_beta(self):
        beta = np.array([0.1, 0.2, 0.3, 0.4])
        out, _ = F.layer_norm_fwd(np.full((2, 4), 7.0), np.ones(4), beta)
        assert_allclose(out, np.tile(beta, (2, 1)))

    def test_layer_norm_needs_channels(self):
        with pytest.raises(DomainError):
            F.layer_norm_fwd(np.zeros((2, 0)), np.zeros(0), np.zeros(0))

    def test_window_partition_layout(self):
        x = np.arange(16.0).reshape(1, 4, 4)
        windows = F.window_partition(x, 2)
        assert windows.shape == (4, 4, 1)
        assert_array_equal(windows[0, :, 0], [0, 1, 4, 5])
        assert_array_equal(windows[1, :, 0], [2, 3, 6, 7])
        assert_array_equal(F.window_merge(windows, 2, 4, 4), x)

    def test_window_must_divide(self):
        with pytest.raises(DomainError):
            F.window_partition(np.zeros((1, 4, 6)), 4)

    def test_conv_identity_kernel(self, rng):
        x = rng.standard_normal((2, 5, 5))
        w = np.zeros((2, 2, 3, 3))
        w[0, 0, 1, 1] = w[1, 1, 1, 1] = 1.0
        out, _ = F.conv3x3_fwd(x, w, np.zeros(2))
        assert_allclose(out, x)

    def test_gelu_values(self):
        assert F.gelu(np.array([0.0]))[0] == 0.0
        assert_allclose(F.gelu(np.array([1.0])), [0.8413447], atol=1e-6)

    def test_linear_gradient_is_exact(self, rng):
        params = {"w": rng.standard_normal((4, 3)), "b": rng.standard_normal(3)}
        assert grad_check(_linear_op, params, rng.standard_normal((5, 4))) < 1e-6


class TestLayers:

    def test_zero_mlp_returns_output_bias(self, rng):
        c = 4
        params = {"w1": np.zeros((c, 4 * c)), "b1": rng.standard_normal(4 * c),
                  "w2": np.zeros((4 * c, c)), "b2": np.array([1.0, 2.0, 3.0, 4.0])}
        out, _ = L.mlp_fwd(rng.standard_normal((3, c)), params)
        assert_allclose(out, np.tile(params["b2"], (3, 1)))

    def test_single_token_attention_is_value_projection(self, rng):
        c = 4
        params = {
            "wq": rng.standard_normal((c, c)), "bq": np.zeros(c),
            "wk": rng.standard_normal((c, c)), "bk": np.zeros(c),
            "wv": np.eye(c), "bv": np.zeros(c),
            "wo": np.eye(c), "bo": np.zeros(c),
        }
        x = rng.standard_normal((3, 1, c))
        out, _ = L.w_atten_fwd(x, params, heads=2)
        assert_allclose(out, x, atol=1e-12)

    def test_heads_must_divide_embedding(self):
        params = {k: np.zeros((3, 3)) if k.startswith("w") else np.zeros(3)
                  for k in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")}
        with pytest.raises(DomainError):
            L.w_atten_fwd(np.zeros((1, 4, 3)), params, heads=2)

    def test_zero_swin_layer_is_identity(self, rng):
        x = rng.standard_normal((4, 4, 4))
        out, _ = L.swin_layer_fwd(x, _zero_layer_params(4), heads=2, window=2)
        assert_allclose(out, x, atol=1e-12)

    def test_patch_embed_with_zero_weights_is_bias(self):
        bias = np.array([0.5, -1.0, 2.0])
        params = {
            "conv1.w": np.zeros((4, 7, 3, 3)), "conv1.b": np.zeros(4),
            "conv2.w": np.zeros((4, 4, 3, 3)), "conv2.b": np.zeros(4),
            "proj.w": np.zeros((16, 3)), "proj.b": bias,
        }
        out, _ = L.patch_embed_fwd(np.ones((7, 8, 8)), params, patch=2)
        assert out.shape == (3, 4, 4)
        assert_allclose(out, np.broadcast_to(bias[:, None, None], (3, 4, 4)))

    def test_unpatch_head_bias_is_per_channel(self, rng):
        bias = np.array([0.1, 0.2, 0.3])
        out, _ = L.unpatch_head_fwd(rng.standard_normal((4, 2, 3)), {"w": np.zeros((4, 12)), "b": bias}, patch=2)
        assert out.shape == (3, 4, 6)
        assert_allclose(out, np.broadcast_to(bias[:, None, None], (3, 4, 6)))


class TestModel:

    def test_init_is_seeded_float32(self):
        cfg = tiny_model()
        a, b = init_params(cfg, 0), init_params(cfg, 0)
        assert a.equals(b)
        assert not a.equals(init_params(cfg, 1))
        assert all(v.dtype == np.float32 for _, v in a.items())

    def test_zero_head_outputs_its_bias(self, rng):
        cfg = tiny_model()
        params = init_params(cfg, 0)
        params["head.w"] = np.zeros_like(params["head.w"])
        params["head.b"] = np.array([0.1, 0.2, 0.3], dtype=np.float32)
        out = model_forward(rng.standard_normal((7, 8, 8)).astype(np.float32), params, cfg).out
        assert_allclose(out, np.broadcast_to(np.array([0.1, 0.2, 0.3])[:, None, None], (3, 8, 8)), atol=1e-7)

    def test_m2d_shapes_and_upsampled_features(self, rng):
        cfg = tiny_model()
        h_hat, features = m2d_forward(rng.random((7, 8, 8)).astype(np.float32), init_params(cfg, 0), cfg)
        assert h_hat.shape == (3, 8, 8)
        assert features.shape == (cfg.embed_dim, 8, 8)
        assert_array_equal(features[:, 0, 0], features[:, 1, 1])

    def test_rejects_wrong_input_channels(self, rng):
        cfg = tiny_model()
        with pytest.raises(DomainError):
            model_forward(np.zeros((5, 8, 8)), init_params(cfg, 0), cfg)

    def test_window_shrinks_to_feature_map(self):
        cfg = tiny_model(window=4, patch=2)
        assert effective_window(cfg, 16, 16) == 4
        assert effective_window(cfg, 2, 2) == 1

    def test_backward_returns_every_parameter(self, rng):
        cfg = tiny_model()
        params = init_params(cfg, 0)
        output = model_forward(rng.random((7, 8, 8)), params, cfg)
        dx, grads = model_backward(np.ones_like(output.out), output.cache)
        assert dx.shape == (7, 8, 8)
        assert set(grads) == set(params.names())
        assert all(grads[name].shape == params[name].shape for name in grads)


class TestGradientChecks:

    def test_every_backward_passes(self, tmp_path):
        errors = run_grad_checks(seed=0, out_path=tmp_path / "grad_check.json")
        assert set(errors) == set(GRAD_CASES)
        assert max(errors.values()) < GRAD_TOLERANCE
        assert (tmp_path / "grad_check.json").exists()

    def test_swin_layer_within_tolerance(self, rng):
        op, params, x = GRAD_CASES["swin_layer"](rng)
        assert grad_check(op, params, x) < 1e-3

    def test_corrupted_backward_is_detected(self, rng):
        def doubled(p, x):
            out, backward = _linear_op(p, x)

            def corrupt(d):
                dx, grads = backward(d)
                return 2.0 * dx, {k: 2.0 * v for k, v in grads.items()}
            return out, corrupt

        params = {"w": rng.standard_normal((4, 3)), "b": rng.standard_normal(3)}
        assert grad_check(doubled, params, rng.standard_normal((5, 4))) > 0.3


class TestAdamW:

    def _single(self, value=1.0):
        return ModelParams({"theta": np.array([value], dtype=np.float32)})

    def test_first_step_moves_by_lr(self):
        params = adamw_step(self._single(), {"theta": np.array([0.5])}, lr=0.1, weight_decay=0.0)
        assert_allclose(params["theta"], [0.9], atol=1e-6)

    def test_weight_decay_is_decoupled(self):
        params = adamw_step(self._single(), {"theta": np.array([0.5])}, lr=0.1, weight_decay=0.05)
        assert_allclose(params["theta"], [1.0 - 0.1 * 0.05 - 0.1], atol=1e-6)

    def test_zero_gradient_only_decays(self):
        params = adamw_step(self._single(2.0), {"theta": np.array([0.0])}, lr=0.1, weight_decay=0.5)
        assert_allclose(params["theta"], [2.0 * (1.0 - 0.05)], atol=1e-6)

    def test_rejects_bad_gradients_without_updating(self):
        params = self._single()
        with pytest.raises(NumericalError):
            adamw_step(params, {"theta": np.array([np.nan])}, lr=0.1)
        assert params["theta"][0] == 1.0
        with pytest.raises(DomainError):
            adamw_step(params, {"other": np.array([1.0])}, lr=0.1)
        with pytest.raises(DomainError):
            adamw_step(params, {"theta": np.ones(2)}, lr=0.1)

    def test_optimizer_reports_clipped_norms(self):
        params = ModelParams({"a": np.zeros(2, dtype=np.float32)})
        optim = Optimizer(params, base_lr=0.1, warmup=0, total=10, clip_norm=1.0)
        stats = optim.step({"a": np.array([3.0, 4.0])}, step=0)
        assert stats["grad_norm_pre"] == pytest.approx(5.0)
        assert stats["grad_norm_post"] <= 1.0
        assert stats["lr"] == pytest.approx(0.1)


class TestSchedule:

    def test_warmup_and_cosine(self):
        assert lr_schedule(0, 1.0, 10, 110) == 0.0
        assert lr_schedule(5, 1.0, 10, 110) == pytest.approx(0.5)
        assert lr_schedule(10, 1.0, 10, 110) == pytest.approx(1.0)
        assert lr_schedule(60, 1.0, 10, 110) == pytest.approx(MIN_LR + 0.5 * (1.0 - MIN_LR))
        assert lr_schedule(110, 1.0, 10, 110) == pytest.approx(MIN_LR)

    def test_no_decay_phase(self):
        assert lr_schedule(5, 0.3, 5, 5) == 0.3

    def test_invalid_arguments(self):
        with pytest.raises(ConfigError):
            lr_schedule(0, 1.0, 20, 10)
        with pytest.raises(DomainError):
            lr_schedule(-1, 1.0, 1, 10)
        with pytest.raises(DomainError):
            lr_schedule(11, 1.0, 1, 10)


class TestClipping:

    def test_scales_to_max_norm(self):
        clipped, norm = clip_grad_norm({"a": np.array([3.0, 4.0])}, 1.0)
        assert norm == pytest.approx(5.0)
        assert math.sqrt(float(np.sum(clipped["a"] ** 2))) == pytest.approx(1.0, abs=1e-6)

    def test_small_gradients_unchanged(self):
        clipped, norm = clip_grad_norm({"a": np.array([0.3, 0.4])}, 1.0)
        assert norm == pytest.approx(0.5)
        assert_array_equal(clipped["a"], [0.3, 0.4])

    def test_non_finite_norm(self):
        with pytest.raises(NumericalError):
            clip_grad_norm({"a": np.array([np.inf])}, 1.0)


class TestParamsFile:

    def test_save_and_load(self, tmp_path):
        params = init_params(tiny_model(), 3)
        path = save_params(params, tmp_path / "model.mvcl")
        assert load_params(path).equals(params)

    def test_malformed_bytes(self):
        data = params_to_bytes(ModelParams({"a": np.ones((2, 3), dtype=np.float32)}))
        with pytest.raises(DataIOError):
            params_from_bytes(b"XXXX" + data[4:])
        with pytest.raises(DataIOError):
            params_from_bytes(data[:-2])
        with pytest.raises(DataIOError):
            params_from_bytes(data + b"\x00")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataIOError):
            load_params(tmp_path / "absent.mvcl")

    def test_compatibility(self):
        template = init_params(tiny_model(), 0)
        check_compatible(template.copy(), template.values)
        with pytest.raises(DataIOError):
            check_compatible(ModelParams({"head.b": np.zeros(3, dtype=np.float32)}), template.values)
        wider = init_params(tiny_model(embed_dim=16), 0)
        with pytest.raises(DataIOError):
            check_compatible(wider, template.values)
