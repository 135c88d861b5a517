"""Encoder/decoder forward passes, parameter store, checkpoints, Adam."""

import math

import numpy as np
import pytest

from stcvae import autodiff as ad
from stcvae.gradcheck import grad_check
from stcvae.models import (
    ConvSpec,
    MlpSpec,
    ModelError,
    decode,
    encode,
    init_params,
    make_spec,
    param_count,
    param_shapes,
    reconstruction_log_likelihood,
    reparameterize,
)
from stcvae.optim import DivergenceError, adam_step
from stcvae.params import (
    CheckpointError,
    ParamStore,
    load_checkpoint,
    save_checkpoint,
)

MLP = MlpSpec(input_shape=(8, 8, 1), latent_dim=4, neuron_num=16, layers=1)
CONV = ConvSpec(input_shape=(64, 64, 1), latent_dim=6, neuron_num=32, layers=2)


def zero_store(spec) -> ParamStore:
    return ParamStore(
        {k: np.zeros(s, dtype=np.float32) for k, s in param_shapes(spec).items()}
    )


class TestSpecs:
    def test_conv_requires_64(self):
        with pytest.raises(ModelError, match="64x64"):
            ConvSpec(input_shape=(32, 32, 1), latent_dim=4, neuron_num=8)

    def test_make_spec_dispatch(self):
        assert isinstance(make_spec("mlp", (8, 8, 1), 4, 16, 1), MlpSpec)
        assert isinstance(make_spec("conv", (64, 64, 1), 4, 16, 2), ConvSpec)
        with pytest.raises(ModelError, match="unknown arch"):
            make_spec("transformer", (8, 8, 1), 4, 16, 1)

    def test_param_count_matches_manifest(self):
        for spec in (MLP, CONV):
            shapes = param_shapes(spec)
            assert param_count(spec) == sum(
                int(np.prod(s)) for s in shapes.values()
            )

    def test_param_count_is_deterministic_in_spec(self):
        a = param_count(MlpSpec((8, 8, 1), 4, 16, 1))
        b = param_count(MlpSpec((8, 8, 1), 4, 16, 1))
        assert a == b
        assert param_count(MlpSpec((8, 8, 1), 4, 32, 1)) > a


class TestEncodeDecode:
    def test_zero_params_give_zero_posterior(self):
        store = zero_store(MLP)
        x = np.random.default_rng(0).uniform(size=(5, 64)).astype(np.float32)
        mu, lv = encode(MLP, store, x)
        np.testing.assert_array_equal(mu.data, 0.0)
        np.testing.assert_array_equal(lv.data, 0.0)

    def test_encode_deterministic(self):
        store = init_params(MLP, seed=1)
        x = np.random.default_rng(1).uniform(size=(3, 64)).astype(np.float32)
        a = encode(MLP, store, x)[0].data
        b = encode(MLP, store, x)[0].data
        np.testing.assert_array_equal(a, b)

    def test_encode_accepts_shaped_input(self):
        store = init_params(MLP, seed=2)
        x = np.random.default_rng(2).uniform(size=(3, 8, 8, 1)).astype(np.float32)
        mu, lv = encode(MLP, store, x)
        assert mu.shape == (3, 4) and lv.shape == (3, 4)

    def test_encode_shape_mismatch(self):
        store = init_params(MLP, seed=3)
        with pytest.raises(ModelError, match="pixels"):
            encode(MLP, store, np.zeros((2, 63), dtype=np.float32))

    def test_zero_params_decode_gives_half_likelihood(self):
        store = zero_store(MLP)
        z = np.zeros((4, 4), dtype=np.float32)
        logits = decode(MLP, store, z)
        np.testing.assert_array_equal(logits.data, 0.0)
        x = np.random.default_rng(3).uniform(size=(4, 64)).astype(np.float32)
        recon = reconstruction_log_likelihood(logits, x)
        assert float(recon.data) == pytest.approx(64 * math.log(0.5), rel=1e-6)

    def test_decode_latent_width_checked(self):
        store = init_params(MLP, seed=4)
        with pytest.raises(ModelError, match="latents"):
            decode(MLP, store, np.zeros((2, 5), dtype=np.float32))

    def test_conv_roundtrip_shapes(self):
        store = init_params(CONV, seed=5)
        x = np.random.default_rng(5).uniform(size=(2, 64, 64, 1)).astype(np.float32)
        mu, lv = encode(CONV, store, x)
        assert mu.shape == (2, 6)
        logits = decode(CONV, store, mu.data)
        assert logits.shape == (2, 64 * 64)

    def test_mlp_encoder_gradient_matches_fd(self):
        rng = np.random.default_rng(6)
        x = rng.uniform(size=(3, 64))
        store = init_params(MLP, seed=6, dtype=np.float64)

        def loss_fn(tensors):
            mu, lv = encode(MLP, tensors, x)
            return (mu * mu).sum() + (lv * lv).sum()

        report = grad_check(loss_fn, store.arrays, n_coords=80, seed=0)
        assert report.max_rel_err <= 1e-6

    def test_decoder_recon_gradient_matches_fd(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(size=(3, 64))
        z = rng.standard_normal((3, 4))
        store = init_params(MLP, seed=7, dtype=np.float64)

        def loss_fn(tensors):
            return -reconstruction_log_likelihood(decode(MLP, tensors, z), x)

        report = grad_check(loss_fn, store.arrays, n_coords=80, seed=1)
        assert report.max_rel_err <= 1e-4


class TestReparameterize:
    def test_zero_noise_returns_mean(self):
        mu = np.array([[1.0, -2.0]])
        z = reparameterize(mu, np.zeros((1, 2)), np.zeros((1, 2)))
        np.testing.assert_array_equal(z.data, mu)

    def test_standard_posterior_returns_noise(self):
        noise = np.array([[0.3, -0.7]])
        z = reparameterize(np.zeros((1, 2)), np.zeros((1, 2)), noise)
        np.testing.assert_allclose(z.data, noise)

    def test_scale_example(self):
        z = reparameterize(
            np.array([[1.0]]), np.array([[math.log(4.0)]]), np.array([[0.5]])
        )
        assert float(z.data[0, 0]) == pytest.approx(2.0)


class TestCheckpoint:
    def test_roundtrip_bit_exact_forward(self, tmp_path):
        store = init_params(MLP, seed=8)
        grads = {k: np.full_like(v, 0.01) for k, v in store.arrays.items()}
        adam_step(store, grads, lr=1e-3)  # populate moments and step
        path = tmp_path / "model.stc"
        save_checkpoint(store, path, metadata={"note": "roundtrip"})
        loaded, meta = load_checkpoint(path)
        assert meta == {"note": "roundtrip"}
        assert loaded.step == store.step
        for k in store.arrays:
            np.testing.assert_array_equal(loaded.arrays[k], store.arrays[k])
            np.testing.assert_array_equal(loaded.m[k], store.m[k])
            np.testing.assert_array_equal(loaded.v[k], store.v[k])
        x = np.random.default_rng(8).uniform(size=(2, 64)).astype(np.float32)
        np.testing.assert_array_equal(
            encode(MLP, store, x)[0].data, encode(MLP, loaded, x)[0].data
        )

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.stc"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        store = init_params(MLP, seed=9)
        path = tmp_path / "model.stc"
        save_checkpoint(store, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-10])
        with pytest.raises(CheckpointError, match="payload short"):
            load_checkpoint(path)

    def test_rejects_float64_store(self, tmp_path):
        store = init_params(MLP, seed=10, dtype=np.float64)
        with pytest.raises(CheckpointError, match="float32"):
            save_checkpoint(store, tmp_path / "model.stc")


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        store = init_params(MLP, seed=11)
        before = {k: v.copy() for k, v in store.arrays.items()}
        adam_step(store, {k: np.zeros_like(v) for k, v in before.items()}, lr=0.1)
        for k in before:
            np.testing.assert_array_equal(store.arrays[k], before[k])

    def test_constant_gradient_step_approaches_lr_sign(self):
        store = ParamStore({"w": np.zeros(3, dtype=np.float32)})
        g = np.array([0.5, -2.0, 1e-3], dtype=np.float32)
        lr = 0.01
        prev = store.arrays["w"].copy()
        for _ in range(800):
            adam_step(store, {"w": g}, lr=lr)
        step = prev - store.arrays["w"]  # cumulative; check the last one
        last_before = store.arrays["w"].copy()
        adam_step(store, {"w": g}, lr=lr)
        last_step = last_before - store.arrays["w"]
        np.testing.assert_allclose(last_step, lr * np.sign(g), rtol=1e-3)
        assert np.all(np.abs(step) > 0)

    def test_two_runs_identical(self):
        rng = np.random.default_rng(12)
        grads = [rng.standard_normal(4).astype(np.float32) for _ in range(20)]

        def run():
            store = ParamStore({"w": np.ones(4, dtype=np.float32)})
            for g in grads:
                adam_step(store, {"w": g}, lr=0.05)
            return store.arrays["w"].copy()

        np.testing.assert_array_equal(run(), run())

    def test_nonfinite_gradient_raises(self):
        store = ParamStore({"w": np.ones(2, dtype=np.float32)})
        with pytest.raises(DivergenceError, match="w"):
            adam_step(store, {"w": np.array([1.0, np.inf], dtype=np.float32)}, lr=0.1)


class TestGradCheckHarness:
    def test_quadratic_loss_is_exact(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}

        def loss_fn(tensors):
            return (tensors["w"] * tensors["w"]).sum()

        report = grad_check(loss_fn, params, n_coords=3)
        assert report.max_rel_err <= 1e-7
        assert report.passed

    def test_report_names_worst_coordinate(self):
        params = {"a": np.ones(2), "b": np.ones(3)}

        def loss_fn(tensors):
            return (tensors["a"].sum() + ad.exp(tensors["b"]).sum()) * 1.0

        report = grad_check(loss_fn, params, n_coords=5)
        assert report.worst_param in ("a", "b")
        assert report.checked == 5
