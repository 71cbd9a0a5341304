import numpy as np
import pytest

from ecct import autodiff as ad
from ecct.channel import bpsk_modulate
from ecct.codes import all_codewords, encode, load_code
from ecct.mask import build_mask
from ecct.model import (
    Checkpoint,
    ModelConfig,
    TrainSchedule,
    decode_block,
    decode_word,
    embed,
    forward,
    init_params,
    load_checkpoint,
    logits_to_soft_noise,
    parameter_count,
    train,
)
from ecct.transform import PreprocessedWord, hard_decision, preprocess


def tiny_config(**kw):
    base = dict(layers=2, dim=16, heads=2)
    base.update(kw)
    return ModelConfig(**base)


def fresh_checkpoint(code, config, seed=0):
    return train(code, config, TrainSchedule(epochs=0, minibatches_per_epoch=1), seed=seed)


class TestConfig:
    def test_dim_must_divide_heads(self):
        with pytest.raises(ValueError):
            ModelConfig(layers=1, dim=30, heads=8)

    def test_scale_modes(self):
        assert ModelConfig(layers=1, dim=32, heads=8).scale_value() == pytest.approx(2.0)
        assert ModelConfig(layers=1, dim=32, heads=8,
                           attn_scale="d").scale_value() == pytest.approx(np.sqrt(32))


class TestInit:
    def test_deterministic(self, hamming):
        cfg = tiny_config()
        a = init_params(hamming, cfg, np.random.default_rng(5))
        b = init_params(hamming, cfg, np.random.default_rng(5))
        assert set(a) == set(b)
        for name in a:
            assert (a[name].data == b[name].data).all()

    def test_parameter_count_closed_form(self, hamming):
        cfg = ModelConfig(layers=2, dim=32, heads=8)
        params = init_params(hamming, cfg, np.random.default_rng(0))
        s, d, n = 10, 32, 7
        per_layer = (4 * (d * d + d)      # q, k, v, o projections
                     + 2 * 2 * d          # two layer norms
                     + 2 * (d * 4 * d + 4 * d) + (4 * d * d + d))  # geglu
        expected = s * d + 2 * per_layer + 2 * d + (d + 1) + (s * n + n)
        assert parameter_count(params) == expected == 34350

    def test_embedding_scale(self):
        code = load_code("hamming_7_4")
        cfg = ModelConfig(layers=1, dim=128, heads=8)
        params = init_params(code, cfg, np.random.default_rng(3))
        std = params["embed.w"].data.std()
        assert abs(std - 1 / np.sqrt(128)) < 0.2 / np.sqrt(128)
        for p in params.values():
            assert np.isfinite(p.data).all()

    def test_norms_start_at_identity(self, hamming):
        params = init_params(hamming, tiny_config(), np.random.default_rng(0))
        assert (params["final_ln.gain"].data == 1).all()
        assert (params["final_ln.bias"].data == 0).all()


class TestEmbed:
    def test_zero_magnitude_collapses_to_origin(self, hamming, rng):
        params = init_params(hamming, tiny_config(), rng)
        pre = PreprocessedWord(magnitude=np.zeros(7, dtype=np.float32),
                               synd=np.zeros(3, dtype=np.uint8))
        phi = embed(pre, params["embed.w"])
        assert (phi.data[:7] == 0).all()

    def test_syndrome_sign(self, hamming, rng):
        params = init_params(hamming, tiny_config(), rng)
        w = params["embed.w"].data
        pre0 = PreprocessedWord(magnitude=np.ones(7, dtype=np.float32),
                                synd=np.array([0, 1, 0], dtype=np.uint8))
        phi = embed(pre0, params["embed.w"]).data
        assert phi[7] == pytest.approx(w[7])
        assert phi[8] == pytest.approx(-w[8])
        assert phi[9] == pytest.approx(w[9])

    def test_dot_products_scale_with_magnitudes(self, hamming, rng):
        params = init_params(hamming, tiny_config(), rng)
        w = params["embed.w"].data.astype(np.float64)
        mag = rng.uniform(0.1, 2.0, size=7).astype(np.float32)
        pre = PreprocessedWord(magnitude=mag, synd=np.zeros(3, dtype=np.uint8))
        phi = embed(pre, params["embed.w"]).data.astype(np.float64)
        for i in range(7):
            for j in range(7):
                expect = float(mag[i]) * float(mag[j]) * float(w[i] @ w[j])
                assert phi[i] @ phi[j] == pytest.approx(expect, rel=1e-4)


class TestForward:
    def test_output_shape_over_config_grid(self, hamming, rng):
        pre = preprocess(hamming.H, rng.normal(size=(3, 7)).astype(np.float32))
        for layers in (1, 3):
            for dim, heads in ((16, 2), (32, 8)):
                cfg = ModelConfig(layers=layers, dim=dim, heads=heads)
                params = init_params(hamming, cfg, np.random.default_rng(7))
                logits = forward(params, cfg, build_mask(hamming.H).additive(), pre)
                assert logits.data.shape == (3, 7)

    def test_permutation_consistency(self, hamming, rng):
        # the model has no position prior beyond the table, the mask, and the
        # head wiring: permuting all three together leaves logits unchanged
        cfg = tiny_config()
        params = init_params(hamming, cfg, np.random.default_rng(0))
        y = rng.normal(size=(4, 7)).astype(np.float32)
        pre = preprocess(hamming.H, y)
        add = build_mask(hamming.H).additive()
        base = forward(params, cfg, add, pre).data

        perm = np.random.default_rng(1).permutation(10)
        scale = np.concatenate(
            [pre.magnitude, 1.0 - 2.0 * pre.synd.astype(np.float32)], axis=-1)
        # feed the permuted per-position scales through the magnitude slot
        pre_p = PreprocessedWord(magnitude=scale[:, perm],
                                 synd=np.zeros((4, 0), dtype=np.uint8))
        params_p = dict(params)
        params_p["embed.w"] = ad.Tensor(params["embed.w"].data[perm], requires_grad=True)
        params_p["head.project.w"] = ad.Tensor(
            params["head.project.w"].data[perm], requires_grad=True)
        out = forward(params_p, cfg, add[np.ix_(perm, perm)], pre_p).data
        assert out == pytest.approx(base, abs=1e-5)

    def test_untrained_pipeline_integrity(self, hamming, rng):
        ckpt = fresh_checkpoint(hamming, tiny_config())
        y = bpsk_modulate(encode(hamming, [1, 0, 0, 1]))
        xhat = decode_word(ckpt, y)
        assert xhat.shape == (7,)
        assert np.isin(xhat, (0, 1)).all()

    def test_soft_noise_bridge(self):
        u = np.array([0.0, 30.0, -30.0])
        s = logits_to_soft_noise(u)
        assert s[0] == pytest.approx(0.0)
        assert s[1] == pytest.approx(-1.0, abs=1e-8)
        assert s[2] == pytest.approx(1.0, abs=1e-8)


class TestTraining:
    def test_zero_epochs_checkpoint(self, hamming):
        ckpt = fresh_checkpoint(hamming, tiny_config(), seed=3)
        assert ckpt.step == 0
        assert ckpt.loss_history.size == 0
        init = init_params(hamming, tiny_config(), np.random.default_rng(3))
        for name, p in ckpt.params.items():
            assert (p.data == init[name].data).all()

    def test_initial_loss_near_n_ln2(self, hamming):
        cfg = tiny_config()
        sched = TrainSchedule(epochs=1, minibatches_per_epoch=8, batch_size=64)
        ckpt = train(hamming, cfg, sched, seed=11)
        assert ckpt.loss_history[0] == pytest.approx(7 * np.log(2), rel=0.25)

    def test_short_training_reduces_loss(self, hamming):
        sched = TrainSchedule(epochs=1, minibatches_per_epoch=150, batch_size=64)
        ckpt = train(hamming, tiny_config(), sched, seed=2)
        assert ckpt.loss_history[-25:].mean() < ckpt.loss_history[:25].mean()

    def test_resume_is_bit_identical(self, hamming, tmp_path):
        cfg = tiny_config(layers=1)
        full = train(hamming, cfg, TrainSchedule(epochs=1, minibatches_per_epoch=30,
                                                 batch_size=32), seed=9)
        half = train(hamming, cfg, TrainSchedule(epochs=1, minibatches_per_epoch=30,
                                                 batch_size=32), seed=9,
                     stop_after_step=15)
        path = tmp_path / "half.npz"
        half.save(str(path))
        resumed = train(hamming, cfg, TrainSchedule(epochs=1, minibatches_per_epoch=30,
                                                    batch_size=32), seed=9,
                        resume_from=load_checkpoint(str(path)))
        for name in full.params:
            assert (full.params[name].data == resumed.params[name].data).all()
        assert (full.loss_history == resumed.loss_history).all()


class TestCheckpointIo:
    def test_round_trip_bit_exact(self, hamming, tmp_path):
        sched = TrainSchedule(epochs=1, minibatches_per_epoch=5, batch_size=16)
        ckpt = train(hamming, tiny_config(), sched, seed=21)
        path = tmp_path / "ckpt.npz"
        ckpt.save(str(path))
        back = load_checkpoint(str(path))
        assert back.config == ckpt.config
        assert back.schedule == ckpt.schedule
        assert back.step == ckpt.step
        assert back.seed == ckpt.seed
        assert (back.code.H == ckpt.code.H).all()
        assert (back.loss_history == ckpt.loss_history).all()
        for name in ckpt.params:
            assert (back.params[name].data == ckpt.params[name].data).all()
            assert (back.adam.m[name] == ckpt.adam.m[name]).all()
            assert (back.adam.v[name] == ckpt.adam.v[name]).all()
        assert back.rng_state == ckpt.rng_state

    def test_params_stored_single_precision(self, hamming, tmp_path):
        ckpt = fresh_checkpoint(hamming, tiny_config())
        assert all(p.data.dtype == np.float32 for p in ckpt.params.values())


class TestDecodeInvariance:
    def test_error_patterns_identical_across_codewords(self, hamming, rng):
        ckpt = fresh_checkpoint(hamming, tiny_config(), seed=4)
        cws = all_codewords(hamming)
        for _ in range(300):
            x = cws[rng.integers(16)]
            xs = bpsk_modulate(x)
            z = rng.normal(scale=0.7, size=7)
            err_x = decode_word(ckpt, xs + z) ^ x
            err_0 = decode_word(ckpt, 1.0 + xs * z)
            assert (err_x == err_0).all()

    def test_untrained_ber_close_to_hard_decision(self, hamming, rng):
        # near-zero logits make the soft noise a near-constant positive
        ckpt = fresh_checkpoint(hamming, tiny_config(), seed=8)
        sigma = 0.47  # about 6 dB at rate 4/7
        x = np.zeros((30000, 7), dtype=np.uint8)
        y = 1.0 + sigma * rng.standard_normal((30000, 7))
        ber_model = (decode_block(ckpt, y) != x).mean()
        ber_hard = (hard_decision(y) != x).mean()
        assert ber_model == pytest.approx(ber_hard, rel=0.10)


class TestMaskModes:
    def test_unmasked_mode_zero_mask(self, hamming):
        cfg = tiny_config(mask_mode="unmasked")
        ckpt = fresh_checkpoint(hamming, cfg)
        assert (ckpt.additive_mask() == 0).all()

    def test_masked_mode_uses_algorithm_mask(self, hamming):
        ckpt = fresh_checkpoint(hamming, tiny_config())
        add = ckpt.additive_mask()
        assert (add < 0).any()
        assert (add[build_mask(hamming.H).allow] == 0).all()
