import numpy as np
import pytest

from ecct import autodiff as ad
from ecct.autodiff import Tensor
from ecct.mask import MASK_SENTINEL, build_mask

from grad_check import max_relative_error, numerical_grad

GRAD_TOL = 1e-5


def params_from(rng, *shapes):
    return [ad.parameter(rng.normal(size=s), np.float64) for s in shapes]


class TestAffine:
    def test_identity(self, rng):
        x = ad.parameter(rng.normal(size=(4, 3)), np.float64)
        w = ad.parameter(np.eye(3), np.float64)
        b = ad.parameter(np.zeros(3), np.float64)
        assert ad.affine(x, w, b).data == pytest.approx(x.data)

    def test_scalar_hand_gradients(self):
        x = ad.parameter([[2.0]], np.float64)
        w = ad.parameter([[3.0]], np.float64)
        b = ad.parameter([1.0], np.float64)
        y = ad.sum_all(ad.affine(x, w, b))
        assert float(y.data) == pytest.approx(7.0)
        y.backward()
        assert float(x.grad) == pytest.approx(3.0)
        assert float(w.grad) == pytest.approx(2.0)
        assert float(b.grad) == pytest.approx(1.0)

    def test_gradients_match_finite_differences(self, rng):
        x, w, b = params_from(rng, (5, 4), (4, 6), (6,))
        coeff = rng.normal(size=(5, 6))

        def loss():
            return ad.sum_all(ad.mul(ad.affine(x, w, b), Tensor(coeff)))

        out = loss()
        out.backward()
        for p in (x, w, b):
            assert max_relative_error(p.grad, numerical_grad(loss, p)) < GRAD_TOL

    def test_shape_mismatch(self, rng):
        x, w, b = params_from(rng, (5, 4), (3, 6), (6,))
        with pytest.raises(ValueError):
            ad.affine(x, w, b)


class TestMaskedAttention:
    def test_dominant_key_concentrates(self):
        # one key aligned with the query and much larger: weight goes to 1
        q = Tensor(np.array([[[10.0, 0.0]] * 3]), requires_grad=False)
        k = Tensor(np.array([[[10.0, 0.0], [0.0, 10.0], [-10.0, 0.0]]]))
        v = Tensor(np.array([[[1.0, 0.0], [0.0, 1.0], [5.0, 5.0]]]))
        mask = np.zeros((3, 3))
        out = ad.masked_attention(q, k, v, mask, scale=1.0)
        assert out.data[0, 0] == pytest.approx([1.0, 0.0], abs=1e-8)

    def test_diagonal_only_mask_returns_v(self, rng):
        x = rng.normal(size=(2, 4, 3))
        q, k, v = (Tensor(x.copy()) for _ in range(3))
        mask = np.where(np.eye(4, dtype=bool), 0.0, -MASK_SENTINEL)
        out = ad.masked_attention(q, k, v, mask, scale=np.sqrt(3))
        assert out.data == pytest.approx(v.data, abs=1e-12)

    def test_denied_weight_below_1e15(self, hamming, rng):
        mask = build_mask(hamming.H)
        add = mask.additive(np.float64)
        q, k, v = params_from(rng, (2, 10, 4), (2, 10, 4), (2, 10, 4))
        _, probs = ad.masked_attention(q, k, v, add, scale=2.0, return_probs=True)
        assert probs.data.sum(axis=-1) == pytest.approx(np.ones((2, 10)), abs=1e-12)
        assert (probs.data[:, ~mask.allow] < 1e-15).all()

    def test_fully_denied_row_rejected(self, rng):
        q, k, v = params_from(rng, (1, 2, 2), (1, 2, 2), (1, 2, 2))
        bad = np.full((2, 2), -MASK_SENTINEL)
        with pytest.raises(ValueError, match="denied"):
            ad.masked_attention(q, k, v, bad, scale=1.0)

    def test_gradients_match_finite_differences(self, hamming, rng):
        # heads=2, sequence 10, head dim 4 (the code's own mask shape)
        add = build_mask(hamming.H).additive(np.float64)
        q, k, v = params_from(rng, (2, 10, 4), (2, 10, 4), (2, 10, 4))
        coeff = rng.normal(size=(2, 10, 4))

        def loss():
            out = ad.masked_attention(q, k, v, add, scale=np.sqrt(4.0))
            return ad.sum_all(ad.mul(out, Tensor(coeff)))

        loss().backward()
        for p in (q, k, v):
            assert max_relative_error(p.grad, numerical_grad(loss, p)) < GRAD_TOL

    def test_masked_positions_do_not_influence_output(self, hamming, rng):
        # zeroing V rows denied to a query leaves that query's output unchanged
        mask = build_mask(hamming.H)
        add = mask.additive(np.float64)
        q, k, v = params_from(rng, (1, 10, 4), (1, 10, 4), (1, 10, 4))
        out = ad.masked_attention(q, k, v, add, scale=2.0).data
        query = 8  # a check position: only its own bits and itself are allowed
        denied = ~mask.allow[query]
        v2 = Tensor(np.where(denied[None, :, None], 0.0, v.data))
        out2 = ad.masked_attention(q, k, v2, add, scale=2.0).data
        assert out2[0, query] == pytest.approx(out[0, query], abs=1e-6)
        assert denied.any()


class TestLayerNorm:
    def test_constant_row_collapses_to_bias(self):
        x = Tensor(np.full((2, 5), 3.7))
        gain = ad.parameter(np.ones(5), np.float64)
        bias = ad.parameter(rng_bias := np.linspace(-1, 1, 5), np.float64)
        out = ad.layer_norm(x, gain, bias)
        assert out.data == pytest.approx(np.broadcast_to(rng_bias, (2, 5)), abs=1e-6)

    def test_two_point_hand_case(self):
        x = Tensor(np.array([[1.0, 3.0]]))
        out = ad.layer_norm(x, ad.parameter(np.ones(2), np.float64),
                            ad.parameter(np.zeros(2), np.float64))
        assert out.data[0] == pytest.approx([-1.0, 1.0], abs=1e-4)

    def test_gradients_match_finite_differences(self, rng):
        x, gain, bias = params_from(rng, (3, 7), (7,), (7,))
        coeff = rng.normal(size=(3, 7))

        def loss():
            return ad.sum_all(ad.mul(ad.layer_norm(x, gain, bias), Tensor(coeff)))

        loss().backward()
        for p in (x, gain, bias):
            assert max_relative_error(p.grad, numerical_grad(loss, p)) < GRAD_TOL


class TestGeglu:
    def test_zero_input_zero_biases(self, rng):
        d, hidden = 4, 16
        ws = params_from(rng, (d, hidden), (d, hidden), (hidden, d))
        zeros = [ad.parameter(np.zeros(hidden), np.float64),
                 ad.parameter(np.zeros(hidden), np.float64),
                 ad.parameter(np.zeros(d), np.float64)]
        x = Tensor(np.zeros((2, d)))
        out = ad.geglu_ffn(x, ws[0], zeros[0], ws[1], zeros[1], ws[2], zeros[2])
        assert out.data == pytest.approx(np.zeros((2, d)), abs=1e-12)

    def test_zero_gate_path_gives_bias(self, rng):
        d, hidden = 3, 12
        w1, b1, w3 = params_from(rng, (d, hidden), (hidden,), (hidden, d))
        w2 = ad.parameter(np.zeros((d, hidden)), np.float64)
        b2 = ad.parameter(np.zeros(hidden), np.float64)
        b3 = ad.parameter(rng.normal(size=d), np.float64)
        x = Tensor(rng.normal(size=(5, d)))
        out = ad.geglu_ffn(x, w1, b1, w2, b2, w3, b3)
        assert out.data == pytest.approx(np.broadcast_to(b3.data, (5, d)), abs=1e-12)

    def test_gradients_match_finite_differences(self, rng):
        d, hidden = 3, 12
        tensors = params_from(rng, (d, hidden), (hidden,), (d, hidden), (hidden,),
                              (hidden, d), (d,), (4, d))
        w1, b1, w2, b2, w3, b3, x = tensors
        coeff = rng.normal(size=(4, d))

        def loss():
            return ad.sum_all(ad.mul(ad.geglu_ffn(x, w1, b1, w2, b2, w3, b3),
                                     Tensor(coeff)))

        loss().backward()
        for p in tensors:
            assert max_relative_error(p.grad, numerical_grad(loss, p)) < GRAD_TOL


class TestGelu:
    def test_known_values(self):
        x = Tensor(np.array([0.0, 1.0, -1.0]))
        out = ad.gelu(x)
        # exact Gaussian CDF form
        assert out.data == pytest.approx([0.0, 0.841345, -0.158655], abs=1e-5)

    def test_gradient(self, rng):
        x = ad.parameter(rng.normal(size=(6,)) * 2, np.float64)
        coeff = rng.normal(size=6)

        def loss():
            return ad.sum_all(ad.mul(ad.gelu(x), Tensor(coeff)))

        loss().backward()
        assert max_relative_error(x.grad, numerical_grad(loss, x)) < GRAD_TOL


class TestBceWithLogits:
    def test_zero_logits_give_n_ln2(self):
        u = ad.parameter(np.zeros(9), np.float64)
        loss = ad.bce_with_logits(u, np.random.default_rng(0).integers(0, 2, 9))
        assert float(loss.data) == pytest.approx(9 * np.log(2))

    def test_saturation(self):
        u = ad.parameter(np.array([40.0]), np.float64)
        assert float(ad.bce_with_logits(u, np.array([1])).data) < 1e-15

    def test_batch_averaging(self):
        u = ad.parameter(np.zeros((4, 3)), np.float64)
        loss = ad.bce_with_logits(u, np.zeros((4, 3), dtype=np.uint8))
        assert float(loss.data) == pytest.approx(3 * np.log(2))

    def test_gradient_is_sigmoid_minus_target(self, rng):
        u = ad.parameter(rng.normal(size=(2, 5)), np.float64)
        z = rng.integers(0, 2, size=(2, 5))
        loss = ad.bce_with_logits(u, z)
        loss.backward()
        expected = (ad.sigmoid(u.data) - z) / 2
        assert u.grad == pytest.approx(expected, abs=1e-12)
        assert max_relative_error(
            u.grad, numerical_grad(lambda: ad.bce_with_logits(u, z), u)) < 1e-6

    def test_rejects_non_binary_targets(self, rng):
        u = ad.parameter(rng.normal(size=3), np.float64)
        with pytest.raises(ValueError):
            ad.bce_with_logits(u, np.array([0.0, 0.5, 1.0]))


class TestEngineBasics:
    def test_softmax_rows_sum_to_one(self, rng):
        x = Tensor(rng.normal(size=(4, 6)) * 8)
        assert ad.softmax(x).data.sum(axis=-1) == pytest.approx(np.ones(4), abs=1e-12)

    def test_backward_visits_each_node_once(self):
        # diamond graph: y = a*a reused; gradient must be 2a, not 4a
        a = ad.parameter(np.array([3.0]), np.float64)
        y = ad.sum_all(ad.mul(a, a))
        y.backward()
        assert float(a.grad) == pytest.approx(6.0)

    def test_backward_requires_scalar(self, rng):
        t = ad.parameter(rng.normal(size=(2, 2)), np.float64)
        with pytest.raises(ValueError):
            ad.mul(t, t).backward()

    def test_transpose_reshape_round_trip(self, rng):
        x = ad.parameter(rng.normal(size=(2, 3, 4)), np.float64)

        def loss():
            t = ad.transpose(x, (0, 2, 1))
            r = ad.reshape(t, (2, 12))
            return ad.sum_all(ad.mul(r, Tensor(np.arange(24.0).reshape(2, 12))))

        loss().backward()
        assert max_relative_error(x.grad, numerical_grad(loss, x)) < GRAD_TOL

    def test_dtype_preserved(self, rng):
        x = ad.parameter(rng.normal(size=(3, 3)), np.float32)
        y = ad.gelu(ad.smul(x, 2.0))
        assert y.dtype == np.float32
