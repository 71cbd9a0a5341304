import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ecct.channel import bpsk_modulate
from ecct.codes import all_codewords, encode, syndrome
from ecct.transform import (
    PreprocessedWord,
    hard_decision,
    multiplicative_target,
    postprocess,
    preprocess,
)


class TestHardDecision:
    def test_definitional(self):
        assert (hard_decision([0.5, -1.2, 0.1]) == [0, 1, 0]).all()

    def test_tie_maps_to_zero(self):
        assert hard_decision(np.array([0.0]))[0] == 0
        assert hard_decision(np.array([-0.0]))[0] == 0

    def test_inverse_of_bpsk(self, rng):
        bits = rng.integers(0, 2, size=100, dtype=np.uint8)
        assert (hard_decision(bpsk_modulate(bits)) == bits).all()


class TestPreprocess:
    def test_noiseless_codeword(self, hamming):
        x = encode(hamming, [1, 1, 0, 1])
        pre = preprocess(hamming.H, bpsk_modulate(x))
        assert pre.magnitude == pytest.approx(np.ones(7))
        assert not pre.synd.any()

    def test_single_check_hand_case(self):
        h = np.ones((1, 3), dtype=np.uint8)
        pre = preprocess(h, np.array([0.5, -1.2, 0.1]))
        assert pre.magnitude == pytest.approx([0.5, 1.2, 0.1])
        assert (pre.synd == [1]).all()  # hard decision (0,1,0) has odd parity

    def test_combined_length(self, hamming):
        pre = preprocess(hamming.H, np.ones(7))
        assert len(pre) == 10
        assert pre.combined.shape == (10,)

    def test_length_mismatch(self, hamming):
        with pytest.raises(ValueError):
            preprocess(hamming.H, np.ones(6))

    def test_invariance_pair_exact(self, hamming, rng):
        # preprocessing of BPSK(x)+z is bit-identical to that of 1 + BPSK(x)*z
        for _ in range(1000):
            x = all_codewords(hamming)[rng.integers(16)]
            z = rng.normal(scale=0.9, size=7)
            xs = bpsk_modulate(x)
            a = preprocess(hamming.H, xs + z)
            b = preprocess(hamming.H, 1.0 + xs * z)
            assert (a.magnitude == b.magnitude).all()
            assert (a.synd == b.synd).all()


class TestMultiplicativeTarget:
    def test_zero_codeword_specialization(self, rng):
        y = rng.normal(size=32)
        assert (multiplicative_target(y, np.ones(32)) == hard_decision(y)).all()

    def test_noiseless(self):
        xs = np.array([1.0, -1.0, 1.0])
        assert not multiplicative_target(xs, xs).any()

    def test_sign_product(self):
        assert (multiplicative_target(np.array([0.3, 0.7]), np.array([-1.0, 1.0]))
                == [1, 0]).all()

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_marks_exactly_the_flips(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.integers(0, 2, size=24, dtype=np.uint8)
        xs = bpsk_modulate(x)
        y = xs + rng.normal(scale=1.0, size=24)
        z = multiplicative_target(y, xs)
        assert (z == (hard_decision(y) ^ x)).all()


class TestPostprocess:
    def test_confident_no_flip(self, rng):
        y = rng.normal(size=11)
        assert (postprocess(y, np.ones(11)) == hard_decision(y)).all()

    def test_perfect_correction(self, hamming, rng):
        x = encode(hamming, [0, 1, 1, 0])
        xs = bpsk_modulate(x)
        y = xs + rng.normal(scale=0.8, size=7)
        soft = np.where(hard_decision(y) == x, 1.0, -1.0)
        assert (postprocess(y, soft) == x).all()

    def test_recovery_identity(self, rng):
        # matching signs with y * BPSK(x) recover x exactly
        x = rng.integers(0, 2, size=20, dtype=np.uint8)
        xs = bpsk_modulate(x)
        y = xs + rng.normal(scale=0.6, size=20)
        soft = np.sign(y * xs) * rng.uniform(0.1, 1.0, size=20)
        assert (postprocess(y, soft) == x).all()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            postprocess(np.ones(3), np.ones(4))
