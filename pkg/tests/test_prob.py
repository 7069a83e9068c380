import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldprobust import (
    FiniteDist,
    ProbVector,
    RngSeed,
    chi_square,
    l1_dist,
    make_prob_vector,
    sample_categorical,
    subset_mask,
    subset_mass,
    sup_subset_gap,
    tv,
    tv_product_bound,
)
from ldprobust.errors import (
    LengthMismatch,
    NegativeMass,
    NotNormalized,
    OutcomeMismatch,
    TooSmallAlphabet,
)

from conftest import brute_force_sup_gap


class TestMakeProbVector:
    def test_uniform(self):
        p = make_prob_vector([1 / 3, 1 / 3, 1 / 3])
        assert p.d == 3
        assert np.allclose(p.weights, 1 / 3)

    def test_point_mass(self):
        p = make_prob_vector([1.0, 0.0, 0.0])
        assert p.weights[0] == 1.0

    def test_not_normalized(self):
        with pytest.raises(NotNormalized):
            make_prob_vector([0.5, 0.3, 0.3])

    def test_negative_mass(self):
        with pytest.raises(NegativeMass):
            make_prob_vector([0.5, 0.6, -0.1])

    def test_small_alphabet(self):
        with pytest.raises(TooSmallAlphabet):
            make_prob_vector([0.5, 0.5])

    def test_tiny_negative_clamped(self):
        p = make_prob_vector([0.5, 0.5, -1e-13])
        assert p.weights[2] == 0.0
        assert abs(p.weights.sum() - 1.0) <= 1e-12


class TestDistances:
    def test_l1_identity(self):
        assert l1_dist([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) == 0.0

    def test_l1_point_masses(self):
        assert l1_dist([1, 0, 0], [0, 1, 0]) == 2.0

    def test_l1_direct(self):
        assert abs(l1_dist([0.6, 0.4, 0.0], [0.4, 0.4, 0.2]) - 0.4) < 1e-15

    def test_l1_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            l1_dist([1, 0], [1, 0, 0])

    def test_tv_equals_half_l1(self):
        p = [0.2, 0.3, 0.5]
        q = [0.5, 0.25, 0.25]
        assert tv(p, q) == 0.5 * l1_dist(p, q)

    def test_tv_bernoulli(self):
        p = FiniteDist((0, 1), np.array([0.5, 0.5]))
        q = FiniteDist((0, 1), np.array([0.3, 0.7]))
        assert abs(tv(p, q) - 0.2) < 1e-15

    def test_tv_disjoint(self):
        p = FiniteDist(("a", "b"), np.array([1.0, 0.0]))
        q = FiniteDist(("a", "b"), np.array([0.0, 1.0]))
        assert tv(p, q) == 1.0

    def test_tv_outcome_mismatch(self):
        p = FiniteDist(("a", "b"), np.array([1.0, 0.0]))
        q = FiniteDist(("a", "c"), np.array([0.0, 1.0]))
        with pytest.raises(OutcomeMismatch):
            tv(p, q)


class TestChiSquare:
    def test_zero_at_equal(self):
        p = FiniteDist((0, 1, 2), np.array([0.2, 0.3, 0.5]))
        assert chi_square(p, p) == 0.0

    def test_infinite_when_not_absolutely_continuous(self):
        p = FiniteDist((0, 1), np.array([0.5, 0.5]))
        q = FiniteDist((0, 1), np.array([1.0, 0.0]))
        assert chi_square(p, q) == math.inf

    def test_bernoulli_value(self):
        # ((0.1)^2 / 0.5) * 2 = 0.04
        p = FiniteDist((0, 1), np.array([0.4, 0.6]))
        q = FiniteDist((0, 1), np.array([0.5, 0.5]))
        assert abs(chi_square(p, q) - 0.04) < 1e-15

    def test_nonnegative(self):
        gen = np.random.default_rng(3)
        for _ in range(50):
            a = gen.dirichlet(np.ones(4))
            b = gen.dirichlet(np.ones(4))
            assert chi_square(a, b) >= 0.0


class TestSubsetMass:
    def test_empty(self):
        assert subset_mass([0.1, 0.2, 0.7], np.zeros(3, dtype=bool)) == 0.0

    def test_full_prob_vector(self):
        p = make_prob_vector([0.1, 0.2, 0.7])
        assert abs(subset_mass(p, np.ones(3, dtype=bool)) - 1.0) < 1e-15

    def test_direct(self):
        assert abs(subset_mass([0.1, 0.2, 0.7], subset_mask(3, [1, 3])) - 0.8) < 1e-15

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            subset_mass([0.1, 0.2], np.zeros(3, dtype=bool))


class TestSupSubsetGap:
    def test_zero_at_equal(self):
        val, mask = sup_subset_gap([0.2, 0.3, 0.5], [0.2, 0.3, 0.5])
        assert val == 0.0
        assert not mask.any()

    def test_direct(self):
        p = [0.6, 0.4, 0.0]
        v = [0.4, 0.4, 0.2]
        val, mask = sup_subset_gap(p, v)
        assert abs(val - 0.2) < 1e-12
        # the witness attains the value
        assert abs(abs(subset_mass(p, mask) - subset_mass(v, mask)) - val) < 1e-15
        assert abs(val - brute_force_sup_gap(p, v)) < 1e-15

    def test_point_masses(self):
        val, mask = sup_subset_gap([1, 0, 0], [0, 1, 0])
        assert val == 1.0
        assert mask.tolist() == [True, False, False]

    @settings(max_examples=200, derandomize=True)
    @given(st.integers(3, 10), st.integers(0, 2 ** 32 - 1))
    def test_matches_brute_force_and_l1_sandwich(self, d, seed):
        gen = np.random.default_rng(seed)
        p = gen.dirichlet(np.ones(d))
        v = gen.normal(0.2, 0.3, size=d)
        val, mask = sup_subset_gap(p, v)
        assert abs(val - brute_force_sup_gap(p, v)) < 1e-12
        assert val <= l1_dist(p, v) + 1e-12
        assert l1_dist(p, v) <= 2 * val + 1e-12
        assert abs(abs(subset_mass(p, mask) - subset_mass(v, mask)) - val) < 1e-12


class TestSampling:
    def test_point_mass(self):
        p = make_prob_vector([0.0, 1.0, 0.0])
        xs = sample_categorical(p, 5, RngSeed(0))
        assert xs.tolist() == [2, 2, 2, 2, 2]

    def test_empty(self):
        p = make_prob_vector([0.5, 0.25, 0.25])
        assert sample_categorical(p, 0, RngSeed(0)).size == 0

    def test_uniform_frequencies(self):
        p = make_prob_vector([0.25] * 4)
        xs = sample_categorical(p, 10 ** 6, RngSeed(123))
        freqs = np.bincount(xs, minlength=5)[1:] / 10 ** 6
        assert np.abs(freqs - 0.25).max() < 0.002

    def test_deterministic(self):
        p = make_prob_vector([0.5, 0.3, 0.2])
        a = sample_categorical(p, 100, RngSeed(9, 4))
        b = sample_categorical(p, 100, RngSeed(9, 4))
        assert np.array_equal(a, b)


class TestTvProductBound:
    def test_zero(self):
        assert tv_product_bound(0.0, 5) == 0.0

    def test_single_sample(self):
        assert abs(tv_product_bound(0.21, 1) - math.sqrt(0.21)) < 1e-15

    def test_clamped(self):
        assert tv_product_bound(10.0, 10) == 1.0

    @settings(max_examples=100, derandomize=True)
    @given(st.floats(0, 5), st.floats(0, 5), st.integers(1, 50), st.integers(1, 50))
    def test_monotone(self, c1, c2, k1, k2):
        lo_c, hi_c = sorted([c1, c2])
        lo_k, hi_k = sorted([k1, k2])
        assert tv_product_bound(lo_c, lo_k) <= tv_product_bound(hi_c, lo_k) + 1e-15
        assert tv_product_bound(lo_c, lo_k) <= tv_product_bound(lo_c, hi_k) + 1e-15


class TestRngSeed:
    def test_same_stream_identical(self):
        a = RngSeed(7, 3).generator().random(16)
        b = RngSeed(7, 3).generator().random(16)
        assert np.array_equal(a, b)

    def test_different_streams_differ(self):
        a = RngSeed(7, 3).generator().random(16)
        b = RngSeed(7, 4).generator().random(16)
        assert not np.array_equal(a, b)
