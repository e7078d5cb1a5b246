"""Quantized PMF construction, inverse CDF, and symbol coding."""

import numpy as np
import pytest
from scipy import stats

from bitsback.ans import ans_init
from bitsback.codec import (DegenerateDistributionError, QuantizedPmf,
                            decode_symbol, encode_symbol, point_mass_pmf,
                            pop_uniform, pop_uniform_in_set, push_uniform,
                            push_uniform_in_set, quantize_pmf, uniform_pmf)


class TestQuantize:
    def test_exact_proportionality(self):
        assert list(quantize_pmf([1, 1, 2], 2).counts) == [1, 1, 2]

    def test_tie_breaks_to_smallest_index(self):
        assert list(quantize_pmf([1, 1, 1], 2).counts) == [2, 1, 1]

    def test_counts_always_sum_to_power(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            k = int(rng.integers(2, 40))
            r = int(rng.integers(6, 17))
            w = rng.random(k) + 1e-9
            assert int(quantize_pmf(w, r).counts.sum()) == 1 << r

    def test_apportionment_error_bound(self):
        rng = np.random.default_rng(1)
        w = rng.random(256)
        pmf = quantize_pmf(w, 16)
        err = np.abs(pmf.counts / 2**16 - w / w.sum())
        assert err.max() <= 256 / 2**16

    def test_scale_invariance(self):
        rng = np.random.default_rng(2)
        w = rng.random(32) + 0.01
        base = quantize_pmf(w, 12).counts
        for c in (0.25, 2.0, 1024.0):
            assert np.array_equal(quantize_pmf(c * w, 12).counts, base)

    def test_support_positivity_floor(self):
        # a vanishing weight still gets one count
        pmf = quantize_pmf([1e-12, 1.0], 8)
        assert pmf.counts[0] >= 1
        assert int(pmf.counts.sum()) == 256

    def test_unsupported_symbols_get_zero(self):
        pmf = quantize_pmf([1.0, 5.0, 1.0], 8, support=[True, False, True])
        assert pmf.counts[1] == 0
        assert int(pmf.counts.sum()) == 256

    def test_all_zero_raises(self):
        with pytest.raises(DegenerateDistributionError):
            quantize_pmf([0.0, 0.0], 8)

    def test_overshoot_rebalances(self):
        # many floored-to-one entries force taking counts back elsewhere
        w = np.concatenate([np.full(200, 1e-9), [1.0]])
        pmf = quantize_pmf(w, 8)
        assert int(pmf.counts.sum()) == 256
        assert pmf.counts.min() >= 1
        assert pmf.counts[-1] == 256 - 200


class TestInverseCdf:
    def test_small_example(self):
        pmf = QuantizedPmf([1, 3], 2)
        assert pmf.inv_cdf(0) == 0
        assert [pmf.inv_cdf(u) for u in (1, 2, 3)] == [1, 1, 1]

    def test_right_edge_maps_to_same_symbol(self):
        pmf = quantize_pmf([3, 5, 8], 4)
        for z in range(3):
            lo, hi = pmf.u_set_range(z)
            assert pmf.inv_cdf(hi - 1) == z

    def test_preimage_sizes_match_counts_exhaustively(self):
        rng = np.random.default_rng(3)
        pmf = quantize_pmf(rng.random(40), 12)
        syms = pmf.inv_cdf_many(np.arange(1 << 12))
        assert np.array_equal(np.bincount(syms, minlength=40), pmf.counts)

    def test_u_ranges_partition_the_residues(self):
        pmf = quantize_pmf([1, 3], 2)
        assert pmf.u_set_range(1) == (1, 4)
        edges = [pmf.u_set_range(z) for z in range(2)]
        assert edges[0][1] == edges[1][0]
        for z in range(2):
            lo, hi = pmf.u_set_range(z)
            assert hi - lo == pmf.counts[z]
            for u in range(lo, hi):
                assert pmf.inv_cdf(u) == z

    def test_zero_count_range_raises(self):
        pmf = point_mass_pmf(4, 2, 8)
        with pytest.raises(ValueError):
            pmf.u_set_range(0)


class TestSymbolCoding:
    def test_encode_decode_identity(self):
        rng = np.random.default_rng(4)
        pmf = quantize_pmf(rng.integers(1, 21, 64), 16)
        msg = ans_init(3, 16)
        before = msg.copy()
        syms = [int(s) for s in pmf.sample(rng, 500)]
        for sym in syms:
            encode_symbol(msg, sym, pmf)
        decoded = [decode_symbol(msg, pmf) for _ in range(500)]
        assert decoded[::-1] == syms
        assert msg == before

    def test_decode_from_random_message_matches_law(self):
        pmf = quantize_pmf(np.arange(1, 33), 12)
        msg = ans_init(21, 4000)
        draws = [decode_symbol(msg, pmf) for _ in range(8000)]
        counts = np.bincount(draws, minlength=32)
        assert stats.chisquare(counts, f_exp=8000 * pmf.probs).pvalue > 0.01

    def test_amortized_cost_matches_codelength(self):
        rng = np.random.default_rng(5)
        pmf = quantize_pmf(rng.integers(1, 21, 64), 16)
        syms = pmf.sample(rng, 20_000)
        msg = ans_init(6, 8)
        start = msg.bit_length
        for sym in syms:
            encode_symbol(msg, int(sym), pmf)
        growth = msg.bit_length - start
        ideal = float(-pmf.log2_probs[syms].sum())
        assert abs(growth - ideal) / ideal < 1e-3

    def test_uniform_pmf_is_exact_when_divisible(self):
        pmf = uniform_pmf(256, 16)
        assert np.all(pmf.counts == 256)


class TestRestrictedUniform:
    def test_roundtrip(self):
        rng = np.random.default_rng(6)
        pmf = quantize_pmf(rng.integers(1, 21, 32), 10)
        msg = ans_init(9, 32)
        before = msg.copy()
        us = [int(u) for u in rng.integers(0, 1 << 10, 300)]
        zs = []
        for u in us:
            zs.append(push_uniform_in_set(msg, u, pmf))
        for u, z in zip(reversed(us), reversed(zs)):
            got = pop_uniform_in_set(msg, z, pmf)
            assert got == u
        assert msg == before

    def test_cost_is_log_count(self):
        # encoding a residue within U(z) adds log2(counts[z]) bits
        pmf = quantize_pmf([1, 7, 8], 4)
        msg = ans_init(1, 64)
        lo, hi = pmf.u_set_range(2)
        start = msg.bit_length
        for _ in range(1000):
            push_uniform_in_set(msg, lo, pmf)
        growth = msg.bit_length - start
        assert abs(growth - 1000 * 3) <= 64

    def test_full_uniform_roundtrip(self):
        msg = ans_init(2, 8)
        before = msg.copy()
        push_uniform(msg, 12345, 14)
        assert msg.bit_length == before.bit_length + 14
        assert pop_uniform(msg, 14) == 12345
        assert msg == before
