"""Model generation, exact oracles, sampling, and serialization."""

import numpy as np
import pytest
from scipy import stats

from bitsback.ans import ans_init
from bitsback.models import (UniformPosterior, empirical_entropy, gen_hmm,
                             gen_mixture, model_from_bytes, sample_dataset,
                             true_posterior)


class TestGeneration:
    def test_mixture_deterministic(self):
        a, b = gen_mixture(5), gen_mixture(5)
        assert np.array_equal(a.prior.counts, b.prior.counts)
        for ra, rb in zip(a.likelihood, b.likelihood):
            assert np.array_equal(ra.counts, rb.counts)

    def test_mixture_default_shape(self, mixture):
        assert (mixture.k_x, mixture.k_z, mixture.r) == (64, 256, 16)

    def test_mixture_rows_sum_to_power(self, mixture):
        assert int(mixture.prior.counts.sum()) == 1 << 16
        for row in mixture.likelihood:
            assert int(row.counts.sum()) == 1 << 16
            assert row.counts.min() >= 1

    def test_hmm_deterministic_and_shaped(self, hmm):
        again = gen_hmm(13)
        assert np.array_equal(hmm.initial.counts, again.initial.counts)
        assert (hmm.k_x, hmm.k_z, hmm.num_steps) == (16, 32, 10)
        for row in hmm.transition + hmm.emission:
            assert int(row.counts.sum()) == 1 << 16


class TestMarginalOracle:
    def test_mixture_marginal_normalizes(self, mixture):
        probs = np.exp2(mixture.log2_marginal_table)
        assert abs(probs.sum() - 1.0) < 1e-9

    def test_single_component_mixture_is_its_likelihood(self):
        model = gen_mixture(3, k_x=8, k_z=1, r=8)
        for x in range(8):
            assert model.exact_log_marginal(x) == pytest.approx(
                model.likelihood[0].log2_prob(x), abs=1e-12)

    def test_micro_hmm_marginal_normalizes(self, micro_hmm):
        total = 0.0
        for a in range(4):
            for b in range(4):
                for c in range(4):
                    total += 2.0 ** micro_hmm.exact_log_marginal((a, b, c))
        assert abs(total - 1.0) < 1e-9

    def test_single_step_hmm_reduces_to_mixture_sum(self):
        model = gen_hmm(4, k_x=8, k_z=8, num_steps=1, r=12)
        for x in range(8):
            direct = np.logaddexp2.reduce(model.log2_init + model.log2_emis[:, x])
            assert model.exact_log_marginal((x,)) == pytest.approx(float(direct), abs=1e-9)

    def test_hmm_forward_matches_brute_force_enumeration(self, micro_hmm):
        rng = np.random.default_rng(0)
        xs = tuple(int(v) for v in rng.integers(0, 4, 3))
        total = -np.inf
        for z0 in range(4):
            for z1 in range(4):
                for z2 in range(4):
                    total = np.logaddexp2(total, micro_hmm.log2_joint(xs, (z0, z1, z2)))
        assert micro_hmm.exact_log_marginal(xs) == pytest.approx(float(total), abs=1e-9)

    def test_exhaustive_importance_average_recovers_marginal(self, micro_mixture):
        # weighting every latent by p(x,z)/q(z) under uniform q sums to p(x)
        q = UniformPosterior(micro_mixture.k_z, micro_mixture.r)
        zs = np.arange(micro_mixture.k_z)
        for x in range(micro_mixture.k_x):
            log_w = (micro_mixture.log2_joint_batch(x, zs)
                     - q.pmf.log2_probs[zs])
            est = float(np.logaddexp2.reduce(log_w) - np.log2(len(zs)))
            assert est == pytest.approx(micro_mixture.exact_log_marginal(x), abs=1e-9)


class TestSampling:
    def test_dataset_deterministic(self, mixture):
        assert np.array_equal(sample_dataset(mixture, 100, 1),
                              sample_dataset(mixture, 100, 1))

    def test_hmm_sequences_have_full_length(self, hmm):
        data = sample_dataset(hmm, 20, 2)
        assert data.shape == (20, 10)

    def test_mixture_marginal_histogram(self, mixture):
        data = sample_dataset(mixture, 20_000, 3)
        counts = np.bincount(data, minlength=mixture.k_x)
        expected = 20_000 * np.exp2(mixture.log2_marginal_table)
        assert stats.chisquare(counts, f_exp=expected * (counts.sum() / expected.sum())).pvalue > 0.01

    def test_mixture_empirical_entropy_near_exact(self, mixture):
        data = sample_dataset(mixture, 5000, 4)
        probs = np.exp2(mixture.log2_marginal_table)
        exact = float(-(probs * mixture.log2_marginal_table).sum())
        sigma = float(np.sqrt((probs * mixture.log2_marginal_table**2).sum() - exact**2))
        assert abs(empirical_entropy(mixture, data) - exact) < 3 * sigma / np.sqrt(5000)

    def test_hmm_empirical_entropy_near_exact(self, micro_hmm):
        data = sample_dataset(micro_hmm, 4000, 5)
        seqs = [(a, b, c) for a in range(4) for b in range(4) for c in range(4)]
        lp = np.array([micro_hmm.exact_log_marginal(s) for s in seqs])
        probs = np.exp2(lp)
        exact = float(-(probs * lp).sum()) / micro_hmm.num_steps
        sigma = float(np.sqrt((probs * lp**2).sum() - (probs * lp).sum() ** 2))
        tol = 3 * sigma / np.sqrt(4000) / micro_hmm.num_steps
        assert abs(empirical_entropy(micro_hmm, data) - exact) < tol


class TestEmpiricalEntropy:
    def test_single_symbol(self, mixture):
        data = sample_dataset(mixture, 1, 6)
        assert empirical_entropy(mixture, data) == pytest.approx(
            -mixture.exact_log_marginal(int(data[0])))

    def test_permutation_invariant(self, mixture):
        data = sample_dataset(mixture, 50, 7)
        assert empirical_entropy(mixture, data) == pytest.approx(
            empirical_entropy(mixture, data[::-1]))

    def test_empty_dataset_rejected(self, mixture):
        with pytest.raises(ValueError):
            empirical_entropy(mixture, np.array([], dtype=np.int64))


class TestPosteriors:
    def test_uniform_needs_divisibility(self):
        with pytest.raises(ValueError):
            UniformPosterior(3, 4)

    def test_uniform_counts_flat(self):
        post = UniformPosterior(256, 16)
        assert np.all(post.pmf.counts == 256)

    def test_true_posterior_rows_normalize(self, micro_mixture):
        table = true_posterior(micro_mixture)
        for x in range(micro_mixture.k_x):
            assert int(table.pmf_for(x).counts.sum()) == 1 << 16


class TestCodingHooks:
    def test_mixture_joint_roundtrip(self, micro_mixture, rng):
        msg = ans_init(1, 32)
        before = msg.copy()
        pairs = [(int(rng.integers(8)), int(rng.integers(16))) for _ in range(64)]
        for x, z in pairs:
            micro_mixture.joint_push(msg, x, z)
        for x, z in reversed(pairs):
            assert micro_mixture.joint_pop(msg) == (x, z)
        assert msg == before

    def test_hmm_joint_roundtrip(self, micro_hmm, rng):
        msg = ans_init(2, 32)
        before = msg.copy()
        pairs = []
        for _ in range(64):
            xs = tuple(int(v) for v in rng.integers(0, 4, 3))
            zs = tuple(int(v) for v in rng.integers(0, 4, 3))
            pairs.append((xs, zs))
            micro_hmm.joint_push(msg, xs, zs)
        for xs, zs in reversed(pairs):
            assert micro_hmm.joint_pop(msg) == (xs, zs)
        assert msg == before

    def test_hmm_latent_chain_roundtrip(self, micro_hmm, rng):
        msg = ans_init(3, 32)
        before = msg.copy()
        trajs = [tuple(int(v) for v in rng.integers(0, 4, 3)) for _ in range(64)]
        for zs in trajs:
            micro_hmm.latent_push(msg, zs)
        for zs in reversed(trajs):
            assert micro_hmm.latent_pop(msg) == zs
        assert msg == before


class TestSerialization:
    def test_mixture_roundtrip(self, micro_mixture):
        clone = model_from_bytes(micro_mixture.to_bytes())
        assert clone.kind == "mixture"
        assert np.array_equal(clone.prior.counts, micro_mixture.prior.counts)
        assert all(np.array_equal(a.counts, b.counts)
                   for a, b in zip(clone.likelihood, micro_mixture.likelihood))

    def test_hmm_roundtrip(self, micro_hmm):
        clone = model_from_bytes(micro_hmm.to_bytes())
        assert clone.kind == "hmm"
        assert clone.num_steps == 3
        assert np.array_equal(clone.initial.counts, micro_hmm.initial.counts)
        assert all(np.array_equal(a.counts, b.counts)
                   for a, b in zip(clone.transition, micro_hmm.transition))
