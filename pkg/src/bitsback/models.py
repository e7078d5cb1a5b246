"""Toy latent-variable models with exact marginal-likelihood oracles.

Both models are stored post-quantization: every probability used anywhere
(coding, weights, bounds, oracles) is an integer count over ``2**r``, so a
coder's net bitrate can be compared to the oracle without quantization as a
confounder.

The mixture draws a latent ``z`` from a prior and an observation ``x`` from
a per-latent likelihood row.  The hidden Markov model runs a latent chain of
length ``T`` with per-step transitions and emissions; its marginal is exact
via the forward recursion.
"""

from __future__ import annotations

import struct

import numpy as np

from .ans import AnsMessage
from .codec import (QuantizedPmf, decode_symbol, encode_symbol, quantize_pmf,
                    sample_symbol, uniform_pmf, unsample_symbol)

DEFAULT_PRECISION = 16
_COUNT_LO, _COUNT_HI = 1, 20  # raw model counts are uniform on [1, 20]


def _logsumexp2(a, axis=None):
    m = np.max(a, axis=axis, keepdims=True)
    out = np.log2(np.sum(np.exp2(a - m), axis=axis)) + np.squeeze(m, axis=axis)
    return out


class UniformPosterior:
    """Uniform approximate posterior over ``k`` latent symbols.

    Requires ``k`` to divide ``2**r`` so the PMF is exactly flat.  For
    sequence models the same flat PMF is applied independently per step.
    """

    is_uniform = True

    def __init__(self, k: int, r: int = DEFAULT_PRECISION):
        if (1 << r) % k != 0:
            raise ValueError(f"uniform posterior needs k | 2**r, got k={k}, r={r}")
        self.k = k
        self.r = r
        self.pmf = uniform_pmf(k, r)

    def pmf_for(self, x) -> QuantizedPmf:
        return self.pmf


class TablePosterior:
    """Per-observation posterior table for the mixture (tests and oracles)."""

    is_uniform = False

    def __init__(self, pmfs: list[QuantizedPmf]):
        self.pmfs = pmfs
        self.r = pmfs[0].r
        self.k = len(pmfs[0])

    def pmf_for(self, x) -> QuantizedPmf:
        return self.pmfs[x]


class MixtureModel:
    """Latent categorical prior with per-latent observation rows."""

    kind = "mixture"

    def __init__(self, prior: QuantizedPmf, likelihood: list[QuantizedPmf]):
        self.prior = prior
        self.likelihood = likelihood
        self.k_z = len(prior)
        self.k_x = len(likelihood[0])
        self.r = prior.r
        self.log2_prior = prior.log2_probs
        self.log2_lik = np.stack([row.log2_probs for row in likelihood])
        self._log2_marginal = None

    # -- oracle ------------------------------------------------------------

    @property
    def log2_marginal_table(self) -> np.ndarray:
        if self._log2_marginal is None:
            joint = self.log2_prior[:, None] + self.log2_lik
            self._log2_marginal = _logsumexp2(joint, axis=0)
        return self._log2_marginal

    def exact_log_marginal(self, x: int) -> float:
        """log2 p(x) by summation over the full latent alphabet."""
        return float(self.log2_marginal_table[x])

    def log2_joint(self, x: int, z: int) -> float:
        return float(self.log2_prior[z] + self.log2_lik[z, x])

    def log2_joint_vector(self, x: int) -> np.ndarray:
        """log2 p(x, z) over all z, for annealing paths and weights."""
        return self.log2_prior + self.log2_lik[:, x]

    def log2_joint_batch(self, x: int, zs) -> np.ndarray:
        zs = np.asarray(zs)
        return self.log2_prior[zs] + self.log2_lik[zs, x]

    # -- sampling ----------------------------------------------------------

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        zs = self.prior.sample(rng, n)
        lik_cum = np.stack([row.cum for row in self.likelihood])
        us = rng.integers(0, 1 << self.r, n)
        xs = np.empty(n, dtype=np.int64)
        for i in range(n):
            xs[i] = np.searchsorted(lik_cum[zs[i]], us[i], side="right") - 1
        return xs

    def sample_q(self, posterior, x, rng: np.random.Generator, n: int) -> np.ndarray:
        return posterior.pmf_for(x).sample(rng, n)

    # -- coding hooks used by the coders ------------------------------------

    def q_pop(self, msg: AnsMessage, posterior, x) -> int:
        return sample_symbol(msg, posterior.pmf_for(x))

    def q_push(self, msg: AnsMessage, posterior, x, z: int) -> None:
        unsample_symbol(msg, z, posterior.pmf_for(x))

    def log2_q(self, posterior, x, z: int) -> float:
        return posterior.pmf_for(x).log2_prob(z)

    def log2_q_batch(self, posterior, x, zs) -> np.ndarray:
        return posterior.pmf_for(x).log2_probs[np.asarray(zs)]

    def obs_push(self, msg: AnsMessage, x: int, z: int) -> None:
        encode_symbol(msg, x, self.likelihood[z])

    def obs_pop(self, msg: AnsMessage, z: int) -> int:
        return decode_symbol(msg, self.likelihood[z])

    def latent_push(self, msg: AnsMessage, z: int) -> None:
        encode_symbol(msg, z, self.prior)

    def latent_pop(self, msg: AnsMessage) -> int:
        return decode_symbol(msg, self.prior)

    def joint_push(self, msg: AnsMessage, x: int, z: int) -> None:
        self.obs_push(msg, x, z)
        self.latent_push(msg, z)

    def joint_pop(self, msg: AnsMessage) -> tuple[int, int]:
        z = self.latent_pop(msg)
        x = self.obs_pop(msg, z)
        return x, z

    # -- serialization -------------------------------------------------------

    def to_bytes(self) -> bytes:
        return _serialize(0, self.r, (self.k_z, self.k_x), [self.prior] + self.likelihood)


class Hmm:
    """Hidden Markov model with quantized initial/transition/emission rows."""

    kind = "hmm"

    def __init__(self, initial: QuantizedPmf, transition: list[QuantizedPmf],
                 emission: list[QuantizedPmf], num_steps: int):
        self.initial = initial
        self.transition = transition
        self.emission = emission
        self.num_steps = num_steps
        self.k_z = len(initial)
        self.k_x = len(emission[0])
        self.r = initial.r
        self.log2_init = initial.log2_probs
        self.log2_trans = np.stack([row.log2_probs for row in transition])
        self.log2_emis = np.stack([row.log2_probs for row in emission])

    # -- oracle ------------------------------------------------------------

    def exact_log_marginal(self, xs) -> float:
        """log2 p(x_{1:T}) via the forward recursion with rescaling."""
        return float(self.log2_marginal_batch(np.asarray(xs)[None, :])[0])

    def log2_marginal_batch(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs)
        init = np.exp2(self.log2_init)
        trans = np.exp2(self.log2_trans)
        emis = np.exp2(self.log2_emis)
        alpha = init[None, :] * emis[:, xs[:, 0]].T
        out = np.zeros(len(xs))
        for t in range(1, xs.shape[1]):
            norm = alpha.sum(axis=1)
            out += np.log2(norm)
            alpha = (alpha / norm[:, None]) @ trans
            alpha *= emis[:, xs[:, t]].T
        out += np.log2(alpha.sum(axis=1))
        return out

    def log2_joint(self, xs, zs) -> float:
        xs = np.asarray(xs)
        zs = np.asarray(zs)
        val = self.log2_init[zs[0]] + self.log2_trans[zs[:-1], zs[1:]].sum()
        return float(val + self.log2_emis[zs, xs].sum())

    def log2_joint_batch(self, xs, zs) -> np.ndarray:
        xs = np.asarray(xs)
        zs = np.asarray(zs)
        val = self.log2_init[zs[:, 0]] + self.log2_trans[zs[:, :-1], zs[:, 1:]].sum(axis=1)
        return val + self.log2_emis[zs, xs[None, :]].sum(axis=1)

    # -- sampling ----------------------------------------------------------

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        xs = np.empty((n, self.num_steps), dtype=np.int64)
        for i in range(n):
            z = self.initial.sample(rng)
            for t in range(self.num_steps):
                if t > 0:
                    z = self.transition[z].sample(rng)
                xs[i, t] = self.emission[z].sample(rng)
        return xs

    def sample_q(self, posterior, xs, rng: np.random.Generator, n: int) -> np.ndarray:
        return posterior.pmf_for(None).sample(rng, (n, self.num_steps))

    # -- coding hooks --------------------------------------------------------

    def q_pop(self, msg: AnsMessage, posterior, xs) -> tuple[int, ...]:
        pmf = posterior.pmf_for(None)
        return tuple(sample_symbol(msg, pmf) for _ in range(self.num_steps))

    def q_push(self, msg: AnsMessage, posterior, xs, zs) -> None:
        pmf = posterior.pmf_for(None)
        for z in reversed(zs):
            unsample_symbol(msg, z, pmf)

    def log2_q(self, posterior, xs, zs) -> float:
        pmf = posterior.pmf_for(None)
        return float(sum(pmf.log2_prob(z) for z in zs))

    def log2_q_batch(self, posterior, xs, zs) -> np.ndarray:
        return posterior.pmf_for(None).log2_probs[np.asarray(zs)].sum(axis=1)

    def obs_push(self, msg: AnsMessage, xs, zs) -> None:
        for t in reversed(range(self.num_steps)):
            encode_symbol(msg, int(xs[t]), self.emission[zs[t]])

    def obs_pop(self, msg: AnsMessage, zs) -> tuple[int, ...]:
        return tuple(decode_symbol(msg, self.emission[zs[t]]) for t in range(self.num_steps))

    def latent_push(self, msg: AnsMessage, zs) -> None:
        for t in reversed(range(self.num_steps)):
            pmf = self.initial if t == 0 else self.transition[zs[t - 1]]
            encode_symbol(msg, zs[t], pmf)

    def latent_pop(self, msg: AnsMessage) -> tuple[int, ...]:
        zs = []
        for t in range(self.num_steps):
            pmf = self.initial if t == 0 else self.transition[zs[-1]]
            zs.append(decode_symbol(msg, pmf))
        return tuple(zs)

    def joint_push(self, msg: AnsMessage, xs, zs) -> None:
        # reverse-time interleaved (x_t, z_t) pairs so that decoding walks
        # the chain forward one step at a time
        for t in reversed(range(self.num_steps)):
            encode_symbol(msg, int(xs[t]), self.emission[zs[t]])
            pmf = self.initial if t == 0 else self.transition[zs[t - 1]]
            encode_symbol(msg, zs[t], pmf)

    def joint_pop(self, msg: AnsMessage) -> tuple[tuple[int, ...], tuple[int, ...]]:
        xs, zs = [], []
        for t in range(self.num_steps):
            pmf = self.initial if t == 0 else self.transition[zs[-1]]
            zs.append(decode_symbol(msg, pmf))
            xs.append(decode_symbol(msg, self.emission[zs[-1]]))
        return tuple(xs), tuple(zs)

    # -- serialization -------------------------------------------------------

    def to_bytes(self) -> bytes:
        rows = [self.initial] + self.transition + self.emission
        return _serialize(1, self.r, (self.k_z, self.k_x, self.num_steps), rows)


def _raw_counts(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(_COUNT_LO, _COUNT_HI + 1, shape)


def gen_mixture(seed: int, k_x: int = 64, k_z: int = 256,
                r: int = DEFAULT_PRECISION) -> MixtureModel:
    """Seeded random mixture; defaults match the toy benchmark scales."""
    rng = np.random.default_rng([seed, 101])
    prior = quantize_pmf(_raw_counts(rng, k_z), r)
    likelihood = [quantize_pmf(_raw_counts(rng, k_x), r) for _ in range(k_z)]
    return MixtureModel(prior, likelihood)


def gen_hmm(seed: int, k_x: int = 16, k_z: int = 32, num_steps: int = 10,
            r: int = DEFAULT_PRECISION) -> Hmm:
    """Seeded random HMM; defaults match the toy benchmark scales."""
    rng = np.random.default_rng([seed, 202])
    initial = quantize_pmf(_raw_counts(rng, k_z), r)
    transition = [quantize_pmf(_raw_counts(rng, k_z), r) for _ in range(k_z)]
    emission = [quantize_pmf(_raw_counts(rng, k_x), r) for _ in range(k_z)]
    return Hmm(initial, transition, emission, num_steps)


def sample_dataset(model, n: int, seed: int) -> np.ndarray:
    """``n`` ancestral samples; observations only (latents discarded)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return model.sample(np.random.default_rng([seed, 303]), n)


def empirical_entropy(model, dataset: np.ndarray) -> float:
    """Mean oracle codelength of the dataset, in bits per symbol dimension.

    For the HMM the mean sequence codelength is divided by the number of
    timesteps.
    """
    dataset = np.asarray(dataset)
    if len(dataset) == 0:
        raise ValueError("dataset must be nonempty")
    if model.kind == "hmm":
        return float(-model.log2_marginal_batch(dataset).mean() / model.num_steps)
    return float(-model.log2_marginal_table[dataset].mean())


def true_posterior(model: MixtureModel) -> TablePosterior:
    """Quantized exact posterior table p(z|x) for a mixture."""
    pmfs = []
    for x in range(model.k_x):
        pmfs.append(quantize_pmf(np.exp2(model.log2_joint_vector(x)), model.r))
    return TablePosterior(pmfs)


# -- model (de)serialization: length-prefixed 32-bit little-endian counts ----

_MAGIC = b"LVM1"


def _serialize(kind: int, r: int, dims: tuple[int, ...], rows: list[QuantizedPmf]) -> bytes:
    parts = [_MAGIC, struct.pack("<BBB", kind, r, len(dims))]
    parts.append(struct.pack(f"<{len(dims)}I", *dims))
    for pmf in rows:
        parts.append(struct.pack("<I", len(pmf)))
        parts.append(pmf.counts.astype("<u4").tobytes())
    return b"".join(parts)


def model_from_bytes(data: bytes):
    if data[:4] != _MAGIC:
        raise ValueError("not a serialized model")
    kind, r, ndims = struct.unpack_from("<BBB", data, 4)
    dims = struct.unpack_from(f"<{ndims}I", data, 7)
    off = 7 + 4 * ndims

    def read_pmf():
        nonlocal off
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        counts = np.frombuffer(data, dtype="<u4", count=n, offset=off).astype(np.int64)
        off += 4 * n
        return QuantizedPmf(counts, r)

    if kind == 0:
        k_z, k_x = dims
        prior = read_pmf()
        likelihood = [read_pmf() for _ in range(k_z)]
        return MixtureModel(prior, likelihood)
    if kind == 1:
        k_z, k_x, num_steps = dims
        initial = read_pmf()
        transition = [read_pmf() for _ in range(k_z)]
        emission = [read_pmf() for _ in range(k_z)]
        return Hmm(initial, transition, emission, num_steps)
    raise ValueError(f"unknown model kind {kind}")
