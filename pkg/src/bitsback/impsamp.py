"""Importance-sampling bits-back coders, plain and coupled.

The plain coder decodes ``N`` posterior particles plus a selector index and
re-encodes everything through the matching generative construction; its
expected net growth is the negative log-average importance weight.  The
coupled variant decodes a single uniform and derives all particles from it
through bijective shifts, cutting the initial bit cost from O(N) to
O(log N) while keeping the same net bitrate.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .ans import AnsMessage
from .codec import (QuantizedPmf, decode_symbol, encode_symbol,
                    pop_uniform_in_set, push_uniform_in_set, quantize_pmf,
                    sample_symbol, sample_uniform, uniform_pmf,
                    unsample_symbol, unsample_uniform)
from .elbo import CoderContext
from .models import MixtureModel


# -- importance weights ------------------------------------------------------

def log2_weights(ctx: CoderContext, x, particles) -> np.ndarray:
    """log2 of w_i = p(x, z_i) / q(z_i | x) for a batch of particles."""
    zs = np.asarray(particles)
    return (ctx.model.log2_joint_batch(x, zs)
            - ctx.model.log2_q_batch(ctx.posterior, x, zs))


def log2_mean_weight(log_w: np.ndarray) -> float:
    """log2 of the average weight: the marginal-likelihood estimate."""
    return float(np.logaddexp2.reduce(log_w) - np.log2(len(log_w)))


def index_pmf(log_w: np.ndarray, index_precision: int) -> QuantizedPmf:
    """Quantized categorical over particle indices, proportional to weights."""
    w = np.exp2(log_w - log_w.max())
    return quantize_pmf(w, index_precision)


@lru_cache(maxsize=64)
def _uniform_index_pmf(n: int, index_precision: int) -> QuantizedPmf:
    return uniform_pmf(n, index_precision)


# -- shift couplings ---------------------------------------------------------

IID_SHIFTS = "iid_shifts"
PERMUTATION_SHIFTS = "permutation_shifts"
EXHAUSTIVE = "exhaustive"
COUPLING_MODES = (IID_SHIFTS, PERMUTATION_SHIFTS, EXHAUSTIVE)


@dataclass(frozen=True)
class ShiftCoupling:
    """Fixed modular shifts driving coupled particles from one uniform.

    ``T_i(u) = (u + shifts[i]) mod 2**r`` is bijective for every shift.  The
    first shift is always 0 so the first particle rides the raw uniform.
    Sender and receiver must construct the coupling from the same
    ``(mode, seed, n, r)``.
    """

    mode: str
    seed: int
    n: int
    r: int
    shifts: np.ndarray

    def apply_all(self, u1: int) -> np.ndarray:
        return (u1 + self.shifts) % (1 << self.r)

    def invert(self, i: int, u: int) -> int:
        return int((u - int(self.shifts[i])) % (1 << self.r))

    def spec(self) -> dict:
        return {"mode": self.mode, "seed": self.seed, "n": self.n, "r": self.r}


def make_coupling(mode: str, n: int, r: int, seed: int = 0) -> ShiftCoupling:
    size = 1 << r
    if n > size:
        raise ValueError(f"coupling needs n <= 2**r, got n={n}, r={r}")
    if mode == IID_SHIFTS:
        shifts = np.random.default_rng([seed, 404]).integers(0, size, n)
        shifts[0] = 0
    elif mode == PERMUTATION_SHIFTS:
        rng = np.random.default_rng([seed, 404])
        shifts = np.concatenate([[0], rng.choice(np.arange(1, size), n - 1, replace=False)])
    elif mode == EXHAUSTIVE:
        if n != size:
            raise ValueError(f"exhaustive coupling needs n == 2**r == {size}, got {n}")
        shifts = np.arange(n)
    else:
        raise ValueError(f"unknown coupling mode {mode!r}")
    return ShiftCoupling(mode, seed, n, r, shifts.astype(np.int64))


# -- BB-IS --------------------------------------------------------------------

def bb_is_encode(msg: AnsMessage, x, ctx: CoderContext) -> None:
    model, posterior, n = ctx.model, ctx.posterior, ctx.num_particles
    # decode N particles i.i.d. with q(z|x)
    particles = [model.q_pop(msg, posterior, x) for _ in range(n)]
    # decode the selector with the weight categorical
    log_w = log2_weights(ctx, x, particles)
    j = sample_symbol(msg, index_pmf(log_w, ctx.index_precision))
    # re-encode everything through the generative construction
    for i in range(n):
        if i != j:
            model.q_push(msg, posterior, x, particles[i])
    model.obs_push(msg, x, particles[j])
    model.latent_push(msg, particles[j])
    encode_symbol(msg, j, _uniform_index_pmf(n, ctx.index_precision))


def bb_is_decode(msg: AnsMessage, ctx: CoderContext):
    model, posterior, n = ctx.model, ctx.posterior, ctx.num_particles
    j = decode_symbol(msg, _uniform_index_pmf(n, ctx.index_precision))
    z_j = model.latent_pop(msg)
    x = model.obs_pop(msg, z_j)
    particles = [None] * n
    particles[j] = z_j
    for i in reversed(range(n)):
        if i != j:
            particles[i] = model.q_pop(msg, posterior, x)
    log_w = log2_weights(ctx, x, particles)
    unsample_symbol(msg, j, index_pmf(log_w, ctx.index_precision))
    for i in reversed(range(n)):
        model.q_push(msg, posterior, x, particles[i])
    return x


def iwae_bound(ctx: CoderContext, x, rng: np.random.Generator, particles=None) -> float:
    """One-draw negative log-average-weight estimate, in bits.

    Pass ``particles`` explicitly to evaluate a fixed particle system (for
    instance the full latent alphabet, which recovers the exact marginal
    under a uniform posterior).
    """
    if particles is None:
        particles = ctx.model.sample_q(ctx.posterior, x, rng, ctx.num_particles)
    return -log2_mean_weight(log2_weights(ctx, x, particles))


def iwae_bound_mean(ctx: CoderContext, x, rng: np.random.Generator, redraws: int) -> float:
    """Mean of ``redraws`` independent bound draws, vectorized."""
    model, posterior = ctx.model, ctx.posterior
    zs = model.sample_q(posterior, x, rng, redraws * ctx.num_particles)
    zs = np.asarray(zs).reshape(redraws, ctx.num_particles, -1)
    if zs.shape[-1] == 1:
        zs = zs[..., 0]
    vals = np.empty(redraws)
    for k in range(redraws):
        vals[k] = -log2_mean_weight(log2_weights(ctx, x, zs[k]))
    return float(vals.mean())


def extended_space_identity_is(ctx: CoderContext, x, draw) -> tuple[float, float]:
    """log2 P(x,Z)/Q(Z|x) versus log2 of the realized weight average.

    ``draw`` is a full ``(particles, j)`` realization.  The two sides agree
    identically; this is the algebra that makes the coder's net growth equal
    the estimator's log.
    """
    particles, j = draw
    log_w = log2_weights(ctx, x, particles)
    n = len(log_w)
    log_q_sum = float(ctx.model.log2_q_batch(ctx.posterior, x, np.asarray(particles)).sum())
    log_wtilde_j = float(log_w[j] - np.logaddexp2.reduce(log_w))
    log_num = (-np.log2(n) + ctx.model.log2_joint(x, particles[j])
               + log_q_sum - ctx.model.log2_q(ctx.posterior, x, particles[j]))
    log_den = log_wtilde_j + log_q_sum
    return log_num - log_den, log2_mean_weight(log_w)


# -- BB-CIS -------------------------------------------------------------------

def _cis_particles(ctx: CoderContext, x, coupling: ShiftCoupling, u1: int):
    q = ctx.posterior.pmf_for(x)
    us = coupling.apply_all(u1)
    zs = q.inv_cdf_many(us)
    return q, us, zs


def bb_cis_encode(msg: AnsMessage, x, ctx: CoderContext, coupling: ShiftCoupling) -> None:
    if not isinstance(ctx.model, MixtureModel):
        raise NotImplementedError("coupled importance sampling needs a scalar latent")
    model, n = ctx.model, ctx.num_particles
    # decode one shared uniform; all particles are deterministic shifts of it
    u1 = sample_uniform(msg, coupling.r)
    q, us, zs = _cis_particles(ctx, x, coupling, u1)
    log_w = log2_weights(ctx, x, zs)
    j = sample_symbol(msg, index_pmf(log_w, ctx.index_precision))
    # the selected particle's uniform is coded within its inverse-CDF run
    push_uniform_in_set(msg, int(us[j]), q)
    model.obs_push(msg, x, int(zs[j]))
    model.latent_push(msg, int(zs[j]))
    encode_symbol(msg, j, _uniform_index_pmf(n, ctx.index_precision))


def bb_cis_decode(msg: AnsMessage, ctx: CoderContext, coupling: ShiftCoupling):
    model, n = ctx.model, ctx.num_particles
    j = decode_symbol(msg, _uniform_index_pmf(n, ctx.index_precision))
    z_j = model.latent_pop(msg)
    x = model.obs_pop(msg, z_j)
    q = ctx.posterior.pmf_for(x)
    u_j = pop_uniform_in_set(msg, z_j, q)
    u1 = coupling.invert(j, u_j)
    q, us, zs = _cis_particles(ctx, x, coupling, u1)
    log_w = log2_weights(ctx, x, zs)
    unsample_symbol(msg, j, index_pmf(log_w, ctx.index_precision))
    unsample_uniform(msg, u1, coupling.r)
    return x


def cis_estimator(ctx: CoderContext, x, coupling: ShiftCoupling, u1: int) -> float:
    """Negative log of the coupled-average weight for a given base uniform."""
    _, _, zs = _cis_particles(ctx, x, coupling, u1)
    return -log2_mean_weight(log2_weights(ctx, x, zs))


def cis_estimator_mean(ctx: CoderContext, x, coupling: ShiftCoupling,
                       rng: np.random.Generator, redraws: int) -> float:
    u1s = rng.integers(0, 1 << coupling.r, redraws)
    return float(np.mean([cis_estimator(ctx, x, coupling, int(u)) for u in u1s]))
