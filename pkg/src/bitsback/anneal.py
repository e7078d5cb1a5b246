"""Annealed bits-back coding over a geometric path of tempered targets.

The path interpolates between the approximate posterior and the unnormalized
joint through ``f_i(z) = q(z|x)**(1-beta_i) * p(x,z)**beta_i``.  A chain of
Metropolis-Hastings kernels (uniform proposal) leaves each tempered law
invariant; the coder decodes the chain forward with those kernels and
re-encodes it backward with their reversals, so the net growth per symbol is
the negative log of the annealed importance weight.

The interleaved variant swaps each backward re-encode to immediately after
the matching forward decode, which bounds the initial bit requirement by a
constant instead of growing linearly in the number of steps.
"""

from __future__ import annotations

import numpy as np

from .ans import AnsMessage
from .codec import (QuantizedPmf, decode_symbol, encode_symbol, quantize_pmf,
                    sample_symbol, unsample_symbol)
from .elbo import CoderContext
from .models import MixtureModel


class AnnealingPath:
    """Tempered log-density ladder for one observation.

    ``betas`` runs from 0 (pure posterior) to 1 (unnormalized joint),
    strictly increasing.  Quantized kernel rows are memoized per path, i.e.
    per encoded symbol.
    """

    def __init__(self, ctx: CoderContext, x, num_levels: int | None = None,
                 schedule: str = "linear"):
        if not isinstance(ctx.model, MixtureModel):
            raise NotImplementedError("annealed coding needs a scalar latent")
        n = ctx.num_particles if num_levels is None else num_levels
        if schedule != "linear":
            raise ValueError(f"unknown schedule {schedule!r}")
        self.num_levels = n
        self.betas = np.linspace(0.0, 1.0, n + 1)
        self.log2_base = ctx.posterior.pmf_for(x).log2_probs
        self.log2_target = ctx.model.log2_joint_vector(x)
        self.precision = ctx.precision
        self.k = len(self.log2_base)
        self._log2_f = {}
        self._rows = {}

    def log2_f(self, i: int) -> np.ndarray:
        """log2 of the unnormalized tempered density at level ``i``."""
        if i not in self._log2_f:
            b = self.betas[i]
            self._log2_f[i] = (1.0 - b) * self.log2_base + b * self.log2_target
        return self._log2_f[i]

    def kernel_row(self, i: int, z: int) -> np.ndarray:
        """Transition row T_i(. | z): uniform proposal, MH acceptance."""
        lf = self.log2_f(i)
        row = np.minimum(1.0, np.exp2(lf - lf[z])) / self.k
        row[z] = 1.0 / self.k
        row[z] += 1.0 - row.sum()
        return row

    def reverse_row(self, i: int, z_next: int) -> np.ndarray:
        """Reversal row T~_i(. | z_next) = T_i(z_next | .) f_i(.) / f_i(z_next)."""
        lf = self.log2_f(i)
        col = np.minimum(1.0, np.exp2(lf[z_next] - lf)) / self.k
        fwd_self = np.minimum(1.0, np.exp2(lf - lf[z_next])) / self.k
        col[z_next] = 1.0 / self.k + (1.0 - fwd_self.sum())
        return col * np.exp2(lf - lf[z_next])

    def kernel_pmf(self, i: int, z: int) -> QuantizedPmf:
        key = (i, z, False)
        if key not in self._rows:
            self._rows[key] = quantize_pmf(self.kernel_row(i, z), self.precision)
        return self._rows[key]

    def reverse_pmf(self, i: int, z_next: int) -> QuantizedPmf:
        key = (i, z_next, True)
        if key not in self._rows:
            self._rows[key] = quantize_pmf(self.reverse_row(i, z_next), self.precision)
        return self._rows[key]


def mh_kernel_pmf(path: AnnealingPath, i: int, z: int) -> QuantizedPmf:
    return path.kernel_pmf(i, z)


def reverse_kernel_pmf(path: AnnealingPath, i: int, z_next: int) -> QuantizedPmf:
    return path.reverse_pmf(i, z_next)


def _decode_chain(msg: AnsMessage, x, ctx: CoderContext, path: AnnealingPath):
    q = ctx.posterior.pmf_for(x)
    zs = [sample_symbol(msg, q)]
    for i in range(1, path.num_levels):
        zs.append(sample_symbol(msg, path.kernel_pmf(i, zs[-1])))
    return zs


def bb_ais_encode(msg: AnsMessage, x, ctx: CoderContext,
                  path: AnnealingPath | None = None) -> None:
    """Decode the chain forward, re-encode it backward, encode the data.

    The final pushes are ordered reversal-encodes, then the observation,
    then the final latent with the model prior: the receiver must pop the
    observation before any tempered kernel becomes computable, so the
    observation sits above the reversal-encoded chain on the stack.
    """
    path = path or AnnealingPath(ctx, x)
    model = ctx.model
    zs = _decode_chain(msg, x, ctx, path)
    for i in range(1, path.num_levels):
        encode_symbol(msg, zs[i - 1], path.reverse_pmf(i, zs[i]))
    model.obs_push(msg, x, zs[-1])
    model.latent_push(msg, zs[-1])


def bb_ais_decode(msg: AnsMessage, ctx: CoderContext, num_levels: int | None = None):
    model = ctx.model
    z_last = model.latent_pop(msg)
    x = model.obs_pop(msg, z_last)
    path = AnnealingPath(ctx, x, num_levels)
    zs = [None] * path.num_levels
    zs[-1] = z_last
    for i in reversed(range(1, path.num_levels)):
        zs[i - 1] = decode_symbol(msg, path.reverse_pmf(i, zs[i]))
    for i in reversed(range(1, path.num_levels)):
        unsample_symbol(msg, zs[i], path.kernel_pmf(i, zs[i - 1]))
    ctx.model.q_push(msg, ctx.posterior, x, zs[0])
    return x


def bb_ais_bitswap_encode(msg: AnsMessage, x, ctx: CoderContext,
                          path: AnnealingPath | None = None) -> None:
    """Interleaved order: each level's reversal-encode follows its decode."""
    path = path or AnnealingPath(ctx, x)
    model = ctx.model
    q = ctx.posterior.pmf_for(x)
    z = sample_symbol(msg, q)
    for i in range(1, path.num_levels):
        z_next = sample_symbol(msg, path.kernel_pmf(i, z))
        encode_symbol(msg, z, path.reverse_pmf(i, z_next))
        z = z_next
    model.obs_push(msg, x, z)
    model.latent_push(msg, z)


def bb_ais_bitswap_decode(msg: AnsMessage, ctx: CoderContext,
                          num_levels: int | None = None):
    model = ctx.model
    z = model.latent_pop(msg)
    x = model.obs_pop(msg, z)
    path = AnnealingPath(ctx, x, num_levels)
    for i in reversed(range(1, path.num_levels)):
        z_prev = decode_symbol(msg, path.reverse_pmf(i, z))
        unsample_symbol(msg, z, path.kernel_pmf(i, z_prev))
        z = z_prev
    ctx.model.q_push(msg, ctx.posterior, x, z)
    return x


# -- bound and identities ------------------------------------------------------

def _sample_row(row: np.ndarray, rng: np.random.Generator) -> int:
    return int(np.searchsorted(np.cumsum(row), rng.random() * row.sum()))


def sample_chain(path: AnnealingPath, ctx: CoderContext, x,
                 rng: np.random.Generator) -> list[int]:
    """Draw a chain from the forward process with exact (real) kernel rows."""
    q = ctx.posterior.pmf_for(x)
    zs = [int(q.sample(rng))]
    for i in range(1, path.num_levels):
        zs.append(_sample_row(path.kernel_row(i, zs[-1]), rng))
    return zs


def log2_ais_weight(path: AnnealingPath, zs) -> float:
    """log2 prod_i f_i(z_i) / f_{i-1}(z_i) for a realized chain."""
    total = 0.0
    for i in range(1, path.num_levels + 1):
        total += float(path.log2_f(i)[zs[i - 1]] - path.log2_f(i - 1)[zs[i - 1]])
    return total


def ais_bound(ctx: CoderContext, x, rng: np.random.Generator,
              num_levels: int | None = None) -> float:
    """One-draw negative log annealed weight, in bits (exact-kernel chain)."""
    path = AnnealingPath(ctx, x, num_levels)
    return -log2_ais_weight(path, sample_chain(path, ctx, x, rng))


def ais_bound_mean(ctx: CoderContext, x, rng: np.random.Generator, redraws: int,
                   num_levels: int | None = None) -> float:
    """Mean of ``redraws`` bound draws; chains advance as one vector batch."""
    path = AnnealingPath(ctx, x, num_levels)
    q = ctx.posterior.pmf_for(x)
    states = q.sample(rng, redraws)
    acc = path.log2_f(1)[states] - path.log2_f(0)[states]
    cum_rows: dict[int, np.ndarray] = {}
    for i in range(1, path.num_levels):
        cum_rows.clear()
        us = rng.random(redraws)
        nxt = np.empty_like(states)
        for z in np.unique(states):
            sel = states == z
            if z not in cum_rows:
                cum_rows[z] = np.cumsum(path.kernel_row(i, int(z)))
            cum = cum_rows[z]
            nxt[sel] = np.searchsorted(cum, us[sel] * cum[-1])
        states = nxt
        acc += path.log2_f(i + 1)[states] - path.log2_f(i)[states]
    return float(-acc.mean())


def extended_space_identity_ais(ctx: CoderContext, x, zs,
                                num_levels: int | None = None) -> tuple[float, float]:
    """log2 P(x,Z)/Q(Z|x) from the kernel chain versus the annealed weight."""
    path = AnnealingPath(ctx, x, num_levels if num_levels is not None else len(zs))
    log_q = float(path.log2_f(0)[zs[0]])
    log_p = float(path.log2_f(path.num_levels)[zs[-1]])
    for i in range(1, path.num_levels):
        log_q += np.log2(path.kernel_row(i, zs[i - 1])[zs[i]])
        log_p += np.log2(path.reverse_row(i, zs[i])[zs[i - 1]])
    return log_p - log_q, log2_ais_weight(path, zs)
