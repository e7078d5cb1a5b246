"""Particle-filter bits-back coding for the hidden Markov model.

The encoder runs a full particle sweep by decoding every proposal draw and
every resampling index from the message (resampling at every step), selects
one surviving trajectory, and re-encodes: the special trajectory goes
through the model (transition/emission), everything else goes back through
the distributions it was decoded with.  Net growth per sequence equals the
negative log of the realized product-of-mean-weights estimate.

The coupled variant decodes just one shared uniform per proposal round and
one per resampling round, deriving all per-particle draws through bijective
shifts; its initial bit cost is (2T-1)r - log(final selector weight) instead
of O(NT).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ans import AnsMessage
from .codec import (decode_symbol, encode_symbol, pop_uniform_in_set,
                    push_uniform_in_set, quantize_pmf, sample_symbol,
                    sample_uniform, unsample_symbol, unsample_uniform)
from .elbo import CoderContext
from .impsamp import ShiftCoupling, _uniform_index_pmf, index_pmf, make_coupling
from .models import Hmm


def trace_back(states, ancestors, idx: int, t: int) -> tuple[int, ...]:
    """Trajectory ending in particle ``idx`` at step ``t`` (1-based length).

    ``states[k][i]`` is particle ``i``'s latent at step ``k``;
    ``ancestors[k][i]`` is the parent index chosen between steps ``k`` and
    ``k+1``.  Walks parent pointers backward and reads the states out
    forward.
    """
    lineage = [0] * t
    lineage[t - 1] = idx
    for k in reversed(range(t - 1)):
        lineage[k] = ancestors[k][lineage[k + 1]]
    return tuple(states[k][lineage[k]] for k in range(t))


def _step_log_weights(model: Hmm, ctx: CoderContext, x_t: int, t: int,
                      z_t: np.ndarray, z_prev: np.ndarray | None) -> np.ndarray:
    """log2 w_t^i = log2 f + log2 g - log2 q per particle."""
    z_t = np.asarray(z_t)
    if t == 0:
        lf = model.log2_init[z_t]
    else:
        lf = model.log2_trans[np.asarray(z_prev), z_t]
    lg = model.log2_emis[z_t, x_t]
    lq = ctx.posterior.pmf_for(None).log2_probs[z_t]
    return lf + lg - lq


def _lineage(ancestors, j: int, t_len: int) -> list[int]:
    lineage = [0] * t_len
    lineage[-1] = j
    for t in reversed(range(t_len - 1)):
        lineage[t] = ancestors[t][lineage[t + 1]]
    return lineage


# -- BB-SMC -------------------------------------------------------------------

def bb_smc_encode(msg: AnsMessage, xs, ctx: CoderContext) -> None:
    model, n = ctx.model, ctx.num_particles
    xs = [int(v) for v in xs]
    t_len = len(xs)
    q_pmf = ctx.posterior.pmf_for(None)

    states: list[list[int]] = []
    ancestors: list[list[int]] = []
    anc_pmfs = []
    log_w_steps = []
    parent_states: np.ndarray | None = None

    for t in range(t_len):
        if t > 0:
            anc_pmf = index_pmf(log_w_steps[t - 1], ctx.index_precision)
            anc_pmfs.append(anc_pmf)
            # decode parent indices for every particle
            a_t = [sample_symbol(msg, anc_pmf) for _ in range(n)]
            ancestors.append(a_t)
            parent_states = np.asarray(states[t - 1])[a_t]
        # decode every particle's proposal draw
        z_t = [sample_symbol(msg, q_pmf) for _ in range(n)]
        states.append(z_t)
        log_w_steps.append(_step_log_weights(model, ctx, xs[t], t, z_t, parent_states))

    final_pmf = index_pmf(log_w_steps[-1], ctx.index_precision)
    j = sample_symbol(msg, final_pmf)
    lineage = _lineage(ancestors, j, t_len)

    # backward pass: re-encode everything, routing the special trajectory
    # through the model
    idx_uniform = _uniform_index_pmf(n, ctx.index_precision)
    for t in reversed(range(t_len)):
        b_t = lineage[t]
        for i in range(n):
            if i != b_t:
                encode_symbol(msg, states[t][i], q_pmf)
        encode_symbol(msg, xs[t], model.emission[states[t][b_t]])
        if t == 0:
            encode_symbol(msg, states[0][b_t], model.initial)
        else:
            encode_symbol(msg, states[t][b_t], model.transition[states[t - 1][lineage[t - 1]]])
            for i in range(n):
                if i != b_t:
                    encode_symbol(msg, ancestors[t - 1][i], anc_pmfs[t - 1])
        encode_symbol(msg, b_t, idx_uniform)


def bb_smc_decode(msg: AnsMessage, ctx: CoderContext, t_len: int | None = None):
    model, n = ctx.model, ctx.num_particles
    t_len = model.num_steps if t_len is None else t_len
    q_pmf = ctx.posterior.pmf_for(None)
    idx_uniform = _uniform_index_pmf(n, ctx.index_precision)

    xs: list[int] = []
    states: list[list[int]] = []
    ancestors: list[list[int]] = []
    anc_pmfs = []
    log_w_steps = []
    lineage: list[int] = []

    # reconstruct the sweep forward
    for t in range(t_len):
        b_t = decode_symbol(msg, idx_uniform)
        lineage.append(b_t)
        a_t = [0] * n
        if t > 0:
            anc_pmf = index_pmf(log_w_steps[t - 1], ctx.index_precision)
            anc_pmfs.append(anc_pmf)
            for i in reversed(range(n)):
                if i != b_t:
                    a_t[i] = decode_symbol(msg, anc_pmf)
            a_t[b_t] = lineage[t - 1]
            ancestors.append(a_t)
        if t == 0:
            z_b = decode_symbol(msg, model.initial)
        else:
            z_b = decode_symbol(msg, model.transition[states[t - 1][lineage[t - 1]]])
        x_t = decode_symbol(msg, model.emission[z_b])
        xs.append(x_t)
        z_t = [0] * n
        z_t[b_t] = z_b
        for i in reversed(range(n)):
            if i != b_t:
                z_t[i] = decode_symbol(msg, q_pmf)
        states.append(z_t)
        parent_states = np.asarray(states[t - 1])[a_t] if t > 0 else None
        log_w_steps.append(_step_log_weights(model, ctx, x_t, t, z_t, parent_states))

    # return the borrowed bits: selector, then the whole forward sweep
    unsample_symbol(msg, lineage[-1], index_pmf(log_w_steps[-1], ctx.index_precision))
    for t in reversed(range(t_len)):
        for i in reversed(range(n)):
            unsample_symbol(msg, states[t][i], q_pmf)
        if t > 0:
            for i in reversed(range(n)):
                unsample_symbol(msg, ancestors[t - 1][i], anc_pmfs[t - 1])
    return tuple(xs)


# -- BB-CSMC ------------------------------------------------------------------

@dataclass(frozen=True)
class SmcCoupling:
    """Per-step shift couplings for states and resampling indices."""

    seed: int
    n: int
    r: int
    state: list[ShiftCoupling]
    ancestor: list[ShiftCoupling]

    def spec(self) -> dict:
        return {"mode": "iid_shifts", "seed": self.seed, "n": self.n, "r": self.r}


def make_smc_coupling(n: int, r: int, t_len: int, seed: int = 0) -> SmcCoupling:
    state = [make_coupling("iid_shifts", n, r, seed * 10007 + 2 * t) for t in range(t_len)]
    ancestor = [make_coupling("iid_shifts", n, r, seed * 10007 + 2 * t + 1)
                for t in range(t_len - 1)]
    return SmcCoupling(seed, n, r, state, ancestor)


def bb_csmc_encode(msg: AnsMessage, xs, ctx: CoderContext,
                   coupling: SmcCoupling) -> None:
    model, n = ctx.model, ctx.num_particles
    xs = [int(v) for v in xs]
    t_len = len(xs)
    q_pmf = ctx.posterior.pmf_for(None)
    r = ctx.precision

    states: list[np.ndarray] = []
    state_us: list[np.ndarray] = []
    anc_us: list[np.ndarray] = []
    ancestors: list[np.ndarray] = []
    anc_pmfs = []
    log_w_steps = []
    parent_states = None

    for t in range(t_len):
        if t > 0:
            # the resampling categorical must live at the coupling precision
            # so the shared uniform indexes it through the inverse CDF
            anc_pmf = quantize_pmf(np.exp2(log_w_steps[t - 1] - log_w_steps[t - 1].max()), r)
            anc_pmfs.append(anc_pmf)
            v_t = sample_uniform(msg, r)
            vs = coupling.ancestor[t - 1].apply_all(v_t)
            a_t = anc_pmf.inv_cdf_many(vs)
            anc_us.append(vs)
            ancestors.append(a_t)
            parent_states = states[t - 1][a_t]
        u_t = sample_uniform(msg, r)
        us = coupling.state[t].apply_all(u_t)
        z_t = q_pmf.inv_cdf_many(us)
        state_us.append(us)
        states.append(z_t)
        log_w_steps.append(_step_log_weights(model, ctx, xs[t], t, z_t, parent_states))

    j = sample_symbol(msg, index_pmf(log_w_steps[-1], ctx.index_precision))
    lineage = _lineage([list(map(int, a)) for a in ancestors], j, t_len)

    idx_uniform = _uniform_index_pmf(n, ctx.index_precision)
    for t in reversed(range(t_len)):
        b_t = lineage[t]
        push_uniform_in_set(msg, int(state_us[t][b_t]), q_pmf)
        encode_symbol(msg, xs[t], model.emission[int(states[t][b_t])])
        if t == 0:
            encode_symbol(msg, int(states[0][b_t]), model.initial)
        else:
            encode_symbol(msg, int(states[t][b_t]),
                          model.transition[int(states[t - 1][lineage[t - 1]])])
            push_uniform_in_set(msg, int(anc_us[t - 1][b_t]), anc_pmfs[t - 1])
        encode_symbol(msg, b_t, idx_uniform)


def bb_csmc_decode(msg: AnsMessage, ctx: CoderContext, coupling: SmcCoupling,
                   t_len: int | None = None):
    model, n = ctx.model, ctx.num_particles
    t_len = model.num_steps if t_len is None else t_len
    q_pmf = ctx.posterior.pmf_for(None)
    r = ctx.precision
    idx_uniform = _uniform_index_pmf(n, ctx.index_precision)

    xs: list[int] = []
    states: list[np.ndarray] = []
    anc_pmfs = []
    log_w_steps = []
    lineage: list[int] = []
    shared_us: list[int] = []
    shared_vs: list[int] = []

    for t in range(t_len):
        b_t = decode_symbol(msg, idx_uniform)
        lineage.append(b_t)
        parent_states = None
        if t > 0:
            anc_pmf = quantize_pmf(np.exp2(log_w_steps[t - 1] - log_w_steps[t - 1].max()), r)
            anc_pmfs.append(anc_pmf)
            v_b = pop_uniform_in_set(msg, lineage[t - 1], anc_pmf)
            v_t = coupling.ancestor[t - 1].invert(b_t, v_b)
            shared_vs.append(v_t)
            vs = coupling.ancestor[t - 1].apply_all(v_t)
            a_t = anc_pmf.inv_cdf_many(vs)
            parent_states = states[t - 1][a_t]
        if t == 0:
            z_b = decode_symbol(msg, model.initial)
        else:
            z_b = decode_symbol(msg, model.transition[int(states[t - 1][lineage[t - 1]])])
        x_t = decode_symbol(msg, model.emission[z_b])
        xs.append(x_t)
        u_b = pop_uniform_in_set(msg, z_b, q_pmf)
        u_t = coupling.state[t].invert(b_t, u_b)
        shared_us.append(u_t)
        us = coupling.state[t].apply_all(u_t)
        z_t = q_pmf.inv_cdf_many(us)
        states.append(z_t)
        log_w_steps.append(_step_log_weights(model, ctx, x_t, t, z_t, parent_states))

    unsample_symbol(msg, lineage[-1], index_pmf(log_w_steps[-1], ctx.index_precision))
    for t in reversed(range(t_len)):
        unsample_uniform(msg, shared_us[t], r)
        if t > 0:
            unsample_uniform(msg, shared_vs[t - 1], r)
    return tuple(xs)


# -- bound --------------------------------------------------------------------

def fivo_bound(ctx: CoderContext, xs, rng: np.random.Generator) -> float:
    """One pseudorandom sweep's negative log product-of-mean-weights."""
    model, n = ctx.model, ctx.num_particles
    xs = np.asarray(xs)
    total = 0.0
    z_t = ctx.posterior.pmf_for(None).sample(rng, n)
    log_w = _step_log_weights(model, ctx, int(xs[0]), 0, z_t, None)
    total += float(np.logaddexp2.reduce(log_w) - np.log2(n))
    for t in range(1, len(xs)):
        w = np.exp2(log_w - log_w.max())
        parents = rng.choice(n, size=n, p=w / w.sum())
        z_prev = z_t[parents]
        z_t = ctx.posterior.pmf_for(None).sample(rng, n)
        log_w = _step_log_weights(model, ctx, int(xs[t]), t, z_t, z_prev)
        total += float(np.logaddexp2.reduce(log_w) - np.log2(n))
    return -total


def fivo_bound_mean(ctx: CoderContext, xs, rng: np.random.Generator,
                    redraws: int) -> float:
    """Mean of ``redraws`` sweeps, advanced together as a batch."""
    model, n = ctx.model, ctx.num_particles
    xs = np.asarray(xs)
    q_pmf = ctx.posterior.pmf_for(None)
    z_t = q_pmf.sample(rng, (redraws, n))
    log_w = _batch_step_log_weights(model, ctx, int(xs[0]), 0, z_t, None)
    total = np.logaddexp2.reduce(log_w, axis=1) - np.log2(n)
    for t in range(1, len(xs)):
        w = np.exp2(log_w - log_w.max(axis=1, keepdims=True))
        cum = np.cumsum(w, axis=1)
        u = rng.random((redraws, n)) * cum[:, -1:]
        parents = np.argmax(cum[:, None, :] > u[:, :, None], axis=2)
        z_prev = np.take_along_axis(z_t, parents, axis=1)
        z_t = q_pmf.sample(rng, (redraws, n))
        log_w = _batch_step_log_weights(model, ctx, int(xs[t]), t, z_t, z_prev)
        total += np.logaddexp2.reduce(log_w, axis=1) - np.log2(n)
    return float(-total.mean())


def _batch_step_log_weights(model: Hmm, ctx: CoderContext, x_t: int, t: int,
                            z_t: np.ndarray, z_prev: np.ndarray | None) -> np.ndarray:
    if t == 0:
        lf = model.log2_init[z_t]
    else:
        lf = model.log2_trans[z_prev, z_t]
    lg = model.log2_emis[z_t, x_t]
    lq = ctx.posterior.pmf_for(None).log2_probs[z_t]
    return lf + lg - lq


def extended_space_identity_smc(ctx: CoderContext, xs, draw) -> tuple[float, float]:
    """log2 P/Q of a realized sweep versus its product-of-mean-weights.

    ``draw`` is ``(states, ancestors, j)`` with real-valued (unquantized)
    resampling probabilities assumed on both sides.
    """
    model, n = ctx.model, ctx.num_particles
    xs = np.asarray(xs)
    states, ancestors, j = draw
    t_len = len(xs)
    q_log = ctx.posterior.pmf_for(None).log2_probs

    log_w_steps = []
    log_wt = []  # normalized log weights per step
    parent_states = None
    for t in range(t_len):
        z_t = np.asarray(states[t])
        if t > 0:
            parent_states = np.asarray(states[t - 1])[np.asarray(ancestors[t - 1])]
        lw = _step_log_weights(model, ctx, int(xs[t]), t, z_t, parent_states)
        log_w_steps.append(lw)
        log_wt.append(lw - np.logaddexp2.reduce(lw))

    lineage = _lineage(ancestors, j, t_len)
    traj = [states[t][lineage[t]] for t in range(t_len)]

    # Q: every proposal draw, every ancestor choice, and the final selector
    log_q = float(log_wt[-1][j])
    for t in range(t_len):
        log_q += float(q_log[np.asarray(states[t])].sum())
        if t > 0:
            log_q += float(log_wt[t - 1][np.asarray(ancestors[t - 1])].sum())

    # P: uniform lineage, model for the special trajectory, Q-terms for the rest
    log_p = -t_len * np.log2(n) + model.log2_joint(xs, np.asarray(traj))
    for t in range(t_len):
        for i in range(n):
            if i != lineage[t]:
                log_p += float(q_log[states[t][i]])
                if t > 0:
                    log_p += float(log_wt[t - 1][ancestors[t - 1][i]])

    estimate = sum(float(np.logaddexp2.reduce(lw) - np.log2(n)) for lw in log_w_steps)
    return log_p - log_q, estimate


def sample_sweep(ctx: CoderContext, xs, rng: np.random.Generator):
    """Draw (states, ancestors, j) from the sweep's proposal process."""
    model, n = ctx.model, ctx.num_particles
    xs = np.asarray(xs)
    states, ancestors = [], []
    parent_states = None
    log_w = None
    for t in range(len(xs)):
        if t > 0:
            w = np.exp2(log_w - log_w.max())
            a_t = rng.choice(n, size=n, p=w / w.sum())
            ancestors.append([int(a) for a in a_t])
            parent_states = np.asarray(states[t - 1])[a_t]
        z_t = ctx.posterior.pmf_for(None).sample(rng, n)
        states.append([int(z) for z in z_t])
        log_w = _step_log_weights(model, ctx, int(xs[t]), t, z_t, parent_states)
    w = np.exp2(log_w - log_w.max())
    j = int(rng.choice(n, p=w / w.sum()))
    return states, ancestors, j
