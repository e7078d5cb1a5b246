"""Plain bits-back coding and the exact single-sample bound.

Encoding first *decodes* a latent from the message with the approximate
posterior, then encodes the observation and latent jointly with the model:
the posterior bits are recovered, so the net growth per symbol is
``-log2 p(x, z) + log2 q(z | x)``.  Decoding runs the mirror image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ans import AnsMessage
from .models import Hmm, MixtureModel

DEFAULT_INDEX_PRECISION = 24


@dataclass
class CoderContext:
    """Everything a coder call needs besides the message itself.

    ``num_particles`` is the particle count (or annealing-step count);
    ``precision`` defaults to the model's PMF precision and governs
    couplings; ``index_precision`` governs the categorical used to code
    particle indices, kept high so quantizing tiny importance weights does
    not distort rates.
    """

    model: MixtureModel | Hmm
    posterior: object
    num_particles: int = 1
    coupling: object = None
    precision: int | None = None
    index_precision: int = DEFAULT_INDEX_PRECISION
    _extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.num_particles < 1:
            raise ValueError("num_particles must be >= 1")
        if self.precision is None:
            self.precision = self.model.r


def bb_elbo_encode(msg: AnsMessage, x, ctx: CoderContext) -> None:
    # decode z with q(z|x), then push (x, z) with the joint model
    z = ctx.model.q_pop(msg, ctx.posterior, x)
    ctx.model.joint_push(msg, x, z)


def bb_elbo_decode(msg: AnsMessage, ctx: CoderContext):
    # pop (x, z) with the joint model, then return the q(z|x) bits
    x, z = ctx.model.joint_pop(msg)
    ctx.model.q_push(msg, ctx.posterior, x, z)
    return x


def negative_elbo(ctx: CoderContext, x) -> float:
    """Exact E_q[log2 q(z|x) - log2 p(x, z)] in bits, no sampling.

    For the mixture the expectation is a full sum over the latent alphabet.
    For the HMM (uniform posterior only) it factorizes over timesteps and is
    summed exactly from the per-step tables.
    """
    model, posterior = ctx.model, ctx.posterior
    if isinstance(model, MixtureModel):
        pmf = posterior.pmf_for(x)
        q = pmf.probs
        sup = q > 0
        lq = pmf.log2_probs[sup]
        lj = model.log2_joint_vector(x)[sup]
        return float(np.sum(q[sup] * (lq - lj)))
    if not getattr(posterior, "is_uniform", False):
        raise NotImplementedError("exact HMM bound requires a uniform posterior")
    xs = np.asarray(x)
    t_steps = model.num_steps
    e_log_q = -t_steps * np.log2(posterior.k)
    e_log_joint = (model.log2_init.mean()
                   + (t_steps - 1) * model.log2_trans.mean()
                   + model.log2_emis[:, xs].mean(axis=0).sum())
    return float(e_log_q - e_log_joint)
