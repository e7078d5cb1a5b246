"""Bits-back lossless coding with Monte Carlo marginal-likelihood estimators.

Layers, bottom up: ``ans`` (streaming rANS message), ``codec`` (quantized
PMFs and symbol coding), ``models`` (toy mixture / HMM with exact oracles),
the coder families (``elbo``, ``impsamp``, ``anneal``, ``smc``), and the
benchmark ``harness`` with its ``cli``.
"""

from .ans import AnsMessage, AnsUnderflowError, ans_init
from .codec import QuantizedPmf, quantize_pmf, uniform_pmf
from .elbo import CoderContext
from .models import Hmm, MixtureModel, UniformPosterior, gen_hmm, gen_mixture

__all__ = [
    "AnsMessage",
    "AnsUnderflowError",
    "ans_init",
    "QuantizedPmf",
    "quantize_pmf",
    "uniform_pmf",
    "CoderContext",
    "MixtureModel",
    "Hmm",
    "UniformPosterior",
    "gen_mixture",
    "gen_hmm",
]

__version__ = "0.1.0"
