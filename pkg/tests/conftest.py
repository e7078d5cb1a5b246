"""Shared fixtures: micro models small enough for exhaustive oracles."""

import numpy as np
import pytest

from bitsback.models import (Hmm, MixtureModel, UniformPosterior, gen_hmm,
                             gen_mixture)


@pytest.fixture(scope="session")
def mixture():
    """Default-scale mixture (64 observations, 256 latents, r=16)."""
    return gen_mixture(11)


@pytest.fixture(scope="session")
def micro_mixture():
    """Tiny mixture whose joint fits in a few hundred states."""
    return gen_mixture(11, k_x=8, k_z=16, r=16)


@pytest.fixture(scope="session")
def hmm():
    """Default-scale HMM (16 observations, 32 latents, 10 steps)."""
    return gen_hmm(13)


@pytest.fixture(scope="session")
def micro_hmm():
    """T=3, 4x4 HMM: all 64 observation sequences are enumerable."""
    return gen_hmm(13, k_x=4, k_z=4, num_steps=3)


@pytest.fixture()
def rng():
    return np.random.default_rng(99)


def uniform_posterior_for(model):
    return UniformPosterior(model.k_z, model.r)


@pytest.fixture(scope="session")
def mixture_posterior(mixture):
    return uniform_posterior_for(mixture)


@pytest.fixture(scope="session")
def micro_mixture_posterior(micro_mixture):
    return uniform_posterior_for(micro_mixture)


@pytest.fixture(scope="session")
def hmm_posterior(hmm):
    return uniform_posterior_for(hmm)


@pytest.fixture(scope="session")
def micro_hmm_posterior(micro_hmm):
    return uniform_posterior_for(micro_hmm)
