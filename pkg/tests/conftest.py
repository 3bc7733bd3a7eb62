import numpy as np
import pytest

from graphar.features import fit_svd_projection
from graphar.generator import GeneratorParams, generate
from graphar.objectives import make_problem


def random_problem(seed, n=6, T=3, d=2):
    """Problem data from a random dense sequence and its top-``d`` SVD projection."""
    rng = np.random.default_rng(seed)
    seq = list(rng.standard_normal((T + 1, n, n)))
    return make_problem(seq, fit_svd_projection(np.sum(seq, axis=0), d))


def synthetic_problem(seed, n=10, T=6, r=2, d=2, sigma=0.5):
    inst = generate(GeneratorParams(n=n, T=T, r=r, sigma=sigma, seed=seed))
    obs = inst.observed
    return make_problem(obs, fit_svd_projection(np.sum(obs, axis=0), d)), inst


@pytest.fixture
def problem():
    return random_problem(0)
