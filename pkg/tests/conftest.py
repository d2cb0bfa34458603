import numpy as np
import pytest


def random_dictionary_matrix(rng, m, k):
    """Gaussian atoms scaled to unit norm."""
    D = rng.standard_normal((m, k))
    return D / np.linalg.norm(D, axis=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_problem(rng):
    """A 12 x 20 unit-norm dictionary and one signal."""
    D = random_dictionary_matrix(rng, 12, 20)
    x = rng.standard_normal(12)
    return x, D


@pytest.fixture
def planted():
    """Unit-norm signals from a planted 16 x 8 dictionary, 3 atoms per signal."""
    from data_io import preprocess, synth_planted
    X, D = synth_planted(16, 8, 600, 3, noise=0.01, rng_seed=7)
    return preprocess(X, center=False, normalize=True), D
