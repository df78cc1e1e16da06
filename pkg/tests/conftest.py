import numpy as np
import pytest

from fate.data import Dataset, synthetic_biased


def make_ds(x, y, a, w=None, sources=None):
    """Dataset from plain lists; ``x`` may be 1-D."""
    return Dataset(np.asarray(x, dtype=float), y, a, w, feature_sources=sources)


def cells_ds(counts, seed=0, d=2):
    """Random features with exact (y, a) cell counts ``{(y, a): n}``."""
    rng = np.random.default_rng(seed)
    y, a = [], []
    for (yy, aa), c in sorted(counts.items()):
        y += [yy] * c
        a += [aa] * c
    return Dataset(rng.normal(size=(len(y), d)), y, a)


@pytest.fixture(scope="session")
def biased1000():
    return synthetic_biased(1000, 0.3, 7)


@pytest.fixture(scope="session")
def small_biased():
    return synthetic_biased(300, 0.3, 5)
