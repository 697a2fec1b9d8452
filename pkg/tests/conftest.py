import numpy as np
import pytest

from survgam.data import make_dataset


@pytest.fixture
def three_subject_dataset():
    """A(x=1, T=1, event), B(x=0, T=2, event), C(x=1, T=3, censored)."""
    return make_dataset(
        entry=[0.0, 0.0, 0.0],
        time=[1.0, 2.0, 3.0],
        event=[1, 1, 0],
        covariates=[[1.0], [0.0], [1.0]],
        covariate_names=["x"],
        subject_ids=["A", "B", "C"],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_survival_dataset(rng, n, p=3, censor_scale=2.0, entry_frac=0.0):
    """Exponential lifetimes with uniform censoring; optional delayed entry."""
    x = rng.normal(size=(n, p))
    beta = rng.normal(0, 0.4, size=p)
    t = rng.exponential(1.0 / np.exp(x @ beta))
    c = rng.uniform(0.1, censor_scale, size=n)
    time = np.minimum(t, c)
    event = (t <= c).astype(int)
    entry = rng.uniform(0, entry_frac * time) if entry_frac else np.zeros(n)
    keep = time > entry
    return make_dataset(
        entry[keep], time[keep], event[keep], x[keep], [f"x{j}" for j in range(p)]
    )
