import numpy as np
import pytest

from ghostsim.field import Grid2D, SpeckleSpec
from ghostsim.scenarios import default_config


@pytest.fixture
def grid():
    return Grid2D(128, 128, 10e-6, 10e-6, 532e-9)


@pytest.fixture
def speckle():
    return SpeckleSpec(l_c=80e-6)


def small(scenario, n=600, **sections):
    """Default config shrunk to a 128x128 grid and ``n`` realizations."""
    cfg = default_config(scenario).replace("grid", nx=128, ny=128)
    cfg = cfg.replace("ensemble", n_realizations=n, shard_size=100)
    cfg = cfg.replace("analysis", metric_frames=0)
    for name, changes in sections.items():
        cfg = cfg.replace(name, **changes)
    return cfg


def brute_autocorrelation(fields, max_lag):
    """|<E(x) E*(x + d)>| / <|E|^2> along x by explicit shifted products."""
    num = np.zeros(max_lag + 1, dtype=complex)
    den = 0.0
    for e in fields:
        den += np.mean(np.abs(e) ** 2)
        for d in range(max_lag + 1):
            num[d] += np.mean(e * np.conj(np.roll(e, -d, axis=1)))
    return np.abs(num) / den
