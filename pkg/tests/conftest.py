"""Shared fixtures for the expensive benchmark-scale test runs."""

import time

import pytest

from arsigma import bench

ACCEPT_SEED = 2026
ACCEPT_RUNS = 20
ACCEPT_N_TEST = 900


@pytest.fixture(scope="session")
def experiment_matrix():
    """20 seeded runs of every (dataset, estimator) cell on G, Y, W.

    Returns ({dataset: {estimator: ExperimentReport}}, wall_seconds).
    """
    results = {}
    t0 = time.perf_counter()
    for ds in ("G", "Y", "W"):
        spec = bench.make_dataset(ds, seed=ACCEPT_SEED)
        results[ds] = bench.run_matrix(
            spec, ["gp", "ar-nn", "ar-poly"], ACCEPT_RUNS, ACCEPT_N_TEST
        )
    return results, time.perf_counter() - t0


@pytest.fixture(scope="session")
def fived_nn_fit():
    """One AR-NN fit on the 5D dataset at full desk scale (10^4 points)."""
    import numpy as np

    from arsigma import varmodel

    spec = bench.make_dataset("5D", seed=ACCEPT_SEED)
    rng = np.random.default_rng([ACCEPT_SEED, 5])
    x, y, _, _ = bench.generate(spec, rng=rng)
    t0 = time.perf_counter()
    model = varmodel.fit_mlp((x, y), rng_seed=ACCEPT_SEED)  # exact zero mean: eps = y
    return model, time.perf_counter() - t0
