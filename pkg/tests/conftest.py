import numpy as np
import pytest

from alnmml.benchmark import default_dirichlets, generate_synthetic, random_base_matrix
from alnmml.inference import SearchConfig, rng_stream
from alnmml.types import IndelModel, ModelBundle


@pytest.fixture(scope="session")
def base_matrix():
    return random_base_matrix(rng_stream(2024, "fixture-matrix"))


@pytest.fixture(scope="session")
def dirichlets():
    return default_dirichlets()


@pytest.fixture(scope="session")
def gen_bundle(base_matrix, dirichlets):
    return ModelBundle(matrix=base_matrix, indel=IndelModel.uniform(), dirichlets=dirichlets)


@pytest.fixture(scope="session")
def bench_small(gen_bundle):
    """100 synthetic records at mixed divergence times."""
    rng = rng_stream(2024, "fixture-bench")
    return generate_synthetic(gen_bundle, 100, 120, rng, times=[5, 15, 40, 90])


@pytest.fixture
def fast_cfg():
    """A search configuration small enough for test-speed SA/MCMC/EM."""
    return SearchConfig(
        rng_seed=123,
        sa_temp_init=2.0,
        sa_cool=0.7,
        sa_steps_per_temp=40,
        sa_temp_min=0.05,
        sa_kappa_init=500.0,
        mcmc_iters_per_bin=150,
        em_epsilon_bits=5.0,
        em_max_iters=3,
    )
