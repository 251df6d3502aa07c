import math

import numpy as np
import pytest

from brokensample.core import Dataset, DensityModel, ParamDomain
from brokensample.experiments.oracles import discrete_2x2_model
from brokensample.models import BivariateNormalRatioModel, TorusWrappedGaussianModel
from brokensample.sampling import SeedSpec, generate_dataset


class TableModel(DensityModel):
    """Density given by a fixed table indexed by integer ``(x, y)``; theta is ignored."""

    def __init__(self, table):
        super().__init__(ParamDomain.interval(0.0, 1.0), true_param=0.5)
        self.values = np.asarray(table, dtype=float)

    def log_density(self, theta, x, y):
        xi = np.asarray(x)[..., 0].astype(int)
        yi = np.asarray(y)[..., 0].astype(int)
        return np.log(self.values[xi, yi])

    def grad_density(self, theta, x, y):
        shape = np.broadcast(np.asarray(x)[..., 0], np.asarray(y)[..., 0]).shape
        return np.zeros(shape + (1,))

    def grad_log_density(self, theta, x, y):
        return self.grad_density(theta, x, y)

    def sample_pairs(self, rng, n):
        raise NotImplementedError


@pytest.fixture
def table_model():
    return TableModel([[2.0, 0.5], [1.5, 1.0]])


@pytest.fixture
def table_dataset():
    # one batch of two pairs covering every (x, y) cell once
    return Dataset.from_arrays([[0.0, 1.0]], [[0.0, 1.0]])


@pytest.fixture(scope="session")
def torus():
    return TorusWrappedGaussianModel(true_sigma=0.1)


@pytest.fixture(scope="session")
def bivariate():
    return BivariateNormalRatioModel(true_rho=-0.5)


@pytest.fixture(scope="session")
def discrete2():
    return discrete_2x2_model()


@pytest.fixture(scope="session")
def discrete3():
    from brokensample.experiments.config import DEFAULT_CONFIGS, build_model
    return build_model(DEFAULT_CONFIGS["limit-convergence"]["model"])


@pytest.fixture(scope="session")
def seed():
    return SeedSpec(20240101)


@pytest.fixture
def small_torus_data(torus, seed):
    return generate_dataset(torus, 10, 5, seed.stream(0, 99))


LOG3_HALF = math.log(3.0) / 2


# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[cid]
        terminalreporter.write_line(f"criterion {cid:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
