import pytest

from rates import ConstantRate, PointMassKernel, PowerRate, RateModel, UniformKernel


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run acceptance-scale checks (long simulations, fine grids)",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def tcp_model():
    """tau = 1, beta = x: the TCP window-size process with halving."""
    return RateModel(tau=ConstantRate(c=1.0), beta=PowerRate(c=1.0, p=1.0))


@pytest.fixture(scope="session")
def tcp_kernel():
    return PointMassKernel(r=0.5)


@pytest.fixture(scope="session")
def uniform_kernel():
    return UniformKernel()


@pytest.fixture(scope="session")
def gamma_model():
    """tau = 1, beta = 1; with uniform division the stationary law is Gamma(2, 1)."""
    return RateModel(tau=ConstantRate(c=1.0), beta=ConstantRate(c=1.0))


@pytest.fixture(scope="session")
def rayleigh_model():
    """tau = 1, beta = x; with uniform division the stationary law is Rayleigh(1)."""
    return RateModel(tau=ConstantRate(c=1.0), beta=PowerRate(c=1.0, p=1.0))
