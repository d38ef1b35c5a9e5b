import numpy as np

from choquard.definitions import TEST_RESOURCES_FILEPATH
from choquard.functionals import FunctionalContext
from choquard.nonlinearity import make_nonlinearity
from choquard.spectral_core import make_grid


def pytest_addoption(parser):
    parser.addoption('--slow', action='store_true', default=False,
                     help="enable slow decorated tests")


def pytest_configure(config):
    if not config.option.slow:
        setattr(config.option, 'markexpr', 'not slow')


# N = 3, s = 1/2, alpha = 2 with an L2-subcritical power
power_18 = make_nonlinearity("power", {"p": 1.8})
odd_power_18 = make_nonlinearity("odd_power", {"p": 1.8})
ctx_3d = FunctionalContext(N=3, s=0.5, alpha=2.0, lam=0.0, nonlinearity=power_18)

# N = 1, s = 0.4, alpha = 0.5: q = 1.5, p_m = 2.3, p_star = 7.5
power_2 = make_nonlinearity("power", {"p": 2.0})
ctx_1d = FunctionalContext(N=1, s=0.4, alpha=0.5, lam=0.0, nonlinearity=power_2)

grid_1d = make_grid(1, 8.0, 256)
grid_2d = make_grid(2, 6.0, 32)


def gaussian_values(grid, width: float = 1.0, shift: float = 0.0) -> np.ndarray:
    r2 = sum(c ** 2 for c in grid.coordinates())
    if shift:
        r2 = r2 - 2 * shift * grid.coordinates()[0] + shift ** 2
    return np.exp(-r2 / (2 * width ** 2))


def resource(name: str):
    return TEST_RESOURCES_FILEPATH / name
