import logging
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.special import gamma

log = logging.getLogger("choquard")


class DomainError(ValueError):
    """Error to be raised if a parameter lies outside the domain of an operation."""


class SingularityError(DomainError):
    """Error to be raised when a kernel is evaluated on its singular set."""


class NonlinearityError(ValueError):
    """Error to be raised if a nonlinearity is not defined correctly."""


class PathError(ValueError):
    """Error to be raised if a path specification is inadmissible."""


class BoxTooSmallError(RuntimeError):
    """Error to be raised when a field loses mass through the boundary of its box."""


class QuadratureError(RuntimeError):
    """Error to be raised when an adaptive quadrature misses its tolerance."""


class HypothesisError(RuntimeError):
    """Error to be raised when a hypothesis required by an operation does not hold."""


class ConvergenceError(RuntimeError):
    """Error to be raised when an iterative solver stops without converging.

    The partial result is kept on the `solution` attribute.
    """

    def __init__(self, msg: str, solution=None) -> None:
        super().__init__(msg)
        self.solution = solution


class ConfigError(RuntimeError):
    """Error to be raised if a run configuration is not valid."""


def sphere_area(N: int) -> float:
    """Surface measure |S^{N-1}| of the unit sphere in R^N (2 for N=1)."""
    return float(2 * np.pi ** (N / 2) / gamma(N / 2))


def check_order_s(s: float) -> None:
    if not 0 < s < 1:
        raise DomainError(f"Fractional order s must lie in (0, 1), got {s}")


def check_order_alpha(alpha: float, N: int) -> None:
    if not 0 < alpha < N:
        raise DomainError(f"Riesz order alpha must lie in (0, {N}), got {alpha}")


def loglog_slope(x, y) -> Tuple[float, float]:
    """Least squares slope of log|y| against log x, with the relative fit residual."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.abs(np.asarray(y, dtype=float)))
    coeffs, res, *_ = np.polyfit(lx, ly, 1, full=True)
    spread = np.sum((ly - ly.mean()) ** 2)
    rel = float(np.sqrt(res[0] / spread)) if len(res) and spread > 0 else 0.0
    return float(coeffs[0]), rel


@lru_cache(maxsize=16)
def gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1) / 2, w / 2
