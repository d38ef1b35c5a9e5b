"""
Variational quantities of the Choquard problem.

For a discretized u (a spectral `Field` or a `RadialProfile`) and a context
(N, s, alpha, lambda, m, F), with mu = e^lambda:

    D(u)   = int (I_alpha * F(u)) F(u)
    J      = [u]^2 / 2 + mu |u|_2^2 / 2 - D(u) / 2
    I^m    = J - mu m / 2
    P      = (N - 2s) / 2 [u]^2 + N / 2 mu |u|_2^2 - (N + alpha) / 2 D(u)
    L      = [u]^2 / 2 - D(u) / 2

Both discretizations expose the same small interface (inner, mass2, dirichlet,
frac_laplacian_values, riesz_values, replace, dilate, precondition), which is
all this module relies on.
"""
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from choquard.definitions import FLOAT_FORMAT, ROOT_XTOL, THETA_DOUBLINGS, TOL_POHOZAEV
from choquard.nonlinearity import Nonlinearity
from choquard.radial_riesz import RadialProfile
from choquard.spectral_core import Field
from choquard.utils import DomainError, HypothesisError, check_order_alpha, check_order_s

Discretized = Union[Field, RadialProfile]


@dataclass(frozen=True)
class FunctionalContext:
    """Parameters of the functionals.

    Args:
        N: space dimension
        s: fractional order
        alpha: Riesz order
        lam: frequency exponent, mu = e^lam
        nonlinearity: F and f
        m: prescribed mass, needed for I^m
    """

    N: int
    s: float
    alpha: float
    lam: float
    nonlinearity: Nonlinearity
    m: Optional[float] = None

    def __post_init__(self):
        if self.N not in (1, 2, 3):
            raise DomainError(f"Dimension must be 1, 2 or 3, got {self.N}")
        check_order_s(self.s)
        check_order_alpha(self.alpha, self.N)
        if self.m is not None and not self.m > 0:
            raise DomainError(f"Mass must be positive, got {self.m}")

    @property
    def mu(self) -> float:
        return float(np.exp(self.lam))

    def with_lambda(self, lam: float) -> "FunctionalContext":
        return FunctionalContext(self.N, self.s, self.alpha, lam, self.nonlinearity, self.m)

    def with_mass(self, m: Optional[float]) -> "FunctionalContext":
        return FunctionalContext(self.N, self.s, self.alpha, self.lam, self.nonlinearity, m)


CSV_COLUMNS = ("dirichlet", "mass2", "D", "J", "I_m", "P", "L", "r1", "r2")


@dataclass
class EnergyBreakdown:
    """All functionals at one (lambda, u), with the backend that produced them."""

    dirichlet: float
    mass2: float
    D_value: float
    J: float
    I_m: float
    P: float
    L: float
    r1: float
    r2: float
    backend: str

    dict = asdict

    def csv_row(self) -> str:
        values = (self.dirichlet, self.mass2, self.D_value, self.J, self.I_m, self.P, self.L, self.r1, self.r2)
        return ",".join(FLOAT_FORMAT.format(v) for v in values)

    @staticmethod
    def csv_header() -> str:
        return ",".join(CSV_COLUMNS)


def _check_dimension(u: Discretized, ctx: FunctionalContext) -> None:
    N = u.grid.N if isinstance(u, Field) else u.N
    if N != ctx.N:
        raise DomainError(f"Field of dimension {N} used with a context of dimension {ctx.N}")


def D_value(u: Discretized, ctx: FunctionalContext) -> float:
    """D(u) = D_alpha(F(u), F(u)); radial profiles only integrate near the support of F(u)."""
    _check_dimension(u, ctx)
    g, _ = ctx.nonlinearity.eval(u.values)
    if not np.any(g):
        return 0.0
    potential = u.riesz_values(g, ctx.alpha, rows=g != 0, symmetric=False)
    return u.inner(potential, g)


def base_integrals(u: Discretized, ctx: FunctionalContext) -> Tuple[float, float, float]:
    """([u]^2, |u|_2^2, D(u)), the three integrals the dilation fiber depends on."""
    return u.dirichlet(ctx.s), u.mass2(), D_value(u, ctx)


def pohozaev_terms(a: float, b: float, d: float, ctx: FunctionalContext) -> Tuple[float, float, float]:
    N, s, alpha = ctx.N, ctx.s, ctx.alpha
    return (N - 2 * s) / 2 * a, N / 2 * ctx.mu * b, (N + alpha) / 2 * d


def _residuals(a: float, b: float, d: float, ctx: FunctionalContext) -> Tuple[float, float]:
    t1, t2, t3 = pohozaev_terms(a, b, d, ctx)
    scale = abs(t1) + abs(t2) + abs(t3)
    r1 = abs(t1 + t2 - t3) / scale if scale > 0 else 0.0
    # (N-2s)/(N+alpha) [u]^2 + N/(N+alpha) mu |u|^2 - D = 2 P / (N + alpha)
    N, s, alpha = ctx.N, ctx.s, ctx.alpha
    e1, e2, e3 = (N - 2 * s) / (N + alpha) * a, N / (N + alpha) * ctx.mu * b, d
    scale2 = abs(e1) + abs(e2) + abs(e3)
    r2 = abs(e1 + e2 - e3) / scale2 if scale2 > 0 else 0.0
    return float(r1), float(r2)


def breakdown_from_integrals(a: float, b: float, d: float, ctx: FunctionalContext,
                             backend: str = "spectral") -> EnergyBreakdown:
    mu = ctx.mu
    J = a / 2 + mu * b / 2 - d / 2
    t1, t2, t3 = pohozaev_terms(a, b, d, ctx)
    I_m = J - mu * ctx.m / 2 if ctx.m is not None else float("nan")
    r1, r2 = _residuals(a, b, d, ctx)
    return EnergyBreakdown(
        dirichlet=a, mass2=b, D_value=d, J=J, I_m=I_m, P=t1 + t2 - t3, L=a / 2 - d / 2,
        r1=r1, r2=r2, backend=backend,
    )


def evaluate(u: Discretized, ctx: FunctionalContext) -> EnergyBreakdown:
    """Every functional at (lambda, u); I_m is NaN when the context has no mass."""
    a, b, d = base_integrals(u, ctx)
    return breakdown_from_integrals(a, b, d, ctx, backend=u.backend)


def J_value(u: Discretized, ctx: FunctionalContext) -> float:
    a, b, d = base_integrals(u, ctx)
    return a / 2 + ctx.mu * b / 2 - d / 2


def nonlocal_source(u: Discretized, ctx: FunctionalContext) -> np.ndarray:
    """(I_alpha * F(u)) f(u) at the samples of u."""
    g, fp = ctx.nonlinearity.eval(u.values)
    if not np.any(g):
        return np.zeros_like(u.values)
    return u.riesz_values(g, ctx.alpha) * fp


def grad_J(u: Discretized, ctx: FunctionalContext) -> Discretized:
    """L2 gradient (-Delta)^s u + mu u - (I_alpha * F(u)) f(u), exact for the discrete energy."""
    _check_dimension(u, ctx)
    values = u.frac_laplacian_values(ctx.s) + ctx.mu * u.values - nonlocal_source(u, ctx)
    return u.replace(values)


def grad_norm(u: Discretized, gradient: Discretized) -> float:
    return float(np.sqrt(u.inner(gradient.values, gradient.values)))


def fiber_J(a: float, b: float, d: float, theta, ctx: FunctionalContext):
    """J(lambda, u(./theta)) from the base integrals of u."""
    N, s, alpha = ctx.N, ctx.s, ctx.alpha
    theta = np.asarray(theta, dtype=float)
    return theta ** (N - 2 * s) * a / 2 + theta ** N * ctx.mu * b / 2 - theta ** (N + alpha) * d / 2


def dilation_root(a: float, b: float, d: float, ctx: FunctionalContext) -> float:
    """Largest theta with P(lambda, u(./theta)) = 0, from the base integrals of u.

    Raises:
        HypothesisError: D(u) <= 0, the fiber never crosses the Pohozaev set
    """
    if not d > 0:
        raise HypothesisError(f"No Pohozaev dilation exists when D(u) = {d:.4g}")
    N, s, alpha = ctx.N, ctx.s, ctx.alpha
    t1, t2, t3 = pohozaev_terms(a, b, d, ctx)

    def P(theta):
        return t1 * theta ** (N - 2 * s) + t2 * theta ** N - t3 * theta ** (N + alpha)

    hi = 1.0
    while P(hi) > 0:
        hi *= 2
    lo = hi / 2
    while P(lo) <= 0:
        if lo < 2.0 ** -THETA_DOUBLINGS:
            return lo
        lo /= 2
    return float(brentq(P, lo, hi, xtol=ROOT_XTOL * lo))


def scaling_profile(u: Discretized, ctx: FunctionalContext, thetas: Sequence[float]) -> List[Tuple[float, float]]:
    """Exact fiber map theta -> J(lambda, u(./theta)) without dilating u."""
    a, b, d = base_integrals(u, ctx)
    return [(float(t), float(fiber_J(a, b, d, t, ctx))) for t in thetas]


def pohozaev_residual(u: Discretized, ctx: FunctionalContext) -> Tuple[float, float]:
    """Relative residuals of the Pohozaev identity and of its equivalent form.

    Each residual divides the identity by the sum of the absolute values of
    its terms, so both vanish at u = 0.
    """
    a, b, d = base_integrals(u, ctx)
    return _residuals(a, b, d, ctx)


def classify_pohozaev(u: Discretized, ctx: FunctionalContext, tol: float = TOL_POHOZAEV) -> str:
    """Position of (lambda, u) relative to the set where P vanishes."""
    if not tol > 0:
        raise DomainError(f"Tolerance must be positive, got {tol}")
    if not np.any(u.values):
        return "interior"
    t1, t2, t3 = pohozaev_terms(*base_integrals(u, ctx), ctx)
    P, scale = t1 + t2 - t3, abs(t1) + abs(t2) + abs(t3)
    if P > tol * scale:
        return "interior"
    if abs(P) <= tol * scale:
        return "mountain"
    return "exterior"
