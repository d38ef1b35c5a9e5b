"""
Nonlinearities F with derivative f, parity detection and numerical checks of the growth hypotheses.
"""
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from choquard.definitions import (
    FD_RTOL,
    FD_SAMPLES,
    GROWTH_MARGIN,
    LARGE_DECADES,
    PARITY_RTOL,
    PARITY_SAMPLES,
    QUOTIENT_CAP,
    SIGMA_FLOOR,
    SMALL_DECADES,
)
from choquard.utils import DomainError, HypothesisError, NonlinearityError, check_order_alpha, check_order_s, log

PARITIES = ("odd", "even", "none")


@dataclass(frozen=True)
class ExponentSet:
    """Critical exponents of the problem.

    Args:
        q: lower-critical exponent (N + alpha) / N
        p_m: L2-critical exponent (N + alpha + 2s) / N
        p_star: upper-critical exponent (N + alpha) / (N - 2s), infinite when N <= 2s
    """

    q: float
    p_m: float
    p_star: float

    dict = asdict


def exponent_set(N: int, s: float, alpha: float) -> ExponentSet:
    check_order_s(s)
    check_order_alpha(alpha, N)
    p_star = (N + alpha) / (N - 2 * s) if N > 2 * s else np.inf
    return ExponentSet(q=(N + alpha) / N, p_m=(N + alpha + 2 * s) / N, p_star=p_star)


@dataclass(frozen=True)
class Nonlinearity:
    """The pair (F, f = F') with its metadata.

    F and f act elementwise on arrays. At construction F(0) = 0 and the
    derivative are checked; f is compared to central differences of F on
    `window`, away from 0.

    Args:
        F: primitive
        f: derivative of F
        parity: "odd", "even" or "none"
        sigma0: a point with F(sigma0) > 0
        delta0: F keeps a constant sign on (0, delta0]
        name: catalog name
        params: parameters the entry was built from
        window: interval on which F is defined and checked
    """

    F: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]
    parity: str
    sigma0: float
    delta0: float
    name: str
    params: Mapping[str, float] = field(default_factory=dict)
    window: Tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        if self.parity not in PARITIES:
            raise NonlinearityError(f"Parity must be one of {PARITIES}, got {self.parity}")
        if self.sigma0 == 0 or not self.delta0 > 0:
            raise NonlinearityError(f"Need sigma0 != 0 and delta0 > 0, got {self.sigma0}, {self.delta0}")
        if abs(float(self.F(np.array(0.0)))) > 1e-14:
            raise NonlinearityError(f"{self.name}: F(0) must vanish")
        if not float(self.F(np.array(self.sigma0))) > 0:
            raise NonlinearityError(f"{self.name}: F(sigma0) must be positive, sigma0 = {self.sigma0}")
        self._check_derivative()

    def _check_derivative(self) -> None:
        lo, hi = self.window
        sigma = np.linspace(lo, hi, FD_SAMPLES)
        sigma = sigma[np.abs(sigma) >= 0.05]
        step = 1e-6 * np.maximum(1.0, np.abs(sigma))
        inside = (sigma - step >= lo) & (sigma + step <= hi)
        sigma, step = sigma[inside], step[inside]
        with np.errstate(all="ignore"):
            fd = (self.F(sigma + step) - self.F(sigma - step)) / (2 * step)
            exact = self.f(sigma)
            scale = np.maximum(np.abs(exact), np.abs(self.F(sigma) / sigma))
        bad = np.abs(fd - exact) > FD_RTOL * np.maximum(scale, 1e-12)
        if np.any(bad):
            worst = sigma[bad][0]
            raise NonlinearityError(f"{self.name}: f does not match F' at sigma = {worst:.6g}")

    def eval(self, sigma) -> Tuple[np.ndarray, np.ndarray]:
        """(F(sigma), f(sigma)); raises NonlinearityError when either overflows."""
        sigma = np.asarray(sigma, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            values, derivs = self.F(sigma), self.f(sigma)
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(derivs))):
            raise NonlinearityError(f"{self.name}: F or f is not finite on the given arguments")
        return values, derivs

    def normalized(self) -> "Nonlinearity":
        """Same F with sigma0 flipped when F(-sigma0) > 0 >= F(sigma0)."""
        if float(self.F(np.array(self.sigma0))) > 0:
            return self
        return replace(self, sigma0=-self.sigma0)


def evaluate_nonlinearity(F: Nonlinearity, sigma: float) -> Tuple[float, float]:
    if not np.isfinite(sigma):
        raise DomainError(f"sigma must be finite, got {sigma}")
    value, deriv = F.eval(sigma)
    return float(value), float(deriv)


# Catalog

def _abs_pow(sigma, p):
    return np.abs(sigma) ** p


def power(p: float) -> Nonlinearity:
    """F = |sigma|^p / p (even)."""
    if not p > 1:
        raise NonlinearityError(f"Power must exceed 1, got {p}")
    return Nonlinearity(
        F=lambda x: _abs_pow(x, p) / p,
        f=lambda x: np.sign(x) * _abs_pow(x, p - 1),
        parity="even", sigma0=1.0, delta0=1.0, name="power", params={"p": p},
    )


def odd_power(p: float) -> Nonlinearity:
    """F = sign(sigma) |sigma|^p / p."""
    if not p > 1:
        raise NonlinearityError(f"Power must exceed 1, got {p}")
    return Nonlinearity(
        F=lambda x: np.sign(x) * _abs_pow(x, p) / p,
        f=lambda x: _abs_pow(x, p - 1),
        parity="odd", sigma0=1.0, delta0=1.0, name="odd_power", params={"p": p},
    )


def _saturable_F(x):
    return (x ** 2 - np.log1p(x ** 2)) / 2


def saturable() -> Nonlinearity:
    """f = sigma^3 / (1 + sigma^2)."""
    return Nonlinearity(
        F=_saturable_F, f=lambda x: x ** 3 / (1 + x ** 2),
        parity="even", sigma0=1.0, delta0=1.0, name="saturable",
    )


def odd_saturable() -> Nonlinearity:
    return Nonlinearity(
        F=lambda x: np.sign(x) * _saturable_F(x), f=lambda x: np.abs(x) ** 3 / (1 + x ** 2),
        parity="odd", sigma0=1.0, delta0=1.0, name="odd_saturable",
    )


def cooperative(p: float, q: float) -> Nonlinearity:
    """F = |sigma|^p / p + |sigma|^q / q."""
    return Nonlinearity(
        F=lambda x: _abs_pow(x, p) / p + _abs_pow(x, q) / q,
        f=lambda x: np.sign(x) * (_abs_pow(x, p - 1) + _abs_pow(x, q - 1)),
        parity="even", sigma0=1.0, delta0=1.0, name="cooperative", params={"p": p, "q": q},
    )


def competing(p: float, q: float, nu: float = 1.0) -> Nonlinearity:
    """F = |sigma|^p / p - nu |sigma|^q / q with p < q, positive below its first root."""
    if not 1 < p < q or not nu > 0:
        raise NonlinearityError(f"Competing powers need 1 < p < q and nu > 0, got {p}, {q}, {nu}")
    root = (q / (p * nu)) ** (1 / (q - p))
    return Nonlinearity(
        F=lambda x: _abs_pow(x, p) / p - nu * _abs_pow(x, q) / q,
        f=lambda x: np.sign(x) * (_abs_pow(x, p - 1) - nu * _abs_pow(x, q - 1)),
        parity="even", sigma0=root / 2, delta0=root / 2, name="competing",
        params={"p": p, "q": q, "nu": nu},
    )


def _floored(x):
    return np.maximum(np.abs(x), SIGMA_FLOOR)


def _extend(parity: str, x, values_abs, derivs_abs):
    """Extend F, f given on |x| to the whole line as an odd or even function."""
    if parity == "odd":
        return np.sign(x) * values_abs, derivs_abs
    return values_abs, np.sign(x) * derivs_abs


def oscillating(beta: float, c: float = 3.0, parity: str = "odd") -> Nonlinearity:
    """F = sigma^beta (c + sin(1/sigma)) for sigma > 0, extended as an odd or even function.

    With c = 3 the quotient F(sigma h) / F(sigma) stays below (c + 1) / (c - 1) = 2.
    """
    if not c > 1 or not beta > 1:
        raise NonlinearityError(f"Oscillating F needs c > 1 and beta > 1, got {c}, {beta}")

    def values(x):
        a = _floored(x)
        return np.where(x == 0, 0.0, a ** beta * (c + np.sin(1 / a)))

    def derivs(x):
        a = _floored(x)
        return np.where(x == 0, 0.0, beta * a ** (beta - 1) * (c + np.sin(1 / a)) - a ** (beta - 2) * np.cos(1 / a))

    return Nonlinearity(
        F=lambda x: _extend(parity, x, values(x), derivs(x))[0],
        f=lambda x: _extend(parity, x, values(x), derivs(x))[1],
        parity=parity, sigma0=1.0, delta0=1.0, name="oscillating",
        params={"beta": beta, "c": c},
    )


def two_power_oscillating(beta1: float, beta2: float, parity: str = "odd") -> Nonlinearity:
    """F = sigma^beta1 (1 + sin(1/sigma)) + sigma^beta2 (1 - sin(1/sigma)) for sigma > 0."""
    if not 1 < beta1 < beta2:
        raise NonlinearityError(f"Need 1 < beta1 < beta2, got {beta1}, {beta2}")

    def values(x):
        a = _floored(x)
        s = np.sin(1 / a)
        return np.where(x == 0, 0.0, a ** beta1 * (1 + s) + a ** beta2 * (1 - s))

    def derivs(x):
        a = _floored(x)
        s, co = np.sin(1 / a), np.cos(1 / a)
        d = (beta1 * a ** (beta1 - 1) * (1 + s) - a ** (beta1 - 2) * co
             + beta2 * a ** (beta2 - 1) * (1 - s) + a ** (beta2 - 2) * co)
        return np.where(x == 0, 0.0, d)

    return Nonlinearity(
        F=lambda x: _extend(parity, x, values(x), derivs(x))[0],
        f=lambda x: _extend(parity, x, values(x), derivs(x))[1],
        parity=parity, sigma0=1.0, delta0=1.0, name="two_power_oscillating",
        params={"beta1": beta1, "beta2": beta2},
    )


def table(sigma, values, slopes, sigma0: float, delta0: Optional[float] = None) -> Nonlinearity:
    """Piecewise cubic Hermite F through (sigma_i, values_i) with F'(sigma_i) = slopes_i.

    The breakpoints must include 0 with value 0.
    """
    sigma = np.asarray(sigma, dtype=float)
    spline = CubicHermiteSpline(sigma, values, slopes, extrapolate=False)
    derivative = spline.derivative()
    parity = detect_parity_of(spline, (sigma[0], sigma[-1]))
    return Nonlinearity(
        F=spline, f=derivative, parity=parity, sigma0=sigma0,
        delta0=delta0 if delta0 is not None else abs(sigma0), name="table",
        window=(float(sigma[0]), float(sigma[-1])),
    )


CATALOG: Dict[str, Callable[..., Nonlinearity]] = {
    "power": power,
    "odd_power": odd_power,
    "saturable": saturable,
    "odd_saturable": odd_saturable,
    "cooperative": cooperative,
    "competing": competing,
    "oscillating": oscillating,
    "two_power_oscillating": two_power_oscillating,
    "table": table,
}


def make_nonlinearity(name: str, params: Optional[Mapping] = None) -> Nonlinearity:
    """Build a catalog entry by name, with sigma0 chosen so that F(sigma0) > 0."""
    if name not in CATALOG:
        raise NonlinearityError(f"Unknown nonlinearity {name}, choose one of {sorted(CATALOG)}")
    try:
        entry = CATALOG[name](**dict(params or {}))
    except TypeError as e:
        raise NonlinearityError(f"Invalid parameters for {name}: {e}")
    return entry.normalized()


# Checks

def detect_parity_of(F: Callable, window: Tuple[float, float] = (-10.0, 10.0),
                     samples: int = PARITY_SAMPLES, rtol: float = PARITY_RTOL) -> str:
    reach = min(-window[0], window[1])
    if not reach > 0:
        return "none"
    sigma = np.linspace(reach / samples, reach, samples)
    plus, minus = F(sigma), F(-sigma)
    scale = np.abs(plus) + np.abs(minus) + np.finfo(float).tiny
    if np.all(np.abs(plus - minus) <= rtol * scale):
        return "even"
    if np.all(np.abs(plus + minus) <= rtol * scale):
        return "odd"
    return "none"


def detect_parity(F: Nonlinearity) -> str:
    """Classify F as odd, even or neither from samples of F(+-sigma)."""
    return detect_parity_of(F.F, F.window)


def _envelope_exponent(func: Callable, lo: float, hi: float, per_bin: int = 64) -> float:
    """Growth exponent of the half-decade maxima of |func| on [lo, hi]."""
    edges = np.logspace(np.log10(lo), np.log10(hi), int(round(2 * np.log10(hi / lo))) + 1)
    peaks, centres = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sigma = np.geomspace(a, b, per_bin)
        with np.errstate(all="ignore"):
            peaks.append(np.max(np.abs(func(sigma))))
        centres.append(b)
    peaks = np.asarray(peaks)
    if np.any(peaks == 0) or not np.all(np.isfinite(peaks)):
        return -np.inf if np.all(peaks == 0) else np.nan
    slope, _ = np.polyfit(np.log(centres), np.log(peaks), 1)
    return float(slope)


def _two_sided(func: Callable, lo: float, hi: float, worst) -> float:
    return worst(_envelope_exponent(func, lo, hi), _envelope_exponent(lambda x: func(-x), lo, hi))


@dataclass
class ConditionCheck:
    """Outcome of one growth condition.

    Args:
        name: condition label, e.g. "F3"
        passed: whether the sampled data support the condition
        detail: fitted exponents or constants behind the verdict
    """

    name: str
    passed: bool
    detail: Dict[str, float] = field(default_factory=dict)


@dataclass
class GrowthReport:
    name: str
    regime: str
    exponents: ExponentSet
    conditions: Dict[str, ConditionCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def dict(self):
        return {
            "name": self.name,
            "regime": self.regime,
            "exponents": self.exponents.dict(),
            "passed": self.passed,
            "conditions": {k: asdict(v) for k, v in self.conditions.items()},
        }


def _growth_bound(F: Nonlinearity, low: float, high: float) -> ConditionCheck:
    """|sigma f(sigma)| <= C (|sigma|^low + |sigma|^high) over twelve decades."""
    def sf(x):
        return x * F.f(x)

    small = _two_sided(sf, *SMALL_DECADES, worst=min)
    large = _two_sided(sf, *LARGE_DECADES, worst=max)
    sigma = np.logspace(-6, 6, 1201)
    with np.errstate(all="ignore"):
        bound = _abs_pow(sigma, low) + (_abs_pow(sigma, high) if np.isfinite(high) else 0.0)
        ratios = np.concatenate([np.abs(sf(sigma)), np.abs(sf(-sigma))]) / np.concatenate([bound, bound])
    passed = small >= low - GROWTH_MARGIN and (not np.isfinite(high) or large <= high + GROWTH_MARGIN)
    return ConditionCheck("", bool(passed), {"small_exponent": small, "large_exponent": large,
                                             "constant": float(np.max(ratios))})


def _limits(F: Nonlinearity, low: float, high: float) -> ConditionCheck:
    """F / |sigma|^low -> 0 at 0 and F / |sigma|^high -> 0 at infinity."""
    small = _two_sided(F.F, *SMALL_DECADES, worst=min)
    large = _two_sided(F.F, *LARGE_DECADES, worst=max)
    passed = small > low + GROWTH_MARGIN and (not np.isfinite(high) or large < high - GROWTH_MARGIN)
    return ConditionCheck("", bool(passed), {"small_exponent": small, "large_exponent": large})


def check_growth(F: Nonlinearity, exps: ExponentSet, regime: str = "unconstrained") -> GrowthReport:
    """Check (F1)-(F5) (unconstrained) or (F1), (CF2)-(CF4), (F4), (F5) (constrained).

    Limits are judged from growth exponents fitted on the decades around 0
    and infinity; failing conditions never raise.
    """
    if regime not in ("unconstrained", "constrained"):
        raise DomainError(f"Unknown regime {regime}")
    checks: Dict[str, ConditionCheck] = {"F1": ConditionCheck("F1", True)}
    if regime == "unconstrained":
        checks["F2"] = _growth_bound(F, exps.q, exps.p_star)
        checks["F3"] = _limits(F, exps.q, exps.p_star)
    else:
        checks["CF2"] = _growth_bound(F, exps.q, exps.p_m)
        checks["CF3"] = _limits(F, exps.q, exps.p_m)
        small = _two_sided(F.F, *SMALL_DECADES, worst=max)
        cf4 = ConditionCheck("CF4", bool(small < exps.p_m - GROWTH_MARGIN), {"small_exponent": small})
        if F.parity == "odd":
            try:
                M = quotient_sup(F)
            except HypothesisError as e:
                log.debug(f"{F.name}: {e}")
                M = np.nan
            cf4.detail["quotient_sup"] = M
            cf4.passed = cf4.passed and bool(np.isfinite(M))
        checks["CF4"] = cf4
    checks["F4"] = ConditionCheck("F4", bool(F.F(np.array(F.sigma0)) != 0), {"sigma0": F.sigma0})
    parity = detect_parity(F)
    checks["F5"] = ConditionCheck("F5", parity in ("odd", "even"))
    for key, check in checks.items():
        check.name = key
    return GrowthReport(name=F.name, regime=regime, exponents=exps, conditions=checks)


def quotient_sup(F: Nonlinearity, cap: float = QUOTIENT_CAP, decades: int = 8, per_decade: int = 2000) -> float:
    """Estimate M = sup over sigma in (0, delta0], h in [0, 1] of F(sigma h) / F(sigma).

    The inner sup is the running maximum of |F| up to sigma on a
    logarithmic grid. Returns inf when the estimate exceeds `cap` or when the
    decade maxima keep growing towards sigma = 0.

    Raises:
        HypothesisError: F changes sign on the sampled part of (0, delta0]
    """
    top = F.delta0
    sigma = np.logspace(np.log10(max(top * 10.0 ** -decades, SIGMA_FLOOR)), np.log10(top), decades * per_decade)
    values = F.F(sigma)
    if not (np.all(values > 0) or np.all(values < 0)):
        raise HypothesisError(f"{F.name} changes sign on (0, {top}]")
    values = np.abs(values)
    ratios = np.maximum.accumulate(values) / values
    M = float(np.max(ratios))
    per = ratios[: decades * per_decade].reshape(decades, per_decade).max(axis=1)
    if M > cap or (decades > 4 and per[0] > 1.25 * per[4]):
        log.info(f"{F.name}: quotient sup unbounded (sampled {M:.4g})")
        return np.inf
    return M


def lower_bound_constant(F: Nonlinearity, sigma: float, p: float, samples: int = 2000) -> float:
    """L_sigma = min over tau in (0, sigma] of F(tau) / tau^p, sampled on eight decades."""
    tau = np.geomspace(sigma * 1e-8, sigma, samples)
    return float(np.min(F.F(tau) / tau ** p))
