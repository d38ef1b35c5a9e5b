"""
Radial evaluation of the Riesz potential.

For radial u the potential is again radial and

    (I_alpha * u)(r) = int_0^inf F_alpha(r / rho) rho^(alpha-1) u(rho) drho,

where F_alpha(tau) = C_{N,alpha} int_{S^{N-1}} |tau e_1 - omega|^(alpha-N) dsigma(omega).
This module evaluates F_alpha, convolves piecewise linear radial profiles, builds
annuli and their pairwise Riesz interactions, and carries the uniform-grid
radial backend (N=3) used by the solvers.
"""
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft
from scipy.integrate import quad
from scipy.special import beta as beta_fn
from scipy.special import betainc, hyp2f1

from choquard.definitions import (
    FLOAT_FORMAT,
    GAUSS_ORDER,
    MASS_LOSS_RTOL,
    QUAD_EPSABS,
    QUAD_EPSREL,
    QUAD_LIMIT,
)
from choquard.spectral_core import riesz_constant
from choquard.utils import (
    BoxTooSmallError,
    DomainError,
    QuadratureError,
    SingularityError,
    check_order_alpha,
    check_order_s,
    gauss_legendre,
    log,
    sphere_area,
)


def _check_dimension(N: int) -> None:
    if N not in (1, 2, 3):
        raise DomainError(f"Dimension must be 1, 2 or 3, got {N}")


# Thim kernel

def thim_kernel(tau: float, N: int, alpha: float) -> float:
    """F_alpha(tau) by adaptive quadrature of the sphere average in the polar angle.

    Near tau = 1 the angular interval is split at angles graded geometrically
    from |tau - 1|, where the integrand concentrates. For alpha <= 1 the
    small-angle model (|tau - 1|^2 + tau phi^2)^((alpha-N)/2) phi^(N-2) is
    subtracted on [0, 1/2] and integrated in closed form.

    Raises:
        SingularityError: tau = 1 with alpha <= 1
        QuadratureError: the quadrature misses its tolerance
    """
    _check_dimension(N)
    check_order_alpha(alpha, N)
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    if tau == 1 and alpha <= 1:
        raise SingularityError(f"F_alpha is singular at tau = 1 for alpha = {alpha}")
    const = riesz_constant(N, alpha)
    if N == 1:
        return const * (abs(tau - 1) ** (alpha - 1) + (tau + 1) ** (alpha - 1))

    delta = (tau - 1) ** 2
    gap = abs(tau - 1)
    cut = 0.5
    subtract = alpha <= 1 and gap < cut

    def integrand(phi):
        return (delta + 4 * tau * np.sin(phi / 2) ** 2) ** ((alpha - N) / 2) * np.sin(phi) ** (N - 2)

    def model(phi):
        return (delta + tau * phi ** 2) ** ((alpha - N) / 2) * phi ** (N - 2)

    edges = [0.0]
    if 0 < gap < 1:
        edge = gap
        while edge < np.pi:
            if subtract and edge < cut < edge * 8:
                edges.extend([edge, cut])
            else:
                edges.append(edge)
            edge *= 8
    edges.append(np.pi)
    total = _thim_model_integral(tau, N, alpha, cut) if subtract else 0.0
    error = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if subtract and hi <= cut:
            value, err = quad(lambda p: integrand(p) - model(p), lo, hi, epsabs=0.0,
                              epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
        else:
            value, err = quad(integrand, lo, hi, epsabs=0.0, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
        total += value
        error += err
    if error > 1e-8 * abs(total) + QUAD_EPSABS:
        raise QuadratureError(f"Thim kernel quadrature at tau={tau} reached error {error:.3g} for value {total:.6g}")
    return const * sphere_area(N - 1) * total


def _power_difference(x: np.ndarray, a: float) -> np.ndarray:
    """(1 + x)^a - (1 - x)^a for 0 <= x < 1 without cancellation."""
    lp, lm = np.log1p(x), np.log1p(-x)
    return 2 * np.exp(a * (lp + lm) / 2) * np.sinh(a * (lp - lm) / 2)


def _thim_model_integral(tau: float, N: int, alpha: float, cut: float) -> float:
    """int_0^cut (|tau - 1|^2 + tau phi^2)^((alpha-N)/2) phi^(N-2) dphi for alpha <= 1, N in {2, 3}."""
    delta = (tau - 1) ** 2
    top = delta + tau * cut ** 2
    if N == 3:
        if alpha == 1:
            return float(np.log(top / delta) / (2 * tau))
        return float((top ** ((alpha - 1) / 2) - delta ** ((alpha - 1) / 2)) / (tau * (alpha - 1)))
    X = cut * np.sqrt(tau / delta)
    if alpha == 1:
        inner = np.arcsinh(X)
    else:
        b = (1 - alpha) / 2
        inner = beta_fn(0.5, b) * betainc(0.5, b, X ** 2 / (1 + X ** 2)) / 2
    return float(delta ** ((alpha - 1) / 2) / np.sqrt(tau) * inner)


def thim_kernel_vec(tau, N: int, alpha: float) -> np.ndarray:
    """Vectorized F_alpha(tau) for tau >= 0 from closed forms.

    N = 1 and N = 3 are elementary; N = 2 uses the Gauss hypergeometric form
    F = C |S^1| (1 + tau^2)^(-nu) 2F1(nu/2, nu/2 + 1/2; 1; 4 tau^2 / (1 + tau^2)^2), nu = (2 - alpha) / 2.
    Values at tau = 1 with alpha <= 1 are +inf.
    """
    tau = np.asarray(tau, dtype=float)
    const = riesz_constant(N, alpha)
    at_origin = const * sphere_area(N)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if N == 1:
            out = const * (np.abs(tau - 1) ** (alpha - 1) + (tau + 1) ** (alpha - 1))
        elif N == 3:
            inner = tau < 1
            x = np.where(inner, tau, 1 / np.where(tau > 0, tau, 1.0))
            x = np.minimum(x, 1.0)
            if alpha == 1:
                core = 2 * np.arctanh(x)
                out = const * 2 * np.pi * core / np.where(tau > 0, tau, 1.0)
            else:
                a = alpha - 1
                diff = np.where(x < 1, _power_difference(np.where(x < 1, x, 0.5), a), 2.0 ** a)
                scale = np.where(inner, 1.0, tau ** a)
                out = const * 2 * np.pi * scale * diff / (a * np.where(tau > 0, tau, 1.0))
        else:
            nu = (N - alpha) / 2
            z = 4 * tau ** 2 / (1 + tau ** 2) ** 2
            out = const * sphere_area(N) * (1 + tau ** 2) ** (-nu) * hyp2f1(nu / 2, nu / 2 + 0.5, N / 2, z)
        out = np.where(tau == 0, at_origin, out)
        if alpha <= 1:
            out = np.where(tau == 1, np.inf, out)
    return out


def singular_coefficient(N: int, alpha: float) -> float:
    """Coefficient c with F_alpha(tau) ~ c |tau - 1|^(alpha-1) near tau = 1 (alpha != 1),
    or F_alpha(tau) ~ -c log|tau - 1| (alpha = 1)."""
    const = riesz_constant(N, alpha)
    if N == 1:
        return const
    if alpha == 1:
        return const * sphere_area(N - 1)
    return const * sphere_area(N - 1) * beta_fn((N - 1) / 2, (1 - alpha) / 2) / 2


@dataclass
class KernelLimits:
    """Numerical estimates of lim_{tau->0} F_alpha and lim_{tau->inf} tau^(N-alpha) F_alpha."""

    N: int
    alpha: float
    c_zero: float
    c_infinity: float
    tail_flatness: float

    dict = asdict


def kernel_limits(N: int, alpha: float, small: float = 1e-6, large: float = 1e6) -> KernelLimits:
    c_zero = thim_kernel(small, N, alpha)
    c_infinity = thim_kernel(large, N, alpha) * large ** (N - alpha)
    tail = [thim_kernel(t, N, alpha) * t ** (N - alpha) for t in (50.0, 1000.0)]
    return KernelLimits(
        N=N, alpha=alpha, c_zero=c_zero, c_infinity=c_infinity,
        tail_flatness=abs(tail[0] / tail[1] - 1),
    )


# Radial profiles

@dataclass(frozen=True)
class RadialProfile:
    """Radial samples of u, interpolated linearly between nodes.

    Below the first node the profile is flat when `core` is set and zero
    otherwise; above the last node it vanishes. Uniform profiles
    (nodes = spacing * (1, ..., M)) additionally carry the sine-transform
    backend for the fractional Laplacian in N = 3.

    Args:
        N: space dimension
        nodes: increasing radii
        values: u at the nodes
        weights: quadrature weights for int_0^inf . r^(N-1) dr
        core: flat continuation of the first value down to r = 0
        spacing: grid step of a uniform profile, None otherwise
    """

    N: int
    nodes: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    core: bool = True
    spacing: Optional[float] = None

    def __post_init__(self):
        _check_dimension(self.N)
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if not (nodes.shape == values.shape == weights.shape) or nodes.ndim != 1:
            raise DomainError("Nodes, values and weights must be one-dimensional arrays of equal length")
        if nodes.size == 0 or nodes[0] < 0 or np.any(np.diff(nodes) <= 0):
            raise DomainError("Radial nodes must be nonnegative and strictly increasing")
        if np.any(weights < 0):
            raise DomainError("Radial quadrature weights must be nonnegative")
        if not np.all(np.isfinite(values)):
            raise DomainError("Radial profile values must be finite")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @property
    def backend(self) -> str:
        return "radial" if self.uniform else "radial-bound"

    @property
    def uniform(self) -> bool:
        return self.spacing is not None and self.N == 3

    @property
    def box(self) -> float:
        """Radius where a uniform profile is pinned to zero."""
        if self.spacing is None:
            return float(self.nodes[-1])
        return self.spacing * (self.nodes.size + 1)

    def replace(self, values: np.ndarray) -> "RadialProfile":
        return RadialProfile(self.N, self.nodes, values, self.weights, self.core, self.spacing)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(sphere_area(self.N) * np.sum(self.weights * a * b))

    def mass2(self) -> float:
        return self.inner(self.values, self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def gradient_norm2(self) -> float:
        """Exact |grad u|_2^2 of the piecewise linear profile."""
        r = self.nodes
        slopes = np.diff(self.values) / np.diff(r)
        moments = (r[1:] ** self.N - r[:-1] ** self.N) / self.N
        total = np.sum(slopes ** 2 * moments)
        if not self.core and r[0] > 0:
            # jump at the first node
            return np.inf if self.values[0] != 0 else float(sphere_area(self.N) * total)
        return float(sphere_area(self.N) * total)

    def dirichlet(self, s: float) -> float:
        """[u]^2 on uniform N = 3 profiles; elsewhere the interpolation bound
        |u|_2^(2(1-s)) |grad u|_2^(2s), which is never smaller than [u]^2."""
        check_order_s(s)
        if self.uniform:
            return radial_dirichlet(self, s)
        mass = self.mass2()
        if mass == 0:
            return 0.0
        return float(mass ** (1 - s) * self.gradient_norm2() ** s)

    def frac_laplacian_values(self, s: float) -> np.ndarray:
        return radial_frac_laplacian(self, s)

    def riesz_values(self, g: np.ndarray, alpha: float, rows: Optional[np.ndarray] = None,
                     symmetric: bool = True) -> np.ndarray:
        """Riesz potential of the profile g at the nodes.

        With `symmetric` the weighted adjoint is averaged in, so that the
        result is the exact gradient of the discrete pairing.
        """
        g = np.asarray(g, dtype=float)
        out = np.zeros_like(g)
        active = g != 0
        if not active.any():
            return out
        if symmetric:
            matrix = convolution_matrix(self.N, alpha, self.nodes, self.core, self.nodes)
            adjoint = matrix.T @ (self.weights * g)
            positive = self.weights > 0
            out = matrix @ g / 2
            out[positive] += adjoint[positive] / (2 * self.weights[positive])
            return out
        # rows and segments away from the support of g are skipped
        row_mask = active if rows is None else np.asarray(rows, dtype=bool)
        row_idx = np.flatnonzero(row_mask)
        matrix = convolution_matrix(self.N, alpha, self.nodes, self.core, self.nodes[row_idx], active)
        out[row_idx] = matrix @ g
        return out

    def precondition(self, g: np.ndarray, s: float, shift: float) -> np.ndarray:
        if not self.uniform:
            return g / (1 + shift)
        return radial_resolvent(self, g, s, shift)

    def dilate(self, theta: float, method: str = "fourier") -> "RadialProfile":
        return dilate_profile(self, theta, method=method)


def trapezoid_weights(N: int, nodes: np.ndarray, core: bool) -> np.ndarray:
    r = np.asarray(nodes, dtype=float)
    left = np.concatenate([[0.0 if core else r[0]], r[:-1]])
    right = np.concatenate([r[1:], [r[-1]]])
    return r ** (N - 1) * (right - left) / 2


def profile_from_nodes(N: int, nodes, values, core: bool = True) -> RadialProfile:
    nodes = np.asarray(nodes, dtype=float)
    return RadialProfile(N, nodes, values, trapezoid_weights(N, nodes, core), core)


def uniform_profile(N: int, box: float, count: int, values=None) -> RadialProfile:
    """Profile on nodes j * box / (count + 1), j = 1..count, vanishing at r = box."""
    if count < 8:
        raise DomainError(f"A uniform radial profile needs at least 8 nodes, got {count}")
    if not box > 0:
        raise DomainError(f"Radial box must be positive, got {box}")
    spacing = box / (count + 1)
    nodes = spacing * np.arange(1, count + 1)
    if values is None:
        values = np.zeros(count)
    elif callable(values):
        values = values(nodes)
    return RadialProfile(N, nodes, values, nodes ** (N - 1) * spacing, True, spacing)


def annulus_profile(N: int, annulus: "Annulus", count: int = 64) -> RadialProfile:
    """Indicator of an annulus as a profile that is 1 on [R-h, R+h] and 0 elsewhere."""
    lo, hi = annulus.R - annulus.h, annulus.R + annulus.h
    nodes = np.linspace(lo, hi, count)
    return profile_from_nodes(N, nodes, np.ones(count), core=(lo == 0))


def profile_to_csv(u: RadialProfile) -> str:
    rows = ["r,value,weight"]
    for r, v, w in zip(u.nodes, u.values, u.weights):
        rows.append(",".join(FLOAT_FORMAT.format(x) for x in (r, v, w)))
    return "\n".join(rows) + "\n"


def profile_from_csv(text: str, N: int, core: bool = True) -> RadialProfile:
    data = np.loadtxt(text.splitlines()[1:], delimiter=",", ndmin=2)
    return RadialProfile(N, data[:, 0], data[:, 1], data[:, 2], core)


# Convolution of piecewise linear profiles

def _segments(nodes: np.ndarray, core: bool) -> Tuple[np.ndarray, ...]:
    a, b = nodes[:-1], nodes[1:]
    left = np.arange(nodes.size - 1)
    right = left + 1
    if core and nodes[0] > 0:
        a = np.concatenate([[0.0], a])
        b = np.concatenate([[nodes[0]], b])
        left = np.concatenate([[0], left])
        right = np.concatenate([[0], right])
    return a, b, left, right


def _singular_moments(r: np.ndarray, a: np.ndarray, b: np.ndarray, alpha: float, log_kind: bool):
    """Integrals of |rho - r|^(alpha-1) (or log|rho - r|) against the two hat halves on [a, b]."""
    lo, hi = a - r, b - r
    with np.errstate(divide="ignore", invalid="ignore"):
        if log_kind:
            def first(x):
                ax = np.abs(x)
                return np.where(ax > 0, x * np.log(np.where(ax > 0, ax, 1.0)) - x, 0.0)

            def second(x):
                ax = np.abs(x)
                return np.where(ax > 0, x ** 2 * np.log(np.where(ax > 0, ax, 1.0)) / 2 - x ** 2 / 4, 0.0)
        else:
            e = alpha - 1

            def first(x):
                return np.sign(x) * np.abs(x) ** (e + 1) / (e + 1)

            def second(x):
                return np.abs(x) ** (e + 2) / (e + 2)
        j0 = first(hi) - first(lo)
        j1 = second(hi) - second(lo)
    length = b - a
    right = (j1 + (r - a) * j0) / length
    return j0 - right, right


@lru_cache(maxsize=6)
def _cached_matrix(N, alpha, nodes_key, core, at_key, cols_key, order):
    nodes = np.frombuffer(nodes_key)
    at = np.frombuffer(at_key)
    cols = np.frombuffer(cols_key, dtype=bool) if cols_key else None
    matrix = _build_matrix(N, alpha, nodes, core, at, cols, order)
    matrix.setflags(write=False)
    return matrix


def convolution_matrix(N: int, alpha: float, nodes: np.ndarray, core: bool, at: np.ndarray,
                       active: Optional[np.ndarray] = None, order: int = GAUSS_ORDER) -> np.ndarray:
    """Matrix W with (I_alpha * u)(at) = W @ u for piecewise linear u on `nodes`.

    Only segments touching an `active` node are integrated. Matrices are cached
    and read-only.
    """
    nodes = np.ascontiguousarray(nodes, dtype=float)
    at = np.ascontiguousarray(at, dtype=float)
    cols_key = b"" if active is None else np.ascontiguousarray(active, dtype=bool).tobytes()
    return _cached_matrix(N, float(alpha), nodes.tobytes(), bool(core), at.tobytes(), cols_key, order)


def _build_matrix(N, alpha, nodes, core, at, active, order, chunk=64):
    a, b, left, right = _segments(nodes, core)
    if active is not None:
        keep = active[left] | active[right]
        a, b, left, right = a[keep], b[keep], left[keep], right[keep]
    matrix = np.zeros((at.size, nodes.size))
    if a.size == 0:
        return matrix
    xq, wq = gauss_legendre(order)
    length = b - a
    rho = a[:, None] + length[:, None] * xq
    rho_pow = rho ** (alpha - 1)
    log_kind = alpha == 1
    coeff = singular_coefficient(N, alpha)
    origin = riesz_constant(N, alpha) * sphere_area(N)
    for start in range(0, at.size, chunk):
        r = at[start:start + chunk, None]
        kernel = thim_kernel_vec(r[:, :, None] / rho[None], N, alpha) * rho_pow[None]
        dist = np.maximum(np.maximum(a[None] - r, r - b[None]), 0.0)
        near = (dist <= length[None]) & (r > 0)
        if near.any():
            gap = np.abs(r[:, :, None] - rho[None])
            gap = np.where(gap > 0, gap, np.finfo(float).tiny)
            singular = -coeff * np.log(gap) if log_kind else coeff * gap ** (alpha - 1)
            kernel = np.where(near[:, :, None], kernel - singular, kernel)
        cl = np.sum(kernel * (wq * (1 - xq)), axis=-1) * length
        cr = np.sum(kernel * (wq * xq), axis=-1) * length
        if near.any():
            sl, sr = _singular_moments(r, a[None], b[None], alpha, log_kind)
            sign = -1.0 if log_kind else 1.0
            cl = np.where(near, cl + sign * coeff * sl, cl)
            cr = np.where(near, cr + sign * coeff * sr, cr)
        at_origin = r[:, 0] == 0
        if at_origin.any():
            sl, sr = _singular_moments(np.zeros((1, 1)), a[None], b[None], alpha, False)
            cl[at_origin] = origin * sl
            cr[at_origin] = origin * sr
        block = matrix[start:start + chunk]
        np.add.at(block, (slice(None), left), cl)
        np.add.at(block, (slice(None), right), cr)
    log.debug(f"Built radial convolution matrix {matrix.shape} for N={N}, alpha={alpha}")
    return matrix


def radial_convolve(u: RadialProfile, alpha: float, at: Optional[Sequence[float]] = None) -> RadialProfile:
    """Profile of I_alpha * u on the nodes of u, or on the radii `at`.

    Raises:
        DomainError: alpha outside (0, N), or a uniform profile that does not vanish at its box
    """
    check_order_alpha(alpha, u.N)
    if not np.isfinite(u.nodes[-1]):
        raise DomainError("Radial convolution needs a profile with bounded support")
    points = u.nodes if at is None else np.asarray(at, dtype=float)
    if not np.any(u.values):
        values = np.zeros(points.size)
    else:
        values = convolution_matrix(u.N, alpha, u.nodes, u.core, points) @ u.values
    if at is None:
        return u.replace(values)
    return profile_from_nodes(u.N, points, values)


# Uniform radial backend, N = 3

def _sine_setup(u: RadialProfile) -> Tuple[np.ndarray, np.ndarray]:
    if not u.uniform:
        raise DomainError("The radial spectral backend needs a uniform profile in dimension 3")
    count = u.nodes.size
    k = np.pi * np.arange(1, count + 1) / u.box
    return k, u.nodes * u.values


def radial_dirichlet(u: RadialProfile, s: float) -> float:
    """[u]^2 = 4 pi (box / 2) sum_k k^(2s) b_k^2 with b the sine coefficients of r u."""
    k, v = _sine_setup(u)
    coeffs = fft.dst(v, type=1) / (v.size + 1)
    return float(4 * np.pi * u.box / 2 * np.sum(k ** (2 * s) * coeffs ** 2))


def radial_frac_laplacian(u: RadialProfile, s: float) -> np.ndarray:
    """(-Delta)^s u = r^-1 (-d^2/dr^2)^s (r u) evaluated with a type-I sine transform."""
    check_order_s(s)
    k, v = _sine_setup(u)
    return fft.idst(k ** (2 * s) * fft.dst(v, type=1), type=1) / u.nodes


def radial_resolvent(u: RadialProfile, g: np.ndarray, s: float, shift: float) -> np.ndarray:
    k, _ = _sine_setup(u)
    v = u.nodes * g
    return fft.idst(fft.dst(v, type=1) / (k ** (2 * s) + shift), type=1) / u.nodes


def dilate_profile(u: RadialProfile, theta: float, method: str = "fourier",
                   rtol: float = MASS_LOSS_RTOL) -> RadialProfile:
    """u(r / theta) on the same nodes; sine-series evaluation on uniform N = 3 profiles."""
    if not theta > 0:
        raise DomainError(f"Dilation factor must be positive, got {theta}")
    if theta == 1:
        return u.replace(u.values.copy())
    target = u.nodes / theta
    if method == "fourier" and u.uniform:
        k, v = _sine_setup(u)
        coeffs = fft.dst(v, type=1) / (v.size + 1)
        inside = target < u.box
        values = np.zeros_like(target)
        values[inside] = np.sin(np.outer(target[inside], k)) @ coeffs / target[inside]
    else:
        below = u.values[0] if u.core else 0.0
        values = np.interp(target, u.nodes, u.values, left=below, right=0.0)
    out = u.replace(values)
    before = u.mass2()
    if before > 0:
        ratio = out.mass2() / (theta ** u.N * before)
        if abs(ratio - 1) > rtol:
            raise BoxTooSmallError(
                f"Dilation by {theta} changed the radial mass by a factor {ratio:.6g} relative to theta^N"
            )
    return out


# Annuli

@dataclass(frozen=True)
class Annulus:
    """A(R, h) = {x : |x| in [R - h, R + h]}."""

    R: float
    h: float

    def __post_init__(self):
        if not self.R > 0 or self.h < 0 or self.R - self.h < 0:
            raise DomainError(f"Invalid annulus R={self.R}, h={self.h}")

    @property
    def inner(self) -> float:
        return self.R - self.h

    @property
    def outer(self) -> float:
        return self.R + self.h


def annuli_thickness(R: float, N: int, alpha: float) -> float:
    """Half thickness h_R that keeps the Riesz self-interaction of A(R, h_R) bounded in R."""
    if R < 2:
        raise DomainError(f"Annuli thickness is defined for R >= 2, got {R}")
    check_order_alpha(alpha, N)
    if alpha > 1:
        return float(R ** (-(N - 2 + alpha) / 2))
    if alpha == 1:
        return float(R ** (-(N - 1) / 2) * np.log(R) ** -0.5)
    return float(R ** (-(N - 1) / (1 + alpha)))


def _pair_quadrature(N: int, alpha: float, first: Annulus, second: Annulus) -> float:
    p_lo, p_hi = second.inner, second.outer

    def potential(r):
        points = [r] if p_lo < r < p_hi else None
        value, _ = quad(
            lambda rho: float(thim_kernel_vec(r / rho, N, alpha)) * rho ** (alpha - 1),
            p_lo, p_hi, points=points, epsabs=0.0, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT,
        )
        return value

    total, err = quad(lambda r: potential(r) * r ** (N - 1), first.inner, first.outer,
                      epsabs=0.0, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    if err > 1e-7 * abs(total) + QUAD_EPSABS:
        raise QuadratureError(f"Annulus interaction quadrature error {err:.3g} for value {total:.6g}")
    return sphere_area(N) * total


def _pair_profile(N: int, alpha: float, first: Annulus, second: Annulus, panels: int = 64,
                  nodes: int = 64) -> float:
    source = annulus_profile(N, second, nodes)
    xq, wq = gauss_legendre(GAUSS_ORDER)
    edges = np.linspace(first.inner, first.outer, panels + 1)
    width = np.diff(edges)
    points = (edges[:-1, None] + width[:, None] * xq).ravel()
    weights = (width[:, None] * wq).ravel()
    potential = radial_convolve(source, alpha, at=points).values
    return float(sphere_area(N) * np.sum(weights * points ** (N - 1) * potential))


def annulus_interaction(a1: Annulus, a2: Annulus, N: int, alpha: float, method: str = "quadrature") -> float:
    """Riesz interaction of two annuli indicators, int int I_alpha(x - y) chi_1(x) chi_2(y).

    Args:
        method: "quadrature" (nested adaptive radial quadrature) or "profile"
            (radial_convolve of the second annulus, Gauss-Legendre over the first)
    """
    _check_dimension(N)
    check_order_alpha(alpha, N)
    if a1.h == 0 or a2.h == 0:
        return 0.0
    # symmetric: integrate over the outer annulus against the potential of the inner one
    first, second = sorted((a1, a2), key=lambda a: (a.R, a.h), reverse=True)
    if method == "quadrature":
        return _pair_quadrature(N, alpha, first, second)
    if method == "profile":
        return _pair_profile(N, alpha, first, second)
    raise DomainError(f"Unknown interaction method {method}")


@dataclass
class InteractionMatrix:
    """Riesz interactions a_ij(t) of the annuli A(R^i, |t_i| h_{R^i}).

    Args:
        n: path dimension
        entries: symmetric matrix a_ij
        A_estimate: sum_i a_ii - sum_{i != j} a_ij
        R: base radius
        t: point of the polyhedron
    """

    n: int
    entries: np.ndarray
    A_estimate: float
    R: float = 0.0
    t: Tuple[float, ...] = field(default_factory=tuple)

    @property
    def cross_ratio(self) -> float:
        """Largest off-diagonal entry over the smallest nonzero diagonal entry."""
        diag = np.diag(self.entries)
        if self.n < 2 or not np.any(diag > 0):
            return 0.0
        off = self.entries - np.diag(diag)
        return float(np.max(np.abs(off)) / np.min(diag[diag > 0]))

    def rows(self) -> List[Tuple[float, int, int, float, float]]:
        return [
            (self.R, i + 1, j + 1, float(self.entries[i, j]), self.A_estimate)
            for i in range(self.n) for j in range(self.n)
        ]


def path_annuli(t: Sequence[float], R: float, N: int, alpha: float) -> List[Annulus]:
    return [Annulus(R ** i, abs(ti) * annuli_thickness(R ** i, N, alpha)) for i, ti in enumerate(t, start=1)]


def interaction_matrix(t: Sequence[float], R: float, N: int, alpha: float) -> InteractionMatrix:
    t = tuple(float(x) for x in t)
    if not t or not np.isclose(max(abs(x) for x in t), 1.0):
        raise DomainError(f"t must lie on the max-norm unit sphere, got {t}")
    annuli = path_annuli(t, R, N, alpha)
    n = len(t)
    entries = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            entries[i, j] = annulus_interaction(annuli[i], annuli[j], N, alpha)
            entries[j, i] = entries[i, j]
    off = entries.sum() - np.trace(entries)
    return InteractionMatrix(n=n, entries=entries, A_estimate=float(np.trace(entries) - off), R=R, t=t)


def scan_interaction(R_values: Sequence[float], t: Sequence[float], N: int, alpha: float) -> List[InteractionMatrix]:
    return [interaction_matrix(t, R, N, alpha) for R in R_values]


def interaction_rows_csv(matrices: Sequence[InteractionMatrix]) -> str:
    rows = ["R,i,j,a_ij,A_estimate"]
    for m in matrices:
        for R, i, j, a, A in m.rows():
            rows.append(f"{FLOAT_FORMAT.format(R)},{i},{j},{FLOAT_FORMAT.format(a)},{FLOAT_FORMAT.format(A)}")
    return "\n".join(rows) + "\n"


@dataclass
class ThresholdReport:
    """Smallest scanned radius R* with A_estimate > 0 and cross ratio below the cap."""

    R_star: float
    A_estimate: float
    cross_ratio: float
    scanned: List[InteractionMatrix]

    def dict(self):
        return {"R_star": self.R_star, "A_estimate": self.A_estimate, "cross_ratio": self.cross_ratio}


def locate_threshold(t: Sequence[float], N: int, alpha: float, R_lo: float = 2.0, R_hi: float = 64.0,
                     ratio_cap: float = 0.1, R_max: float = 4096.0, rtol: float = 1e-3) -> ThresholdReport:
    """Scan R geometrically from R_lo, then bisect in log R on the first passing bracket.

    The scan continues beyond R_hi (doubling, up to R_max) when no scanned
    radius passes.
    """
    def passes(m: InteractionMatrix) -> bool:
        return m.A_estimate > 0 and m.cross_ratio <= ratio_cap

    scanned: List[InteractionMatrix] = []
    R, previous = R_lo, None
    while True:
        m = interaction_matrix(t, R, N, alpha)
        scanned.append(m)
        if passes(m):
            break
        previous = R
        if R >= R_max:
            raise DomainError(f"No radius up to {R_max} gives a positive interaction estimate below ratio {ratio_cap}")
        R = R * 2 if R * 2 <= max(R_hi, R_max) else R_max
    hi_m = m
    if previous is not None:
        lo, hi = previous, R
        while hi / lo - 1 > rtol:
            mid = np.sqrt(lo * hi)
            mm = interaction_matrix(t, mid, N, alpha)
            scanned.append(mm)
            if passes(mm):
                hi, hi_m = mid, mm
            else:
                lo = mid
    log.info(f"Located R* = {hi_m.R:.6g} with A = {hi_m.A_estimate:.6g}, cross ratio {hi_m.cross_ratio:.3g}")
    return ThresholdReport(R_star=hi_m.R, A_estimate=hi_m.A_estimate, cross_ratio=hi_m.cross_ratio, scanned=scanned)
