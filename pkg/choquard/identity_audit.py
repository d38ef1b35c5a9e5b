"""
Numerical audit of the integration by parts behind the Pohozaev identity.

For a vector field X the fractional and the Riesz divergence kernels

    K_X^s(x, y)        = (div X(x) + div X(y)) / 2 - (N + 2s) / 2 (X(x) - X(y)).(x - y) / |x - y|^2
    K_X^{-alpha/2}(x, y) = same with (N - alpha) / 2

turn the weighted double integrals of u and H = F(u) into the local pairings
-int (-Delta)^s u (grad u . X) and -int (I_alpha * H)(grad H . X). The double
integrals are lattice sums over the grid with the punctured diagonal
corrected (zeta correction in N=1, equal-volume ball in N=2), and the
Laplacian pairing adds the exact contribution of the exterior of the box.
The local sides are spectral.
"""
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft

from choquard.functionals import FunctionalContext, base_integrals, pohozaev_residual
from choquard.spectral_core import (
    Field,
    frac_laplacian,
    laplacian_constant,
    origin_weight,
    riesz_constant,
    riesz_convolve_free,
    spectral_constants,
)
from choquard.utils import (
    DomainError,
    SingularityError,
    check_order_alpha,
    check_order_s,
    log,
    loglog_slope,
)

RESIDUAL_FLOOR = 1e-300
AITKEN_SETTLED = 1e-12
EXTERIOR_ANGLES = 1440
CUTOFF_INDICES = (2, 4, 8)
REGULARITY_CAVEAT = (
    "The audit assumes u is locally Lipschitz and locally C^gamma with gamma > 2s; "
    "only discrete smoothness is observed, the hypothesis is not certified."
)

Vectors = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class VectorField:
    """A C^1 vector field X on R^N acting on points of shape (..., N).

    Args:
        N: dimension
        X: x -> X(x), shape (..., N)
        div: x -> div X(x), shape (...)
        jacobian: x -> DX(x), shape (..., N, N)
        support: radius of a ball containing the support, inf for X(x) = x
        name: label for reports
    """

    N: int
    X: Vectors
    div: Vectors
    jacobian: Vectors
    support: float
    name: str


def identity_field(N: int) -> VectorField:
    return VectorField(
        N=N,
        X=lambda x: np.asarray(x, dtype=float),
        div=lambda x: np.full(np.shape(x)[:-1], float(N)),
        jacobian=lambda x: np.broadcast_to(np.eye(N), np.shape(x)[:-1] + (N, N)),
        support=np.inf,
        name="identity",
    )


def constant_field(c: Sequence[float]) -> VectorField:
    c = np.asarray(c, dtype=float)
    N = c.size
    return VectorField(
        N=N,
        X=lambda x: np.broadcast_to(c, np.shape(x)),
        div=lambda x: np.zeros(np.shape(x)[:-1]),
        jacobian=lambda x: np.zeros(np.shape(x)[:-1] + (N, N)),
        support=np.inf,
        name="constant",
    )


def cutoff_profile(r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """phi_1 and phi_1': 1 on [0, 1], cubic Hermite ramp to 0 on [1, 2], 0 beyond."""
    r = np.asarray(r, dtype=float)
    z = np.clip(r - 1, 0.0, 1.0)
    phi = 1 - 3 * z ** 2 + 2 * z ** 3
    dphi = np.where((r > 1) & (r < 2), -6 * z + 6 * z ** 2, 0.0)
    return phi, dphi


def cutoff_family(n: int, N: int, radius: float = 1.0) -> VectorField:
    """X_n(x) = phi_1(|x| / (n radius)) x: equal to x on B_{n radius}, zero outside B_{2 n radius}."""
    if n < 1:
        raise DomainError(f"Cut-off index must be at least 1, got {n}")
    if not radius > 0:
        raise DomainError(f"Cut-off radius must be positive, got {radius}")
    scale = n * radius

    def parts(x):
        x = np.asarray(x, dtype=float)
        r = np.sqrt(np.sum(x ** 2, axis=-1))
        phi, dphi = cutoff_profile(r / scale)
        return x, r, phi, dphi / scale

    def X(x):
        x, _, phi, _ = parts(x)
        return phi[..., None] * x

    def div(x):
        _, r, phi, dphi = parts(x)
        return N * phi + dphi * r

    def jacobian(x):
        x, r, phi, dphi = parts(x)
        safe = np.where(r > 0, r, 1.0)
        outer = x[..., :, None] * x[..., None, :] / safe[..., None, None]
        return phi[..., None, None] * np.eye(N) + dphi[..., None, None] * outer

    return VectorField(N=N, X=X, div=div, jacobian=jacobian, support=2 * scale, name=f"cutoff_{n}")


def gradient_bound(X: VectorField, radius: float, samples: int = 4096) -> float:
    """sup over |x| <= radius of |x| |grad phi(x)|, with phi = X / x on a radial ray."""
    r = np.linspace(0.0, radius, samples)
    x = np.zeros((samples, X.N))
    x[:, 0] = r
    div = X.div(x)
    # div X = N phi + r phi' for X = phi x
    safe = np.where(r > 0, r, 1.0)
    phi = np.where(r > 0, X.X(x)[:, 0] / safe, 1.0)
    return float(np.max(np.abs(div - X.N * phi)))


# Kernels

def _kernel(X: VectorField, x, y, coefficient: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = x - y
    dist2 = np.sum(diff ** 2, axis=-1)
    if np.any(dist2 == 0):
        raise SingularityError("Divergence kernels are singular on the diagonal x = y")
    quotient = np.sum((X.X(x) - X.X(y)) * diff, axis=-1) / dist2
    return (X.div(x) + X.div(y)) / 2 - coefficient * quotient


def frac_div_kernel(X: VectorField, x, y, s: float) -> np.ndarray:
    """K_X^s(x, y) for points of shape (..., N); raises SingularityError on x = y."""
    check_order_s(s)
    return _kernel(X, x, y, (X.N + 2 * s) / 2)


def riesz_div_kernel(X: VectorField, x, y, alpha: float) -> np.ndarray:
    """K_X^{-alpha/2}(x, y) for points of shape (..., N); raises SingularityError on x = y."""
    check_order_alpha(alpha, X.N)
    return _kernel(X, x, y, (X.N - alpha) / 2)


@dataclass
class KernelPair:
    """Double integral `lhs` against its local form `rhs`."""

    lhs: float
    rhs: float
    residual: float

    dict = asdict


def kernel_pair(lhs: float, rhs: float, floor: float = RESIDUAL_FLOOR) -> KernelPair:
    return KernelPair(float(lhs), float(rhs), float(abs(lhs - rhs) / (abs(lhs) + abs(rhs) + floor)))


# Lattice machinery

def _points(u: Field) -> np.ndarray:
    return np.stack([c.ravel() for c in u.grid.coordinates()], axis=-1)


def spectral_gradient(u: Field) -> np.ndarray:
    """grad u by FFT differentiation, shape (P^N, N)."""
    k = u.grid.wavenumbers()
    uhat = fft.fftn(u.values)
    parts = []
    for ax in range(u.grid.N):
        shape = [1] * u.grid.N
        shape[ax] = -1
        parts.append(fft.ifftn(1j * k.reshape(shape) * uhat).real.ravel())
    return np.stack(parts, axis=-1)


def _check_audit_field(u: Field, X: VectorField) -> None:
    if not isinstance(u, Field):
        raise DomainError("Kernel pairings need a spectral Field")
    if u.grid.N not in (1, 2):
        raise DomainError(f"Kernel pairings are computed in dimension 1 or 2, got {u.grid.N}")
    if X.N != u.grid.N:
        raise DomainError(f"Vector field of dimension {X.N} used on a grid of dimension {u.grid.N}")
    edge = u.grid.L - u.grid.h / 2
    if not np.isfinite(X.support) and X.name not in ("identity", "constant"):
        raise DomainError(f"Vector field {X.name} must have compact support")
    if np.isfinite(X.support) and X.support > edge:
        raise DomainError(f"Vector field support {X.support} leaves the box of half width {edge}")


def _lattice_sums(points: np.ndarray, rows: np.ndarray, pair: Callable, h: float, eps: Sequence[float],
                  chunk: int = 256) -> Tuple[float, np.ndarray]:
    """sum over x in `rows`, y != x of pair(x-index, y-indices), and the same sums restricted to |x - y| > eps_k."""
    N = points.shape[1]
    eps = np.asarray(eps, dtype=float)
    total = 0.0
    excluded = np.zeros(eps.size)
    for start in range(0, rows.size, chunk):
        block = rows[start:start + chunk]
        diff = points[block, None, :] - points[None, :, :]
        dist = np.sqrt(np.sum(diff ** 2, axis=-1))
        dist[np.arange(block.size), block] = np.inf
        values = pair(block, dist)
        values[~np.isfinite(dist)] = 0.0
        total += float(np.sum(values))
        for k, e in enumerate(eps):
            excluded[k] += float(np.sum(values[dist > e]))
    return total * h ** (2 * N), excluded * h ** (2 * N)


def _exit_distances(x: np.ndarray, lo: float, hi: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distances from each point to the box boundary along sampled directions, with the direction weights."""
    N = x.shape[1]
    if N == 1:
        directions = np.array([[1.0], [-1.0]])
        weights = np.ones(2)
    else:
        phi = (np.arange(EXTERIOR_ANGLES) + 0.5) * 2 * np.pi / EXTERIOR_ANGLES
        directions = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        weights = np.full(EXTERIOR_ANGLES, 2 * np.pi / EXTERIOR_ANGLES)
    with np.errstate(divide="ignore"):
        bound = np.where(directions[None, :, :] > 0, hi, lo) - x[:, None, :]
        steps = np.where(directions[None, :, :] != 0, bound / directions[None, :, :], np.inf)
    return np.min(steps, axis=-1), directions, weights


def _laplacian_exterior(u: Field, X: VectorField, s: float, rows: np.ndarray) -> float:
    """Both orders of the pairs (x in the box, y outside it) of the Laplacian pairing."""
    x = _points(u)[rows]
    values = u.values.ravel()[rows]
    N = u.grid.N
    lo, hi = -u.grid.L - u.grid.h / 2, u.grid.L - u.grid.h / 2
    dist, directions, weights = _exit_distances(x, lo, hi)
    m0 = np.sum(weights * dist ** (-2 * s), axis=1) / (2 * s)
    if X.name == "constant":
        return 0.0
    if X.name == "identity":
        kernel = (N - (N + 2 * s) / 2) * m0
    else:
        m1 = -np.einsum("d,pd,dn->pn", weights, dist ** (-1 - 2 * s), directions) / (1 + 2 * s)
        kernel = X.div(x) / 2 * m0 - (N + 2 * s) / 2 * np.sum(X.X(x) * m1, axis=-1)
    return float(2 * u.grid.cell_volume * np.sum(values ** 2 * kernel))


def _laplacian_diagonal(u: Field, X: VectorField, s: float, rows: np.ndarray) -> np.ndarray:
    """Angular mean of |u(x) - u(y)|^2 K_X^s / |x - y|^(N+2s) |x - y|^(2s+N-2) as y -> x."""
    N = u.grid.N
    x = _points(u)[rows]
    g = spectral_gradient(u)[rows]
    div = X.div(x)
    c = (N + 2 * s) / 2
    if N == 1:
        return g[:, 0] ** 2 * (div - c * X.jacobian(x)[:, 0, 0])
    B = X.jacobian(x)
    B = (B + np.swapaxes(B, -1, -2)) / 2
    g2 = np.sum(g ** 2, axis=-1)
    gBg = np.einsum("pi,pij,pj->p", g, B, g)
    return div * g2 / 2 - c * (g2 * np.trace(B, axis1=-2, axis2=-1) + 2 * gBg) / 8


def _laplacian_lattice(u: Field, X: VectorField, s: float, eps: Sequence[float] = ()):
    N = u.grid.N
    points = _points(u)
    values = u.values.ravel()
    rows = np.flatnonzero(np.abs(values) > 1e-15 * np.max(np.abs(values)))
    # pairs with both ends outside the rows vanish; pairs (row, non-row) are counted in both orders
    weight = np.where(np.isin(np.arange(values.size), rows), 1.0, 2.0)
    C = laplacian_constant(N, s)

    def pair(block, dist):
        K = frac_div_kernel(X, points[block, None, :], np.where(np.isfinite(dist)[..., None], points[None, :, :],
                                                                points[block, None, :] + 1.0), s)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = (values[block, None] - values[None, :]) ** 2 * K / dist ** (N + 2 * s)
        return f * weight[None, :]

    total, excluded = _lattice_sums(points, rows, pair, u.grid.h, eps)
    diagonal = u.grid.cell_volume * origin_weight(N, 2 - 2 * s, u.grid.h) * np.sum(_laplacian_diagonal(u, X, s, rows))
    exterior = _laplacian_exterior(u, X, s, rows)
    full = total + diagonal + exterior
    return C / 2 * full, C / 2 * (excluded + exterior)


def _riesz_lattice(H: Field, X: VectorField, alpha: float, eps: Sequence[float] = ()):
    N = H.grid.N
    points = _points(H)
    values = H.values.ravel()
    rows = np.flatnonzero(values != 0)
    C = riesz_constant(N, alpha)

    def pair(block, dist):
        K = riesz_div_kernel(X, points[block, None, :], np.where(np.isfinite(dist)[..., None], points[None, :, :],
                                                                 points[block, None, :] + 1.0), alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = values[block, None] * values[None, :] * K * dist ** (alpha - N)
        return f

    total, excluded = _lattice_sums(points, rows, pair, H.grid.h, eps)
    x = points[rows]
    mean_kernel = X.div(x) * (N + alpha) / (2 * N)
    diagonal = H.grid.cell_volume * origin_weight(N, alpha, H.grid.h) * np.sum(values[rows] ** 2 * mean_kernel)
    return C * (total + diagonal), C * excluded


def _local_laplacian(u: Field, X: VectorField, s: float) -> float:
    transport = np.sum(spectral_gradient(u) * X.X(_points(u)), axis=-1)
    return -u.inner(frac_laplacian(u, s).values.ravel(), transport)


def _local_riesz(H: Field, X: VectorField, alpha: float) -> float:
    transport = np.sum(spectral_gradient(H) * X.X(_points(H)), axis=-1)
    return -H.inner(riesz_convolve_free(H, alpha).values.ravel(), transport)


def pairing_check_laplacian(u: Field, X: VectorField, s: float) -> KernelPair:
    """(C_{N,s}/2) int int |u(x)-u(y)|^2 K_X^s / |x-y|^(N+2s) against -int (-Delta)^s u (grad u . X)."""
    check_order_s(s)
    _check_audit_field(u, X)
    if not np.any(u.values):
        return KernelPair(0.0, 0.0, 0.0)
    lhs, _ = _laplacian_lattice(u, X, s)
    return kernel_pair(lhs, _local_laplacian(u, X, s))


def pairing_check_riesz(H: Field, X: VectorField, alpha: float) -> KernelPair:
    """int int I_alpha(x-y) H(x) H(y) K_X^{-alpha/2} against -int (I_alpha * H)(grad H . X)."""
    check_order_alpha(alpha, H.grid.N)
    _check_audit_field(H, X)
    if not np.any(H.values):
        return KernelPair(0.0, 0.0, 0.0)
    lhs, _ = _riesz_lattice(H, X, alpha)
    return kernel_pair(lhs, _local_riesz(H, X, alpha))


def _midway(u: Field, eps: Sequence[float]) -> np.ndarray:
    h = u.grid.h
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= h):
        raise DomainError(f"Exclusion radii must exceed the grid spacing {h}")
    return (np.floor(eps / h - 0.5) + 0.5) * h


def boundary_term(u: Field, X: VectorField, order: float, eps: Sequence[float],
                  kernel: str = "laplacian") -> np.ndarray:
    """E_eps: the part of the double integral with |x - y| < eps.

    Each eps is moved to the nearest point midway between lattice shells.
    For the Riesz kernel u is the density H and `order` is alpha.
    """
    _check_audit_field(u, X)
    radii = _midway(u, eps)
    if kernel == "laplacian":
        check_order_s(order)
        full, excluded = _laplacian_lattice(u, X, order, radii)
    elif kernel == "riesz":
        check_order_alpha(order, u.grid.N)
        full, excluded = _riesz_lattice(u, X, order, radii)
    else:
        raise DomainError(f"Unknown kernel {kernel}")
    return full - excluded


@dataclass
class EpsSweep:
    eps: List[float]
    values: List[float]
    exponent: float
    fit_residual: float

    dict = asdict


def eps_sweep(u: Field, X: VectorField, order: float, eps: Sequence[float], kernel: str = "laplacian") -> EpsSweep:
    """Fitted exponent of E_eps; 2 - 2s for the Laplacian kernel and alpha for the Riesz kernel."""
    radii = _midway(u, eps)
    values = boundary_term(u, X, order, radii, kernel)
    exponent, residual = loglog_slope(radii, values)
    return EpsSweep(eps=[float(e) for e in radii], values=[float(v) for v in values],
                    exponent=exponent, fit_residual=residual)


def aitken(values: Sequence[float]) -> Tuple[float, bool]:
    """Aitken extrapolation of the last three values; the flag is False when the sequence does not contract."""
    if len(values) < 3:
        raise DomainError("Aitken extrapolation needs three values")
    a, b, c = (float(v) for v in values[-3:])
    d1, d2 = b - a, c - b
    if abs(d2) <= AITKEN_SETTLED * max(abs(c), RESIDUAL_FLOOR):
        return c, True
    if d1 == d2 or d1 == 0:
        return c, False
    ratio = d2 / d1
    if not abs(ratio) < 1:
        return c, False
    return c - d2 ** 2 / (d2 - d1), True


# Full audit

@dataclass
class CutoffLimit:
    """Pairing values along X_n with their extrapolated limit and the direct value it should reach."""

    indices: List[int]
    values: List[float]
    extrapolated: float
    expected: float
    converged: bool

    dict = asdict


@dataclass
class AuditReport:
    N: int
    s: float
    alpha: float
    lam: float
    backend: str
    pairing_residuals: Dict[str, float] = field(default_factory=dict)
    eps_exponents: Dict[str, float] = field(default_factory=dict)
    limits: Dict[str, CutoffLimit] = field(default_factory=dict)
    identity_residual: float = float("nan")
    direct_residual: float = 0.0
    equivalent_residual: float = 0.0
    caveat: str = REGULARITY_CAVEAT

    dict = asdict

    def to_json(self) -> str:
        return json.dumps(self.dict(), indent=2, default=float)


def _audit_radius(u: Field) -> float:
    edge = u.grid.L - u.grid.h / 2
    return 0.95 * edge / (2 * max(CUTOFF_INDICES))


def pohozaev_full_audit(candidate, ctx: FunctionalContext, eps: Optional[Sequence[float]] = None) -> AuditReport:
    """The three cut-off limits, extrapolated, against (N-2s)/2 [u]^2, (N+alpha)/2 D(u) and N/2 mu |u|^2.

    Pairings are computed on N in {1, 2} Fields; other candidates get the
    direct residuals only.
    """
    u = candidate.u
    ctx = ctx.with_lambda(candidate.lam)
    N, s, alpha = ctx.N, ctx.s, ctx.alpha
    constants = spectral_constants(N, s, alpha)
    log.info(f"Pohozaev audit: C_N,s = {constants.C_Ns:.12g}, C_N,alpha = {constants.C_Nalpha:.12g}")
    report = AuditReport(N=N, s=s, alpha=alpha, lam=candidate.lam, backend=u.backend)
    if not np.any(u.values):
        report.identity_residual = 0.0
        return report
    report.direct_residual, report.equivalent_residual = pohozaev_residual(u, ctx)
    if not (isinstance(u, Field) and N in (1, 2)):
        log.info("Kernel pairings skipped, only the direct Pohozaev residuals are reported")
        return report

    a, b, d = base_integrals(u, ctx)
    H = u.replace(ctx.nonlinearity.eval(u.values)[0])
    radius = _audit_radius(u)
    laplacian, riesz, mass = [], [], []
    for n in CUTOFF_INDICES:
        X = cutoff_family(n, N, radius)
        lap = pairing_check_laplacian(u, X, s)
        rz = pairing_check_riesz(H, X, alpha)
        laplacian.append(lap.lhs)
        riesz.append(rz.lhs)
        mass.append(ctx.mu / 2 * u.inner(u.values.ravel() ** 2, X.div(_points(u))))
        report.pairing_residuals[f"laplacian_{n}"] = lap.residual
        report.pairing_residuals[f"riesz_{n}"] = rz.residual
    for name, values, expected in (
        ("dirichlet", laplacian, (N - 2 * s) / 2 * a),
        ("riesz", riesz, (N + alpha) / 2 * d),
        ("mass", mass, N / 2 * ctx.mu * b),
    ):
        limit, ok = aitken(values)
        if not ok:
            log.warning(f"Cut-off limit of the {name} pairing did not contract, last value reported")
        report.limits[name] = CutoffLimit(list(CUTOFF_INDICES), [float(v) for v in values], limit, expected, ok)
    t1, t3, t2 = (report.limits[k].extrapolated for k in ("dirichlet", "riesz", "mass"))
    report.identity_residual = abs(t1 + t2 - t3) / (abs(t1) + abs(t2) + abs(t3))
    if eps is not None:
        X = cutoff_family(CUTOFF_INDICES[-1], N, radius)
        report.eps_exponents["laplacian"] = eps_sweep(u, X, s, eps, "laplacian").exponent
        report.eps_exponents["riesz"] = eps_sweep(H, X, alpha, eps, "riesz").exponent
    return report
