"""
Periodic-box discretization of fields and the Fourier multipliers acting on them.

A `Field` samples a function on the box [-L, L)^N with P points per axis. The
multipliers use the unshifted wavenumbers k = pi j / L and every discrete sum is
weighted by h^N so that it approximates an integral over the box.
"""
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy import fft
from scipy.interpolate import RegularGridInterpolator
from scipy.special import gamma, zetac

from choquard.definitions import FLOAT_FORMAT, MASS_LOSS_RTOL
from choquard.utils import (
    BoxTooSmallError,
    DomainError,
    check_order_alpha,
    check_order_s,
    log,
    sphere_area,
)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-L, L)^N.

    Args:
        N: space dimension (1, 2 or 3)
        L: half width of the box
        P: number of points per axis, a power of two
    """

    N: int
    L: float
    P: int

    @property
    def h(self) -> float:
        return 2 * self.L / self.P

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.P,) * self.N

    @property
    def cell_volume(self) -> float:
        return self.h ** self.N

    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.P)

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis()] * self.N), indexing="ij"))

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c ** 2 for c in self.coordinates()))

    def wavenumbers(self) -> np.ndarray:
        """Per-axis wavenumbers k = pi j / L in FFT order."""
        return 2 * np.pi * fft.fftfreq(self.P, d=self.h)


@dataclass(frozen=True)
class SpectralConstants:
    """Normalizations of the singular-integral forms.

    Args:
        C_Ns: constant of the fractional Laplacian, 4^s Gamma((N+2s)/2) / (pi^{N/2} |Gamma(-s)|)
        C_Nalpha: constant of the Riesz potential, Gamma((N-alpha)/2) / (2^alpha pi^{N/2} Gamma(alpha/2))
    """

    C_Ns: float
    C_Nalpha: float

    dict = asdict


def riesz_constant(N: int, alpha: float) -> float:
    return float(gamma((N - alpha) / 2) / (2 ** alpha * np.pi ** (N / 2) * gamma(alpha / 2)))


def laplacian_constant(N: int, s: float) -> float:
    return float(4 ** s * gamma((N + 2 * s) / 2) / (np.pi ** (N / 2) * abs(gamma(-s))))


def spectral_constants(N: int, s: float, alpha: float) -> SpectralConstants:
    check_order_s(s)
    check_order_alpha(alpha, N)
    return SpectralConstants(C_Ns=laplacian_constant(N, s), C_Nalpha=riesz_constant(N, alpha))


def make_grid(N: int, L: float, P: int) -> Grid:
    """Build the periodic grid on [-L, L)^N with P points per axis."""
    if N not in (1, 2, 3):
        raise DomainError(f"Dimension must be 1, 2 or 3, got {N}")
    if not L > 0:
        raise DomainError(f"Half width must be positive, got {L}")
    if P < 8 or P & (P - 1):
        raise DomainError(f"Points per axis must be a power of two >= 8, got {P}")
    return Grid(N=int(N), L=float(L), P=int(P))


@lru_cache(maxsize=32)
def _kmag(grid: Grid, real: bool) -> np.ndarray:
    k = grid.wavenumbers()
    axes = [k] * grid.N
    if real:
        axes[-1] = 2 * np.pi * fft.rfftfreq(grid.P, d=grid.h)
    mesh = np.meshgrid(*axes, indexing="ij")
    kmag = np.sqrt(sum(m ** 2 for m in mesh))
    kmag.setflags(write=False)
    return kmag


@dataclass(frozen=True)
class Field:
    """Samples of a real function on a periodic grid.

    Args:
        grid: the grid the values live on
        values: array of shape (P,)*N
    """

    grid: Grid
    values: np.ndarray

    backend = "spectral"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.P ** self.grid.N:
            raise DomainError(f"Expected {self.grid.P ** self.grid.N} values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise DomainError("Field values must be finite")
        object.__setattr__(self, "values", values.reshape(self.grid.shape))

    def replace(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(self.grid.cell_volume * np.sum(a * b))

    def mass2(self) -> float:
        return self.inner(self.values, self.values)

    def dirichlet(self, s: float) -> float:
        return gagliardo_seminorm(self, s)

    def frac_laplacian_values(self, s: float) -> np.ndarray:
        return frac_laplacian(self, s).values

    def riesz_values(self, g: np.ndarray, alpha: float, rows=None, symmetric: bool = True) -> np.ndarray:
        # the free-space operator is symmetric, rows and symmetric only matter radially
        return riesz_convolve_free(Field(self.grid, g), alpha).values

    def precondition(self, g: np.ndarray, s: float, shift: float) -> np.ndarray:
        """Apply ((-Delta)^s + shift)^{-1} to g."""
        ghat = fft.rfftn(g)
        ghat /= _kmag(self.grid, True) ** (2 * s) + shift
        return fft.irfftn(ghat, s=self.grid.shape)

    def dilate(self, theta: float, method: str = "fourier") -> "Field":
        return dilate(self, theta, method=method)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def _checked_field(u: Field) -> Field:
    if not isinstance(u, Field):
        raise DomainError(f"Expected a Field, got {type(u).__name__}")
    return u


def frac_laplacian(u: Field, s: float) -> Field:
    """Apply the multiplier |k|^{2s}; the zero mode maps to 0."""
    check_order_s(s)
    _checked_field(u)
    uhat = fft.rfftn(u.values)
    uhat *= _kmag(u.grid, True) ** (2 * s)
    return u.replace(fft.irfftn(uhat, s=u.grid.shape))


def riesz_convolve(g: Field, alpha: float) -> Field:
    """Periodic Riesz potential: multiplier |k|^{-alpha} with the zero mode set to 0.

    Only the mean-zero part of g is convolved, so the result is defined up to
    an additive constant with respect to the free-space potential.
    """
    check_order_alpha(alpha, g.grid.N)
    kmag = _kmag(g.grid, True)
    mult = np.zeros_like(kmag)
    np.power(kmag, -alpha, out=mult, where=kmag > 0)
    ghat = fft.rfftn(g.values) * mult
    return g.replace(fft.irfftn(ghat, s=g.grid.shape))


def origin_weight(N: int, alpha: float, h: float) -> float:
    """Integral of |x|^{alpha-N} attributed to the cell at the origin.

    In one dimension this is the exact punctured trapezoidal correction
    -2 zeta(1-alpha) h^alpha; in higher dimensions the cell is replaced by the
    ball of equal volume.
    """
    if N == 1:
        return float(-2 * (zetac(1 - alpha) + 1) * h ** alpha)
    area = sphere_area(N)
    rho = h * (N / area) ** (1 / N)
    return float(area * rho ** alpha / alpha)


@lru_cache(maxsize=16)
def _free_kernel_hat(grid: Grid, alpha: float) -> np.ndarray:
    P, h = grid.P, grid.h
    offsets = h * np.concatenate([np.arange(P), np.arange(-P, 0)])
    mesh = np.meshgrid(*([offsets] * grid.N), indexing="ij")
    dist = np.sqrt(sum(m ** 2 for m in mesh))
    kernel = np.zeros_like(dist)
    np.power(dist, alpha - grid.N, out=kernel, where=dist > 0)
    kernel *= grid.cell_volume
    kernel[(0,) * grid.N] = origin_weight(grid.N, alpha, h)
    kernel *= riesz_constant(grid.N, alpha)
    khat = fft.rfftn(kernel).real
    khat.setflags(write=False)
    log.debug(f"Built free-space Riesz kernel for N={grid.N}, P={P}, alpha={alpha}")
    return khat


def riesz_convolve_free(g: Field, alpha: float) -> Field:
    """Free-space Riesz potential C_{N,alpha}|x|^{alpha-N} * g on the box.

    The field is zero padded to a box of twice the width, so no periodic
    images interact. The discrete operator is symmetric.
    """
    check_order_alpha(alpha, g.grid.N)
    P = g.grid.P
    padded = (2 * P,) * g.grid.N
    ghat = fft.rfftn(g.values, s=padded)
    conv = fft.irfftn(ghat * _free_kernel_hat(g.grid, alpha), s=padded)
    return g.replace(conv[(slice(0, P),) * g.grid.N])


def gagliardo_seminorm(u: Field, s: float) -> float:
    """Sum over modes of |k|^{2s} |u_k|^2 with grid measure weights."""
    check_order_s(s)
    uhat = fft.fftn(u.values)
    weight = u.grid.cell_volume / u.grid.P ** u.grid.N
    return float(weight * np.sum(_kmag(u.grid, False) ** (2 * s) * np.abs(uhat) ** 2))


def lp_norm(u: Field, p: float) -> float:
    return float((u.grid.cell_volume * np.sum(np.abs(u.values) ** p)) ** (1 / p))


def hls_ratio(g: Field, alpha: float) -> float:
    """D_alpha(g, g) / |g|_{2N/(N+alpha)}^2, bounded by the sharp HLS constant."""
    N = g.grid.N
    norm = lp_norm(g, 2 * N / (N + alpha))
    if norm == 0:
        return 0.0
    return g.inner(riesz_convolve_free(g, alpha).values, g.values) / norm ** 2


def tail_mass(u: Field, fraction: float = 0.75) -> float:
    """Share of the squared L2 mass outside the ball of radius fraction*L."""
    total = u.mass2()
    if total == 0:
        return 0.0
    outside = u.grid.radius() > fraction * u.grid.L
    return u.inner(u.values * outside, u.values) / total


def _dirichlet_kernel(z: np.ndarray, P: int, L: float) -> np.ndarray:
    """Trigonometric interpolation kernel of the P-point periodic grid."""
    phi = np.pi * z / L
    half = np.sin(phi / 2)
    small = np.abs(half) < 1e-13
    safe = np.where(small, 1.0, half)
    return np.where(small, 1.0, np.sin(P * phi / 2) * np.cos(phi / 2) / safe / P)


def dilate(u: Field, theta: float, method: str = "fourier", rtol: float = MASS_LOSS_RTOL) -> Field:
    """Return u(x / theta) sampled on the same grid.

    Args:
        u: field to dilate
        theta: dilation factor, theta > 0
        method: "fourier" (band-limited) or "linear" (for indicator-like fields)
        rtol: tolerated relative deviation of the mass from theta^N times the original

    Raises:
        BoxTooSmallError: when the dilated support leaves the box
    """
    if not theta > 0:
        raise DomainError(f"Dilation factor must be positive, got {theta}")
    if theta == 1:
        return u.replace(u.values.copy())
    grid = u.grid
    x = grid.axis()
    if method == "fourier":
        matrix = _dirichlet_kernel(x[:, None] / theta - x[None, :], grid.P, grid.L)
        values = u.values
        for ax in range(grid.N):
            values = np.moveaxis(np.tensordot(matrix, values, axes=([1], [ax])), 0, ax)
    elif method == "linear":
        interp = RegularGridInterpolator((x,) * grid.N, u.values, bounds_error=False, fill_value=0.0)
        points = np.stack([c / theta for c in grid.coordinates()], axis=-1)
        values = interp(points)
    else:
        raise DomainError(f"Unknown interpolation method {method}")
    out = u.replace(values)
    before = u.mass2()
    if before > 0:
        ratio = out.mass2() / (theta ** grid.N * before)
        if abs(ratio - 1) > rtol:
            raise BoxTooSmallError(
                f"Dilation by {theta} changed the mass by a factor {ratio:.6g} "
                f"relative to theta^N, the support does not fit in the box of half width {grid.L}"
            )
    return out


def gaussian(grid: Grid, amplitude: float = 1.0, width: float = 1.0) -> Field:
    return Field(grid, amplitude * np.exp(-grid.radius() ** 2 / (2 * width ** 2)))


def field_bytes(u: Field) -> bytes:
    """Little-endian header (N, P, L) followed by the values in row-major order."""
    header = np.array([u.grid.N, u.grid.P], dtype="<i8").tobytes() + np.array([u.grid.L], dtype="<f8").tobytes()
    return header + np.ascontiguousarray(u.values, dtype="<f8").tobytes()


def field_from_bytes(raw: bytes) -> Field:
    if len(raw) < 24:
        raise DomainError("Truncated field data")
    N, P = (int(v) for v in np.frombuffer(raw[:16], dtype="<i8"))
    L = float(np.frombuffer(raw[16:24], dtype="<f8")[0])
    grid = make_grid(N, L, P)
    return Field(grid, np.frombuffer(raw[24:], dtype="<f8").reshape(grid.shape).copy())


def write_field(u: Field, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_bytes(field_bytes(u))
    return path


def read_field(path: Union[str, Path]) -> Field:
    return field_from_bytes(Path(path).read_bytes())


def field_to_csv(u: Field) -> str:
    if u.grid.N != 1:
        raise DomainError("CSV export is only available for one-dimensional fields")
    rows = ["x,value"]
    for x, v in zip(u.grid.axis(), u.values):
        rows.append(f"{FLOAT_FORMAT.format(x)},{FLOAT_FORMAT.format(v)}")
    return "\n".join(rows) + "\n"
