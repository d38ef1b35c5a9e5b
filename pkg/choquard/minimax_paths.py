"""
Finite-dimensional minimax paths and the upper bounds they certify.

A path maps the boundary of the cube [-1, 1]^n into H^s. Two families are
built: disjoint radial bumps (`simple_bumps`) and regularized indicators of
thin annuli at radii R, R^2, ..., R^n (`annuli`). Along each path the
extension h * gamma(t)(. / theta), h in [0, 1], gives sampled upper bounds for
the minimax levels a_n(lambda) and the quantities derived from them.

All sampled integrals ([u]^2, |u|_2^2 and D(h u) on the fiber grid) are
independent of lambda, so one `PathTable` serves a whole lambda scan.
"""
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property, lru_cache
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from choquard.definitions import (
    FACE_RESOLUTION,
    FIBER_OCTAVES,
    FIBER_POINTS,
    FLOAT_FORMAT,
    ROOT_XTOL,
    THETA_DOUBLINGS,
    THETA_OCTAVES,
)
from choquard.functionals import D_value, FunctionalContext, dilation_root, fiber_J
from choquard.nonlinearity import exponent_set, lower_bound_constant, quotient_sup
from choquard.radial_riesz import (
    Annulus,
    RadialProfile,
    annuli_thickness,
    annulus_interaction,
    profile_from_nodes,
    uniform_profile,
)
from choquard.spectral_core import Field, Grid
from choquard.utils import DomainError, HypothesisError, PathError, log, sphere_area

VARIANTS = ("simple_bumps", "annuli")

Discretized = Union[Field, RadialProfile]


@dataclass(frozen=True)
class PathSpec:
    """Geometry of a minimax path.

    Args:
        n: dimension of the parameter cube
        variant: "simple_bumps" or "annuli"
        sigma0: amplitude, F(sigma0) > 0
        N: space dimension
        alpha: Riesz order, fixes the annuli thickness
        R: base radius of the annuli, R^i for i = 1..n
        eps: collar width of the regularized annuli
        bumps: (centre, half width) of each bump; defaults to centres 3(i-1), width 1
        grid: periodic grid for spectral bumps; radial bumps (N=3) otherwise
        radial_box: box radius of radial bumps
        radial_count: nodes of radial bumps
        resolution: subdivisions per face edge, even
        fiber: uniform part of the h grid
        collar_nodes: nodes per collar of an annulus
        core_nodes: nodes across the core of an annulus
        theta_star: dilation of a previous run, reported only
    """

    n: int
    variant: str = "simple_bumps"
    sigma0: float = 1.0
    N: int = 3
    alpha: float = 2.0
    R: float = 4.0
    eps: float = 1e-2
    bumps: Tuple[Tuple[float, float], ...] = ()
    grid: Optional[Grid] = None
    radial_box: float = 24.0
    radial_count: int = 511
    resolution: int = FACE_RESOLUTION
    fiber: int = FIBER_POINTS
    collar_nodes: int = 16
    core_nodes: int = 8
    theta_star: Optional[float] = None

    dict = asdict

    def __post_init__(self):
        if self.n < 1:
            raise PathError(f"Path dimension must be at least 1, got {self.n}")
        if self.variant not in VARIANTS:
            raise PathError(f"Unknown path variant {self.variant}, expected one of {VARIANTS}")
        if self.sigma0 == 0:
            raise PathError("Path amplitude sigma0 must not vanish")
        if self.resolution < 2 or self.resolution % 2:
            raise PathError(f"Face resolution must be even and at least 2, got {self.resolution}")
        if self.fiber < 2:
            raise PathError(f"Fiber grid needs at least 2 points, got {self.fiber}")
        if self.grid is not None and self.grid.N != self.N:
            raise PathError(f"Grid dimension {self.grid.N} does not match N = {self.N}")
        if self.variant == "simple_bumps":
            self._check_bumps()
        else:
            self._check_annuli()

    @property
    def bump_list(self) -> Tuple[Tuple[float, float], ...]:
        if self.bumps:
            return tuple(self.bumps[: self.n])
        return tuple((3.0 * i, 1.0) for i in range(self.n))

    def _check_bumps(self) -> None:
        bumps = self.bump_list
        if len(bumps) < self.n:
            raise PathError(f"{self.n} bumps needed, {len(bumps)} given")
        for centre, width in bumps:
            if not width > 0 or centre < 0:
                raise PathError(f"Invalid bump centre {centre}, half width {width}")
        for (c1, w1), (c2, w2) in zip(bumps, bumps[1:]):
            if c1 + w1 > c2 - w2:
                raise PathError(f"Bumps at {c1} and {c2} overlap")
        outer = max(c + w for c, w in bumps)
        if self.grid is None:
            if self.N != 3:
                raise PathError("Spectral bumps need a grid when N != 3")
            if outer >= self.radial_box:
                raise PathError(f"Bumps reach radius {outer}, beyond the radial box {self.radial_box}")
        elif outer >= self.grid.L:
            raise PathError(f"Bumps reach radius {outer}, beyond the grid half width {self.grid.L}")

    def _check_annuli(self) -> None:
        if self.R < 2:
            raise PathError(f"Annuli need R >= 2, got {self.R}")
        if not self.eps > 0:
            raise PathError(f"Collar width must be positive, got {self.eps}")
        if self.collar_nodes < 1 or self.core_nodes < 1:
            raise PathError("Annuli need at least one collar node and one core node")
        previous = 0.0
        for i in range(1, self.n + 1):
            radius = self.R ** i
            h = annuli_thickness(radius, self.N, self.alpha)
            if radius - h - self.eps <= previous:
                raise PathError(f"Regularized annuli {i - 1} and {i} overlap (R={self.R}, eps={self.eps})")
            previous = radius + h + self.eps


def sample_polyhedron(n: int, resolution: int = FACE_RESOLUTION) -> np.ndarray:
    """Lattice points with max|t_i| = 1 on the grid {k / (resolution / 2)}.

    The sample set is closed under t -> -t, contains the coordinate vertices
    and, embedded with zero last coordinates, every sample set of lower n.

    Returns:
        array of shape (samples, n); for n = 2 there are 4 * resolution rows
    """
    if n < 1:
        raise DomainError(f"Polyhedron dimension must be at least 1, got {n}")
    if resolution < 2 or resolution % 2:
        raise DomainError(f"Face resolution must be even and at least 2, got {resolution}")
    if n == 1:
        return np.array([[1.0], [-1.0]])
    axis = np.arange(-resolution, resolution + 1, 2) / resolution
    samples = [t for t in product(axis, repeat=n) if max(abs(x) for x in t) == 1.0]
    return np.array(samples, dtype=float)


def fiber_grid(points: int = FIBER_POINTS, octaves: int = FIBER_OCTAVES) -> np.ndarray:
    """Amplitudes h in [0, 1]: uniform steps joined with quarter octaves down to 2^-octaves."""
    uniform = np.arange(points + 1) / points
    geometric = 2.0 ** (-np.arange(1, 4 * octaves + 1) / 4)
    return np.unique(np.concatenate([uniform, geometric]))


def bump(r: np.ndarray, centre: float, width: float) -> np.ndarray:
    """exp(1 - 1 / (1 - z^2)) with z = (r - centre) / width, zero for |z| >= 1."""
    z = (np.asarray(r, dtype=float) - centre) / width
    out = np.zeros_like(z)
    inside = np.abs(z) < 1
    out[inside] = np.exp(1 - 1 / (1 - z[inside] ** 2))
    return out


def _check_t(t, n: int) -> np.ndarray:
    t = np.asarray(t, dtype=float).ravel()
    if t.size != n:
        raise PathError(f"Expected a point of [-1, 1]^{n}, got {t.size} coordinates")
    if not np.isclose(np.max(np.abs(t)), 1.0, rtol=0, atol=1e-12):
        raise PathError(f"Path points must satisfy max|t_i| = 1, got {tuple(t)}")
    return t


def simple_path(t, spec: PathSpec) -> Discretized:
    """sigma0 * sum_i t_i phi_i, with phi_i the bumps of `spec`."""
    t = _check_t(t, spec.n)
    bumps = spec.bump_list
    if spec.grid is not None:
        r = spec.grid.radius()
        values = spec.sigma0 * sum(ti * bump(r, c, w) for ti, (c, w) in zip(t, bumps))
        return Field(spec.grid, values)

    def values(r):
        return spec.sigma0 * sum(ti * bump(r, c, w) for ti, (c, w) in zip(t, bumps))

    return uniform_profile(spec.N, spec.radial_box, spec.radial_count, values)


def _annulus_nodes(radius: float, h: float, eps: float, collar: int, core: int) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = radius - h, radius + h
    ramp = np.linspace(0.0, 1.0, collar + 1)
    nodes = [lo - eps + eps * ramp]
    values = [ramp]
    if h > 0:
        nodes.append(np.linspace(lo, hi, core + 1)[1:-1])
        values.append(np.ones(core - 1))
        nodes.append(hi + eps * ramp)
        values.append(ramp[::-1])
    else:
        # A(R, 0) is the sphere, the regularization is a tent of half width eps
        nodes.append(hi + eps * ramp[1:])
        values.append(ramp[::-1][1:])
    return np.concatenate(nodes), np.concatenate(values)


def annuli_path(t, spec: PathSpec) -> RadialProfile:
    """sigma0 * sum_i sgn(t_i) chi_eps(R^i, |t_i| h_{R^i}) as a piecewise linear radial profile.

    chi_eps is 1 on the annulus, decays linearly to 0 across a collar of
    width eps, and vanishes beyond it.
    """
    t = _check_t(t, spec.n)
    if spec.variant != "annuli":
        raise PathError(f"annuli_path needs an annuli spec, got {spec.variant}")
    nodes, values = [], []
    for i, ti in enumerate(t, start=1):
        if ti == 0:
            continue
        radius = spec.R ** i
        h = abs(ti) * annuli_thickness(radius, spec.N, spec.alpha)
        r, v = _annulus_nodes(radius, h, spec.eps, spec.collar_nodes, spec.core_nodes)
        nodes.append(r)
        values.append(np.sign(ti) * spec.sigma0 * v)
    nodes, values = np.concatenate(nodes), np.concatenate(values)
    # thin annuli at large radii collapse onto the float grid
    keep = np.concatenate([[True], np.diff(nodes) > 0])
    return profile_from_nodes(spec.N, nodes[keep], values[keep], core=False)


def path_point(t, spec: PathSpec) -> Discretized:
    if spec.variant == "annuli":
        return annuli_path(t, spec)
    return simple_path(t, spec)


def collar_excess(t, spec: PathSpec) -> float:
    """int |gamma_eps(t)| - int |gamma(t)|, the measure the collars add to the annuli."""
    u = annuli_path(t, replace(spec, sigma0=1.0))
    exact = sum(
        (annulus.outer ** spec.N - annulus.inner ** spec.N) / spec.N
        for annulus in (
            Annulus(spec.R ** i, abs(ti) * annuli_thickness(spec.R ** i, spec.N, spec.alpha))
            for i, ti in enumerate(np.asarray(t, dtype=float), start=1) if ti != 0
        )
    )
    return u.inner(np.abs(u.values), np.ones_like(u.values)) - sphere_area(spec.N) * exact


# Sampled integrals

@dataclass
class PathTable:
    """[u]^2, |u|_2^2 and D(h u) for u = gamma(t) at every sample t.

    Args:
        spec: path geometry
        ctx: context the integrals were computed in (lambda unused)
        fiber: amplitudes h, increasing from 0 to 1
        samples: boundary points t, shape (S, n)
        dirichlet: [gamma(t)]^2, shape (S,)
        mass2: |gamma(t)|_2^2, shape (S,)
        D: D(h gamma(t)), shape (S, len(fiber))
    """

    spec: PathSpec
    ctx: FunctionalContext
    fiber: np.ndarray
    samples: np.ndarray
    dirichlet: np.ndarray
    mass2: np.ndarray
    D: np.ndarray

    @property
    def D_floor(self) -> float:
        """min over boundary samples of D(gamma(t))."""
        return float(np.min(self.D[:, -1]))

    @cached_property
    def A_estimate(self) -> float:
        if self.spec.variant != "annuli":
            return float("nan")
        return interaction_floor(self.spec.n, self.spec.R, self.spec.N, self.spec.alpha, self.spec.resolution)


def path_table(spec: PathSpec, ctx: FunctionalContext) -> PathTable:
    if spec.N != ctx.N or spec.alpha != ctx.alpha:
        raise PathError(f"Path built for N={spec.N}, alpha={spec.alpha}, context has N={ctx.N}, alpha={ctx.alpha}")
    samples = sample_polyhedron(spec.n, spec.resolution)
    fiber = fiber_grid(spec.fiber)
    a = np.empty(len(samples))
    b = np.empty(len(samples))
    d = np.zeros((len(samples), fiber.size))
    for k, t in enumerate(samples):
        u = path_point(t, spec)
        a[k], b[k] = u.dirichlet(ctx.s), u.mass2()
        for j, h in enumerate(fiber[1:], start=1):
            d[k, j] = D_value(u.replace(h * u.values), ctx)
    log.debug(f"Path table: {spec.variant}, n={spec.n}, {len(samples)} samples, {fiber.size} amplitudes")
    return PathTable(spec=spec, ctx=ctx, fiber=fiber, samples=samples, dirichlet=a, mass2=b, D=d)


def _boundary_J(table: PathTable, theta: float, ctx: FunctionalContext) -> np.ndarray:
    return fiber_J(table.dirichlet, table.mass2, table.D[:, -1], theta, ctx)


def _check_floor(table: PathTable) -> float:
    floor = table.D_floor
    if not floor > 0:
        raise HypothesisError(f"D vanishes or is negative on the path boundary (min {floor:.4g})")
    return floor


@dataclass
class ThetaStar:
    """Dilation making the whole path boundary negative.

    Args:
        theta: smallest power of two with J(lambda, gamma(t)(./theta)) < 0 for all samples
        max_boundary_J: max over samples of that J
        D_floor: min over samples of D(gamma(t))
        root_bound: positive root of (M/2) x^(N-2s) + (M mu/2) x^N - (C/2) x^(N+alpha)
    """

    theta: float
    max_boundary_J: float
    D_floor: float
    root_bound: float

    dict = asdict


def theta_root_bound(M: float, C: float, ctx: FunctionalContext) -> float:
    """Positive root of M + M mu x^(2s) - C x^(2s+alpha), above which every boundary J is negative."""
    if not (M > 0 and C > 0):
        raise DomainError(f"Need M > 0 and C > 0, got {M}, {C}")
    s, alpha, mu = ctx.s, ctx.alpha, ctx.mu

    def g(x):
        return M + M * mu * x ** (2 * s) - C * x ** (2 * s + alpha)

    hi = 1.0
    while g(hi) > 0:
        hi *= 2
    return float(brentq(g, 0.0, hi, xtol=ROOT_XTOL * hi))


def theta_star(lam: float, spec: PathSpec, ctx: FunctionalContext, table: Optional[PathTable] = None) -> ThetaStar:
    """Smallest sampled theta = 2^k with every boundary sample at negative energy.

    Raises:
        HypothesisError: D(gamma(t)) <= 0 at some sample, or no theta within the doubling budget
    """
    ctx = ctx.with_lambda(lam)
    table = table if table is not None else path_table(spec, ctx)
    floor = _check_floor(table)

    def worst(theta):
        return float(np.max(_boundary_J(table, theta, ctx)))

    k = 0
    if worst(1.0) < 0:
        while k > -THETA_DOUBLINGS and worst(2.0 ** (k - 1)) < 0:
            k -= 1
    else:
        while worst(2.0 ** k) >= 0:
            k += 1
            if k > THETA_DOUBLINGS:
                raise HypothesisError(f"No admissible dilation up to 2^{THETA_DOUBLINGS} at lambda = {lam}")
    M = float(max(np.max(table.dirichlet), np.max(table.mass2)))
    theta = 2.0 ** k
    return ThetaStar(theta=theta, max_boundary_J=worst(theta), D_floor=floor,
                     root_bound=theta_root_bound(M, floor, ctx))


# Minimax estimates

@dataclass
class MinimaxEstimate:
    """Sampled upper bounds at one lambda.

    Args:
        n: path dimension
        lam: lambda
        a_n_upper: min over sampled theta of the max of J along the extended path
        b_n_m_upper: a_n_upper - e^lambda m / 2, NaN without a mass
        m_k_estimate: 2 a_n_upper / e^lambda
        B_m: b_1_m_upper when n = 1, NaN otherwise
        E_m_upper: I^m at the Pohozaev projection of the path maximizer, NaN without a mass
        theta_star: coarse admissible dilation
        theta_best: dilation attaining a_n_upper
        D_floor: min of D on the path boundary
        A_estimate: interaction floor of the annuli, NaN for bumps
        maximizer: (t, h) of the sampled maximum at theta_best
    """

    n: int
    lam: float
    a_n_upper: float
    b_n_m_upper: float
    m_k_estimate: float
    B_m: float
    E_m_upper: float
    theta_star: float
    theta_best: float
    D_floor: float
    A_estimate: float
    maximizer: Tuple[Tuple[float, ...], float] = field(default=((), 0.0))

    dict = asdict


def _projected_energy(a: float, b: float, d: float, ctx: FunctionalContext) -> float:
    """J at the Pohozaev dilation of (a, b, d)."""
    return float(fiber_J(a, b, d, dilation_root(a, b, d, ctx), ctx))


def estimate_a_n(lam: float, spec: PathSpec, ctx: FunctionalContext,
                 table: Optional[PathTable] = None, octaves: int = THETA_OCTAVES) -> MinimaxEstimate:
    """Upper bound for a_n(lambda) from the sampled path.

    theta runs over the quarter-octave grid 2^(k/4) from the first admissible
    value over `octaves` octaves. A theta whose fiber maximum sits at the
    smallest positive amplitude is not resolved by the fiber grid and is
    skipped.

    Raises:
        HypothesisError: the path is inadmissible or no sampled theta is resolved
    """
    ctx = ctx.with_lambda(lam)
    table = table if table is not None else path_table(spec, ctx)
    coarse = theta_star(lam, spec, ctx, table)
    N, s, alpha, mu = ctx.N, ctx.s, ctx.alpha, ctx.mu

    k = 4 * int(round(np.log2(coarse.theta)))
    while np.max(_boundary_J(table, 2.0 ** ((k - 1) / 4), ctx)) < 0:
        k -= 1
    h2 = table.fiber ** 2
    best = (np.inf, None, None, None)
    for j in range(k, k + 4 * octaves + 1):
        theta = 2.0 ** (j / 4)
        quad = theta ** (N - 2 * s) * table.dirichlet + theta ** N * mu * table.mass2
        values = np.outer(quad, h2) / 2 - theta ** (N + alpha) * table.D / 2
        idx = np.argmax(values, axis=1)
        if np.any(idx <= 1):
            continue
        maxima = values[np.arange(len(idx)), idx]
        worst = int(np.argmax(maxima))
        if maxima[worst] < best[0]:
            best = (float(maxima[worst]), theta, worst, int(idx[worst]))
    value, theta_best, sample, h_idx = best
    if theta_best is None:
        raise HypothesisError(f"Fiber maxima not resolved at lambda = {lam}, refine the fiber grid")

    h = float(table.fiber[h_idx])
    a = h ** 2 * theta_best ** (N - 2 * s) * table.dirichlet[sample]
    b = h ** 2 * theta_best ** N * table.mass2[sample]
    d = theta_best ** (N + alpha) * table.D[sample, h_idx]
    if ctx.m is not None:
        b_upper = value - mu * ctx.m / 2
        E_upper = _projected_energy(a, b, d, ctx) - mu * ctx.m / 2
    else:
        b_upper = E_upper = float("nan")
    log.debug(f"a_{spec.n}({lam}) <= {value:.6g} at theta = {theta_best:.6g}")
    return MinimaxEstimate(
        n=spec.n,
        lam=lam,
        a_n_upper=value,
        b_n_m_upper=b_upper,
        m_k_estimate=2 * value / mu,
        B_m=b_upper if spec.n == 1 else float("nan"),
        E_m_upper=E_upper,
        theta_star=coarse.theta,
        theta_best=theta_best,
        D_floor=coarse.D_floor,
        A_estimate=table.A_estimate if spec.variant == "annuli" else float("nan"),
        maximizer=(tuple(float(x) for x in table.samples[sample]), h),
    )


# Annuli interaction floor

@lru_cache(maxsize=16)
def interaction_floor(n: int, R: float, N: int, alpha: float, resolution: int = FACE_RESOLUTION) -> float:
    """A = min over samples t of sum_i a_ii - sum_{i != j} a_ij for the annuli A(R^i, |t_i| h_{R^i}).

    Pair interactions only depend on |t_i|, so they are tabulated once per
    magnitude on the face grid.
    """
    samples = sample_polyhedron(n, resolution)
    cache: Dict[Tuple[int, float, int, float], float] = {}

    def annulus(i: int, v: float) -> Annulus:
        radius = R ** i
        return Annulus(radius, v * annuli_thickness(radius, N, alpha))

    def pair(i: int, v: float, j: int, w: float) -> float:
        key = (i, v, j, w) if (i, v) <= (j, w) else (j, w, i, v)
        if key not in cache:
            cache[key] = annulus_interaction(annulus(key[0], key[1]), annulus(key[2], key[3]), N, alpha)
        return cache[key]

    floor = np.inf
    for t in samples:
        v = np.abs(t)
        total = 0.0
        for i in range(n):
            for j in range(n):
                value = pair(i + 1, v[i], j + 1, v[j])
                total += value if i == j else -value
        floor = min(floor, total)
    log.debug(f"Interaction floor n={n}, R={R}: {floor:.6g} ({len(cache)} pairs)")
    return float(floor)


@dataclass
class AnnuliFloorReport:
    """Comparison of D(sigma gamma(t)) / F(sigma)^2 with half the interaction floor.

    Args:
        applicable: the quotient sup M of F is finite
        M: quotient sup of F on (0, delta0]
        A_estimate: interaction floor of the annuli
        half_A: A_estimate / 2
        min_ratio: min over sigma and t of D(sigma gamma(t)) / F(sigma)^2
        per_sigma: (sigma, min over t of the ratio)
    """

    applicable: bool
    M: float
    A_estimate: float
    half_A: float
    min_ratio: float
    per_sigma: List[Tuple[float, float]]

    dict = asdict

    @property
    def passed(self) -> bool:
        return self.applicable and self.min_ratio >= self.half_A


def annuli_floor_check(spec: PathSpec, ctx: FunctionalContext, sigmas: Sequence[float],
                       samples: Optional[np.ndarray] = None) -> AnnuliFloorReport:
    """Lower bound of the Riesz energy along the annuli path at small amplitudes.

    Raises:
        HypothesisError: F changes sign on (0, delta0]
    """
    if spec.variant != "annuli":
        raise PathError("The interaction floor check needs the annuli variant")
    F = ctx.nonlinearity
    M = quotient_sup(F)
    A = interaction_floor(spec.n, spec.R, spec.N, spec.alpha, spec.resolution)
    if not np.isfinite(M):
        log.info(f"{F.name}: quotient sup is unbounded, the interaction floor does not apply")
        return AnnuliFloorReport(False, M, A, A / 2, float("nan"), [])
    samples = samples if samples is not None else sample_polyhedron(spec.n, spec.resolution)
    per_sigma = []
    for sigma in sigmas:
        if not 0 < sigma <= F.delta0:
            raise DomainError(f"sigma must lie in (0, {F.delta0}], got {sigma}")
        F_sigma = float(F.F(np.array(sigma)))
        path = replace(spec, sigma0=sigma)
        ratios = [D_value(annuli_path(t, path), ctx) / F_sigma ** 2 for t in samples]
        per_sigma.append((float(sigma), float(min(ratios))))
    min_ratio = min(r for _, r in per_sigma)
    return AnnuliFloorReport(True, M, A, A / 2, min_ratio, per_sigma)


def c_sigma0(spec: PathSpec, ctx: FunctionalContext, sigma0: float) -> float:
    """sup over tau >= 0 and samples t of tau |gamma(t)|_{H^s}^2 / 2 - L A tau^p_m / 4,
    with L the lower bound of F(tau) / tau^p_m on (0, sigma0] and A the interaction floor.

    Raises:
        HypothesisError: L or A is not positive
    """
    if spec.variant != "annuli":
        raise PathError("C(sigma0) is defined on the annuli path")
    p = exponent_set(ctx.N, ctx.s, ctx.alpha).p_m
    L = lower_bound_constant(ctx.nonlinearity, sigma0, p)
    A = interaction_floor(spec.n, spec.R, spec.N, spec.alpha, spec.resolution)
    if not (L > 0 and A > 0):
        raise HypothesisError(f"Need positive L and A, got L = {L:.4g}, A = {A:.4g}")
    unit = replace(spec, sigma0=1.0)
    norm2 = max(
        u.dirichlet(ctx.s) + u.mass2()
        for u in (annuli_path(t, unit) for t in sample_polyhedron(spec.n, spec.resolution))
    )
    tau = (2 * norm2 / (p * L * A)) ** (1 / (p - 1))
    return float(tau * norm2 * (p - 1) / (2 * p))


# Scans

SCAN_COLUMNS = ("lambda", "n", "a_n_upper", "ratio", "theta_star", "D_floor", "A_estimate")


@dataclass
class AsymptoticRow:
    lam: float
    n: int
    a_n_upper: float
    ratio: float
    theta_star: float
    D_floor: float
    A_estimate: float

    dict = asdict

    def csv_row(self) -> str:
        values = (self.a_n_upper, self.ratio, self.theta_star, self.D_floor, self.A_estimate)
        return ",".join([FLOAT_FORMAT.format(self.lam), str(self.n)] + [FLOAT_FORMAT.format(v) for v in values])


@dataclass
class AsymptoticReport:
    n: int
    rows: List[AsymptoticRow]
    c_sigma0: Dict[float, float] = field(default_factory=dict)

    def dict(self):
        return {"n": self.n, "rows": [r.dict() for r in self.rows], "c_sigma0": dict(self.c_sigma0)}


def _check_lam_grid(lam_grid: Sequence[float]) -> None:
    if len(lam_grid) == 0:
        raise DomainError("The lambda grid is empty")


def asymptotic_row(lam: float, spec: PathSpec, ctx: FunctionalContext, table: PathTable) -> AsymptoticRow:
    est = estimate_a_n(lam, spec, ctx, table)
    row = AsymptoticRow(
        lam=float(lam), n=spec.n, a_n_upper=est.a_n_upper, ratio=est.a_n_upper / np.exp(lam),
        theta_star=est.theta_star, D_floor=est.D_floor, A_estimate=est.A_estimate,
    )
    log.info(f"lambda = {lam:.4g}: a_{spec.n} <= {est.a_n_upper:.6g}, ratio {row.ratio:.6g}")
    return row


def asymptotic_scan(n: int, lam_grid: Sequence[float], spec: PathSpec, ctx: FunctionalContext,
                    sigma0s: Sequence[float] = ()) -> AsymptoticReport:
    """(lambda, a_n_upper / e^lambda) on `lam_grid`, with C(sigma0) for each given amplitude."""
    _check_lam_grid(lam_grid)
    spec = replace(spec, n=n)
    table = path_table(spec, ctx)
    rows = [asymptotic_row(lam, spec, ctx, table) for lam in sorted(lam_grid)]
    constants = {float(s0): c_sigma0(spec, ctx, s0) for s0 in sigma0s}
    return AsymptoticReport(n=n, rows=rows, c_sigma0=constants)


def scan_csv(rows: Sequence[AsymptoticRow]) -> str:
    return "\n".join([",".join(SCAN_COLUMNS)] + [r.csv_row() for r in rows]) + "\n"


def estimate_m_k(k: int, lam_grid: Sequence[float], spec: PathSpec, ctx: FunctionalContext) -> float:
    """2 min over lambda of a_k_upper(lambda) / e^lambda."""
    _check_lam_grid(lam_grid)
    spec = replace(spec, n=k)
    table = path_table(spec, ctx)
    return float(min(2 * estimate_a_n(lam, spec, ctx, table).a_n_upper / np.exp(lam) for lam in lam_grid))


@dataclass
class MassLevels:
    """B^m and the upper bound of E^m, minimized over a lambda grid."""

    m: float
    B_m: float
    E_m_upper: float
    m_1: float

    dict = asdict


def mass_levels(lam_grid: Sequence[float], spec: PathSpec, ctx: FunctionalContext) -> MassLevels:
    if ctx.m is None:
        raise DomainError("Mass levels need a context with a prescribed mass")
    _check_lam_grid(lam_grid)
    spec = replace(spec, n=1)
    table = path_table(spec, ctx)
    estimates = [estimate_a_n(lam, spec, ctx, table) for lam in lam_grid]
    return MassLevels(
        m=ctx.m,
        B_m=min(e.B_m for e in estimates),
        E_m_upper=min(e.E_m_upper for e in estimates),
        m_1=min(e.m_k_estimate for e in estimates),
    )
