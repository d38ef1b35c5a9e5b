"""
Solvers for the Choquard equation.

Fixed frequency: J is minimized over the Pohozaev set by preconditioned
descent, each trial step dilated back onto P = 0, and the last iterates are
polished by Newton-Krylov on the preconditioned gradient.

Prescribed mass: L = [u]^2 / 2 - D(u) / 2 is minimized on the sphere
|u|_2^2 = m by tangent descent with renormalization, the multiplier being
recovered as mu = <(I * F(u)) f(u), u> - [u]^2, divided by m.

Every iterate is recorded, and `psp_diagnostic` turns the record into the
four Palais-Smale-Pohozaev traces.
"""
from dataclasses import asdict, dataclass, field, replace
from itertools import permutations, product
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import NoConvergence, newton_krylov

from choquard.definitions import (
    ARMIJO_C,
    DISTINCT_ENERGY,
    DISTINCT_L2,
    FLOAT_FORMAT,
    INITIAL_STEP,
    MAX_ITER,
    MIN_STEP,
    TOL_GRAD,
    TOL_POHOZAEV,
)
from choquard.functionals import (
    Discretized,
    EnergyBreakdown,
    FunctionalContext,
    base_integrals,
    breakdown_from_integrals,
    dilation_root,
    grad_J,
    grad_norm,
    nonlocal_source,
)
from choquard.minimax_paths import PathSpec, estimate_a_n, path_point
from choquard.radial_riesz import RadialProfile
from choquard.spectral_core import Field
from choquard.utils import BoxTooSmallError, ConvergenceError, DomainError, HypothesisError, PathError, log

VANISHING_DROP = 5.0


@dataclass
class SolverOptions:
    """Tolerances and step control shared by the solvers.

    Args:
        tol_grad: L2 norm of the residual of the equation
        tol_pohozaev: relative Pohozaev residual
        max_iter: descent iterations
        armijo: sufficient decrease constant
        initial_step: first trial step of every line search
        min_step: the line search gives up below this step
        polish: finish with Newton-Krylov
        polish_iter: Newton iterations per polish attempt
        switch_grad: descent hands over to Newton below this residual
        seed: recorded with the solution, the solvers themselves are deterministic
    """

    tol_grad: float = TOL_GRAD
    tol_pohozaev: float = TOL_POHOZAEV
    max_iter: int = MAX_ITER
    armijo: float = ARMIJO_C
    initial_step: float = INITIAL_STEP
    min_step: float = MIN_STEP
    polish: bool = True
    polish_iter: int = 60
    switch_grad: float = 1e-3
    seed: int = 0

    dict = asdict

    def __post_init__(self):
        if not (self.tol_grad > 0 and self.tol_pohozaev > 0):
            raise DomainError("Solver tolerances must be positive")
        if self.max_iter < 1:
            raise DomainError(f"max_iter must be positive, got {self.max_iter}")
        if not 0 < self.armijo < 1:
            raise DomainError(f"Armijo constant must lie in (0, 1), got {self.armijo}")


@dataclass
class Iterate:
    """One entry of a solver history."""

    iteration: int
    lam: float
    J: float
    I_m: float
    d_lambda: float
    dual_norm: float
    pohozaev_residual: float
    grad_norm: float
    sup_norm: float

    dict = asdict


@dataclass
class Solution:
    """Result of a solver run.

    `m` is the realized mass |u|_2^2 and `sign` one of "positive",
    "negative" or "sign-changing".
    """

    u: Discretized
    lam: float
    m: float
    energies: EnergyBreakdown
    grad_norm: float
    pohozaev_residual: float
    iterations: int
    converged: bool
    history: List[Iterate] = field(default_factory=list, repr=False)
    seed: int = 0

    @property
    def mu(self) -> float:
        return float(np.exp(self.lam))

    @property
    def sign(self) -> str:
        values = self.u.values
        top = np.max(np.abs(values))
        if np.all(values >= -1e-8 * top):
            return "positive"
        if np.all(values <= 1e-8 * top):
            return "negative"
        return "sign-changing"

    def summary(self):
        return {
            "lambda": self.lam,
            "mu": self.mu,
            "m": self.m,
            "grad_norm": self.grad_norm,
            "pohozaev_residual": self.pohozaev_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "sign": self.sign,
            "seed": self.seed,
            "energies": self.energies.dict(),
        }


# Helpers

def initial_guess(like: Discretized, amplitude: float = 1.0, width: float = 1.0,
                  mass: Optional[float] = None) -> Discretized:
    """Gaussian on the geometry of `like`; rescaled to `mass` when given."""
    r = like.grid.radius() if isinstance(like, Field) else like.nodes
    u = like.replace(amplitude * np.exp(-r ** 2 / (2 * width ** 2)))
    if mass is not None:
        u = u.replace(u.values * np.sqrt(mass / u.mass2()))
    return u


def pohozaev_project(u: Discretized, ctx: FunctionalContext) -> Tuple[float, Discretized]:
    """Dilate u onto the Pohozaev set: (theta_root, u(./theta_root)).

    Raises:
        HypothesisError: D(u) <= 0
        BoxTooSmallError: the dilated profile leaves the box
    """
    a, b, d = base_integrals(u, ctx)
    theta = dilation_root(a, b, d, ctx)
    if abs(theta - 1) < 1e-14:
        return 1.0, u
    return theta, u.dilate(theta)


def _dual_norm(u: Discretized, g: np.ndarray, s: float) -> float:
    """Norm of g in H^-s, through ((-Delta)^s + 1)^-1."""
    return float(np.sqrt(max(u.inner(g, u.precondition(g, s, 1.0)), 0.0)))


def _record(u: Discretized, ctx: FunctionalContext, energy: EnergyBreakdown, residual: np.ndarray,
            iteration: int, gn: float) -> Iterate:
    d_lambda = ctx.mu * (energy.mass2 - ctx.m) / 2 if ctx.m is not None else float("nan")
    return Iterate(
        iteration=iteration, lam=ctx.lam, J=energy.J, I_m=energy.I_m, d_lambda=d_lambda,
        dual_norm=_dual_norm(u, residual, ctx.s), pohozaev_residual=energy.r1, grad_norm=gn, sup_norm=u.sup_norm(),
    )


def _newton(residual, x0: np.ndarray, opts: SolverOptions) -> Optional[np.ndarray]:
    """Newton-Krylov on a flat residual map; None when it does not converge."""
    try:
        return newton_krylov(residual, x0, f_tol=opts.tol_grad * 1e-2, maxiter=opts.polish_iter,
                             method="lgmres")
    except (NoConvergence, ValueError, FloatingPointError) as e:
        log.debug(f"Newton-Krylov polish stopped: {e}")
        return None


def symmetry_defect(u: Discretized) -> float:
    """max over axis permutations and reflections g of |u - g u|_inf / |u|_inf; zero for radial profiles."""
    if isinstance(u, RadialProfile):
        return 0.0
    top = np.max(np.abs(u.values))
    if top == 0:
        return 0.0
    P, N = u.grid.P, u.grid.N
    # x_j = -L + h j is mirrored to index (P - j) mod P
    mirror = (P - np.arange(P)) % P
    worst = 0.0
    for perm in permutations(range(N)):
        moved = np.transpose(u.values, perm)
        for flips in product((False, True), repeat=N):
            image = moved
            for ax, flip in enumerate(flips):
                if flip:
                    image = np.take(image, mirror, axis=ax)
            worst = max(worst, float(np.max(np.abs(u.values - image))))
    return worst / top


# Fixed frequency

def _fixed_mu_state(u: Discretized, ctx: FunctionalContext):
    energy = breakdown_from_integrals(*base_integrals(u, ctx), ctx, backend=u.backend)
    g = grad_J(u, ctx)
    return energy, g, grad_norm(u, g)


def _solution(u: Discretized, ctx: FunctionalContext, energy: EnergyBreakdown, gn: float, iterations: int,
              converged: bool, history: List[Iterate], opts: SolverOptions) -> Solution:
    return Solution(u=u, lam=ctx.lam, m=energy.mass2, energies=energy, grad_norm=gn,
                    pohozaev_residual=energy.r1, iterations=iterations, converged=converged,
                    history=history, seed=opts.seed)


def _polish_fixed_mu(u: Discretized, ctx: FunctionalContext, opts: SolverOptions) -> Discretized:
    shape = u.values.shape

    def residual(x):
        v = u.replace(x.reshape(shape))
        return v.precondition(grad_J(v, ctx).values, ctx.s, ctx.mu).ravel()

    x = _newton(residual, u.values.ravel(), opts)
    return u if x is None else u.replace(x.reshape(shape))


def solve_fixed_mu(ctx: FunctionalContext, init: Discretized, opts: Optional[SolverOptions] = None) -> Solution:
    """Ground state at mu = e^lambda as a minimizer of J on the Pohozaev set.

    Raises:
        HypothesisError: D(init) <= 0
        ConvergenceError: iteration budget exhausted, stalled line search or D collapse;
            the partial solution is attached
    """
    opts = opts or SolverOptions()
    _, u = pohozaev_project(init, ctx)
    history: List[Iterate] = []
    energy, g, gn = _fixed_mu_state(u, ctx)
    polish_below = opts.switch_grad
    for it in range(opts.max_iter):
        history.append(_record(u, ctx, energy, g.values, it, gn))
        if gn <= opts.tol_grad and energy.r1 <= opts.tol_pohozaev:
            log.info(f"Fixed mu converged in {it} iterations, J = {energy.J:.10g}")
            return _solution(u, ctx, energy, gn, it, True, history, opts)
        if opts.polish and gn <= polish_below:
            polish_below = gn / 10
            polished = _polish_fixed_mu(u, ctx, opts)
            p_energy, p_g, p_gn = _fixed_mu_state(polished, ctx)
            if p_gn <= opts.tol_grad and p_energy.r1 <= opts.tol_pohozaev:
                history.append(_record(polished, ctx, p_energy, p_g.values, it + 1, p_gn))
                log.info(f"Fixed mu converged after Newton polish at iteration {it}, J = {p_energy.J:.10g}")
                return _solution(polished, ctx, p_energy, p_gn, it + 1, True, history, opts)
        direction = -u.precondition(g.values, ctx.s, ctx.mu)
        slope = u.inner(g.values, direction)
        step = opts.initial_step
        while True:
            try:
                _, trial = pohozaev_project(u.replace(u.values + step * direction), ctx)
                t_energy = breakdown_from_integrals(*base_integrals(trial, ctx), ctx, backend=u.backend)
                accepted = t_energy.J <= energy.J + opts.armijo * step * slope
            except (HypothesisError, BoxTooSmallError) as e:
                log.debug(f"Trial step {step:.3g} rejected: {e}")
                accepted = False
            if accepted:
                break
            step /= 2
            if step < opts.min_step:
                partial = _solution(u, ctx, energy, gn, it, False, history, opts)
                raise ConvergenceError(f"Line search stalled at iteration {it}, residual {gn:.3g}", partial)
        u = trial
        energy, g, gn = _fixed_mu_state(u, ctx)
        if not energy.D_value > 0:
            raise ConvergenceError("D collapsed to zero, the flow left the admissible set",
                                   _solution(u, ctx, energy, gn, it, False, history, opts))
        log.debug(f"iteration {it}: J = {energy.J:.12g}, |grad| = {gn:.3e}, step = {step:.3g}")
    partial = _solution(u, ctx, energy, gn, opts.max_iter, False, history, opts)
    log.warning(f"Fixed mu solver stopped after {opts.max_iter} iterations, residual {gn:.3g}")
    raise ConvergenceError(f"No convergence within {opts.max_iter} iterations", partial)


# Prescribed mass

def _normalize(u: Discretized, m: float) -> Discretized:
    mass = u.mass2()
    if not mass > 0:
        raise ConvergenceError("The iterate vanished")
    return u.replace(u.values * np.sqrt(m / mass))


def _normalized_state(u: Discretized, ctx: FunctionalContext):
    """(L, mu, residual of the equation at mu, gradient of L)."""
    a, _, d = base_integrals(u, ctx)
    source = nonlocal_source(u, ctx)
    grad_L = u.frac_laplacian_values(ctx.s) - source
    mu = (u.inner(source, u.values) - a) / ctx.m
    return a / 2 - d / 2, mu, grad_L + mu * u.values, grad_L


def _polish_normalized(u: Discretized, mu: float, ctx: FunctionalContext,
                       opts: SolverOptions) -> Tuple[Discretized, float]:
    shape, size = u.values.shape, u.values.size
    shift = max(mu, 1e-3)

    def residual(x):
        v = u.replace(x[:size].reshape(shape))
        res = v.frac_laplacian_values(ctx.s) + x[size] * v.values - nonlocal_source(v, ctx)
        return np.concatenate([v.precondition(res, ctx.s, shift).ravel(), [(v.mass2() - ctx.m) / ctx.m]])

    x = _newton(residual, np.concatenate([u.values.ravel(), [mu]]), opts)
    if x is None:
        return u, mu
    return u.replace(x[:size].reshape(shape)), float(x[size])


def _normalized_solution(u: Discretized, mu: float, ctx: FunctionalContext, residual: np.ndarray, it: int,
                         converged: bool, history: List[Iterate], opts: SolverOptions) -> Solution:
    lam = float(np.log(mu)) if mu > 0 else float("-inf")
    at = ctx.with_lambda(lam) if mu > 0 else ctx
    energy = breakdown_from_integrals(*base_integrals(u, at), at, backend=u.backend)
    gn = float(np.sqrt(u.inner(residual, residual)))
    return Solution(u=u, lam=lam, m=energy.mass2, energies=energy, grad_norm=gn, pohozaev_residual=energy.r1,
                    iterations=it, converged=converged, history=history, seed=opts.seed)


def _normalized_converged(u, mu, ctx, residual, opts) -> bool:
    if not mu > 0:
        return False
    gn = np.sqrt(u.inner(residual, residual))
    a, b, d = base_integrals(u, ctx)
    energy = breakdown_from_integrals(a, b, d, ctx.with_lambda(float(np.log(mu))))
    return gn <= opts.tol_grad and energy.r1 <= opts.tol_pohozaev


def solve_normalized(ctx: FunctionalContext, init: Discretized, opts: Optional[SolverOptions] = None) -> Solution:
    """Minimizer of L on |u|_2^2 = m, with the recovered frequency mu = e^lambda.

    Raises:
        DomainError: the context carries no mass
        ConvergenceError: iteration budget, vanishing iterates or a non-positive recovered mu
    """
    if ctx.m is None:
        raise DomainError("solve_normalized needs a context with a prescribed mass")
    opts = opts or SolverOptions()
    m = ctx.m
    u = _normalize(init, m)
    history: List[Iterate] = []
    L, mu, residual, grad_L = _normalized_state(u, ctx)
    polish_below = opts.switch_grad
    for it in range(opts.max_iter):
        at = ctx.with_lambda(float(np.log(mu))) if mu > 0 else ctx
        gn = float(np.sqrt(u.inner(residual, residual)))
        energy = breakdown_from_integrals(*base_integrals(u, at), at, backend=u.backend)
        history.append(_record(u, at, energy, residual, it, gn))
        if _normalized_converged(u, mu, ctx, residual, opts):
            log.info(f"Normalized solve converged in {it} iterations: mu = {mu:.10g}, L = {L:.10g}")
            return _normalized_solution(u, mu, ctx, residual, it, True, history, opts)
        if opts.polish and gn <= polish_below and mu > 0:
            polish_below = gn / 10
            v, nu = _polish_normalized(u, mu, ctx, opts)
            v = _normalize(v, m)
            _, nu_v, res_v, _ = _normalized_state(v, ctx)
            if _normalized_converged(v, nu_v, ctx, res_v, opts):
                log.info(f"Normalized solve converged after Newton polish: mu = {nu_v:.10g}")
                return _normalized_solution(v, nu_v, ctx, res_v, it + 1, True, history, opts)
        if u.sup_norm() < 1e-8:
            raise ConvergenceError("Vanishing: the iterates spread out with L -> 0",
                                   _normalized_solution(u, mu, ctx, residual, it, False, history, opts))
        direction = -u.precondition(residual, ctx.s, max(mu, 1e-3))
        direction -= u.inner(direction, u.values) / m * u.values
        slope = u.inner(grad_L, direction)
        step = opts.initial_step
        while True:
            trial = _normalize(u.replace(u.values + step * direction), m)
            t_L, t_mu, t_res, t_grad = _normalized_state(trial, ctx)
            if t_L <= L + opts.armijo * step * slope:
                break
            step /= 2
            if step < opts.min_step:
                raise ConvergenceError(f"Line search stalled at iteration {it}, residual {gn:.3g}",
                                       _normalized_solution(u, mu, ctx, residual, it, False, history, opts))
        u, L, mu, residual, grad_L = trial, t_L, t_mu, t_res, t_grad
        log.debug(f"iteration {it}: L = {L:.12g}, mu = {mu:.6g}, |res| = {gn:.3e}")
    solution = _normalized_solution(u, mu, ctx, residual, opts.max_iter, False, history, opts)
    if not mu > 0:
        raise ConvergenceError(f"Recovered mu = {mu:.4g} is not positive, run rejected", solution)
    log.warning(f"Normalized solver stopped after {opts.max_iter} iterations")
    raise ConvergenceError(f"No convergence within {opts.max_iter} iterations", solution)


# Excited states

def _relative_distance(u: Discretized, v: Discretized) -> float:
    diff = u.values - v.values
    return float(np.sqrt(u.inner(diff, diff) / max(u.mass2(), v.mass2())))


def _distinct(candidate: Solution, others: Sequence[Solution]) -> bool:
    for other in others:
        close = min(_relative_distance(candidate.u, other.u),
                    _relative_distance(candidate.u, other.u.replace(-other.u.values)))
        if close < DISTINCT_L2 or abs(candidate.energies.J - other.energies.J) < DISTINCT_ENERGY:
            return False
    return True


def excited_search(n: int, ctx: FunctionalContext, spec: PathSpec,
                   opts: Optional[SolverOptions] = None) -> List[Solution]:
    """Heuristic critical points started from the maxima of J along the paths of dimension 1..n.

    The 1-dimensional start is relaxed by `solve_fixed_mu`; higher starts are
    polished by Newton-Krylov and projected onto the Pohozaev set. Candidates
    that collapse onto an earlier one are discarded.
    """
    if spec.variant != "simple_bumps":
        raise PathError("Excited states are started from the simple bump path")
    opts = opts or SolverOptions()
    found: List[Solution] = []
    for k in range(1, n + 1):
        path = replace(spec, n=k)
        est = estimate_a_n(ctx.lam, path, ctx)
        t, h = est.maximizer
        start = path_point(t, path)
        try:
            start = start.replace(h * start.values).dilate(est.theta_best)
        except BoxTooSmallError as e:
            log.warning(f"Path maximizer for n={k} does not fit the box: {e}")
            continue
        try:
            if k == 1:
                candidate = solve_fixed_mu(ctx, start, opts)
            else:
                polished = _polish_fixed_mu(start, ctx, opts)
                _, polished = pohozaev_project(polished, ctx)
                energy, g, gn = _fixed_mu_state(polished, ctx)
                converged = gn <= opts.tol_grad and energy.r1 <= opts.tol_pohozaev
                candidate = _solution(polished, ctx, energy, gn, opts.polish_iter, converged, [], opts)
        except (ConvergenceError, HypothesisError, BoxTooSmallError) as e:
            log.warning(f"Excited search n={k}: start did not converge ({e})")
            continue
        if not candidate.converged:
            log.warning(f"Excited search n={k}: residual {candidate.grad_norm:.3g} above tolerance, discarded")
            continue
        if not _distinct(candidate, found):
            log.warning(f"Excited search n={k}: candidate collapsed onto a lower state, discarded")
            continue
        if found and candidate.energies.J < found[-1].energies.J:
            log.warning(f"Excited search n={k}: energy {candidate.energies.J:.6g} below the previous candidate")
        found.append(candidate)
    return found


# Palais-Smale-Pohozaev diagnostics

@dataclass
class PSPReport:
    """The traces I^m, d_lambda I^m, |d_u I^m|_{H^-s} and the relative Pohozaev residual along a run.

    Args:
        level: last value of I^m, the level b of the sequence
        negative_level: b < 0, the regime where such sequences are precompact
        vanishing: lambda drifts towards -infinity
        below_tolerance: final increments and residuals below the tolerances
    """

    I_m: List[float] = field(default_factory=list)
    d_lambda: List[float] = field(default_factory=list)
    dual_norm: List[float] = field(default_factory=list)
    pohozaev_residual: List[float] = field(default_factory=list)
    lam: List[float] = field(default_factory=list)
    level: float = float("nan")
    negative_level: bool = False
    vanishing: bool = False
    below_tolerance: bool = False

    dict = asdict

    def csv(self) -> str:
        rows = ["iteration,lambda,I_m,d_lambda,dual_norm,pohozaev_residual"]
        for k, values in enumerate(zip(self.lam, self.I_m, self.d_lambda, self.dual_norm, self.pohozaev_residual)):
            rows.append(",".join([str(k)] + [FLOAT_FORMAT.format(v) for v in values]))
        return "\n".join(rows) + "\n"


def psp_diagnostic(history: Sequence[Iterate], tol_grad: float = TOL_GRAD,
                   tol_pohozaev: float = TOL_POHOZAEV) -> PSPReport:
    if not history:
        return PSPReport()
    report = PSPReport(
        I_m=[it.I_m for it in history],
        d_lambda=[it.d_lambda for it in history],
        dual_norm=[it.dual_norm for it in history],
        pohozaev_residual=[it.pohozaev_residual for it in history],
        lam=[it.lam for it in history],
    )
    report.level = report.I_m[-1]
    report.negative_level = bool(report.level < 0)
    lam = np.asarray(report.lam)
    tail = lam[len(lam) * 2 // 3:]
    report.vanishing = bool(
        len(lam) >= 3 and lam[-1] < lam[0] - VANISHING_DROP and np.all(np.diff(tail) <= 0)
    )
    increment = abs(report.I_m[-1] - report.I_m[-2]) if len(history) > 1 else 0.0
    d_lambda = abs(report.d_lambda[-1]) if np.isfinite(report.d_lambda[-1]) else 0.0
    report.below_tolerance = bool(
        increment <= tol_grad and d_lambda <= tol_grad
        and report.dual_norm[-1] <= tol_grad and report.pohozaev_residual[-1] <= tol_pohozaev
    )
    return report
