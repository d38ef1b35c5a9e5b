"""
This module holds the run configuration and the function that loads it from YAML.
"""
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import yatiml

from choquard.definitions import (
    ARMIJO_C,
    DEFAULT_OUTPUT_DIR,
    FACE_RESOLUTION,
    FIBER_POINTS,
    INITIAL_STEP,
    MAX_ITER,
    MIN_STEP,
    RUN_MODES,
    TOL_GRAD,
    TOL_POHOZAEV,
)
from choquard.functionals import FunctionalContext
from choquard.minimax_paths import VARIANTS, PathSpec
from choquard.nonlinearity import make_nonlinearity
from choquard.radial_riesz import uniform_profile
from choquard.solvers import SolverOptions
from choquard.spectral_core import Field, Grid, make_grid
from choquard.utils import ConfigError, DomainError, NonlinearityError, PathError

BACKENDS = ("spectral", "radial")
REGIMES = ("unconstrained", "constrained")


class ProblemSection:
    """The equation: dimension, orders, nonlinearity and frequency.

    Attributes:
        N: space dimension
        s: fractional order
        alpha: Riesz order
        nonlinearity: catalog name of F
        params: parameters of the catalog entry
        lam: frequency exponent, mu = e^lam
        backend: "spectral" (periodic grid) or "radial" (N = 3 radial profiles)
    """

    def __init__(
            self,
            N: int,
            s: float,
            alpha: float,
            nonlinearity: str,
            params: Optional[Dict[str, float]] = None,
            lam: float = 0.0,
            backend: str = "spectral",
    ) -> None:
        self.N = N
        self.s = float(s)
        self.alpha = float(alpha)
        self.nonlinearity = nonlinearity
        self.params = dict(params or {})
        self.lam = float(lam)
        self.backend = backend

    def context(self, lam: Optional[float] = None, mass: Optional[float] = None) -> FunctionalContext:
        F = make_nonlinearity(self.nonlinearity, self.params)
        return FunctionalContext(self.N, self.s, self.alpha, self.lam if lam is None else lam, F, mass)

    def dict(self):
        return dict(vars(self))


class SolverSection:
    """Tolerances of the solvers and the Gaussian start."""

    def __init__(
            self,
            mass: Optional[float] = None,
            tol_grad: float = TOL_GRAD,
            tol_pohozaev: float = TOL_POHOZAEV,
            max_iter: int = MAX_ITER,
            armijo: float = ARMIJO_C,
            initial_step: float = INITIAL_STEP,
            min_step: float = MIN_STEP,
            polish: bool = True,
            amplitude: float = 1.0,
            width: float = 1.0,
    ) -> None:
        self.mass = None if mass is None else float(mass)
        self.tol_grad = float(tol_grad)
        self.tol_pohozaev = float(tol_pohozaev)
        self.max_iter = max_iter
        self.armijo = float(armijo)
        self.initial_step = float(initial_step)
        self.min_step = float(min_step)
        self.polish = polish
        self.amplitude = float(amplitude)
        self.width = float(width)

    def options(self, seed: int) -> SolverOptions:
        return SolverOptions(
            tol_grad=self.tol_grad, tol_pohozaev=self.tol_pohozaev, max_iter=self.max_iter,
            armijo=self.armijo, initial_step=self.initial_step, min_step=self.min_step,
            polish=self.polish, seed=seed,
        )

    def dict(self):
        return dict(vars(self))


class GridSection:
    """Periodic box [-L, L)^N with P points per axis."""

    def __init__(self, L: float = 16.0, P: int = 64) -> None:
        self.L = float(L)
        self.P = P

    def dict(self):
        return dict(vars(self))


class RadialSection:
    """Uniform radial grid: `count` nodes up to the box radius."""

    def __init__(self, box: float = 24.0, count: int = 511) -> None:
        self.box = float(box)
        self.count = count

    def dict(self):
        return dict(vars(self))


class PathsSection:
    """Minimax path geometry and the amplitudes of the interaction floor check."""

    def __init__(
            self,
            n: int = 1,
            variant: str = "simple_bumps",
            sigma0: float = 1.0,
            R: float = 4.0,
            eps: float = 1e-2,
            resolution: int = FACE_RESOLUTION,
            fiber: int = FIBER_POINTS,
            sigmas: Optional[List[float]] = None,
    ) -> None:
        self.n = n
        self.variant = variant
        self.sigma0 = float(sigma0)
        self.R = float(R)
        self.eps = float(eps)
        self.resolution = resolution
        self.fiber = fiber
        self.sigmas = [float(x) for x in (sigmas or [])]

    def dict(self):
        return dict(vars(self))


class ScanSection:
    """Lambda grid of the asymptotic scans and tau grid of the kernel tables."""

    def __init__(
            self,
            lam_min: float = -6.0,
            lam_max: float = 6.0,
            lam_count: int = 13,
            sigma0s: Optional[List[float]] = None,
            tau_min: float = 1e-3,
            tau_max: float = 1e3,
            tau_count: int = 601,
    ) -> None:
        self.lam_min = float(lam_min)
        self.lam_max = float(lam_max)
        self.lam_count = lam_count
        self.sigma0s = [float(x) for x in (sigma0s or [])]
        self.tau_min = float(tau_min)
        self.tau_max = float(tau_max)
        self.tau_count = tau_count

    def lam_grid(self) -> np.ndarray:
        return np.linspace(self.lam_min, self.lam_max, self.lam_count)

    def tau_grid(self) -> np.ndarray:
        return np.geomspace(self.tau_min, self.tau_max, self.tau_count)

    def dict(self):
        return dict(vars(self))


class AuditSection:
    """Exclusion radii of the eps sweep and the regime of the growth check."""

    def __init__(self, eps: Optional[List[float]] = None, regime: str = "unconstrained") -> None:
        self.eps = [float(x) for x in (eps or [])]
        self.regime = regime

    def dict(self):
        return dict(vars(self))


class RunConfig:
    """A complete run: the mode, the problem and the sections the mode reads.

    Sections left out of the file take their defaults, except the ones a
    mode requires (see `validate`).
    """

    def __init__(
            self,
            mode: str,
            problem: ProblemSection,
            solver: Optional[SolverSection] = None,
            grid: Optional[GridSection] = None,
            radial: Optional[RadialSection] = None,
            paths: Optional[PathsSection] = None,
            scan: Optional[ScanSection] = None,
            audit: Optional[AuditSection] = None,
            seed: int = 0,
            output_dir: Optional[str] = None,
    ) -> None:
        self.mode = mode
        self.problem = problem
        self.solver = solver or SolverSection()
        self.grid = grid or GridSection()
        self.radial = radial or RadialSection()
        self.paths = paths
        self.scan = scan
        self.audit = audit or AuditSection()
        self.seed = seed
        self.output_dir = output_dir

    @property
    def output_root(self) -> Path:
        return Path(self.output_dir) if self.output_dir else DEFAULT_OUTPUT_DIR

    def dict(self):
        return {
            "mode": self.mode,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "problem": self.problem.dict(),
            "solver": self.solver.dict(),
            "grid": self.grid.dict(),
            "radial": self.radial.dict(),
            "paths": self.paths.dict() if self.paths else None,
            "scan": self.scan.dict() if self.scan else None,
            "audit": self.audit.dict(),
        }

    def make_grid(self) -> Grid:
        return make_grid(self.problem.N, self.grid.L, self.grid.P)

    def template(self):
        """A zero field on the configured backend, the geometry every solver start is built on."""
        if self.problem.backend == "radial":
            return uniform_profile(self.problem.N, self.radial.box, self.radial.count)
        return Field(self.make_grid(), np.zeros((self.grid.P,) * self.problem.N))

    def path_spec(self) -> PathSpec:
        p = self.paths or PathsSection()
        grid = self.make_grid() if self.problem.backend == "spectral" and p.variant == "simple_bumps" else None
        return PathSpec(
            n=p.n, variant=p.variant, sigma0=p.sigma0, N=self.problem.N, alpha=self.problem.alpha,
            R=p.R, eps=p.eps, grid=grid, radial_box=self.radial.box, radial_count=self.radial.count,
            resolution=p.resolution, fiber=p.fiber,
        )

    def validate(self) -> "RunConfig":
        """Check mode-required fields and parameter domains.

        Raises:
            ConfigError: listing every invalid field
        """
        errors = []
        if self.mode not in RUN_MODES:
            errors.append(f"mode: unknown mode {self.mode}, choose one of {', '.join(RUN_MODES)}")
        if self.problem.backend not in BACKENDS:
            errors.append(f"problem.backend: must be one of {BACKENDS}, got {self.problem.backend}")
        elif self.problem.backend == "radial" and self.problem.N != 3:
            errors.append("problem.backend: the radial backend needs N = 3")
        if self.seed < 0:
            errors.append(f"seed: must be nonnegative, got {self.seed}")
        try:
            self.problem.context()
        except (DomainError, NonlinearityError) as e:
            errors.append(f"problem: {e}")
        if self.problem.backend == "spectral":
            try:
                self.make_grid()
            except DomainError as e:
                errors.append(f"grid: {e}")
        if self.mode == "solve-normalized":
            if self.solver.mass is None:
                errors.append("solver.mass: required by mode solve-normalized")
            elif not self.solver.mass > 0:
                errors.append(f"solver.mass: must be positive, got {self.solver.mass}")
        if self.mode in ("path-audit", "asymptotics", "excited") and self.paths is None:
            errors.append(f"paths: required by mode {self.mode}")
        if self.mode == "asymptotics" and self.scan is None:
            errors.append("scan: required by mode asymptotics")
        if self.scan is not None and not (self.scan.lam_count >= 1 and self.scan.tau_count >= 2):
            errors.append("scan: lam_count must be positive and tau_count at least 2")
        if self.paths is not None:
            if self.paths.variant not in VARIANTS:
                errors.append(f"paths.variant: must be one of {VARIANTS}, got {self.paths.variant}")
            elif self.mode == "excited" and self.paths.variant != "simple_bumps":
                errors.append(f"paths.variant: mode excited starts from simple_bumps, got {self.paths.variant}")
            elif self.paths.variant != "annuli" and self.scan is not None and self.scan.sigma0s:
                errors.append(f"scan.sigma0s: C(sigma0) needs the annuli variant, got {self.paths.variant}")
            elif not errors:
                try:
                    self.path_spec()
                except (PathError, DomainError) as e:
                    errors.append(f"paths: {e}")
        if self.audit.regime not in REGIMES:
            errors.append(f"audit.regime: must be one of {REGIMES}, got {self.audit.regime}")
        if errors:
            raise ConfigError("Invalid run configuration:\n  " + "\n  ".join(errors))
        return self


_load_run_config = yatiml.load_function(
    RunConfig, ProblemSection, SolverSection, GridSection, RadialSection, PathsSection, ScanSection, AuditSection)


def load_run_config(path: Union[Path, str]) -> RunConfig:
    """Load and validate a run configuration.

    Raises:
        ConfigError: the file is missing, does not match the schema or fails validation
    """
    try:
        config = _load_run_config(Path(path))
    except (yatiml.RecognitionError, FileNotFoundError) as e:
        raise ConfigError(f"{path}: {e}")
    try:
        return config.validate()
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}")
