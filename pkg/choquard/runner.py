"""
Dispatch of the run modes and the artifacts each one writes.
"""
import multiprocessing as mp
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from choquard.artifacts import (
    compare_files,
    load_manifest,
    run_directory,
    stamp,
    write_csv,
    write_json,
    write_manifest,
    write_solution,
)
from choquard.definitions import (
    AUDIT_FILE,
    ENERGIES_FILE,
    EXIT_HYPOTHESIS,
    EXIT_OK,
    FLOAT_FORMAT,
    INTERACTION_FILE,
    KERNEL_FILE,
    PSP_FILE,
    REPORT_FILE,
    SCAN_FILE,
    SOLUTION_FILE,
    WORKERS_ENV_VAR,
)
from choquard.functionals import EnergyBreakdown, FunctionalContext, classify_pohozaev
from choquard.identity_audit import pohozaev_full_audit
from choquard.minimax_paths import (
    annuli_floor_check,
    asymptotic_row,
    c_sigma0,
    estimate_a_n,
    mass_levels,
    path_table,
    scan_csv,
    theta_star,
)
from choquard.nonlinearity import check_growth, exponent_set
from choquard.radial_riesz import (
    interaction_matrix,
    interaction_rows_csv,
    kernel_limits,
    locate_threshold,
    singular_coefficient,
    thim_kernel_vec,
)
from choquard.run_conf import RunConfig, ScanSection
from choquard.solvers import (
    Solution,
    excited_search,
    initial_guess,
    psp_diagnostic,
    solve_fixed_mu,
    solve_normalized,
    symmetry_defect,
)
from choquard.utils import ConfigError, ConvergenceError, log, loglog_slope


@dataclass
class RunResult:
    """Where a run wrote its files and the exit status it asks for."""

    mode: str
    directory: Path
    files: List[Path] = field(default_factory=list)
    exit_code: int = EXIT_OK


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV_VAR, "1")
    try:
        count = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV_VAR} must be an integer, got {raw}")
    if count < 1:
        raise ConfigError(f"{WORKERS_ENV_VAR} must be at least 1, got {count}")
    return count


# State shared with forked workers, nonlinearities hold closures that do not pickle
_shared: Dict[str, Any] = {}


def _scan_point(lam: float):
    return asymptotic_row(lam, _shared["spec"], _shared["ctx"], _shared["table"])


def fan_out(func: Callable, points: Sequence, workers: int) -> List:
    """map func over points, in a forked process pool when more than one worker is requested."""
    if workers <= 1 or len(points) <= 1:
        return [func(p) for p in points]
    try:
        context = mp.get_context("fork")
    except ValueError:
        log.warning("Process fork is not available, running the sweep sequentially")
        return [func(p) for p in points]
    with context.Pool(min(workers, len(points))) as pool:
        return pool.map(func, points)


class _Writer:
    """Collects the files of one run in its directory."""

    def __init__(self, config: RunConfig, backend: str) -> None:
        self.config = config
        self.directory = run_directory(config)
        self.meta = stamp(config, backend)
        self.files: List[Path] = []

    def csv(self, name: str, body: str) -> None:
        self.files.append(write_csv(self.directory / name, body, self.meta))

    def json(self, content: Dict[str, Any], name: str = REPORT_FILE) -> None:
        self.files.append(write_json(self.directory / name, content, self.meta))

    def solution(self, u) -> None:
        self.files.append(write_solution(self.directory / SOLUTION_FILE, u, self.meta))

    def finish(self, exit_code: int = EXIT_OK) -> RunResult:
        self.files.append(write_manifest(self.directory, self.config, self.files))
        log.info(f"{self.config.mode}: {len(self.files)} files in {self.directory}")
        return RunResult(self.config.mode, self.directory, self.files, exit_code)


def _energies_csv(rows: Sequence[EnergyBreakdown], lams: Sequence[float]) -> str:
    lines = ["lambda," + EnergyBreakdown.csv_header()]
    lines += [f"{FLOAT_FORMAT.format(lam)},{e.csv_row()}" for lam, e in zip(lams, rows)]
    return "\n".join(lines) + "\n"


def _solution_report(solution: Solution, ctx: FunctionalContext) -> Dict[str, Any]:
    at = ctx.with_lambda(solution.lam)
    report = solution.summary()
    report["symmetry_defect"] = symmetry_defect(solution.u)
    report["pohozaev_position"] = classify_pohozaev(solution.u, at)
    report["sup_norm"] = solution.u.sup_norm()
    return report


def _write_solution(writer: _Writer, solution: Solution, ctx: FunctionalContext) -> None:
    writer.solution(solution.u)
    writer.csv(ENERGIES_FILE, _energies_csv([solution.energies], [solution.lam]))
    report = _solution_report(solution, ctx)
    if solution.history:
        psp = psp_diagnostic(solution.history)
        writer.csv(PSP_FILE, psp.csv())
        report["psp"] = {k: v for k, v in psp.dict().items() if not isinstance(v, list)}
    writer.json(report)


def _solve(config: RunConfig, ctx: FunctionalContext, solver: Callable) -> RunResult:
    opts = config.solver.options(config.seed)
    init = initial_guess(config.template(), config.solver.amplitude, config.solver.width, ctx.m)
    writer = _Writer(config, init.backend)
    try:
        solution = solver(ctx, init, opts)
    except ConvergenceError as e:
        if e.solution is not None:
            _write_solution(writer, e.solution, ctx)
            writer.finish()
        raise
    _write_solution(writer, solution, ctx)
    return writer.finish()


def _run_fixed_mu(config: RunConfig) -> RunResult:
    return _solve(config, config.problem.context(), solve_fixed_mu)


def _run_normalized(config: RunConfig) -> RunResult:
    return _solve(config, config.problem.context(mass=config.solver.mass), solve_normalized)


def _run_excited(config: RunConfig) -> RunResult:
    ctx = config.problem.context()
    spec = config.path_spec()
    writer = _Writer(config, config.template().backend)
    found = excited_search(spec.n, ctx, spec, config.solver.options(config.seed))
    if found:
        writer.solution(found[0].u)
    writer.csv(ENERGIES_FILE, _energies_csv([s.energies for s in found], [s.lam for s in found]))
    writer.json({"found": len(found), "candidates": [_solution_report(s, ctx) for s in found]})
    return writer.finish()


def _run_path_audit(config: RunConfig) -> RunResult:
    ctx = config.problem.context(mass=config.solver.mass)
    spec = config.path_spec()
    backend = "radial" if spec.variant == "annuli" or spec.grid is None else "spectral"
    writer = _Writer(config, backend)
    table = path_table(spec, ctx)
    threshold = theta_star(ctx.lam, spec, ctx, table)
    estimate = estimate_a_n(ctx.lam, spec, ctx, table)
    report: Dict[str, Any] = {
        "path": {"n": spec.n, "variant": spec.variant, "samples": int(len(table.samples))},
        "theta_star": threshold.dict(),
        "estimate": estimate.dict(),
    }
    if spec.variant == "annuli":
        t = tuple(1.0 for _ in range(spec.n))
        report["annuli_threshold"] = locate_threshold(t, spec.N, spec.alpha).dict()
        radii = [spec.R * 2.0 ** k for k in range(6)]
        writer.csv(INTERACTION_FILE, interaction_rows_csv([interaction_matrix(t, R, spec.N, spec.alpha)
                                                           for R in radii]))
        sigmas = (config.paths.sigmas if config.paths else None) or [1e-2, 1e-3, 1e-4]
        floor = annuli_floor_check(spec, ctx, sigmas)
        report["interaction_floor"] = dict(floor.dict(), passed=floor.passed)
        if not floor.applicable:
            log.warning(f"{ctx.nonlinearity.name}: the interaction floor check does not apply")
            writer.json(report)
            return writer.finish(EXIT_HYPOTHESIS)
    writer.json(report)
    return writer.finish()


def _run_riesz_kernel(config: RunConfig) -> RunResult:
    N, alpha = config.problem.N, config.problem.alpha
    writer = _Writer(config, "radial")
    scan = config.scan or ScanSection()
    tau = scan.tau_grid()
    values = thim_kernel_vec(tau, N, alpha)
    rows = ["tau,F_alpha"] + [f"{FLOAT_FORMAT.format(t)},{FLOAT_FORMAT.format(v)}" for t, v in zip(tau, values)]
    writer.csv(KERNEL_FILE, "\n".join(rows) + "\n")
    report: Dict[str, Any] = {"limits": kernel_limits(N, alpha).dict(),
                              "singular_coefficient": singular_coefficient(N, alpha)}
    delta = np.geomspace(1e-6, 1e-3, 16)
    near = thim_kernel_vec(1 + delta, N, alpha)
    if alpha < 1:
        report["singular_exponent"], report["singular_fit_residual"] = loglog_slope(delta, near)
    elif alpha == 1:
        slope, _ = np.polyfit(np.log(delta), near, 1)
        report["log_coefficient"] = float(-slope)
    writer.json(report)
    return writer.finish()


def _run_asymptotics(config: RunConfig) -> RunResult:
    ctx = config.problem.context(mass=config.solver.mass)
    spec = config.path_spec()
    backend = "radial" if spec.variant == "annuli" or spec.grid is None else "spectral"
    writer = _Writer(config, backend)
    table = path_table(spec, ctx)
    _shared.update(spec=spec, ctx=ctx, table=table)
    try:
        rows = fan_out(_scan_point, sorted(config.scan.lam_grid()), worker_count())
    finally:
        _shared.clear()
    writer.csv(SCAN_FILE, scan_csv(rows))
    report: Dict[str, Any] = {"n": spec.n, "rows": [r.dict() for r in rows]}
    if spec.variant == "annuli" and config.scan.sigma0s:
        report["c_sigma0"] = {str(s0): c_sigma0(spec, ctx, s0) for s0 in config.scan.sigma0s}
    if ctx.m is not None:
        report["mass_levels"] = mass_levels(config.scan.lam_grid(), replace(spec, n=1), ctx).dict()
    writer.json(report)
    return writer.finish()


def _run_pohozaev_audit(config: RunConfig) -> RunResult:
    ctx = config.problem.context()
    opts = config.solver.options(config.seed)
    init = initial_guess(config.template(), config.solver.amplitude, config.solver.width)
    writer = _Writer(config, init.backend)
    solution = solve_fixed_mu(ctx, init, opts)
    _write_solution(writer, solution, ctx)
    eps = config.audit.eps or None
    audit = pohozaev_full_audit(solution, ctx, eps)
    writer.json(audit.dict(), name=AUDIT_FILE)
    return writer.finish()


def _run_check_growth(config: RunConfig) -> RunResult:
    ctx = config.problem.context()
    writer = _Writer(config, "none")
    report = check_growth(ctx.nonlinearity, exponent_set(ctx.N, ctx.s, ctx.alpha), config.audit.regime)
    writer.json(report.dict())
    if not report.passed:
        failed = [k for k, c in report.conditions.items() if not c.passed]
        log.warning(f"{report.name}: conditions {', '.join(failed)} not supported by the samples")
    return writer.finish(EXIT_OK if report.passed else EXIT_HYPOTHESIS)


MODES: Dict[str, Callable[[RunConfig], RunResult]] = {
    "solve-fixed-mu": _run_fixed_mu,
    "solve-normalized": _run_normalized,
    "excited": _run_excited,
    "path-audit": _run_path_audit,
    "riesz-kernel": _run_riesz_kernel,
    "asymptotics": _run_asymptotics,
    "pohozaev-audit": _run_pohozaev_audit,
    "check-growth": _run_check_growth,
}


def run(config: RunConfig) -> RunResult:
    """Validate the configuration and run its mode.

    Nothing is written when validation fails.

    Raises:
        ConfigError: invalid configuration
        ConvergenceError: a solver did not converge, its partial result is written
        HypothesisError: a hypothesis of the mode does not hold
    """
    config.validate()
    log.info(f"Running {config.mode} (seed {config.seed})")
    return MODES[config.mode](config)


@dataclass
class Reproduction:
    result: RunResult
    identical: Dict[str, bool]

    @property
    def byte_identical(self) -> bool:
        return all(self.identical.values())


def reproduce(manifest_path: Union[str, Path], output_dir: Optional[Union[str, Path]] = None) -> Reproduction:
    """Re-run the configuration recorded in a manifest and compare the new files with the recorded digests.

    Raises:
        ConfigError: the manifest is missing, malformed or names an unknown mode
    """
    manifest = load_manifest(manifest_path)
    config = manifest.config
    if config.mode not in MODES:
        raise ConfigError(f"Manifest mode {config.mode} is not available")
    if output_dir is not None:
        config.output_dir = str(output_dir)
    result = run(config)
    identical = compare_files(manifest, result.directory)
    for name, same in identical.items():
        if not same:
            log.warning(f"{name} differs from the recorded run (platform {manifest.platform})")
    return Reproduction(result, identical)

