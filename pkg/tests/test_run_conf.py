from pathlib import Path

import numpy as np
import pytest

from choquard.radial_riesz import RadialProfile
from choquard.run_conf import (
    GridSection,
    PathsSection,
    ProblemSection,
    RunConfig,
    ScanSection,
    SolverSection,
    load_run_config,
)
from choquard.spectral_core import Field
from choquard.utils import ConfigError
from tests.conftest import resource


def problem_3d(**kwargs) -> ProblemSection:
    return ProblemSection(N=3, s=0.5, alpha=2.0, nonlinearity="power", params={"p": 1.8}, **kwargs)


def write_config(tmpdir, text: str) -> Path:
    test_file = Path(tmpdir / 'run.yml')
    with open(test_file, "w") as f:
        f.write(text)
    return test_file


def test_load_run_config():
    config = load_run_config(resource("check_growth.yml"))
    assert config.mode == "check-growth"
    assert config.problem.N == 3
    assert config.problem.params == {"p": 1.8}
    assert config.problem.backend == "spectral"
    assert config.audit.regime == "unconstrained"
    assert config.grid.L == 16.0 and config.grid.P == 64
    assert config.radial.count == 511
    assert config.paths is None and config.scan is None
    assert config.output_dir is None


def test_load_run_config_with_sections():
    config = load_run_config(resource("asymptotics_1d.yml"))
    assert config.paths.variant == "simple_bumps"
    assert list(config.scan.lam_grid()) == [-1.0, 0.0, 1.0]
    spec = config.path_spec()
    assert spec.grid is not None
    assert spec.N == 1 and spec.alpha == 0.5


def test_config_file_not_found(tmpdir):
    with pytest.raises(ConfigError):
        load_run_config(Path(tmpdir / 'missing.yml'))


def test_fail_loading_incomplete_config(tmpdir):
    test_file = write_config(tmpdir, """mode: check-growth
seed: 0""")
    with pytest.raises(ConfigError):
        load_run_config(test_file)


def test_fail_loading_unknown_field(tmpdir):
    test_file = write_config(tmpdir, """mode: check-growth
problem:
  N: 3
  s: 0.5
  alpha: 2.0
  nonlinearity: power
  exponent: 1.8""")
    with pytest.raises(ConfigError):
        load_run_config(test_file)


def test_normalized_needs_mass():
    with pytest.raises(ConfigError) as e:
        load_run_config(resource("normalized_without_mass.yml"))
    assert "solver.mass: required by mode solve-normalized" in str(e.value)


def test_validation_collects_every_error():
    config = RunConfig(mode="asymptotics", problem=problem_3d(), seed=-1)
    with pytest.raises(ConfigError) as e:
        config.validate()
    message = str(e.value)
    assert message.startswith("Invalid run configuration:")
    assert "paths: required by mode asymptotics" in message
    assert "scan: required by mode asymptotics" in message
    assert "seed:" in message


def test_validation_errors():
    with pytest.raises(ConfigError, match="unknown mode"):
        RunConfig(mode="solve", problem=problem_3d()).validate()
    with pytest.raises(ConfigError, match="radial backend needs N = 3"):
        RunConfig(mode="solve-fixed-mu", problem=ProblemSection(
            N=1, s=0.4, alpha=0.5, nonlinearity="power", params={"p": 2.0}, backend="radial")).validate()
    with pytest.raises(ConfigError, match="problem:"):
        RunConfig(mode="check-growth", problem=ProblemSection(
            N=3, s=1.5, alpha=2.0, nonlinearity="power", params={"p": 1.8})).validate()
    with pytest.raises(ConfigError, match="problem:"):
        RunConfig(mode="check-growth", problem=ProblemSection(
            N=3, s=0.5, alpha=2.0, nonlinearity="cubic")).validate()
    with pytest.raises(ConfigError, match="solver.mass: must be positive"):
        RunConfig(mode="solve-normalized", problem=problem_3d(), solver=SolverSection(mass=-1.0)).validate()
    with pytest.raises(ConfigError, match="paths.variant"):
        RunConfig(mode="path-audit", problem=problem_3d(), paths=PathsSection(variant="spiral")).validate()
    with pytest.raises(ConfigError, match="paths:"):
        RunConfig(mode="path-audit", problem=problem_3d(), paths=PathsSection(variant="annuli", R=1.0)).validate()
    with pytest.raises(ConfigError, match="scan:"):
        RunConfig(mode="riesz-kernel", problem=problem_3d(), scan=ScanSection(tau_count=1)).validate()
    with pytest.raises(ConfigError, match="audit.regime"):
        config = RunConfig(mode="check-growth", problem=problem_3d())
        config.audit.regime = "free"
        config.validate()


def test_validation_checks_variant_per_mode():
    with pytest.raises(ConfigError, match="mode excited starts from simple_bumps"):
        RunConfig(mode="excited", problem=problem_3d(), paths=PathsSection(n=2, variant="annuli")).validate()
    with pytest.raises(ConfigError, match="scan.sigma0s"):
        RunConfig(mode="asymptotics", problem=problem_3d(), paths=PathsSection(),
                  scan=ScanSection(sigma0s=[0.5, 1.0])).validate()
    annuli = RunConfig(mode="asymptotics", problem=problem_3d(), paths=PathsSection(variant="annuli"),
                       scan=ScanSection(sigma0s=[0.5, 1.0]))
    assert annuli.validate() is annuli


def test_valid_config_returns_itself():
    config = RunConfig(mode="solve-normalized", problem=problem_3d(backend="radial"), solver=SolverSection(mass=2.0))
    assert config.validate() is config


def test_template_follows_backend():
    spectral = RunConfig(mode="solve-fixed-mu", problem=problem_3d(), grid=GridSection(L=4.0, P=8))
    template = spectral.template()
    assert isinstance(template, Field)
    assert template.values.shape == (8, 8, 8)
    radial = RunConfig(mode="solve-fixed-mu", problem=problem_3d(backend="radial")).template()
    assert isinstance(radial, RadialProfile)
    assert radial.nodes.size == 511
    assert np.all(radial.values == 0)


def test_solver_options_carry_seed():
    opts = SolverSection(tol_grad=1e-7, max_iter=10).options(seed=3)
    assert opts.seed == 3
    assert opts.tol_grad == 1e-7
    assert opts.max_iter == 10


def test_context_of_problem_section():
    ctx = problem_3d(lam=1.0).context(mass=2.0)
    assert ctx.N == 3 and ctx.m == 2.0
    assert ctx.lam == 1.0
    assert ctx.nonlinearity.name == "power"
    assert problem_3d().context(lam=-1.0).lam == -1.0


def test_default_output_root():
    config = RunConfig(mode="check-growth", problem=problem_3d())
    assert config.output_root == Path("choquard-out")
    config.output_dir = "/tmp/elsewhere"
    assert config.output_root == Path("/tmp/elsewhere")
