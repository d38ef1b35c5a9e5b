from pathlib import Path

import pytest
from typer.testing import CliRunner

import choquard.__main__
from choquard.__main__ import cli
from choquard._version import __version__
from choquard.definitions import RUN_MODES
from choquard.utils import BoxTooSmallError, HypothesisError, NonlinearityError, PathError, QuadratureError
from tests.conftest import resource

runner = CliRunner()


def test_version():
    result = runner.invoke(cli, ["version"])
    assert result.exit_code == 0
    assert __version__ == result.stdout.strip()


def test_modes():
    result = runner.invoke(cli, ["modes"])
    assert result.exit_code == 0
    for mode in RUN_MODES:
        assert mode in result.stdout


def test_run_check_growth(tmpdir):
    result = runner.invoke(cli, ["run", str(resource("check_growth.yml")), "-o", str(tmpdir)])
    assert result.exit_code == 0
    assert "✅ check-growth written to" in result.stdout
    assert len(list(Path(tmpdir).glob("check-growth/*/report.json"))) == 1


def test_run_failing_hypothesis(tmpdir):
    result = runner.invoke(cli, ["run", str(resource("check_growth_supercritical.yml")), "-o", str(tmpdir)])
    assert result.exit_code == 4


def test_run_invalid_config(tmpdir):
    out = Path(tmpdir / "out")
    result = runner.invoke(cli, ["run", str(resource("normalized_without_mass.yml")), "-o", str(out)])
    assert result.exit_code == 3
    assert "❌ ConfigError" in result.stdout
    assert "solver.mass" in result.stdout
    assert not out.exists()


def test_run_missing_config(tmpdir):
    result = runner.invoke(cli, ["run", str(tmpdir / "missing.yml")])
    assert result.exit_code == 3


def test_run_riesz_kernel(tmpdir):
    result = runner.invoke(cli, ["run", str(resource("riesz_kernel.yml")), "--output-dir", str(tmpdir)])
    assert result.exit_code == 0
    kernel = list(Path(tmpdir).glob("riesz-kernel/*/kernel.csv"))
    assert len(kernel) == 1
    lines = kernel[0].read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == "tau,F_alpha"
    assert len(lines) == 23


def test_reproduce(tmpdir):
    runner.invoke(cli, ["run", str(resource("check_growth.yml")), "-o", str(tmpdir / "first")])
    manifest = next(Path(tmpdir / "first").glob("check-growth/*/manifest.txt"))
    result = runner.invoke(cli, ["reproduce", str(manifest), "-o", str(tmpdir / "second")])
    assert result.exit_code == 0
    assert "byte-identical" in result.stdout
    assert len(list(Path(tmpdir / "second").glob("check-growth/*/report.json"))) == 1


def test_reproduce_missing_manifest(tmpdir):
    result = runner.invoke(cli, ["reproduce", str(tmpdir / "manifest.txt")])
    assert result.exit_code == 3
    assert "❌" in result.stdout


def test_run_excited_needs_bump_path(tmpdir):
    config = Path(tmpdir / "excited.yml")
    config.write_text("""mode: excited
problem:
  N: 3
  s: 0.5
  alpha: 2.0
  nonlinearity: power
  params:
    p: 1.8
paths:
  n: 2
  variant: annuli
""")
    out = Path(tmpdir / "out")
    result = runner.invoke(cli, ["run", str(config), "-o", str(out)])
    assert result.exit_code == 3
    assert "paths.variant" in result.stdout
    assert not out.exists()


@pytest.mark.parametrize("error, code", [
    (PathError("Bumps overlap"), 3),
    (NonlinearityError("f is not F'"), 3),
    (BoxTooSmallError("mass left the box"), 2),
    (QuadratureError("tolerance missed"), 2),
    (HypothesisError("D <= 0"), 4),
])
def test_run_maps_errors_to_exit_codes(tmpdir, monkeypatch, error, code):
    def failing_run(config):
        raise error

    monkeypatch.setattr(choquard.__main__, "run_config", failing_run)
    result = runner.invoke(cli, ["run", str(resource("check_growth.yml")), "-o", str(tmpdir)])
    assert result.exit_code == code
    assert f"❌ {type(error).__name__}" in result.stdout
