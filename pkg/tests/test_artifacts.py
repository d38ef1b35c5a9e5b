import json
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from choquard._version import __version__
from choquard.artifacts import (
    compare_files,
    config_hash,
    get_base64,
    load_manifest,
    read_csv,
    read_solution,
    run_directory,
    stamp,
    write_csv,
    write_json,
    write_manifest,
    write_solution,
)
from choquard.radial_riesz import uniform_profile
from choquard.run_conf import load_run_config
from choquard.spectral_core import Field
from choquard.utils import ConfigError, DomainError
from tests.conftest import gaussian_values, grid_2d, resource

config_growth = load_run_config(resource("check_growth.yml"))


def test_get_base64_has_no_padding():
    assert get_base64(b"a") == "YQ"
    assert get_base64(b"\xfb\xff") == "-_8"


def test_config_hash_ignores_output_dir():
    a = load_run_config(resource("check_growth.yml"))
    b = load_run_config(resource("check_growth.yml"))
    b.output_dir = "/tmp/somewhere-else"
    assert config_hash(a) == config_hash(b)
    b.seed = 1
    assert config_hash(a) != config_hash(b)


def test_run_directory(tmpdir):
    config = load_run_config(resource("check_growth.yml"))
    config.output_dir = str(tmpdir)
    assert run_directory(config) == Path(tmpdir) / "check-growth" / config_hash(config)


def test_stamp():
    meta = stamp(config_growth, "spectral")
    assert meta["config_hash"] == config_hash(config_growth)
    assert meta["seed"] == 0
    assert meta["version"] == __version__
    assert meta["backend"] == "spectral"


def test_write_and_read_csv(tmpdir):
    path = write_csv(Path(tmpdir / "table.csv"), "a,b\n1.0,2.0\n3.0,4.0\n", {"config_hash": "abc", "seed": 2})
    first = path.read_text().splitlines()[0]
    assert first == "# config_hash=abc, seed=2"
    assert_allclose(read_csv(path), [[1.0, 2.0], [3.0, 4.0]])


def test_write_json(tmpdir):
    path = write_json(Path(tmpdir / "report.json"), {"value": np.float64(0.5), "pair": (1, 2)}, {"seed": 4})
    document = json.loads(path.read_text())
    assert document == {"value": 0.5, "pair": [1, 2], "seed": 4}
    with pytest.raises(TypeError):
        write_json(Path(tmpdir / "bad.json"), {"value": object()}, {})


def test_write_creates_directories(tmpdir):
    path = write_csv(Path(tmpdir / "a" / "b" / "table.csv"), "x\n1.0\n", {})
    assert path.exists()
    assert [p.name for p in path.parent.iterdir()] == ["table.csv"]


def test_solution_file_with_field(tmpdir):
    u = Field(grid_2d, gaussian_values(grid_2d))
    path = write_solution(Path(tmpdir / "solution.bin"), u, {"seed": 1})
    header, v = read_solution(path)
    assert header["layout"] == "field"
    assert header["seed"] == 1
    assert v.grid == u.grid
    assert np.array_equal(v.values, u.values)


def test_solution_file_with_radial_profile(tmpdir):
    u = uniform_profile(3, 8.0, 63, lambda r: np.exp(-r ** 2))
    header, v = read_solution(write_solution(Path(tmpdir / "solution.bin"), u, {}))
    assert header["layout"] == "radial"
    assert header["count"] == 63
    assert v.N == 3 and v.spacing == u.spacing and v.core
    assert np.array_equal(v.nodes, u.nodes)
    assert np.array_equal(v.values, u.values)
    assert np.array_equal(v.weights, u.weights)


def test_read_solution_rejects_other_files(tmpdir):
    path = Path(tmpdir / "other.bin")
    path.write_bytes(b'{"seed": 0}\n\x00\x01')
    with pytest.raises(DomainError):
        read_solution(path)


def test_manifest(tmpdir):
    directory = Path(tmpdir)
    first = write_csv(directory / "a.csv", "x\n1.0\n", {})
    second = write_csv(directory / "b.csv", "x\n2.0\n", {})
    path = write_manifest(directory, config_growth, [first, second])
    assert path.name == "manifest.txt"
    manifest = load_manifest(path)
    assert manifest.config_hash == config_hash(config_growth)
    assert manifest.mode == "check-growth"
    assert manifest.version == __version__
    assert sorted(manifest.files) == ["a.csv", "b.csv"]
    assert manifest.config.problem.params == {"p": 1.8}
    assert compare_files(manifest, directory) == {"a.csv": True, "b.csv": True}

    second.write_text("changed")
    first.unlink()
    assert compare_files(manifest, directory) == {"a.csv": False, "b.csv": False}


def test_manifest_not_found(tmpdir):
    with pytest.raises(ConfigError):
        load_manifest(Path(tmpdir / "manifest.txt"))


def test_malformed_manifest(tmpdir):
    path = Path(tmpdir / "manifest.txt")
    path.write_text("config_hash: abc\nmode: check-growth\n")
    with pytest.raises(ConfigError):
        load_manifest(path)
