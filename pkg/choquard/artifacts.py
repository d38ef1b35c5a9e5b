"""
Output tree of a run and the manifest that allows to reproduce it.

Every run writes to <output_dir>/<mode>/<config hash>/. Each file embeds the
config hash and seed: CSV files in a leading comment line, JSON reports as
top-level keys and the solution in the header line of its binary file.
"""
import base64
import hashlib
import json
import os
import platform
import re
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np
import yatiml

from choquard._version import __version__
from choquard.definitions import MANIFEST_FILE
from choquard.radial_riesz import RadialProfile
from choquard.run_conf import (
    AuditSection,
    GridSection,
    PathsSection,
    ProblemSection,
    RadialSection,
    RunConfig,
    ScanSection,
    SolverSection,
)
from choquard.spectral_core import Field, field_bytes, field_from_bytes
from choquard.utils import ConfigError, DomainError, log


def get_base64(s: bytes) -> str:
    """URL-safe base64 without padding."""
    return re.sub(r'=', '', base64.b64encode(s, b'-_').decode('utf-8'))


def config_hash(config: RunConfig) -> str:
    """Hash of everything that determines the results; the output directory is left out."""
    content = config.dict()
    content.pop("output_dir", None)
    canonical = json.dumps(content, sort_keys=True, default=float).encode("utf-8")
    return get_base64(hashlib.sha256(canonical).digest())


def file_digest(path: Union[str, Path]) -> str:
    return get_base64(hashlib.sha256(Path(path).read_bytes()).digest())


def run_directory(config: RunConfig) -> Path:
    return config.output_root / config.mode / config_hash(config)


def stamp(config: RunConfig, backend: str) -> Dict[str, Any]:
    """What every artifact carries besides its content."""
    return {
        "config_hash": config_hash(config),
        "seed": config.seed,
        "backend": backend,
        "tol_grad": config.solver.tol_grad,
        "tol_pohozaev": config.solver.tol_pohozaev,
        "version": __version__,
    }


def write_atomic(path: Union[str, Path], data: Union[str, bytes]) -> Path:
    """Write to a temporary file next to `path` and move it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    log.debug(f"Wrote {path}")
    return path


def write_csv(path: Union[str, Path], body: str, meta: Dict[str, Any]) -> Path:
    header = "# " + ", ".join(f"{k}={v}" for k, v in meta.items())
    return write_atomic(path, header + "\n" + body)


def read_csv(path: Union[str, Path]) -> np.ndarray:
    """Numeric rows of an artifact CSV, skipping the stamp and column names."""
    return np.loadtxt(Path(path), delimiter=",", comments="#", skiprows=2, ndmin=2)


def write_json(path: Union[str, Path], content: Dict[str, Any], meta: Dict[str, Any]) -> Path:
    document = dict(meta)
    document.update(content)
    return write_atomic(path, json.dumps(document, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def write_solution(path: Union[str, Path], u: Union[Field, RadialProfile], meta: Dict[str, Any]) -> Path:
    """One JSON header line, then the field layout of spectral_core or the radial nodes, values and weights."""
    header = dict(meta)
    if isinstance(u, Field):
        header["layout"] = "field"
        payload = field_bytes(u)
    else:
        header.update(layout="radial", N=u.N, core=u.core, spacing=u.spacing, count=int(u.nodes.size))
        payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in (u.nodes, u.values, u.weights))
    return write_atomic(path, json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + payload)


def read_solution(path: Union[str, Path]):
    """(header, field or radial profile) from a solution file."""
    raw = Path(path).read_bytes()
    line, _, payload = raw.partition(b"\n")
    header = json.loads(line.decode("utf-8"))
    if header.get("layout") == "field":
        return header, field_from_bytes(payload)
    if header.get("layout") == "radial":
        arrays = np.frombuffer(payload, dtype="<f8").reshape(3, header["count"]).copy()
        return header, RadialProfile(header["N"], arrays[0], arrays[1], arrays[2], header["core"], header["spacing"])
    raise DomainError(f"{path} is not a solution file")


class Manifest:
    """Record of a run.

    Attributes:
        config_hash: hash of the configuration
        version: package version that produced the files
        mode: run mode
        seed: recorded seed
        platform: system the run was made on
        files: file name -> sha256 (url-safe base64) of its content
        config: the configuration itself
    """

    def __init__(
            self,
            config_hash: str,
            version: str,
            mode: str,
            seed: int,
            platform: str,
            files: Dict[str, str],
            config: RunConfig,
    ) -> None:
        self.config_hash = config_hash
        self.version = version
        self.mode = mode
        self.seed = seed
        self.platform = platform
        self.files = dict(files)
        self.config = config


_SECTIONS = (RunConfig, ProblemSection, SolverSection, GridSection, RadialSection, PathsSection, ScanSection,
             AuditSection)
_load_manifest = yatiml.load_function(Manifest, *_SECTIONS)
_dumps_manifest = yatiml.dumps_function(Manifest, *_SECTIONS)


def write_manifest(directory: Union[str, Path], config: RunConfig, files: List[Path]) -> Path:
    manifest = Manifest(
        config_hash=config_hash(config),
        version=__version__,
        mode=config.mode,
        seed=config.seed,
        platform=platform.platform(),
        files={Path(f).name: file_digest(f) for f in sorted(files) if Path(f).name != MANIFEST_FILE},
        config=config,
    )
    return write_atomic(Path(directory) / MANIFEST_FILE, _dumps_manifest(manifest))


def load_manifest(path: Union[str, Path]) -> Manifest:
    """Load a manifest and check it against the code.

    Raises:
        ConfigError: missing or malformed manifest, or a configuration that no longer validates
    """
    try:
        manifest = _load_manifest(Path(path))
    except (yatiml.RecognitionError, FileNotFoundError) as e:
        raise ConfigError(f"{path}: {e}")
    try:
        manifest.config.validate()
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}")
    if manifest.version != __version__:
        log.warning(f"Manifest written by version {manifest.version}, running {__version__}: "
                    f"outputs may differ")
    if config_hash(manifest.config) != manifest.config_hash:
        log.warning(f"Manifest hash {manifest.config_hash} does not match its configuration")
    return manifest


def compare_files(manifest: Manifest, directory: Union[str, Path]) -> Dict[str, bool]:
    """File name -> whether the file in `directory` is byte-identical to the recorded one."""
    directory = Path(directory)
    return {
        name: (directory / name).exists() and file_digest(directory / name) == digest
        for name, digest in manifest.files.items()
    }

