"""Run configuration files and run manifests.

A config file is JSON with an explicit ``schema_version``; any key the
schema does not know is rejected so a misspelled hyperparameter cannot
silently fall back to its default.

.. code-block:: json

    {"schema_version": 1,
     "simulation": {"n_subjects": 55, "wtp_bias": 0.4},
     "rf": {"n_trees": 200},
     "evaluation": {"n_repeats": 20}}
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .simulate import ConfigError, SimConfig

SCHEMA_VERSION = 1
SECTIONS = {
    "simulation": None,  # checked by SimConfig.from_dict
    "rf": {"n_trees", "mtry", "min_leaf"},
    "lasso": {"n_folds"},
    "evaluation": {"n_repeats", "holdout", "protocol", "sizes", "metrics"},
}


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {cfg.get('schema_version')!r}")
    unknown = sorted(set(cfg) - set(SECTIONS) - {"schema_version"})
    if unknown:
        raise ConfigError(f"unknown config sections: {unknown}")
    for name, keys in SECTIONS.items():
        sec = cfg.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"section {name!r} must be an object")
        if keys is None:
            SimConfig.from_dict(sec)
        else:
            bad = sorted(set(sec) - keys)
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {bad}")
    return cfg


def load_config(path) -> dict:
    """Read and validate a config file; ``None`` gives the empty default config."""
    if path is None:
        return {"schema_version": SCHEMA_VERSION}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return validate_config(cfg)


def learner_params(cfg: dict) -> dict:
    return {k: dict(cfg[k]) for k in ("rf", "lasso") if k in cfg}


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """What a command read and wrote, with content digests."""

    command: str
    seed: int | None
    config_hash: str
    inputs: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    wall_clock_seconds: float = 0.0
    started: float = field(default_factory=time.time)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = file_digest(path)

    def add_inputs_dir(self, d, names) -> None:
        for n in names:
            p = Path(d) / n
            if p.exists():
                self.add_input(p)

    def add_artifact(self, path) -> None:
        self.artifacts[str(path)] = file_digest(path)

    def to_dict(self) -> dict:
        from . import __version__, _backend

        return {
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "versions": {
                "demandml": __version__,
                "numpy": np.__version__,
                "pandas": pd.__version__,
                "python": platform.python_version(),
                "kernels": _backend.NAME,
            },
            "inputs": self.inputs,
            "artifacts": self.artifacts,
            "wall_clock_seconds": round(self.wall_clock_seconds, 3),
        }

    def write(self, out_dir) -> Path:
        self.wall_clock_seconds = time.time() - self.started
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path
