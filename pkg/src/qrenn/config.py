"""Strict run-configuration parsing for the command-line tool.

A config document (JSON or YAML) has the top-level keys ``command``,
``seed``, ``output_dir``, ``threads`` and ``parameters``.  Unknown keys at
any level are rejected with their dotted path.
"""

from __future__ import annotations

import json
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .bench import GradStatConfig, TrainConfig

COMMANDS = ("gradstats", "train", "spt", "dla-analyze", "overlap-scan", "dataset-gen")
STOCHASTIC = {"gradstats", "train", "spt", "dataset-gen", "dla-analyze"}
TOP_LEVEL = ("command", "seed", "output_dir", "threads", "parameters")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class SptParams(TrainConfig):
    feature_tag: str = "cluster_ising"
    n: int = 8
    m: int = 1
    T: int = 10
    train_size: int = 40
    probe: Optional[str] = "plus"
    training_sizes: Optional[list] = None
    repeats: int = 20


@dataclass
class DlaParams:
    m: int = 1
    n: int = 1
    hamiltonian: str = "Z"
    distinct_eigenvalues: int = 2
    control: Optional[str] = None
    tol: float = 1e-7
    seed: Optional[int] = None


@dataclass
class OverlapParams:
    n_list: list = field(default_factory=lambda: [4, 6, 8])
    lambda_min: float = 0.0
    lambda_max: float = 2.0
    lambda_points: int = 41
    probes: list = field(default_factory=lambda: ["zero", "minus", "plus"])


@dataclass
class DatasetParams:
    feature_tag: str = "pauli"
    n: int = 3
    total: int = 600
    train_size: int = 100
    lambda_min: float = 0.0
    lambda_max: float = 2.0
    seed: Optional[int] = None


PARAM_TYPES = {
    "gradstats": GradStatConfig,
    "train": TrainConfig,
    "spt": SptParams,
    "dla-analyze": DlaParams,
    "overlap-scan": OverlapParams,
    "dataset-gen": DatasetParams,
}


@dataclass
class RunConfig:
    command: str
    parameters: dict
    seed: Optional[int] = None
    output_dir: str = "output"
    threads: int = 0

    def params_object(self):
        cls = PARAM_TYPES[self.command]
        kw = dict(self.parameters)
        if any(f.name == "seed" for f in fields(cls)):
            kw["seed"] = self.seed
        return cls(**kw)


# -- type checking ------------------------------------------------------------

def _check_value(value, hint, path: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _check_value(value, inner[0], path)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if hint is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        for i, v in enumerate(value):
            if not isinstance(v, (int, float, str)) or isinstance(v, bool):
                raise ConfigError(f"{path}[{i}]", f"unsupported list entry {v!r}")
        return list(value)
    raise ConfigError(path, f"unsupported field type {hint!r}")


def _check_params(command: str, params: dict) -> dict:
    cls = PARAM_TYPES[command]
    hints = typing.get_type_hints(cls)
    allowed = {f.name for f in fields(cls)} - {"seed"}
    if not isinstance(params, dict):
        raise ConfigError("parameters", "expected a mapping")
    out = {}
    for key, value in params.items():
        if key not in allowed:
            raise ConfigError(f"parameters.{key}", "unknown key")
        out[key] = _check_value(value, hints[key], f"parameters.{key}")
    defaults = asdict(cls())
    merged = {k: defaults[k] for k in sorted(allowed)}
    merged.update(out)
    try:
        obj = cls(**merged)
        if hasattr(obj, "validate"):
            obj.validate()
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError("parameters", str(exc)) from exc
    return merged


def parse_config(doc, command: Optional[str] = None, seed: Optional[int] = None,
                 output_dir: Optional[str] = None, threads: Optional[int] = None) -> RunConfig:
    """Validate a config mapping; explicit arguments override the document."""
    if not isinstance(doc, dict):
        raise ConfigError("", "config document must be a mapping")
    for key in doc:
        if key not in TOP_LEVEL:
            raise ConfigError(str(key), "unknown key")
    cmd = command or doc.get("command")
    if cmd not in COMMANDS:
        raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}, got {cmd!r}")
    if command and doc.get("command") not in (None, command):
        raise ConfigError("command", f"config is for {doc.get('command')!r}, not {command!r}")
    s = seed if seed is not None else doc.get("seed")
    if s is not None:
        s = _check_value(s, int, "seed")
        if not 0 <= s < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned value")
    elif cmd in STOCHASTIC:
        raise ConfigError("seed", f"required for the stochastic command {cmd!r}")
    out = output_dir if output_dir is not None else doc.get("output_dir", "output")
    out = _check_value(out, str, "output_dir")
    th = threads if threads is not None else doc.get("threads", 0)
    th = _check_value(th, int, "threads")
    if th < 0:
        raise ConfigError("threads", "must be >= 0")
    params = _check_params(cmd, doc.get("parameters", {}) or {})
    return RunConfig(cmd, params, s, out, th)


def serialize(cfg: RunConfig) -> dict:
    return {"command": cfg.command, "seed": cfg.seed, "output_dir": cfg.output_dir,
            "threads": cfg.threads, "parameters": dict(cfg.parameters)}


def load_document(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        doc = yaml.safe_load(text)
    else:
        doc = json.loads(text)
    return {} if doc is None else doc
