"""JSON run configuration files with strict schema validation.

Unknown keys are rejected, types are checked, and all paths resolve
relative to the config file's directory.  Environment variables are
never consulted.
"""

import json
from pathlib import Path

from .sweep import SweepConfig, TrialConfig


class ConfigError(ValueError):
    """Raised for unparseable or schema-violating config files."""


_TRAIN_SCHEMA = {
    "dataset": (str, None),
    "arch": (str, "mlp"),
    "n": (int, None),
    "b_hat": (int, None),
    "beta": ((int, float), None),
    "neuron_num": (int, None),
    "layers": (int, 1),
    "iterations": (int, 2000),
    "batch_size": (int, 64),
    "lr": ((int, float), 1e-4),
    "alpha": ((int, float), 1.0),
    "objective": (str, "stcvae"),
    "eval_every": (int, 0),
    "eval_batch": (int, 512),
    "metric_votes": (int, 300),
    "seed": (int, 0),
    "out_dir": (str, "train_out"),
}

_SWEEP_SCHEMA = {
    "dataset": (str, None),
    "latent_dims": (list, None),
    "grouping_factors": (list, None),
    "capacities": (list, None),
    "betas": (list, None),
    "seeds": (int, 3),
    "iterations": (int, 2000),
    "batch_size": (int, 64),
    "lr": ((int, float), 1e-4),
    "layers": (int, 1),
    "arch": (str, "mlp"),
    "alpha": ((int, float), 1.0),
    "eval_every": (int, 0),
    "eval_batch": (int, 512),
    "metric_votes": (int, 300),
    "out_dir": (str, "sweep_out"),
    "record_wall_time": (bool, False),
}

_PATH_KEYS = ("dataset", "out_dir")


def _load(path, schema) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    for key in raw:
        if key not in schema:
            raise ConfigError(f"{path}: unknown key {key!r}")
    resolved = {}
    for key, (types, default) in schema.items():
        if key in raw:
            value = raw[key]
            if isinstance(value, bool) and types is not bool:
                raise ConfigError(f"{path}: key {key!r} has wrong type bool")
            if not isinstance(value, types):
                raise ConfigError(
                    f"{path}: key {key!r} must be {types}, got {type(value).__name__}"
                )
        elif default is None:
            raise ConfigError(f"{path}: missing required key {key!r}")
        else:
            value = default
        resolved[key] = value
    base = path.resolve().parent
    for key in _PATH_KEYS:
        if key in resolved:
            resolved[key] = str((base / resolved[key]).resolve())
    return resolved


def load_train_config(path) -> tuple[TrialConfig, int, str]:
    """Parse a single-trial config; returns (trial, seed, out_dir)."""
    vals = _load(path, _TRAIN_SCHEMA)
    seed = vals.pop("seed")
    out_dir = vals.pop("out_dir")
    vals["beta"] = float(vals["beta"])
    vals["lr"] = float(vals["lr"])
    vals["alpha"] = float(vals["alpha"])
    try:
        return TrialConfig(**vals), seed, out_dir
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_sweep_config(path) -> SweepConfig:
    """Parse a sweep config into a validated ``SweepConfig``."""
    vals = _load(path, _SWEEP_SCHEMA)
    for key, kind in (
        ("latent_dims", int),
        ("grouping_factors", int),
        ("capacities", int),
        ("betas", (int, float)),
    ):
        items = vals[key]
        if not all(isinstance(x, kind) and not isinstance(x, bool) for x in items):
            raise ConfigError(f"{path}: key {key!r} must be a list of {kind}")
        vals[key] = tuple(float(x) if key == "betas" else int(x) for x in items)
    vals["lr"] = float(vals["lr"])
    vals["alpha"] = float(vals["alpha"])
    try:
        return SweepConfig(**vals)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
