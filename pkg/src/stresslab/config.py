"""Run configuration: TOML file plus command-line overrides."""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PIPELINES = ("pca", "ae", "vae", "eda", "synth")


class ConfigError(ValueError):
    pass


def load_toml(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML ({exc})") from exc


@dataclass
class RunConfig:
    pipeline: str = "pca"
    prices: str = "data/prices.csv"
    sectors: str = "data/sectors.csv"
    out: str | None = None
    synth_spec: str | None = None
    window: int | None = None  # None: 252 for pca, 504 for ae/vae
    stride: int = 21
    d: int = 5
    stress: str = "multi"  # single | multi | none
    factor: int = 1  # 1-based latent index for single-factor stress
    k: float = 2.0
    sign: int = -1
    delta: list[float] | None = None  # None: pipeline default vector
    weights: list[float] | None = None  # None: equal weight
    confidence: float = 0.95
    batch_size: int = 32
    max_epochs: int = 200
    val_fraction: float = 0.2
    patience: int = 10
    learning_rate: float = 1e-3
    kl_weight: float | None = None  # None: 1 / n_assets
    samples: int = 1000
    seed: int = 0
    threads: int = 1
    crisis: str = "auto"  # auto | latest | gfc2008 | covid2020 | YYYY-MM-DD:YYYY-MM-DD
    attribution: bool = True
    dump_models: bool = False
    max_lag: int | None = None

    @property
    def window_length(self) -> int:
        if self.window is not None:
            return self.window
        return 252 if self.pipeline == "pca" else 504

    @property
    def out_dir(self) -> Path:
        return Path(self.out if self.out is not None else ("data" if self.pipeline == "synth" else f"out/{self.pipeline}"))

    def snapshot(self) -> dict:
        """Resolved settings recorded in the manifest (output location excluded)."""
        snap = dataclasses.asdict(self)
        snap.pop("out")
        snap["window"] = self.window_length
        return snap


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value: Any) -> Any:
    ftype = str(_FIELDS[name].type)
    if value is None:
        if "None" not in ftype:
            raise ConfigError(f"{name} may not be empty")
        return None
    if ftype.startswith("bool"):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean, got {value!r}")
        return value
    if ftype.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if ftype.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if ftype.startswith("list"):
        if not isinstance(value, (list, tuple)) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            raise ConfigError(f"{name} must be a list of numbers, got {value!r}")
        return [float(v) for v in value]
    if not isinstance(value, str):
        raise ConfigError(f"{name} must be a string, got {value!r}")
    return value


def parse_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None, n_assets: int | None = None) -> RunConfig:
    """Build a RunConfig from an optional TOML file, then apply overrides.

    Unknown keys are rejected. The seed falls back to ``STRESSLAB_SEED`` when
    neither the file nor the overrides set it. When ``n_assets`` is unknown
    it is read from the price file header if that file exists.
    """
    values: dict[str, Any] = {}
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file {path} does not exist")
        values.update(load_toml(path))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "seed" not in values and os.environ.get("STRESSLAB_SEED"):
        try:
            values["seed"] = int(os.environ["STRESSLAB_SEED"])
        except ValueError as exc:
            raise ConfigError(f"STRESSLAB_SEED must be an integer, got {os.environ['STRESSLAB_SEED']!r}") from exc
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    if n_assets is None and cfg.pipeline != "synth" and Path(cfg.prices).exists():
        with open(cfg.prices) as fh:
            n_assets = len(fh.readline().strip().split(",")) - 1
    validate(cfg, n_assets)
    return cfg


def validate(cfg: RunConfig, n_assets: int | None = None) -> None:
    if cfg.pipeline not in PIPELINES:
        raise ConfigError(f"pipeline must be one of {PIPELINES}, got {cfg.pipeline!r}")
    if cfg.stress not in ("single", "multi", "none"):
        raise ConfigError(f"stress must be single, multi or none, got {cfg.stress!r}")
    if cfg.d < 1:
        raise ConfigError("d must be >= 1")
    if n_assets is not None and cfg.d > n_assets:
        raise ConfigError(f"d ({cfg.d}) must not exceed the number of assets N ({n_assets})")
    if cfg.window_length < 2 or cfg.stride < 1:
        raise ConfigError("window must be >= 2 and stride >= 1")
    if cfg.pipeline == "pca" and cfg.d > cfg.window_length - 1:
        raise ConfigError(f"d ({cfg.d}) must be <= window - 1 ({cfg.window_length - 1})")
    if not 1 <= cfg.factor <= cfg.d:
        raise ConfigError(f"factor must lie in 1..d ({cfg.d}), got {cfg.factor}")
    if cfg.sign not in (1, -1):
        raise ConfigError("sign must be +1 or -1")
    if cfg.delta is not None and len(cfg.delta) != cfg.d:
        raise ConfigError(f"delta has {len(cfg.delta)} entries but d = {cfg.d}")
    if cfg.weights is not None:
        if n_assets is not None and len(cfg.weights) != n_assets:
            raise ConfigError(f"weights has {len(cfg.weights)} entries but there are {n_assets} assets")
        if abs(sum(cfg.weights) - 1.0) > 1e-12:
            raise ConfigError("weights must sum to 1")
    if not 0.0 < cfg.confidence < 1.0:
        raise ConfigError("confidence must lie in (0, 1)")
    if not 0.0 < cfg.val_fraction < 1.0:
        raise ConfigError("val_fraction must lie in (0, 1)")
    if cfg.batch_size < 1 or cfg.max_epochs < 1 or cfg.patience < 1 or cfg.samples < 1 or cfg.threads < 1:
        raise ConfigError("batch_size, max_epochs, patience, samples and threads must be >= 1")
    if cfg.pipeline in ("ae", "vae") and cfg.window_length * cfg.val_fraction < 1:
        raise ConfigError("window too short for the validation fraction")
    if cfg.crisis not in ("auto", "latest", "gfc2008", "covid2020") and ":" not in cfg.crisis:
        raise ConfigError(f"crisis must be auto, latest, gfc2008, covid2020 or START:END, got {cfg.crisis!r}")
