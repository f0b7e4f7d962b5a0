"""Experiment configuration: defaults, ``key = value`` files, validation.

File format: UTF-8 text, one ``key = value`` per line; blank lines and
anything after ``#`` are ignored. Values are parsed according to the field
type below. Command-line overrides are applied on top of file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError
from .fedopt import ALGORITHMS, MOMENT_SOURCES
from .partition import SCENARIOS
from .protocol import PIPELINES

DATASETS = ("mnist", "fashion_mnist", "synthetic")
TIMING = ("off", "wall")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "mnist"
    data_dir: str | None = None
    D: int = 4
    K: int = 5
    scenario: str = "iid"
    optimizer: str = "fedavg"
    rounds: int = 500
    local_epochs: int = 1
    batch_size: int = 64
    local_lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.99
    eta_s: float = 1e-3
    s: float = 1e-3
    second_moment_source: str = "momentum"
    pipeline: str = "interleaved"
    samples_per_owner: int = 5000
    cut_channels: int = 32  # data-owner conv output channels
    label_conv_channels: int = 8
    label_hidden: int = 128
    test_samples: int = 0  # 0 = whole test split
    synthetic_train: int = 30000
    synthetic_test: int = 2000
    seed: int = 0
    threads: int = 1
    timing: str = "off"  # "wall" fills elapsed_ms; makes the CSV non-reproducible
    out: str = "metrics.csv"

    def world_kwargs(self) -> dict:
        keys = ("D", "K", "scenario", "optimizer", "local_epochs", "batch_size", "local_lr", "beta1", "beta2",
                "eta_s", "s", "second_moment_source", "pipeline", "samples_per_owner", "seed", "threads",
                "cut_channels", "label_conv_channels", "label_hidden")
        kw = {k: getattr(self, k) for k in keys}
        kw["rounds"] = self.rounds
        return kw


FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_TYPES = {"int": int, "float": float, "str": str, "str | None": str}


def _coerce(key, raw):
    typ = _TYPES[FIELDS[key].type]
    if isinstance(raw, str):
        raw = raw.strip()
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    return typ(raw)


def read_config_file(path) -> dict[str, str]:
    values, errors = {}, []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        values[key.strip()] = value.strip()
    if errors:
        raise ConfigurationError(f"{path}: " + "; ".join(errors))
    return values


def validate(cfg: ExperimentConfig) -> list[str]:
    problems = []

    def choice(name, options):
        if getattr(cfg, name) not in options:
            problems.append(f"{name} = {getattr(cfg, name)!r} is not one of: {', '.join(options)}")

    choice("dataset", DATASETS)
    choice("scenario", SCENARIOS)
    choice("optimizer", ALGORITHMS)
    choice("second_moment_source", MOMENT_SOURCES)
    choice("pipeline", PIPELINES)
    choice("timing", TIMING)
    for name in ("D", "K", "rounds", "batch_size", "samples_per_owner", "threads", "synthetic_train",
                 "synthetic_test", "cut_channels", "label_conv_channels", "label_hidden"):
        if getattr(cfg, name) < 1:
            problems.append(f"{name} must be >= 1, got {getattr(cfg, name)}")
    for name in ("local_epochs", "test_samples", "seed"):
        if getattr(cfg, name) < 0:
            problems.append(f"{name} must be >= 0, got {getattr(cfg, name)}")
    if cfg.local_lr < 0:
        problems.append(f"local_lr must be >= 0, got {cfg.local_lr}")
    for name in ("beta1", "beta2"):
        if not 0.0 <= getattr(cfg, name) < 1.0:
            problems.append(f"{name} must lie in [0, 1), got {getattr(cfg, name)}")
    for name in ("eta_s", "s"):
        if not getattr(cfg, name) > 0:
            problems.append(f"{name} must be > 0, got {getattr(cfg, name)}")
    if cfg.dataset != "synthetic" and not cfg.data_dir:
        problems.append(f"dataset {cfg.dataset!r} needs data_dir (directory holding the IDX files)")
    return problems


def parse_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the config file at ``path``, then ``overrides``.

    Every problem found is reported in one :class:`ConfigurationError`.
    """
    merged: dict = {}
    if path is not None:
        merged.update(read_config_file(path))
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    problems, values = [], {}
    for key, raw in merged.items():
        if key not in FIELDS:
            problems.append(f"unknown key {key!r}")
            continue
        try:
            values[key] = _coerce(key, raw)
        except ValueError:
            problems.append(f"{key}: cannot parse {raw!r} as {FIELDS[key].type}")
    cfg = ExperimentConfig(**values)
    problems.extend(validate(cfg))
    if problems:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(problems))
    return cfg
