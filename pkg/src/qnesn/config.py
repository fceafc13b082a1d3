"""Run configuration: one YAML file with nested sections plus command-line overrides.

Example::

    data:
      path: null            # frame CSV; a synthetic corpus is generated when null
    synth: {n_classes: 3, n_speakers: 4, seed: 0}
    model: {tag: qnesn, n_units: 8, reduce_dim: 8, order: 3, structure: state_plus_input}
    reservoir: {input_scaling: 0.5, spectral_radius: 0.1, leaking_rate: 0.9, ridge_c: 100}
    features: {window: 40, shift: 10}
    ga: {population_size: 50, max_generations: 200}
    run: {seeds: [0], out: runs/qnesn}
    sweep: {axis: filter_order, values: [2, 3, 4, 5]}

Every section and key is optional.  Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .data import SynthSpec
from .experiment import ExperimentConfig
from .trainer import GaConfig

SWEEP_AXES = ("filter_order", "reservoir_size", "window")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    axis: str = "filter_order"
    values: tuple[int, ...] = (2, 3, 4, 5)
    # Optional reduction width per value; reservoir-size sweeps usually need one.
    reduce_dims: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}; expected one of {', '.join(SWEEP_AXES)}")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if not self.values:
            raise ValueError("sweep values must not be empty")
        if self.reduce_dims is not None:
            object.__setattr__(self, "reduce_dims", tuple(int(v) for v in self.reduce_dims))
            if len(self.reduce_dims) != len(self.values):
                raise ValueError("sweep reduce_dims must have one entry per value")


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    data_path: str | None = None
    synth: SynthSpec = field(default_factory=SynthSpec)
    out: str = "runs/default"
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["experiment"] = self.experiment.as_dict()
        return d

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; identifies the run in its manifest."""
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def sweep_points(self) -> list[tuple[int, ExperimentConfig]]:
        points = []
        for i, v in enumerate(self.sweep.values):
            key = {"filter_order": "order", "reservoir_size": "n_units", "window": "window"}[self.sweep.axis]
            changes: dict[str, Any] = {key: v}
            if self.sweep.reduce_dims is not None:
                changes["reduce_dim"] = self.sweep.reduce_dims[i]
            try:
                points.append((v, replace(self.experiment, **changes)))
            except ValueError as exc:
                raise ConfigError(f"sweep value {v}: {exc}") from None
        return points


_EXPERIMENT_SECTIONS = {
    "model": {"tag": "model", "n_units": "n_units", "reduce_dim": "reduce_dim", "order": "order", "structure": "structure"},
    "reservoir": {k: k for k in ("input_scaling", "spectral_radius", "leaking_rate", "ridge_c", "density")},
    "features": {"window": "window", "shift": "shift"},
}
_TOP = {"data", "synth", "model", "reservoir", "features", "ga", "run", "sweep"}


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a mapping, got {type(sec).__name__}")
    return sec


def _check_keys(sec: dict, name: str, allowed) -> None:
    unknown = sorted(set(sec) - set(allowed))
    if unknown:
        raise ConfigError(f"[{name}] unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(allowed))}")


def _build(cls, name: str, kwargs: dict):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from None


def load_yaml(path) -> dict:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return raw


def build_config(
    raw: dict | None = None,
    model: str | None = None,
    seed: int | None = None,
    paper_scale: bool = False,
    out: str | None = None,
) -> RunConfig:
    """Validate ``raw`` (parsed YAML) and apply flag overrides, which take precedence."""
    raw = dict(raw or {})
    _check_keys(raw, "config", _TOP)

    exp_kwargs: dict[str, Any] = {}
    for sec_name, mapping in _EXPERIMENT_SECTIONS.items():
        sec = _section(raw, sec_name)
        _check_keys(sec, sec_name, mapping)
        exp_kwargs.update({mapping[k]: v for k, v in sec.items()})

    ga_sec = _section(raw, "ga")
    _check_keys(ga_sec, "ga", {f.name for f in fields(GaConfig)})
    ga = _build(GaConfig, "ga", ga_sec)
    if paper_scale:
        ga = replace(ga, population_size=500, max_generations=None)

    run = _section(raw, "run")
    _check_keys(run, "run", {"seeds", "out"})
    if "seeds" in run:
        seeds = run["seeds"]
        exp_kwargs["seeds"] = tuple(seeds) if isinstance(seeds, (list, tuple)) else (seeds,)
    if seed is not None:
        exp_kwargs["seeds"] = (seed,)
    if model is not None:
        exp_kwargs["model"] = model
    experiment = _build(ExperimentConfig, "model", {**exp_kwargs, "ga": ga})

    data = _section(raw, "data")
    _check_keys(data, "data", {"path"})
    synth_sec = _section(raw, "synth")
    _check_keys(synth_sec, "synth", {f.name for f in fields(SynthSpec)})
    synth = _build(SynthSpec, "synth", synth_sec)

    sweep_sec = _section(raw, "sweep")
    _check_keys(sweep_sec, "sweep", {f.name for f in fields(SweepConfig)})
    sweep = _build(SweepConfig, "sweep", sweep_sec)

    cfg = RunConfig(
        experiment=experiment,
        data_path=data.get("path"),
        synth=synth,
        out=out if out is not None else str(run.get("out", "runs/default")),
        sweep=sweep,
    )
    return cfg
