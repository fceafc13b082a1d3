"""Leave-one-speaker-out experiments, checkpoints and reports."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import FeatureNormalizer, FrameMatrix, UtteranceSet, class_names_of, to_utterances, window_count
from .dimreduce import ProjectionBasis
from .metrics import ConfusionMatrix, loso_split, war_uar
from .models import Network, network_from_theta
from .readout import GA_MODELS, QUATERNION_MODELS, ModelDims, load_theta, normalize_model, save_theta, theta_length, theta_pack
from .reservoir import ReservoirParams
from .trainer import GaAudit, GaConfig, train_ga, train_ridge

log = logging.getLogger(__name__)

THREADS_ENV = "QNESN_THREADS"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs besides the data itself."""

    model: str = "qnesn"
    n_units: int = 8
    input_scaling: float = 0.5
    spectral_radius: float = 0.1
    leaking_rate: float = 0.9
    ridge_c: float = 100.0
    density: float = 1.0
    reduce_dim: int | None = 8
    order: int = 3
    structure: str = "state_plus_input"
    window: int = 40
    shift: int = 10
    seeds: tuple[int, ...] = (0,)
    ga: GaConfig = field(default_factory=GaConfig)

    def __post_init__(self):
        object.__setattr__(self, "model", normalize_model(self.model))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.window < 1 or self.shift < 1:
            raise ValueError("window and shift must be positive")
        # Construct once so reservoir and dimension checks fire up front.
        self.reservoir_params(1, 0)
        if self.reduce_dim is not None and self.reduce_dim < 1:
            raise ValueError("reduce_dim must be positive")
        if self.order < 2:
            raise ValueError("bilinear filter order must be at least 2")
        if self.structure not in ("state_only", "state_plus_input"):
            raise ValueError(f"unknown readout structure {self.structure!r}")

    @property
    def mode(self) -> str:
        return "quaternion" if self.model in QUATERNION_MODELS else "real"

    def n_inputs(self, n_features: int) -> int:
        return n_features if self.mode == "quaternion" else 4 * n_features

    def reservoir_params(self, n_inputs: int, seed: int) -> ReservoirParams:
        return ReservoirParams(
            self.n_units,
            n_inputs,
            self.input_scaling,
            self.spectral_radius,
            self.leaking_rate,
            self.ridge_c,
            self.mode,
            seed,
            self.density,
        )

    def dims(self, n_features: int, n_classes: int) -> ModelDims:
        return ModelDims(
            self.n_units, self.n_inputs(n_features), n_classes, self.reduce_dim, self.order, self.structure
        )

    def theta_length(self, n_features: int, n_classes: int) -> int | None:
        if self.model not in GA_MODELS:
            return None
        return theta_length(self.model, self.dims(n_features, n_classes))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


def validate_data(cfg: ExperimentConfig, frames: Sequence[FrameMatrix]) -> list[str]:
    """Raise ``ValueError`` when ``frames`` cannot be run under ``cfg``; return warnings."""
    if not frames:
        raise ValueError("dataset holds no utterances")
    n_features = {f.n_features for f in frames}
    if len(n_features) != 1:
        raise ValueError(f"utterances disagree on feature count: {sorted(n_features)}")
    short = [f.utterance_id for f in frames if window_count(f.n_frames, cfg.window, cfg.shift) < 1]
    if short:
        raise ValueError(f"{len(short)} utterance(s) shorter than the {cfg.window}-frame window, e.g. {short[0]}")
    speakers = {f.speaker_id for f in frames}
    if len(speakers) < 2:
        raise ValueError("leave-one-speaker-out needs at least two speakers")
    classes = class_names_of(frames)
    cfg.dims(n_features.pop(), len(classes))  # width check for reduce_dim
    warnings = []
    if len(classes) == 1:
        warnings.append(f"dataset has a single class ({classes[0]}); accuracy is trivially 1")
    return warnings


# --- one fold -------------------------------------------------------------


@dataclass(frozen=True)
class FoldResult:
    seed: int
    speaker: str
    n_train: int
    n_test: int
    war: float
    uar: float
    confusion: tuple[tuple[int, ...], ...]
    train_fitness: float | None
    generations: int | None
    elitism_ok: bool
    bounds_ok: bool
    train_seconds: float
    predict_seconds: float


@dataclass(frozen=True)
class _FoldTask:
    cfg: ExperimentConfig
    frames: list[FrameMatrix]
    class_names: list[str]
    train_idx: np.ndarray
    test_idx: np.ndarray
    speaker: str
    seed: int
    checkpoint_dir: str | None


def _prepare(cfg: ExperimentConfig, frames, class_names, train_idx, test_idx):
    train_frames = [frames[i] for i in train_idx]
    norm = FeatureNormalizer.fit(train_frames)
    train = to_utterances(train_frames, cfg.window, cfg.shift, cfg.mode, class_names, norm)
    test = to_utterances([frames[i] for i in test_idx], cfg.window, cfg.shift, cfg.mode, class_names, norm)
    return train, test, norm


def fit_fold(cfg: ExperimentConfig, train: UtteranceSet, seed: int, callback=None):
    """Train one network on ``train``; returns ``(net, theta or None, history)``."""
    width = train.utterances[0].inputs.shape[1]
    n_features = width if cfg.mode == "quaternion" else width // 4
    dims = cfg.dims(n_features, train.n_classes)
    params = cfg.reservoir_params(dims.n_inputs, seed)
    if cfg.model == "esn":
        return train_ridge(dims, params, train), None, []
    ga = replace(cfg.ga, seed=seed)
    net, theta, history = train_ga(cfg.model, dims, params, ga, train, callback=callback)
    return net, theta, history


def _run_fold(task: _FoldTask) -> FoldResult:
    cfg = task.cfg
    train, test, norm = _prepare(cfg, task.frames, task.class_names, task.train_idx, task.test_idx)
    audit = GaAudit(cfg.ga.lower, cfg.ga.upper)
    t0 = time.perf_counter()
    net, theta, history = fit_fold(cfg, train, task.seed, callback=audit)
    t1 = time.perf_counter()
    pred = net.predict(test)
    t2 = time.perf_counter()
    conf = ConfusionMatrix.from_labels(test.labels, pred, len(task.class_names))
    war, uar = war_uar(conf)
    if task.checkpoint_dir is not None:
        save_checkpoint(
            Path(task.checkpoint_dir) / f"seed{task.seed}_{task.speaker}.theta",
            net,
            theta,
            norm,
            cfg,
            {"seed": task.seed, "speaker": task.speaker, "class_names": task.class_names},
        )
    return FoldResult(
        seed=task.seed,
        speaker=task.speaker,
        n_train=len(train),
        n_test=len(test),
        war=war,
        uar=uar,
        confusion=tuple(tuple(int(v) for v in row) for row in conf.counts),
        train_fitness=history[-1].best_fitness if history else None,
        generations=history[-1].generation if history else None,
        elitism_ok=audit.elitism_ok,
        bounds_ok=audit.bounds_ok,
        train_seconds=t1 - t0,
        predict_seconds=t2 - t1,
    )


def thread_count(default: int = 1) -> int:
    """Worker count from ``QNESN_THREADS``."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


# --- whole experiment -----------------------------------------------------


@dataclass
class Report:
    model: str
    class_names: list[str]
    folds: list[FoldResult]
    config: dict
    theta_length: int | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def war(self) -> float:
        """Mean WAR over every (seed, fold) pair."""
        return float(np.mean([f.war for f in self.folds]))

    @property
    def uar(self) -> float:
        return float(np.mean([f.uar for f in self.folds]))

    @property
    def confusion(self) -> np.ndarray:
        return np.sum([np.array(f.confusion) for f in self.folds], axis=0)

    @property
    def seconds_per_utterance(self) -> float:
        return sum(f.predict_seconds for f in self.folds) / sum(f.n_test for f in self.folds)

    @property
    def train_seconds(self) -> float:
        return sum(f.train_seconds for f in self.folds)

    @property
    def ga_checks_ok(self) -> bool:
        return all(f.elitism_ok and f.bounds_ok for f in self.folds)

    def text(self) -> str:
        """Human-readable report.  Contains no timings, so reruns compare byte for byte."""
        lines = [f"model: {self.model}"]
        if self.theta_length is not None:
            lines.append(f"theta length: {self.theta_length}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        lines += ["", f"{'seed':>4}  {'speaker':<12} {'n_test':>6}  {'WAR':>7}  {'UAR':>7}  {'fitness':>9}  {'gens':>5}"]
        for f in self.folds:
            fit = f"{f.train_fitness:9.4f}" if f.train_fitness is not None else f"{'-':>9}"
            gens = f"{f.generations:5d}" if f.generations is not None else f"{'-':>5}"
            lines.append(f"{f.seed:>4}  {f.speaker:<12} {f.n_test:>6}  {f.war:7.4f}  {f.uar:7.4f}  {fit}  {gens}")
        lines += ["", f"mean WAR: {self.war:.6f}", f"mean UAR: {self.uar:.6f}", "", "confusion (rows true, columns predicted):"]
        width = max(len(n) for n in self.class_names)
        lines.append(" " * (width + 2) + " ".join(f"{n:>{width}}" for n in self.class_names))
        for name, row in zip(self.class_names, self.confusion):
            lines.append(f"{name:<{width}}  " + " ".join(f"{int(v):>{width}}" for v in row))
        return "\n".join(lines) + "\n"

    def key_values(self) -> str:
        """Machine-readable ``key=value`` lines; deterministic like :meth:`text`."""
        kv = {
            "model": self.model,
            "war": repr(self.war),
            "uar": repr(self.uar),
            "n_folds": str(len(self.folds)),
            "n_test": str(sum(f.n_test for f in self.folds)),
            "theta_length": str(self.theta_length) if self.theta_length is not None else "none",
            "ga_checks_ok": str(self.ga_checks_ok).lower(),
            "classes": ",".join(self.class_names),
            "confusion": ";".join(",".join(str(int(v)) for v in row) for row in self.confusion),
        }
        for f in self.folds:
            kv[f"fold.{f.seed}.{f.speaker}.war"] = repr(f.war)
            kv[f"fold.{f.seed}.{f.speaker}.uar"] = repr(f.uar)
        return "".join(f"{k}={v}\n" for k, v in kv.items())

    def timing(self) -> str:
        return (
            f"train_seconds={self.train_seconds!r}\n"
            f"seconds_per_utterance={self.seconds_per_utterance!r}\n"
        )

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.text())
        (out / "metrics.kv").write_text(self.key_values())
        (out / "timing.kv").write_text(self.timing())
        (out / "report.json").write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        return out

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "class_names": self.class_names,
            "folds": [{k: v for k, v in asdict(f).items() if not k.endswith("_seconds")} for f in self.folds],
            "config": self.config,
            "theta_length": self.theta_length,
            "warnings": self.warnings,
        }


def run_experiment(
    frames: Sequence[FrameMatrix],
    cfg: ExperimentConfig,
    jobs: int = 1,
    checkpoint_dir=None,
) -> Report:
    """LOSO over ``frames`` once per seed in ``cfg.seeds``.

    Folds and seeds run in ``jobs`` worker processes; results come back in a
    fixed order, so the report does not depend on ``jobs``.
    """
    frames = list(frames)
    warnings = validate_data(cfg, frames)
    for w in warnings:
        log.warning(w)
    class_names = class_names_of(frames)
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    folds = loso_split([f.speaker_id for f in frames])
    tasks = [
        _FoldTask(cfg, frames, class_names, tr, te, spk, seed, None if checkpoint_dir is None else str(checkpoint_dir))
        for seed in cfg.seeds
        for tr, te, spk in folds
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = []
        for t in tasks:
            results.append(_run_fold(t))
            r = results[-1]
            log.info("seed %d fold %s: WAR %.4f UAR %.4f", r.seed, r.speaker, r.war, r.uar)
    return Report(
        model=cfg.model,
        class_names=class_names,
        folds=results,
        config=cfg.as_dict(),
        theta_length=cfg.theta_length(frames[0].n_features, len(class_names)),
        warnings=warnings,
    )


# --- checkpoints ----------------------------------------------------------


def save_checkpoint(path, net: Network, theta, norm: FeatureNormalizer, cfg: ExperimentConfig, extra: dict) -> Path:
    """Genome file plus JSON header, and ``<path>.basis.npz`` when a reduction basis is used.

    Ridge-trained networks are stored in the linear genome layout.
    """
    path = Path(path)
    model = cfg.model
    if theta is None:
        model = "esn_ga"
        theta = theta_pack(
            model, net.dims, {"w_in": net.weights.w_in, "w": net.weights.w, "w_out": net.readout.w_out}
        )
    header = {
        "trained_model": cfg.model,
        "leaking_rate": cfg.leaking_rate,
        "spectral_radius": cfg.spectral_radius,
        "window": cfg.window,
        "shift": cfg.shift,
        "norm_mean": norm.mean.tolist(),
        "norm_std": norm.std.tolist(),
        **extra,
    }
    save_theta(path, theta, model, net.dims, header)
    if net.basis is not None:
        b = net.basis
        np.savez(
            f"{path}.basis.npz",
            eigvects=b.eigvects,
            eigvals=b.eigvals,
            mean=b.mean,
            center_at_transform=np.array(b.center_at_transform),
        )
    return path


def load_checkpoint(path) -> tuple[Network, FeatureNormalizer, dict]:
    path = Path(path)
    theta, model, dims, header = load_theta(path)
    net = network_from_theta(model, dims, theta, header["leaking_rate"], header["spectral_radius"])
    net.model = header.get("trained_model", model)
    basis_file = Path(f"{path}.basis.npz")
    if dims.reduce_dim is not None:
        if not basis_file.exists():
            raise FileNotFoundError(f"{basis_file}: reduction basis missing for checkpoint {path}")
        with np.load(basis_file) as z:
            net.basis = ProjectionBasis(z["eigvects"], z["eigvals"], z["mean"], bool(z["center_at_transform"]))
    norm = FeatureNormalizer(np.array(header["norm_mean"]), np.array(header["norm_std"]))
    return net, norm, header


def evaluate_checkpoint(path, frames: Sequence[FrameMatrix]) -> tuple[ConfusionMatrix, float, float]:
    """Confusion matrix, WAR and UAR of a saved network on ``frames``."""
    net, norm, header = load_checkpoint(path)
    names = header["class_names"]
    mode = "quaternion" if net.quaternion else "real"
    utts = to_utterances(list(frames), header["window"], header["shift"], mode, names, norm)
    conf = ConfusionMatrix.from_labels(utts.labels, net.predict(utts), len(names))
    war, uar = war_uar(conf)
    return conf, war, uar
