"""Command-line driver.

Exit codes: 0 success, 1 invalid configuration or input, 2 failure during a run.
``QNESN_THREADS`` sets how many worker processes folds and seeds are spread over.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import SWEEP_AXES, ConfigError, RunConfig, build_config, load_yaml
from .data import load_frames, save_frames, synth_dataset
from .experiment import FoldResult, Report, evaluate_checkpoint, run_experiment, thread_count, validate_data

log = logging.getLogger("qnesn")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def source_digest() -> str:
    """SHA-256 over the package sources, pinning the exact code that ran."""
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: RunConfig) -> Path:
    manifest = {
        "command": command,
        "config": cfg.as_dict(),
        "config_sha256": cfg.digest(),
        "seeds": list(cfg.experiment.seeds),
        "version": __version__,
        "source_sha256": source_digest(),
        "data_sha256": _file_digest(cfg.data_path) if cfg.data_path else None,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": thread_count(),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _load_data(cfg: RunConfig):
    if cfg.data_path:
        return load_frames(cfg.data_path)
    return synth_dataset(cfg.synth)


def _config_from_args(args) -> RunConfig:
    raw = load_yaml(args.config) if getattr(args, "config", None) else {}
    return build_config(
        raw,
        model=getattr(args, "model", None),
        seed=getattr(args, "seed", None),
        paper_scale=getattr(args, "paper_scale", False),
        out=getattr(args, "out", None),
    )


# --- commands -------------------------------------------------------------
# Each command validates its inputs and returns a thunk that does the work:
# problems found while validating exit 1, failures inside the thunk exit 2.


def cmd_synth(args):
    cfg = _config_from_args(args)
    spec = cfg.synth
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    target = Path(args.out) if args.out else Path("synth.csv")

    def run():
        frames = synth_dataset(spec)
        target.parent.mkdir(parents=True, exist_ok=True)
        save_frames(target, frames)
        n_spk = len({f.speaker_id for f in frames})
        n_cls = len({f.label for f in frames})
        print(f"wrote {len(frames)} utterances ({n_cls} classes, {n_spk} speakers) to {target}")

    return run


def cmd_train(args):
    cfg = _config_from_args(args)
    frames = _load_data(cfg)
    validate_data(cfg.experiment, frames)
    jobs = thread_count()
    out = Path(cfg.out)

    def run():
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, "train", cfg)
        report = run_experiment(frames, cfg.experiment, jobs=jobs, checkpoint_dir=out / "checkpoints")
        report.write(out)
        print(report.text(), end="")
        print(f"report written to {out}")

    return run


def cmd_eval(args):
    cfg = _config_from_args(args)
    ckpt = Path(args.checkpoint)
    if ckpt.is_dir():
        paths = sorted(ckpt.glob("*.theta"))
    elif ckpt.exists():
        paths = [ckpt]
    else:
        raise ConfigError(f"checkpoint {ckpt} does not exist")
    if not paths:
        raise ConfigError(f"no *.theta checkpoints in {ckpt}")
    if args.data:
        cfg = RunConfig(cfg.experiment, args.data, cfg.synth, cfg.out, cfg.sweep)
    frames = _load_data(cfg)

    def run():
        lines = [f"{'checkpoint':<28} {'speaker':<12} {'n':>4}  {'WAR':>7}  {'UAR':>7}"]
        for p in paths:
            header = json.loads(Path(f"{p}.json").read_text())
            spk = header.get("speaker")
            # A fold checkpoint is scored on its held-out speaker when present.
            subset = [f for f in frames if f.speaker_id == spk]
            if not subset:
                subset, spk = frames, "*"
            conf, war, uar = evaluate_checkpoint(p, subset)
            lines.append(f"{p.name:<28} {spk:<12} {len(subset):>4}  {war:7.4f}  {uar:7.4f}")
        text = "\n".join(lines) + "\n"
        print(text, end="")
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / "eval.txt").write_text(text)

    return run


def cmd_sweep(args):
    cfg = _config_from_args(args)
    sweep = cfg.sweep
    changes = {}
    if args.axis:
        changes["axis"] = args.axis
    if args.values:
        changes["values"] = tuple(_int_list(args.values))
        if not args.reduce_dims:
            changes["reduce_dims"] = None
    if args.reduce_dims:
        changes["reduce_dims"] = tuple(_int_list(args.reduce_dims))
    if changes:
        try:
            sweep = replace(sweep, **changes)
        except ValueError as exc:
            raise ConfigError(f"[sweep] {exc}") from None
    cfg = RunConfig(cfg.experiment, cfg.data_path, cfg.synth, cfg.out, sweep)
    points = cfg.sweep_points()
    out = Path(cfg.out)

    if args.dry_run:
        if args.n_features is None or args.n_classes is None:
            raise ConfigError("--dry-run needs --n-features and --n-classes")
        for _, exp in points:
            exp.dims(args.n_features, args.n_classes)

        def run_dry():
            rows = [(v, exp.theta_length(args.n_features, args.n_classes), None) for v, exp in points]
            print(sweep_table(sweep.axis, cfg.experiment.model, rows), end="")

        return run_dry

    frames = _load_data(cfg)
    for _, exp in points:
        validate_data(exp, frames)
    jobs = thread_count()

    def run():
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, "sweep", cfg)
        rows = []
        for v, exp in points:
            report = run_experiment(frames, exp, jobs=jobs)
            report.write(out / f"{sweep.axis}={v}")
            rows.append((v, report.theta_length, report))
        text = sweep_table(sweep.axis, cfg.experiment.model, rows)
        (out / "sweep.txt").write_text(text)
        print(text, end="")

    return run


def sweep_table(axis: str, model: str, rows) -> str:
    lines = [f"model: {model}", f"{axis:>15}  {'theta_length':>12}  {'WAR':>7}  {'UAR':>7}  {'s/utt':>10}"]
    for v, length, report in rows:
        length_s = f"{length:>12}" if length is not None else f"{'-':>12}"
        if report is None:
            lines.append(f"{v:>15}  {length_s}  {'-':>7}  {'-':>7}  {'-':>10}")
        else:
            lines.append(
                f"{v:>15}  {length_s}  {report.war:7.4f}  {report.uar:7.4f}  {report.seconds_per_utterance:10.2e}"
            )
    return "\n".join(lines) + "\n"


def cmd_report(args):
    run_dir = Path(args.run_dir or args.out or "")
    src = run_dir / "report.json"
    if not src.exists():
        raise ConfigError(f"{src} not found; point report at a train output directory")

    def run():
        data = json.loads(src.read_text())
        folds = [FoldResult(**f, train_seconds=0.0, predict_seconds=0.0) for f in data["folds"]]
        report = Report(data["model"], data["class_names"], folds, data["config"], data["theta_length"], data["warnings"])
        print(report.text(), end="")
        timing = run_dir / "timing.kv"
        if timing.exists():
            print(timing.read_text(), end="")

    return run


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


# --- entry point ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnesn", description="Reservoir networks for utterance classification.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, help="single seed, overrides the config")
        p.add_argument("--out", help="output directory (file for synth)")
        if model:
            p.add_argument("--model", choices=["esn", "esn-ga", "nesn", "qesn", "qnesn"])
            p.add_argument("--paper-scale", action="store_true", help="population 500, 100 * n_vars generations")

    p = sub.add_parser("synth", help="write a synthetic frame-feature corpus")
    common(p, model=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="leave-one-speaker-out training and evaluation")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score saved checkpoints on a corpus")
    common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint file or directory of them")
    p.add_argument("--data", help="frame CSV, overrides the config")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="one experiment per value of a single setting")
    common(p)
    p.add_argument("--axis", choices=SWEEP_AXES)
    p.add_argument("--values", help="comma-separated integers")
    p.add_argument("--reduce-dims", help="reduction width per value, comma-separated")
    p.add_argument("--dry-run", action="store_true", help="only tabulate genome lengths")
    p.add_argument("--n-features", type=int, help="feature count for --dry-run")
    p.add_argument("--n-classes", type=int, help="class count for --dry-run")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="print the report of a finished run")
    p.add_argument("run_dir", nargs="?")
    p.add_argument("--out", help="run directory (same as the positional argument)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        run = args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        run()
    except Exception as exc:  # noqa: BLE001 - any failure mid-run maps to one exit code
        log.debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
