"""Frame-level feature ingestion, mid-term statistics and synthetic corpora.

Frame files are comma-separated text with the header::

    utterance_id,speaker_id,label,frame_index,f_0,...,f_{N_V-1}

Frames of one utterance are contiguous and ordered by ``frame_index``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

HEADER_PREFIX = ("utterance_id", "speaker_id", "label", "frame_index")


class DataFormatError(ValueError):
    """A frame file could not be parsed; the message names the offending line."""


class UtteranceTooShortError(ValueError):
    pass


@dataclass
class FrameMatrix:
    """Frame features of one utterance, shape ``(n_features, n_frames)``."""

    values: np.ndarray
    utterance_id: str
    speaker_id: str
    label: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] < 1 or self.values.shape[0] < 1:
            raise ValueError(f"{self.utterance_id}: values must be a non-empty (n_features, n_frames) matrix")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"{self.utterance_id}: non-finite feature values")

    @property
    def n_features(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass
class Utterance:
    """Mid-term input sequence of one utterance, ready for a reservoir.

    ``inputs`` is ``(T', 4 * N_V)`` in real mode or ``(T', N_V, 4)`` in
    quaternion mode.
    """

    inputs: np.ndarray
    label: int
    speaker_id: str
    utterance_id: str = ""


@dataclass
class UtteranceSet:
    utterances: list[Utterance]
    class_names: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    @property
    def labels(self) -> np.ndarray:
        return np.array([u.label for u in self.utterances], dtype=int)

    @property
    def speakers(self) -> list[str]:
        return [u.speaker_id for u in self.utterances]

    @property
    def n_classes(self) -> int:
        if self.class_names:
            return len(self.class_names)
        return int(self.labels.max()) + 1 if self.utterances else 0

    def subset(self, idx: Iterable[int]) -> "UtteranceSet":
        return UtteranceSet([self.utterances[i] for i in idx], list(self.class_names))


# --- mid-term statistics --------------------------------------------------


def window_count(n_frames: int, window: int, shift: int) -> int:
    if window > n_frames:
        return 0
    return (n_frames - window) // shift + 1


def window_moments(windows: np.ndarray, atol: float = 1e-12) -> tuple[np.ndarray, ...]:
    """Mean, population std, skewness and (non-excess) kurtosis along the last axis.

    Windows with (numerically) zero spread get std, skewness and kurtosis 0.
    """
    mean = windows.mean(axis=-1)
    dev = windows - mean[..., None]
    m2 = np.mean(dev**2, axis=-1)
    m3 = np.mean(dev**3, axis=-1)
    m4 = np.mean(dev**4, axis=-1)
    std = np.sqrt(m2)
    flat = std <= atol * np.maximum(1.0, np.abs(mean))
    safe = np.where(flat, 1.0, std)
    skew = np.where(flat, 0.0, m3 / safe**3)
    kurt = np.where(flat, 0.0, m4 / safe**4)
    std = np.where(flat, 0.0, std)
    return mean, std, skew, kurt


def midterm_windows(
    frames: FrameMatrix | np.ndarray,
    window: int = 40,
    shift: int = 10,
    mode: Literal["real", "quaternion"] = "real",
) -> np.ndarray:
    """Mid-term statistics over complete windows of ``window`` frames every ``shift`` frames.

    Real mode returns ``(T', 4 * N_V)`` laid out as ``[means, stds, skews,
    kurts]``; quaternion mode returns ``(T', N_V, 4)`` with the same four
    statistics as the a, b, c, d components.
    """
    v = frames.values if isinstance(frames, FrameMatrix) else np.asarray(frames, dtype=float)
    if window < 1 or shift < 1:
        raise ValueError("window and shift must be positive")
    n_v, n_t = v.shape
    if window > n_t:
        name = frames.utterance_id if isinstance(frames, FrameMatrix) else "utterance"
        raise UtteranceTooShortError(f"{name}: {n_t} frames is shorter than the {window}-frame window")
    starts = np.arange(window_count(n_t, window, shift)) * shift
    idx = starts[:, None] + np.arange(window)[None, :]
    wins = v[:, idx]  # (N_V, T', window)
    stats = np.stack(window_moments(wins), axis=-1)  # (N_V, T', 4)
    stats = stats.transpose(1, 0, 2)  # (T', N_V, 4)
    if mode == "quaternion":
        return np.ascontiguousarray(stats)
    if mode != "real":
        raise ValueError(f"unknown mode {mode!r}")
    return stats.transpose(0, 2, 1).reshape(stats.shape[0], 4 * n_v)


@dataclass(frozen=True)
class FeatureNormalizer:
    """Per-feature z-score computed over every frame of a training fold."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, frames: Sequence[FrameMatrix]) -> "FeatureNormalizer":
        stacked = np.concatenate([f.values for f in frames], axis=1)
        std = stacked.std(axis=1)
        return cls(stacked.mean(axis=1), np.where(std > 0, std, 1.0))

    def __call__(self, fm: FrameMatrix) -> FrameMatrix:
        values = (fm.values - self.mean[:, None]) / self.std[:, None]
        return FrameMatrix(values, fm.utterance_id, fm.speaker_id, fm.label)


def class_names_of(frames: Sequence[FrameMatrix]) -> list[str]:
    return sorted({f.label for f in frames})


def to_utterances(
    frames: Sequence[FrameMatrix],
    window: int,
    shift: int,
    mode: Literal["real", "quaternion"],
    class_names: Sequence[str],
    normalizer: FeatureNormalizer | None = None,
) -> UtteranceSet:
    index = {name: i for i, name in enumerate(class_names)}
    out = []
    for fm in frames:
        if fm.label not in index:
            raise ValueError(f"{fm.utterance_id}: unknown label {fm.label!r}")
        src = normalizer(fm) if normalizer is not None else fm
        out.append(Utterance(midterm_windows(src, window, shift, mode), index[fm.label], fm.speaker_id, fm.utterance_id))
    return UtteranceSet(out, list(class_names))


# --- frame files ----------------------------------------------------------


def save_frames(path, frames: Sequence[FrameMatrix]) -> Path:
    path = Path(path)
    if not frames:
        raise ValueError("no utterances to write")
    n_v = frames[0].n_features
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(HEADER_PREFIX) + [f"f_{i}" for i in range(n_v)])
    for fm in frames:
        if fm.n_features != n_v:
            raise ValueError(f"{fm.utterance_id}: {fm.n_features} features, expected {n_v}")
        for t in range(fm.n_frames):
            writer.writerow([fm.utterance_id, fm.speaker_id, fm.label, t] + [repr(float(x)) for x in fm.values[:, t]])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def load_frames(path, labels: Sequence[str] | None = None) -> list[FrameMatrix]:
    """Parse a frame file into one :class:`FrameMatrix` per utterance.

    ``labels`` restricts the accepted label set when given.
    """
    allowed = set(labels) if labels is not None else None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: no utterances (empty file)")
        header = [h.strip() for h in header]
        if tuple(header[:4]) != HEADER_PREFIX or len(header) < 5:
            raise DataFormatError(f"{path}: line 1: bad header {header!r}")
        n_v = len(header) - 4
        groups: dict[str, dict] = {}
        order: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != n_v + 4:
                raise DataFormatError(f"{path}: line {lineno}: expected {n_v + 4} fields, got {len(row)}")
            utt, spk, lab, fidx = (c.strip() for c in row[:4])
            if allowed is not None and lab not in allowed:
                raise DataFormatError(f"{path}: line {lineno}: unknown label {lab!r}")
            try:
                fi = int(fidx)
                vals = [float(c) for c in row[4:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
            if not np.all(np.isfinite(vals)):
                raise DataFormatError(f"{path}: line {lineno}: non-finite feature value")
            g = groups.get(utt)
            if g is None:
                g = groups[utt] = {"speaker": spk, "label": lab, "frames": [], "next": 0}
                order.append(utt)
            elif order[-1] != utt:
                raise DataFormatError(f"{path}: line {lineno}: frames of {utt!r} are not contiguous")
            if spk != g["speaker"] or lab != g["label"]:
                raise DataFormatError(f"{path}: line {lineno}: speaker/label changes inside {utt!r}")
            if fi != g["next"]:
                raise DataFormatError(f"{path}: line {lineno}: frame_index {fi}, expected {g['next']}")
            g["next"] += 1
            g["frames"].append(vals)
    if not order:
        raise DataFormatError(f"{path}: no utterances")
    return [
        FrameMatrix(np.array(groups[u]["frames"]).T, u, groups[u]["speaker"], groups[u]["label"])
        for u in order
    ]


# --- synthetic corpus -----------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a class-conditional synthetic corpus.

    Each class owns an AR(1) coefficient and a sinusoid frequency; each
    speaker adds a fixed offset and gain per feature.  ``noise`` scales the
    AR innovations and ``speaker_spread`` the speaker effects.
    """

    n_classes: int = 3
    n_speakers: int = 4
    utterances_per: int = 4
    frames: int = 160
    n_features: int = 4
    seed: int = 0
    noise: float = 0.2
    speaker_spread: float = 0.2

    def __post_init__(self):
        for name in ("n_classes", "n_speakers", "utterances_per", "frames", "n_features"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.noise < 0 or self.speaker_spread < 0:
            raise ValueError("noise and speaker_spread must be nonnegative")


def synth_dataset(spec: SynthSpec) -> list[FrameMatrix]:
    """Generate ``n_speakers * n_classes * utterances_per`` utterances, deterministic per seed.

    Feature ``f`` of a class-``c`` utterance is a sinusoid plus AR(1) noise.
    The sinusoid is loud on the features with ``f % n_classes == c`` and
    quiet elsewhere, so the class shows up as a pattern across features
    rather than a single ordered level.
    """
    rng = np.random.default_rng(spec.seed)
    n_c, n_v, n_t = spec.n_classes, spec.n_features, spec.frames
    phis = np.linspace(0.1, 0.9, n_c) if n_c > 1 else np.array([0.5])
    freqs = np.linspace(0.05, 0.15, n_c) if n_c > 1 else np.array([0.1])
    feats = np.arange(n_v)
    amps = np.where(feats[None, :] % n_c == np.arange(n_c)[:, None], 1.5, 0.5)  # (n_c, n_v)
    # Per-feature frequency multipliers keep features from being copies of each other.
    feat_mult = 1.0 + 0.25 * feats
    t = np.arange(n_t)
    out = []
    for s in range(spec.n_speakers):
        offset = rng.normal(0.0, spec.speaker_spread, n_v)
        gain = 1.0 + rng.uniform(-spec.speaker_spread, spec.speaker_spread, n_v) * 0.5
        for c in range(n_c):
            for k in range(spec.utterances_per):
                phase = rng.uniform(0, 2 * np.pi, n_v)
                arg = 2 * np.pi * freqs[c] * feat_mult[:, None] * t[None, :] + phase[:, None]
                sig = amps[c][:, None] * np.sin(arg)
                eps = rng.normal(0.0, spec.noise, (n_v, n_t))
                ar = np.empty((n_v, n_t))
                ar[:, 0] = eps[:, 0]
                for i in range(1, n_t):
                    ar[:, i] = phis[c] * ar[:, i - 1] + eps[:, i]
                values = gain[:, None] * (sig + ar) + offset[:, None]
                out.append(FrameMatrix(values, f"s{s}_c{c}_u{k}", f"spk{s}", f"class{c}"))
    return out
