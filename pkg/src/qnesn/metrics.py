"""Utterance scoring, class decisions, recall metrics and speaker folds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .quaternion import class_targets


def minmax_scale(p) -> np.ndarray:
    """Scale all entries of each matrix in ``p`` to [0, 1] jointly.

    The last two axes (or the last one for real outputs passed with
    ``ndim == 1``) form one matrix.  A matrix with a single distinct value
    maps to zeros.
    """
    p = np.asarray(p, dtype=float)
    axes = tuple(range(max(p.ndim - 2, 0), p.ndim)) if p.ndim >= 2 else (0,)
    lo = p.min(axis=axes, keepdims=True)
    span = p.max(axis=axes, keepdims=True) - lo
    flat = span <= 0
    return np.where(flat, 0.0, (p - lo) / np.where(flat, 1.0, span))


def utterance_score(outputs, k1: int = 0, k2: int | None = None) -> np.ndarray:
    """Mean of ``outputs[k1:k2+1]`` over windows, min-max scaled as one matrix.

    ``outputs`` is ``(T, N_y, 4)`` for quaternion networks or ``(T, N_y)``
    for real ones; ``k2`` is inclusive and defaults to the last window.
    """
    y = np.asarray(outputs, dtype=float)
    k2 = y.shape[0] - 1 if k2 is None else k2
    if k2 < k1 or k1 < 0 or k2 >= y.shape[0]:
        raise ValueError(f"empty or out-of-range window span [{k1}, {k2}] for {y.shape[0]} windows")
    mean = y[k1 : k2 + 1].mean(axis=0)
    if mean.ndim == 1:
        return minmax_scale(mean[:, None])[:, 0]
    return minmax_scale(mean)


def qmse_to_targets(scores) -> np.ndarray:
    """QMSE of every score matrix against every class target: ``(..., N_y)``."""
    p = np.asarray(scores, dtype=float)
    d = class_targets(p.shape[-2])  # (N_y, N_y, 4)
    diff = d - p[..., None, :, :]
    return 0.5 * np.sum(diff**2, axis=(-2, -1))


def class_affinity(scores, quaternion: bool = True) -> np.ndarray:
    """Per-class preference ``(..., N_y)``, larger is better.

    ``-QMSE`` against each class target for quaternion ``(..., N_y, 4)``
    scores, the scores themselves for real ``(..., N_y)`` ones.
    """
    p = np.asarray(scores, dtype=float)
    if quaternion:
        if p.ndim < 2 or p.shape[-1] != 4:
            raise ValueError(f"quaternion scores need shape (..., N_y, 4), got {p.shape}")
        return -qmse_to_targets(p)
    return p


def classify(scores, quaternion: bool = True) -> np.ndarray | int:
    """Class decision for quaternion ``(..., N_y, 4)`` or real ``(..., N_y)`` scores.

    Quaternion scores pick the target with the largest ``exp(-QMSE)``,
    computed as the smallest QMSE since the map is monotone; real scores pick
    the largest entry.  Ties go to the lowest class index.
    """
    out = np.argmax(class_affinity(scores, quaternion), axis=-1)
    return int(out) if np.ndim(out) == 0 else out


def true_class_probability(scores, labels, quaternion: bool = True) -> np.ndarray:
    """Softmax of :func:`class_affinity` evaluated at each true label."""
    a = class_affinity(scores, quaternion)
    w = np.exp(a - a.max(axis=-1, keepdims=True))
    labels = np.asarray(labels, dtype=int)
    return w[np.arange(len(labels)), labels] / w.sum(axis=-1)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""

    counts: np.ndarray

    @classmethod
    def from_labels(cls, true, pred, n_classes: int) -> "ConfusionMatrix":
        counts = np.zeros((n_classes, n_classes), dtype=int)
        np.add.at(counts, (np.asarray(true, dtype=int), np.asarray(pred, dtype=int)), 1)
        return cls(counts)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


def war_uar(confusion: ConfusionMatrix | np.ndarray) -> tuple[float, float]:
    """Weighted and unweighted average recall.

    Classes without samples are left out of the unweighted mean.
    """
    counts = np.asarray(confusion.counts if isinstance(confusion, ConfusionMatrix) else confusion)
    support = counts.sum(axis=1)
    total = support.sum()
    if total == 0:
        raise ValueError("confusion matrix holds no samples")
    present = support > 0
    recall = np.diag(counts)[present] / support[present]
    weight = support[present] / total
    return float(np.sum(weight * recall)), float(np.mean(recall))


def loso_split(speakers: Sequence[str]) -> list[tuple[np.ndarray, np.ndarray, str]]:
    """One ``(train_idx, test_idx, speaker)`` fold per speaker, in first-seen order."""
    speakers = list(speakers)
    order = list(dict.fromkeys(speakers))
    if len(order) < 2:
        raise ValueError("leave-one-speaker-out needs at least two speakers")
    arr = np.array(speakers, dtype=object)
    folds = []
    for spk in order:
        test = np.flatnonzero(arr == spk)
        train = np.flatnonzero(arr != spk)
        folds.append((train, test, spk))
    return folds
