"""Quaternion arithmetic on numpy arrays.

Quaternions are stored as the trailing axis of length 4 holding
``(a, b, c, d)`` for ``a + bi + cj + dk``.  A quaternion matrix with
``rows x cols`` entries is therefore an array of shape ``(rows, cols, 4)``.

The heavy lifting in the reservoir and the readout goes through the
real-adjoint form: left multiplication by ``q`` is the 4x4 real matrix
returned by :func:`left_matrix`, so a quaternion matrix-vector product is a
plain real matmul against :func:`to_real_matrix`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Quaternion",
    "hamilton_product",
    "left_matrix",
    "right_matrix",
    "to_real_matrix",
    "quat_matvec",
    "split_apply",
    "qnorm",
    "qmse",
    "class_targets",
]


@dataclass(frozen=True)
class Quaternion:
    """Scalar quaternion ``a + bi + cj + dk``."""

    a: float
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError(f"quaternion components must be finite: {self}")

    @classmethod
    def from_array(cls, arr) -> "Quaternion":
        a, b, c, d = (float(x) for x in np.asarray(arr, dtype=float).reshape(4))
        return cls(a, b, c, d)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=float)

    def norm(self) -> float:
        return float(np.sqrt(self.a**2 + self.b**2 + self.c**2 + self.d**2))

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        if not isinstance(other, Quaternion):
            return NotImplemented
        return Quaternion.from_array(hamilton_product(self.as_array(), other.as_array()))

    def __add__(self, other: "Quaternion") -> "Quaternion":
        if not isinstance(other, Quaternion):
            return NotImplemented
        return Quaternion.from_array(self.as_array() + other.as_array())


def hamilton_product(p, q) -> np.ndarray:
    """Hamilton product ``p ⊗ q``, broadcasting over leading axes."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape[-1] != 4 or q.shape[-1] != 4:
        raise ValueError(f"trailing axis must have length 4, got {p.shape} and {q.shape}")
    a1, b1, c1, d1 = np.moveaxis(p, -1, 0)
    a2, b2, c2, d2 = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ],
        axis=-1,
    )


def left_matrix(q) -> np.ndarray:
    """Real 4x4 matrix ``L`` with ``L @ p == q ⊗ p``; shape ``(..., 4, 4)``."""
    q = np.asarray(q, dtype=float)
    a, b, c, d = np.moveaxis(q, -1, 0)
    rows = [
        [a, -b, -c, -d],
        [b, a, -d, c],
        [c, d, a, -b],
        [d, -c, b, a],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def right_matrix(q) -> np.ndarray:
    """Real 4x4 matrix ``R`` with ``R @ p == p ⊗ q``; shape ``(..., 4, 4)``."""
    q = np.asarray(q, dtype=float)
    a, b, c, d = np.moveaxis(q, -1, 0)
    rows = [
        [a, -b, -c, -d],
        [b, a, d, -c],
        [c, -d, a, b],
        [d, c, -b, a],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def to_real_matrix(m) -> np.ndarray:
    """Real-adjoint of a ``(rows, cols, 4)`` quaternion matrix, shape ``(4*rows, 4*cols)``.

    Flattening a quaternion vector ``v`` of shape ``(cols, 4)`` row-major gives
    ``to_real_matrix(m) @ v.ravel() == quat_matvec(m, v).ravel()``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 3 or m.shape[-1] != 4:
        raise ValueError(f"expected a (rows, cols, 4) quaternion matrix, got shape {m.shape}")
    rows, cols = m.shape[:2]
    blocks = left_matrix(m)  # (rows, cols, 4, 4)
    return blocks.transpose(0, 2, 1, 3).reshape(4 * rows, 4 * cols)


def quat_matvec(m, v) -> np.ndarray:
    """``out_i = sum_j m_ij ⊗ v_j`` for ``m`` of shape (rows, cols, 4), ``v`` of shape (cols, 4)."""
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    if m.ndim != 3 or m.shape[-1] != 4 or v.ndim != 2 or v.shape[-1] != 4:
        raise ValueError(f"bad quaternion shapes: matrix {m.shape}, vector {v.shape}")
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"shape mismatch: matrix has {m.shape[1]} columns, vector has {v.shape[0]} entries")
    return hamilton_product(m, v[None, :, :]).sum(axis=1)


def split_apply(f: Callable[[np.ndarray], np.ndarray], q) -> np.ndarray:
    """Apply a real function to every quaternion component independently."""
    q = np.asarray(q, dtype=float)
    return np.asarray(f(q), dtype=float)


def qnorm(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.sqrt(np.sum(q * q, axis=-1))


def qmse(target, pred) -> float:
    """Half the squared error summed over every row and all four components."""
    target = np.asarray(target, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if target.shape != pred.shape:
        raise ValueError(f"shape mismatch: target {target.shape} vs prediction {pred.shape}")
    return 0.5 * float(np.sum((target - pred) ** 2))


def class_targets(n_classes: int) -> np.ndarray:
    """Stack of per-class target matrices, shape ``(n_classes, n_classes, 4)``.

    Target ``n`` has row ``n`` filled with ones and zeros elsewhere.
    """
    if n_classes < 1:
        raise ValueError("n_classes must be positive")
    out = np.zeros((n_classes, n_classes, 4))
    out[np.arange(n_classes), np.arange(n_classes), :] = 1.0
    return out
