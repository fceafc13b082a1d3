"""PCA for real readout inputs and 2dPCA for quaternion ones.

A quaternion readout input with ``M`` entries is handled as a ``4 x M`` real
matrix (rows are the a/b/c/d components), so 2dPCA reduces the unit axis
while keeping the four components together.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ProjectionBasis:
    """Leading eigenvectors of a covariance matrix.

    ``eigvals`` holds the full spectrum in descending order; the first
    ``dim`` entries belong to the kept columns of ``eigvects``.
    ``center_at_transform`` controls whether :func:`project` subtracts
    ``mean`` first.  2dPCA leaves it off: the covariance is centred but the
    projection is applied to raw samples.
    """

    eigvects: np.ndarray
    eigvals: np.ndarray
    mean: np.ndarray
    center_at_transform: bool = False

    @property
    def dim(self) -> int:
        return self.eigvects.shape[1]

    @property
    def width(self) -> int:
        return self.eigvects.shape[0]

    def captured_variance(self) -> float:
        total = float(np.sum(self.eigvals))
        if total <= 0.0:
            return 1.0
        return float(np.sum(self.eigvals[: self.dim]) / total)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # Largest-magnitude entry of each eigenvector made positive.
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _eig_desc(gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(gt)
    order = np.argsort(vals, kind="stable")[::-1]
    return np.clip(vals[order], 0.0, None), _fix_signs(vecs[:, order])


def covariance_2d(samples) -> tuple[np.ndarray, np.ndarray]:
    """``(Gt, mean)`` for a stack of matrices of shape ``(S, m, n)``; ``Gt`` is ``n x n``."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 3 or x.shape[0] < 1:
        raise ValueError(f"expected a non-empty (S, m, n) stack, got shape {x.shape}")
    mean = x.mean(axis=0)
    centered = (x - mean).reshape(-1, x.shape[2])
    return centered.T @ centered / x.shape[0], mean


def fit_2dpca(samples, dim: int, center_at_transform: bool = False) -> ProjectionBasis:
    """Fit 2dPCA on ``S`` matrices of shape ``(m, M)``, keeping ``dim`` column directions."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 3:
        raise ValueError(f"expected a (S, m, M) stack, got shape {x.shape}")
    if not 1 <= dim <= x.shape[2]:
        raise ValueError(f"dim must lie in [1, {x.shape[2]}], got {dim}")
    gt, mean = covariance_2d(x)
    vals, vecs = _eig_desc(gt)
    return ProjectionBasis(vecs[:, :dim], vals, mean, center_at_transform)


def fit_pca(samples, dim: int, center_at_transform: bool = True) -> ProjectionBasis:
    """Classical PCA on ``S`` row vectors of width ``M`` (population covariance)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected a non-empty (S, M) matrix, got shape {x.shape}")
    if not 1 <= dim <= x.shape[1]:
        raise ValueError(f"dim must lie in [1, {x.shape[1]}], got {dim}")
    gt, mean = covariance_2d(x[:, None, :])
    vals, vecs = _eig_desc(gt)
    return ProjectionBasis(vecs[:, :dim], vals, mean[0], center_at_transform)


def project(basis: ProjectionBasis, sample) -> np.ndarray:
    """Right-multiply by the basis: ``(..., M) -> (..., dim)``.

    Works for a single row vector, a ``4 x M`` matrix or any stack of them.
    """
    x = np.asarray(sample, dtype=float)
    if x.shape[-1] != basis.width:
        raise ValueError(f"sample width {x.shape[-1]} does not match basis width {basis.width}")
    if basis.center_at_transform:
        x = x - basis.mean
    return x @ basis.eigvects


def reconstruct(basis: ProjectionBasis, reduced) -> np.ndarray:
    """Map projected samples back to the original width."""
    y = np.asarray(reduced, dtype=float) @ basis.eigvects.T
    return y + basis.mean if basis.center_at_transform else y
