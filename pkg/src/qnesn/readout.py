"""Output layers: linear readout, multidimensional bilinear filter, genome layout.

Every function here accepts real arrays (``quaternion=False``) or arrays
with a trailing quaternion axis of length 4.  Sequence-level helpers
(:func:`linear_filter`, :func:`bilinear_filter`) accept leading batch axes so
whole training folds run through one loop over time.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .quaternion import hamilton_product, left_matrix, quat_matvec, right_matrix, to_real_matrix

ReadoutStructure = Literal["state_only", "state_plus_input"]

MODELS = ("esn", "esn_ga", "nesn", "qesn", "qnesn")
GA_MODELS = ("esn_ga", "nesn", "qesn", "qnesn")
QUATERNION_MODELS = ("qesn", "qnesn")
BILINEAR_MODELS = ("nesn", "qnesn")


def normalize_model(tag: str) -> str:
    """Accept CLI spellings such as ``esn-ga`` and return the canonical tag."""
    key = tag.strip().lower().replace("-", "_").replace("(ga)", "_ga").replace(" ", "")
    if key not in MODELS:
        raise ValueError(f"unknown model tag {tag!r}; expected one of {', '.join(MODELS)}")
    return key


def readout_input(x, u, structure: ReadoutStructure = "state_plus_input", quaternion: bool = False) -> np.ndarray:
    """Concatenate ``[x; 1]`` or ``[x; u; 1]`` along the unit axis."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    axis = -2 if quaternion else -1
    bias_unit = np.array([1.0, 0.0, 0.0, 0.0]) if quaternion else np.array([1.0])
    lead = x.shape[: x.ndim - (2 if quaternion else 1)]
    bias = np.broadcast_to(bias_unit, lead + ((1, 4) if quaternion else (1,)))
    if structure == "state_only":
        parts = [x, bias]
    elif structure == "state_plus_input":
        parts = [x, np.broadcast_to(u, lead + u.shape[u.ndim - (2 if quaternion else 1):]), bias]
    else:
        raise ValueError(f"unknown readout structure {structure!r}")
    return np.concatenate(parts, axis=axis)


@dataclass(frozen=True)
class LinearReadout:
    w_out: np.ndarray

    @property
    def quaternion(self) -> bool:
        return self.w_out.ndim == 3


def linear_forward(readout: LinearReadout, z) -> np.ndarray:
    """``y = W_out z``, Hamilton products in quaternion mode."""
    w = np.asarray(readout.w_out, dtype=float)
    z = np.asarray(z, dtype=float)
    if readout.quaternion:
        return quat_matvec(w, z)
    if z.ndim != 1 or w.shape[1] != z.shape[0]:
        raise ValueError(f"shape mismatch: W_out {w.shape} vs input {z.shape}")
    return w @ z


def linear_filter(readout: LinearReadout, z_seq) -> np.ndarray:
    """Apply the linear readout to every step of ``(..., T, M[, 4])``."""
    w = np.asarray(readout.w_out, dtype=float)
    z = np.asarray(z_seq, dtype=float)
    if readout.quaternion:
        if z.shape[-2:] != (w.shape[1], 4):
            raise ValueError(f"shape mismatch: W_out {w.shape} vs inputs {z.shape}")
        zf = z.reshape(z.shape[:-2] + (-1,))
        return (zf @ to_real_matrix(w).T).reshape(z.shape[:-2] + (w.shape[0], 4))
    if z.shape[-1] != w.shape[1]:
        raise ValueError(f"shape mismatch: W_out {w.shape} vs inputs {z.shape}")
    return z @ w.T


@dataclass(frozen=True)
class BilinearCoeffs:
    """Coefficients of an order-``N`` multidimensional bilinear filter.

    Real shapes: ``a (N_y, M)``, ``b (N_y, N-1, M)``, ``c (N_y, N-1)``.
    Quaternion mode appends a trailing axis of 4 to each.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a, b, c = (np.asarray(v, dtype=float) for v in (self.a, self.b, self.c))
        q = a.ndim == 3
        tail = (4,) if q else ()
        n_y, m = a.shape[:2]
        k = c.shape[1] if c.ndim >= 2 else -1
        if (
            a.shape != (n_y, m) + tail
            or c.shape != (n_y, k) + tail
            or b.shape != (n_y, k, m) + tail
            or k < 1
        ):
            raise ValueError(f"inconsistent bilinear shapes: a {a.shape}, b {b.shape}, c {c.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def quaternion(self) -> bool:
        return self.a.ndim == 3

    @property
    def order(self) -> int:
        return self.c.shape[1] + 1

    @property
    def n_outputs(self) -> int:
        return self.a.shape[0]

    @property
    def width(self) -> int:
        return self.a.shape[1]


def _check_step_shapes(coeffs: BilinearCoeffs, y_hist: np.ndarray, z: np.ndarray) -> None:
    tail = (4,) if coeffs.quaternion else ()
    if y_hist.shape != (coeffs.n_outputs, coeffs.order - 1) + tail:
        raise ValueError(f"history shape {y_hist.shape} does not match filter {coeffs.c.shape}")
    if z.shape != (coeffs.width,) + tail:
        raise ValueError(f"input shape {z.shape} does not match filter width {coeffs.width}")


def bilinear_forward(coeffs: BilinearCoeffs, y_hist, z) -> np.ndarray:
    """One output sample of the bilinear filter.

    ``y_hist[p, i-1]`` holds ``y_p(t-i)``.  In quaternion mode the terms are
    ``C ⊗ y``, ``(y ⊗ B) ⊗ z`` and ``A ⊗ z``.
    """
    y_hist = np.asarray(y_hist, dtype=float)
    z = np.asarray(z, dtype=float)
    _check_step_shapes(coeffs, y_hist, z)
    if coeffs.quaternion:
        feedback = hamilton_product(coeffs.c, y_hist).sum(axis=1)
        yb = hamilton_product(y_hist[:, :, None, :], coeffs.b)  # (N_y, N-1, M, 4)
        cross = hamilton_product(yb, z[None, None, :, :]).sum(axis=(1, 2))
        forward = hamilton_product(coeffs.a, z[None, :, :]).sum(axis=1)
        return feedback + cross + forward
    feedback = np.sum(coeffs.c * y_hist, axis=1)
    cross = np.einsum("pi,pij,j->p", y_hist, coeffs.b, z)
    return feedback + cross + coeffs.a @ z


def push_history(y_hist, y, quaternion: bool = False) -> np.ndarray:
    """Shift the history one step back and insert ``y`` as ``y(t-1)``."""
    y_hist = np.asarray(y_hist, dtype=float)
    y = np.asarray(y, dtype=float)
    if quaternion:
        return np.concatenate([y[..., :, None, :], y_hist[..., :, :-1, :]], axis=-2)
    return np.concatenate([y[..., :, None], y_hist[..., :, :-1]], axis=-1)


def bilinear_filter(coeffs: BilinearCoeffs, z_seq) -> np.ndarray:
    """Run the filter over ``(..., T, M[, 4])`` from a zero history.

    The input-dependent products ``A z(t)`` and ``B z(t)`` are formed for all
    steps up front; only the feedback recursion loops over time.
    """
    z = np.asarray(z_seq, dtype=float)
    q = coeffs.quaternion
    n_y, k, m = coeffs.n_outputs, coeffs.order - 1, coeffs.width
    nd = 2 if q else 1
    if z.shape[z.ndim - nd:] != ((m, 4) if q else (m,)):
        raise ValueError(f"input shape {z.shape} does not match filter width {m}")
    lead = z.shape[: z.ndim - nd - 1]
    T = z.shape[z.ndim - nd - 1]
    if q:
        zf = z.reshape(lead + (T, 4 * m))
        az = (zf @ to_real_matrix(coeffs.a).T).reshape(lead + (T, n_y, 4))
        b_mat = coeffs.b.reshape(n_y * k, m, 4)
        bz = (zf @ to_real_matrix(b_mat).T).reshape(lead + (T, n_y, k, 4))
        # y_p(t) = sum_i (L(C_pi) + R(B z)_pi(t)) y_p(t-i) + A z(t), with L/R the
        # left/right multiplication matrices.
        ops = left_matrix(coeffs.c) + right_matrix(bz)  # (..., T, N_y, k, 4, 4)
        hist = np.zeros(lead + (n_y, k, 4))
        out = np.empty(lead + (T, n_y, 4))
        for t in range(T):
            y = np.einsum("...pkij,...pkj->...pi", ops[..., t, :, :, :, :], hist) + az[..., t, :, :]
            out[..., t, :, :] = y
            hist = np.concatenate([y[..., :, None, :], hist[..., :, :-1, :]], axis=-2)
        return out
    az = z @ coeffs.a.T
    bz = np.einsum("pim,...tm->...tpi", coeffs.b, z)
    hist = np.zeros(lead + (n_y, k))
    out = np.empty(lead + (T, n_y))
    for t in range(T):
        y = np.sum((coeffs.c + bz[..., t, :, :]) * hist, axis=-1) + az[..., t, :]
        out[..., t, :] = y
        hist = np.concatenate([y[..., :, None], hist[..., :, :-1]], axis=-1)
    return out


def vectorize(coeffs: BilinearCoeffs, y_hist, z) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per output dimension, the pair ``(W_p, U_p)`` with ``y_p = W_p @ U_p``.

    ``W_p = [C_p, B_p (row-major), A_p]`` and
    ``U_p = [y_p(t-1..t-N+1), V_p, z]`` where ``V_p`` lists
    ``y_p(t-i) z_j`` with ``j`` varying fastest.  Real mode only.
    """
    if coeffs.quaternion:
        raise ValueError("vectorized form is defined for real coefficients only")
    y_hist = np.asarray(y_hist, dtype=float)
    z = np.asarray(z, dtype=float)
    _check_step_shapes(coeffs, y_hist, z)
    pairs = []
    for p in range(coeffs.n_outputs):
        w_p = np.concatenate([coeffs.c[p], coeffs.b[p].ravel(), coeffs.a[p]])
        u_p = np.concatenate([y_hist[p], np.outer(y_hist[p], z).ravel(), z])
        pairs.append((w_p, u_p))
    return pairs


# --- genome layout --------------------------------------------------------


@dataclass(frozen=True)
class ModelDims:
    """Sizes that fix the genome layout of a model.

    ``reduce_dim`` is the PCA/2dPCA width fed to the readout; ``None``
    feeds the full readout input (``n_units + n_inputs + 1`` entries, or
    ``n_units + 1`` for the state-only structure).  ``n_inputs`` counts
    quaternions in quaternion models and reals otherwise.
    """

    n_units: int
    n_inputs: int
    n_outputs: int
    reduce_dim: int | None = None
    order: int = 3
    structure: ReadoutStructure = "state_plus_input"

    def __post_init__(self):
        if min(self.n_units, self.n_inputs, self.n_outputs) < 1:
            raise ValueError("model dimensions must be positive")
        if self.order < 2:
            raise ValueError("bilinear filter order must be at least 2")
        if self.reduce_dim is not None and not 1 <= self.reduce_dim <= self.full_width:
            raise ValueError(
                f"reduce_dim must lie in [1, {self.full_width}], got {self.reduce_dim}"
            )
        if self.structure not in ("state_only", "state_plus_input"):
            raise ValueError(f"unknown readout structure {self.structure!r}")

    @property
    def full_width(self) -> int:
        extra = self.n_inputs if self.structure == "state_plus_input" else 0
        return self.n_units + extra + 1

    @property
    def readout_width(self) -> int:
        return self.reduce_dim if self.reduce_dim is not None else self.full_width


def theta_segments(model: str, dims: ModelDims) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered ``(name, shape)`` list describing the genome of ``model``."""
    model = normalize_model(model)
    if model == "esn":
        raise ValueError("the ridge-trained esn model has no genome")
    tail = (4,) if model in QUATERNION_MODELS else ()
    n, m, ny, k = dims.n_units, dims.readout_width, dims.n_outputs, dims.order - 1
    reservoir = [("w_in", (n, dims.n_inputs + 1) + tail), ("w", (n, n) + tail)]
    if model in BILINEAR_MODELS:
        return [("a", (ny, m) + tail), ("b", (ny, k, m) + tail), ("c", (ny, k) + tail)] + reservoir
    return reservoir + [("w_out", (ny, m) + tail)]


def theta_length(model: str, dims: ModelDims) -> int:
    return sum(int(np.prod(shape)) for _, shape in theta_segments(model, dims))


def theta_pack(model: str, dims: ModelDims, params: dict[str, np.ndarray]) -> np.ndarray:
    """Flatten named parameter arrays into one genome vector."""
    parts = []
    for name, shape in theta_segments(model, dims):
        arr = np.asarray(params[name], dtype=float)
        if arr.shape != shape:
            raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
        parts.append(arr.ravel())
    return np.concatenate(parts)


def theta_unpack(model: str, dims: ModelDims, theta) -> dict[str, np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    segments = theta_segments(model, dims)
    expected = sum(int(np.prod(s)) for _, s in segments)
    if theta.shape != (expected,):
        raise ValueError(f"theta has shape {theta.shape}, model {model} needs ({expected},)")
    out, pos = {}, 0
    for name, shape in segments:
        size = int(np.prod(shape))
        out[name] = theta[pos : pos + size].reshape(shape)
        pos += size
    return out


def save_theta(path, theta, model: str, dims: ModelDims, extra: dict | None = None) -> Path:
    """Write ``<path>`` as little-endian float64 and ``<path>.json`` as its header."""
    path = Path(path)
    theta = np.asarray(theta, dtype="<f8")
    if theta.shape != (theta_length(model, dims),):
        raise ValueError("theta length does not match model dimensions")
    path.write_bytes(theta.tobytes())
    header = {"model": normalize_model(model), "dims": asdict(dims), "length": int(theta.size)}
    if extra:
        header.update(extra)
    Path(f"{path}.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return path


def load_theta(path) -> tuple[np.ndarray, str, ModelDims, dict]:
    path = Path(path)
    header = json.loads(Path(f"{path}.json").read_text())
    theta = np.frombuffer(path.read_bytes(), dtype="<f8").astype(float)
    dims = ModelDims(**header["dims"])
    if theta.size != header["length"] or theta.size != theta_length(header["model"], dims):
        raise ValueError(f"{path}: genome length disagrees with its header")
    return theta, header["model"], dims, header
