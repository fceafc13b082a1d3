"""Leaky-tanh reservoirs over real numbers or quaternions.

Quaternion reservoirs are evaluated through their real-adjoint matrices, so
both modes share one update loop.  States are kept flat: a quaternion state
with ``n_units`` entries is a real vector of length ``4 * n_units`` laid out
unit by unit as ``(a, b, c, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .quaternion import to_real_matrix

Mode = Literal["real", "quaternion"]


@dataclass(frozen=True)
class ReservoirParams:
    """Reservoir hyperparameters.

    Defaults: IS=0.5, SR=0.1, LR=0.9, C=100.
    """

    n_units: int
    n_inputs: int
    input_scaling: float = 0.5
    spectral_radius: float = 0.1
    leaking_rate: float = 0.9
    ridge_c: float = 100.0
    mode: Mode = "real"
    seed: int = 0
    density: float = 1.0

    def __post_init__(self):
        if self.n_units < 1 or self.n_inputs < 1:
            raise ValueError("n_units and n_inputs must be positive")
        if not 0.0 <= self.spectral_radius < 1.0:
            raise ValueError(
                f"spectral_radius must be < 1 for the echo state property, got {self.spectral_radius}"
            )
        if not 0.0 <= self.leaking_rate <= 1.0:
            raise ValueError(f"leaking_rate must lie in [0, 1], got {self.leaking_rate}")
        if self.input_scaling < 0:
            raise ValueError("input_scaling must be nonnegative")
        if self.ridge_c < 0:
            raise ValueError("ridge_c must be nonnegative")
        if self.mode not in ("real", "quaternion"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")

    @property
    def width(self) -> int:
        """Reals per unit: 1 in real mode, 4 in quaternion mode."""
        return 4 if self.mode == "quaternion" else 1


@dataclass(frozen=True)
class ReservoirWeights:
    """Input and recurrent weights.

    ``w_in`` has ``n_inputs + 1`` columns, the last one feeding the constant
    bias input.  In quaternion mode both matrices carry a trailing axis of 4.
    """

    w_in: np.ndarray
    w: np.ndarray
    leaking_rate: float
    mode: Mode = "real"
    w_in_real: np.ndarray = field(init=False, repr=False)
    w_real: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w_in = np.asarray(self.w_in, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if self.mode == "quaternion":
            if w_in.ndim != 3 or w.ndim != 3:
                raise ValueError("quaternion weights need shape (rows, cols, 4)")
            w_in_real, w_real = to_real_matrix(w_in), to_real_matrix(w)
        else:
            if w_in.ndim != 2 or w.ndim != 2:
                raise ValueError("real weights must be 2-D")
            w_in_real, w_real = w_in, w
        if w.shape[0] != w.shape[1] or w_in.shape[0] != w.shape[0]:
            raise ValueError(f"inconsistent weight shapes: w_in {w_in.shape}, w {w.shape}")
        object.__setattr__(self, "w_in", w_in)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "w_in_real", w_in_real)
        object.__setattr__(self, "w_real", w_real)

    @property
    def n_units(self) -> int:
        return self.w.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.w_in.shape[1] - 1

    @property
    def state_size(self) -> int:
        return self.w_real.shape[0]


def spectral_radius(w, mode: Mode = "real") -> float:
    """Largest eigenvalue magnitude; quaternion matrices use their real adjoint."""
    m = to_real_matrix(w) if mode == "quaternion" else np.asarray(w, dtype=float)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def scale_spectral_radius(w, target: float, mode: Mode = "real") -> np.ndarray:
    """Rescale ``w`` so its spectral radius equals ``target``.

    A nilpotent or zero matrix has no direction to rescale and is returned
    scaled to zero only when ``target`` is zero.
    """
    w = np.asarray(w, dtype=float)
    rho = spectral_radius(w, mode)
    if rho < 1e-12:
        return w * 0.0 if target == 0 else w.copy()
    return w * (target / rho)


def init_weights(params: ReservoirParams) -> ReservoirWeights:
    """Draw ``w_in ~ U(-IS, IS)`` and a uniform ``w`` rescaled to the target spectral radius."""
    rng = np.random.default_rng(params.seed)
    q = (4,) if params.mode == "quaternion" else ()
    n = params.n_units
    w_in = rng.uniform(-1.0, 1.0, size=(n, params.n_inputs + 1) + q) * params.input_scaling
    w = rng.uniform(-1.0, 1.0, size=(n, n) + q)
    if params.density < 1.0:
        mask = rng.random((n, n)) < params.density
        w = w * (mask[..., None] if q else mask)
    w = scale_spectral_radius(w, params.spectral_radius, params.mode)
    return ReservoirWeights(w_in=w_in, w=w, leaking_rate=params.leaking_rate, mode=params.mode)


def _bias(mode: Mode) -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0]) if mode == "quaternion" else np.array([1.0])


def append_bias(u, mode: Mode = "real") -> np.ndarray:
    """Append the constant bias input along the unit axis.

    Real inputs have shape ``(..., n_inputs)``; quaternion inputs
    ``(..., n_inputs, 4)``.
    """
    u = np.asarray(u, dtype=float)
    if mode == "quaternion":
        bias = np.broadcast_to(_bias(mode), u.shape[:-2] + (1, 4))
        return np.concatenate([u, bias], axis=-2)
    bias = np.ones(u.shape[:-1] + (1,))
    return np.concatenate([u, bias], axis=-1)


def step(weights: ReservoirWeights, x_prev, u) -> np.ndarray:
    """One leaky update ``(1 - LR) x + LR tanh(W_in u + W x)``.

    ``u`` must already include the bias element.  Shapes follow the mode:
    real ``x_prev (n_units,)``, ``u (n_inputs + 1,)``; quaternion
    ``x_prev (n_units, 4)``, ``u (n_inputs + 1, 4)``.  Leading batch axes are
    allowed.
    """
    x_prev = np.asarray(x_prev, dtype=float)
    u = np.asarray(u, dtype=float)
    quat = weights.mode == "quaternion"
    x_shape = (weights.n_units, 4) if quat else (weights.n_units,)
    u_shape = (weights.n_inputs + 1, 4) if quat else (weights.n_inputs + 1,)
    nd = len(x_shape)
    if x_prev.shape[x_prev.ndim - nd:] != x_shape or u.shape[u.ndim - nd:] != u_shape:
        raise ValueError(
            f"dimension mismatch: expected state {x_shape} and input {u_shape}, "
            f"got {x_prev.shape} and {u.shape}"
        )
    lead = np.broadcast_shapes(x_prev.shape[: x_prev.ndim - nd], u.shape[: u.ndim - nd])
    xf = x_prev.reshape(x_prev.shape[: x_prev.ndim - nd] + (-1,))
    uf = u.reshape(u.shape[: u.ndim - nd] + (-1,))
    out = _update(weights, xf, uf)
    return out.reshape(lead + x_shape)


def _update(weights: ReservoirWeights, xf: np.ndarray, uf: np.ndarray) -> np.ndarray:
    lr = weights.leaking_rate
    pre = uf @ weights.w_in_real.T + xf @ weights.w_real.T
    return (1.0 - lr) * xf + lr * np.tanh(pre)


def run_sequence(weights: ReservoirWeights, inputs, x0=None) -> np.ndarray:
    """Drive the reservoir with an input sequence starting from ``x0`` (zeros by default).

    ``inputs`` has shape ``(T, n_inputs)`` (real) or ``(T, n_inputs, 4)``
    (quaternion), without the bias column; a leading batch axis is allowed,
    in which case all sequences share ``T``.  Returns states with shape
    ``(..., T, n_units[, 4])``, where entry ``t`` is the state after
    consuming input ``t``.
    """
    quat = weights.mode == "quaternion"
    u = np.asarray(inputs, dtype=float)
    nd = 2 if quat else 1
    if u.ndim < nd + 1 or u.shape[-nd - 1] == 0:
        raise ValueError("input sequence must be non-empty")
    ub = append_bias(u, weights.mode)
    if ub.shape[-nd] != weights.n_inputs + 1:
        raise ValueError(
            f"dimension mismatch: reservoir expects {weights.n_inputs} inputs, got {u.shape[-nd]}"
        )
    lead = ub.shape[: ub.ndim - nd - 1]
    T = ub.shape[-nd - 1]
    uf = ub.reshape(lead + (T, -1))
    # Input drive for every step at once; only the recurrent part is sequential.
    drive = uf @ weights.w_in_real.T
    if x0 is None:
        x = np.zeros(lead + (weights.state_size,))
    else:
        x0 = np.asarray(x0, dtype=float)
        x0f = x0.reshape(x0.shape[: x0.ndim - nd] + (-1,))
        x = np.broadcast_to(x0f, lead + (weights.state_size,)).copy()
    lr = weights.leaking_rate
    w_t = weights.w_real.T
    states = np.empty(lead + (T, weights.state_size))
    for t in range(T):
        x = (1.0 - lr) * x + lr * np.tanh(drive[..., t, :] + x @ w_t)
        states[..., t, :] = x
    shape = lead + (T, weights.n_units) + ((4,) if quat else ())
    return states.reshape(shape)
