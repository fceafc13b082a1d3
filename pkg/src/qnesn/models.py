"""End-to-end networks: reservoir -> readout input -> reduction -> readout.

The five variants differ in number system and output layer:

=========  ==========  ==========  ===================
tag        numbers     readout     trained by
=========  ==========  ==========  ===================
esn        real        linear      ridge regression
esn_ga     real        linear      genetic algorithm
nesn       real        bilinear    genetic algorithm
qesn       quaternion  linear      genetic algorithm
qnesn      quaternion  bilinear    genetic algorithm
=========  ==========  ==========  ===================

Utterances of equal length are stacked and pushed through the reservoir and
the readout together, which is what keeps a genetic search affordable.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .data import UtteranceSet
from .dimreduce import ProjectionBasis, fit_2dpca, fit_pca, project
from .metrics import classify, minmax_scale
from .readout import (
    BILINEAR_MODELS,
    QUATERNION_MODELS,
    BilinearCoeffs,
    LinearReadout,
    ModelDims,
    bilinear_filter,
    linear_filter,
    normalize_model,
    readout_input,
    theta_unpack,
)
from .reservoir import ReservoirWeights, run_sequence, scale_spectral_radius


def length_groups(utterances: UtteranceSet) -> list[tuple[np.ndarray, np.ndarray]]:
    """``(indices, stacked_inputs)`` for each distinct sequence length."""
    groups: dict[int, list[int]] = defaultdict(list)
    for i, u in enumerate(utterances):
        groups[u.inputs.shape[0]].append(i)
    return [
        (np.array(idx), np.stack([utterances.utterances[i].inputs for i in idx]))
        for _, idx in sorted(groups.items())
    ]


@dataclass
class Network:
    """A fully specified network; ``basis`` is fitted on training data when reduction is on."""

    model: str
    dims: ModelDims
    weights: ReservoirWeights
    readout: LinearReadout | BilinearCoeffs | None
    basis: ProjectionBasis | None = None

    @property
    def quaternion(self) -> bool:
        return self.model in QUATERNION_MODELS

    def readout_inputs(self, inputs: np.ndarray) -> np.ndarray:
        """Unreduced readout inputs ``(..., T, M[, 4])`` for stacked sequences."""
        states = run_sequence(self.weights, inputs)
        return readout_input(states, inputs, self.dims.structure, self.quaternion)

    def fit_basis(self, z_groups: list[np.ndarray]) -> ProjectionBasis | None:
        if self.dims.reduce_dim is None:
            self.basis = None
            return None
        if self.quaternion:
            samples = np.concatenate([np.swapaxes(z, -1, -2).reshape(-1, 4, z.shape[-2]) for z in z_groups])
            self.basis = fit_2dpca(samples, self.dims.reduce_dim)
        else:
            samples = np.concatenate([z.reshape(-1, z.shape[-1]) for z in z_groups])
            self.basis = fit_pca(samples, self.dims.reduce_dim)
        return self.basis

    def reduce(self, z: np.ndarray) -> np.ndarray:
        if self.dims.reduce_dim is None:
            return z
        if self.basis is None:
            raise RuntimeError("reduction basis has not been fitted")
        if self.quaternion:
            return np.swapaxes(project(self.basis, np.swapaxes(z, -1, -2)), -1, -2)
        return project(self.basis, z)

    def apply_readout(self, zr: np.ndarray) -> np.ndarray:
        if isinstance(self.readout, BilinearCoeffs):
            return bilinear_filter(self.readout, zr)
        if isinstance(self.readout, LinearReadout):
            return linear_filter(self.readout, zr)
        raise RuntimeError("readout has not been trained")

    def outputs(self, utterances: UtteranceSet, fit_basis: bool = False) -> list[np.ndarray]:
        """Per-utterance output sequences ``(T, N_y[, 4])`` in input order."""
        groups = length_groups(utterances)
        z_groups = [self.readout_inputs(x) for _, x in groups]
        if fit_basis:
            self.fit_basis(z_groups)
        result: list[np.ndarray] = [None] * len(utterances)  # type: ignore[list-item]
        for (idx, _), z in zip(groups, z_groups):
            y = self.apply_readout(self.reduce(z))
            for k, i in enumerate(idx):
                result[i] = y[k]
        return result

    def scores(self, utterances: UtteranceSet, fit_basis: bool = False) -> np.ndarray:
        """Window-averaged outputs per utterance, each min-max scaled as one matrix."""
        outs = self.outputs(utterances, fit_basis)
        means = np.stack([y.mean(axis=0) for y in outs])
        if self.quaternion:
            return minmax_scale(means)
        return minmax_scale(means[..., None])[..., 0]

    def predict(self, utterances: UtteranceSet, fit_basis: bool = False) -> np.ndarray:
        return np.asarray(classify(self.scores(utterances, fit_basis), quaternion=self.quaternion)).reshape(-1)


def network_from_theta(
    model: str,
    dims: ModelDims,
    theta,
    leaking_rate: float,
    spectral_radius: float,
) -> Network:
    """Decode a genome; the recurrent genes are rescaled to ``spectral_radius``."""
    model = normalize_model(model)
    parts = theta_unpack(model, dims, theta)
    mode = "quaternion" if model in QUATERNION_MODELS else "real"
    w = scale_spectral_radius(parts["w"], spectral_radius, mode)
    weights = ReservoirWeights(parts["w_in"], w, leaking_rate, mode)
    if model in BILINEAR_MODELS:
        readout = BilinearCoeffs(parts["a"], parts["b"], parts["c"])
    else:
        readout = LinearReadout(parts["w_out"])
    return Network(model, dims, weights, readout)
