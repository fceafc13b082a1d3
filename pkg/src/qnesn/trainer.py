"""Genetic-algorithm search over genomes, the accuracy objective and the ridge baseline."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .data import UtteranceSet
from .metrics import classify, true_class_probability
from .models import Network, length_groups, network_from_theta
from .readout import GA_MODELS, LinearReadout, ModelDims, normalize_model, theta_length
from .reservoir import ReservoirParams, init_weights

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaConfig:
    """Genetic algorithm settings.

    Defaults are the desk-scale preset; :meth:`paper_scale` returns the
    full-size preset (500 individuals, ``100 * n_vars`` generations).
    ``max_generations=None`` means ``100 * n_vars``.

    ``tie_break`` weights a smooth term added to training accuracy so that
    genomes with equal accuracy are still ranked; see :func:`fitness`.
    """

    population_size: int = 50
    elite_fraction: float = 0.05
    crossover_fraction: float = 0.8
    mutation_rate: float = 0.01
    max_generations: int | None = 200
    stall_generations: int = 50
    function_tolerance: float = 1e-6
    lower: float = -1.0
    upper: float = 1.0
    time_budget: float | None = None
    seed: int = 0
    tie_break: float = 1e-3

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        for name in ("elite_fraction", "crossover_fraction", "mutation_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.lower >= self.upper:
            raise ValueError("lower bound must be below upper bound")
        if self.max_generations is not None and self.max_generations < 1:
            raise ValueError("max_generations must be positive")
        if self.stall_generations < 1:
            raise ValueError("stall_generations must be positive")
        if self.tie_break < 0:
            raise ValueError("tie_break must be nonnegative")

    @classmethod
    def paper_scale(cls, **overrides) -> "GaConfig":
        return replace(cls(population_size=500, max_generations=None), **overrides)

    def generations_for(self, n_vars: int) -> int:
        return self.max_generations if self.max_generations is not None else 100 * n_vars


@dataclass(frozen=True)
class FitnessRecord:
    generation: int
    best_fitness: float
    mean_fitness: float

    @property
    def best_cost(self) -> float:
        """``1 - fitness``; the quantity a minimizing plot would show."""
        return 1.0 - self.best_fitness


def _rank_expectation(fitness: np.ndarray) -> np.ndarray:
    # Rank scaling: the r-th best individual gets weight 1/sqrt(r).
    order = np.argsort(-fitness, kind="stable")
    ranks = np.empty(len(fitness))
    ranks[order] = np.arange(1, len(fitness) + 1)
    raw = 1.0 / np.sqrt(ranks)
    return raw * len(fitness) / raw.sum()


def _stochastic_uniform(expectation: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Stochastic universal sampling: ``n`` evenly spaced pointers on the expectation wheel."""
    if n == 0:
        return np.zeros(0, dtype=int)
    wheel = np.cumsum(expectation) / expectation.sum()
    step = 1.0 / n
    pointers = rng.uniform(0.0, step) + step * np.arange(n)
    return np.minimum(np.searchsorted(wheel, pointers, side="right"), len(expectation) - 1)


def _evaluate(objective, pop: np.ndarray, map_fn) -> np.ndarray:
    values = np.array(list(map_fn(objective, list(pop))), dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        log.warning("%d candidate(s) returned non-finite fitness; assigned worst fitness", int(bad.sum()))
        values[bad] = -np.inf
    return values


def ga_optimize(
    objective: Callable[[np.ndarray], float],
    n_vars: int,
    cfg: GaConfig = GaConfig(),
    map_fn: Callable = map,
    callback: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
    initial_population: np.ndarray | None = None,
) -> tuple[np.ndarray, list[FitnessRecord]]:
    """Maximize ``objective`` over the box ``[lower, upper] ** n_vars``.

    Each generation keeps the top ``ceil(elite_fraction * pop)`` individuals,
    fills ``crossover_fraction`` of the rest with scattered crossover children
    and the remainder with uniformly mutated copies; parents are drawn by
    stochastic uniform selection on rank-scaled fitness.  The search stops at
    ``max_generations``, when the best fitness improved by at most
    ``function_tolerance`` over the last ``stall_generations`` generations, or
    when ``time_budget`` seconds have elapsed.

    ``map_fn`` evaluates candidates and may be an executor's ``map``.
    ``callback(generation, population, fitness)`` sees every generation.
    """
    if n_vars < 1:
        raise ValueError("n_vars must be at least 1")
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.lower, cfg.upper
    size = cfg.population_size
    if initial_population is not None:
        pop = np.clip(np.asarray(initial_population, dtype=float).reshape(-1, n_vars)[:size], lo, hi)
        if len(pop) < size:
            pop = np.vstack([pop, rng.uniform(lo, hi, (size - len(pop), n_vars))])
    else:
        pop = rng.uniform(lo, hi, (size, n_vars))
    fit = _evaluate(objective, pop, map_fn)
    n_elite = min(size, math.ceil(cfg.elite_fraction * size))
    n_xover = int(round(cfg.crossover_fraction * (size - n_elite)))
    n_mut = size - n_elite - n_xover
    max_gen = cfg.generations_for(n_vars)
    start = time.monotonic()
    history: list[FitnessRecord] = []

    for gen in range(max_gen + 1):
        finite = fit[np.isfinite(fit)]
        best = float(fit.max())
        history.append(FitnessRecord(gen, best, float(finite.mean()) if finite.size else -math.inf))
        if callback is not None:
            callback(gen, pop, fit)
        if gen == max_gen:
            break
        if gen >= cfg.stall_generations:
            old = history[gen - cfg.stall_generations].best_fitness
            if best - old <= cfg.function_tolerance * max(1.0, abs(best)):
                log.info("stopping at generation %d: best fitness stalled", gen)
                break
        if cfg.time_budget is not None and time.monotonic() - start > cfg.time_budget:
            log.info("stopping at generation %d: time budget exhausted", gen)
            break

        order = np.argsort(-fit, kind="stable")
        elite = pop[order[:n_elite]]
        elite_fit = fit[order[:n_elite]]
        parents = _stochastic_uniform(_rank_expectation(fit), 2 * n_xover + n_mut, rng)
        parents = rng.permutation(parents)
        p1 = pop[parents[:n_xover]]
        p2 = pop[parents[n_xover : 2 * n_xover]]
        mask = rng.random((n_xover, n_vars)) < 0.5
        xover = np.where(mask, p1, p2)
        mutants = pop[parents[2 * n_xover :]].copy()
        hit = rng.random(mutants.shape) < cfg.mutation_rate
        mutants[hit] = rng.uniform(lo, hi, int(hit.sum()))
        kids = np.vstack([xover, mutants])
        kid_fit = _evaluate(objective, kids, map_fn) if len(kids) else np.zeros(0)
        pop = np.vstack([elite, kids])
        fit = np.concatenate([elite_fit, kid_fit])

    best_idx = int(np.argmax(fit))
    return pop[best_idx].copy(), history


class GaAudit:
    """Generation callback that checks elitism and bounds.

    ``elitism_ok`` stays true while the best fitness never decreases;
    ``bounds_ok`` while every gene stays inside ``[lower, upper]``.
    """

    def __init__(self, lower: float, upper: float):
        self.lower, self.upper = lower, upper
        self.best: list[float] = []
        self.elitism_ok = True
        self.bounds_ok = True

    def __call__(self, generation: int, population: np.ndarray, fitness: np.ndarray) -> None:
        best = float(np.max(fitness))
        if self.best and best < self.best[-1]:
            self.elitism_ok = False
        self.best.append(best)
        if population.min() < self.lower or population.max() > self.upper:
            self.bounds_ok = False


# --- objective ------------------------------------------------------------


@dataclass
class FoldObjective:
    """Training accuracy of the network a genome decodes to.

    Picklable, so it can be shipped to worker processes.
    """

    model: str
    dims: ModelDims
    train: UtteranceSet
    leaking_rate: float
    spectral_radius: float
    tie_break: float = 0.0

    def __post_init__(self):
        self.model = normalize_model(self.model)
        if self.model not in GA_MODELS:
            raise ValueError(f"{self.model} is not trained by the genetic algorithm")
        self._labels = self.train.labels

    @property
    def n_vars(self) -> int:
        return theta_length(self.model, self.dims)

    def network(self, theta) -> Network:
        net = network_from_theta(self.model, self.dims, theta, self.leaking_rate, self.spectral_radius)
        net.outputs(self.train, fit_basis=True)
        return net

    def __call__(self, theta) -> float:
        return fitness(
            theta, self.model, self.dims, self.train, self.leaking_rate, self.spectral_radius, self.tie_break
        )


def fitness(
    theta,
    model: str,
    dims: ModelDims,
    train: UtteranceSet,
    leaking_rate: float,
    spectral_radius: float,
    tie_break: float = 0.0,
) -> float:
    """Fraction of ``train`` utterances the decoded network classifies correctly.

    With ``tie_break > 0`` the mean softmax probability of the true class is
    added with that weight.  Keep it below ``1 / len(train)`` so one extra
    correct utterance always outranks any gain in the smooth term; accuracy
    alone is piecewise constant and leaves the search with nothing to climb.

    The reduction basis is refitted on ``train`` for every genome, since the
    reservoir states depend on it.
    """
    theta = np.asarray(theta, dtype=float)
    expected = theta_length(model, dims)
    if theta.shape != (expected,):
        raise ValueError(f"theta length {theta.size} does not match {model} dims ({expected})")
    net = network_from_theta(model, dims, theta, leaking_rate, spectral_radius)
    scores = net.scores(train, fit_basis=True)
    labels = train.labels
    acc = float(np.mean(classify(scores, net.quaternion) == labels))
    if tie_break == 0.0:
        return acc
    return acc + tie_break * float(np.mean(true_class_probability(scores, labels, net.quaternion)))


def train_ga(
    model: str,
    dims: ModelDims,
    params: ReservoirParams,
    ga: GaConfig,
    train: UtteranceSet,
    map_fn: Callable = map,
    callback=None,
) -> tuple[Network, np.ndarray, list[FitnessRecord]]:
    """Search a genome on ``train``; returns the network with its basis fitted on ``train``."""
    obj = FoldObjective(model, dims, train, params.leaking_rate, params.spectral_radius, ga.tie_break)
    theta, history = ga_optimize(obj, obj.n_vars, ga, map_fn=map_fn, callback=callback)
    return obj.network(theta), theta, history


# --- ridge baseline -------------------------------------------------------


class SingularSystemError(np.linalg.LinAlgError):
    pass


def ridge_readout(inputs, targets, c: float) -> LinearReadout:
    """Closed-form ridge readout ``W = T Z^T (Z Z^T + c I)^-1``.

    ``inputs`` holds one readout input per row ``(n, M)`` and ``targets``
    one target per row ``(n, N_y)``.
    """
    z = np.asarray(inputs, dtype=float)
    t = np.asarray(targets, dtype=float)
    if z.ndim != 2 or t.ndim != 2 or z.shape[0] != t.shape[0]:
        raise ValueError(f"shape mismatch: inputs {z.shape}, targets {t.shape}")
    if c < 0:
        raise ValueError("regularization coefficient must be nonnegative")
    gram = z.T @ z
    if c == 0 and np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise SingularSystemError(
            "Z Z^T is singular; use a regularization coefficient C > 0"
        )
    gram = gram + c * np.eye(gram.shape[0])
    try:
        w_t = np.linalg.solve(gram, z.T @ t)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"{exc}; use a regularization coefficient C > 0") from None
    return LinearReadout(w_t.T)


def train_ridge(
    dims: ModelDims,
    params: ReservoirParams,
    train: UtteranceSet,
) -> Network:
    """Fixed random reservoir with a ridge readout fitted on frame-level one-hot targets."""
    if params.mode != "real":
        raise ValueError("the ridge baseline is real-valued")
    net = Network("esn", dims, init_weights(params), None)
    groups = length_groups(train)
    z_groups = [net.readout_inputs(x) for _, x in groups]
    net.fit_basis(z_groups)
    rows, targets = [], []
    labels = train.labels
    for (idx, _), z in zip(groups, z_groups):
        zr = net.reduce(z)  # (B, T, M)
        rows.append(zr.reshape(-1, zr.shape[-1]))
        onehot = np.eye(dims.n_outputs)[labels[idx]]
        targets.append(np.repeat(onehot, zr.shape[1], axis=0))
    net.readout = ridge_readout(np.concatenate(rows), np.concatenate(targets), params.ridge_c)
    return net

