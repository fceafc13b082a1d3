import logging
import math

import numpy as np
import pytest

from oracles import (
    bilinear_quat_loops,
    bilinear_real_loops,
    hamilton_expanded,
    leaky_step_literal,
    quat_matvec_loops,
    ridge_dense_inverse,
)
from qnesn.data import Utterance, UtteranceSet
from qnesn.models import network_from_theta
from qnesn.readout import ModelDims, theta_length, theta_pack, theta_unpack
from qnesn.reservoir import ReservoirParams, spectral_radius
from qnesn.trainer import (
    FoldObjective,
    GaAudit,
    GaConfig,
    SingularSystemError,
    fitness,
    ga_optimize,
    ridge_readout,
    train_ga,
    train_ridge,
)


def sphere(theta):
    return -float(np.sum(theta**2))


# --- genetic algorithm ----------------------------------------------------


def test_sphere_optimum_recovered():
    audit = GaAudit(-1.0, 1.0)
    theta, history = ga_optimize(sphere, 5, GaConfig(population_size=50, max_generations=100), callback=audit)
    assert abs(history[-1].best_fitness) < 1e-2
    assert history[-1].best_fitness == sphere(theta)
    assert audit.elitism_ok and audit.bounds_ok


def test_sphere_improves_for_every_seed():
    for seed in range(5):
        _, history = ga_optimize(sphere, 5, GaConfig(population_size=50, max_generations=100, seed=seed))
        assert history[-1].best_fitness > -0.1
        assert history[-1].best_fitness > history[0].best_fitness


def test_constant_objective_stops_on_tolerance():
    _, history = ga_optimize(lambda t: 1.0, 3, GaConfig(population_size=10, max_generations=500, stall_generations=20))
    assert {h.best_fitness for h in history} == {1.0}
    assert len(history) == 21


def test_same_seed_same_history():
    cfg = GaConfig(population_size=20, max_generations=15, seed=4)
    a = ga_optimize(sphere, 4, cfg)
    b = ga_optimize(sphere, 4, cfg)
    assert a[1] == b[1]
    assert np.array_equal(a[0], b[0])


def test_elitism_and_bounds_every_generation():
    rng = np.random.default_rng(0)
    target = rng.uniform(-1, 1, 6)
    seen = []

    def callback(gen, pop, fit):
        seen.append((pop.min(), pop.max(), fit.max(), len(pop)))

    ga_optimize(lambda t: -float(np.abs(t - target).sum()), 6, GaConfig(population_size=30, max_generations=40, lower=-0.5, upper=0.8), callback=callback)
    assert all(lo >= -0.5 and hi <= 0.8 and n == 30 for lo, hi, _, n in seen)
    best = [b for _, _, b, _ in seen]
    assert all(y >= x for x, y in zip(best, best[1:]))


def test_non_finite_fitness_is_worst(caplog):
    def objective(t):
        return float("nan") if t[0] > 0 else -float(np.sum(t**2))

    with caplog.at_level(logging.WARNING):
        theta, history = ga_optimize(objective, 3, GaConfig(population_size=20, max_generations=10))
    assert theta[0] <= 0
    assert all(math.isfinite(h.best_fitness) for h in history)
    assert "non-finite" in caplog.text


def test_time_budget_stops_early():
    _, history = ga_optimize(sphere, 3, GaConfig(population_size=10, max_generations=10_000, stall_generations=10_000, time_budget=0.0))
    assert len(history) <= 2


def test_initial_population_is_used():
    seed_pop = np.zeros((1, 4))
    theta, history = ga_optimize(sphere, 4, GaConfig(population_size=10, max_generations=3), initial_population=seed_pop)
    assert history[0].best_fitness == 0.0
    assert np.all(theta == 0)


def test_presets():
    cfg = GaConfig.paper_scale()
    assert cfg.population_size == 500
    assert cfg.generations_for(1234) == 123400
    assert (cfg.elite_fraction, cfg.crossover_fraction, cfg.mutation_rate, cfg.function_tolerance) == (0.05, 0.8, 0.01, 1e-6)
    desk = GaConfig()
    assert (desk.population_size, desk.generations_for(10**6)) == (50, 200)
    assert desk.lower == -1.0 and desk.upper == 1.0
    for bad in ({"population_size": 1}, {"mutation_rate": 1.5}, {"lower": 1.0}, {"tie_break": -1.0}):
        with pytest.raises(ValueError):
            GaConfig(**bad)


def test_cost_view():
    _, history = ga_optimize(lambda t: 0.75, 2, GaConfig(population_size=4, max_generations=1))
    assert history[0].best_cost == 0.25


# --- fitness --------------------------------------------------------------


def one_hot_fold(labels, n_classes=3, T=4):
    """Utterances whose input feature ``label`` is 1 and others 0, at every step."""
    utts = []
    for i, lab in enumerate(labels):
        u = np.zeros((T, n_classes))
        u[:, lab] = 1.0
        utts.append(Utterance(u, lab, f"s{i % 2}", f"u{i}"))
    return UtteranceSet(utts, [f"c{k}" for k in range(n_classes)])


def selector_theta(dims):
    # Silent reservoir; the readout copies the input block, so output k = feature k.
    w_out = np.zeros((dims.n_outputs, dims.full_width))
    w_out[:, dims.n_units : dims.n_units + dims.n_inputs] = np.eye(dims.n_inputs)
    params = {"w_in": np.zeros((dims.n_units, dims.n_inputs + 1)), "w": np.zeros((dims.n_units, dims.n_units)), "w_out": w_out}
    return theta_pack("esn_ga", dims, params)


def test_perfect_and_adversarial_fitness():
    fold = one_hot_fold([0, 1, 2, 1, 0, 2])
    dims = ModelDims(2, 3, 3)
    theta = selector_theta(dims)
    assert fitness(theta, "esn_ga", dims, fold, 0.9, 0.1) == 1.0
    shifted = UtteranceSet([Utterance(u.inputs, (u.label + 1) % 3, u.speaker_id) for u in fold], fold.class_names)
    assert fitness(theta, "esn_ga", dims, shifted, 0.9, 0.1) == 0.0


def test_fitness_rejects_wrong_length():
    fold = one_hot_fold([0, 1])
    with pytest.raises(ValueError, match="does not match"):
        fitness(np.zeros(5), "esn_ga", ModelDims(2, 3, 3), fold, 0.9, 0.1)


def test_fitness_is_repeatable(rng):
    fold = one_hot_fold([0, 1, 2, 2])
    dims = ModelDims(3, 3, 3, 4)
    theta = rng.uniform(-1, 1, theta_length("nesn", dims))
    assert fitness(theta, "nesn", dims, fold, 0.9, 0.1) == fitness(theta, "nesn", dims, fold, 0.9, 0.1)


def test_tie_break_only_reorders_equal_accuracy(rng):
    fold = one_hot_fold([0, 1, 2, 2, 1])
    dims = ModelDims(3, 3, 3)
    theta = rng.uniform(-1, 1, theta_length("esn_ga", dims))
    plain = fitness(theta, "esn_ga", dims, fold, 0.9, 0.1)
    tb = 1e-3
    assert plain <= fitness(theta, "esn_ga", dims, fold, 0.9, 0.1, tie_break=tb) <= plain + tb
    assert tb < 1 / len(fold)


def _rescale_oracle(w, sr):
    return w * (sr / np.max(np.abs(np.linalg.eigvals(w))))


def _quat_adjoint(m):
    # Column j of the real block of q is q ⊗ e_j.
    r, c = m.shape[:2]
    out = np.zeros((4 * r, 4 * c))
    basis = np.eye(4)
    for i in range(r):
        for j in range(c):
            for k in range(4):
                out[4 * i : 4 * i + 4, 4 * j + k] = hamilton_expanded(m[i, j], basis[k])
    return out


def test_real_bilinear_fitness_manual_trace(rng):
    labels = [0, 1, 1, 0]
    utts = [Utterance(rng.normal(size=(5, 2)), lab, "s", f"u{i}") for i, lab in enumerate(labels)]
    fold = UtteranceSet(utts, ["a", "b"])
    dims = ModelDims(2, 2, 2, None, 3)
    theta = rng.uniform(-1, 1, theta_length("nesn", dims))
    p = theta_unpack("nesn", dims, theta)
    lr, sr = 0.9, 0.1
    w = _rescale_oracle(p["w"], sr)
    correct = 0
    for utt in utts:
        x = np.zeros(2)
        z = []
        for t in range(5):
            x = leaky_step_literal(p["w_in"], w, x, np.append(utt.inputs[t], 1.0), lr)
            z.append(np.concatenate([x, utt.inputs[t], [1.0]]))
        y = bilinear_real_loops(p["a"], p["b"], p["c"], np.array(z))
        mean = y.mean(axis=0)
        scaled = (mean - mean.min()) / (mean.max() - mean.min())
        correct += int(np.argmax(scaled) == utt.label)
    assert fitness(theta, "nesn", dims, fold, lr, sr) == correct / 4


def test_quaternion_bilinear_fitness_manual_trace(rng):
    labels = [0, 1, 2, 1]
    utts = [Utterance(rng.normal(size=(4, 1, 4)), lab, "s", f"u{i}") for i, lab in enumerate(labels)]
    fold = UtteranceSet(utts, ["a", "b", "c"])
    dims = ModelDims(2, 1, 3, None, 2)
    theta = rng.uniform(-1, 1, theta_length("qnesn", dims))
    p = theta_unpack("qnesn", dims, theta)
    lr, sr = 0.9, 0.1
    adj = _quat_adjoint(p["w"])
    w = p["w"] * (sr / np.max(np.abs(np.linalg.eigvals(adj))))
    bias = np.array([[1.0, 0, 0, 0]])
    targets = np.zeros((3, 3, 4))
    for n in range(3):
        targets[n, n] = 1.0
    correct = 0
    for utt in utts:
        x = np.zeros((2, 4))
        z = []
        for t in range(4):
            u = np.vstack([utt.inputs[t], bias])
            x = (1 - lr) * x + lr * np.tanh(quat_matvec_loops(p["w_in"], u) + quat_matvec_loops(w, x))
            z.append(np.vstack([x, utt.inputs[t], bias]))
        y = bilinear_quat_loops(p["a"], p["b"], p["c"], np.array(z))
        mean = y.mean(axis=0)
        scaled = (mean - mean.min()) / (mean.max() - mean.min())
        errors = [0.5 * np.sum((targets[n] - scaled) ** 2) for n in range(3)]
        correct += int(np.argmin(errors) == utt.label)
    assert fitness(theta, "qnesn", dims, fold, lr, sr) == correct / 4


def test_recurrent_genes_rescaled(rng):
    dims = ModelDims(4, 2, 2, None, 3)
    for model in ("nesn", "qnesn"):
        theta = rng.uniform(-1, 1, theta_length(model, dims))
        net = network_from_theta(model, dims, theta, 0.9, 0.1)
        mode = "quaternion" if model == "qnesn" else "real"
        assert abs(spectral_radius(net.weights.w, mode) - 0.1) < 1e-10


def test_objective_rejects_ridge_model():
    with pytest.raises(ValueError):
        FoldObjective("esn", ModelDims(2, 1, 1), one_hot_fold([0]), 0.9, 0.1)


def test_train_ga_small_fold():
    fold = one_hot_fold([0, 1, 2, 0, 1, 2])
    dims = ModelDims(2, 3, 3)
    params = ReservoirParams(2, 3)
    net, theta, history = train_ga("esn_ga", dims, params, GaConfig(population_size=20, max_generations=30, tie_break=0.0), fold)
    assert history[-1].best_fitness == np.mean(net.predict(fold) == fold.labels)
    assert theta.shape == (theta_length("esn_ga", dims),)


# --- ridge baseline -------------------------------------------------------


@pytest.mark.parametrize("c", [0.0, 100.0])
def test_ridge_matches_dense_inverse(rng, c):
    z = rng.normal(size=(40, 6))
    t = rng.normal(size=(40, 3))
    w = ridge_readout(z, t, c).w_out
    np.testing.assert_allclose(w, ridge_dense_inverse(z, t, c), atol=1e-8)


def test_ridge_exact_fit_without_regularisation(rng):
    z = rng.normal(size=(20, 4))
    w_true = rng.normal(size=(2, 4))
    w = ridge_readout(z, z @ w_true.T, 0.0).w_out
    assert np.max(np.abs(z @ w.T - z @ w_true.T)) < 1e-8


def test_ridge_shrinks_to_zero(rng):
    z, t = rng.normal(size=(30, 5)), rng.normal(size=(30, 2))
    assert np.max(np.abs(ridge_readout(z, t, 1e8).w_out)) < 1e-5


def test_ridge_singular_system(rng):
    z = rng.normal(size=(10, 3))
    z = np.hstack([z, z[:, :1]])
    with pytest.raises(SingularSystemError, match="C > 0"):
        ridge_readout(z, rng.normal(size=(10, 2)), 0.0)
    ridge_readout(z, rng.normal(size=(10, 2)), 1.0)
    with pytest.raises(ValueError):
        ridge_readout(z, rng.normal(size=(9, 2)), 1.0)


def test_ridge_baseline_learns_separable_fold():
    fold = one_hot_fold([0, 1, 2, 0, 1, 2], T=6)
    dims = ModelDims(5, 3, 3)
    net = train_ridge(dims, ReservoirParams(5, 3, ridge_c=1e-3), fold)
    assert np.all(net.predict(fold) == fold.labels)
    with pytest.raises(ValueError):
        train_ridge(dims, ReservoirParams(5, 3, mode="quaternion"), fold)
