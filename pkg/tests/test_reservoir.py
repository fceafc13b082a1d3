import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import leaky_step_literal, quat_matvec_loops
from qnesn.reservoir import (
    ReservoirParams,
    ReservoirWeights,
    append_bias,
    init_weights,
    run_sequence,
    scale_spectral_radius,
    spectral_radius,
    step,
)


def real_weights(rng, n=5, n_in=3, lr=0.9, sr=0.5):
    w = scale_spectral_radius(rng.uniform(-1, 1, (n, n)), sr)
    return ReservoirWeights(rng.uniform(-0.5, 0.5, (n, n_in + 1)), w, lr)


def test_zero_input_scaling_gives_zero_input_weights():
    w = init_weights(ReservoirParams(6, 3, input_scaling=0.0, seed=3))
    assert np.all(w.w_in == 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 0.99))
def test_spectral_radius_hits_target(seed, sr):
    w = init_weights(ReservoirParams(12, 2, spectral_radius=sr, seed=seed))
    assert abs(spectral_radius(w.w) - sr) < 1e-8


def test_quaternion_radius_uses_real_adjoint():
    w = init_weights(ReservoirParams(5, 2, spectral_radius=0.3, mode="quaternion", seed=1))
    assert w.w.shape == (5, 5, 4)
    assert w.w_real.shape == (20, 20)
    assert abs(np.max(np.abs(np.linalg.eigvals(w.w_real))) - 0.3) < 1e-8


def test_default_hyperparameters_accepted():
    p = ReservoirParams(25, 10)
    assert (p.input_scaling, p.spectral_radius, p.leaking_rate, p.ridge_c) == (0.5, 0.1, 0.9, 100.0)
    w = init_weights(p)
    assert np.all(np.abs(w.w_in) <= 0.5)
    assert w.w_in.shape == (25, 11)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"spectral_radius": 1.0},
        {"spectral_radius": 1.5},
        {"leaking_rate": 1.2},
        {"leaking_rate": -0.1},
        {"ridge_c": -1.0},
        {"mode": "complex"},
        {"density": 0.0},
    ],
)
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        ReservoirParams(4, 2, **kwargs)


def test_init_is_deterministic():
    p = ReservoirParams(7, 3, seed=11, mode="quaternion")
    a, b = init_weights(p), init_weights(p)
    assert np.array_equal(a.w_in, b.w_in) and np.array_equal(a.w, b.w)


def test_density_masks_recurrent_weights():
    w = init_weights(ReservoirParams(40, 2, density=0.2, seed=0))
    frac = np.mean(w.w != 0)
    assert 0.1 < frac < 0.3


def test_append_bias():
    np.testing.assert_array_equal(append_bias([2.0, 3.0]), [2.0, 3.0, 1.0])
    q = append_bias(np.zeros((2, 4)), "quaternion")
    np.testing.assert_array_equal(q[-1], [1, 0, 0, 0])


def test_step_without_leak_keeps_state(rng):
    w = real_weights(rng, lr=0.0)
    x = rng.normal(size=5)
    np.testing.assert_array_equal(step(w, x, rng.normal(size=4)), x)


def test_step_zero_in_zero_out(rng):
    w = real_weights(rng)
    np.testing.assert_array_equal(step(w, np.zeros(5), np.zeros(4)), np.zeros(5))


@pytest.mark.parametrize("lr", [1.0, 0.9, 0.3])
def test_step_matches_literal_formula(rng, lr):
    w = real_weights(rng, lr=lr)
    x, u = rng.normal(size=5), rng.normal(size=4)
    np.testing.assert_allclose(step(w, x, u), leaky_step_literal(w.w_in, w.w, x, u, lr), atol=1e-13)


def test_quaternion_step_matches_expansion(rng):
    w_in, w = rng.normal(size=(3, 3, 4)) * 0.3, rng.normal(size=(3, 3, 4)) * 0.2
    weights = ReservoirWeights(w_in, w, 0.7, "quaternion")
    x, u = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    pre = quat_matvec_loops(w_in, u) + quat_matvec_loops(w, x)
    expected = 0.3 * x + 0.7 * np.tanh(pre)
    np.testing.assert_allclose(step(weights, x, u), expected, atol=1e-12)


def test_step_shape_mismatch(rng):
    w = real_weights(rng)
    with pytest.raises(ValueError, match="mismatch"):
        step(w, np.zeros(4), np.zeros(4))
    with pytest.raises(ValueError, match="mismatch"):
        step(w, np.zeros(5), np.zeros(3))


def test_single_step_sequence(rng):
    w = real_weights(rng)
    u = rng.normal(size=(1, 3))
    np.testing.assert_allclose(run_sequence(w, u)[0], step(w, np.zeros(5), append_bias(u[0])), atol=1e-15)


def test_constant_input_without_recurrence(rng):
    w_in = rng.uniform(-0.5, 0.5, (4, 3))
    w = ReservoirWeights(w_in, np.zeros((4, 4)), 1.0)
    u = np.tile([0.3, -0.2], (6, 1))
    states = run_sequence(w, u)
    expected = np.tanh(w_in @ np.array([0.3, -0.2, 1.0]))
    np.testing.assert_allclose(states, np.tile(expected, (6, 1)), atol=1e-15)


def test_sequence_matches_repeated_literal_steps(rng):
    w = real_weights(rng, lr=0.6)
    u = rng.normal(size=(8, 3))
    x = np.zeros(5)
    states = run_sequence(w, u)
    for t in range(8):
        x = leaky_step_literal(w.w_in, w.w, x, np.append(u[t], 1.0), 0.6)
        np.testing.assert_allclose(states[t], x, atol=1e-12)


def test_batched_sequences_match_single(rng):
    w = init_weights(ReservoirParams(4, 2, mode="quaternion", seed=2))
    u = rng.normal(size=(3, 7, 2, 4))
    batched = run_sequence(w, u)
    for i in range(3):
        np.testing.assert_allclose(batched[i], run_sequence(w, u[i]), atol=1e-14)


def test_echo_states_forget_initial_condition(rng):
    w = init_weights(ReservoirParams(20, 3, seed=4))
    u = rng.normal(size=(200, 3))
    a = run_sequence(w, u, x0=rng.uniform(-1, 1, 20))
    b = run_sequence(w, u, x0=rng.uniform(-1, 1, 20))
    assert np.linalg.norm(a[-1] - b[-1]) < 1e-6


def test_states_bounded_without_leak(rng):
    w = init_weights(ReservoirParams(10, 3, leaking_rate=1.0, input_scaling=5.0, spectral_radius=0.9, seed=0))
    assert np.all(np.abs(run_sequence(w, rng.normal(size=(50, 3)) * 10)) <= 1.0)


def test_deterministic_states(rng):
    w = init_weights(ReservoirParams(6, 2, seed=9))
    u = rng.normal(size=(20, 2))
    assert np.array_equal(run_sequence(w, u), run_sequence(w, u))


def test_empty_sequence_rejected(rng):
    with pytest.raises(ValueError, match="non-empty"):
        run_sequence(real_weights(rng), np.zeros((0, 3)))
