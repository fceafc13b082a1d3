import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bilinear_quat_loops, bilinear_real_loops, quat_matvec_loops
from qnesn.readout import (
    BilinearCoeffs,
    LinearReadout,
    ModelDims,
    bilinear_filter,
    bilinear_forward,
    linear_filter,
    linear_forward,
    load_theta,
    normalize_model,
    push_history,
    readout_input,
    save_theta,
    theta_length,
    theta_pack,
    theta_segments,
    theta_unpack,
    vectorize,
)
from reference_values import GENOME_LENGTHS, N_CLASSES, ORDER


def random_coeffs(rng, n_y, order, m, quaternion=False, scale=0.3):
    tail = (4,) if quaternion else ()
    k = order - 1
    return BilinearCoeffs(
        rng.normal(size=(n_y, m) + tail),
        rng.normal(size=(n_y, k, m) + tail) * scale,
        rng.normal(size=(n_y, k) + tail) * scale,
    )


def test_readout_input_structures():
    z = readout_input([0.1, 0.2, 0.3], [5.0], "state_only")
    np.testing.assert_array_equal(z, [0.1, 0.2, 0.3, 1.0])
    z = readout_input([0.1, 0.2, 0.3], [5.0], "state_plus_input")
    np.testing.assert_array_equal(z, [0.1, 0.2, 0.3, 5.0, 1.0])


def test_readout_input_published_widths():
    zq = readout_input(np.zeros((25, 4)), np.zeros((554, 4)), quaternion=True)
    assert zq.shape == (580, 4)
    np.testing.assert_array_equal(zq[-1], [1, 0, 0, 0])
    assert readout_input(np.zeros(100), np.zeros(2216)).shape == (2317,)
    assert ModelDims(25, 554, 7).full_width == 580


def test_readout_input_batched(rng):
    x = rng.normal(size=(3, 5, 4, 4))
    u = rng.normal(size=(3, 5, 2, 4))
    z = readout_input(x, u, quaternion=True)
    assert z.shape == (3, 5, 7, 4)
    np.testing.assert_array_equal(z[..., 4:6, :], u)


def test_linear_forward_basic(rng):
    z = rng.normal(size=4)
    assert np.all(linear_forward(LinearReadout(np.zeros((2, 4))), z) == 0)
    np.testing.assert_array_equal(linear_forward(LinearReadout(np.eye(4)), z), z)
    w = rng.normal(size=(3, 4))
    expected = [sum(w[i, j] * z[j] for j in range(4)) for i in range(3)]
    np.testing.assert_allclose(linear_forward(LinearReadout(w), z), expected, atol=1e-12)
    with pytest.raises(ValueError, match="mismatch"):
        linear_forward(LinearReadout(w), np.zeros(3))


def test_linear_forward_quaternion(rng):
    w, z = rng.normal(size=(3, 5, 4)), rng.normal(size=(5, 4))
    np.testing.assert_allclose(linear_forward(LinearReadout(w), z), quat_matvec_loops(w, z), atol=1e-12)


def test_linear_filter_is_stepwise_forward(rng):
    w = LinearReadout(rng.normal(size=(2, 3, 4)))
    z = rng.normal(size=(6, 3, 4))
    y = linear_filter(w, z)
    for t in range(6):
        np.testing.assert_allclose(y[t], linear_forward(w, z[t]), atol=1e-12)


@pytest.mark.parametrize("quaternion", [False, True])
def test_degenerate_bilinear_is_linear(rng, quaternion):
    c = random_coeffs(rng, 3, 4, 5, quaternion)
    flat = BilinearCoeffs(c.a, np.zeros_like(c.b), np.zeros_like(c.c))
    z = rng.normal(size=(7, 5, 4) if quaternion else (7, 5))
    np.testing.assert_allclose(bilinear_filter(flat, z), linear_filter(LinearReadout(c.a), z), atol=1e-12)
    hist = rng.normal(size=(3, 3, 4) if quaternion else (3, 3))
    np.testing.assert_allclose(bilinear_forward(flat, hist, z[0]), linear_forward(LinearReadout(c.a), z[0]), atol=1e-12)


def test_two_input_second_order_expansion():
    # One output, order 2, two inputs written out term by term.
    c11, b11, b12, a11, a12 = 0.5, -0.25, 0.75, 2.0, -3.0
    coeffs = BilinearCoeffs(np.array([[a11, a12]]), np.array([[[b11, b12]]]), np.array([[c11]]))
    y_prev, x1, x2 = 1.5, 0.2, -0.4
    expected = c11 * y_prev + b11 * y_prev * x1 + b12 * y_prev * x2 + a11 * x1 + a12 * x2
    got = bilinear_forward(coeffs, np.array([[y_prev]]), np.array([x1, x2]))
    assert got.shape == (1,)
    assert abs(got[0] - expected) < 1e-15


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(2, 5), st.integers(1, 8), st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_real_filter_matches_loops(n_y, order, m, T, seed):
    rng = np.random.default_rng(seed)
    c = random_coeffs(rng, n_y, order, m)
    z = rng.normal(size=(T, m))
    np.testing.assert_allclose(bilinear_filter(c, z), bilinear_real_loops(c.a, c.b, c.c, z), rtol=0, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(2, 4), st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_quaternion_filter_matches_expansion(n_y, order, m, T, seed):
    rng = np.random.default_rng(seed)
    c = random_coeffs(rng, n_y, order, m, quaternion=True)
    z = rng.normal(size=(T, m, 4))
    np.testing.assert_allclose(bilinear_filter(c, z), bilinear_quat_loops(c.a, c.b, c.c, z), rtol=0, atol=1e-10)


@pytest.mark.parametrize("quaternion", [False, True])
def test_stepping_matches_filter(rng, quaternion):
    c = random_coeffs(rng, 2, 3, 4, quaternion)
    tail = (4,) if quaternion else ()
    z = rng.normal(size=(9, 4) + tail)
    hist = np.zeros((2, 2) + tail)
    y_seq = bilinear_filter(c, z)
    for t in range(9):
        y = bilinear_forward(c, hist, z[t])
        np.testing.assert_allclose(y, y_seq[t], atol=1e-12)
        hist = push_history(hist, y, quaternion)


def test_batched_filter(rng):
    c = random_coeffs(rng, 2, 3, 4, quaternion=True)
    z = rng.normal(size=(3, 5, 4, 4))
    y = bilinear_filter(c, z)
    for i in range(3):
        np.testing.assert_allclose(y[i], bilinear_filter(c, z[i]), atol=1e-13)


def test_filter_shape_errors(rng):
    c = random_coeffs(rng, 2, 3, 4)
    with pytest.raises(ValueError):
        bilinear_filter(c, np.zeros((5, 3)))
    with pytest.raises(ValueError):
        bilinear_forward(c, np.zeros((2, 1)), np.zeros(4))
    with pytest.raises(ValueError, match="inconsistent"):
        BilinearCoeffs(np.zeros((2, 4)), np.zeros((2, 2, 3)), np.zeros((2, 2)))


def test_vectorized_form(rng):
    order, m = 4, 5
    c = random_coeffs(rng, 3, order, m)
    hist, z = rng.normal(size=(3, order - 1)), rng.normal(size=m)
    pairs = vectorize(c, hist, z)
    y = bilinear_forward(c, hist, z)
    for p, (w_p, u_p) in enumerate(pairs):
        assert len(w_p) == (order - 1) + (order - 1) * m + m
        assert abs(w_p @ u_p - y[p]) < 1e-12
    for p, (w_p, u_p) in enumerate(vectorize(c, np.zeros((3, order - 1)), z)):
        assert np.all(u_p[: (order - 1) * (m + 1)] == 0)
        assert abs(w_p @ u_p - c.a[p] @ z) < 1e-12


def test_published_genome_lengths():
    for model, n_units, n_inputs, reduce_dim, length in GENOME_LENGTHS:
        dims = ModelDims(n_units, n_inputs, N_CLASSES, reduce_dim, ORDER)
        assert theta_length(model, dims) == length, (model, n_units)


@pytest.mark.parametrize("model", ["esn_ga", "nesn", "qesn", "qnesn"])
def test_pack_unpack_round_trip(rng, model):
    dims = ModelDims(3, 2, 2, 4, 3)
    params = {name: rng.normal(size=shape) for name, shape in theta_segments(model, dims)}
    theta = theta_pack(model, dims, params)
    assert theta.shape == (theta_length(model, dims),)
    back = theta_unpack(model, dims, theta)
    for name in params:
        assert np.array_equal(back[name], params[name])
    assert np.array_equal(theta_pack(model, dims, back), theta)


def test_genome_order():
    dims = ModelDims(2, 1, 1, None, 2)
    assert [n for n, _ in theta_segments("qnesn", dims)] == ["a", "b", "c", "w_in", "w"]
    assert [n for n, _ in theta_segments("esn_ga", dims)] == ["w_in", "w", "w_out"]
    # Quaternion entries are four consecutive reals.
    theta = np.arange(theta_length("qesn", dims), dtype=float)
    np.testing.assert_array_equal(theta_unpack("qesn", dims, theta)["w_in"][0, 0], [0, 1, 2, 3])


def test_model_tags():
    assert normalize_model("esn-ga") == "esn_ga"
    assert normalize_model("QNESN") == "qnesn"
    with pytest.raises(ValueError, match="unknown model"):
        normalize_model("lstm")
    with pytest.raises(ValueError):
        theta_length("esn", ModelDims(2, 1, 1))
    with pytest.raises(ValueError):
        theta_unpack("nesn", ModelDims(2, 1, 1), np.zeros(3))


def test_theta_file_round_trip(tmp_path, rng):
    dims = ModelDims(3, 2, 2, 4, 3, "state_only")
    theta = rng.uniform(-1, 1, theta_length("qnesn", dims))
    path = save_theta(tmp_path / "g.theta", theta, "qnesn", dims, {"seed": 7})
    assert path.stat().st_size == 8 * theta.size
    back, model, dims2, header = load_theta(path)
    assert np.array_equal(back, theta)
    assert model == "qnesn" and dims2 == dims and header["seed"] == 7
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError, match="disagrees"):
        load_theta(path)
