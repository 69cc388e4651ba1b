import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bcpnn.errors import ConfigurationError, ShapeError
from bcpnn.network import (
    compute_support,
    forward,
    hidden_codes,
    init_network,
    local_connectivity,
    softmax_activation,
)
from bcpnn.state import LayerGeometry

from conftest import random_code, trained_state


def test_init_mnist_geometry():
    st_ = init_network(LayerGeometry(784, 2, 30, 100), 78, seed=0)
    assert np.all(st_.connectivity.sum(axis=0) == 78)
    assert np.all(st_.weights == 0.0)
    np.testing.assert_allclose(st_.bias, np.log(0.01))


def test_full_fanin_all_ones():
    st_ = init_network(LayerGeometry(5, 2, 3, 2), 5)
    assert st_.connectivity.all()


def test_fanin_too_large():
    with pytest.raises(ConfigurationError):
        init_network(LayerGeometry(5, 2, 3, 2), 6)


def test_geometry_invariants():
    with pytest.raises(ConfigurationError):
        LayerGeometry(5, 2, 3, 1)
    with pytest.raises(ConfigurationError):
        LayerGeometry(0, 2, 3, 2)


def test_init_seeded():
    g = LayerGeometry(20, 2, 4, 3)
    a, b = init_network(g, 7, seed=3), init_network(g, 7, seed=3)
    np.testing.assert_array_equal(a.connectivity, b.connectivity)
    assert not np.array_equal(a.connectivity, init_network(g, 7, seed=4).connectivity)


def test_support_hand_example():
    st_ = init_network(LayerGeometry(1, 2, 1, 2), 1)
    st_.bias = np.zeros((1, 2))
    st_.weights = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(compute_support(st_, np.array([[1.0, 0.0]])), [[1.0, 0.0]])


def test_zero_weights_support_is_bias():
    st_ = trained_state()
    st_.weights[:] = 0
    x = random_code(np.random.default_rng(0), 1, 6, 3)[0]
    np.testing.assert_array_equal(compute_support(st_, x), st_.bias)


def test_fully_masked_support_is_bias():
    st_ = trained_state()
    st_.connectivity[:] = False
    x = random_code(np.random.default_rng(0), 1, 6, 3)[0]
    np.testing.assert_allclose(compute_support(st_, x), st_.bias, atol=0)


def test_masking_equals_zeroed_blocks():
    st_ = trained_state()
    x = random_code(np.random.default_rng(2), 4, 6, 3)
    s1 = compute_support(st_, x)
    g = st_.geometry
    w = st_.weights.reshape(g.h_inp, g.m_inp, g.h_hid, g.m_hid).copy()
    w[~st_.connectivity[:, None, :, None].repeat(g.m_inp, 1).repeat(g.m_hid, 3)] = 0.0
    s2 = np.einsum("nim,imjk->njk", x, w) + st_.bias
    np.testing.assert_allclose(s1, s2, atol=1e-12)


def test_shape_mismatch():
    st_ = trained_state()
    with pytest.raises(ShapeError):
        compute_support(st_, np.ones((5, 3)) / 3)


def test_softmax_examples():
    np.testing.assert_allclose(softmax_activation(np.zeros((1, 100))), 0.01)
    out = softmax_activation(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(out)) and out[0, 0] == pytest.approx(1.0)
    np.testing.assert_allclose(softmax_activation(np.log([[2.0, 1.0, 1.0]])), [[0.5, 0.25, 0.25]])


@given(st.lists(st.floats(-500, 500), min_size=2, max_size=8), st.floats(-1e3, 1e3))
def test_softmax_normalized_and_shift_invariant(vals, c):
    s = np.array([vals])
    p = softmax_activation(s)
    assert abs(p.sum() - 1) < 1e-12
    np.testing.assert_allclose(softmax_activation(s + c), p, atol=1e-12)


def test_fresh_network_uniform_output():
    st_ = init_network(LayerGeometry(6, 3, 2, 5), 3)
    x = random_code(np.random.default_rng(0), 1, 6, 3)[0]
    np.testing.assert_allclose(forward(st_, x), 0.2, atol=1e-15)


@given(st.integers(0, 10_000))
def test_forward_normalized_and_deterministic(seed):
    st_ = trained_state()
    x = random_code(np.random.default_rng(seed), 3, 6, 3, 0.2)
    a, b = forward(st_, x), forward(st_, x)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(a.sum(-1), 1.0, atol=1e-12)


def test_noise_changes_output_reproducibly():
    st_ = trained_state()
    x = random_code(np.random.default_rng(0), 1, 6, 3)[0]
    a = forward(st_, x, 0.5, rng=1)
    assert not np.allclose(a, forward(st_, x))
    np.testing.assert_array_equal(a, forward(st_, x, 0.5, rng=1))


def test_hidden_codes_match_forward():
    st_ = trained_state()
    x = random_code(np.random.default_rng(0), 7, 6, 3).astype(np.float32)
    h = hidden_codes(st_, x, chunk=3)
    np.testing.assert_allclose(h, forward(st_, x.astype(np.float64)), atol=1e-6)


def test_local_connectivity_patch():
    c = local_connectivity((10, 10, 2), 5, 3, np.random.default_rng(0))
    assert np.all(c.sum(0) == 18)
    for j in range(5):
        pix = np.argwhere(c.reshape(10, 10, 2, 5)[..., 0, j])
        assert np.ptp(pix[:, 0]) == 2 and np.ptp(pix[:, 1]) == 2
