import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from idbc.channel import (Bc2, Dmc, Pmf, bsc, channel_to_dict, compose, conditional_z_given_xy,
                          identical_bc, marginal, marginal_y, marginal_z, nfold_prob, noiseless,
                          parse_channel, product_bc, product_bc3, sample_output, z_channel)


def random_tensor(rng, shape):
    t = rng.random(shape)
    return t / t.sum(axis=tuple(range(1, len(shape))), keepdims=True)


@st.composite
def bc_tensors(draw, max_alpha=3):
    nx = draw(st.integers(1, max_alpha))
    ny = draw(st.integers(1, max_alpha))
    nz = draw(st.integers(1, max_alpha))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_tensor(np.random.default_rng(seed), (nx, ny, nz))


def test_pmf_rejects_bad_vectors():
    with pytest.raises(ValueError):
        Pmf([0.5, 0.6])
    with pytest.raises(ValueError):
        Pmf([1.2, -0.2])
    with pytest.raises(ValueError):
        Pmf([[0.5, 0.5]])
    assert Pmf([0.25, 0.75]).support().tolist() == [0, 1]


def test_dmc_rows_must_sum_to_one():
    with pytest.raises(ValueError):
        Dmc([[0.5, 0.4], [0.5, 0.5]])
    w = Dmc([[1, 0], [0.3, 0.7]])
    with pytest.raises(ValueError):
        w.W[0, 0] = 0.5  # immutable


def test_marginal_y_of_product_is_factor():
    wy, wz = bsc(0.1), z_channel(0.3)
    bc = product_bc(wy, wz)
    np.testing.assert_allclose(marginal_y(bc).W, wy.W, atol=1e-15)
    np.testing.assert_allclose(marginal_z(bc).W, wz.W, atol=1e-15)


def test_marginal_of_identical_outputs():
    w = bsc(0.2)
    bc = identical_bc(w)
    np.testing.assert_array_equal(marginal_y(bc).W, w.W)
    np.testing.assert_array_equal(marginal_z(bc).W, w.W)


def test_random_tensor_marginal_rows_sum_to_one():
    t = random_tensor(np.random.default_rng(3), (2, 2, 2))
    w = marginal_y(Bc2(t))
    # direct summation oracle
    oracle = np.array([[t[x, y, 0] + t[x, y, 1] for y in range(2)] for x in range(2)])
    np.testing.assert_allclose(w.W, oracle, atol=1e-15)
    np.testing.assert_allclose(w.W.sum(axis=1), 1.0, atol=1e-12)


@given(bc_tensors())
def test_marginals_consistent(t):
    bc = Bc2(t)
    np.testing.assert_array_equal(marginal_y(bc).W, t.sum(axis=2))
    np.testing.assert_array_equal(marginal_z(bc).W, t.sum(axis=1))


def test_conditional_of_independent_bc_is_wz():
    wy, wz = bsc(0.1), bsc(0.2)
    probs, defined = conditional_z_given_xy(product_bc(wy, wz))
    assert defined.all()
    for y in range(2):
        np.testing.assert_allclose(probs[:, y, :], wz.W, atol=1e-12)


def test_conditional_of_copy_is_indicator():
    probs, defined = conditional_z_given_xy(identical_bc(bsc(0.3)))
    for x in range(2):
        np.testing.assert_array_equal(probs[x], np.eye(2))


def test_conditional_marks_undefined_rows():
    probs, defined = conditional_z_given_xy(identical_bc(noiseless(2)))
    assert defined.tolist() == [[True, False], [False, True]]
    assert probs[0, 1].sum() == 0


@given(bc_tensors())
def test_conditional_rows_renormalize(t):
    probs, defined = conditional_z_given_xy(Bc2(t))
    wy = t.sum(axis=2)
    for x in range(t.shape[0]):
        for y in range(t.shape[1]):
            if defined[x, y]:
                np.testing.assert_allclose(probs[x, y], t[x, y] / wy[x, y], atol=1e-12)
                assert abs(probs[x, y].sum() - 1) < 1e-12


def test_nfold_prob():
    w = noiseless(2)
    assert nfold_prob(w, [0, 1, 1], [0, 1, 1]) == 1.0
    assert nfold_prob(w, [0, 1, 1], [0, 0, 1]) == 0.0
    assert nfold_prob(bsc(0.1), [0, 0, 0], [0, 1, 0]) == pytest.approx(0.081, abs=1e-15)
    with pytest.raises(ValueError):
        nfold_prob(w, [0, 1], [0])


def test_sample_output_noiseless_and_flip_rate():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 3, 1000)
    np.testing.assert_array_equal(sample_output(noiseless(3), x, rng), x)
    x = np.zeros(100000, dtype=np.uint8)
    rate = sample_output(bsc(0.5), x, np.random.default_rng(1)).mean()
    assert abs(rate - 0.5) < 0.01


def test_sample_output_deterministic_per_seed():
    x = np.arange(50) % 2
    a = sample_output(bsc(0.3), x, np.random.default_rng(9))
    b = sample_output(bsc(0.3), x, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


def test_product_bc3_marginals():
    ws = [bsc(0.1), bsc(0.2), z_channel(0.4)]
    bc3 = product_bc3(*ws)
    for k in range(3):
        np.testing.assert_allclose(marginal(bc3, k).W, ws[k].W, atol=1e-15)


def test_compose_is_cascade():
    np.testing.assert_allclose(compose(bsc(0.1), bsc(0.1)).W, bsc(0.18).W, atol=1e-15)


def test_parse_channel_round_trip():
    bc = product_bc(bsc(0.25), bsc(0.5))
    doc = channel_to_dict(bc)
    back = parse_channel(json.dumps(doc))
    assert isinstance(back, Bc2)
    np.testing.assert_array_equal(back.T, bc.T)


@pytest.mark.parametrize("doc", [
    '{"inputs": 2, "outputs": [2], "probs": [0.5, 0.5, 0.5]}',
    '{"inputs": 2, "outputs": [2], "probs": [0.5, 0.5, 0.5, 0.6]}',
    '{"inputs": 2, "outputs": [2], "probs": [1.5, -0.5, 0.5, 0.5]}',
    '{"inputs": 2, "outputs": [], "probs": [1, 1]}',
    '{"inputs": 2}',
    'not json',
])
def test_parse_channel_rejects(doc):
    with pytest.raises(ValueError):
        parse_channel(doc)


def test_parse_channel_no_silent_renormalization():
    with pytest.raises(ValueError):
        parse_channel('{"inputs": 1, "outputs": [2], "probs": [0.5, 0.50000000001]}')
    w = parse_channel('{"inputs": 1, "outputs": [2], "probs": [0.1, 0.9]}')
    assert w.W.tolist() == [[0.1, 0.9]]
