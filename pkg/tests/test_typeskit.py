from fractions import Fraction
from itertools import product
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from idbc.channel import Dmc, bsc, noiseless
from idbc.typeskit import (JointTypicality, TypeVector, all_sequences, all_types, check_eps,
                           default_eps, empirical_type, equitype_decompose, equitype_prob,
                           is_jointly_typical, is_typical, joint_pmf, l_type_approximate,
                           l_type_bounds, l_type_check, log_type_class_size, type_class,
                           type_class_size)


def naive_typical(x, p, eps):
    """Literal per-symbol definition."""
    n = len(x)
    for a in range(len(p)):
        frac = sum(1 for s in x if s == a) / n
        if abs(frac - p[a]) > eps * p[a] + 1e-12:
            return False
    return all(s < len(p) for s in x)


def test_empirical_type_examples():
    assert empirical_type([0, 1, 1, 0], 2) == TypeVector((2, 2), 4)
    assert empirical_type([1, 1, 1], 3).counts == (0, 3, 0)
    t = empirical_type([0, 1, 2, 0, 1, 2], 3)
    np.testing.assert_allclose(t.pmf, [1 / 3] * 3)
    with pytest.raises(ValueError):
        empirical_type([0, 3], 2)


def test_is_typical_examples():
    p = [0.5, 0.5]
    assert is_typical([0] * 5 + [1] * 5, p, 0.1)
    assert not is_typical([0] * 4 + [1] * 6, p, 0.1)
    assert not is_typical([0, 1, 2, 0], [0.5, 0.5, 0.0], 10.0)
    with pytest.raises(ValueError):
        is_typical([0], p, -0.1)


@given(st.lists(st.integers(0, 2), min_size=1, max_size=30),
       st.sampled_from([(0.2, 0.3, 0.5), (0.5, 0.5, 0.0), (1 / 3, 1 / 3, 1 / 3)]),
       st.floats(0, 1.5))
def test_is_typical_matches_definition(x, p, eps):
    # keep away from floating ties at the window edges
    n = len(x)
    edges = [n * q * (1 + s * eps) for q in p for s in (-1, 1)]
    if any(abs(e - round(e)) < 1e-6 for e in edges):
        return
    assert is_typical(x, p, eps) == naive_typical(x, p, eps)


def test_joint_typicality_examples():
    x = np.array([0, 1, 1, 0, 1])
    assert is_jointly_typical(x, x, joint_pmf([0.4, 0.6], noiseless(2)), 0.0)
    joint = np.array([[0.25, 0.25], [0.25, 0.25]])
    assert is_jointly_typical([0, 0, 1, 1], [0, 1, 0, 1], joint, 0.0)
    # BSC(0.1), n = 20, 6 flips: flip fraction 0.3 against cell mass 0.05
    x = np.array([0] * 10 + [1] * 10)
    y = x.copy()
    y[[0, 1, 2, 10, 11, 12]] ^= 1
    assert not is_jointly_typical(x, y, joint_pmf([0.5, 0.5], bsc(0.1)), 0.2)


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.floats(0.0, 3.0))
def test_joint_typicality_matrix_matches_scalar(seed, eps):
    rng = np.random.default_rng(seed)
    n = 6
    joint = joint_pmf([0.3, 0.7], Dmc([[0.8, 0.2], [0.1, 0.9]]))
    xs = rng.integers(0, 2, (5, n))
    ys = all_sequences(n, 2)
    mat = JointTypicality(joint, n, eps).matrix(xs, ys)
    for i in range(xs.shape[0]):
        for j in range(0, ys.shape[0], 7):
            assert mat[i, j] == is_jointly_typical(xs[i], ys[j], joint, eps)


def test_eps_helpers():
    p = [0.5, 0.5]
    e = default_eps(p, bsc(0.05), 0.1)
    assert check_eps(e, p, bsc(0.05), 0.1)
    assert not check_eps(4 * e, p, bsc(0.05), 0.1)


def test_type_class_size_examples():
    assert type_class_size(TypeVector((2, 2), 4)) == 6
    assert type_class_size(TypeVector((5, 0), 5)) == 1
    assert type_class_size(TypeVector((3, 2, 1), 6)) == 60
    assert log_type_class_size(TypeVector((3, 2, 1), 6)) == pytest.approx(np.log(60))


@pytest.mark.parametrize("n", range(1, 11))
def test_type_classes_partition_sequence_space(n):
    assert sum(type_class_size(t) for t in all_types(n, 2)) == 2 ** n


@given(st.lists(st.integers(0, 3), min_size=4, max_size=4).filter(lambda c: 0 < sum(c) <= 7))
def test_type_class_enumeration(counts):
    t = TypeVector(tuple(counts), sum(counts))
    members = type_class(t)
    assert members.shape[0] == type_class_size(t)
    for row in members:
        assert empirical_type(row, 4) == t


def test_equitype_noiseless_single_term():
    terms = equitype_decompose(noiseless(2), TypeVector((2, 3), 5))
    assert len(terms) == 1
    np.testing.assert_array_equal(terms[0].V, np.eye(2))
    assert terms[0].c == 1.0


def test_equitype_bsc_weights_are_binomial():
    p, n = 0.2, 6
    t = TypeVector((3, 3), n)
    terms = equitype_decompose(bsc(p), t)
    assert len(terms) == 16
    for term in terms:
        f0, f1 = term.k[0][1], term.k[1][0]
        oracle = comb(3, f0) * p**f0 * (1 - p)**(3 - f0) * comb(3, f1) * p**f1 * (1 - p)**(3 - f1)
        assert term.c == pytest.approx(oracle, abs=1e-14)


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.integers(2, 3), st.integers(1, 5))
def test_equitype_weights_sum_to_one(seed, ny, n):
    rng = np.random.default_rng(seed)
    W = rng.random((2, ny))
    w = Dmc(W / W.sum(axis=1, keepdims=True))
    na = int(rng.integers(0, n + 1))
    terms = equitype_decompose(w, TypeVector((na, n - na), n))
    assert abs(sum(t.c for t in terms) - 1) < 1e-12


def test_equitype_reproduces_nfold_law():
    w = Dmc([[0.7, 0.2, 0.1], [0.25, 0.25, 0.5]])
    t = TypeVector((2, 2), 4)
    terms = equitype_decompose(w, t)
    for x in type_class(t):
        for y in product(range(3), repeat=4):
            direct = np.prod(w.W[x, list(y)])
            assert equitype_prob(terms, x, y, 2, 3) == pytest.approx(direct, abs=1e-15)


def test_equitype_exact_fractions_sum_to_one():
    terms = equitype_decompose(bsc(0.25), TypeVector((2, 2), 4), exact=True)
    assert sum(t.c for t in terms) == Fraction(1)


def test_l_type_point_mass():
    rng = np.random.default_rng(0)
    for L in (1, 7, 1000):
        lt = l_type_approximate(np.arange(3), [0, 1, 0], L, rng)
        np.testing.assert_array_equal(lt.weights, [0, 1, 0])


def test_l_type_large_L_close_to_q():
    q = np.array([0.1, 0.2, 0.3, 0.15, 0.15, 0.1])
    lt = l_type_approximate(np.arange(6), q, 10**6, np.random.default_rng(1))
    assert 0.5 * np.abs(lt.weights - q).sum() <= 0.01
    assert np.all((lt.weights * lt.L) % 1 == 0)


def test_l_type_bounds_are_two_sided():
    lo, hi = l_type_bounds(0.3, 8, 0.5, 0.1)
    assert lo < 0.3 < hi


def test_l_type_check_small_instance():
    t = TypeVector((4, 4), 8)
    q = np.random.default_rng(2).dirichlet(np.ones(type_class_size(t)))
    res = l_type_check(bsc(0.1), t, q, L=20000, delta=0.3, eps=0.2, n_sets=50,
                       rng=np.random.default_rng(3))
    assert res["failures"] == 0 and res["sets"] == 50
