import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gmmspectral.errors import LabelError, ShapeMismatch
from gmmspectral.metrics import center_error, confusion, match, misclustering_loss


def loss_by_definition(z, z_star, k):
    """Independent oracle: minimum over bijections written out literally."""
    n = len(z)
    return min(sum(phi[a] != b for a, b in zip(z, z_star)) / n for phi in itertools.permutations(range(k)))


def labels(k, n):
    return st.lists(st.integers(0, k - 1), min_size=n, max_size=n).map(np.array)


def test_examples():
    z = np.array([0, 0, 1, 1])
    r = misclustering_loss(z, z, 2)
    assert r.loss == 0 and list(r.permutation) == [0, 1]
    r = misclustering_loss(z, np.array([1, 1, 0, 0]), 2)
    assert r.loss == 0 and list(r.permutation) == [1, 0]
    r = misclustering_loss(z, np.array([0, 1, 1, 1]), 2)
    assert r.loss == 0.25 and r.mismatches == 1
    assert loss_by_definition(z, [0, 1, 1, 1], 2) == 0.25


def test_errors():
    with pytest.raises(LabelError):
        misclustering_loss(np.array([0, 1]), np.array([0, 1, 1]), 2)
    with pytest.raises(LabelError):
        misclustering_loss(np.array([0, 2]), np.array([0, 1]), 2)
    with pytest.raises(LabelError):
        misclustering_loss(np.array([0, -1]), np.array([0, 1]), 2)
    with pytest.raises(ValueError):
        misclustering_loss(np.array([0, 1]), np.array([0, 1]), 2, method="greedy")


@given(st.integers(1, 5).flatmap(lambda k: st.tuples(st.just(k), labels(k, 12), labels(k, 12))))
def test_matches_definition(case):
    k, z, zs = case
    r = misclustering_loss(z, zs, k)
    assert r.loss == pytest.approx(loss_by_definition(z, zs, k), abs=0)
    assert r.loss == r.mismatches / 12
    assert sorted(r.permutation) == list(range(k))
    assert np.sum(r.permutation[z] != zs) == r.mismatches


def test_assignment_equals_enumeration(rng):
    for _ in range(500):
        k = int(rng.integers(1, 7))
        n = int(rng.integers(1, 60))
        z, zs = rng.integers(0, k, n), rng.integers(0, k, n)
        a = misclustering_loss(z, zs, k, method="enumerate")
        b = misclustering_loss(z, zs, k, method="assignment")
        assert a.mismatches == b.mismatches


def test_large_k_uses_assignment(rng):
    k = 12
    zs = rng.integers(0, k, 300)
    perm = rng.permutation(k)
    z = np.argsort(perm)[zs]  # perm[z] == zs
    r = misclustering_loss(z, zs, k)
    assert r.loss == 0 and np.array_equal(r.permutation, perm)


@given(st.integers(1, 4).flatmap(lambda k: st.tuples(st.just(k), labels(k, 10), labels(k, 10), labels(k, 10))))
def test_symmetry_and_triangle(case):
    k, a, b, c = case
    assert misclustering_loss(a, b, k).loss == misclustering_loss(b, a, k).loss
    ac = misclustering_loss(a, c, k).loss
    assert ac <= misclustering_loss(a, b, k).loss + misclustering_loss(b, c, k).loss + 1e-15


def test_confusion_counts():
    C = confusion(np.array([0, 0, 1, 2]), np.array([0, 1, 1, 2]), 3)
    np.testing.assert_array_equal(C, [[1, 1, 0], [0, 1, 0], [0, 0, 1]])


def test_center_error_examples(rng):
    T = rng.standard_normal((3, 2))
    assert center_error(T, T, [0, 1]) == 0
    shifted = T + 0.1 * np.array([[1.0], [0.0], [0.0]])
    assert center_error(shifted, T, [0, 1]) == pytest.approx(0.1)
    assert center_error(T[:, ::-1], T, [1, 0]) == 0
    with pytest.raises(ShapeMismatch):
        center_error(T, T[:, :1], [0, 1])


def test_match_combines_loss_and_centers(rng):
    T = rng.standard_normal((2, 3))
    zs = np.array([0, 1, 2, 2])
    r = match(np.array([2, 0, 1, 1]), zs, 3, theta_hat=T[:, [1, 2, 0]], theta_star=T)
    assert r.loss == 0 and r.center_error == 0
