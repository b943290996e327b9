import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from discouq.core import ShapeError
from discouq.loss import (
    SORTED_THRESHOLD,
    batch_energy_loss,
    batch_energy_loss_and_grad,
    batch_energy_loss_grad,
    energy_loss,
    energy_loss_grad,
    minibatch_loss,
    pairwise_abs_sum,
)


def brute_loss(y, s):
    """Double-loop evaluation of the finite-sample energy loss."""
    s = np.atleast_2d(np.asarray(s, float).reshape(len(s), -1))
    y = np.asarray(y, float).ravel()
    n = len(s)
    first = sum(np.linalg.norm(y - s[i]) for i in range(n)) / n
    second = sum(np.linalg.norm(s[i] - s[j]) for i in range(n) for j in range(n) if i != j)
    return first - second / (2 * n * n)


def test_all_samples_equal_target():
    assert energy_loss([1.5], [[1.5]] * 4) == 0.0
    np.testing.assert_array_equal(energy_loss_grad([1.5], [[1.5]] * 4), np.zeros((4, 1)))


def test_single_sample_is_absolute_error():
    assert energy_loss([0.0], [[3.0]]) == 3.0


def test_two_sample_hand_value():
    assert energy_loss([0.0], [[1.0], [-1.0]]) == 0.5


def test_two_sample_hand_gradient():
    np.testing.assert_allclose(energy_loss_grad([0.0], [[1.0], [-1.0]]), [[0.25], [-0.25]], rtol=1e-15)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        energy_loss([0.0, 1.0], [[1.0], [2.0]])


@pytest.mark.parametrize("d", [1, 2])
def test_matches_brute_force(d):
    rng = np.random.default_rng(d)
    for n in (1, 2, 7, 40):
        y, s = rng.normal(size=d), rng.normal(size=(n, d))
        assert abs(energy_loss(y, s) - brute_loss(y, s)) < 1e-12


def test_sorted_form_agrees_with_direct():
    x = np.random.default_rng(0).normal(size=SORTED_THRESHOLD + 300)
    direct = np.abs(x[:, None] - x[None, :]).sum()
    assert abs(pairwise_abs_sum(x) - direct) < 1e-10 * direct
    y = np.array([0.2])
    assert abs(energy_loss(y, x[:, None]) - brute_loss(y, x[:, None])) < 1e-10


@pytest.mark.parametrize("d", [1, 2])
def test_gradient_matches_finite_differences(d):
    rng = np.random.default_rng(10 + d)
    h = 1e-6
    for _ in range(100):
        n = int(rng.integers(2, 12))
        y, s = rng.normal(size=d), rng.normal(size=(n, d))
        g = energy_loss_grad(y, s)
        fd = np.zeros_like(s)
        for i in range(n):
            for j in range(d):
                sp, sm = s.copy(), s.copy()
                sp[i, j] += h
                sm[i, j] -= h
                fd[i, j] = (energy_loss(y, sp) - energy_loss(y, sm)) / (2 * h)
        err = np.max(np.abs(g - fd)) / np.max(np.abs(fd))
        assert err < 1e-5


def test_minibatch_mean():
    item = ([0.0], [[1.0], [-1.0]])
    assert minibatch_loss([item, item, item]) == 0.5
    assert minibatch_loss([([0.0], [[1.0], [-1.0]]), ([0.0], [[1.5]])]) == 1.0


def test_minibatch_equals_sum_over_size():
    rng = np.random.default_rng(4)
    batch = [(rng.normal(size=1), rng.normal(size=(5, 1))) for _ in range(9)]
    total = sum(energy_loss(y, s) for y, s in batch)
    assert abs(minibatch_loss(batch) - total / 9) < 1e-15


def test_empty_minibatch():
    with pytest.raises(ValueError):
        minibatch_loss([])


@pytest.mark.parametrize("d,n", [(1, 6), (2, 6), (1, SORTED_THRESHOLD + 20)])
def test_batched_forms_agree(d, n):
    rng = np.random.default_rng(d + n)
    Y, S = rng.normal(size=(5, d)), rng.normal(size=(5, n, d))
    losses = batch_energy_loss(Y, S)
    np.testing.assert_allclose(losses, [energy_loss(Y[b], S[b]) for b in range(5)], rtol=1e-12)
    G = batch_energy_loss_grad(Y, S)
    np.testing.assert_allclose(G, np.stack([energy_loss_grad(Y[b], S[b]) for b in range(5)]) / 5, atol=1e-15)
    l2, g2 = batch_energy_loss_and_grad(Y, S)
    np.testing.assert_allclose(l2, losses, rtol=1e-12)
    np.testing.assert_allclose(g2, G, atol=1e-15)


# --- properties -------------------------------------------------------------

finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(arrays(float, (6, 2), elements=finite), arrays(float, 2, elements=finite), st.randoms())
def test_permutation_invariance(s, y, rnd):
    perm = list(range(6))
    rnd.shuffle(perm)
    assert abs(energy_loss(y, s) - energy_loss(y, s[perm])) < 1e-9


@settings(max_examples=50, deadline=None)
@given(arrays(float, (5, 2), elements=finite), arrays(float, 2, elements=finite), arrays(float, 2, elements=finite))
def test_translation_covariance(s, y, c):
    assert abs(energy_loss(y, s) - energy_loss(y + c, s + c)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(arrays(float, (5, 1), elements=finite), arrays(float, 1, elements=finite), st.floats(0.01, 100))
def test_scale_equivariance(s, y, k):
    assert abs(energy_loss(k * y, k * s) - k * energy_loss(y, s)) < 1e-9 * max(1.0, k) * 100
