import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adda.contrastive import (
    ContrastiveOutcome, Queue, enqueue, infonce, infonce_batch, pretext_accuracy, weighted_epoch_loss,
)
from adda.errors import DomainError, ParameterError, ShapeError, UndefinedAccuracyError
from adda.numerics import finite_diff_grad


def unit(rng, n, d):
    v = rng.standard_normal((n, d))
    return (v / np.linalg.norm(v, axis=1, keepdims=True)).astype(np.float32)


def naive_loss(z, z_pos, negs, tau):
    """Direct evaluation in float64, no stabilization."""
    z, z_pos = np.float64(z), np.float64(z_pos)
    pos = math.exp(float(z @ z_pos) / tau)
    neg = sum(math.exp(float(z @ np.float64(k)) / tau) for k in negs)
    return -math.log(pos / (pos + neg))


def test_empty_queue_zero_loss():
    z = np.array([1.0, 0.0], np.float32)
    out = infonce(z, z, Queue(4, 2), 0.2)
    assert out.loss == 0.0 and out.correct


def test_closed_form_two_orthogonal_negatives():
    z = np.array([1, 0, 0], np.float32)
    q = Queue(4, 3).push(np.array([[0, 1, 0], [0, 0, 1]], np.float32))
    out = infonce(z, z, q, 1.0)
    # mpmath: -log(e / (e + 2)) = 0.551444713932
    assert out.loss == pytest.approx(0.551444713932, abs=1e-9)
    assert out.correct
    assert out.logits[0] == pytest.approx(1.0)


def test_gradient_matches_finite_difference(rng):
    for _ in range(5):
        z, z_pos = unit(rng, 2, 6)
        q = Queue(5, 6).push(unit(rng, 4, 6))
        out = infonce(z, z_pos, q, 0.3)
        fd = finite_diff_grad(lambda v: naive_loss(v, z_pos, q.keys(), 0.3), z.astype(np.float64), 1e-6)
        np.testing.assert_allclose(out.grad_z, fd, atol=1e-3)
        fd_pos = finite_diff_grad(lambda v: naive_loss(z, v, q.keys(), 0.3), z_pos.astype(np.float64), 1e-6)
        np.testing.assert_allclose(out.grad_pos, fd_pos, atol=1e-3)


def test_bad_temperature():
    z = np.array([1.0, 0.0], np.float32)
    with pytest.raises(ParameterError):
        infonce(z, z, Queue(2, 2), 0.0)


def test_batch_matches_single(rng):
    z, zp = unit(rng, 5, 4), unit(rng, 5, 4)
    q = Queue(8, 4).push(unit(rng, 6, 4))
    losses, correct, grads = infonce_batch(z, zp, q, 0.2)
    for i in range(5):
        single = infonce(z[i], zp[i], q, 0.2)
        assert losses[i] == pytest.approx(single.loss, abs=1e-12)
        assert correct[i] == single.correct
        np.testing.assert_allclose(grads[i], single.grad_z, atol=1e-6)


def test_ties_count_incorrect():
    z = np.array([1.0, 0.0], np.float32)
    q = Queue(2, 2).push(z[None])
    assert not infonce(z, z, q, 0.5).correct


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 10), st.floats(0.05, 2.0))
def test_stable_equals_naive_and_monotone(seed, k, tau):
    rng = np.random.default_rng(seed)
    z, zp = unit(rng, 2, 5)
    negs = unit(rng, k + 1, 5)
    q = Queue(16, 5).push(negs[:k])
    loss = infonce(z, zp, q, tau).loss
    assert loss >= 0
    assert loss == pytest.approx(naive_loss(z, zp, negs[:k], tau), abs=1e-6)
    assert infonce(z, zp, enqueue(q, negs[k:]), tau).loss >= loss


@given(st.integers(0, 2**31), st.floats(0.01, 100))
def test_correct_flag_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    z, zp = unit(rng, 2, 4)
    q = Queue(6, 4).push(unit(rng, 6, 4))
    assert infonce(z, zp, q, 0.2).correct == infonce(z, zp, q, 0.2 * scale).correct


def test_pretext_accuracy():
    yes = ContrastiveOutcome(0.1, np.zeros(1), True, None, None)
    no = ContrastiveOutcome(0.1, np.zeros(1), False, None, None)
    assert pretext_accuracy([yes, yes]) == 1.0
    assert pretext_accuracy([yes, no, yes]) == pytest.approx(0.6667, abs=1e-4)
    with pytest.raises(UndefinedAccuracyError):
        pretext_accuracy([])


def test_weighted_epoch_loss():
    assert weighted_epoch_loss([1, 2, 3], [1 / 3] * 3) == pytest.approx(2.0)
    assert weighted_epoch_loss([4, 5, 6], [0, 1, 0]) == 5.0
    assert weighted_epoch_loss([1, 1, 2], [0.2, 0.3, 0.5]) == pytest.approx(1.5)
    with pytest.raises(ShapeError):
        weighted_epoch_loss([1, 2], [1.0])


def test_enqueue_fifo(rng):
    keys = unit(rng, 9, 3)
    q = enqueue(Queue(8, 3), keys[:5])
    assert q.filled == 5
    q = enqueue(Queue(8, 3), keys)
    assert q.filled == 8
    assert np.array_equal(q.oldest_first(), keys[1:])


def test_enqueue_split_equals_concatenated(rng):
    keys = unit(rng, 23, 4)
    for cap in (1, 5, 8, 23, 30):
        for cut in (0, 3, 11, 23):
            a = Queue(cap, 4).push(keys[:cut]).push(keys[cut:])
            b = Queue(cap, 4).push(keys)
            assert a == b


def test_enqueue_rejects_non_unit():
    with pytest.raises(DomainError):
        Queue(4, 2).push(np.array([[1.0, 1.0]], np.float32))
