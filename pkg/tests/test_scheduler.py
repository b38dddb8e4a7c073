import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adda import scheduler
from adda.errors import DomainError, InfeasiblePlanError, ParameterError
from adda.numerics import RngStream
from adda.scheduler import (
    SamplerState, init_uniform, plan_epoch, plan_steps, probabilities, subbatch_sizes, update,
)

from apportion_oracle import largest_remainder_bruteforce

acc_values = st.floats(0, 1, allow_nan=False)


def test_uniform_init():
    np.testing.assert_array_equal(probabilities(init_uniform(3)), [1 / 3] * 3)
    assert np.all(probabilities(init_uniform(7, ur=5.0)) == 1 / 7)
    assert init_uniform(4).epoch == 0
    with pytest.raises(ParameterError):
        init_uniform(1)
    assert init_uniform(1, allow_single=True).n == 1


def test_probabilities_example():
    state = SamplerState([0.5, 0.1, 0.9], ur=1.0)
    # mpmath softmax of (0.5, 0.1, 0.9)
    np.testing.assert_allclose(probabilities(state), [0.3162410582, 0.2119827207, 0.4717762211], atol=1e-9)
    wider = probabilities(SamplerState([0.5, 0.1, 0.9], ur=2.0))
    p = probabilities(state)
    assert wider.max() - wider.min() > p.max() - p.min()


def test_update_examples():
    s = update(init_uniform(3), [1, 1, 1])
    np.testing.assert_array_equal(s.scores, [0, 0, 0])
    np.testing.assert_array_equal(probabilities(s), [1 / 3] * 3)
    s = update(init_uniform(3), [0.9, 0.5, 0.1])
    np.testing.assert_allclose(s.scores, [0.1, 0.5, 0.9])
    assert np.argmax(probabilities(s)) == 2 and np.argmin(probabilities(s)) == 0
    assert s.epoch == 1


def test_update_carry_forward():
    s = update(init_uniform(3), [0.2, 0.4, 0.6])
    s2 = update(s, [0.5, None, 0.5])
    assert s2.scores[1] == s.scores[1]
    s3 = update(s, [0.5])  # shorter vector: the rest carry forward
    assert s3.scores[1] == s.scores[1] and s3.scores[2] == s.scores[2]


def test_update_averages_steps():
    s = update(init_uniform(2), [[0.2, 0.4], [1.0]])
    np.testing.assert_allclose(s.scores, [0.7, 0.0])


def test_update_domain_error():
    with pytest.raises(DomainError):
        update(init_uniform(2), [1.2, 0.5])


@given(st.lists(acc_values, min_size=2, max_size=8), st.floats(0.05, 5))
def test_feedback_ordering_and_simplex(acc, ur):
    state = update(init_uniform(len(acc), ur), acc)
    p = probabilities(state)
    assert abs(p.sum() - 1) <= 1e-6 and np.all(p > 0)
    for i in range(len(acc)):
        for j in range(len(acc)):
            if acc[i] < acc[j] and (acc[j] - acc[i]) * ur > 1e-12:
                assert p[i] > p[j]


@given(st.lists(acc_values, min_size=2, max_size=6).filter(lambda a: max(a) - min(a) > 1e-3),
       st.floats(0.1, 3), st.floats(0.1, 3))
def test_spread_non_decreasing_in_ur(acc, a, b):
    lo, hi = sorted((a, b))
    gaps = []
    for ur in (lo, hi):
        p = probabilities(update(init_uniform(len(acc), ur), acc))
        gaps.append(p.max() - p.min())
    assert gaps[1] >= gaps[0] - 1e-12


def _unique_easiest(acc):
    return sorted(acc)[-1] - sorted(acc)[-2] > 1e-3


@given(st.lists(acc_values, min_size=2, max_size=6).filter(_unique_easiest), st.integers(32, 256))
def test_easiest_composition_gets_smallest_subbatch(acc, num_x):
    p = probabilities(update(init_uniform(len(acc)), acc))
    sizes = subbatch_sizes(p, num_x, 1)
    easiest = int(np.argmax(acc))
    assert sizes[easiest] == sizes.min()


def test_subbatch_examples():
    np.testing.assert_array_equal(subbatch_sizes([1 / 3] * 3, 128, 1), [43, 43, 42])
    np.testing.assert_array_equal(subbatch_sizes([1, 0, 0], 10, 1), [8, 1, 1])
    np.testing.assert_array_equal(subbatch_sizes([0.5, 0.5], 100, 1), [50, 50])
    with pytest.raises(InfeasiblePlanError):
        subbatch_sizes([0.5, 0.5], 3, 2)


def test_subbatch_matches_bruteforce_oracle():
    rs = np.random.default_rng(7)
    for _ in range(300):
        n = int(rs.integers(2, 6))
        p = rs.dirichlet(np.full(n, 0.7))
        min_size = int(rs.integers(0, 3))
        num_x = int(rs.integers(n * min_size, 200)) or 1
        sizes = subbatch_sizes(p, num_x, min_size)
        assert sizes.sum() == num_x and sizes.min() >= min_size
        assert sizes.tolist() == largest_remainder_bruteforce(p, num_x, min_size)


def test_plan_epoch_partition():
    state = update(init_uniform(3), [0.9, 0.5, 0.2])
    plan = plan_epoch(state, 101, RngStream(3))
    segs = plan.segments()
    assert [len(s) for s in segs] == subbatch_sizes(probabilities(state), 101, 1).tolist()
    assert sorted(np.concatenate(segs).tolist()) == list(range(101))
    again = plan_epoch(state, 101, RngStream(3))
    assert np.array_equal(plan.assignment, again.assignment)


def test_plan_steps_drop_last_and_partition():
    p = probabilities(init_uniform(3))
    steps = plan_steps(p, 2000, 128, RngStream(1))
    assert len(steps) == 15  # 2000 // 128, remainder dropped
    used = np.concatenate([s.assignment for s in steps])
    assert len(used) == len(set(used.tolist())) == 15 * 128
    assert all(s.sizes.tolist() == [43, 43, 42] for s in steps)


def test_empty_dataset():
    with pytest.raises(ParameterError):
        plan_epoch(init_uniform(2), 0, RngStream(0))
