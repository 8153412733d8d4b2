import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_instance
from oracles import central_differences, leader_mse
from poisonforge.bilevel import AttackState, StaleStateError, hypergradient, leader_objective, refit
from poisonforge.dataset import Dataset, PoisonSet
from poisonforge.synthetic import make_schema


def toy_state():
    # four training rows, one poison row at x = 1 with y = 0, lambda = 0.1
    schema = make_schema(1)
    train = Dataset(schema, [[0.0], [0.5], [1.0], [0.5]], np.zeros((4, 0)), [0.0, 0.5, 1.0, 0.0])
    poison = PoisonSet(schema, [[1.0]], np.zeros((1, 0)), [0.0])
    return AttackState(train, poison, 0.1)


def test_toy_by_hand():
    # N = 5, mean x = 0.6, mean y = 0.3, Sxx = 0.7, Sxy = 0.35
    # w = Sxy / (Sxx + N lam) = 7/24, c = 0.3 - 0.6 w = 1/8
    # train residuals 6/48, -11/48, -28/48, 13/48 give MSE 1110/9216
    state = toy_state()
    w, c = state.theta
    assert w == pytest.approx(7 / 24, abs=1e-14)
    assert c == pytest.approx(1 / 8, abs=1e-14)
    assert leader_objective(state) == pytest.approx(1110 / 9216, abs=1e-15)


def test_matches_independent_oracle():
    rng = np.random.default_rng(3)
    train, poison = random_instance(rng, 20, 3, (2, 3), q=4)
    state = AttackState(train, poison, 0.05)
    expected = leader_mse(train.features, train.y, poison.features, poison.y, 0.05)
    assert leader_objective(state) == pytest.approx(expected, rel=1e-10)


def fd_gradient(state):
    base = state.snapshot()

    def f(num):
        value = state.evaluate(num=num)
        return value

    out = central_differences(f, base[0], h=1e-5)
    state.restore(base)
    return out


@given(
    st.integers(0, 2**32 - 1),
    st.integers(2, 25),
    st.integers(1, 4),
    st.lists(st.integers(2, 3), max_size=2),
    st.integers(1, 4),
    st.sampled_from([0.01, 0.1, 1.0]),
)
def test_hypergradient_matches_finite_differences(seed, n, m, counts, q, lam):
    rng = np.random.default_rng(seed)
    train, poison = random_instance(rng, n, m, tuple(counts), q)
    state = AttackState(train, poison, lam)
    analytic = hypergradient(state)
    numeric = fd_gradient(state)
    assert analytic.shape == (q, m)
    np.testing.assert_allclose(analytic, numeric, rtol=0, atol=1e-4)


def test_hypergradient_subset_rows(rng):
    train, poison = random_instance(rng, 10, 2, (2,), q=3)
    state = AttackState(train, poison, 0.1)
    full = hypergradient(state)
    np.testing.assert_array_equal(hypergradient(state, [2, 0]), full[[2, 0]])
    assert hypergradient(state, []).shape == (0, 2)


def test_gradient_vanishes_under_heavy_regularisation(rng):
    train, poison = random_instance(rng, 15, 3, (2,), q=2)
    state = AttackState(train, poison, 1e8)
    assert np.max(np.abs(hypergradient(state))) < 1e-6


def test_duplicate_rows_get_equal_gradients(rng):
    train, poison = random_instance(rng, 12, 3, (3,), q=2)
    poison.num[1] = poison.num[0]
    poison.cat[1] = poison.cat[0]
    dup = PoisonSet(poison.schema, poison.num, poison.cat, [poison.y[0], poison.y[0]])
    grad = hypergradient(AttackState(train, dup, 0.2))
    np.testing.assert_allclose(grad[0], grad[1], rtol=0, atol=1e-14)


def test_no_numerical_features(rng):
    train, poison = random_instance(rng, 8, 0, (3,), q=2)
    state = AttackState(train, poison, 0.1)
    assert hypergradient(state).shape == (2, 0)


def test_refit_is_idempotent(rng):
    train, poison = random_instance(rng, 10, 2, (2,), q=2)
    state = AttackState(train, poison, 0.1)
    first = (state.theta.copy(), state.leader_mse)
    refit(state)
    np.testing.assert_array_equal(state.theta, first[0])
    assert state.leader_mse == first[1]


def test_stale_state_detected(rng):
    train, poison = random_instance(rng, 10, 2, q=1)
    state = AttackState(train, poison, 0.1)
    poison.num[0, 0] = 1 - poison.num[0, 0]
    assert not state.in_sync()
    with pytest.raises(StaleStateError):
        leader_objective(state)
    with pytest.raises(StaleStateError):
        hypergradient(state)
    state.refit()
    assert state.in_sync()


def test_snapshot_restore(rng):
    train, poison = random_instance(rng, 10, 2, (2,), q=2)
    state = AttackState(train, poison, 0.1)
    snap, value = state.snapshot(), state.leader_mse
    state.evaluate(num=np.ones_like(poison.num))
    state.restore(snap)
    assert state.leader_mse == value


def test_requires_positive_lambda(rng):
    train, poison = random_instance(rng, 5, 1, q=1)
    with pytest.raises(ValueError):
        AttackState(train, poison, 0.0)
