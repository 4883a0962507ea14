import numpy as np
import pytest
from hypothesis import given, strategies as st

from edgehedge.domain import (ActionSet, EdgeServerState, EnvState, NormalizationSpec, StateEncoder,
                              enumerate_actions, flatten_state)
from edgehedge.errors import ConfigError, StateError


def test_enumerate_small():
    assert enumerate_actions(1) == [ActionSet({0}, 1)]
    assert [set(a.members) for a in enumerate_actions(2)] == [{0}, {1}, {0, 1}]
    assert len(enumerate_actions(5)) == 31


@pytest.mark.parametrize("n", [0, 17, -1])
def test_enumerate_rejects_bad_n(n):
    with pytest.raises(ConfigError):
        enumerate_actions(n)


@pytest.mark.parametrize("n", range(1, 9))
def test_index_bitmask_roundtrip(n):
    actions = enumerate_actions(n)
    assert len(actions) == 2**n - 1
    assert len(set(actions)) == len(actions)
    for i, a in enumerate(actions):
        assert a.index == i
        assert a.bitmask == i + 1
        assert ActionSet.from_index(i, n) == a
        assert ActionSet(a.members, n) == a


def test_action_equality_ignores_member_order():
    assert ActionSet([2, 0, 1], 3) == ActionSet({1, 2, 0}, 3)
    assert hash(ActionSet([2, 0], 3)) == hash(ActionSet([0, 2], 3))


def test_action_validation():
    with pytest.raises(ConfigError):
        ActionSet(set(), 3)
    with pytest.raises(ConfigError):
        ActionSet({3}, 3)


def test_subset_test():
    assert ActionSet({0}, 3).issubset(ActionSet({0, 2}, 3))
    assert not ActionSet({1}, 3).issubset(ActionSet({0, 2}, 3))


def test_server_invariants():
    with pytest.raises(StateError):
        EdgeServerState(0.0, 1.0, 0.1, 0.1, 0, 0.0)
    with pytest.raises(StateError):
        EdgeServerState(1.0, 1.0, 1.2, 0.1, 0, 0.0)
    with pytest.raises(StateError):
        EdgeServerState(1.0, 1.0, 0.1, 0.1, 0, -0.1)


SERVER_BOUNDS = [(1.0, 100.0), (1.0, 120.0), (0.0, 1.0), (0.0, 1.0), (0.0, 4.0), (0.0, 0.02)]
STATIC_BOUNDS = [(1.0, 10.0), (0.1, 2.0), (0.0, 1.0), (0.0, 2.0)]
USER_BOUNDS = [(5.0, 50.0), (5.0, 80.0)]


def _norm(n=5):
    return NormalizationSpec.for_layout(n, SERVER_BOUNDS, STATIC_BOUNDS, USER_BOUNDS)


def _state_at(n, pick):
    servers = tuple(EdgeServerState(*[pick(b) for b in SERVER_BOUNDS[:4]], int(pick(SERVER_BOUNDS[4])),
                                    pick(SERVER_BOUNDS[5])) for _ in range(n))
    static = [pick(b) for b in STATIC_BOUNDS]
    user = [pick(b) for b in USER_BOUNDS]
    return EnvState(servers, static[0], static[1], tuple(static[2:]), *user)


def test_flatten_bounds_map_to_zero_and_one():
    norm = _norm()
    assert np.array_equal(flatten_state(_state_at(5, lambda b: b[0]), norm), np.zeros(36))
    assert np.array_equal(flatten_state(_state_at(5, lambda b: b[1]), norm), np.ones(36))


def test_flatten_length_and_mismatch():
    # 6 features x 5 servers + 2 sizes + 2 service features + 2 user bandwidths
    assert flatten_state(_state_at(5, lambda b: b[0]), _norm()).shape == (36,)
    with pytest.raises(StateError):
        flatten_state(_state_at(4, lambda b: b[0]), _norm(5))


def test_normalization_requires_min_below_max():
    with pytest.raises(ConfigError):
        NormalizationSpec(np.array([0.0, 1.0]), np.array([1.0, 1.0]))


@given(st.lists(st.floats(-1e3, 1e3), min_size=36, max_size=36))
def test_flatten_clamped_and_deterministic(values):
    norm = _norm()
    enc = StateEncoder(norm).fit()
    out = enc.transform([np.array(values)])
    assert out.shape == (1, 36)
    assert np.all((out >= 0) & (out <= 1))
    assert np.array_equal(out, enc.transform([np.array(values)]))


def test_encoder_matches_flatten_and_get_params():
    norm = _norm()
    state = _state_at(5, lambda b: 0.5 * (b[0] + b[1]))
    enc = StateEncoder(norm).fit()
    assert np.array_equal(enc.transform([state])[0], flatten_state(state, norm))
    assert enc.get_params()["norm"] is norm
