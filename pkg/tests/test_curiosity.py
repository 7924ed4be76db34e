import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import binomtest

from advtrain import nn
from advtrain.curiosity import (
    FEATURE_DIM, RewardWeights, RndPair, RunningStd, estimate_victim_reward, extract_features, intrinsic_reward,
    intrinsic_rewards, make_rnd, make_van, raw_intrinsic, rnd_update, van_td_update, van_value,
)
from advtrain.errors import ConfigError, UsageError

GAMMA = 0.95


def test_reward_estimate_examples():
    w = RewardWeights(1.0, 0.1, 1.0)
    assert estimate_victim_reward((1, 0, 0), w) == 1.0
    assert estimate_victim_reward((0, 0, 1), w) == -1.0
    assert estimate_victim_reward((0, 0.25, 0), w) == pytest.approx(-0.025)
    with pytest.raises(ConfigError):
        RewardWeights(-1.0)


# 4-state MDP under a fixed policy. Rows: P(s' | s); state transitions into
# "T" end the episode. Rewards are per transition.
P = np.array([
    [0.00, 0.50, 0.25, 0.00],
    [0.25, 0.00, 0.50, 0.25],
    [0.00, 0.25, 0.25, 0.25],
    [0.50, 0.00, 0.00, 0.25],
])
P_TERM = 1.0 - P.sum(axis=1)  # probability of terminating from each state
R = np.array([
    [0.0, 1.0, -0.5, 0.0],
    [0.2, 0.0, 1.0, -1.0],
    [0.0, 0.5, 0.5, 1.0],
    [1.0, 0.0, 0.0, 0.5],
])
R_TERM = np.array([-1.0, 0.0, 2.0, -1.0])


def _mdp_batch():
    """Every transition replicated in proportion to its probability (quarters)."""
    obs, nxt, rew, done = [], [], [], []
    eye = np.eye(4)
    for s in range(4):
        for s2 in range(4):
            for _ in range(int(round(P[s, s2] * 4))):
                obs.append(eye[s]), nxt.append(eye[s2]), rew.append(R[s, s2]), done.append(0.0)
        for _ in range(int(round(P_TERM[s] * 4))):
            obs.append(eye[s]), nxt.append(eye[s]), rew.append(R_TERM[s]), done.append(1.0)
    return np.array(obs), np.array(rew), np.array(nxt), np.array(done)


def _matrix_solution():
    rbar = (P * R).sum(axis=1) + P_TERM * R_TERM
    return np.linalg.solve(np.eye(4) - GAMMA * P, rbar)


def test_van_matches_policy_evaluation_on_4_state_mdp():
    v_true = _matrix_solution()
    assert np.abs(v_true).min() > 0.2  # relative tolerance is meaningful
    obs, rew, nxt, done = _mdp_batch()
    van = make_van(4, np.random.default_rng(0))
    eye = np.eye(4)
    for i in range(10_000):
        van_td_update(van, obs, rew, nxt, done, GAMMA, lr=3e-3)
        if i % 500 == 499 and np.all(np.abs(van_value(van, eye) - v_true) <= 0.02 * np.abs(v_true)):
            break
    rel = np.abs(van_value(van, eye) - v_true) / np.abs(v_true)
    assert rel.max() < 0.02, (i, rel)


def test_two_state_absorbing_chain():
    # the recurrent state stays with prob 0.9 and pays 1 per step until absorption
    stay = 0.9
    v_true = 1.0 / (1.0 - GAMMA * stay)
    s = np.array([[1.0, 0.0]])
    obs = np.repeat(s, 10, axis=0)
    nxt = np.vstack([np.repeat(s, 9, axis=0), [[0.0, 1.0]]])
    done = np.array([0.0] * 9 + [1.0])
    van = make_van(2, np.random.default_rng(1))
    for _ in range(6000):
        van_td_update(van, obs, np.ones(10), nxt, done, GAMMA, lr=3e-3)
    assert van_value(van, s[0]) == pytest.approx(v_true, rel=0.05)


def test_td_terminal_and_fixed_point_examples(rng):
    van = make_van(3, rng)
    obs = rng.normal(size=(1, 3))
    loss = van_td_update(van, obs, np.array([-1.0]), obs, np.array([1.0]))
    assert loss == pytest.approx(1.0)
    van = make_van(3, rng)
    before = van.net.flat_params()
    assert van_td_update(van, obs, np.array([0.0]), obs, np.array([1.0])) == 0.0
    assert np.array_equal(before, van.net.flat_params())
    with pytest.raises(UsageError):
        van_td_update(van, np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3)), np.zeros(0))


def test_features_and_composition(rng):
    van = make_van(11, rng, head_scale=1.0)
    obs = rng.uniform(-1, 1, 11)
    f = extract_features(van, obs)
    assert f.shape == (FEATURE_DIM,)
    assert np.array_equal(f, extract_features(van, obs))
    w, b = van.net.weights[-1], van.net.biases[-1]
    assert van_value(van, obs) == pytest.approx(float((w @ f + b)[0]), abs=1e-12)


def _const_net(c):
    return nn.MlpNet((1, 1), ("identity",), [np.zeros((1, 1))], [np.array([c])])


def test_intrinsic_examples(rng):
    pair = RndPair(_const_net(0.3), _const_net(0.1))
    assert raw_intrinsic(pair, np.zeros((1, 1)))[0] == pytest.approx(0.04)
    assert intrinsic_reward(pair, np.zeros(1)) == pytest.approx(0.04)
    rnd = make_rnd(rng=rng)
    rnd.predictor = rnd.target.copy()
    assert (raw_intrinsic(rnd, rng.normal(size=(20, FEATURE_DIM))) == 0).all()


def test_rnd_update_contract(rng):
    rnd = make_rnd(rng=rng)
    target = rnd.target.flat_params()
    feats = rng.normal(size=(64, FEATURE_DIM))
    losses = [rnd_update(rnd, feats, lr=1e-3) for _ in range(101)]
    assert np.array_equal(target, rnd.target.flat_params())
    assert sum(b < a for a, b in zip(losses, losses[1:])) >= 95
    with pytest.raises(UsageError):
        rnd_update(rnd, np.zeros((0, FEATURE_DIM)))


def _novelty_gap(seed):
    r = np.random.default_rng(seed)
    rnd = make_rnd(rng=r)
    # two disjoint clusters in feature space
    a = np.tanh(r.normal(0.5, 0.3, (256, FEATURE_DIM)))
    b = np.tanh(r.normal(-0.5, 0.3, (256, FEATURE_DIM)))
    for _ in range(300):
        rnd_update(rnd, a, lr=1e-3)
    return raw_intrinsic(rnd, b).mean() - raw_intrinsic(rnd, a).mean()


def test_rnd_novelty_sign_test():
    gaps = [_novelty_gap(s) for s in range(10)]
    wins = sum(g > 0 for g in gaps)
    assert binomtest(wins, 10, 0.5, alternative="greater").pvalue < 0.05


def test_intrinsic_normaliser_uses_prior_scale(rng):
    rnd = make_rnd(rng=rng)
    f = rng.normal(size=(10, FEATURE_DIM))
    scaled, raw = intrinsic_rewards(rnd, f)
    assert np.array_equal(scaled, raw)
    scaled2, raw2 = intrinsic_rewards(rnd, f)
    np.testing.assert_allclose(scaled2, raw2 / np.std(raw))


@given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=0, max_size=20), min_size=1, max_size=8))
def test_running_std_matches_batch(chunks):
    rs = RunningStd()
    for c in chunks:
        rs.update(c)
    flat = [x for c in chunks for x in c]
    assert rs.count == len(flat)
    if flat:
        assert rs.std == pytest.approx(float(np.std(flat)), rel=1e-6, abs=1e-6)
