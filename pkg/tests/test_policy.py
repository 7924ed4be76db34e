import numpy as np
import pytest
from hypothesis import given, strategies as st

from advtrain import nn
from advtrain.errors import UsageError
from advtrain.policy import (
    LOG_STD_MAX, LOG_STD_MIN, importance_ratio, log_prob, make_policy, make_value, sample_action, value,
)


def _one_d(mean=0.0, log_std=0.0):
    """1-d policy whose pre-squash mean is the constant ``mean``."""
    p = make_policy(1, 1, np.random.default_rng(0), hidden=(4,))
    p.trunk.weights[-1][:] = 0.0
    p.trunk.biases[-1][0] = mean
    p.set_log_std(log_std)
    return p


def test_near_deterministic_policy(rng):
    p = make_policy(11, 2, rng, log_std_init=LOG_STD_MIN)
    obs = rng.uniform(-1, 1, 11)
    target = p.mean_action(obs)
    noise = [np.abs(sample_action(p, obs, rng).action - target).max() for _ in range(1000)]
    assert np.mean(np.array(noise) < 0.05) > 0.99


def test_same_seed_same_sample(rng):
    p = make_policy(11, 2, rng)
    obs = np.zeros(11)
    a = sample_action(p, obs, np.random.default_rng(4))
    b = sample_action(p, obs, np.random.default_rng(4))
    assert np.array_equal(a.action, b.action) and a.log_prob == b.log_prob


def test_monte_carlo_moments():
    mu, log_std = 0.3, np.log(0.7)
    p = _one_d(mu, log_std)
    r = np.random.default_rng(1)
    u = np.array([sample_action(p, np.zeros(1), r).presquash[0] for _ in range(100_000)])
    se = 0.7 / np.sqrt(u.size)
    assert abs(u.mean() - mu) < 3 * se
    # std of the sample std of a normal is sigma/sqrt(2n)
    assert abs(u.std() - 0.7) < 3 * 0.7 / np.sqrt(2 * u.size)


def test_log_prob_examples():
    p = _one_d()
    assert log_prob(p, np.zeros(1), np.zeros(1)) == pytest.approx(-0.5 * np.log(2 * np.pi))
    p = _one_d(0.2, np.log(0.3))
    grid = np.linspace(-6, 6, 200_001)
    dens = np.exp(log_prob(p, np.zeros((grid.size, 1)), grid[:, None]))
    assert abs(np.trapezoid(dens, grid) - 1.0) < 1e-3


def test_ratio_examples():
    p = _one_d(0.0, 0.0)
    assert importance_ratio(p, p, np.zeros(1), np.array([0.4])) == 1.0
    narrow = _one_d(0.0, np.log(0.5))
    assert importance_ratio(narrow, p, np.zeros(1), np.zeros(1)) == pytest.approx(2.0, abs=1e-12)


def test_ratio_matches_closed_form(rng):
    for _ in range(50):
        m0, m1 = rng.normal(size=2)
        s0, s1 = rng.uniform(-1, 0.5, 2)
        u = rng.normal()
        direct = np.exp(-0.5 * ((u - m1) / np.exp(s1)) ** 2 - s1 + 0.5 * ((u - m0) / np.exp(s0)) ** 2 + s0)
        got = importance_ratio(_one_d(m1, s1), _one_d(m0, s0), np.zeros(1), np.array([u]))
        assert got == pytest.approx(direct, rel=1e-12)


@given(st.lists(st.floats(-1, 1), min_size=11, max_size=11), st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_ratio_identity_property(obs, u):
    p = make_policy(11, 2, np.random.default_rng(0))
    assert importance_ratio(p, p.copy(), np.array(obs), np.array(u)) == 1.0


def test_log_std_stays_clamped(rng):
    p = make_policy(11, 2, rng)
    p.trunk.biases[-1][2:] = [-9.0, 4.0]
    p.pin_log_std()
    assert LOG_STD_MIN <= p.log_std.min() and p.log_std.max() <= LOG_STD_MAX
    assert (p.trunk.weights[-1][2:] == 0).all()


def test_rejects_non_finite_observation(rng):
    p = make_policy(11, 2, rng)
    with pytest.raises(UsageError):
        sample_action(p, np.full(11, np.nan), rng)


def test_value_examples(rng):
    v = make_value(11, rng)
    obs = rng.uniform(-1, 1, 11)
    assert value(v, obs) == 0.0
    v.net.weights[-1][:] = rng.normal(size=v.net.weights[-1].shape)
    assert value(v, obs) == value(v, obs)
    h = obs
    for w, b, act in zip(v.net.weights, v.net.biases, v.net.activations):
        h = w @ h + b
        h = np.tanh(h) if act == "tanh" else h
    assert value(v, obs) == pytest.approx(h[0], abs=1e-12)
    assert value(v, obs) == nn.predict(v.net, obs)[0]
