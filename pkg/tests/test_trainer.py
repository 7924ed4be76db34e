from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import norm
import torch

from advtrain import nn
from advtrain.baselines import build_attacker
from advtrain.controllers import Idle, PolicyController, RouteFollower
from advtrain.curiosity import make_rnd, make_van, van_td_update
from advtrain.errors import ConfigError, UsageError
from advtrain.policy import log_prob, make_policy, make_value, sample_action
from advtrain.sim import OBS_DIM, Action, Terminal, get_scenario, reset, step
from advtrain.sim.world import TERMINAL_CODES, victim_reward_terms
from advtrain.curiosity import RewardWeights, estimate_victim_reward, extract_features, raw_intrinsic
from advtrain.trainer import (
    PpoConfig, clipped_surrogate, collect_rollouts, compute_advantages, ppo_update, train_attack, train_defense,
)
from advtrain.trainer.advantages import fill_intrinsic, fuse, gae_advantage, normalize, td_advantage
from advtrain.trainer.attack import ppo_attack_update, value_updates
from advtrain.trainer.defense import victim_batch
from advtrain.trainer.rollout import victim_continuation
from toys import reach_solved, train_reach

SC = get_scenario("nsjcr")


def _identity_net():
    return nn.MlpNet((1, 1), ("identity",), [np.array([[1.0]])], [np.array([0.0])])


def _buffer(seed=0, n=400, attacker=None):
    r = np.random.default_rng(seed)
    victim = make_policy(OBS_DIM, 2, r, role="victim")
    att = attacker or PolicyController(make_policy(OBS_DIM, 2, r), stochastic=True)
    return collect_rollouts(SC, att, PolicyController(victim, stochastic=False), n, r), victim, r


# ---------------------------------------------------------------- advantages


def test_td_advantage_examples():
    net = _identity_net()  # V(s) = s
    a = td_advantage(net, np.array([[1.0]]), np.array([1.0]), np.array([[2.0]]), np.array([0.0]), 0.95)
    assert a[0] == pytest.approx(1.9)
    a = td_advantage(net, np.array([[1.0]]), np.array([1.0]), np.array([[2.0]]), np.array([1.0]), 0.95)
    assert a[0] == pytest.approx(0.0)
    assert fuse(1.0, 0.5, 0.2) == pytest.approx(1.1)


def test_gae_limits(rng):
    net = make_value(3, rng, head_scale=1.0).net
    n = 40
    obs, nxt = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
    r = rng.normal(size=n)
    done = np.zeros(n)
    done[[9, 25, n - 1]] = 1.0
    np.testing.assert_allclose(gae_advantage(net, obs, r, nxt, done, 0.9, 0.0), td_advantage(net, obs, r, nxt, done, 0.9))
    # with each next_obs equal to the following obs, lam=1 telescopes to return-to-go minus V(s)
    nxt = np.vstack([obs[1:], obs[:1]])
    g, acc = np.zeros(n), 0.0
    for i in range(n - 1, -1, -1):
        acc = r[i] + 0.9 * acc * (1.0 - done[i])
        g[i] = acc
    v = nn.predict(net, obs)[:, 0]
    np.testing.assert_allclose(gae_advantage(net, obs, r, nxt, done, 0.9, 1.0), g - v, atol=1e-12)


def test_normalize_properties(rng):
    a = normalize(rng.normal(3, 5, 100))
    assert abs(a.mean()) < 1e-12 and a.std() == pytest.approx(1.0)
    assert (normalize(np.full(10, 4.0)) == 0).all()


def test_compute_advantages_raw_path_and_fusion():
    buf, _, r = _buffer()
    v_alpha = make_value(OBS_DIM, r, head_scale=1.0).net
    van = make_van(OBS_DIM, r, head_scale=1.0)
    v_ins = make_value(OBS_DIM, r, head_scale=1.0).net
    fill_intrinsic(buf, van, make_rnd(rng=r))
    adv = compute_advantages(buf, v_alpha, van.net, v_ins, 0.95, lam=0.2, normalize_channels=False)
    expect = buf.r_alpha + 0.95 * nn.predict(v_alpha, buf.next_obs_a)[:, 0] * (1 - buf.done) - nn.predict(v_alpha, buf.obs_a)[:, 0]
    np.testing.assert_allclose(adv.alpha, expect, atol=1e-12)
    np.testing.assert_array_equal(adv.fused, adv.alpha + 0.2 * adv.ins)
    normed = compute_advantages(buf, v_alpha, van.net, v_ins, 0.95, lam=0.2)
    np.testing.assert_array_equal(normed.fused, normed.alpha + 0.2 * normed.ins)
    np.testing.assert_allclose(normed.alpha, normalize(expect))
    rec = normed.records()[0]
    assert rec.a_fused == rec.a_alpha + 0.2 * rec.a_ins


def test_compute_advantages_errors():
    buf, _, r = _buffer(n=10)
    with pytest.raises(UsageError):
        compute_advantages(buf, None, None, make_value(OBS_DIM, r).net, 0.95)
    empty = replace(buf, **{k: getattr(buf, k)[:0] for k in ("done", "obs_a", "next_obs_a", "r_alpha")})
    with pytest.raises(UsageError):
        compute_advantages(empty, None, None, None, 0.95)


# ---------------------------------------------------------------- rollouts


def test_rollout_contracts():
    buf, _, _ = _buffer(n=1500)
    ends = np.flatnonzero(buf.done)
    assert len(ends) == buf.n_episodes and ends[-1] == len(buf) - 1
    finals = {TERMINAL_CODES[t] for t in (Terminal.COLLISION, Terminal.VICTIM_GOAL, Terminal.TIMEOUT, Terminal.OFF_ROAD)}
    assert set(buf.terminal[ends]) <= finals
    assert (buf.terminal[buf.done == 0] == TERMINAL_CODES[Terminal.RUNNING]).all()
    # recount oracle
    assert buf.r_alpha.sum() == sum(o.terminal is Terminal.COLLISION for o in buf.outcomes)
    assert buf.r_alpha.sum() == (buf.terminal == TERMINAL_CODES[Terminal.COLLISION]).sum()


def test_rollout_recount_with_mc_attacker():
    r = np.random.default_rng(5)
    victim = PolicyController(make_policy(OBS_DIM, 2, r, role="victim"), stochastic=False)
    buf = collect_rollouts(SC, RouteFollower(target_speed=9.0), victim, 3000, r)
    assert buf.n_collisions > 0
    assert buf.r_alpha.sum() == buf.n_collisions


def test_rollouts_deterministic():
    a, _, _ = _buffer(seed=3)
    b, _, _ = _buffer(seed=3)
    for k in ("obs_a", "act_a", "act_v", "r_alpha", "r_victim_hat", "tail_victim_hat", "done"):
        assert np.array_equal(getattr(a, k), getattr(b, k))


def test_victim_reward_channel_matches_terms():
    buf, _, _ = _buffer(n=300)
    assert (np.abs(buf.r_victim_hat) <= 1.1 + 1e-12).all()
    acc = buf.act_v[:, 0] ** 2
    running = buf.done == 0
    np.testing.assert_allclose(buf.r_victim_hat[running], -0.1 * acc[running], atol=1e-12)


def test_tails_only_on_attacker_off_road():
    r = np.random.default_rng(8)
    victim = PolicyController(make_policy(OBS_DIM, 2, r, role="victim"), stochastic=False)

    class Swerve:  # drive straight off the road
        def act(self, w, role, rng, obs=None):
            return RouteFollower().act(w, role, rng, obs)._replace(action=np.array([1.0, 1.0]))

    buf = collect_rollouts(SC, Swerve(), victim, 200, r)
    off = buf.terminal == TERMINAL_CODES[Terminal.OFF_ROAD]
    by_attacker = np.array([o.off_road_by == "attacker" for o in buf.outcomes])
    assert by_attacker.any()
    nz = (buf.tail_victim_hat != 0) | (buf.tail_victim != 0)
    assert not nz[buf.done == 0].any()
    assert (np.flatnonzero(nz) <= np.flatnonzero(off)[-1]).all()
    np.testing.assert_array_equal(buf.victim_targets(), buf.r_victim_hat + buf.tail_victim_hat)
    # the tail equals gamma times an attacker-free continuation of the final state
    w = reset(SC, "sample", np.random.default_rng(0))
    g_hat, _ = victim_continuation(w, victim, r, RewardWeights(), 0.95)
    manual, disc, ww = 0.0, 1.0, reset(SC, "none")
    while ww.terminal is Terminal.RUNNING:
        av = Action(*victim.act(ww, "victim", r).action)
        nxt = step(ww, av, Action())
        manual += disc * estimate_victim_reward(victim_reward_terms(ww, av, nxt), RewardWeights())
        disc *= 0.95
        ww = nxt
    assert g_hat == pytest.approx(manual, abs=1e-12)


def test_continuation_rows_follow_their_exit():
    r = np.random.default_rng(8)
    victim_policy = make_policy(OBS_DIM, 2, r, role="victim")

    class Swerve:
        def act(self, w, role, rng, obs=None):
            return RouteFollower().act(w, role, rng, obs)._replace(action=np.array([1.0, 1.0]))

    plain = collect_rollouts(SC, Swerve(), PolicyController(victim_policy), 150, np.random.default_rng(3))
    buf = collect_rollouts(SC, Swerve(), PolicyController(victim_policy), 150, np.random.default_rng(3),
                           record_continuation=True)
    np.testing.assert_array_equal(plain.obs_v, buf.obs_v)
    np.testing.assert_array_equal(plain.tail_victim, buf.tail_victim)
    cont = buf.continuation
    assert len(cont) > 0 and set(cont.source) <= set(np.flatnonzero(buf.tail_victim != 0))
    obs, nxt, pre, logp, rew, done, is_main = victim_batch(buf)
    assert len(obs) == len(buf) + len(cont) and is_main.sum() == len(buf)
    np.testing.assert_allclose(log_prob(victim_policy, obs, pre), logp, atol=1e-12)
    # every row's successor is the next row unless the row ends an episode
    cut = done[:-1] == 0
    np.testing.assert_array_equal(nxt[:-1][cut], obs[1:][cut])
    assert done[-1] == 1.0 and done.sum() == buf.n_episodes
    # exits with a continuation carry no folded tail
    exits = np.flatnonzero(is_main)[np.unique(cont.source)]
    np.testing.assert_array_equal(rew[exits], buf.r_victim[np.unique(cont.source)])
    main = victim_batch(buf, with_continuation=False)
    np.testing.assert_array_equal(main[4], buf.victim_targets(true_reward=True))


def test_fill_intrinsic_recomputation():
    buf, _, r = _buffer(n=200)
    van = make_van(OBS_DIM, r)
    rnd = make_rnd(rng=r)
    fill_intrinsic(buf, van, rnd)
    manual = np.array([raw_intrinsic(rnd, extract_features(van, o)[None])[0] for o in buf.obs_a])
    np.testing.assert_allclose(buf.r_ins_raw, manual, rtol=1e-12)
    rnd.predictor = rnd.target.copy()
    fill_intrinsic(buf, van, rnd)
    assert (buf.r_ins_raw == 0).all()
    same = np.repeat(buf.obs_a[:1], 3, axis=0)
    vals = raw_intrinsic(make_rnd(rng=r), extract_features(van, same))
    assert vals[0] == vals[1] == vals[2]


# ---------------------------------------------------------------- PPO update


def test_clip_arithmetic():
    val, grad = clipped_surrogate(np.array([2.0]), np.array([1.0]), 0.2)
    assert val[0] == pytest.approx(1.2) and grad[0] == 0.0
    val, grad = clipped_surrogate(np.array([0.5]), np.array([-1.0]), 0.2)
    assert val[0] == pytest.approx(-0.8) and grad[0] == 0.0
    val, grad = clipped_surrogate(np.array([1.1]), np.array([1.0]), 0.2)
    assert val[0] == pytest.approx(1.1) and grad[0] == 1.0


def test_first_minibatch_objective_is_mean_advantage_gap():
    buf, _, r = _buffer(n=300)
    policy = make_policy(OBS_DIM, 2, np.random.default_rng(1))
    # log-probs under the policy that is about to be updated
    from advtrain.policy import log_prob
    buf.logp_a[:] = log_prob(policy, buf.obs_a, buf.pre_a)
    fused, vic = r.normal(size=len(buf)), r.normal(size=len(buf))
    cfg = PpoConfig(batch_size=len(buf), epochs_per_update=1, rollout_steps=300)
    stats = ppo_update(policy, buf.obs_a, buf.pre_a, buf.logp_a, fused, vic, cfg, r)
    assert stats.first_ratio_max_dev < 1e-12
    assert stats.first_objective == pytest.approx(np.mean(fused - vic), abs=1e-12)


def _torch_clipped_ppo(policy, obs, pre, logp_old, adv, cfg):
    """Independent plain clipped PPO, full-batch, via autograd."""
    a = policy.action_dim
    ws = [torch.tensor(w, requires_grad=True) for w in policy.trunk.weights]
    bs = [torch.tensor(b, requires_grad=True) for b in policy.trunk.biases]
    opt = torch.optim.Adam(ws + bs, lr=cfg.lr_policy, betas=(0.9, 0.999), eps=1e-8)
    x, u = torch.tensor(obs), torch.tensor(pre)
    lo, A = torch.tensor(logp_old), torch.tensor(adv)
    for _ in range(cfg.epochs_per_update):
        h = x
        for i, (w, b) in enumerate(zip(ws, bs)):
            h = h @ w.T + b
            if i < len(ws) - 1:
                h = torch.tanh(h)
        mean, log_std = h[:, :a], bs[-1][a:]
        logp = (-0.5 * ((u - mean) / log_std.exp()) ** 2 - log_std - 0.5 * np.log(2 * np.pi)).sum(1)
        ratio = (logp - lo).exp()
        obj = torch.minimum(ratio * A, ratio.clamp(1 - cfg.clip_eps, 1 + cfg.clip_eps) * A).mean()
        opt.zero_grad()
        (-obj).backward()
        ws[-1].grad[a:] = 0.0
        opt.step()
        with torch.no_grad():
            bs[-1][a:].clamp_(-5.0, 1.0)
    return [w.detach().numpy() for w in ws], [b.detach().numpy() for b in bs]


def test_plain_ppo_matches_torch():
    buf, _, r = _buffer(n=256)
    base = build_attacker("ppo").ppo
    cfg = replace(base, batch_size=len(buf), epochs_per_update=4, target_kl=None, rollout_steps=256)
    policy = make_policy(OBS_DIM, 2, np.random.default_rng(2), head_scale=1.0)
    from advtrain.policy import log_prob
    logp_old = log_prob(policy, buf.obs_a, buf.pre_a) + r.normal(0, 0.1, len(buf))
    adv = r.normal(size=len(buf))
    ref_w, ref_b = _torch_clipped_ppo(policy.copy(), buf.obs_a, buf.pre_a, logp_old, adv, cfg)
    buf.logp_a[:] = logp_old
    from advtrain.trainer.advantages import Advantages
    z = np.zeros(len(buf))
    advs = Advantages(adv, z, z, adv, adv, z, z, adv, 0.0)
    ppo_attack_update(policy, buf, advs, cfg, r, use_victim_term=False)
    for mine, ref in zip(policy.trunk.weights + policy.trunk.biases, ref_w + ref_b):
        np.testing.assert_allclose(mine, ref, rtol=1e-9, atol=1e-11)


def test_opponent_term_is_subtracted_with_own_zero_gradient_region():
    # with both advantages equal the two terms cancel: no parameter movement
    buf, _, r = _buffer(n=200)
    policy = make_policy(OBS_DIM, 2, np.random.default_rng(4), head_scale=1.0)
    from advtrain.policy import log_prob
    logp = log_prob(policy, buf.obs_a, buf.pre_a)
    adv = r.normal(size=len(buf))
    before = policy.trunk.flat_params()
    stats = ppo_update(policy, buf.obs_a, buf.pre_a, logp, adv, adv.copy(), PpoConfig(rollout_steps=200), r)
    assert stats.objective == 0.0
    np.testing.assert_array_equal(before, policy.trunk.flat_params())


def _bandit_run(seed, updates=50):
    r = np.random.default_rng(seed)
    policy = make_policy(1, 1, r, hidden=(8,), log_std_init=0.0)
    cfg = PpoConfig(rollout_steps=64, batch_size=64)
    obs = np.zeros((64, 1))
    p_good = [norm.cdf(policy.mean_presquash(obs[0])[0] / np.exp(policy.log_std[0]))]
    for _ in range(updates):
        samples = [sample_action(policy, obs[0], r) for _ in range(64)]
        pre = np.array([s.presquash for s in samples])
        logp = np.array([s.log_prob for s in samples])
        adv = normalize(np.where(pre[:, 0] > 0, 1.0, -1.0))
        ppo_update(policy, obs, pre, logp, adv, None, cfg, r)
        p_good.append(norm.cdf(policy.mean_presquash(obs[0])[0] / np.exp(policy.log_std[0])))
    return np.array(p_good)


def test_bandit_mass_increases_monotonically():
    runs = [_bandit_run(s) for s in range(10)]
    monotone = [bool((np.diff(p) >= -1e-12).all()) for p in runs]
    assert sum(monotone) >= 9
    assert all(p[-1] > p[0] for p in runs)


def test_reach_toy_smoke():
    assert reach_solved(train_reach(0, iterations=120))


# ---------------------------------------------------------------- value updates


def test_value_updates_zero_rewards_zero_loss():
    buf, _, r = _buffer(n=200)
    for k in ("r_alpha", "r_victim_hat", "tail_victim_hat", "r_ins"):
        getattr(buf, k)[:] = 0.0
    cfg = PpoConfig(rollout_steps=200)
    losses = value_updates(buf, make_value(OBS_DIM, r).net, make_value(OBS_DIM, r).net, make_van(OBS_DIM, r), cfg, r)
    assert losses == {"alpha": 0.0, "ins": 0.0, "van": 0.0}


def test_van_update_delegates():
    buf, _, r = _buffer(n=200)
    van_a = make_van(OBS_DIM, np.random.default_rng(0), head_scale=1.0)
    van_b = van_a.copy()
    cfg = PpoConfig(rollout_steps=200, batch_size=len(buf), value_epochs=1)
    value_updates(buf, make_value(OBS_DIM, r).net, None, van_a, cfg, r)
    van_td_update(van_b, buf.obs_a, buf.victim_targets(), buf.next_obs_a, buf.done, cfg.gamma, cfg.lr_van)
    np.testing.assert_allclose(van_a.net.flat_params(), van_b.net.flat_params(), rtol=0, atol=1e-12)


def test_value_losses_decrease_on_fixed_buffer():
    for seed in range(3):
        buf, _, r = _buffer(seed=seed, n=400)
        v_alpha, van = make_value(OBS_DIM, r).net, make_van(OBS_DIM, r)
        cfg = PpoConfig(rollout_steps=400, batch_size=len(buf), value_epochs=1, lr_value=1e-3)
        hist = [value_updates(buf, v_alpha, None, van, cfg, r) for _ in range(51)]
        for k in ("alpha", "van"):
            losses = [h[k] for h in hist]
            assert sum(b < a for a, b in zip(losses, losses[1:])) >= 45, (seed, k)


# ---------------------------------------------------------------- stages


def test_build_attacker_terms():
    va = build_attacker("ppo-va")
    assert va.ppo.lambda_curiosity == 0 and va.use_victim_term and not va.use_curiosity
    ppo = build_attacker("ppo")
    assert ppo.active_terms() == {"attacker_advantage"}
    assert build_attacker("proposed").active_terms() >= {"victim_advantage", "intrinsic_advantage", "rnd_distillation"}
    assert build_attacker("mc") is None
    with pytest.raises(ConfigError):
        build_attacker("greedy")


def _smoke_attack(seed, method="proposed"):
    r = np.random.default_rng(seed)
    victim = make_policy(OBS_DIM, 2, np.random.default_rng(99), role="victim")
    cfg = build_attacker(method, PpoConfig(rollout_steps=200))
    return victim, train_attack(victim, SC, cfg, r, n_iterations=2)


def test_train_attack_deterministic_and_freezes_victim():
    victim, a = _smoke_attack(0)
    before = nn.checksum(victim.trunk)
    _, b = _smoke_attack(0)
    assert len(a.metrics) == 2
    for ra, rb in zip(a.metrics, b.metrics):
        for k in ra:
            assert ra[k] == rb[k] or (np.isnan(ra[k]) and np.isnan(rb[k]))
        assert 0.0 <= ra["crash_rate"] <= 1.0
    assert np.array_equal(a.policy.trunk.flat_params(), b.policy.trunk.flat_params())
    assert nn.checksum(victim.trunk) == before == nn.checksum(make_policy(OBS_DIM, 2, np.random.default_rng(99)).trunk)


def test_train_defense_freezes_attacker():
    r = np.random.default_rng(1)
    att = make_policy(OBS_DIM, 2, r)
    victim = make_policy(OBS_DIM, 2, r, role="victim")
    sums = nn.checksum(att.trunk), nn.checksum(victim.trunk)
    res = train_defense(PolicyController(att), victim, SC, PpoConfig(rollout_steps=200), r, n_iterations=2)
    assert (nn.checksum(att.trunk), nn.checksum(victim.trunk)) == sums
    assert nn.checksum(res.policy.trunk) != sums[1]
    with pytest.raises(UsageError):
        train_defense(Idle(), victim, SC, {}, r)
