import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrlnav import nn
from hrlnav.nn.policy import HeadSpec, NetConfig, RecurrentActorCritic
from hrlnav.ppo import (
    PpoConfig,
    PpoLearner,
    RolloutBuffer,
    compute_gae,
    joint_action_loss,
    joint_log_prob,
    lr_schedule,
    recurrent_minibatches,
)


def brute_force_gae(rewards, values, dones, bootstrap, gamma, tau):
    """Direct double sum over TD errors, truncated at episode ends."""
    n = len(rewards)
    v_next = np.append(values[1:], bootstrap)
    delta = rewards + gamma * v_next * (1 - dones) - values
    adv = np.zeros(n)
    for t in range(n):
        acc, coef = 0.0, 1.0
        for k in range(t, n):
            acc += coef * delta[k]
            if dones[k]:
                break
            coef *= gamma * tau
        adv[t] = acc
    return adv


def test_gae_matches_brute_force_on_random_rollouts():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 60))
        r = rng.normal(size=n)
        v = rng.normal(size=n)
        d = (rng.random(n) < 0.1).astype(float)
        boot = rng.normal()
        gamma, tau = rng.uniform(0.8, 1.0), rng.uniform(0.0, 1.0)
        adv, ret = compute_gae(r, v, d, boot, gamma, tau)
        ref = brute_force_gae(r, v, d, boot, gamma, tau)
        np.testing.assert_allclose(adv, ref, atol=1e-6)
        np.testing.assert_allclose(ret, ref + v, atol=1e-6)


def test_gae_tau_one_gives_discounted_return_minus_value():
    r = np.array([1.0, 0.0, 2.0])
    v = np.array([0.5, 0.1, 0.3])
    adv, ret = compute_gae(r, v, np.zeros(3), 4.0, 0.9, 1.0)
    mc = [1 + 0.9 * 0 + 0.81 * 2 + 0.729 * 4, 0 + 0.9 * 2 + 0.81 * 4, 2 + 0.9 * 4]
    np.testing.assert_allclose(ret, mc, atol=1e-12)


def test_gae_tau_zero_is_one_step_td():
    rng = np.random.default_rng(1)
    r, v = rng.normal(size=5), rng.normal(size=5)
    adv, _ = compute_gae(r, v, np.zeros(5), 0.7, 0.99, 0.0)
    np.testing.assert_allclose(adv, r + 0.99 * np.append(v[1:], 0.7) - v, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_gae_per_column_with_validity_suffix(seed, n_cols):
    rng = np.random.default_rng(seed)
    T = 12
    r, v = rng.normal(size=(T, n_cols)), rng.normal(size=(T, n_cols))
    d = (rng.random((T, n_cols)) < 0.2).astype(float)
    counts = rng.integers(1, T + 1, size=n_cols)
    valid = np.arange(T)[:, None] < counts[None]
    boot = rng.normal(size=n_cols)
    adv, _ = compute_gae(r, v, d, boot, 0.99, 0.95, valid)
    for c in range(n_cols):
        k = counts[c]
        ref = brute_force_gae(r[:k, c], v[:k, c], d[:k, c], boot[c], 0.99, 0.95)
        np.testing.assert_allclose(adv[:k, c], ref, atol=1e-9)
        assert np.all(adv[k:, c] == 0)


def test_gae_rejects_empty():
    with pytest.raises(ValueError):
        compute_gae([], [], [], 0.0, 0.99, 0.95)


def test_lr_schedule():
    assert lr_schedule(0, 1e-4, 1000) == 1e-4
    assert lr_schedule(500, 1e-4, 1000) == pytest.approx(5e-5)
    assert lr_schedule(1000, 1e-4, 1000) == 0.0
    assert lr_schedule(700, 1e-4, 1000, decay=False) == 1e-4
    with pytest.raises(ValueError):
        lr_schedule(1001, 1e-4, 1000)


def test_config_validation():
    PpoConfig().validate()
    for bad in ({"clip": 0.0}, {"gamma": 1.5}, {"epochs": 0}, {"learning_rate": -1.0}):
        with pytest.raises(ValueError):
            PpoConfig(**bad).validate()


def test_surrogate_at_ratio_one_is_minus_mean_advantage():
    lp = nn.tensor(np.array([-1.0, -2.0, -0.5]))
    adv = np.array([1.0, -2.0, 4.0])
    loss, ratio = joint_action_loss([lp], lp.data.copy(), adv)
    assert loss.item() == pytest.approx(-adv.mean())
    np.testing.assert_allclose(ratio.data, 1.0)


def test_surrogate_clipping_is_pessimistic():
    # ratio e^0.5 ~ 1.65: positive advantage is clipped at 1.2, negative is not
    lp = nn.tensor(np.array([0.0, 0.0]))
    old = np.array([-0.5, -0.5])
    loss, _ = joint_action_loss([lp], old, np.array([1.0, 0.0]))
    assert loss.item() == pytest.approx(-1.2 / 2)
    loss, _ = joint_action_loss([lp], old, np.array([0.0, -1.0]))
    assert loss.item() == pytest.approx(np.exp(0.5) / 2)


def test_surrogate_validity_mask_and_shape_checks():
    lp = nn.tensor(np.array([0.0, 0.0, 0.0]))
    loss, _ = joint_action_loss([lp], np.zeros(3), np.array([1.0, 100.0, 3.0]), valid=np.array([1, 0, 1]))
    assert loss.item() == pytest.approx(-2.0)
    with pytest.raises(ValueError):
        joint_action_loss([lp], np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        joint_log_prob([lp, nn.tensor(np.zeros(2))])


def test_joint_log_prob_sums_heads():
    a, b = nn.tensor(np.array([-1.0, -2.0])), nn.tensor(np.array([-0.5, -0.25]))
    np.testing.assert_allclose(joint_log_prob([a, b]).data, [-1.5, -2.25])


def filled_buffer(rng, cap=10, n_envs=3, counts=(10, 7, 4)):
    buf = RolloutBuffer(cap, n_envs, (1, 2, 2), 2, [(), (2,)], 3)
    for e, c in enumerate(counts):
        for t in range(c):
            buf.add([e], np.full((1, 1, 2, 2), t), np.full((1, 2), e), [np.array([t]), np.array([[e, t]])],
                    t + 100 * e, 0.0, 1.0, float(t == 3), np.full((1, 3), 1000 * e + t), float(t != 0))
    buf.compute_advantages(np.zeros(n_envs), 0.99, 0.95)
    return buf


def test_buffer_overflow_raises():
    buf = RolloutBuffer(2, 1, (1, 2, 2), 2, [()], 3)
    for _ in range(2):
        buf.add([0], np.zeros((1, 1, 2, 2)), np.zeros((1, 2)), [np.zeros(1)], 0, 0, 0, 0, np.zeros((1, 3)), 1)
    assert len(buf) == 2
    with pytest.raises(OverflowError):
        buf.add([0], np.zeros((1, 1, 2, 2)), np.zeros((1, 2)), [np.zeros(1)], 0, 0, 0, 0, np.zeros((1, 3)), 1)
    buf.clear()
    assert len(buf) == 0


@pytest.mark.parametrize("seg", [1, 3, 4, 16])
def test_minibatches_cover_every_valid_entry_once(seg):
    rng = np.random.default_rng(seg)
    buf = filled_buffer(rng)
    seen = []
    for mb in recurrent_minibatches(buf, 4, seg, rng):
        L, B = mb.masks.shape
        w = mb.valid.reshape(L, B)
        # log-probs encode (env, t) as t + 100 env
        seen.extend(mb.old_log_probs[mb.valid].astype(int).tolist())
        # the replayed state is the stored state at each segment's first entry
        first = mb.old_log_probs.reshape(L, B)[0]
        np.testing.assert_array_equal(mb.h0[:, 0], 1000 * (first // 100) + first % 100)
        assert np.all(mb.masks[0] == 1.0)
        assert np.all(w[0])
    expected = [t + 100 * e for e, c in enumerate((10, 7, 4)) for t in range(c)]
    assert sorted(seen) == sorted(expected)


def bandit_policy(seed):
    cfg = NetConfig(conv_channels=(2,), map_fc=4, vec_fc=4, hidden=8)
    return RecurrentActorCritic((1, 3, 3), 2, [HeadSpec("categorical", 3)], cfg, seed=seed)


def test_ppo_solves_three_armed_bandit():
    pol = bandit_policy(0)
    cfg = PpoConfig(learning_rate=3e-3, rollout_steps=16, minibatches=2, segment_length=4, total_updates=40, entropy_coef=0.0)
    learner = PpoLearner(pol, cfg, seed=0)
    rng = np.random.default_rng(0)
    n = 8
    buf = RolloutBuffer(cfg.rollout_steps, n, (1, 3, 3), 2, [()], 8)
    maps, vecs = np.zeros((n, 1, 3, 3), np.float32), np.zeros((n, 2), np.float32)
    payout = np.array([0.0, 0.2, 1.0])
    for upd in range(40):
        for _ in range(cfg.rollout_steps):
            h = pol.initial_state(n)
            acts, logps, values, _ = pol.act(maps, vecs, h, rng)
            buf.add(np.arange(n), maps, vecs, acts, logps[0], values, payout[acts[0]], np.ones(n), h, np.zeros(n))
        buf.compute_advantages(np.zeros(n), cfg.gamma, cfg.gae_tau)
        learner.update(buf, upd)
        buf.clear()
    with nn.no_grad():
        probs = np.exp(pol.evaluate(maps[None], vecs[None], pol.initial_state(n), np.zeros((1, n)), [np.full(n, 2)])[0][0].data)
    assert probs.min() > 0.9


def test_learner_state_round_trip():
    a = PpoLearner(bandit_policy(1), PpoConfig(), seed=0)
    a.optimizer.step([np.ones_like(p.data) for p in a.policy.parameters()])
    arrays = a.state_arrays("x")
    b = PpoLearner(bandit_policy(2), PpoConfig(), seed=0)
    b.load_arrays(arrays, "x")
    assert b.optimizer.state.t == 1
    for pa, pb in zip(a.policy.parameters(), b.policy.parameters()):
        np.testing.assert_array_equal(pa.data, pb.data)
