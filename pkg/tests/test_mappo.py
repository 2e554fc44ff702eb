import numpy as np
import pytest

from cotune import mappo
from cotune.knobspace import default_space
from cotune.mappo import (HyperParams, TrajectoryBatch, Transition, critic_loss,
                          gae, policy_objective, returns, update)
from cotune.explore import critic_state_dim, observation_dims


def gae_bruteforce(rewards, values, bootstrap, gamma, lam):
    """Independent double-sum oracle: A_t = sum_k (gamma*lam)^k * delta_{t+k}."""
    n = len(rewards)
    next_values = list(values[1:]) + [bootstrap]
    deltas = [rewards[t] + gamma * next_values[t] - values[t] for t in range(n)]
    return np.array([
        sum((gamma * lam) ** k * deltas[t + k] for k in range(n - t))
        for t in range(n)
    ])


def test_gae_single_step():
    assert np.allclose(gae([1.0], [0.0], 0.0, 1.0, 1.0), [1.0])


def test_gae_lambda_zero_is_td_residual():
    rng = np.random.default_rng(0)
    r = rng.normal(size=6)
    v = rng.normal(size=6)
    adv = gae(r, v, 0.3, 0.9, 0.0)
    deltas = r + 0.9 * np.append(v[1:], 0.3) - v
    assert np.allclose(adv, deltas)


def test_gae_hand_case():
    assert np.allclose(gae([1.0, 1.0], [0.0, 0.0], 0.0, 0.5, 0.5), [1.25, 1.0])


def test_gae_matches_bruteforce():
    rng = np.random.default_rng(1)
    for _ in range(30):
        n = int(rng.integers(1, 11))
        r = rng.normal(size=n)
        v = rng.normal(size=n)
        boot = float(rng.normal())
        for gamma in (0.0, 0.5, 0.95, 1.0):
            for lam in (0.0, 0.5, 0.95, 1.0):
                assert np.allclose(gae(r, v, boot, gamma, lam),
                                   gae_bruteforce(r, v, boot, gamma, lam), atol=1e-9)


def test_returns():
    assert np.allclose(returns([1.25, 1.0], [0.0, 0.0]), [1.25, 1.0])
    v = np.array([0.5, -2.0, 3.0])
    assert np.allclose(returns(np.zeros(3), v), v)


def test_returns_lambda_one_discounted_sum():
    rng = np.random.default_rng(2)
    r = rng.normal(size=5)
    v = rng.normal(size=5)
    boot = float(rng.normal())
    gamma = 0.9
    adv = gae(r, v, boot, gamma, 1.0)
    rets = returns(adv, v)
    # with lambda = 1, returns are the discounted reward sums plus bootstrap
    expect = np.array([
        sum(gamma ** k * r[t + k] for k in range(5 - t)) + gamma ** (5 - t) * boot
        for t in range(5)
    ])
    assert np.allclose(rets, expect, atol=1e-9)


def test_critic_loss():
    assert critic_loss([1.0, 3.0], [1.0, 1.0]) == 2.0
    assert critic_loss([4.0, 4.0], [4.0, 4.0]) == 0.0
    with pytest.raises(ValueError):
        critic_loss([], [])


def test_critic_loss_gradient_finite_difference():
    rng = np.random.default_rng(3)
    preds = rng.normal(size=8)
    targets = rng.normal(size=8)
    h = 1e-6
    for i in range(len(preds)):
        analytic = 2.0 * (preds[i] - targets[i]) / len(preds)
        bumped_up = preds.copy()
        bumped_up[i] += h
        bumped_down = preds.copy()
        bumped_down[i] -= h
        fd = (critic_loss(bumped_up, targets) - critic_loss(bumped_down, targets)) / (2 * h)
        assert fd == pytest.approx(analytic, rel=1e-5, abs=1e-8)


def test_policy_objective_hand_cases():
    assert policy_objective(0.0, 0.0, 2.0, 0.2) == pytest.approx(2.0)
    assert policy_objective(np.log(2.0), 0.0, 1.0, 0.2) == pytest.approx(1.2)
    assert policy_objective(np.log(0.5), 0.0, -1.0, 0.2) == pytest.approx(-0.8)


def test_policy_objective_upper_bound():
    rng = np.random.default_rng(4)
    lp_new = rng.normal(size=200)
    lp_old = rng.normal(size=200)
    adv = rng.normal(size=200)
    obj = policy_objective(lp_new, lp_old, adv, 0.2)
    assert np.all(obj <= np.exp(lp_new - lp_old) * adv + 1e-12)


def test_clip_region_is_flat():
    eps = 0.2
    for adv, ratios in ((1.5, (1.3, 2.0, 5.0)), (-1.5, (0.05, 0.3, 0.7))):
        vals = [policy_objective(np.log(r), 0.0, adv, eps) for r in ratios]
        assert max(vals) - min(vals) < 1e-12


def _small_setup(seed=0, n_steps=12):
    space = default_space()
    rng = np.random.default_rng(seed)
    agents = mappo.build_agents(space, observation_dims(space), rng)
    critic = mappo.build_critic(critic_state_dim(space), rng)
    transitions = []
    for _ in range(n_steps):
        state = rng.normal(size=critic_state_dim(space))
        obs = {a.agent_id: rng.normal(size=a.policy.sizes[0]) for a in agents}
        actions = {a.agent_id: tuple(int(rng.integers(3)) for _ in a.knob_slots)
                   for a in agents}
        log_probs = {}
        for a in agents:
            probs = a.policy.forward(obs[a.agent_id])
            lp = 0.0
            for head, choice in enumerate(actions[a.agent_id]):
                lp += float(np.log(probs[3 * head + choice]))
            log_probs[a.agent_id] = lp
        transitions.append(Transition(state=state, obs=obs, actions=actions,
                                      reward=float(rng.normal()), value=0.0,
                                      log_probs=log_probs))
    return space, agents, critic, TrajectoryBatch(transitions, 0.0)


def test_update_reduces_critic_mse():
    _, agents, critic, batch = _small_setup()
    hyper = HyperParams(epochs=1, critic_lr=1e-4, policy_lr=0.0)
    batch.compute_advantages(hyper.gamma, hyper.gae_lambda)
    states = np.stack([t.state for t in batch.transitions])
    before = critic_loss(critic.forward(states)[:, 0], batch.returns)
    update(agents, critic, batch, hyper)
    after = critic_loss(critic.forward(states)[:, 0], batch.returns)
    assert after <= before


def test_update_equal_advantages_freezes_policy():
    _, agents, critic, batch = _small_setup(seed=1)
    for t in batch.transitions:
        t.reward = 0.0
        t.value = 0.0
    hyper = HyperParams(epochs=2, gamma=1.0, gae_lambda=1.0)
    # constant rewards with zero values -> advantages differ; force them equal instead
    batch.advantages = np.full(len(batch.transitions), 3.0)
    batch.returns = batch.advantages.copy()
    before = [[w.copy() for w in a.policy.weights] for a in agents]
    update(agents, critic, batch, hyper)
    for agent, saved in zip(agents, before):
        for w, old in zip(agent.policy.weights, saved):
            assert np.array_equal(w, old)


def test_update_keeps_shapes_and_finiteness():
    _, agents, critic, batch = _small_setup(seed=2)
    hyper = HyperParams()
    shapes = [[w.shape for w in a.policy.weights] for a in agents]
    update(agents, critic, batch, hyper)
    for agent, shape_list in zip(agents, shapes):
        assert [w.shape for w in agent.policy.weights] == shape_list
        assert all(np.isfinite(w).all() for w in agent.policy.weights)
    assert all(np.isfinite(w).all() for w in critic.weights)


def test_clipped_sample_contributes_no_gradient():
    # one transition, ratio forced above 1+eps with positive advantage
    _, agents, critic, batch = _small_setup(seed=3, n_steps=1)
    agent = agents[0]
    t = batch.transitions[0]
    # behavior log-prob much lower than current policy's -> ratio >> 1+eps
    t.log_probs[agent.agent_id] -= 5.0
    for other in agents[1:]:
        t.log_probs[other.agent_id] = _current_log_prob(other, t)
    batch.advantages = np.array([2.0])
    batch.returns = np.array([0.0])
    hyper = HyperParams(epochs=1, normalize_advantages=False, critic_lr=0.0)
    before = [w.copy() for w in agent.policy.weights]
    update(agents, critic, batch, hyper)
    for w, old in zip(agent.policy.weights, before):
        assert np.array_equal(w, old)


def _current_log_prob(agent, transition):
    probs = agent.policy.forward(transition.obs[agent.agent_id])
    lp = 0.0
    for head, choice in enumerate(transition.actions[agent.agent_id]):
        lp += float(np.log(probs[3 * head + choice]))
    return lp
