"""Multi-agent PPO pieces: GAE, returns, critic loss, clipped objective, CTDE update.

Three agents each hold a small policy over their own knobs; one centralized
critic scores the global state.  All agents share one advantage signal since
there is a single team reward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .knobspace import AGENT_IDS, DesignSpace
from .neural import DenseNet, critic_net, policy_net


@dataclass
class HyperParams:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    policy_lr: float = 1e-3
    critic_lr: float = 1e-3
    normalize_advantages: bool = True

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be > 0")


@dataclass
class Agent:
    """One decentralized actor: a policy net over the knobs it owns."""

    agent_id: str
    knob_slots: tuple[int, ...]
    policy: DenseNet


@dataclass
class Transition:
    """One environment step as seen by all agents plus the critic."""

    state: np.ndarray                      # critic input
    obs: dict[str, np.ndarray]             # per-agent observation
    actions: dict[str, tuple[int, ...]]    # per-agent head choices (one per owned knob)
    reward: float
    value: float                           # critic estimate at collection time
    log_probs: dict[str, float]            # behavior-policy log-probs
    visited: tuple[int, ...] | None = None  # configuration reached by this step


@dataclass
class TrajectoryBatch:
    """One episode segment; advantages/returns are filled before any update."""

    transitions: list[Transition]
    bootstrap_value: float
    advantages: np.ndarray | None = field(default=None)
    returns: np.ndarray | None = field(default=None)

    def compute_advantages(self, gamma: float, lam: float) -> None:
        rewards = np.array([t.reward for t in self.transitions])
        values = np.array([t.value for t in self.transitions])
        self.advantages = gae(rewards, values, self.bootstrap_value, gamma, lam)
        self.returns = returns(self.advantages, values)


def gae(rewards, values, bootstrap: float, gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimation, truncated recursive form.

    delta_t = r_t + gamma * V(s_{t+1}) - V(s_t) with V at the boundary taken
    from the bootstrap; A_t = delta_t + gamma * lam * A_{t+1}.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape:
        raise ValueError("rewards and values must have equal length")
    next_values = np.append(values[1:], bootstrap)
    deltas = rewards + gamma * next_values - values
    adv = np.empty_like(deltas)
    acc = 0.0
    for t in range(len(deltas) - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        adv[t] = acc
    return adv


def returns(advantages, values) -> np.ndarray:
    """Critic regression targets: R_hat = A + V."""
    advantages = np.asarray(advantages, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    return advantages + values


def critic_loss(predicted, targets) -> float:
    """Mean squared error between value predictions and returns."""
    predicted = np.asarray(predicted, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predicted.size == 0 or predicted.shape != targets.shape:
        raise ValueError("need equal-length, non-empty prediction/target arrays")
    return float(np.mean((predicted - targets) ** 2))


def policy_objective(log_prob_new, log_prob_old, advantage, clip_eps: float):
    """Clipped surrogate (to maximize): min(ratio*A, clip(ratio, 1-eps, 1+eps)*A)."""
    ratio = np.exp(np.asarray(log_prob_new, dtype=np.float64)
                   - np.asarray(log_prob_old, dtype=np.float64))
    advantage = np.asarray(advantage, dtype=np.float64)
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    return np.minimum(ratio * advantage, clipped * advantage)


def build_agents(space: DesignSpace, obs_dims: dict[str, int],
                 rng: np.random.Generator) -> list[Agent]:
    """One agent per role, in canonical order, each owning its knobs from the space."""
    agents = []
    for agent_id in AGENT_IDS:
        slots = space.agent_slots(agent_id)
        agents.append(Agent(agent_id, slots,
                            policy_net(obs_dims[agent_id], len(slots), rng)))
    return agents


def build_critic(state_dim: int, rng: np.random.Generator) -> DenseNet:
    return critic_net(state_dim, rng)


def _log_prob_of(probs_row: np.ndarray, action: tuple[int, ...]) -> float:
    logp = 0.0
    for head, choice in enumerate(action):
        logp += float(np.log(max(probs_row[3 * head + choice], 1e-300)))
    return logp


def update(agents: list[Agent], critic: DenseNet, batch: TrajectoryBatch,
           hyper: HyperParams) -> None:
    """One MAPPO update: critic descends MSE, each agent ascends the clipped objective.

    Runs hyper.epochs full-batch passes; advantages are normalized once per
    batch when the flag is on.  Mutates the nets in place.
    """
    if batch.advantages is None or batch.returns is None:
        batch.compute_advantages(hyper.gamma, hyper.gae_lambda)
    n = len(batch.transitions)
    if n == 0:
        return
    states = np.stack([t.state for t in batch.transitions])
    targets = batch.returns
    adv = batch.advantages
    if hyper.normalize_advantages:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    per_agent = {}
    for agent in agents:
        obs = np.stack([t.obs[agent.agent_id] for t in batch.transitions])
        actions = np.array([t.actions[agent.agent_id] for t in batch.transitions], dtype=np.int64)
        logp_old = np.array([t.log_probs[agent.agent_id] for t in batch.transitions])
        per_agent[agent.agent_id] = (obs, actions, logp_old)

    for _ in range(hyper.epochs):
        values = critic.forward(states)[:, 0]
        upstream = (2.0 / n) * (values - targets)
        critic.sgd_step(critic.grad(states, upstream[:, None]), hyper.critic_lr)

        for agent in agents:
            obs, actions, logp_old = per_agent[agent.agent_id]
            probs = agent.policy.forward(obs)
            logp_new = np.zeros(n)
            for head in range(actions.shape[1]):
                chosen = probs[np.arange(n), 3 * head + actions[:, head]]
                logp_new += np.log(np.maximum(chosen, 1e-300))
            ratio = np.exp(logp_new - logp_old)
            clipped = np.clip(ratio, 1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps)
            # min() picks the unclipped branch at ties, so gradient flows there.
            unclipped_active = ratio * adv <= clipped * adv
            coeff = np.where(unclipped_active, ratio * adv, 0.0) / n
            g_logits = np.zeros_like(probs)
            for head in range(actions.shape[1]):
                sl = slice(3 * head, 3 * head + 3)
                onehot = np.zeros((n, 3))
                onehot[np.arange(n), actions[:, head]] = 1.0
                g_logits[:, sl] = coeff[:, None] * (onehot - probs[:, sl])
            grads = agent.policy.grad_logits(obs, g_logits)
            # Ascend the objective: step against the negated gradients.
            agent.policy.sgd_step([(-dw, -db) for dw, db in grads], hyper.policy_lr)
