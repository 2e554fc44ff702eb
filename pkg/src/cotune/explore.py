"""CTDE multi-agent exploration: agents nudge their knobs, the surrogate pays rewards.

Each episode resets to a random valid configuration, rolls out simultaneous
per-knob {-1, 0, +1} moves sampled from the current policies, scores the
visited configurations with the cost model, and runs one MAPPO update.  The
deduplicated set of visited valid configurations is the candidate pool handed
to confidence sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mappo
from .knobspace import Configuration, DesignSpace, LayerWorkload, index_to_config, is_valid
from .mappo import Agent, HyperParams, TrajectoryBatch, Transition
from .neural import DenseNet, categorical_sample
from .oracle import Constraints, penalty
from .surrogate import SurrogateModel, encode_features, workload_descriptor

INVALID_REWARD = -1.0


@dataclass
class EnvState:
    """Current point of one exploration rollout."""

    config: Configuration
    workload: LayerWorkload
    step: int = 0


@dataclass
class ExplorationResult:
    """Deduplicated valid candidates with surrogate scores, plus the collected trajectories."""

    candidates: list[tuple[Configuration, float]]
    batches: list[TrajectoryBatch]
    best_score: float = field(default=float("-inf"))


def _normalized_indices(space: DesignSpace, cfg: Configuration) -> np.ndarray:
    out = np.empty(len(space.knobs))
    for i, (knob, idx) in enumerate(zip(space.knobs, cfg.indices)):
        span = len(knob.values) - 1
        out[i] = idx / span if span else 0.0
    return out


def encode_critic_state(space: DesignSpace, workload: LayerWorkload,
                        cfg: Configuration) -> np.ndarray:
    """Critic input: all normalized knob indices plus the workload descriptor."""
    return np.concatenate([_normalized_indices(space, cfg), workload_descriptor(workload)])


def encode_observation(space: DesignSpace, workload: LayerWorkload,
                       cfg: Configuration, agent: Agent) -> np.ndarray:
    """Agent input: its own normalized knob indices, then the full critic state."""
    norm = _normalized_indices(space, cfg)
    own = norm[list(agent.knob_slots)]
    return np.concatenate([own, norm, workload_descriptor(workload)])


def observation_dims(space: DesignSpace) -> dict[str, int]:
    base = len(space.knobs) + 6
    return {aid: len(space.agent_slots(aid)) + base
            for aid in ("scheduling", "mapping", "hardware")}


def critic_state_dim(space: DesignSpace) -> int:
    return len(space.knobs) + 6


def apply_actions(space: DesignSpace, cfg: Configuration, agents: list[Agent],
                  actions: dict[str, tuple[int, ...]]) -> Configuration:
    """Move every owned knob by -1/0/+1 (head choices 0/1/2), clipped to the value list."""
    indices = list(cfg.indices)
    for agent in agents:
        for slot, choice in zip(agent.knob_slots, actions[agent.agent_id]):
            hi = len(space.knobs[slot].values) - 1
            indices[slot] = min(max(indices[slot] + (choice - 1), 0), hi)
    return Configuration(tuple(indices))


def step_reward(space: DesignSpace, workload: LayerWorkload, cfg: Configuration,
                model: SurrogateModel, constraints: Constraints) -> float:
    """Surrogate-predicted fitness minus the analytic penalty; invalid configs get -1."""
    if not is_valid(space, cfg, workload):
        return INVALID_REWARD
    predicted = model.predict(encode_features(space, workload, cfg))
    return float(predicted) - penalty(space, workload, cfg, constraints)


def random_valid_config(space: DesignSpace, workload: LayerWorkload,
                        rng: np.random.Generator, max_tries: int = 10000) -> Configuration:
    for _ in range(max_tries):
        cfg = index_to_config(space, int(rng.integers(space.total_size)))
        if is_valid(space, cfg, workload):
            return cfg
    raise ValueError(f"no valid configuration found for workload {workload.name!r}")


def _sample_actions(agents: list[Agent], obs: dict[str, np.ndarray],
                    rng: np.random.Generator):
    actions: dict[str, tuple[int, ...]] = {}
    log_probs: dict[str, float] = {}
    for agent in agents:
        probs = agent.policy.forward(obs[agent.agent_id])
        choices = []
        logp = 0.0
        for head in range(len(agent.knob_slots)):
            p = probs[3 * head:3 * head + 3]
            c = categorical_sample(p / p.sum(), rng)
            choices.append(c)
            logp += float(np.log(max(p[c], 1e-300)))
        actions[agent.agent_id] = tuple(choices)
        log_probs[agent.agent_id] = logp
    return actions, log_probs


def run_exploration(space: DesignSpace, workload: LayerWorkload, agents: list[Agent],
                    critic: DenseNet, model: SurrogateModel, constraints: Constraints,
                    episodes: int, steps: int, hyper: HyperParams,
                    rng: np.random.Generator,
                    incumbent: Configuration | None = None) -> ExplorationResult:
    """Run `episodes` rollouts of <= `steps` moves each, updating nets after every episode.

    Episodes reset to uniform-random valid configurations; when an incumbent
    (best measured so far) is given, every other episode starts there instead,
    so short rollouts still cover the current optimum's neighborhood.
    """
    if episodes < 1 or steps < 1:
        raise ValueError("episodes and steps must be >= 1")
    reward_memo: dict[tuple[int, ...], float] = {}

    def scored(cfg: Configuration) -> float:
        key = cfg.indices
        if key not in reward_memo:
            reward_memo[key] = step_reward(space, workload, cfg, model, constraints)
        return reward_memo[key]

    candidates: dict[tuple[int, ...], float] = {}

    def visit(cfg: Configuration) -> float:
        r = scored(cfg)
        if is_valid(space, cfg, workload):
            prev = candidates.get(cfg.indices, float("-inf"))
            candidates[cfg.indices] = max(prev, r)
        return r

    batches = []
    for episode in range(episodes):
        if incumbent is not None and episode % 2 == 1:
            start = incumbent
        else:
            start = random_valid_config(space, workload, rng)
        state = EnvState(start, workload)
        visit(state.config)
        transitions = []
        for _ in range(steps):
            obs = {a.agent_id: encode_observation(space, workload, state.config, a)
                   for a in agents}
            critic_state = encode_critic_state(space, workload, state.config)
            value = float(critic.forward(critic_state)[0])
            actions, log_probs = _sample_actions(agents, obs, rng)
            new_cfg = apply_actions(space, state.config, agents, actions)
            reward = visit(new_cfg)
            transitions.append(Transition(state=critic_state, obs=obs, actions=actions,
                                          reward=reward, value=value, log_probs=log_probs,
                                          visited=new_cfg.indices))
            state.config = new_cfg
            state.step += 1
        bootstrap = float(critic.forward(encode_critic_state(space, workload, state.config))[0])
        batch = TrajectoryBatch(transitions, bootstrap)
        batch.compute_advantages(hyper.gamma, hyper.gae_lambda)
        mappo.update(agents, critic, batch, hyper)
        batches.append(batch)

    result = [(Configuration(k), v) for k, v in candidates.items()]
    best = max((v for _, v in result), default=float("-inf"))
    return ExplorationResult(candidates=result, batches=batches, best_score=best)
