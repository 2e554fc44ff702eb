"""Watch the three agents learn to climb the cost model.

Each agent owns its slice of the knobs (hardware: batch/channel tiles,
mapping: spatial tiles, scheduling: threading) and nudges them -1/0/+1 per
step.  Rewards come from the surrogate; the centralized critic learns state
values while the policies learn which direction helps.
"""

import numpy as np

from cotune import LayerWorkload, default_space, index_to_config, measure
from cotune.explore import critic_state_dim, observation_dims, run_exploration
from cotune.mappo import HyperParams, build_agents, build_critic
from cotune.oracle import Constraints
from cotune.surrogate import encode_batch, fit

space = default_space()
layer = LayerWorkload("resnet18_c3", 1, 64, 64, 56, 56, 3, 3, 1, 1)
rng = np.random.default_rng(0)

# Cost model from one batch of random measurements (the tuner's bootstrap).
configs, fitnesses = [], []
while len(configs) < 64:
    cfg = index_to_config(space, int(rng.integers(space.total_size)))
    m = measure(space, layer, cfg)
    if m.valid:
        configs.append(cfg)
        fitnesses.append(m.fitness)
model = fit(encode_batch(space, layer, configs), np.asarray(fitnesses))

agents = build_agents(space, observation_dims(space), rng)
critic = build_critic(critic_state_dim(space), rng)
for agent in agents:
    print(f"agent {agent.agent_id:>10}: owns "
          f"{[space.knobs[s].name for s in agent.knob_slots]}")

result = run_exploration(space, layer, agents, critic, model, Constraints(),
                         episodes=16, steps=32, hyper=HyperParams(), rng=rng)

print(f"\nvisited {len(result.candidates)} distinct valid configurations; "
      f"best surrogate score {result.best_score:.2f}")
print("mean surrogate reward per episode (policies updating as they go):")
for i, batch in enumerate(result.batches):
    mean_reward = np.mean([t.reward for t in batch.transitions])
    bar = "#" * max(0, int(mean_reward / 2))
    print(f"  episode {i:2d}: {mean_reward:8.2f} {bar}")

top = sorted(result.candidates, key=lambda cv: -cv[1])[:5]
print("\ntop candidates by surrogate score (true fitness in parentheses):")
for cfg, score in top:
    true = measure(space, layer, cfg).fitness
    print(f"  score={score:8.2f} (true {true:8.2f})  {space.config_values(cfg)}")
