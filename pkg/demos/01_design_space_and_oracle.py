"""Walk the knob space and the analytical latency oracle.

Shows what a configuration is, which ones are valid for a layer, and how the
closed-form latency model trades tile sizes against launch overhead, buffer
spills, and threading efficiency.
"""

import numpy as np

from cotune import LayerWorkload, default_space, index_to_config, measure, validate
from cotune.tuner import brute_force

space = default_space()
layer = LayerWorkload("resnet18_c3", n=1, cin=64, cout=64, h=56, w=56,
                      kh=3, kw=3, stride=1, pad=1)

print(f"design space: {space.total_size} configurations over {len(space.knobs)} knobs")
for knob in space.knobs:
    print(f"  {knob.name:>13}  values={list(knob.values)}  agent={knob.owner}")

# Every knob at its smallest value: always valid, but all launch overhead.
base = index_to_config(space, 0)
m = measure(space, layer, base)
print(f"\nall-ones config: latency={m.latency*1e3:.2f} ms  "
      f"gflops={m.gflops:.2f}  footprint={m.footprint:.0f} B")

# Crank the tiles up and watch the launch overhead melt away.
idx = [0] * len(space.knobs)
for name, value in [("tile_ci", 8), ("tile_co", 8), ("tile_h", 8), ("tile_w", 2),
                    ("h_threading", 2), ("oc_threading", 8)]:
    slot = space.knob_slot(name)
    idx[slot] = space.knobs[slot].values.index(value)
    cfg = index_to_config(space, 0).__class__(tuple(idx))
    m = measure(space, layer, cfg)
    print(f"set {name}={value}: latency={m.latency*1e3:8.3f} ms  fitness={m.fitness:8.2f}")

# Validity: some settings simply do not fit the layer.
narrow = LayerWorkload("narrow", n=1, cin=4, cout=64, h=56, w=56, kh=3, kw=3,
                       stride=1, pad=1)
bad = list(idx)
bad[space.knob_slot("tile_ci")] = 3  # tile_ci = 8 > Cin = 4
print("\nviolations for tile_ci=8 on a Cin=4 layer:",
      validate(space, index_to_config(space, 0).__class__(tuple(bad)), narrow))

# The whole space is small enough to enumerate: the ground truth for everything.
truth = brute_force(space, layer)
print(f"\nbrute-force optimum ({truth.n_valid}/{truth.total} valid):")
print(f"  {truth.best_values}")
print(f"  latency={truth.best.latency*1e3:.3f} ms  fitness={truth.best.fitness:.2f}  "
      f"gflops={truth.best.gflops:.1f}")
