"""Fit the boosted-tree cost model on oracle measurements and check its ranking power.

The tuner never needs the surrogate to be metrically perfect, only to rank
configurations well enough to steer measurements; rank correlation is the
honest score for that.
"""

import numpy as np

from cotune import LayerWorkload, default_space, index_to_config, measure
from cotune.surrogate import encode_batch, fit

space = default_space()
layer = LayerWorkload("resnet18_c3", 1, 64, 64, 56, 56, 3, 3, 1, 1)
rng = np.random.default_rng(0)

configs, fitnesses = [], []
while len(configs) < 600:
    cfg = index_to_config(space, int(rng.integers(space.total_size)))
    m = measure(space, layer, cfg)
    if m.valid:
        configs.append(cfg)
        fitnesses.append(m.fitness)

x = encode_batch(space, layer, configs)
y = np.asarray(fitnesses)

for n_train in (32, 64, 128, 256, 450):
    model = fit(x[:n_train], y[:n_train])
    pred = model.predict(x[450:])
    true = y[450:]
    # Spearman rank correlation, computed from rank vectors.
    pr = np.argsort(np.argsort(pred)).astype(float)
    tr = np.argsort(np.argsort(true)).astype(float)
    rho = np.corrcoef(pr, tr)[0, 1]
    resid = true - pred
    r2 = 1.0 - float(resid @ resid) / float(((true - true.mean()) ** 2).sum())
    print(f"train={n_train:4d}  trees={len(model.trees):3d}  "
          f"held-out spearman={rho:.3f}  r2={r2:.3f}")

model = fit(x[:450], y[:450])
order = np.argsort(-np.atleast_1d(model.predict(x[450:])))
print("\npredicted top-5 of the held-out set (true fitness):")
for i in order[:5]:
    print(f"  predicted={float(model.predict(x[450 + i])):8.2f}  true={y[450 + i]:8.2f}")
