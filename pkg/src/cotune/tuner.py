"""Per-layer tuning drivers: the guided search loop, random and simulated-annealing
baselines, exhaustive brute force, budget accounting, and trial logging.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import mappo, sampling, surrogate
from .explore import (critic_state_dim, encode_critic_state, observation_dims,
                      run_exploration)
from .knobspace import (Configuration, DesignSpace, LayerWorkload, default_space,
                        index_to_config, is_valid)
from .mappo import HyperParams
from .oracle import Constraints, Measurement, OracleParams, measure
from .surrogate import encode_batch, encode_features

STRATEGIES = ("dcoc", "random", "sa")

# Spaces up to this size are enumerated when distinct valid samples are needed.
_ENUMERATION_CAP = 1 << 20


@dataclass
class TunerConfig:
    strategy: str = "dcoc"
    iteration_opt: int = 16
    batch_size: int = 64                 # measurements per iteration (b)
    episodes: int = 16                   # exploration episodes per iteration
    steps: int = 32                      # max moves per episode
    sa_chains: int = 32
    sa_steps: int = 125
    budget: int | None = None            # None -> iteration_opt * batch_size
    seed: int = 0
    oracle: OracleParams = field(default_factory=OracleParams)
    constraints: Constraints = field(default_factory=Constraints)
    hyper: HyperParams = field(default_factory=HyperParams)
    scorer: str = "critic"               # confidence-sampling scorer: critic | surrogate
    warm_start: bool = False             # reuse agents/critic across layers
    exhaustive: bool = False             # random strategy: sweep indices in order

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.iteration_opt < 1:
            raise ValueError("iteration_opt must be >= 1")
        if self.effective_budget < self.batch_size:
            raise ValueError("budget must be at least one measurement batch")

    @property
    def effective_budget(self) -> int:
        return self.budget if self.budget is not None else self.iteration_opt * self.batch_size


def apply_fidelity(config: TunerConfig, fidelity: str) -> TunerConfig:
    """'paper' restores the published run scale; 'desk' keeps the scaled-down defaults."""
    if fidelity == "paper":
        return dataclasses.replace(config, iteration_opt=16, batch_size=64,
                                   episodes=128, steps=500, sa_chains=128, sa_steps=500)
    if fidelity == "desk":
        return dataclasses.replace(config, episodes=16, steps=32, sa_chains=32, sa_steps=125)
    raise ValueError(f"unknown fidelity {fidelity!r}")


@dataclass
class TrialRecord:
    trial: int
    config: dict[str, int]
    predicted: float | None
    latency_s: float
    gflops: float
    fitness: float
    best_fitness: float
    t_wall_s: float

    def to_json_line(self) -> str:
        return json.dumps({
            "trial": self.trial, "config": self.config, "predicted": self.predicted,
            "latency_s": self.latency_s, "gflops": self.gflops, "fitness": self.fitness,
            "best_fitness": self.best_fitness, "t_wall_s": self.t_wall_s,
        })


@dataclass
class TuneOutcome:
    workload: str
    strategy: str
    seed: int
    best_config: Configuration
    best_values: dict[str, int]
    best: Measurement
    measurements_used: int
    trials: list[TrialRecord]
    elapsed_s: float


def trial_log_lines(outcome: TuneOutcome) -> list[str]:
    return [t.to_json_line() for t in outcome.trials]


def summary_dict(outcome: TuneOutcome) -> dict:
    return {
        "workload": outcome.workload,
        "strategy": outcome.strategy,
        "seed": outcome.seed,
        "best_config": outcome.best_values,
        "best_fitness": outcome.best.fitness,
        "best_gflops": outcome.best.gflops,
        "best_latency_s": outcome.best.latency,
        "measurements_used": outcome.measurements_used,
        "wall_seconds": outcome.elapsed_s,
    }


class _MeasurementLog:
    """Budgeted, deduplicated oracle access; maintains the trial log and best-so-far."""

    def __init__(self, space, workload, config: TunerConfig):
        self.space = space
        self.workload = workload
        self.config = config
        self.budget = config.effective_budget
        self.measured: dict[tuple[int, ...], Measurement] = {}
        self.trials: list[TrialRecord] = []
        self.best_fitness = float("-inf")
        self.best_config: Configuration | None = None
        self.sim_clock = 0.0

    @property
    def remaining(self) -> int:
        return self.budget - len(self.measured)

    def seen(self, cfg: Configuration) -> bool:
        return cfg.indices in self.measured

    def measure(self, cfg: Configuration, predicted: float | None = None) -> Measurement | None:
        if self.remaining <= 0 or self.seen(cfg):
            return None
        m = measure(self.space, self.workload, cfg, self.config.oracle,
                    self.config.constraints, self.config.seed)
        self.measured[cfg.indices] = m
        self.sim_clock += m.latency if math.isfinite(m.latency) else 0.0
        if m.fitness > self.best_fitness:
            self.best_fitness = m.fitness
            self.best_config = cfg
        self.trials.append(TrialRecord(
            trial=len(self.trials) + 1,
            config=self.space.config_values(cfg),
            predicted=None if predicted is None else float(predicted),
            latency_s=m.latency, gflops=m.gflops, fitness=m.fitness,
            best_fitness=self.best_fitness, t_wall_s=self.sim_clock,
        ))
        return m

    def records(self):
        """(features, fitness) arrays over all valid measurements, for surrogate fits."""
        feats, targets = [], []
        for key, m in self.measured.items():
            if m.valid:
                feats.append(encode_features(self.space, self.workload, Configuration(key)))
                targets.append(m.fitness)
        return np.stack(feats), np.asarray(targets)

    def outcome(self, strategy: str, started: float) -> TuneOutcome:
        if self.best_config is None:
            raise RuntimeError("no valid configuration was measured")
        return TuneOutcome(
            workload=self.workload.name, strategy=strategy, seed=self.config.seed,
            best_config=self.best_config,
            best_values=self.space.config_values(self.best_config),
            best=self.measured[self.best_config.indices],
            measurements_used=len(self.measured), trials=self.trials,
            elapsed_s=time.perf_counter() - started,
        )


def _valid_indices(space, workload) -> np.ndarray:
    idx = [i for i in range(space.total_size)
           if is_valid(space, index_to_config(space, i), workload)]
    return np.asarray(idx, dtype=np.int64)


def _distinct_valid_configs(space, workload, n, rng, exclude=frozenset()):
    """Up to n distinct valid configurations, uniform over the unmeasured valid set."""
    if space.total_size <= _ENUMERATION_CAP:
        pool = [i for i in _valid_indices(space, workload)
                if index_to_config(space, int(i)).indices not in exclude]
        order = rng.permutation(len(pool))
        return [index_to_config(space, int(pool[j])) for j in order[:n]]
    out, seen = [], set(exclude)
    for _ in range(10000 * n):
        cfg = index_to_config(space, int(rng.integers(space.total_size)))
        if cfg.indices not in seen and is_valid(space, cfg, workload):
            out.append(cfg)
            seen.add(cfg.indices)
            if len(out) == n:
                break
    return out


def _spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def tune_layer_dcoc(space: DesignSpace, workload: LayerWorkload, config: TunerConfig,
                    agents=None, critic=None) -> TuneOutcome:
    """Guided loop: explore with MARL on the surrogate, confidence-sample, measure, refit.

    Iteration 0 bootstraps the cost model from one batch of random valid
    configurations; every later iteration measures a confidence-sampled batch
    (deduplicated, topped up from the highest-scored unmeasured candidates) and
    feeds the measured fitness back into one extra MAPPO update.
    """
    started = time.perf_counter()
    rng_init, rng_boot, rng_explore, rng_sample, rng_fill = _spawn_rngs(config.seed, 5)
    if agents is None or critic is None:
        agents = mappo.build_agents(space, observation_dims(space), rng_init)
        critic = mappo.build_critic(critic_state_dim(space), rng_init)
    log = _MeasurementLog(space, workload, config)

    for cfg in _distinct_valid_configs(space, workload, min(config.batch_size, log.budget),
                                       rng_boot):
        log.measure(cfg)
    model = surrogate.fit(*log.records())

    def critic_scorer(cfgs):
        states = np.stack([encode_critic_state(space, workload, c) for c in cfgs])
        return critic.forward(states)[:, 0]

    def surrogate_scorer(cfgs):
        return np.atleast_1d(model.predict(encode_batch(space, workload, cfgs)))

    for _ in range(config.iteration_opt):
        if log.remaining <= 0:
            break
        result = run_exploration(space, workload, agents, critic, model,
                                 config.constraints, config.episodes, config.steps,
                                 config.hyper, rng_explore, incumbent=log.best_config)
        pool = [c for c, _ in result.candidates]
        scorer = critic_scorer if config.scorer == "critic" else surrogate_scorer
        selected = sampling.confidence_sampling(space, workload, pool, scorer,
                                                config.batch_size, rng_sample)

        batch: list[Configuration] = []
        chosen = set()
        for sel in selected:
            key = sel.config.indices
            if key not in chosen and not log.seen(sel.config):
                batch.append(sel.config)
                chosen.add(key)
        by_score = sorted(result.candidates, key=lambda cv: -cv[1])
        for cand, _ in by_score:
            if len(batch) >= config.batch_size:
                break
            if cand.indices not in chosen and not log.seen(cand):
                batch.append(cand)
                chosen.add(cand.indices)
        if len(batch) < config.batch_size:
            exclude = chosen | set(log.measured)
            batch.extend(_distinct_valid_configs(space, workload,
                                                 config.batch_size - len(batch),
                                                 rng_fill, exclude))

        # Most promising first, so the trial log converges as early as possible.
        preds = np.atleast_1d(model.predict(encode_batch(space, workload, batch)))
        order = np.argsort(-preds, kind="stable")
        measured_now: dict[tuple[int, ...], float] = {}
        for i in order[:log.remaining]:
            cfg = batch[int(i)]
            m = log.measure(cfg, predicted=float(preds[int(i)]))
            if m is not None and m.valid:
                measured_now[cfg.indices] = m.fitness
        model = surrogate.fit(*log.records())

        if measured_now and result.batches:
            _feedback_update(agents, critic, result.batches[-1], measured_now, config.hyper)

    return log.outcome("dcoc", started)


def _feedback_update(agents, critic, batch, measured_now, hyper):
    """Replay the final trajectory with measured fitness in place of surrogate rewards."""
    new = mappo.TrajectoryBatch(
        [dataclasses.replace(t) for t in batch.transitions], batch.bootstrap_value)
    for t in new.transitions:
        if t.visited in measured_now:
            t.reward = measured_now[t.visited]
    new.compute_advantages(hyper.gamma, hyper.gae_lambda)
    mappo.update(agents, critic, new, hyper)


def tune_layer_random(space: DesignSpace, workload: LayerWorkload,
                      config: TunerConfig) -> TuneOutcome:
    """Uniform-random baseline: measure distinct valid configurations until the budget."""
    started = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    log = _MeasurementLog(space, workload, config)
    if config.exhaustive:
        for i in range(space.total_size):
            if log.remaining <= 0:
                break
            cfg = index_to_config(space, i)
            if is_valid(space, cfg, workload):
                log.measure(cfg)
    else:
        for cfg in _distinct_valid_configs(space, workload, log.budget, rng):
            log.measure(cfg)
    return log.outcome("random", started)


def sa_accept(delta: float, temperature: float, rng: np.random.Generator) -> bool:
    """Metropolis rule on predicted fitness: uphill always, downhill with exp(delta/T)."""
    if delta >= 0:
        return True
    if temperature <= 0:
        return False
    return rng.random() < math.exp(delta / temperature)


def tune_layer_sa(space: DesignSpace, workload: LayerWorkload,
                  config: TunerConfig) -> TuneOutcome:
    """Parallel simulated-annealing baseline over the surrogate, batch-measured per iteration.

    Chains take single-knob +/-1 moves under a geometric temperature schedule
    (T0 = 1 down to 0.01 across sa_steps); the top predicted unmeasured chain
    endpoints are measured, then the surrogate is refit.
    """
    started = time.perf_counter()
    rng_boot, rng_sa, rng_fill = _spawn_rngs(config.seed, 3)
    log = _MeasurementLog(space, workload, config)
    for cfg in _distinct_valid_configs(space, workload, min(config.batch_size, log.budget),
                                       rng_boot):
        log.measure(cfg)
    model = surrogate.fit(*log.records())

    alpha = 0.01 ** (1.0 / config.sa_steps)
    n_knobs = len(space.knobs)
    while log.remaining > 0:
        states = _distinct_valid_configs(space, workload, config.sa_chains, rng_sa)
        if not states:
            break
        preds = np.atleast_1d(model.predict(encode_batch(space, workload, states)))
        temperature = 1.0
        for _ in range(config.sa_steps):
            slots = rng_sa.integers(n_knobs, size=len(states))
            steps = rng_sa.choice((-1, 1), size=len(states))
            neighbors = []
            for cfg, slot, delta in zip(states, slots, steps):
                hi = len(space.knobs[slot].values) - 1
                idx = list(cfg.indices)
                idx[slot] = min(max(idx[slot] + int(delta), 0), hi)
                neighbors.append(Configuration(tuple(idx)))
            npreds = np.atleast_1d(model.predict(encode_batch(space, workload, neighbors)))
            accepts = rng_sa.random(len(states))
            for i, (cur, nxt) in enumerate(zip(states, neighbors)):
                if nxt.indices == cur.indices or not is_valid(space, nxt, workload):
                    continue
                gain = npreds[i] - preds[i]
                if gain >= 0 or (temperature > 0 and accepts[i] < math.exp(gain / temperature)):
                    states[i] = nxt
                    preds[i] = npreds[i]
            temperature *= alpha

        order = np.argsort(-preds, kind="stable")
        batch, chosen = [], set()
        for i in order:
            cfg = states[int(i)]
            if cfg.indices not in chosen and not log.seen(cfg):
                batch.append((cfg, float(preds[int(i)])))
                chosen.add(cfg.indices)
            if len(batch) >= config.batch_size:
                break
        if len(batch) < config.batch_size:
            exclude = chosen | set(log.measured)
            extra = _distinct_valid_configs(space, workload, config.batch_size - len(batch),
                                            rng_fill, exclude)
            batch.extend((c, None) for c in extra)
        for cfg, pred in batch[:log.remaining]:
            log.measure(cfg, predicted=pred)
        if not batch:
            break
        model = surrogate.fit(*log.records())

    return log.outcome("sa", started)


def tune_layer(space: DesignSpace, workload: LayerWorkload, config: TunerConfig,
               **kwargs) -> TuneOutcome:
    if config.strategy == "dcoc":
        return tune_layer_dcoc(space, workload, config, **kwargs)
    if config.strategy == "random":
        return tune_layer_random(space, workload, config)
    return tune_layer_sa(space, workload, config)


def layer_seed(base_seed: int, name: str) -> int:
    return base_seed ^ zlib.crc32(name.encode())


def tune_network(workloads: Sequence[tuple[LayerWorkload, DesignSpace]],
                 config: TunerConfig) -> list[TuneOutcome]:
    """Tune each layer independently with a seed derived from the layer name."""
    outcomes = []
    shared = {}
    for workload, space in workloads:
        layer_config = dataclasses.replace(config, seed=layer_seed(config.seed, workload.name))
        if config.warm_start and config.strategy == "dcoc":
            if shared.get("dims") != observation_dims(space):
                rng = np.random.default_rng(np.random.SeedSequence(layer_config.seed))
                shared = {"dims": observation_dims(space),
                          "agents": mappo.build_agents(space, observation_dims(space), rng),
                          "critic": mappo.build_critic(critic_state_dim(space), rng)}
            outcomes.append(tune_layer_dcoc(space, workload, layer_config,
                                            agents=shared["agents"], critic=shared["critic"]))
        else:
            outcomes.append(tune_layer(space, workload, layer_config))
    return outcomes


def network_summary(outcomes: Sequence[TuneOutcome]) -> dict:
    return {
        "layers": [summary_dict(o) for o in outcomes],
        "total_measurements": sum(o.measurements_used for o in outcomes),
        "total_wall_seconds": sum(o.elapsed_s for o in outcomes),
    }


@dataclass
class BruteForceResult:
    best_config: Configuration
    best_values: dict[str, int]
    best: Measurement
    best_index: int
    n_valid: int
    total: int


def brute_force(space: DesignSpace, workload: LayerWorkload,
                params: OracleParams | None = None,
                constraints: Constraints | None = None) -> BruteForceResult:
    """Exhaustive ground truth: argmax fitness over the whole space, ties to the lowest index."""
    best_fit = float("-inf")
    best_idx = -1
    best_m = None
    n_valid = 0
    for i in range(space.total_size):
        cfg = index_to_config(space, i)
        m = measure(space, workload, cfg, params, constraints)
        if m.valid:
            n_valid += 1
            if m.fitness > best_fit:
                best_fit, best_idx, best_m = m.fitness, i, m
    if best_m is None:
        raise ValueError(f"workload {workload.name!r} has no valid configuration")
    cfg = index_to_config(space, best_idx)
    return BruteForceResult(cfg, space.config_values(cfg), best_m, best_idx,
                            n_valid, space.total_size)
