"""Analytical accelerator latency model plus penalty / fitness functions.

Stands in for hardware measurement: a closed-form latency with remainder-padding
waste, buffer-spill slowdown, sub-linear threading, and per-tile launch overhead,
so every knob has a non-trivial optimum and search quality can be verified by
exhaustive enumeration.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from .knobspace import Configuration, DesignSpace, LayerWorkload, config_to_index, validate

INVALID_FITNESS = float("-inf")


@dataclass(frozen=True)
class OracleParams:
    """Hardware model parameters (int8-like datapath by default)."""

    peak_flops: float = 1e11          # FLOP/s
    buffer_bytes: float = 131072.0    # on-chip buffer; footprints beyond it slow down
    launch_overhead: float = 1e-6     # seconds per tile
    thread_overhead: float = 0.02     # sub-linear threading factor sigma
    bytes_per_element: float = 1.0
    noise_std: float = 0.0            # relative std of multiplicative lognormal noise

    def __post_init__(self):
        for field_name in ("peak_flops", "buffer_bytes", "launch_overhead",
                           "thread_overhead", "bytes_per_element"):
            if getattr(self, field_name) <= 0:
                raise ValueError(f"{field_name} must be > 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


@dataclass(frozen=True)
class Constraints:
    """Area/memory limits and the penalty scale lambda."""

    area_max: float = 64.0
    memory_max: float = 131072.0
    lambda_penalty: float = 1.0

    def __post_init__(self):
        if self.area_max <= 0 or self.memory_max <= 0:
            raise ValueError("area_max and memory_max must be > 0")
        if self.lambda_penalty < 0:
            raise ValueError("lambda_penalty must be >= 0")


@dataclass(frozen=True)
class Measurement:
    """Oracle output for one (workload, configuration) pair."""

    latency: float      # seconds (inf when invalid)
    gflops: float
    footprint: float    # bytes
    area: float
    penalty: float
    fitness: float      # 1/latency - penalty; -inf when invalid
    valid: bool


def params_from_dict(d: dict) -> OracleParams:
    return OracleParams(**d)


def constraints_from_dict(d: dict) -> Constraints:
    return Constraints(**d)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _padded(dim: int, tile: int) -> int:
    return _ceil_div(dim, tile) * tile


def footprint(space: DesignSpace, workload: LayerWorkload, cfg: Configuration,
              params: OracleParams | None = None) -> float:
    """Working-set bytes of one tile: input patch + weight block + output block."""
    params = params or OracleParams()
    v = space.config_values(cfg)
    in_patch = v["tile_b"] * v["tile_ci"] \
        * (v["tile_h"] * workload.stride + workload.kh - 1) \
        * (v["tile_w"] * workload.stride + workload.kw - 1)
    weights = v["tile_ci"] * v["tile_co"] * workload.kh * workload.kw
    out_block = v["tile_b"] * v["tile_co"] * v["tile_h"] * v["tile_w"]
    return params.bytes_per_element * (in_patch + weights + out_block)


def area(space: DesignSpace, cfg: Configuration) -> float:
    """PE-array-size proxy: tile_ci * tile_co."""
    v = space.config_values(cfg)
    return float(v["tile_ci"] * v["tile_co"])


def penalty(space: DesignSpace, workload: LayerWorkload, cfg: Configuration,
            constraints: Constraints | None = None,
            params: OracleParams | None = None) -> float:
    """lambda * (excess area + excess memory), zero when both fit."""
    constraints = constraints or Constraints()
    a = area(space, cfg)
    mem = footprint(space, workload, cfg, params)
    return constraints.lambda_penalty * (
        max(0.0, a - constraints.area_max) + max(0.0, mem - constraints.memory_max)
    )


def fitness(latency: float, penalty_value: float) -> float:
    """Inverse latency minus penalty."""
    if latency <= 0:
        raise ValueError(f"latency must be > 0, got {latency}")
    return 1.0 / latency - penalty_value


def measure(space: DesignSpace, workload: LayerWorkload, cfg: Configuration,
            params: OracleParams | None = None,
            constraints: Constraints | None = None,
            seed: int = 0) -> Measurement:
    """Evaluate one configuration; invalid configurations get fitness -inf.

    Deterministic when noise_std == 0; otherwise the lognormal noise factor is a
    pure function of (seed, workload, configuration).
    """
    params = params or OracleParams()
    constraints = constraints or Constraints()
    fp = footprint(space, workload, cfg, params)
    a = area(space, cfg)
    pen = penalty(space, workload, cfg, constraints, params)
    if validate(space, cfg, workload):
        return Measurement(latency=math.inf, gflops=0.0, footprint=fp, area=a,
                           penalty=pen, fitness=INVALID_FITNESS, valid=False)

    v = space.config_values(cfg)
    hout, wout = workload.hout, workload.wout
    work = (_padded(workload.n, v["tile_b"])
            * _padded(workload.cin, v["tile_ci"])
            * _padded(workload.cout, v["tile_co"])
            * _padded(hout, v["tile_h"])
            * _padded(wout, v["tile_w"])
            * workload.kh * workload.kw)
    parallel = (min(v["h_threading"], _ceil_div(hout, v["tile_h"]))
                * min(v["oc_threading"], _ceil_div(workload.cout, v["tile_co"])))
    threads = v["h_threading"] * v["oc_threading"]
    thread_eff = 1.0 / (1.0 + params.thread_overhead * (threads - 1))
    mem_factor = max(1.0, fp / params.buffer_bytes)
    n_tiles = (_ceil_div(workload.n, v["tile_b"])
               * _ceil_div(workload.cin, v["tile_ci"])
               * _ceil_div(workload.cout, v["tile_co"])
               * _ceil_div(hout, v["tile_h"])
               * _ceil_div(wout, v["tile_w"]))
    latency = (2.0 * work / params.peak_flops) * mem_factor / (parallel * thread_eff) \
        + params.launch_overhead * n_tiles
    if params.noise_std > 0:
        latency *= _noise_factor(space, workload, cfg, params.noise_std, seed)

    true_flops = 2.0 * workload.n * hout * wout * workload.cout * workload.cin \
        * workload.kh * workload.kw
    gflops = true_flops / latency / 1e9
    return Measurement(latency=latency, gflops=gflops, footprint=fp, area=a,
                       penalty=pen, fitness=fitness(latency, pen), valid=True)


def _noise_factor(space, workload, cfg, noise_std, seed):
    # Mean-1 lognormal with relative std noise_std, keyed so re-measuring the
    # same point under the same seed reproduces the same draw.
    sigma2 = math.log(1.0 + noise_std * noise_std)
    key = [seed & 0xFFFFFFFF, config_to_index(space, cfg), zlib.crc32(workload.name.encode())]
    rng = np.random.default_rng(np.random.SeedSequence(key))
    return float(rng.lognormal(mean=-sigma2 / 2.0, sigma=math.sqrt(sigma2)))
