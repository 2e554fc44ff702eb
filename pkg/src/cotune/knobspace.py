"""Tuning knobs, configurations, the enumerable design space, and conv-layer workloads.

The default space has 7 knobs split across three agents (scheduling, mapping,
hardware).  Knob order is fixed and documents the mixed-radix convention used
by ``config_to_index``/``index_to_config``: the *last* knob varies fastest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

AGENT_IDS = ("scheduling", "mapping", "hardware")

# h_threading * oc_threading must stay at or below this.
MAX_THREADS = 16


@dataclass(frozen=True)
class KnobDef:
    """One tunable parameter: an ascending list of candidate values owned by one agent."""

    name: str
    values: tuple[int, ...]
    owner: str

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if not self.values:
            raise ValueError(f"knob {self.name!r}: value list is empty")
        if any(v < 1 for v in self.values):
            raise ValueError(f"knob {self.name!r}: values must all be >= 1")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError(f"knob {self.name!r}: values must be strictly ascending")
        if self.owner not in AGENT_IDS:
            raise ValueError(f"knob {self.name!r}: owner must be one of {AGENT_IDS}, got {self.owner!r}")


@dataclass(frozen=True)
class Configuration:
    """An assignment of one value-list index per knob, in design-space knob order."""

    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))


@dataclass(frozen=True)
class DesignSpace:
    """Ordered knob list; the search space is the Cartesian product of the value lists."""

    knobs: tuple[KnobDef, ...]

    def __post_init__(self):
        object.__setattr__(self, "knobs", tuple(self.knobs))
        names = [k.name for k in self.knobs]
        if len(set(names)) != len(names):
            raise ValueError("knob names must be unique")

    @property
    def total_size(self) -> int:
        n = 1
        for k in self.knobs:
            n *= len(k.values)
        return n

    def knob_slot(self, name: str) -> int:
        for i, k in enumerate(self.knobs):
            if k.name == name:
                return i
        raise KeyError(f"no knob named {name!r}")

    def agent_slots(self, agent_id: str) -> tuple[int, ...]:
        """Positions of the knobs owned by one agent, in knob order."""
        if agent_id not in AGENT_IDS:
            raise ValueError(f"unknown agent id {agent_id!r}")
        return tuple(i for i, k in enumerate(self.knobs) if k.owner == agent_id)

    def value(self, cfg: Configuration, name: str) -> int:
        slot = self.knob_slot(name)
        return self.knobs[slot].values[cfg.indices[slot]]

    def config_values(self, cfg: Configuration) -> dict[str, int]:
        """Knob name -> chosen value, e.g. for trial logs."""
        check_config(self, cfg)
        return {k.name: k.values[i] for k, i in zip(self.knobs, cfg.indices)}

    def restricted(self, overrides: dict[str, Sequence[int]]) -> "DesignSpace":
        """New space with some value lists replaced; knob order and owners are kept."""
        known = {k.name for k in self.knobs}
        for name in overrides:
            if name not in known:
                raise ValueError(f"override for unknown knob {name!r}")
        return DesignSpace(tuple(
            KnobDef(k.name, tuple(overrides[k.name]), k.owner) if k.name in overrides else k
            for k in self.knobs
        ))


def default_space() -> DesignSpace:
    """The 7-knob convolution space (2*4*4*4*2*4*4 = 4096 configurations)."""
    return DesignSpace((
        KnobDef("tile_b", (1, 2), "hardware"),
        KnobDef("tile_ci", (1, 2, 4, 8), "hardware"),
        KnobDef("tile_co", (1, 2, 4, 8), "hardware"),
        KnobDef("tile_h", (1, 2, 4, 8), "mapping"),
        KnobDef("tile_w", (1, 2), "mapping"),
        KnobDef("h_threading", (1, 2, 4, 8), "scheduling"),
        KnobDef("oc_threading", (1, 2, 4, 8), "scheduling"),
    ))


def check_config(space: DesignSpace, cfg: Configuration) -> None:
    """Raise ValueError unless cfg has one in-range index per knob."""
    if len(cfg.indices) != len(space.knobs):
        raise ValueError(f"configuration has {len(cfg.indices)} indices, space has {len(space.knobs)} knobs")
    for knob, idx in zip(space.knobs, cfg.indices):
        if not 0 <= idx < len(knob.values):
            raise ValueError(f"index {idx} out of range for knob {knob.name!r} ({len(knob.values)} values)")


def config_to_index(space: DesignSpace, cfg: Configuration) -> int:
    """Mixed-radix rank of a configuration in [0, total_size); last knob varies fastest."""
    check_config(space, cfg)
    rank = 0
    for knob, idx in zip(space.knobs, cfg.indices):
        rank = rank * len(knob.values) + idx
    return rank


def index_to_config(space: DesignSpace, i: int) -> Configuration:
    """Inverse of config_to_index."""
    if not 0 <= i < space.total_size:
        raise ValueError(f"index {i} out of range for space of size {space.total_size}")
    indices = [0] * len(space.knobs)
    for slot in range(len(space.knobs) - 1, -1, -1):
        radix = len(space.knobs[slot].values)
        indices[slot] = i % radix
        i //= radix
    return Configuration(tuple(indices))


@dataclass(frozen=True)
class LayerWorkload:
    """Shape of one convolution layer; decides which configurations are valid and how fast they run."""

    name: str
    n: int
    cin: int
    cout: int
    h: int
    w: int
    kh: int
    kw: int
    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        for field_name in ("n", "cin", "cout", "h", "w", "kh", "kw", "stride"):
            if getattr(self, field_name) < 1:
                raise ValueError(f"workload {self.name!r}: {field_name} must be >= 1")
        if self.pad < 0:
            raise ValueError(f"workload {self.name!r}: pad must be >= 0")
        for dim, k, label in ((self.h, self.kh, "height"), (self.w, self.kw, "width")):
            span = dim + 2 * self.pad - k
            if span < 0 or span % self.stride != 0:
                raise ValueError(f"workload {self.name!r}: {label} does not tile evenly with stride {self.stride}")
            if span // self.stride + 1 < 1:
                raise ValueError(f"workload {self.name!r}: output {label} < 1")

    @property
    def hout(self) -> int:
        return (self.h + 2 * self.pad - self.kh) // self.stride + 1

    @property
    def wout(self) -> int:
        return (self.w + 2 * self.pad - self.kw) // self.stride + 1


def validate(space: DesignSpace, cfg: Configuration, workload: LayerWorkload,
             max_threads: int = MAX_THREADS) -> list[str]:
    """Check a configuration against a workload; returns violations ([] means valid)."""
    check_config(space, cfg)
    v = space.config_values(cfg)
    violations = []
    limits = (("tile_b", workload.n, "N"), ("tile_ci", workload.cin, "Cin"),
              ("tile_co", workload.cout, "Cout"), ("tile_h", workload.hout, "Hout"),
              ("tile_w", workload.wout, "Wout"))
    for knob_name, limit, label in limits:
        if v[knob_name] > limit:
            violations.append(f"{knob_name} {v[knob_name]} exceeds {label} {limit}")
    threads = v["h_threading"] * v["oc_threading"]
    if threads > max_threads:
        violations.append(f"thread product {threads} > {max_threads}")
    return violations


def is_valid(space: DesignSpace, cfg: Configuration, workload: LayerWorkload,
             max_threads: int = MAX_THREADS) -> bool:
    return not validate(space, cfg, workload, max_threads)


def load_workloads(path: str | Path) -> list[tuple[LayerWorkload, DesignSpace]]:
    """Read a workload file: JSON array of layer shapes, each optionally overriding knob value lists.

    Entry format: {"name", "N", "Cin", "Cout", "H", "W", "KH", "KW", "stride", "pad"}
    plus optional "knobs": {knob_name: [values]}.
    """
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise ValueError("workload file must contain a JSON array")
    base = default_space()
    out = []
    for entry in raw:
        wl = LayerWorkload(
            name=str(entry["name"]),
            n=int(entry["N"]), cin=int(entry["Cin"]), cout=int(entry["Cout"]),
            h=int(entry["H"]), w=int(entry["W"]),
            kh=int(entry["KH"]), kw=int(entry["KW"]),
            stride=int(entry.get("stride", 1)), pad=int(entry.get("pad", 0)),
        )
        space = base.restricted(entry["knobs"]) if "knobs" in entry else base
        out.append((wl, space))
    return out


def iter_configs(space: DesignSpace) -> Iterable[Configuration]:
    """All configurations in index order."""
    for i in range(space.total_size):
        yield index_to_config(space, i)
