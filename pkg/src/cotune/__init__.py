"""cotune: hardware/software co-optimizing auto-tuner for convolution kernels.

Searches a knob-based configuration space with three-agent CTDE reinforcement
learning over a boosted-tree cost surrogate, filters candidates by confidence
sampling, and validates everything against a deterministic analytical latency
oracle.  Baselines: uniform random and parallel simulated annealing.
"""

from .knobspace import (Configuration, DesignSpace, KnobDef, LayerWorkload,
                        config_to_index, default_space, index_to_config,
                        load_workloads, validate)
from .oracle import Constraints, Measurement, OracleParams, measure
from .surrogate import SurrogateModel, encode_features, fit
from .tuner import (BruteForceResult, TunerConfig, TuneOutcome, brute_force,
                    tune_layer, tune_network)

__all__ = [
    "Configuration", "DesignSpace", "KnobDef", "LayerWorkload",
    "config_to_index", "default_space", "index_to_config", "load_workloads", "validate",
    "Constraints", "Measurement", "OracleParams", "measure",
    "SurrogateModel", "encode_features", "fit",
    "BruteForceResult", "TunerConfig", "TuneOutcome", "brute_force",
    "tune_layer", "tune_network",
]

__version__ = "0.1.0"
