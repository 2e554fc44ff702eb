"""Confidence sampling: score candidates, sample by softmax, keep above-median draws,
synthesize replacements from per-knob modes.  Also the uniform-sampling baseline.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .knobspace import Configuration, DesignSpace, LayerWorkload, index_to_config, is_valid
from .neural import categorical_sample, softmax

Scorer = Callable[[Sequence[Configuration]], np.ndarray]

ABOVE_THRESHOLD = "above_threshold"
SYNTHESIZED = "synthesized"
FALLBACK = "fallback"


@dataclass
class ScoredCandidates:
    """Candidate configurations with predicted values and their softmax distribution."""

    configs: list[Configuration]
    v_preds: np.ndarray
    probabilities: np.ndarray


@dataclass(frozen=True)
class SelectedCandidate:
    """One confidence-sampling pick, tagged with how it got in."""

    config: Configuration
    score: float
    tag: str  # above_threshold | synthesized | fallback


def score_candidates(configs: Sequence[Configuration], scorer: Scorer) -> ScoredCandidates:
    if not configs:
        raise ValueError("candidate set is empty")
    v = np.asarray(scorer(list(configs)), dtype=np.float64)
    if v.shape != (len(configs),):
        raise ValueError("scorer must return one value per configuration")
    return ScoredCandidates(list(configs), v, softmax(v))


def compute_dynamic_threshold(v_preds) -> float:
    """Median of the predicted values (mean of the middle two for even counts)."""
    v = np.asarray(v_preds, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot take the median of no values")
    return float(np.median(v))


def select_configurations(probabilities, n: int, rng: np.random.Generator) -> list[int]:
    """n distinct indices via repeated categorical draws with removal and renormalization."""
    p = np.array(probabilities, dtype=np.float64)
    if n > len(p):
        raise ValueError(f"cannot draw {n} distinct indices from {len(p)} candidates")
    picked = []
    for _ in range(n):
        total = p.sum()
        idx = categorical_sample(p / total, rng)
        picked.append(idx)
        p[idx] = 0.0
    return picked


def synthesize_mode(configs: Sequence[Configuration], space: DesignSpace) -> Configuration:
    """Per knob, the most frequent index among the inputs; ties go to the smaller index."""
    if not configs:
        raise ValueError("cannot synthesize from an empty set")
    indices = []
    for slot in range(len(space.knobs)):
        counts = Counter(c.indices[slot] for c in configs)
        best = max(sorted(counts), key=lambda i: counts[i])  # sorted -> smaller index wins ties
        indices.append(best)
    return Configuration(tuple(indices))


def uniform_sample(space: DesignSpace, n: int, rng: np.random.Generator) -> list[Configuration]:
    """n uniform draws over the whole space (duplicates allowed)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [index_to_config(space, int(i)) for i in rng.integers(space.total_size, size=n)]


def confidence_sampling(space: DesignSpace, workload: LayerWorkload,
                        candidates: Sequence[Configuration], scorer: Scorer,
                        n_select: int, rng: np.random.Generator) -> list[SelectedCandidate]:
    """Pick min(n_select, len(candidates)) configurations to measure next.

    Draws by softmax probability, keeps draws scoring strictly above the median
    of all predictions, and replaces each dropped draw with the per-knob mode of
    the high-confidence picks (validated; invalid syntheses fall back to the
    best unselected candidate, or the dropped original if none remain).
    """
    if n_select < 1:
        raise ValueError("n_select must be >= 1")
    scored = score_candidates(candidates, scorer)
    n_select = min(n_select, len(scored.configs))
    drawn = select_configurations(scored.probabilities, n_select, rng)

    if np.all(scored.v_preds == scored.v_preds[0]):
        # Degenerate scores: strict '>' against the median would keep nothing.
        return [SelectedCandidate(scored.configs[i], float(scored.v_preds[i]), FALLBACK)
                for i in drawn]

    threshold = compute_dynamic_threshold(scored.v_preds)
    kept = [i for i in drawn if scored.v_preds[i] > threshold]
    dropped = [i for i in drawn if scored.v_preds[i] <= threshold]
    mode_source = [scored.configs[i] for i in (kept if kept else drawn)]

    unselected = [i for i in np.argsort(-scored.v_preds, kind="stable") if i not in set(drawn)]
    out = [SelectedCandidate(scored.configs[i], float(scored.v_preds[i]), ABOVE_THRESHOLD)
           for i in kept]
    for i in dropped:
        synth = synthesize_mode(mode_source, space)
        if is_valid(space, synth, workload):
            out.append(SelectedCandidate(synth, float(scorer([synth])[0]), SYNTHESIZED))
        elif unselected:
            j = unselected.pop(0)
            out.append(SelectedCandidate(scored.configs[j], float(scored.v_preds[j]), FALLBACK))
        else:
            out.append(SelectedCandidate(scored.configs[i], float(scored.v_preds[i]), FALLBACK))
    return out
