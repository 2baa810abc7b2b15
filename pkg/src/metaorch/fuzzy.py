"""Fuzzy response evaluation.

Maps a raw performance score onto three bounded, interpretable axes
(completeness, relevance, confidence), aggregates them with fixed weights
into a quality scalar in [0, 1], and buckets the quality into a qualitative
label. Confidence is floored at 0.1; the other axes clamp to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .envsim import AgentSpec, Environment, RawOutcome, Task


class QualityLabel(Enum):
    EXCELLENT = "Excellent"
    GOOD = "Good"
    FAIR = "Fair"
    POOR = "Poor"


@dataclass(frozen=True)
class FuzzyWeights:
    """Aggregation weights; must be non-negative and sum to 1."""

    w_c: float = 0.4
    w_r: float = 0.4
    w_f: float = 0.2

    def validate(self) -> "FuzzyWeights":
        if min(self.w_c, self.w_r, self.w_f) < 0:
            raise ValueError(f"fuzzy weights must be non-negative: {self}")
        total = self.w_c + self.w_r + self.w_f
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"fuzzy weights must sum to 1, got {total!r}")
        return self

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w_c, self.w_r, self.w_f)


@dataclass(frozen=True)
class LabelThresholds:
    """Lower quality bounds for Excellent / Good / Fair; below fair is Poor.

    A quality exactly on a boundary takes the higher label.
    """

    excellent: float = 0.85
    good: float = 0.65
    fair: float = 0.45

    def label(self, quality: float) -> QualityLabel:
        if quality >= self.excellent:
            return QualityLabel.EXCELLENT
        if quality >= self.good:
            return QualityLabel.GOOD
        if quality >= self.fair:
            return QualityLabel.FAIR
        return QualityLabel.POOR


DEFAULT_WEIGHTS = FuzzyWeights()
DEFAULT_THRESHOLDS = LabelThresholds()


@dataclass(frozen=True)
class FuzzyScores:
    completeness: float
    relevance: float
    confidence: float
    quality: float
    label: QualityLabel


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


def completeness(score: float) -> float:
    """min(1, max(0, (score + 3) / 4))"""
    _require_finite("score", score)
    return min(1.0, max(0.0, (score + 3.0) / 4.0))


def relevance(score: float) -> float:
    """min(1, max(0, (score + 2) / 3))"""
    _require_finite("score", score)
    return min(1.0, max(0.0, (score + 2.0) / 3.0))


def confidence(reliability: float, noise: float) -> float:
    """min(1, max(0.1, reliability + noise / 5))"""
    _require_finite("noise", noise)
    if not 0.0 <= reliability <= 1.0:
        raise ValueError(f"reliability must be in [0, 1], got {reliability!r}")
    return min(1.0, max(0.1, reliability + noise / 5.0))


def evaluate(
    outcome: RawOutcome,
    agent: AgentSpec,
    weights: FuzzyWeights = DEFAULT_WEIGHTS,
    thresholds: LabelThresholds = DEFAULT_THRESHOLDS,
) -> FuzzyScores:
    """Score one outcome along all three axes and aggregate."""
    if outcome.agent_id != agent.agent_id:
        raise ValueError(
            f"outcome belongs to agent {outcome.agent_id}, not {agent.agent_id}"
        )
    weights.validate()
    comp = completeness(outcome.score)
    rel = relevance(outcome.score)
    conf = confidence(agent.reliability, outcome.noise)
    quality = weights.w_c * comp + weights.w_r * rel + weights.w_f * conf
    return FuzzyScores(
        completeness=comp,
        relevance=rel,
        confidence=conf,
        quality=quality,
        label=thresholds.label(quality),
    )


def evaluate_roster(
    env: Environment,
    task: Task,
    weights: FuzzyWeights = DEFAULT_WEIGHTS,
    thresholds: LabelThresholds = DEFAULT_THRESHOLDS,
) -> list[FuzzyScores]:
    """Fuzzy scores of every agent on one task, in agent order."""
    return [
        evaluate(env.raw_score(agent, task), agent, weights, thresholds)
        for agent in env.agents
    ]


def sensitivity_sweep(weight_grid, eval_run):
    """Selection accuracy under each weight triple, with deltas vs default.

    eval_run is a closure mapping a FuzzyWeights to a selection accuracy;
    the sweep re-runs it per triple and reports the accuracy change relative
    to the default 0.4/0.4/0.2 weighting. Returns rows of
    (weights, accuracy, delta).
    """
    grid = list(weight_grid)
    if not grid:
        raise ValueError("weight grid must not be empty")
    for w in grid:
        w.validate()
    baseline = eval_run(DEFAULT_WEIGHTS)
    rows = []
    for w in grid:
        acc = baseline if w == DEFAULT_WEIGHTS else eval_run(w)
        rows.append((w, acc, acc - baseline))
    return rows
