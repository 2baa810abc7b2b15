"""Agent selection strategies and the model input encoding.

Per-agent rolling histories (last W fuzzy score records) are summarized as
fixed-width mean features and concatenated with the task's context and skill
vectors to form the selector input. Four interchangeable strategies expose
one select() interface: the trained neural selector and the random,
round-robin, and static-best baselines.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import neuralnet
from .envsim import Environment, Task
from .fuzzy import DEFAULT_WEIGHTS, FuzzyScores, FuzzyWeights, evaluate_roster
from .rng import TAG_SELECT, substream

DEFAULT_WINDOW = 10

# History features of an agent nobody has observed yet: neutral 0.5 means,
# zero fill.
NEUTRAL_BLOCK = (0.5, 0.5, 0.5, 0.5, 0.0)


class StrategyKind(Enum):
    NEURAL = "neural"
    RANDOM = "random"
    ROUND_ROBIN = "round-robin"
    STATIC_BEST = "static-best"


@dataclass
class HistoryWindow:
    """Ring buffer of an agent's last W fuzzy score records."""

    agent_id: int
    window: int = DEFAULT_WINDOW
    records: deque = field(default_factory=deque)

    def update(self, scores: FuzzyScores) -> "HistoryWindow":
        """Append a completed task's scores, evicting the oldest past W."""
        self.records.append(scores)
        while len(self.records) > self.window:
            self.records.popleft()
        return self

    def features(self) -> tuple[float, float, float, float, float]:
        """(mean quality, mean completeness, mean relevance, mean confidence,
        fill fraction); neutral block when empty."""
        if not self.records:
            return NEUTRAL_BLOCK
        n = len(self.records)
        return (
            sum(r.quality for r in self.records) / n,
            sum(r.completeness for r in self.records) / n,
            sum(r.relevance for r in self.records) / n,
            sum(r.confidence for r in self.records) / n,
            n / self.window,
        )

    def copy(self) -> "HistoryWindow":
        return HistoryWindow(self.agent_id, self.window, deque(self.records))


def fresh_histories(n_agents: int, window: int = DEFAULT_WINDOW) -> list[HistoryWindow]:
    return [HistoryWindow(agent_id=i, window=window) for i in range(n_agents)]


def copy_histories(histories: list[HistoryWindow]) -> list[HistoryWindow]:
    return [h.copy() for h in histories]


def input_width(d: int, c: int, n_agents: int) -> int:
    return c + d + 5 * n_agents


def encode_input(task: Task, histories: list[HistoryWindow]) -> np.ndarray:
    """context ++ task ++ five summary features per agent, in agent order."""
    for i, h in enumerate(histories):
        if h.agent_id != i:
            raise ValueError("histories must be ordered by agent_id, one per agent")
    blocks = [np.asarray(h.features()) for h in histories]
    return np.concatenate([task.context_vector, task.task_vector, *blocks])


@dataclass(frozen=True)
class SelectionDecision:
    task_id: int
    chosen_agent: int
    distribution: np.ndarray
    strategy: StrategyKind
    predicted_confidence: float | None = None


def _uniform_distribution(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


class NeuralStrategy:
    """Selects via the trained network; argmax with lowest-index tie-break."""

    kind = StrategyKind.NEURAL
    name = "MetaOrch"

    def __init__(self, params: neuralnet.Parameters):
        self.params = params

    def select(self, task: Task, histories: list[HistoryWindow]) -> SelectionDecision:
        x = encode_input(task, histories)
        if x.shape[0] != self.params.config.input_dim:
            raise ValueError(
                f"encoded width {x.shape[0]} does not match model input_dim "
                f"{self.params.config.input_dim}"
            )
        probs, conf, _ = neuralnet.forward(self.params, x, mode="infer")
        row = probs[0]
        return SelectionDecision(
            task_id=task.id,
            chosen_agent=int(np.argmax(row)),
            distribution=row,
            strategy=self.kind,
            predicted_confidence=None if conf is None else float(conf[0]),
        )


class RandomStrategy:
    """Uniform choice from a seeded stream, pure in (seed, task_id)."""

    kind = StrategyKind.RANDOM
    name = "Random"

    def __init__(self, n_agents: int, seed: int):
        self.n_agents = n_agents
        self.seed = seed

    def select(self, task: Task, histories: list[HistoryWindow]) -> SelectionDecision:
        g = substream(self.seed, TAG_SELECT, task.id)
        return SelectionDecision(
            task_id=task.id,
            chosen_agent=int(g.integers(self.n_agents)),
            distribution=_uniform_distribution(self.n_agents),
            strategy=self.kind,
        )


class RoundRobinStrategy:
    """Counter mod n; the counter advances once per selection."""

    kind = StrategyKind.ROUND_ROBIN
    name = "Round-Robin"

    def __init__(self, n_agents: int):
        self.n_agents = n_agents
        self.counter = 0

    def select(self, task: Task, histories: list[HistoryWindow]) -> SelectionDecision:
        chosen = self.counter % self.n_agents
        self.counter += 1
        return SelectionDecision(
            task_id=task.id,
            chosen_agent=chosen,
            distribution=_uniform_distribution(self.n_agents),
            strategy=self.kind,
        )


class StaticBestStrategy:
    """Always the one agent with the best calibrated mean quality."""

    kind = StrategyKind.STATIC_BEST
    name = "Static-Best"

    def __init__(self, n_agents: int, best_agent: int | None = None):
        self.n_agents = n_agents
        self.best_agent = best_agent

    def select(self, task: Task, histories: list[HistoryWindow]) -> SelectionDecision:
        if self.best_agent is None:
            raise RuntimeError("static-best strategy used before calibration")
        return SelectionDecision(
            task_id=task.id,
            chosen_agent=self.best_agent,
            distribution=_uniform_distribution(self.n_agents),
            strategy=self.kind,
        )


def calibrate_static_best(
    env: Environment,
    seed: int,
    n_warmup: int = 100,
    weights: FuzzyWeights = DEFAULT_WEIGHTS,
) -> StaticBestStrategy:
    """Fit the static-best baseline on a warmup task sample.

    Every agent is evaluated on every warmup task; the agent with the highest
    mean fuzzy quality becomes the fixed pick (ties to the lowest index).
    """
    if n_warmup < 1:
        raise ValueError("n_warmup must be >= 1")
    totals = np.zeros(env.n_agents)
    for task in env.task_stream(n_warmup, seed):
        for i, scores in enumerate(evaluate_roster(env, task, weights)):
            totals[i] += scores.quality
    return StaticBestStrategy(env.n_agents, best_agent=int(np.argmax(totals)))
