"""Strategy evaluation: accuracy, quality, confusion matrices, reports.

A report runs one strategy over a held-out task stream: per task the oracle
label is computed, the strategy picks an agent, the picked agent's
deterministic outcome is executed and fuzzy-scored, histories advance, and
the confusion matrix cell (oracle row, selected column) increments.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .envsim import Environment
from .fuzzy import DEFAULT_WEIGHTS, FuzzyWeights
from .orchestrator import HistoryWindow, copy_histories, fresh_histories
from .training import oracle_label


@dataclass(frozen=True)
class TaskRecord:
    task_id: int
    domain: str
    oracle_agent: int
    selected_agent: int
    quality: float
    distribution: tuple[float, ...]


@dataclass(frozen=True)
class EvaluationReport:
    strategy: str
    n_tasks: int
    selection_accuracy: float
    average_quality: float
    confusion: np.ndarray
    per_task: tuple[TaskRecord, ...]
    agent_names: tuple[str, ...]

    def validate(self) -> "EvaluationReport":
        total = int(self.confusion.sum())
        if total != self.n_tasks:
            raise ValueError(f"confusion entries sum to {total}, expected {self.n_tasks}")
        acc = float(np.trace(self.confusion)) / self.n_tasks
        if abs(acc - self.selection_accuracy) > 1e-12:
            raise ValueError("accuracy does not equal trace/total")
        mean_q = sum(r.quality for r in self.per_task) / self.n_tasks
        if abs(mean_q - self.average_quality) > 1e-12:
            raise ValueError("average_quality does not equal mean of per-task quality")
        return self

    def to_json(self) -> str:
        payload = {
            "strategy": self.strategy,
            "n_tasks": self.n_tasks,
            "selection_accuracy": self.selection_accuracy,
            "average_quality": self.average_quality,
            "agent_names": list(self.agent_names),
            "confusion": self.confusion.tolist(),
            "per_task": [
                {
                    "task_id": r.task_id,
                    "domain": r.domain,
                    "oracle_agent": r.oracle_agent,
                    "selected_agent": r.selected_agent,
                    "quality": r.quality,
                    "distribution": list(r.distribution),
                }
                for r in self.per_task
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def warmup_histories(
    env: Environment,
    n_warmup: int,
    seed: int,
    weights: FuzzyWeights = DEFAULT_WEIGHTS,
    window: int | None = None,
) -> list[HistoryWindow]:
    """Histories advanced by n_warmup oracle-executed tasks.

    Mirrors the training-time history dynamics so a trained selector starts
    evaluation from in-distribution inputs.
    """
    histories = (
        fresh_histories(env.n_agents)
        if window is None
        else fresh_histories(env.n_agents, window)
    )
    for task in env.task_stream(n_warmup, seed):
        label = oracle_label(task, env, weights)
        histories[label.best_agent].update(label.roster_scores[label.best_agent])
    return histories


def evaluate(
    strategy,
    env: Environment,
    n_tasks: int,
    eval_seed: int,
    weights: FuzzyWeights = DEFAULT_WEIGHTS,
    histories: list[HistoryWindow] | None = None,
) -> EvaluationReport:
    """Run one strategy over a fresh task stream and build its report."""
    if n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")
    histories = fresh_histories(env.n_agents) if histories is None else histories
    n = env.n_agents
    confusion = np.zeros((n, n), dtype=np.int64)
    records: list[TaskRecord] = []
    quality_sum = 0.0
    hits = 0

    for task in env.task_stream(n_tasks, eval_seed):
        label = oracle_label(task, env, weights)
        decision = strategy.select(task, histories)
        executed_scores = label.roster_scores[decision.chosen_agent]
        histories[decision.chosen_agent].update(executed_scores)
        confusion[label.best_agent, decision.chosen_agent] += 1
        hits += int(decision.chosen_agent == label.best_agent)
        quality_sum += executed_scores.quality
        records.append(
            TaskRecord(
                task_id=task.id,
                domain=task.domain.value,
                oracle_agent=label.best_agent,
                selected_agent=decision.chosen_agent,
                quality=executed_scores.quality,
                distribution=tuple(float(p) for p in decision.distribution),
            )
        )

    return EvaluationReport(
        strategy=strategy.name,
        n_tasks=n_tasks,
        selection_accuracy=hits / n_tasks,
        average_quality=quality_sum / n_tasks,
        confusion=confusion,
        per_task=tuple(records),
        agent_names=tuple(a.name for a in env.agents),
    ).validate()


def compare(
    strategies: list,
    env: Environment,
    n_tasks: int,
    eval_seed: int,
    weights: FuzzyWeights = DEFAULT_WEIGHTS,
    warmup: list[HistoryWindow] | None = None,
) -> list[EvaluationReport]:
    """Evaluate each strategy over the identical task sequence.

    Every strategy starts from its own copy of the warmup histories, so none
    benefits from another's execution history.
    """
    if len(strategies) < 2:
        raise ValueError("compare needs at least 2 strategies")
    names = [s.name for s in strategies]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate strategy names: {names}")
    return [
        evaluate(
            s,
            env,
            n_tasks,
            eval_seed,
            weights,
            histories=None if warmup is None else copy_histories(warmup),
        )
        for s in strategies
    ]


def comparison_csv(reports: list[EvaluationReport]) -> str:
    out = io.StringIO()
    out.write("strategy,n_tasks,average_quality,selection_accuracy\n")
    for r in reports:
        out.write(f"{r.strategy},{r.n_tasks},{r.average_quality!r},{r.selection_accuracy!r}\n")
    return out.getvalue()


def render_confusion(report: EvaluationReport) -> str:
    """Confusion matrix as CSV: oracle rows, selected columns, named axes,
    plus trace and off-diagonal totals."""
    out = io.StringIO()
    names = report.agent_names
    out.write("oracle\\selected," + ",".join(names) + "\n")
    for i, name in enumerate(names):
        row = ",".join(str(int(v)) for v in report.confusion[i])
        out.write(f"{name},{row}\n")
    trace = int(np.trace(report.confusion))
    out.write(f"trace,{trace}\n")
    out.write(f"off_diagonal,{int(report.confusion.sum()) - trace}\n")
    return out.getvalue()


def parse_confusion(text: str) -> np.ndarray:
    """Read back the counts from render_confusion() output."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    n = len(header) - 1
    rows = []
    for ln in lines[1 : 1 + n]:
        cells = ln.split(",")
        rows.append([int(v) for v in cells[1 : 1 + n]])
    return np.array(rows, dtype=np.int64)
