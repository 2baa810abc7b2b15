"""Supervised feedback loop for the agent selector.

The oracle label of a task is the agent with the highest fuzzy quality on
it. Training minimizes a cross-entropy term between the selector's softmax
output and the oracle labels (hard one-hot, or a soft distribution over
quality-derived targets) plus a weighted mean-squared-error term pulling the
confidence head toward the oracle agent's observed confidence. Also hosts
the hyperparameter grid search and injection of human override feedback.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import neuralnet
from .envsim import Environment, Task, domain_for
from .fuzzy import DEFAULT_WEIGHTS, FuzzyScores, FuzzyWeights, evaluate_roster
from .orchestrator import HistoryWindow, encode_input, fresh_histories, input_width
from .rng import mix64, stream_key

LOG_FLOOR = 1e-12


class TrainingError(RuntimeError):
    pass


class LabelMode(Enum):
    HARD = "hard"
    SOFT = "soft"


class ExecutionPolicy(Enum):
    """Which agent's outcome feeds history updates during training."""

    ORACLE = "oracle"
    MODEL = "model"


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 500
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    confidence_weight: float = 0.2
    label_mode: LabelMode = LabelMode.HARD
    soft_temperature: float = 0.1
    seed: int = 11
    executor: ExecutionPolicy = ExecutionPolicy.ORACLE

    def validate(self) -> "TrainConfig":
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.confidence_weight < 0:
            raise ValueError("confidence_weight must be >= 0")
        if self.soft_temperature <= 0:
            raise ValueError("soft_temperature must be positive")
        return self


@dataclass(frozen=True)
class TrainRecord:
    iteration: int
    cross_entropy_loss: float
    confidence_loss: float


@dataclass(frozen=True)
class OracleLabel:
    task_id: int
    best_agent: int
    qualities: np.ndarray
    roster_scores: tuple[FuzzyScores, ...]
    soft_targets: np.ndarray | None = None

    @property
    def observed_confidence(self) -> float:
        """Confidence of the oracle agent; the regression target."""
        return self.roster_scores[self.best_agent].confidence


def oracle_label(
    task: Task,
    env: Environment,
    weights: FuzzyWeights = DEFAULT_WEIGHTS,
    soft_temperature: float | None = None,
) -> OracleLabel:
    """Evaluate every agent on the task and take the quality argmax.

    Ties break to the lowest agent index. When a temperature is given, a
    softmax over qualities / temperature is attached as the soft target
    distribution.
    """
    roster = tuple(evaluate_roster(env, task, weights))
    qualities = np.array([s.quality for s in roster])
    soft = None
    if soft_temperature is not None:
        z = qualities / soft_temperature
        e = np.exp(z - z.max())
        soft = e / e.sum()
    return OracleLabel(
        task_id=task.id,
        best_agent=int(np.argmax(qualities)),
        qualities=qualities,
        roster_scores=roster,
        soft_targets=soft,
    )


@dataclass
class LossResult:
    total: float
    cross_entropy: float
    confidence: float
    d_sel_logits: np.ndarray
    d_conf_logit: np.ndarray | None
    floor_hits: int


def target_matrix(labels: list[OracleLabel], n_agents: int, mode: LabelMode) -> np.ndarray:
    """Per-row selection targets: one-hot rows (hard) or soft distributions."""
    y = np.zeros((len(labels), n_agents))
    for i, lab in enumerate(labels):
        if mode is LabelMode.HARD:
            y[i, lab.best_agent] = 1.0
        else:
            if lab.soft_targets is None:
                raise ValueError("soft label mode requires labels with soft_targets")
            y[i] = lab.soft_targets
    return y


def batch_loss(
    sel_probs: np.ndarray,
    conf_pred: np.ndarray | None,
    labels: list[OracleLabel],
    confidence_weight: float,
    label_mode: LabelMode = LabelMode.HARD,
) -> LossResult:
    """Combined loss and its gradients at the two heads' logits.

    cross_entropy is averaged over the batch against the selection targets;
    confidence is the mean squared error between the predicted confidence and
    the oracle agent's observed confidence. total = ce + weight * mse. The
    gradients returned are exact for the unfloored loss; a 1e-12 floor guards
    log of vanishing probabilities and its activations are counted.
    """
    n, k = sel_probs.shape
    if len(labels) != n:
        raise ValueError(f"{len(labels)} labels for a batch of {n}")
    y = target_matrix(labels, k, label_mode)
    floor_hits = int(np.sum((sel_probs < LOG_FLOOR) & (y > 0)))
    ce = float(-np.sum(y * np.log(np.maximum(sel_probs, LOG_FLOOR))) / n)
    d_sel = (sel_probs - y) / n

    conf_loss = 0.0
    d_conf = None
    if conf_pred is not None:
        targets = np.array([lab.observed_confidence for lab in labels])
        diff = conf_pred - targets
        conf_loss = float(np.mean(diff**2))
        # d(mse)/d(logit) through the sigmoid, scaled by the loss weight
        d_conf = confidence_weight * (2.0 * diff * conf_pred * (1.0 - conf_pred) / n)
    total = ce + confidence_weight * conf_loss
    return LossResult(total, ce, conf_loss, d_sel, d_conf, floor_hits)


def _accumulate(velocity: neuralnet.Parameters, grads: neuralnet.Parameters, momentum: float) -> neuralnet.Parameters:
    """velocity * momentum + grads, elementwise over all tensors."""
    return neuralnet.Parameters(
        config=grads.config,
        trunk=[
            (vw * momentum + gw, vb * momentum + gb)
            for (vw, vb), (gw, gb) in zip(velocity.trunk, grads.trunk)
        ],
        sel_w=velocity.sel_w * momentum + grads.sel_w,
        sel_b=velocity.sel_b * momentum + grads.sel_b,
        conf_w=None if grads.conf_w is None else velocity.conf_w * momentum + grads.conf_w,
        conf_b=None if grads.conf_b is None else velocity.conf_b * momentum + grads.conf_b,
    )


def train(
    env: Environment,
    params: neuralnet.Parameters,
    config: TrainConfig,
    weights: FuzzyWeights = DEFAULT_WEIGHTS,
    histories: list[HistoryWindow] | None = None,
) -> tuple[neuralnet.Parameters, list[TrainRecord]]:
    """Run the batched SGD loop; deterministic in (env, config, seeds).

    Each iteration draws a fresh batch of tasks with uniformly random
    domains, labels them with the oracle, encodes inputs against the current
    histories, takes one SGD step, then executes one agent per task (the
    oracle's pick by default) to advance the histories.
    """
    config.validate()
    expected = input_width(env.config.d, env.config.c, env.n_agents)
    if params.config.input_dim != expected:
        raise ValueError(
            f"model input_dim {params.config.input_dim} does not match "
            f"encoder width {expected}"
        )
    histories = fresh_histories(env.n_agents) if histories is None else histories
    tau = config.soft_temperature if config.label_mode is LabelMode.SOFT else None
    records: list[TrainRecord] = []
    velocity: neuralnet.Parameters | None = None

    for it in range(config.iterations):
        base = it * config.batch_size
        tasks = [
            env.generate_task(domain_for(base + j, config.seed), base + j, seed=config.seed)
            for j in range(config.batch_size)
        ]
        labels = [oracle_label(t, env, weights, soft_temperature=tau) for t in tasks]
        x = np.stack([encode_input(t, histories) for t in tasks])
        probs, conf, trace = neuralnet.forward(
            params, x, mode="train", dropout_seed=mix64(stream_key(config.seed, it))
        )
        loss = batch_loss(probs, conf, labels, config.confidence_weight, config.label_mode)
        if not np.isfinite(loss.total):
            raise TrainingError(
                f"non-finite loss at iteration {it}: ce={loss.cross_entropy} "
                f"conf={loss.confidence} task_ids={[t.id for t in tasks]}"
            )
        grads = neuralnet.backward(params, trace, loss.d_sel_logits, loss.d_conf_logit)
        # classical momentum: the accumulated velocity is what sgd_step applies
        velocity = grads if velocity is None else _accumulate(velocity, grads, config.momentum)
        params = neuralnet.sgd_step(params, velocity, config.learning_rate)

        for j, (task, label) in enumerate(zip(tasks, labels)):
            if config.executor is ExecutionPolicy.ORACLE:
                executed = label.best_agent
            else:
                executed = int(np.argmax(probs[j]))
            histories[executed].update(label.roster_scores[executed])

        records.append(TrainRecord(it, loss.cross_entropy, loss.confidence))
    return params, records


def write_records_csv(records: list[TrainRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("iteration,cross_entropy_loss,confidence_loss\n")
        for r in records:
            f.write(f"{r.iteration},{r.cross_entropy_loss!r},{r.confidence_loss!r}\n")


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpace:
    """Search space shaped like the reported hyperparameter sweep."""

    hidden_dims: tuple[tuple[int, ...], ...] = ((64, 32), (128, 64), (256, 128, 64))
    dropout: tuple[float, ...] = (0.0, 0.2)
    learning_rate: tuple[float, ...] = (0.001, 0.01)
    batch_size: tuple[int, ...] = (64, 128)
    confidence_weight: tuple[float, ...] = (0.0, 0.1, 0.2)

    def combinations(self) -> list[tuple]:
        return list(
            itertools.product(
                self.hidden_dims,
                self.dropout,
                self.learning_rate,
                self.batch_size,
                self.confidence_weight,
            )
        )

    def size(self) -> int:
        return (
            len(self.hidden_dims)
            * len(self.dropout)
            * len(self.learning_rate)
            * len(self.batch_size)
            * len(self.confidence_weight)
        )


SMOKE_GRID = GridSpace(
    hidden_dims=((64, 32), (128, 64)),
    dropout=(0.0,),
    learning_rate=(0.001, 0.01),
    batch_size=(64,),
    confidence_weight=(0.1, 0.2, 0.0),
)


@dataclass(frozen=True)
class GridResult:
    hidden_dims: tuple[int, ...]
    dropout: float
    learning_rate: float
    batch_size: int
    confidence_weight: float
    accuracy: float


def _grid_worker(args) -> float:
    """Train one combination and return its validation accuracy."""
    env_or_config, combo, base_config, weights, n_val, val_seed = args
    from .evalreport import evaluate  # deferred: evalreport imports this module
    from .orchestrator import NeuralStrategy

    hidden, dropout, lr, batch, lam = combo
    if isinstance(env_or_config, Environment):
        env = env_or_config  # in-process: share the memoized task/noise caches
    else:
        env = Environment(env_or_config)
    net_cfg = neuralnet.NetworkConfig(
        input_dim=input_width(env.config.d, env.config.c, env.config.n_agents),
        hidden_dims=hidden,
        n_agents=env.config.n_agents,
        dropout_rate=dropout,
        confidence_head=True,
    )
    train_cfg = replace(
        base_config,
        learning_rate=lr,
        batch_size=batch,
        confidence_weight=lam,
    )
    params = neuralnet.init_parameters(net_cfg, seed=train_cfg.seed)
    params, _ = train(env, params, train_cfg, weights)
    report = evaluate(NeuralStrategy(params), env, n_val, val_seed, weights)
    return report.selection_accuracy


def grid_search(
    env: Environment,
    space: GridSpace,
    n_val_tasks: int = 300,
    val_seed: int = 7,
    base_config: TrainConfig = TrainConfig(),
    max_combinations: int = 512,
    jobs: int = 1,
) -> list[GridResult]:
    """Train one model per combination, rank by held-out selection accuracy.

    Ties keep the cartesian-product order of the space, so results are
    deterministic. Sizes beyond max_combinations are refused outright.
    """
    combos = space.combinations()
    if not combos:
        raise ValueError("grid space is empty")
    if len(combos) > max_combinations:
        raise ValueError(
            f"grid has {len(combos)} combinations, above the cap of {max_combinations}"
        )
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        work = [
            (env.config, combo, base_config, DEFAULT_WEIGHTS, n_val_tasks, val_seed)
            for combo in combos
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            accuracies = list(pool.map(_grid_worker, work))
    else:
        accuracies = [
            _grid_worker((env, combo, base_config, DEFAULT_WEIGHTS, n_val_tasks, val_seed))
            for combo in combos
        ]
    results = [
        GridResult(
            hidden_dims=hidden,
            dropout=dropout,
            learning_rate=lr,
            batch_size=batch,
            confidence_weight=lam,
            accuracy=acc,
        )
        for (hidden, dropout, lr, batch, lam), acc in zip(combos, accuracies)
    ]
    results.sort(key=lambda r: -r.accuracy)  # stable: ties keep product order
    return results


def write_grid_csv(results: list[GridResult], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("rank,hidden_dims,dropout,learning_rate,batch_size,confidence_weight,accuracy\n")
        for rank, r in enumerate(results, start=1):
            dims = "x".join(str(h) for h in r.hidden_dims)
            f.write(
                f"{rank},{dims},{r.dropout!r},{r.learning_rate!r},"
                f"{r.batch_size},{r.confidence_weight!r},{r.accuracy!r}\n"
            )


# ---------------------------------------------------------------------------
# Human feedback injection
# ---------------------------------------------------------------------------


def inject_feedback(
    feedback_log: list[tuple[Task, int]],
    params: neuralnet.Parameters,
    config: TrainConfig,
    histories: list[HistoryWindow] | None = None,
    epochs: int = 25,
) -> tuple[neuralnet.Parameters, list[str]]:
    """Fine-tune on human-corrected selections.

    Each (task, corrected_agent) pair becomes a hard label; the confidence
    term is dropped because no observed confidence exists for an override.
    Records with an out-of-range agent index are skipped and reported; the
    rest are still applied.
    """
    n_agents = params.config.n_agents
    errors: list[str] = []
    batch: list[tuple[Task, int]] = []
    for i, (task, agent) in enumerate(feedback_log):
        if not isinstance(agent, int) or not 0 <= agent < n_agents:
            errors.append(f"record {i} (task {task.id}): unknown agent index {agent!r}")
            continue
        batch.append((task, agent))
    if not batch:
        return params, errors

    histories = fresh_histories(n_agents) if histories is None else histories
    x = np.stack([encode_input(task, histories) for task, _ in batch])
    y = np.zeros((len(batch), n_agents))
    for i, (_, agent) in enumerate(batch):
        y[i, agent] = 1.0

    for epoch in range(epochs):
        probs, _, trace = neuralnet.forward(
            params, x, mode="train", dropout_seed=mix64(stream_key(config.seed, 1 + epoch))
        )
        d_sel = (probs - y) / len(batch)
        grads = neuralnet.backward(params, trace, d_sel, None)
        params = neuralnet.sgd_step(params, grads, config.learning_rate)
    return params, errors
