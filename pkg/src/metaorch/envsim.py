"""Synthetic multi-domain task environment with heterogeneous simulated agents.

Tasks carry a normalized skill-requirement vector and an unnormalized context
vector; their distribution is biased per domain. Each agent has a skill
vector, an expertise vector over contexts, and a reliability in [0, 1]. An
agent's raw performance on a task is

    score = -||skill - task|| + noise + alpha * cos(context, expertise)

where the noise is a zero-mean Gaussian with standard deviation
(1 - reliability), drawn from a counter-based stream keyed by
(master_seed, agent_id, task_id). Recomputing any outcome therefore yields
bit-identical results without an explicit cache.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rng import TAG_AGENT, TAG_DOMAIN, TAG_NOISE, TAG_TASK, substream


class Domain(Enum):
    EMERGENCY = "emergency"
    DOCUMENT = "document"
    GENERAL = "general"


DOMAINS = (Domain.EMERGENCY, Domain.DOCUMENT, Domain.GENERAL)

AGENT_NAMES = ("EmergencyBot", "DocumentBot", "GeneralistBot")


class ConfigError(ValueError):
    """Invalid environment configuration."""


@dataclass(frozen=True)
class EnvConfig:
    """Environment parameters. Defaults give 3 agents over 8 skill dims."""

    d: int = 8
    c: int = 4
    n_agents: int = 3
    alpha: float = 1.0
    domain_bias: float = 1.0
    master_seed: int = 900

    def validate(self) -> "EnvConfig":
        if self.d < 4:
            raise ConfigError(f"skill dimension d must be >= 4, got {self.d}")
        if self.c < 1:
            raise ConfigError(f"context dimension c must be >= 1, got {self.c}")
        if self.n_agents < 2:
            raise ConfigError(f"n_agents must be >= 2, got {self.n_agents}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        return self


@dataclass(frozen=True)
class Task:
    id: int
    domain: Domain
    task_vector: np.ndarray
    context_vector: np.ndarray


@dataclass(frozen=True)
class AgentSpec:
    agent_id: int
    name: str
    skill_vector: np.ndarray
    expertise_vector: np.ndarray
    reliability: float


@dataclass(frozen=True)
class RawOutcome:
    agent_id: int
    task_id: int
    score: float
    noise: float


def _bias_vector(domain: Domain, d: int, bias: float) -> np.ndarray:
    """Additive skill-space bias for a domain.

    Emergency boosts the first two dimensions; document boosts the latter
    half; general is unbiased. d >= 4 keeps the two biased regions disjoint
    and non-empty.
    """
    v = np.zeros(d)
    if domain is Domain.EMERGENCY:
        v[0:2] = bias
    elif domain is Domain.DOCUMENT:
        v[d // 2 :] = bias
    return v


def generate_task(domain: Domain, task_id: int, seed: int, config: EnvConfig) -> Task:
    """Generate the task with the given id, deterministically in (seed, id)."""
    if task_id < 0:
        raise ValueError(f"task_id must be non-negative, got {task_id}")
    g = substream(seed, TAG_TASK, task_id)
    base = g.standard_normal(config.d)
    context = g.standard_normal(config.c)
    raw = base + _bias_vector(domain, config.d, config.domain_bias)
    task_vector = raw / np.linalg.norm(raw)
    task_vector.setflags(write=False)
    context.setflags(write=False)
    return Task(id=task_id, domain=domain, task_vector=task_vector, context_vector=context)


def domain_for(task_id: int, seed: int) -> Domain:
    """Uniform domain assignment for a task stream, pure in (seed, id)."""
    g = substream(seed, TAG_DOMAIN, task_id)
    return DOMAINS[int(g.integers(len(DOMAINS)))]


def spawn_agents(config: EnvConfig) -> list[AgentSpec]:
    """Build the agent roster for a validated config.

    The first three agents are the named specialists: agent 0 gets the
    emergency skill bias, agent 1 the document bias, agent 2 none. Any
    further agents are unbiased generalists. Reliabilities are uniform on
    [0.6, 0.95].
    """
    config.validate()
    agents = []
    for i in range(config.n_agents):
        g = substream(config.master_seed, TAG_AGENT, i)
        skill = g.standard_normal(config.d)
        expertise = g.standard_normal(config.c)
        reliability = float(g.uniform(0.6, 0.95))
        if i == 0:
            skill = skill + _bias_vector(Domain.EMERGENCY, config.d, config.domain_bias)
        elif i == 1:
            skill = skill + _bias_vector(Domain.DOCUMENT, config.d, config.domain_bias)
        name = AGENT_NAMES[i] if i < len(AGENT_NAMES) else f"Agent{i}"
        skill.setflags(write=False)
        expertise.setflags(write=False)
        agents.append(
            AgentSpec(
                agent_id=i,
                name=name,
                skill_vector=skill,
                expertise_vector=expertise,
                reliability=reliability,
            )
        )
    return agents


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, defined as 0 when either vector has zero norm."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def raw_score(agent: AgentSpec, task: Task, config: EnvConfig) -> RawOutcome:
    """Evaluate an agent's raw performance on a task.

    The noise draw is keyed by (master_seed, agent_id, task_id), so repeated
    calls return identical outcomes. Reliability 1.0 gives exactly zero
    noise: the Gaussian's standard deviation is 1 - reliability.
    """
    if agent.skill_vector.shape[0] != task.task_vector.shape[0]:
        raise ValueError("skill and task vector dimensions disagree")
    if agent.expertise_vector.shape[0] != task.context_vector.shape[0]:
        raise ValueError("expertise and context vector dimensions disagree")
    sigma = 1.0 - agent.reliability
    g = substream(config.master_seed, TAG_NOISE, agent.agent_id, task.id)
    noise = sigma * float(g.standard_normal())
    distance = float(np.linalg.norm(agent.skill_vector - task.task_vector))
    score = -distance + noise + config.alpha * cosine(task.context_vector, agent.expertise_vector)
    return RawOutcome(agent_id=agent.agent_id, task_id=task.id, score=score, noise=noise)


class Environment:
    """A validated config plus its deterministic agent roster.

    Tasks and noise draws are pure functions of their identifiers, so the
    environment memoizes both; a cache hit is bit-identical to a recompute.
    """

    def __init__(self, config: EnvConfig):
        self.config = config.validate()
        self.agents = spawn_agents(config)
        self._task_cache: dict[tuple[str, int, int], Task] = {}
        self._noise_cache: dict[tuple[int, int], float] = {}

    @property
    def n_agents(self) -> int:
        return self.config.n_agents

    def generate_task(self, domain: Domain, task_id: int, seed: int | None = None) -> Task:
        seed = self.config.master_seed if seed is None else seed
        key = (domain.value, task_id, seed)
        task = self._task_cache.get(key)
        if task is None:
            task = generate_task(domain, task_id, seed, self.config)
            self._task_cache[key] = task
        return task

    def task_stream(self, n: int, seed: int, start_id: int = 0) -> list[Task]:
        """n tasks with uniformly drawn domains, ids start_id..start_id+n-1."""
        return [
            self.generate_task(domain_for(i, seed), i, seed)
            for i in range(start_id, start_id + n)
        ]

    def raw_score(self, agent: AgentSpec, task: Task) -> RawOutcome:
        key = (agent.agent_id, task.id)
        noise = self._noise_cache.get(key)
        if noise is None:
            g = substream(self.config.master_seed, TAG_NOISE, agent.agent_id, task.id)
            noise = (1.0 - agent.reliability) * float(g.standard_normal())
            self._noise_cache[key] = noise
        if agent.skill_vector.shape[0] != task.task_vector.shape[0]:
            raise ValueError("skill and task vector dimensions disagree")
        if agent.expertise_vector.shape[0] != task.context_vector.shape[0]:
            raise ValueError("expertise and context vector dimensions disagree")
        distance = float(np.linalg.norm(agent.skill_vector - task.task_vector))
        score = -distance + noise + self.config.alpha * cosine(
            task.context_vector, agent.expertise_vector
        )
        return RawOutcome(agent_id=agent.agent_id, task_id=task.id, score=score, noise=noise)

    def roster_json(self) -> str:
        """Roster dump for inspection."""
        rows = [
            {
                "agent_id": a.agent_id,
                "name": a.name,
                "skill_vector": [float(x) for x in a.skill_vector],
                "expertise_vector": [float(x) for x in a.expertise_vector],
                "reliability": a.reliability,
            }
            for a in self.agents
        ]
        return json.dumps(rows, indent=2, sort_keys=True)
