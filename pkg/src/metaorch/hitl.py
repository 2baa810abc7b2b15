"""HTTP service for human-in-the-loop review of orchestration decisions.

The server owns one environment, one trained model, and the per-agent
histories. POST /api/step runs one selection and parks it as a pending
decision; a human approves it or overrides it with another agent, and only
then does the chosen agent execute and the histories update. Every human
resolution appends exactly one feedback record, in resolution order, in the
exact shape training.inject_feedback consumes.

Expiry is optional and lazy: when auto_expire_seconds is positive, stale
pending decisions are expired on the next request. An expired decision
executes the model's own choice and updates histories, but records no
feedback and no confusion entry, because no human judged it.

All handlers funnel through one lock, so two racing resolutions of the same
decision yield one success and one conflict.
"""

from __future__ import annotations

import hashlib
import threading
import time
from dataclasses import dataclass, field

from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import JSONResponse

from . import fuzzy, neuralnet
from .envsim import Environment, Task, domain_for
from .feedback import FeedbackRecord, write_log
from .orchestrator import NeuralStrategy, fresh_histories

VECTOR_PREVIEW_DIMS = 4


@dataclass
class PendingDecision:
    """One selection awaiting human review, plus everything needed to act on it."""

    decision_id: str
    task: Task
    distribution: tuple[float, ...]
    predicted_confidence: float | None
    model_choice: int
    oracle_agent: int
    preview: tuple[dict, ...]
    state: str = "pending"
    created_at: float = field(default_factory=time.time)
    final_agent: int | None = None
    executed_quality: float | None = None

    def to_json(self) -> dict:
        return {
            "decision_id": self.decision_id,
            "task_id": self.task.id,
            "domain": self.task.domain.value,
            "task_vector_head": [float(x) for x in self.task.task_vector[:VECTOR_PREVIEW_DIMS]],
            "context_vector": [float(x) for x in self.task.context_vector],
            "distribution": list(self.distribution),
            "predicted_confidence": self.predicted_confidence,
            "model_choice": self.model_choice,
            "oracle_agent": self.oracle_agent,
            "preview": list(self.preview),
            "state": self.state,
            "created_at": self.created_at,
            "final_agent": self.final_agent,
            "executed_quality": self.executed_quality,
        }


class HitlServer:
    """Single-writer state machine behind the HTTP handlers."""

    def __init__(
        self,
        env: Environment,
        params: neuralnet.Parameters,
        weights: fuzzy.FuzzyWeights = fuzzy.DEFAULT_WEIGHTS,
        serve_seed: int = 4242,
        queue_cap: int = 100,
        auto_expire_seconds: float = 0.0,
        feedback_path: str = "feedback.jsonl",
    ):
        self.env = env
        self.weights = weights
        self.strategy = NeuralStrategy(params)
        self.serve_seed = serve_seed
        self.queue_cap = queue_cap
        self.auto_expire_seconds = auto_expire_seconds
        self.feedback_path = feedback_path
        self.checkpoint_id = hashlib.sha256(neuralnet.serialize(params)).hexdigest()[:12]
        self.histories = fresh_histories(env.n_agents)
        self.next_task_id = 0
        self.decisions: dict[str, PendingDecision] = {}
        self.order: list[str] = []
        self.feedback: list[FeedbackRecord] = []
        self.history_entries: list[dict] = []
        n = env.n_agents
        self.confusion = [[0] * n for _ in range(n)]
        self.counts = {"pending": 0, "approved": 0, "overridden": 0, "expired": 0}
        self._lock = threading.Lock()

    # -- internals, caller must hold the lock --------------------------------

    def _expire_stale(self, now: float | None = None) -> list[str]:
        if self.auto_expire_seconds <= 0:
            return []
        now = time.time() if now is None else now
        expired = []
        for did in self.order:
            d = self.decisions[did]
            if d.state == "pending" and now - d.created_at >= self.auto_expire_seconds:
                self._execute(d, d.model_choice, "expired")
                expired.append(did)
        return expired

    def _execute(self, decision: PendingDecision, agent_id: int, new_state: str) -> None:
        agent = self.env.agents[agent_id]
        outcome = self.env.raw_score(agent, decision.task)
        scores = fuzzy.evaluate(outcome, agent, self.weights)
        self.histories[agent_id].update(scores)
        decision.state = new_state
        decision.final_agent = agent_id
        decision.executed_quality = scores.quality
        self.counts["pending"] -= 1
        self.counts[new_state] += 1
        if new_state == "expired":
            return
        self.confusion[decision.oracle_agent][agent_id] += 1
        action = "approve" if new_state == "approved" else "override"
        self.feedback.append(
            FeedbackRecord(
                decision_id=decision.decision_id,
                task_id=decision.task.id,
                domain=decision.task.domain.value,
                task_seed=self.serve_seed,
                model_choice=decision.model_choice,
                human_choice=agent_id,
                action=action,
                timestamp=time.time(),
            ).validate()
        )
        resolved = self.counts["approved"] + self.counts["overridden"]
        trace = sum(self.confusion[i][i] for i in range(self.env.n_agents))
        self.history_entries.append(
            {
                "decision_id": decision.decision_id,
                "task_id": decision.task.id,
                "domain": decision.task.domain.value,
                "oracle_agent": decision.oracle_agent,
                "model_choice": decision.model_choice,
                "final_agent": agent_id,
                "action": action,
                "executed_quality": scores.quality,
                "accuracy_so_far": trace / resolved,
            }
        )

    # -- handler entry points -------------------------------------------------

    def step(self) -> dict:
        with self._lock:
            self._expire_stale()
            if self.counts["pending"] >= self.queue_cap:
                raise HTTPException(
                    status_code=409,
                    detail=f"pending queue at cap {self.queue_cap}",
                )
            task_id = self.next_task_id
            self.next_task_id += 1
            task = self.env.generate_task(
                domain_for(task_id, self.serve_seed), task_id, seed=self.serve_seed
            )
            selection = self.strategy.select(task, self.histories)
            roster = fuzzy.evaluate_roster(self.env, task, self.weights)
            qualities = [s.quality for s in roster]
            preview = tuple(
                {
                    "agent_id": a.agent_id,
                    "name": a.name,
                    "quality": s.quality,
                    "completeness": s.completeness,
                    "relevance": s.relevance,
                    "confidence": s.confidence,
                    "label": s.label.value,
                }
                for a, s in zip(self.env.agents, roster)
            )
            decision = PendingDecision(
                decision_id=f"d{task_id:06d}",
                task=task,
                distribution=tuple(float(p) for p in selection.distribution),
                predicted_confidence=selection.predicted_confidence,
                model_choice=selection.chosen_agent,
                oracle_agent=int(max(range(len(qualities)), key=qualities.__getitem__)),
                preview=preview,
            )
            self.decisions[decision.decision_id] = decision
            self.order.append(decision.decision_id)
            self.counts["pending"] += 1
            return decision.to_json()

    def resolve(self, decision_id: str, action: str, agent: int | None) -> dict:
        with self._lock:
            self._expire_stale()
            decision = self.decisions.get(decision_id)
            if decision is None:
                raise HTTPException(status_code=404, detail=f"unknown decision {decision_id!r}")
            if decision.state != "pending":
                raise HTTPException(
                    status_code=409,
                    detail=f"decision {decision_id!r} already {decision.state}",
                )
            if action == "approve":
                self._execute(decision, decision.model_choice, "approved")
            elif action == "override":
                if agent is None or not 0 <= agent < self.env.n_agents:
                    raise HTTPException(
                        status_code=422,
                        detail=f"override requires an agent index in 0..{self.env.n_agents - 1}",
                    )
                if agent == decision.model_choice:
                    raise HTTPException(
                        status_code=422,
                        detail="override must name a different agent; use approve instead",
                    )
                self._execute(decision, agent, "overridden")
            else:
                raise HTTPException(
                    status_code=422,
                    detail=f"action must be 'approve' or 'override', got {action!r}",
                )
            return decision.to_json()

    def state(self) -> dict:
        with self._lock:
            self._expire_stale()
            resolved = self.counts["approved"] + self.counts["overridden"]
            trace = sum(self.confusion[i][i] for i in range(self.env.n_agents))
            return {
                "checkpoint_id": self.checkpoint_id,
                "n_agents": self.env.n_agents,
                "agent_names": [a.name for a in self.env.agents],
                "counts": dict(self.counts),
                "rolling_accuracy": trace / resolved if resolved else 0.0,
                "confusion": [row[:] for row in self.confusion],
                "pending": [
                    self.decisions[did].to_json()
                    for did in self.order
                    if self.decisions[did].state == "pending"
                ],
                "history": list(self.history_entries),
            }

    def feedback_json(self) -> list[dict]:
        with self._lock:
            return [
                {
                    "decision_id": r.decision_id,
                    "task_id": r.task_id,
                    "domain": r.domain,
                    "task_seed": r.task_seed,
                    "model_choice": r.model_choice,
                    "human_choice": r.human_choice,
                    "action": r.action,
                    "timestamp": r.timestamp,
                }
                for r in self.feedback
            ]

    def flush(self, path: str | None = None) -> dict:
        with self._lock:
            target = path or self.feedback_path
            try:
                write_log(self.feedback, target)
            except OSError as exc:
                # the in-memory log stays intact; the client may retry
                raise HTTPException(status_code=500, detail=f"flush failed: {exc}") from exc
            return {"path": str(target), "count": len(self.feedback)}


def create_app(server: HitlServer, static_dir: str | None = None) -> FastAPI:
    """Wire the server into HTTP routes; optionally serve the dashboard bundle."""
    app = FastAPI(title="metaorch hitl", docs_url=None, redoc_url=None)

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok", "checkpoint_id": server.checkpoint_id}

    @app.get("/api/state")
    def state() -> JSONResponse:
        return JSONResponse(server.state())

    @app.post("/api/step")
    def step() -> JSONResponse:
        return JSONResponse(server.step())

    @app.post("/api/decision/{decision_id}")
    def decide(decision_id: str, payload: dict = Body(default={})) -> JSONResponse:
        action = payload.get("action")
        agent = payload.get("agent")
        if not isinstance(action, str):
            raise HTTPException(status_code=422, detail="body must carry an 'action' string")
        if agent is not None and not isinstance(agent, int):
            raise HTTPException(status_code=422, detail="'agent' must be an integer index")
        return JSONResponse(server.resolve(decision_id, action, agent))

    @app.get("/api/feedback")
    def feedback() -> JSONResponse:
        return JSONResponse(server.feedback_json())

    @app.post("/api/feedback/flush")
    def flush(payload: dict = Body(default={})) -> JSONResponse:
        path = payload.get("path")
        if path is not None and not isinstance(path, str):
            raise HTTPException(status_code=422, detail="'path' must be a string")
        return JSONResponse(server.flush(path))

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="dashboard")
    return app
