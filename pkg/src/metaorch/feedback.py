"""Human feedback records and their JSON-lines file format.

One record per resolved decision, in resolution order. The file is what the
approval service flushes and what feedback injection consumes; records carry
the task's generation seed and domain so tasks can be regenerated exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .envsim import Domain, EnvConfig, Task, generate_task


@dataclass(frozen=True)
class FeedbackRecord:
    decision_id: str
    task_id: int
    domain: str
    task_seed: int
    model_choice: int
    human_choice: int
    action: str  # "approve" | "override"
    timestamp: float

    def validate(self) -> "FeedbackRecord":
        if self.action not in ("approve", "override"):
            raise ValueError(f"unknown action {self.action!r}")
        if self.action == "approve" and self.human_choice != self.model_choice:
            raise ValueError("approve requires human_choice == model_choice")
        if self.action == "override" and self.human_choice == self.model_choice:
            raise ValueError("override requires human_choice != model_choice")
        Domain(self.domain)
        return self


def to_json_line(record: FeedbackRecord) -> str:
    return json.dumps(asdict(record), sort_keys=True)


def write_log(records: list[FeedbackRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(to_json_line(r) + "\n")


def read_log(path) -> tuple[list[FeedbackRecord], list[str]]:
    """Parse a feedback log; malformed lines are reported, not fatal."""
    records: list[FeedbackRecord] = []
    errors: list[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(FeedbackRecord(**json.loads(line)).validate())
            except (json.JSONDecodeError, TypeError, ValueError) as e:
                errors.append(f"line {lineno}: {e}")
    return records, errors


def regenerate_task(record: FeedbackRecord, config: EnvConfig) -> Task:
    """Rebuild the exact task a feedback record refers to."""
    return generate_task(Domain(record.domain), record.task_id, record.task_seed, config)
