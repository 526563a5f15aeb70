"""Documents exchanged with a decision policy: the three-part prompt and the
(exploration agent, explored capabilities) answer."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from .model import EventKind, ProcessEvent

INSTRUCTIONS = """\
A resource agent has broken down. Choose one operational resource agent to take
over the disrupted events listed under data.disruption.events.
Score every candidate with the weighted factors given for it (availability,
proximity, utilization) and pick the highest score.
Only propose capabilities whose parameters lie inside the chosen agent's
operation_bounds and safety_limits.
Answer with a single JSON document that follows the template exactly and give
your reasoning in the rationale field."""

TEMPLATE = """\
{
  "exploration_agent": "<resource agent id>",
  "explored_capabilities": [
    {"event": "<event id>", "kind": "transport|process", "duration": <ticks>,
     "params": {"<parameter>": <number>}}
  ],
  "rationale": "<text>"
}"""


class OutputSyntaxError(ValueError):
    """A policy answer does not follow the template."""

    def __init__(self, reason: str, position: int | None = None):
        where = "" if position is None else f" at position {position}"
        super().__init__(f"{reason}{where}")
        self.reason = reason
        self.position = position


@dataclass(frozen=True)
class ExplorationOutput:
    exploration_agent: str
    explored_capabilities: tuple[ProcessEvent, ...]
    rationale: str = ""

    def __post_init__(self):
        if not self.explored_capabilities:
            raise ValueError("explored_capabilities must not be empty")

    @property
    def event_ids(self) -> list[str]:
        return [c.id for c in self.explored_capabilities]


def capability_to_dict(event: ProcessEvent) -> dict:
    return {"event": event.id, "kind": event.kind.value, "duration": event.duration,
            "params": {k: float(v) for k, v in sorted(event.params.items())}}


def serialize_output(output: ExplorationOutput) -> str:
    doc = {
        "exploration_agent": output.exploration_agent,
        "explored_capabilities": [capability_to_dict(c) for c in output.explored_capabilities],
        "rationale": output.rationale,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _capability(item: Any, index: int) -> ProcessEvent:
    where = f"explored_capabilities[{index}]"
    if not isinstance(item, dict):
        raise OutputSyntaxError(f"{where} is not an object")
    event = item.get("event")
    if not isinstance(event, str) or not event:
        raise OutputSyntaxError(f"{where}.event must be a non-empty string")
    try:
        kind = EventKind(item.get("kind"))
    except ValueError:
        raise OutputSyntaxError(f"{where}.kind must be 'transport' or 'process'") from None
    duration = item.get("duration")
    if isinstance(duration, bool) or not isinstance(duration, int) or duration < 1:
        raise OutputSyntaxError(f"{where}.duration must be a positive integer")
    params = item.get("params", {})
    if not isinstance(params, dict):
        raise OutputSyntaxError(f"{where}.params must be an object")
    clean = {}
    for name, value in params.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise OutputSyntaxError(f"{where}.params.{name} must be a number")
        clean[name] = float(value)
    return ProcessEvent(event, kind, duration, clean)


def parse_output(text: str) -> ExplorationOutput:
    """Parse a policy answer. Agent ids are not checked here."""
    if not isinstance(text, str) or not text.strip():
        raise OutputSyntaxError("empty response")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise OutputSyntaxError(exc.msg, exc.pos) from None
    if not isinstance(doc, dict):
        raise OutputSyntaxError("response is not a JSON object")
    agent = doc.get("exploration_agent")
    if not isinstance(agent, str) or not agent:
        raise OutputSyntaxError("exploration_agent must be a non-empty string")
    caps = doc.get("explored_capabilities")
    if not isinstance(caps, list) or not caps:
        raise OutputSyntaxError("explored_capabilities must be a non-empty list")
    rationale = doc.get("rationale", "")
    if not isinstance(rationale, str):
        raise OutputSyntaxError("rationale must be a string")
    return ExplorationOutput(agent, tuple(_capability(c, i) for i, c in enumerate(caps)), rationale)


@dataclass(frozen=True)
class PolicyInput:
    instructions: str
    data: Mapping[str, Any]
    template: str = TEMPLATE
    feedback: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.instructions or self.data is None or not self.template:
            raise ValueError("policy input needs instructions, data and template")

    def with_feedback(self, feedback: str) -> "PolicyInput":
        return PolicyInput(
            f"{self.instructions}\nFeedback on your previous answer: {feedback}",
            self.data, self.template, self.feedback + (feedback,),
        )

    def to_document(self) -> dict:
        return {"instructions": self.instructions, "data": self.data, "template": self.template}

    def dumps(self) -> str:
        return json.dumps(self.to_document(), sort_keys=True)


def event_summary(events: Mapping[str, ProcessEvent] | list[ProcessEvent]) -> list[dict]:
    items = events.values() if isinstance(events, Mapping) else events
    return [capability_to_dict(e) for e in sorted(items, key=lambda e: e.id)]
