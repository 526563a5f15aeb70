"""Controller knowledge base: performance sampling, snapshots and disruption
detection."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import networkx as nx

from .constraints import ConstraintSet, ConstraintViolation, check_constraints  # noqa: F401
from .model import CapabilityModel, EnvironmentModel, ProcessPlan, ProductHistory
from .resource import AgentKind, Mode, ResourceAgent, TaskExecution

DEFAULT_WINDOW = 200


@dataclass(frozen=True)
class PerformanceVector:
    agent_id: str
    tick: int
    throughput: int
    utilization: float
    breakdown: bool
    availability: int

    def __post_init__(self):
        if not 0.0 <= self.utilization <= 1.0:
            raise ValueError(f"utilization {self.utilization} outside [0, 1]")
        if self.availability != (0 if self.breakdown else 1):
            raise ValueError("availability must be 0 exactly when broken down")

    def to_dict(self) -> dict:
        return {"agent": self.agent_id, "tick": self.tick, "throughput": self.throughput,
                "utilization": round(self.utilization, 6), "breakdown": self.breakdown,
                "availability": self.availability}


@dataclass(frozen=True)
class Disruption:
    disrupted_agent: str
    affected_states: frozenset[str]
    affected_events: frozenset[str]
    detected_at: int


@dataclass(frozen=True)
class AgentView:
    agent_id: str
    kind: AgentKind
    mode: Mode
    model: CapabilityModel
    pristine: CapabilityModel
    deactivated: frozenset[str]
    current_task: TaskExecution | None
    performance: PerformanceVector
    constraints: ConstraintSet

    @property
    def operational(self) -> bool:
        return self.mode is Mode.OPERATIONAL


@dataclass(frozen=True)
class PartView:
    part_id: str
    plan: ProcessPlan
    history: ProductHistory
    current_state: str
    environment: EnvironmentModel | None = None


@dataclass(frozen=True)
class KnowledgeSnapshot:
    tick: int
    agents: Mapping[str, AgentView]
    parts: Mapping[str, PartView] = field(default_factory=dict)
    topology: nx.Graph | None = None

    def proximity(self, a: str, b: str) -> float:
        """Hop count between two topology nodes (inf when disconnected)."""
        if self.topology is None:
            return 0.0 if a == b else 1.0
        try:
            return float(nx.shortest_path_length(self.topology, a, b))
        except (nx.NetworkXNoPath, nx.NodeNotFound):
            return float("inf")

    def to_dict(self) -> dict:
        agents = {}
        for aid, view in sorted(self.agents.items()):
            task = view.current_task
            agents[aid] = {
                "kind": view.kind.value,
                "mode": view.mode.value,
                "events": sorted(view.model.events),
                "deactivated": sorted(view.deactivated),
                "shared_states": sorted(view.model.shared_states),
                "current_task": None if task is None else
                {"part": task.part_id, "event": task.event, "finishes_at": task.finishes_at},
                "performance": view.performance.to_dict(),
                "constraints": view.constraints.to_dict(),
            }
        parts = {
            pid: {"state": p.current_state, "visited": list(p.history.visited_states),
                  "achieved": sorted(p.history.achieved)}
            for pid, p in sorted(self.parts.items())
        }
        return {"tick": self.tick, "agents": agents, "parts": parts}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def sample_performance(agent: ResourceAgent, now: int, window: int = DEFAULT_WINDOW) -> PerformanceVector:
    if window < 1:
        raise ValueError("window must be >= 1")
    start = max(0, now - window)
    span = now - start
    busy = agent.busy_ticks(start, now)
    utilization = busy / span if span else 0.0
    broken = not agent.operational
    return PerformanceVector(agent.id, now, agent.completions_between(start, now),
                             min(1.0, utilization), broken, 0 if broken else 1)


def snapshot_agent(agent: ResourceAgent, now: int, perf: PerformanceVector) -> AgentView:
    return AgentView(agent.id, agent.kind, agent.status.mode, agent.model, agent.pristine,
                     agent.deactivated, agent.current_task(now), perf, agent.constraints)


def take_snapshot(agents: Iterable[ResourceAgent], now: int, window: int = DEFAULT_WINDOW,
                  parts: Mapping[str, PartView] | None = None,
                  topology: nx.Graph | None = None) -> KnowledgeSnapshot:
    views = {}
    for agent in agents:
        views[agent.id] = snapshot_agent(agent, now, sample_performance(agent, now, window))
    return KnowledgeSnapshot(now, views, dict(parts or {}), topology)


def detect_disruptions(snapshot: KnowledgeSnapshot,
                       previous: KnowledgeSnapshot | None) -> list[Disruption]:
    """One disruption per agent that went operational -> broken between snapshots."""
    found = []
    for aid, view in sorted(snapshot.agents.items()):
        if view.operational:
            continue
        before = previous.agents.get(aid) if previous is not None else None
        if before is not None and not before.operational:
            continue
        model = view.pristine
        events = frozenset(model.events)
        states = frozenset(src for (src, e) in model.transitions if e in events)
        found.append(Disruption(aid, states, events, snapshot.tick))
    return found
