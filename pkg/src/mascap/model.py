"""Finite-state capability models shared by resource agents, product agents
and the controller.

Models are treated as values: operations never mutate a model in place, they
build a new one (see :meth:`CapabilityModel.evolve`). That lets the controller
keep cheap snapshots that hold references instead of deep copies.
"""

from __future__ import annotations

import dataclasses
import heapq
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping


class ModelError(Exception):
    """Base class for capability model errors."""


class UnknownState(ModelError, KeyError):
    pass


class UnknownEvent(ModelError, KeyError):
    pass


class UndefinedTransition(ModelError, KeyError):
    pass


class NotReachable(ModelError):
    """No event sequence leads from a state into the marked set."""


class EventKind(str, Enum):
    TRANSPORT = "transport"
    PROCESS = "process"


@dataclass(frozen=True)
class PartState:
    id: str
    description: str = ""


@dataclass(frozen=True)
class ProcessEvent:
    id: str
    kind: EventKind
    duration: int
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError(f"event {self.id}: duration must be >= 1, got {self.duration}")
        object.__setattr__(self, "kind", EventKind(self.kind))


@dataclass(frozen=True)
class CapabilityModel:
    """A resource's FSM: states, startable events, partial transition map,
    per-state physical properties, the bid's initial state and marked set,
    plus the states it shares with other resources."""

    states: Mapping[str, PartState]
    events: Mapping[str, ProcessEvent]
    transitions: Mapping[tuple[str, str], str]
    physical_props: Mapping[str, frozenset[str]]
    initial_state: str
    marked_states: frozenset[str]
    shared_states: frozenset[str] = frozenset()

    def evolve(self, **changes) -> "CapabilityModel":
        return dataclasses.replace(self, **changes)

    def props_of(self, state: str) -> frozenset[str]:
        return self.physical_props.get(state, frozenset())

    def outgoing(self, state: str) -> list[tuple[str, str]]:
        """(event, target) pairs leaving ``state``, sorted by event id."""
        return sorted((e, dst) for (src, e), dst in self.transitions.items() if src == state)

    def satisfying(self, required: Iterable[str]) -> frozenset[str]:
        required = frozenset(required)
        return frozenset(s for s in self.states if required <= self.props_of(s))


def apply_transition(model: CapabilityModel, state: str, event: str) -> str:
    if state not in model.states:
        raise UnknownState(state)
    if event not in model.events:
        raise UnknownEvent(event)
    try:
        return model.transitions[(state, event)]
    except KeyError:
        raise UndefinedTransition((state, event)) from None


def _successors(model: CapabilityModel) -> dict[str, list[tuple[str, str]]]:
    succ: dict[str, list[tuple[str, str]]] = {}
    for (src, e), dst in model.transitions.items():
        succ.setdefault(src, []).append((e, dst))
    for edges in succ.values():
        edges.sort()
    return succ


def path_to_marked(model: CapabilityModel, start: str,
                   marked: Iterable[str] | None = None) -> list[str]:
    """Shortest event sequence from ``start`` into the marked set.

    Among equally short sequences the lexicographically smallest (by event
    id) wins; BFS with sorted expansion yields it directly because each BFS
    layer is visited in lexicographic path order.
    """
    if start not in model.states:
        raise UnknownState(start)
    targets = model.marked_states if marked is None else frozenset(marked)
    succ = _successors(model)
    parent: dict[str, tuple[str, str] | None] = {start: None}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        if state in targets:
            path = []
            while parent[state] is not None:
                prev, e = parent[state]
                path.append(e)
                state = prev
            return path[::-1]
        for e, dst in succ.get(state, ()):
            if dst not in parent:
                parent[dst] = (state, e)
                queue.append(dst)
    raise NotReachable(f"no path from {start} to marked states")


@dataclass(frozen=True)
class Edge:
    source: str
    event: str
    target: str
    owner: str
    duration: int


def earliest_path(edges: Mapping[str, list[Edge]], start: str, targets: frozenset[str],
                  now: int, start_at: Callable[[str, int, int], int] | None = None,
                  first_owner: str | None = None) -> tuple[int, list[Edge]]:
    """Earliest-completion route over a multi-owner event graph.

    ``start_at(owner, arrival, duration)`` gives the tick at which ``owner``
    can begin an event once the part has arrived; it must not decrease as
    the arrival grows, which keeps Dijkstra exact. Ties resolve on the
    event-id sequence. Returns (finish tick, edges).
    """
    if start_at is None:
        def start_at(_owner: str, arrival: int, _duration: int) -> int:
            return arrival
    if start in targets:
        return now, []
    heap: list[tuple[int, tuple[str, ...], str, tuple[Edge, ...]]] = [(now, (), start, ())]
    settled: set[str] = set()
    while heap:
        t, key, state, path = heapq.heappop(heap)
        if state in settled:
            continue
        settled.add(state)
        if state in targets and path:
            return t, list(path)
        for edge in edges.get(state, ()):
            if not path and first_owner is not None and edge.owner != first_owner:
                continue
            if edge.target in settled:
                continue
            begin = max(t, start_at(edge.owner, t, edge.duration))
            heapq.heappush(heap, (begin + edge.duration, key + (edge.event,),
                                  edge.target, path + (edge,)))
    raise NotReachable(f"no route from {start}")


def validate_model(model: CapabilityModel) -> list[str]:
    """Every invariant violation in ``model``; an empty list means valid."""
    problems = []
    if model.initial_state not in model.states:
        problems.append(f"x_i: initial state {model.initial_state!r} not in X")
    for s in sorted(model.marked_states - set(model.states)):
        problems.append(f"X_m: marked state {s!r} not in X")
    for s in sorted(model.shared_states - set(model.states)):
        problems.append(f"X_s: shared state {s!r} not in X")
    for (src, e), dst in sorted(model.transitions.items()):
        if src not in model.states:
            problems.append(f"Tr: source {src!r} of ({src}, {e}) not in X")
        if e not in model.events:
            problems.append(f"Tr: event {e!r} of ({src}, {e}) not in E")
        if dst not in model.states:
            problems.append(f"Tr: target {dst!r} of ({src}, {e}) not in X")
    for s in sorted(set(model.physical_props) - set(model.states)):
        problems.append(f"Prp_p: state {s!r} not in X")
    return problems


@dataclass
class NeighborTable:
    """Shared state -> agents serving it."""

    entries: dict[str, set[str]] = field(default_factory=dict)

    def add(self, state: str, agent: str) -> bool:
        members = self.entries.setdefault(state, set())
        if agent in members:
            return False
        members.add(agent)
        return True

    def remove(self, state: str, agent: str) -> None:
        members = self.entries.get(state)
        if members is None:
            return
        members.discard(agent)
        if not members:
            del self.entries[state]

    def copy(self) -> "NeighborTable":
        return NeighborTable({k: set(v) for k, v in self.entries.items()})


def neighbor_lookup(table: NeighborTable, state: str) -> set[str]:
    return set(table.entries.get(state, ()))


@dataclass(frozen=True)
class PlanStep:
    physical: frozenset[str] = frozenset()
    non_physical: frozenset[str] = frozenset()

    @property
    def properties(self) -> frozenset[str]:
        return self.physical | self.non_physical


@dataclass(frozen=True)
class ProcessPlan:
    steps: tuple[PlanStep, ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("process plan must have at least one step")
        for i, step in enumerate(self.steps):
            if not step.properties:
                raise ValueError(f"plan step {i + 1} has no properties")

    @classmethod
    def of(cls, *steps: Iterable[str]) -> "ProcessPlan":
        return cls(tuple(PlanStep(physical=frozenset(s)) for s in steps))


@dataclass(frozen=True)
class ProductHistory:
    visited_states: tuple[str, ...] = ()
    achieved_props: Mapping[str, frozenset[str]] = field(default_factory=dict)
    reporting_agent: Mapping[str, str] = field(default_factory=dict)

    @property
    def achieved(self) -> frozenset[str]:
        out: frozenset[str] = frozenset()
        for props in self.achieved_props.values():
            out |= props
        return out


@dataclass(frozen=True)
class EnvironmentModel:
    states: Mapping[str, PartState]
    events: Mapping[str, ProcessEvent]
    transitions: Mapping[tuple[str, str], str]
    physical_props: Mapping[str, frozenset[str]]
    event_owner: Mapping[str, str]
    current_state: str

    def at(self, state: str) -> "EnvironmentModel":
        if state not in self.states:
            raise UnknownState(state)
        return dataclasses.replace(self, current_state=state)


@dataclass(frozen=True)
class RoutingGraph:
    """Union of several agents' active transitions, keyed by source state."""

    edges: Mapping[str, list[Edge]]
    props: Mapping[str, frozenset[str]]

    @classmethod
    def build(cls, models: Iterable[tuple[str, CapabilityModel, Iterable[str]]]) -> "RoutingGraph":
        edges: dict[str, list[Edge]] = {}
        props: dict[str, frozenset[str]] = {}
        for owner, model, inactive in models:
            inactive = frozenset(inactive)
            for (src, e), dst in model.transitions.items():
                if e in inactive:
                    continue
                edges.setdefault(src, []).append(
                    Edge(src, e, dst, owner, model.events[e].duration))
            for state, p in model.physical_props.items():
                props[state] = props.get(state, frozenset()) | p
        for out in edges.values():
            out.sort(key=lambda ed: (ed.event, ed.owner, ed.target))
        return cls(edges, props)

    def satisfying(self, required: Iterable[str]) -> frozenset[str]:
        required = frozenset(required)
        return frozenset(s for s, p in self.props.items() if required <= p)
