"""Resource agents: machines and robots that bid on, schedule and execute events."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple

from .constraints import ConstraintSet
from .model import (
    CapabilityModel,
    NeighborTable,
    NotReachable,
    RoutingGraph,
    UnknownEvent,
    apply_transition,
    earliest_path,
    path_to_marked,
)
from .product import Bid, BidRequest


class AgentBroken(Exception):
    pass


class AgentKind(str, Enum):
    ROBOT = "robot"
    MACHINE = "machine"


class Mode(str, Enum):
    OPERATIONAL = "operational"
    BROKEN = "broken"


@dataclass(frozen=True)
class ResourceStatus:
    mode: Mode = Mode.OPERATIONAL
    broken_since: int | None = None
    repair_at: int | None = None

    def __post_init__(self):
        if self.mode is Mode.BROKEN and (self.broken_since is None or self.repair_at is None):
            raise ValueError("broken status needs broken_since and repair_at")

    @classmethod
    def broken(cls, since: int, mttr: int) -> "ResourceStatus":
        if mttr < 1:
            raise ValueError("mttr must be >= 1")
        return cls(Mode.BROKEN, since, since + mttr)

    @classmethod
    def operational(cls) -> "ResourceStatus":
        return cls()


@dataclass(frozen=True)
class TaskExecution:
    part_id: str
    event: str
    started_at: int
    finishes_at: int
    source: str = ""
    target: str = ""
    props: frozenset[str] = frozenset()


class Completion(NamedTuple):
    part_id: str
    state: str
    props: frozenset[str]
    execution: TaskExecution


@dataclass
class StatusEffect:
    failed: list[TaskExecution] = field(default_factory=list)
    cancelled: list[TaskExecution] = field(default_factory=list)
    changed: bool = False


class ResourceAgent:
    """One machine or robot.

    Work is kept as a list of reservations with fixed start and finish
    ticks, ordered by start. A new reservation takes the earliest idle slot
    long enough for it that opens no earlier than the part's arrival.
    """

    def __init__(self, agent_id: str, kind: AgentKind | str, model: CapabilityModel,
                 neighbors: NeighborTable | None = None,
                 constraints: ConstraintSet | None = None):
        self.id = agent_id
        self.kind = AgentKind(kind)
        self.pristine = model
        self.model = model
        self.neighbors = neighbors if neighbors is not None else NeighborTable()
        self.constraints = constraints or ConstraintSet()
        self.status = ResourceStatus.operational()
        self.deactivated: frozenset[str] = frozenset()
        self.task_model: CapabilityModel | None = None
        self.schedule: list[TaskExecution] = []
        self.completed: list[TaskExecution] = []
        self.aborted: list[tuple[int, int]] = []

    def __repr__(self):
        return f"ResourceAgent({self.id!r}, {self.kind.value}, {self.status.mode.value})"

    @property
    def operational(self) -> bool:
        return self.status.mode is Mode.OPERATIONAL

    @property
    def active_events(self) -> frozenset[str]:
        return frozenset(self.model.events) - self.deactivated

    def free_at(self, now: int) -> int:
        if self.schedule:
            return max(now, self.schedule[-1].finishes_at)
        return now

    def backlog(self, now: int) -> int:
        return self.free_at(now) - now

    def earliest_start(self, ready: int, duration: int) -> int:
        """First tick >= ``ready`` that begins an idle slot of ``duration``."""
        begin = ready
        for ex in self.schedule:
            if ex.finishes_at <= begin:
                continue
            if ex.started_at >= begin + duration:
                break
            begin = ex.finishes_at
        return begin

    def current_task(self, now: int) -> TaskExecution | None:
        for ex in self.schedule:
            if ex.started_at <= now < ex.finishes_at:
                return ex
        return None

    # -- bidding -------------------------------------------------------------

    def evaluate_bid(self, req: BidRequest, now: int = 0, graph: RoutingGraph | None = None,
                     start_at: Callable[[str, int, int], int] | None = None) -> Bid:
        """Bid on ``req``.

        Without ``graph`` the agent plans inside its own model only. With a
        routing graph the request is forwarded through neighbors: the route
        must start with one of this agent's events but may continue on other
        agents, and its cost is the projected finish tick minus ``now``.
        """
        if not self.operational:
            return Bid.invalid(self.id, "AgentBroken")
        marked = self.model.satisfying(req.required_props)
        if req.from_state in self.model.states:
            self.task_model = self.model.evolve(initial_state=req.from_state, marked_states=marked)
        if graph is None:
            return self._local_bid(req, now)
        targets = graph.satisfying(req.required_props)
        if not targets:
            return Bid.invalid(self.id, "no state provides the required properties")
        try:
            finish, route = earliest_path(graph.edges, req.from_state, targets, now, start_at,
                                          first_owner=self.id)
        except NotReachable:
            return Bid.invalid(self.id, "NotReachable")
        if not route:
            return Bid.invalid(self.id, "already satisfied")
        return Bid(self.id, tuple(e.event for e in route), max(1, finish - now), True,
                   route=tuple((e.event, e.owner) for e in route))

    def _local_bid(self, req: BidRequest, now: int) -> Bid:
        if self.task_model is None or req.from_state not in self.model.states:
            return Bid.invalid(self.id, f"unknown state {req.from_state}")
        if not self.task_model.marked_states:
            return Bid.invalid(self.id, "no state provides the required properties")
        try:
            path = path_to_marked(self.task_model, req.from_state)
        except NotReachable:
            return Bid.invalid(self.id, "NotReachable")
        if not path:
            return Bid.invalid(self.id, "already satisfied")
        if any(e in self.deactivated for e in path):
            return Bid.invalid(self.id, "path uses deactivated events")
        cost = sum(self.model.events[e].duration for e in path) + self.backlog(now)
        return Bid(self.id, tuple(path), cost, True, route=tuple((e, self.id) for e in path))

    # -- execution -----------------------------------------------------------

    def start_event(self, part_id: str, event: str, now: int, state: str | None = None,
                    ready_at: int | None = None) -> TaskExecution:
        """Queue ``event`` for ``part_id``; it begins once the agent and part are free."""
        if not self.operational:
            raise AgentBroken(self.id)
        if event not in self.model.events or event in self.deactivated:
            raise UnknownEvent(event)
        source = state if state is not None else self.model.initial_state
        target = apply_transition(self.model, source, event)
        duration = self.model.events[event].duration
        begin = self.earliest_start(max(now, now if ready_at is None else ready_at), duration)
        ex = TaskExecution(part_id, event, begin, begin + duration,
                           source, target, self.model.props_of(target))
        bisect.insort(self.schedule, ex, key=lambda item: item.started_at)
        return ex

    def starting(self, now: int) -> list[TaskExecution]:
        return [ex for ex in self.schedule if ex.started_at == now]

    def tick_complete(self, now: int) -> list[Completion]:
        if not self.operational:
            return []
        done = [ex for ex in self.schedule if ex.finishes_at == now]
        if done:
            self.schedule = [ex for ex in self.schedule if ex.finishes_at != now]
            self.completed.extend(done)
        return [Completion(ex.part_id, ex.target, ex.props, ex) for ex in done]

    def cancel_part(self, part_id: str, now: int) -> list[TaskExecution]:
        """Drop not-yet-started reservations for ``part_id``."""
        dropped = [ex for ex in self.schedule if ex.part_id == part_id and ex.started_at >= now]
        if dropped:
            self.schedule = [ex for ex in self.schedule if ex not in dropped]
        return dropped

    def apply_status(self, status: ResourceStatus, now: int | None = None) -> StatusEffect:
        """Switch mode. Breaking fails the part on board and cancels queued
        work; repair restores the capability model loaded with the scenario."""
        effect = StatusEffect()
        if status.mode is self.status.mode:
            self.status = status
            return effect
        effect.changed = True
        self.status = status
        if status.mode is Mode.BROKEN:
            now = status.broken_since if now is None else now
            for ex in self.schedule:
                if ex.started_at < now <= ex.finishes_at:
                    effect.failed.append(ex)
                    self.aborted.append((ex.started_at, now))
                else:
                    effect.cancelled.append(ex)
            self.schedule = []
        else:
            self.model = self.pristine
            self.deactivated = frozenset()
            self.task_model = None
        return effect

    # -- accounting ----------------------------------------------------------

    def busy_ticks(self, start: int, end: int) -> int:
        """Ticks in [start, end) spent executing."""
        total = 0
        for ex in reversed(self.completed):
            if ex.finishes_at <= start:
                break
            total += max(0, min(ex.finishes_at, end) - max(ex.started_at, start))
        for s, f in self.aborted:
            total += max(0, min(f, end) - max(s, start))
        for ex in self.schedule:
            total += max(0, min(ex.finishes_at, end) - max(ex.started_at, start))
        return total

    def completions_between(self, start: int, end: int) -> int:
        count = 0
        for ex in reversed(self.completed):
            if ex.finishes_at < start:
                break
            if ex.finishes_at < end:
                count += 1
        return count
