"""Deterministic tick loop.

Each tick runs the same phases in the same order:

1. inject repairs and breakdowns due now
2. sample performance and detect new disruptions
3. explore a substitute for each new disruption and merge its capabilities
4. collect completions
5. release parts, then let every idle part bid and reserve its route
6. record executions that start now
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .exploration import (
    ExplorationFailed,
    ExplorationParams,
    MergeRecord,
    explore,
    merge_capabilities,
    revoke_capabilities,
)
from .knowledge import KnowledgeSnapshot, PartView, take_snapshot
from .model import RoutingGraph
from .policy import BuiltinPolicy, Policy, ServicePolicy
from .product import (
    AllBidsInvalid,
    BiddingError,
    NoReachableAgents,
    PartStatus,
    ProductAgent,
    select_bid,
    solicit_bids,
)
from .resource import ResourceAgent, ResourceStatus, TaskExecution
from .scenario import DisruptionSchedule, Scenario, ScenarioError, compile_world, random_schedule, \
    validate_scenario


class ScenarioInvalid(ScenarioError):
    pass


@dataclass(frozen=True)
class LogRecord:
    tick: int
    kind: str
    agent: str | None = None
    part: str | None = None
    detail: Mapping[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"tick": self.tick, "kind": self.kind, "agent": self.agent,
                           "part": self.part, "detail": self.detail}, sort_keys=True)


@dataclass(frozen=True)
class StatusChange:
    agent: str
    kind: str  # "breakdown" | "repair"
    tick: int
    repair_at: int | None
    failed: tuple[TaskExecution, ...] = ()
    cancelled: tuple[TaskExecution, ...] = ()


@dataclass(frozen=True)
class ExplorationRecord:
    tick: int
    disrupted_agent: str
    exploration_agent: str | None
    events: tuple[str, ...]
    rounds: int
    error: str | None = None


@dataclass
class RunMetrics:
    horizon: int
    released: int = 0
    completed_parts: int = 0
    failed_parts: int = 0
    completion_ticks: dict[str, int] = field(default_factory=dict)
    throughput_series: list[int] = field(default_factory=list)
    utilization_series: dict[str, list[float]] = field(default_factory=dict)
    event_log: list[LogRecord] = field(default_factory=list)
    explorations: list[ExplorationRecord] = field(default_factory=list)
    merges: list[MergeRecord] = field(default_factory=list)

    @property
    def in_system(self) -> int:
        return self.released - self.completed_parts - self.failed_parts

    def events_text(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.event_log)


def inject(schedule: DisruptionSchedule, now: int,
           agents: Mapping[str, ResourceAgent]) -> list[StatusChange]:
    """Apply the repairs and breakdowns due at ``now`` (repairs first)."""
    changes = []
    for entry in sorted(schedule.entries, key=lambda e: e.agent):
        if entry.repair_tick == now:
            effect = agents[entry.agent].apply_status(ResourceStatus.operational(), now)
            if effect.changed:
                changes.append(StatusChange(entry.agent, "repair", now, None))
    for entry in sorted(schedule.entries, key=lambda e: e.agent):
        if entry.breakdown_tick == now:
            effect = agents[entry.agent].apply_status(
                ResourceStatus.broken(now, entry.mttr), now)
            if effect.changed:
                changes.append(StatusChange(entry.agent, "breakdown", now, entry.repair_tick,
                                            tuple(effect.failed), tuple(effect.cancelled)))
    return changes


def release_parts(scenario: Scenario, now: int) -> list[ProductAgent]:
    parts = []
    for release in scenario.releases:
        if release.tick != now:
            continue
        plan = scenario.plans[release.plan]
        for index in range(1, release.count + 1):
            parts.append(ProductAgent(f"{release.prefix}{now:05d}-{index:03d}", plan,
                                      release.start, now))
    return parts


def make_policy(scenario: Scenario, kind: str | None = None, url: str | None = None) -> Policy:
    kind = kind or scenario.policy.kind
    if kind == "service":
        target = url or scenario.policy.url
        if not target:
            raise ScenarioInvalid("service policy needs a URL")
        return ServicePolicy(target, scenario.policy.timeout)
    return BuiltinPolicy(scenario.policy.scoring)


class _Counting:
    """Policy wrapper that counts propose rounds."""

    def __init__(self, inner: Policy):
        self.inner = inner
        self.calls = 0

    def propose(self, prompt, feedback=None) -> str:
        self.calls += 1
        return self.inner.propose(prompt, feedback)


class Simulation:
    def __init__(self, scenario: Scenario, policy: Policy | None = None,
                 exploration: bool | None = None, horizon: int | None = None,
                 seed: int | None = None,
                 on_snapshot: Callable[[KnowledgeSnapshot], None] | None = None):
        problems = validate_scenario(scenario)
        if problems:
            raise ScenarioInvalid("; ".join(problems))
        self.scenario = scenario
        opts = scenario.options
        self.exploration = opts.exploration if exploration is None else exploration
        self.horizon = opts.horizon if horizon is None else horizon
        self.seed = opts.seed if seed is None else seed
        self.rng = random.Random(self.seed)
        self.schedule = scenario.schedule
        if opts.random_disruptions:
            self.schedule = random_schedule(scenario, opts.random_disruptions,
                                            self.rng.randrange(2**32), self.horizon)
        self.policy = policy or make_policy(scenario)
        world = compile_world(scenario)
        self.agents = world.agents
        self.directory = world.directory
        self.topology = world.topology
        self.params = ExplorationParams(scenario.constraints, opts.max_iterations,
                                        scenario.routes, world.catalog)
        self.parts: dict[str, ProductAgent] = {}
        self.reservations: dict[str, list[tuple[str, TaskExecution]]] = {}
        self.active_merges: dict[str, MergeRecord] = {}
        self.previous: KnowledgeSnapshot | None = None
        self.on_snapshot = on_snapshot
        self.metrics = RunMetrics(self.horizon)
        self.metrics.utilization_series = {aid: [] for aid in sorted(self.agents)}
        self._graph: RoutingGraph | None = None

    # -- helpers ---------------------------------------------------------------

    def log(self, tick: int, kind: str, agent: str | None = None, part: str | None = None,
            **detail: Any) -> None:
        self.metrics.event_log.append(LogRecord(tick, kind, agent, part, detail))

    def graph(self) -> RoutingGraph:
        if self._graph is None:
            self._graph = RoutingGraph.build(
                (a.id, a.model, a.deactivated) for a in
                (self.agents[k] for k in sorted(self.agents)) if a.operational)
        return self._graph

    def start_at(self, owner: str, arrival: int, duration: int) -> int:
        return self.agents[owner].earliest_start(arrival, duration)

    def invalidate(self) -> None:
        self._graph = None

    def drop_reservations(self, part_id: str, now: int) -> None:
        for aid, _ in self.reservations.pop(part_id, []):
            self.agents[aid].cancel_part(part_id, now)

    def fail_part(self, part: ProductAgent, now: int, reason: str, agent: str | None = None) -> None:
        if part.done:
            return
        self.drop_reservations(part.part_id, now)
        part.status = PartStatus.FAILED
        part.finished_at = now
        self.metrics.failed_parts += 1
        self.log(now, "part-failed", agent, part.part_id, reason=reason)

    def part_views(self) -> dict[str, PartView]:
        return {pid: PartView(pid, p.plan, p.history, p.current_state)
                for pid, p in sorted(self.parts.items()) if not p.done}

    # -- phases ----------------------------------------------------------------

    def phase_inject(self, t: int) -> None:
        for change in inject(self.schedule, t, self.agents):
            self.invalidate()
            if change.kind == "repair":
                self.log(t, "repair", change.agent)
                for disrupted, record in list(self.active_merges.items()):
                    if disrupted == change.agent or record.exploration_agent == change.agent:
                        revoke_capabilities(record, self.agents)
                        del self.active_merges[disrupted]
                        self.log(t, "revoke", record.exploration_agent,
                                 disrupted=disrupted, events=record.output.event_ids)
                continue
            self.log(t, "breakdown", change.agent, repair_at=change.repair_at)
            # an agent that was itself covering for another drops that role
            for disrupted, record in list(self.active_merges.items()):
                if record.exploration_agent == change.agent:
                    revoke_capabilities(record, self.agents)
                    del self.active_merges[disrupted]
                    self.log(t, "revoke", change.agent, disrupted=disrupted,
                             events=record.output.event_ids)
            for ex in change.failed:
                part = self.parts.get(ex.part_id)
                if part is not None:
                    self.fail_part(part, t, f"on board {change.agent} at breakdown", change.agent)
            for ex in change.cancelled:
                part = self.parts.get(ex.part_id)
                if part is not None and not part.done:
                    # the rest of its route is void; it bids again
                    self.drop_reservations(part.part_id, t)
                    self.log(t, "reroute", change.agent, part.part_id, event=ex.event)

    def phase_sample(self, t: int) -> list:
        from .knowledge import detect_disruptions
        snapshot = take_snapshot((self.agents[k] for k in sorted(self.agents)), t,
                                 self.scenario.options.window, None, self.topology)
        for aid, view in snapshot.agents.items():
            self.metrics.utilization_series[aid].append(view.performance.utilization)
        found = detect_disruptions(snapshot, self.previous)
        self.previous = snapshot
        if found or self.on_snapshot is not None:
            snapshot = KnowledgeSnapshot(t, snapshot.agents, self.part_views(), self.topology)
            if self.on_snapshot is not None:
                self.on_snapshot(snapshot)
        return [(d, snapshot) for d in found]

    def phase_explore(self, t: int, disruptions: list) -> None:
        for disruption, snapshot in disruptions:
            if not self.exploration:
                continue
            policy = _Counting(self.policy)
            try:
                output = explore(disruption, snapshot, policy, self.params,
                                 self.scenario.policy.scoring)
            except ExplorationFailed as exc:
                self.metrics.explorations.append(ExplorationRecord(
                    t, disruption.disrupted_agent, None, (), policy.calls, exc.reason))
                self.log(t, "explore", None, disrupted=disruption.disrupted_agent,
                         outcome="failed", reason=exc.reason)
                continue
            self.metrics.explorations.append(ExplorationRecord(
                t, disruption.disrupted_agent, output.exploration_agent,
                tuple(output.event_ids), policy.calls))
            self.log(t, "explore", output.exploration_agent, disrupted=disruption.disrupted_agent,
                     outcome="ok", events=len(output.event_ids), rationale=output.rationale)
            record = merge_capabilities(self.agents[output.exploration_agent], output,
                                        disruption, self.agents, self.params)
            for owner, state, member in record.insertions:
                self.directory.add(state, member)
            self.active_merges[disruption.disrupted_agent] = record
            self.metrics.merges.append(record)
            self.invalidate()
            self.log(t, "merge", output.exploration_agent, disrupted=disruption.disrupted_agent,
                     events=output.event_ids,
                     new_states=sorted(set(record.after.states) - set(record.before.states)))

    def phase_complete(self, t: int) -> None:
        for aid in sorted(self.agents):
            for c in self.agents[aid].tick_complete(t):
                part = self.parts.get(c.part_id)
                if part is None or part.done:
                    continue
                held = self.reservations.get(part.part_id, [])
                self.reservations[part.part_id] = [r for r in held if r[1] is not c.execution]
                part.advance(c.state, c.props, aid)
                self.log(t, "complete", aid, part.part_id, event=c.execution.event, state=c.state)
                if part.requirement() is None:
                    part.status = PartStatus.COMPLETED
                    part.finished_at = t
                    self.drop_reservations(part.part_id, t)
                    self.metrics.completed_parts += 1
                    self.metrics.completion_ticks[part.part_id] = t
                    self.log(t, "part-completed", aid, part.part_id)

    def phase_bid(self, t: int) -> None:
        for part in release_parts(self.scenario, t):
            self.parts[part.part_id] = part
            self.metrics.released += 1
            self.log(t, "release", None, part.part_id, state=part.current_state)
        limit = self.scenario.options.retry_limit
        for pid in sorted(self.parts):
            part = self.parts[pid]
            if part.done or self.reservations.get(pid):
                continue
            req = part.bid_request()
            if req is None:
                continue
            graph = self.graph()
            try:
                bids = solicit_bids(req, self.directory, part.owner,
                                    lambda aid, r: self.agents[aid].evaluate_bid(
                                        r, t, graph, self.start_at))
                for bid in bids:
                    self.log(t, "bid", bid.bidder, pid, valid=bid.valid,
                             cost=bid.completion_cost if bid.valid else None,
                             reason=bid.reason or None)
                winner = select_bid(bids)
            except (NoReachableAgents, AllBidsInvalid) as exc:
                part.attempts += 1
                self.log(t, "bid-failed", None, pid, attempt=part.attempts,
                         reason=type(exc).__name__)
                if part.attempts >= limit:
                    self.fail_part(part, t, f"no feasible route after {part.attempts} attempts")
                continue
            except BiddingError:  # pragma: no cover - defensive
                raise
            part.attempts = 0
            state, ready = part.current_state, t
            held = []
            for event, owner in winner.route:
                ex = self.agents[owner].start_event(pid, event, t, state, ready)
                held.append((owner, ex))
                state, ready = ex.target, ex.finishes_at
            self.reservations[pid] = held
            self.log(t, "award", winner.bidder, pid, cost=winner.completion_cost,
                     route=[f"{owner}/{event}" for event, owner in winner.route])

    def phase_start(self, t: int) -> None:
        for aid in sorted(self.agents):
            for ex in self.agents[aid].starting(t):
                self.log(t, "start", aid, ex.part_id, event=ex.event, until=ex.finishes_at)

    def step(self, t: int) -> None:
        self.phase_inject(t)
        disruptions = self.phase_sample(t)
        self.phase_explore(t, disruptions)
        self.phase_complete(t)
        self.phase_bid(t)
        self.phase_start(t)
        self.metrics.throughput_series.append(self.metrics.completed_parts)

    def run(self) -> RunMetrics:
        for t in range(self.horizon + 1):
            self.step(t)
        return self.metrics


def run(scenario: Scenario, policy: Policy | None = None, exploration: bool | None = None,
        horizon: int | None = None, seed: int | None = None) -> RunMetrics:
    return Simulation(scenario, policy, exploration, horizon, seed).run()


@dataclass(frozen=True)
class Summary:
    ticks: list[int]
    completed: list[int]
    utilization: dict[str, list[float]]


def summarize(metrics: RunMetrics, stride: int = 1) -> Summary:
    """Cumulative completions and windowed utilization every ``stride`` ticks."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n = len(metrics.throughput_series)
    ticks = list(range(0, n, stride))
    return Summary(ticks, [metrics.throughput_series[t] for t in ticks],
                   {aid: [s[t] for t in ticks] for aid, s in sorted(metrics.utilization_series.items())})
