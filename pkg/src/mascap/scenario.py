"""Scenario files: facility layout, agents, plans, constraints, breakdown
schedule and run options.

Two ways to declare resources are supported and may be mixed:

* ``facility`` -- buffers, stations and robots on a line; machine and robot
  capability models are generated from it.
* ``agents`` -- explicit finite-state models, for small hand-written cases.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import networkx as nx

from .constraints import ConstraintSet
from .model import (
    CapabilityModel,
    EventKind,
    NeighborTable,
    PartState,
    PlanStep,
    ProcessEvent,
    ProcessPlan,
    validate_model,
)
from .resource import AgentKind, ResourceAgent
from .scoring import ScoringConfig

SCHEMA_VERSION = 1
BUNDLED = ("waferfab20", "example3robot")


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    pass


@dataclass(frozen=True)
class ScheduleEntry:
    agent: str
    breakdown_tick: int
    mttr: int
    events: tuple[str, ...] = ()  # empty: the whole agent goes down

    @property
    def repair_tick(self) -> int:
        return self.breakdown_tick + self.mttr


@dataclass(frozen=True)
class DisruptionSchedule:
    entries: tuple[ScheduleEntry, ...] = ()

    def overlaps(self) -> list[tuple[ScheduleEntry, ScheduleEntry]]:
        ordered = sorted(self.entries, key=lambda e: (e.breakdown_tick, e.agent))
        return [(a, b) for a, b in zip(ordered, ordered[1:]) if b.breakdown_tick < a.repair_tick]


@dataclass(frozen=True)
class Release:
    tick: int
    count: int
    plan: str
    start: str
    prefix: str = "part"


@dataclass(frozen=True)
class BufferSpec:
    id: str
    x: float
    role: str = "buffer"  # buffer | entry | exit
    description: str = ""
    props: tuple[str, ...] = ()  # properties a part gains by arriving here


@dataclass(frozen=True)
class StationSpec:
    id: str
    cell: int
    process: str
    x: float


@dataclass(frozen=True)
class RobotSpec:
    id: str
    serves: tuple[str, ...]
    cell: int | None = None
    role: str = "cell"


@dataclass(frozen=True)
class Facility:
    buffers: tuple[BufferSpec, ...] = ()
    stations: tuple[StationSpec, ...] = ()
    robots: tuple[RobotSpec, ...] = ()
    lot_mass: float = 25.0


@dataclass(frozen=True)
class AgentSpec:
    id: str
    kind: AgentKind
    states: Mapping[str, str]
    events: tuple[ProcessEvent, ...]
    transitions: tuple[tuple[str, str, str], ...]
    props: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    initial: str | None = None
    marked: tuple[str, ...] = ()


@dataclass
class PolicyConfig:
    kind: str = "builtin"
    scoring: ScoringConfig = field(default_factory=ScoringConfig.default)
    url: str | None = None
    timeout: float = 30.0


@dataclass
class Options:
    exploration: bool = True
    horizon: int = 6000
    transport_duration: int = 10
    retry_limit: int = 3
    window: int = 200
    seed: int = 0
    max_iterations: int = 3
    random_disruptions: int = 0


@dataclass
class Scenario:
    name: str
    process_times: dict[str, int] = field(default_factory=dict)
    plans: dict[str, ProcessPlan] = field(default_factory=dict)
    releases: list[Release] = field(default_factory=list)
    facility: Facility | None = None
    agents: list[AgentSpec] = field(default_factory=list)
    links: list[tuple[str, str]] = field(default_factory=list)
    parameters: list[str] = field(default_factory=list)
    constraints: dict[str, ConstraintSet] = field(default_factory=dict)
    schedule: DisruptionSchedule = field(default_factory=DisruptionSchedule)
    routes: dict[str, dict[str, tuple[str, str]]] = field(default_factory=dict)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    options: Options = field(default_factory=Options)
    description: str = ""
    states: dict[str, str] = field(default_factory=dict)  # states no agent owns at load time
    buffers: list[str] = field(default_factory=list)

    @property
    def part_count(self) -> int:
        return sum(r.count for r in self.releases)

    def buffer_ids(self) -> list[str]:
        ids = list(self.buffers)
        if self.facility is not None:
            ids += [b.id for b in self.facility.buffers]
        return ids


# -- serialization -------------------------------------------------------------

def _event_from(d: Mapping) -> ProcessEvent:
    return ProcessEvent(d["id"], EventKind(d["kind"]), int(d["duration"]),
                        {k: float(v) for k, v in d.get("params", {}).items()})


def _event_to(e: ProcessEvent) -> dict:
    return {"id": e.id, "kind": e.kind.value, "duration": e.duration,
            "params": {k: v for k, v in sorted(e.params.items())}}


def _plan_from(steps: list) -> ProcessPlan:
    out = []
    for step in steps:
        if isinstance(step, Mapping):
            out.append(PlanStep(frozenset(step.get("physical", ())),
                                frozenset(step.get("non_physical", ()))))
        else:
            out.append(PlanStep(frozenset(step)))
    return ProcessPlan(tuple(out))


def _plan_to(plan: ProcessPlan) -> list:
    steps = []
    for step in plan.steps:
        d: dict[str, Any] = {"physical": sorted(step.physical)}
        if step.non_physical:
            d["non_physical"] = sorted(step.non_physical)
        steps.append(d)
    return steps


def scenario_from_dict(doc: Mapping) -> Scenario:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    try:
        facility = None
        if "facility" in doc:
            f = doc["facility"]
            facility = Facility(
                tuple(BufferSpec(b["id"], float(b["x"]), b.get("role", "buffer"),
                                 b.get("description", ""), tuple(b.get("props", ())))
                      for b in f.get("buffers", [])),
                tuple(StationSpec(s["id"], int(s["cell"]), s["process"], float(s["x"]))
                      for s in f.get("stations", [])),
                tuple(RobotSpec(r["id"], tuple(r["serves"]), r.get("cell"), r.get("role", "cell"))
                      for r in f.get("robots", [])),
                float(f.get("lot_mass", 25.0)),
            )
        agents = [
            AgentSpec(
                a["id"], AgentKind(a["kind"]), dict(a["states"]),
                tuple(_event_from(e) for e in a["events"]),
                tuple(tuple(t) for t in a["transitions"]),
                {k: tuple(v) for k, v in a.get("props", {}).items()},
                a.get("initial"), tuple(a.get("marked", ())),
            )
            for a in doc.get("agents", [])
        ]
        policy_doc = doc.get("policy", {})
        policy = PolicyConfig(
            policy_doc.get("kind", "builtin"),
            ScoringConfig.from_dict(policy_doc["scoring"]) if "scoring" in policy_doc
            else ScoringConfig.default(),
            policy_doc.get("url"),
            float(policy_doc.get("timeout", 30.0)),
        )
        known = Options.__dataclass_fields__
        opts = doc.get("options", {})
        unknown = sorted(set(opts) - set(known))
        if unknown:
            raise ParseError(f"unknown options: {', '.join(unknown)}")
        return Scenario(
            name=doc["name"],
            description=doc.get("description", ""),
            process_times={k: int(v) for k, v in doc.get("process_times", {}).items()},
            plans={k: _plan_from(v) for k, v in doc.get("plans", {}).items()},
            releases=[Release(int(r["tick"]), int(r["count"]), r["plan"], r["start"],
                              r.get("prefix", "part")) for r in doc.get("releases", [])],
            facility=facility,
            agents=agents,
            links=[(a, b) for a, b in doc.get("links", [])],
            parameters=list(doc.get("parameters", [])),
            constraints={k: ConstraintSet.from_dict(v) for k, v in doc.get("constraints", {}).items()},
            schedule=DisruptionSchedule(tuple(
                ScheduleEntry(e["agent"], int(e["breakdown_tick"]), int(e["mttr"]),
                              tuple(e.get("events", ())))
                for e in doc.get("schedule", []))),
            routes={agent: {ev: (pair[0], pair[1]) for ev, pair in table.items()}
                    for agent, table in doc.get("routes", {}).items()},
            policy=policy,
            options=Options(**opts),
            states=dict(doc.get("states", {})),
            buffers=list(doc.get("buffers", [])),
        )
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed scenario: {exc!r}") from exc


def scenario_to_dict(s: Scenario) -> dict:
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "name": s.name}
    if s.description:
        doc["description"] = s.description
    doc["process_times"] = dict(s.process_times)
    doc["parameters"] = list(s.parameters)
    doc["plans"] = {k: _plan_to(v) for k, v in s.plans.items()}
    doc["releases"] = [{"tick": r.tick, "count": r.count, "plan": r.plan, "start": r.start,
                        "prefix": r.prefix} for r in s.releases]
    if s.facility is not None:
        f = s.facility
        doc["facility"] = {
            "lot_mass": f.lot_mass,
            "buffers": [{"id": b.id, "x": b.x, "role": b.role, "description": b.description,
                         **({"props": list(b.props)} if b.props else {})}
                        for b in f.buffers],
            "stations": [{"id": st.id, "cell": st.cell, "process": st.process, "x": st.x}
                         for st in f.stations],
            "robots": [{"id": r.id, "cell": r.cell, "role": r.role, "serves": list(r.serves)}
                       for r in f.robots],
        }
    if s.agents:
        doc["agents"] = [{
            "id": a.id, "kind": a.kind.value, "states": dict(a.states),
            "events": [_event_to(e) for e in a.events],
            "transitions": [list(t) for t in a.transitions],
            "props": {k: list(v) for k, v in a.props.items()},
            "initial": a.initial, "marked": list(a.marked),
        } for a in s.agents]
    if s.buffers:
        doc["buffers"] = list(s.buffers)
    if s.states:
        doc["states"] = dict(s.states)
    if s.links:
        doc["links"] = [list(link) for link in s.links]
    doc["constraints"] = {k: v.to_dict() for k, v in s.constraints.items()}
    doc["schedule"] = [
        {"agent": e.agent, "breakdown_tick": e.breakdown_tick, "mttr": e.mttr,
         **({"events": list(e.events)} if e.events else {})}
        for e in s.schedule.entries
    ]
    if s.routes:
        doc["routes"] = {a: {ev: list(p) for ev, p in t.items()} for a, t in s.routes.items()}
    doc["policy"] = {"kind": s.policy.kind, "scoring": s.policy.scoring.to_dict(),
                     "url": s.policy.url, "timeout": s.policy.timeout}
    doc["options"] = dict(vars(s.options))
    return doc


def dumps(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2, ensure_ascii=False) + "\n"


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps(s), encoding="utf-8")


def loads(text: str, origin: str = "<string>") -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{origin}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{origin}: top level must be an object")
    scenario = scenario_from_dict(doc)
    problems = validate_scenario(scenario)
    if problems:
        raise ValidationError(f"{origin}: " + "; ".join(problems))
    return scenario


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("mascap") / "scenarios" / f"{name}.json"))


def load_scenario(path_or_name: str | Path) -> Scenario:
    path = Path(path_or_name)
    if not path.exists() and str(path_or_name) in BUNDLED:
        path = bundled_path(str(path_or_name))
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path_or_name}")
    return loads(path.read_text(encoding="utf-8"), str(path))


# -- compilation ---------------------------------------------------------------

@dataclass
class World:
    agents: dict[str, ResourceAgent]
    directory: NeighborTable
    topology: nx.Graph
    catalog: dict[str, PartState]


def buffer_state(buffer_id: str) -> str:
    return f"buf:{buffer_id}"


def station_input(station_id: str) -> str:
    return f"in:{station_id}"


def station_output(station_id: str) -> str:
    return f"out:{station_id}"


def _facility_models(s: Scenario) -> dict[str, tuple[AgentKind, CapabilityModel]]:
    f = s.facility
    assert f is not None
    buffers = {b.id: b for b in f.buffers}
    stations = {st.id: st for st in f.stations}
    models: dict[str, tuple[AgentKind, CapabilityModel]] = {}

    for st in f.stations:
        src, dst = station_input(st.id), station_output(st.id)
        ev = ProcessEvent(f"proc:{st.id}", EventKind.PROCESS, s.process_times[st.process])
        models[st.id] = (AgentKind.MACHINE, CapabilityModel(
            states={src: PartState(src, f"waiting at {st.id}"),
                    dst: PartState(dst, f"{st.process} done at {st.id}")},
            events={ev.id: ev},
            transitions={(src, ev.id): dst},
            physical_props={dst: frozenset({st.process})},
            initial_state=src,
            marked_states=frozenset({dst}),
        ))

    for robot in f.robots:
        pickups: list[tuple[str, str, float]] = []  # (location, state, x)
        drops: list[tuple[str, str, float]] = []
        states: dict[str, PartState] = {}
        for loc in robot.serves:
            if loc in buffers:
                b = buffers[loc]
                state = buffer_state(loc)
                states[state] = PartState(state, b.description or f"at buffer {loc}")
                if b.role != "exit":
                    pickups.append((loc, state, b.x))
                if b.role != "entry":
                    drops.append((loc, state, b.x))
            elif loc in stations:
                st = stations[loc]
                i, o = station_input(loc), station_output(loc)
                states[i] = PartState(i, f"waiting at {loc}")
                states[o] = PartState(o, f"{st.process} done at {loc}")
                pickups.append((loc, o, st.x))
                drops.append((loc, i, st.x))
            else:
                raise ValidationError(f"robot {robot.id} serves unknown location {loc}")
        events: dict[str, ProcessEvent] = {}
        transitions: dict[tuple[str, str], str] = {}
        for src_loc, src, x0 in pickups:
            for dst_loc, dst, x1 in drops:
                if src_loc == dst_loc:
                    continue
                ev = ProcessEvent(f"{robot.id}:{src_loc}>{dst_loc}", EventKind.TRANSPORT,
                                  s.options.transport_duration,
                                  {"x_from": x0, "x_to": x1, "payload": f.lot_mass})
                events[ev.id] = ev
                transitions[(src, ev.id)] = dst
        props = {buffer_state(b.id): frozenset(b.props) for b in f.buffers
                 if b.props and buffer_state(b.id) in states}
        for st in f.stations:
            if station_output(st.id) in states:
                props[station_output(st.id)] = frozenset({st.process})
        models[robot.id] = (AgentKind.ROBOT, CapabilityModel(
            states=states, events=events, transitions=transitions, physical_props=props,
            initial_state=pickups[0][1] if pickups else next(iter(states)),
            marked_states=frozenset(d for _, d, _ in drops),
        ))
    return models


def _explicit_models(s: Scenario) -> dict[str, tuple[AgentKind, CapabilityModel]]:
    models = {}
    for a in s.agents:
        states = {sid: PartState(sid, desc) for sid, desc in a.states.items()}
        models[a.id] = (a.kind, CapabilityModel(
            states=states,
            events={e.id: e for e in a.events},
            transitions={(src, ev): dst for src, ev, dst in a.transitions},
            physical_props={k: frozenset(v) for k, v in a.props.items()},
            initial_state=a.initial or next(iter(states)),
            marked_states=frozenset(a.marked),
        ))
    return models


def build_models(s: Scenario) -> dict[str, tuple[AgentKind, CapabilityModel]]:
    models = _facility_models(s) if s.facility is not None else {}
    for aid, entry in _explicit_models(s).items():
        if aid in models:
            raise ValidationError(f"agent {aid} declared twice")
        models[aid] = entry
    # a state is shared when two or more agents know it
    holders: dict[str, set[str]] = {}
    for aid, (_, m) in models.items():
        for state in m.states:
            holders.setdefault(state, set()).add(aid)
    for aid, (kind, m) in list(models.items()):
        shared = frozenset(st for st in m.states if len(holders[st]) > 1)
        models[aid] = (kind, m.evolve(shared_states=shared))
    return models


def build_topology(s: Scenario, models: Mapping[str, tuple[AgentKind, CapabilityModel]]) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(sorted(models))
    if s.facility is not None:
        for b in s.facility.buffers:
            g.add_node(b.id)
        for r in s.facility.robots:
            for loc in r.serves:
                g.add_edge(r.id, loc)
    for a, b in s.links:
        g.add_edge(a, b)
    return g


def compile_world(s: Scenario) -> World:
    models = build_models(s)
    holders: dict[str, set[str]] = {}
    catalog: dict[str, PartState] = {}
    for aid, (_, m) in models.items():
        for sid, state in m.states.items():
            holders.setdefault(sid, set()).add(aid)
            catalog.setdefault(sid, state)
    for sid, desc in s.states.items():
        catalog.setdefault(sid, PartState(sid, desc))
    agents = {}
    for aid, (kind, m) in sorted(models.items()):
        table = NeighborTable({st: set(holders[st]) for st in m.shared_states})
        agents[aid] = ResourceAgent(aid, kind, m, table, s.constraints.get(aid))
    directory = NeighborTable({st: set(h) for st, h in holders.items()})
    return World(agents, directory, build_topology(s, models), catalog)


def random_schedule(s: Scenario, count: int, seed: int, horizon: int | None = None) -> DisruptionSchedule:
    """Non-overlapping robot breakdowns drawn from a seeded generator."""
    rng = random.Random(seed)
    horizon = horizon or s.options.horizon
    robots = sorted(aid for aid, (kind, _) in build_models(s).items() if kind is AgentKind.ROBOT)
    if not robots or count <= 0:
        return DisruptionSchedule()
    slot = max(2, horizon // (count + 1))
    entries = []
    for i in range(count):
        start = (i + 1) * slot - slot // 2 + rng.randrange(max(1, slot // 4))
        mttr = rng.randint(max(1, slot // 4), max(1, slot // 2))
        entries.append(ScheduleEntry(rng.choice(robots), start, mttr))
    return DisruptionSchedule(tuple(entries))


def validate_scenario(s: Scenario) -> list[str]:
    problems = []
    try:
        models = build_models(s)
    except (ValidationError, KeyError) as exc:
        return [f"facility: {exc}"]
    if s.facility is not None:
        seen = set()
        for spec_id in [b.id for b in s.facility.buffers] + [st.id for st in s.facility.stations] + \
                [r.id for r in s.facility.robots]:
            if spec_id in seen:
                problems.append(f"facility: duplicate id {spec_id}")
            seen.add(spec_id)
        for st in s.facility.stations:
            if st.process not in s.process_times:
                problems.append(f"station {st.id}: process {st.process} has no process time")
    for aid, (_, m) in sorted(models.items()):
        for v in validate_model(m):
            problems.append(f"agent {aid}: {v}")
    vocab = set(s.parameters)
    if vocab:
        for aid, (_, m) in sorted(models.items()):
            for ev in m.events.values():
                extra = sorted(set(ev.params) - vocab)
                if extra:
                    problems.append(f"agent {aid}: event {ev.id} uses undeclared parameters {extra}")
                    break
    produced: set[str] = set()
    all_states: set[str] = set()
    for _, m in models.values():
        all_states |= set(m.states)
        for p in m.physical_props.values():
            produced |= p
    for name, plan in s.plans.items():
        for i, step in enumerate(plan.steps):
            missing = sorted(step.properties - produced)
            if missing:
                problems.append(f"plan {name}: step {i + 1} needs {missing}, produced nowhere")
    for r in s.releases:
        if r.plan not in s.plans:
            problems.append(f"release at tick {r.tick}: unknown plan {r.plan}")
        if r.start not in all_states:
            problems.append(f"release at tick {r.tick}: unknown start state {r.start}")
        if r.count < 0 or r.tick < 0:
            problems.append(f"release at tick {r.tick}: negative tick or count")
    for e in s.schedule.entries:
        if e.agent not in models:
            problems.append(f"schedule: unknown agent {e.agent}")
        if e.breakdown_tick < 0 or e.mttr < 1:
            problems.append(f"schedule: {e.agent} needs breakdown_tick >= 0 and mttr >= 1")
    for a, b in s.schedule.overlaps():
        problems.append(
            f"schedule: {a.agent} [{a.breakdown_tick}, {a.repair_tick}) overlaps "
            f"{b.agent} at {b.breakdown_tick} (simultaneous breakdowns are not supported)")
    for aid in s.constraints:
        if aid not in models:
            problems.append(f"constraints: unknown agent {aid}")
    for aid, table in s.routes.items():
        if aid not in models:
            problems.append(f"routes: unknown agent {aid}")
        for ev, (src, dst) in table.items():
            for st in (src, dst):
                if st not in all_states and st not in s.states:
                    problems.append(f"routes: {aid}/{ev} references unknown state {st}")
    topo = build_topology(s, models)
    if topo.number_of_nodes() > 1 and not nx.is_connected(topo):
        parts = sorted(sorted(c)[0] for c in nx.connected_components(topo))
        problems.append(f"topology: not connected (components led by {', '.join(parts)})")
    o = s.options
    if o.horizon < 0 or o.transport_duration < 1 or o.retry_limit < 1 or o.window < 1 \
            or o.max_iterations < 1:
        problems.append("options: horizon >= 0, transport_duration/retry_limit/window/max_iterations >= 1")
    if s.policy.kind not in ("builtin", "service"):
        problems.append(f"policy: unknown kind {s.policy.kind}")
    return problems
