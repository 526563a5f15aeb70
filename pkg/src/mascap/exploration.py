"""Capability exploration: choose a substitute for a broken agent, validate
the proposal against operating and safety bounds, and merge the explored
events into the substitute's capability model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .constraints import ConstraintSet, check_constraints
from .knowledge import Disruption, KnowledgeSnapshot
from .model import CapabilityModel, NotReachable, PartState, ProcessEvent, path_to_marked
from .policy import Policy, PolicyUnavailable
from .protocol import (
    INSTRUCTIONS,
    ExplorationOutput,
    OutputSyntaxError,
    PolicyInput,
    event_summary,
    parse_output,
)
from .resource import ResourceAgent
from .scoring import ScoringConfig

SYNTAX_ERROR = "Syntax error"
INVALID_AGENT = "Invalid agent"
CONSTRAINTS_NOT_MET = "Constraints not met"


class ExplorationFailed(Exception):
    def __init__(self, reason: str, rounds: int = 0):
        super().__init__(reason)
        self.reason = reason
        self.rounds = rounds


@dataclass(frozen=True)
class ExplorationParams:
    constraints: Mapping[str, ConstraintSet] = field(default_factory=dict)
    max_iterations: int = 3
    # agent -> event -> (source, target) for explored events that the agent
    # performs along its own route rather than the disrupted agent's
    routes: Mapping[str, Mapping[str, tuple[str, str]]] = field(default_factory=dict)
    catalog: Mapping[str, PartState] = field(default_factory=dict)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def constraints_for(self, agent: str) -> ConstraintSet:
        return self.constraints.get(agent, ConstraintSet())


@dataclass(frozen=True)
class Validation:
    valid: bool
    feedback: str | None
    output: ExplorationOutput | None
    rounds: int


def validate(output: ExplorationOutput | str | None, params: ExplorationParams,
             snapshot: KnowledgeSnapshot, n: int | None = None,
             propose: Callable[[str], str] | None = None,
             disrupted: str | None = None) -> Validation:
    """Check a proposal; on failure ask ``propose`` for a fresh one, at most
    ``n`` rounds in total including the one passed in."""
    n = params.max_iterations if n is None else n
    if n < 1:
        raise ValueError("n must be >= 1")
    i, valid, feedback = 0, False, None
    current = output
    parsed: ExplorationOutput | None = None
    while i < n and not valid:
        i += 1
        if i > 1:
            if propose is None:
                break
            try:
                current = propose(feedback)
            except PolicyUnavailable as exc:
                current = None
                feedback = f"{SYNTAX_ERROR}: policy unavailable ({exc})"
                continue
        try:
            if current is None:
                raise OutputSyntaxError("no response")
            parsed = current if isinstance(current, ExplorationOutput) else parse_output(current)
        except OutputSyntaxError as exc:
            parsed = None
            feedback = f"{SYNTAX_ERROR}: {exc}"
            continue

        agent = parsed.exploration_agent
        view = snapshot.agents.get(agent)
        if view is None:
            feedback = f"{INVALID_AGENT}: {agent} is not in the model"
            continue
        if not view.operational or agent == disrupted:
            feedback = f"{INVALID_AGENT}: {agent} is not operational"
            continue

        bounds = params.constraints_for(agent)
        violations = [v for cap in parsed.explored_capabilities for v in check_constraints(bounds, cap)]
        if violations:
            names = sorted({f"{v.param} ({v.kind.value})" for v in violations})
            feedback = f"{CONSTRAINTS_NOT_MET}: {', '.join(names)}"
        else:
            valid = True
    return Validation(valid, feedback, parsed if valid else None, i)


def merged_model(base: CapabilityModel, capabilities: tuple[ProcessEvent, ...] | list[ProcessEvent],
                 source: CapabilityModel, routes: Mapping[str, tuple[str, str]] | None = None,
                 catalog: Mapping[str, PartState] | None = None) -> CapabilityModel:
    """``base`` extended with explored events (E' = E_original | E_new).

    Transitions come from ``routes`` when given for an event, otherwise from
    the disrupted agent's model ``source``.
    """
    routes = routes or {}
    catalog = catalog or {}
    states = dict(base.states)
    events = dict(base.events)
    transitions = dict(base.transitions)
    props = dict(base.physical_props)
    marked = set(base.marked_states)

    def ensure(state: str) -> None:
        if state in states:
            return
        states[state] = source.states.get(state) or catalog.get(state) or PartState(state)
        if state in source.physical_props:
            props[state] = source.physical_props[state]

    for cap in capabilities:
        if cap.id in base.events:
            continue
        events[cap.id] = cap
        if cap.id in routes:
            pairs = [routes[cap.id]]
        else:
            pairs = sorted((src, dst) for (src, e), dst in source.transitions.items() if e == cap.id)
        for src, dst in pairs:
            ensure(src)
            ensure(dst)
            transitions[(src, cap.id)] = dst
            if dst in source.marked_states:
                marked.add(dst)
    return base.evolve(states=states, events=events, transitions=transitions,
                       physical_props=props, marked_states=frozenset(marked))


def unsound_events(model: CapabilityModel, events: list[str]) -> list[str]:
    """Explored events that do not lead into the marked set."""
    bad = []
    for e in events:
        targets = [dst for (src, ev), dst in model.transitions.items() if ev == e]
        if not targets:
            bad.append(e)
            continue
        for dst in targets:
            try:
                path_to_marked(model, dst)
            except NotReachable:
                bad.append(e)
                break
    return bad


def candidate_factors(snapshot: KnowledgeSnapshot, disruption: Disruption,
                      params: ExplorationParams) -> list[tuple[str, dict[str, float]]]:
    """Operational agents of the disrupted agent's kind that can legally
    perform every disrupted event, with their scoring factors."""
    target = snapshot.agents[disruption.disrupted_agent]
    disrupted_events = [target.pristine.events[e] for e in sorted(disruption.affected_events)]
    rows = []
    for aid, view in sorted(snapshot.agents.items()):
        if aid == disruption.disrupted_agent or not view.operational or view.kind != target.kind:
            continue
        bounds = params.constraints_for(aid)
        if any(check_constraints(bounds, ev) for ev in disrupted_events):
            continue
        rows.append((aid, {
            "availability": float(view.performance.availability),
            "proximity": snapshot.proximity(aid, disruption.disrupted_agent),
            "utilization": view.performance.utilization,
        }))
    finite = [f["proximity"] for _, f in rows if math.isfinite(f["proximity"])]
    cap = (max(finite) if finite else 0.0) + 1.0
    for _, f in rows:
        if not math.isfinite(f["proximity"]):
            f["proximity"] = cap
    return rows


def build_policy_input(disruption: Disruption, snapshot: KnowledgeSnapshot,
                       candidates: list[tuple[str, dict[str, float]]],
                       params: ExplorationParams) -> PolicyInput:
    target = snapshot.agents[disruption.disrupted_agent]
    events = [target.pristine.events[e] for e in sorted(disruption.affected_events)]
    cand_docs = []
    for aid, factors in candidates:
        view = snapshot.agents[aid]
        cand_docs.append({
            "id": aid,
            "factors": factors,
            "performance": view.performance.to_dict(),
            "capability_summary": {"events": len(view.model.events),
                                   "shared_states": sorted(view.model.shared_states)},
            "constraints": params.constraints_for(aid).to_dict(),
        })
    affected = sorted(pid for pid, p in snapshot.parts.items()
                      if p.current_state in disruption.affected_states)
    product: dict = {"affected_parts": affected}
    if affected:
        part = snapshot.parts[affected[0]]
        product["plan"] = [sorted(step.properties) for step in part.plan.steps]
        product["history"] = {"visited": list(part.history.visited_states),
                              "achieved": sorted(part.history.achieved)}
    data = {
        "disruption": {
            "agent": disruption.disrupted_agent,
            "detected_at": disruption.detected_at,
            "states": sorted(disruption.affected_states),
            "events": event_summary(events),
        },
        "candidates": cand_docs,
        "product": product,
        "environment": {
            "agents": len(snapshot.agents),
            "operational": sorted(a for a, v in snapshot.agents.items() if v.operational),
        },
    }
    return PolicyInput(INSTRUCTIONS, data)


def explore(disruption: Disruption, snapshot: KnowledgeSnapshot, policy: Policy,
            params: ExplorationParams, config: ScoringConfig | None = None) -> ExplorationOutput:
    """Find a substitute agent and its explored capabilities.

    ``config`` is only used to rank candidates for the prompt; the policy
    makes the actual choice. Raises :class:`ExplorationFailed`.
    """
    if disruption.disrupted_agent not in snapshot.agents:
        raise ExplorationFailed(f"unknown agent {disruption.disrupted_agent}")
    candidates = candidate_factors(snapshot, disruption, params)
    if not candidates:
        raise ExplorationFailed("no operational candidate satisfies the constraints")
    if config is not None:
        from .scoring import score_candidates
        order = {aid: i for i, (aid, _) in enumerate(score_candidates(candidates, config))}
        candidates.sort(key=lambda row: order[row[0]])
    prompt = build_policy_input(disruption, snapshot, candidates, params)

    def again(feedback: str | None) -> str:
        nonlocal prompt
        if feedback:
            prompt = prompt.with_feedback(feedback)
        return policy.propose(prompt)

    try:
        first: str | None = again(None)
    except PolicyUnavailable:
        first = None
    verdict = validate(first, params, snapshot, params.max_iterations, again,
                       disrupted=disruption.disrupted_agent)
    if not verdict.valid:
        raise ExplorationFailed(verdict.feedback or "validation failed", verdict.rounds)
    output = verdict.output
    assert output is not None
    view = snapshot.agents[output.exploration_agent]
    trial = merged_model(view.model, output.explored_capabilities,
                         snapshot.agents[disruption.disrupted_agent].pristine,
                         params.routes.get(output.exploration_agent), params.catalog)
    bad = unsound_events(trial, output.event_ids)
    if bad:
        raise ExplorationFailed(f"explored events never reach a marked state: {', '.join(bad)}",
                                verdict.rounds)
    return output


@dataclass
class MergeRecord:
    exploration_agent: str
    disrupted_agent: str
    output: ExplorationOutput
    before: CapabilityModel
    after: CapabilityModel
    deactivated_before: frozenset[str]
    insertions: list[tuple[str, str, str]] = field(default_factory=list)  # (table owner, state, agent)


def merge_capabilities(agent: ResourceAgent, output: ExplorationOutput, disruption: Disruption,
                       agents: Mapping[str, ResourceAgent],
                       params: ExplorationParams | None = None) -> MergeRecord:
    """Install validated explored events on ``agent`` and register it in the
    neighbor tables of every state it now shares."""
    params = params or ExplorationParams()
    disrupted = agents[disruption.disrupted_agent]
    record = MergeRecord(agent.id, disrupted.id, output, agent.model, agent.model,
                         disrupted.deactivated)
    disrupted.deactivated = disrupted.deactivated | disruption.affected_events

    model = merged_model(agent.model, output.explored_capabilities, disrupted.pristine,
                         params.routes.get(agent.id), params.catalog)
    new_states = set(model.states) - set(agent.model.states)
    shared = set(model.shared_states)
    for state in sorted(new_states):
        others = sorted(a.id for a in agents.values() if a.id != agent.id and state in a.model.states)
        if not others:
            continue
        shared.add(state)
        for other in others:
            for owner, member in ((other, agent.id), (agent.id, other), (agent.id, agent.id)):
                if agents[owner].neighbors.add(state, member):
                    record.insertions.append((owner, state, member))
    model = model.evolve(shared_states=frozenset(shared))
    agent.model = model
    record.after = model
    return record


def revoke_capabilities(record: MergeRecord, agents: Mapping[str, ResourceAgent]) -> None:
    """Undo a merge: restore the pre-merge model, neighbor tables and the
    disrupted agent's deactivated events."""
    agent = agents[record.exploration_agent]
    agent.model = record.before
    for owner, state, member in reversed(record.insertions):
        agents[owner].neighbors.remove(state, member)
    agents[record.disrupted_agent].deactivated = record.deactivated_before
