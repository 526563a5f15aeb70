"""Exploration: candidate choice, validation loop, merge and revoke."""

from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_model, random_world
from mascap.constraints import ConstraintSet, check_constraints
from mascap.exploration import (
    CONSTRAINTS_NOT_MET,
    INVALID_AGENT,
    SYNTAX_ERROR,
    ExplorationFailed,
    ExplorationParams,
    explore,
    merge_capabilities,
    revoke_capabilities,
    validate,
)
from mascap.knowledge import detect_disruptions, take_snapshot
from mascap.model import EventKind, ProcessEvent, path_to_marked
from mascap.policy import BuiltinPolicy
from mascap.protocol import ExplorationOutput, serialize_output
from mascap.resource import ResourceAgent, ResourceStatus
from mascap.scenario import compile_world


def broken_world(scenario, agent="Robot2", tick=5):
    world = compile_world(scenario)
    before = take_snapshot(world.agents.values(), tick - 1, topology=world.topology)
    world.agents[agent].apply_status(ResourceStatus.broken(tick, 200), tick)
    snap = take_snapshot(world.agents.values(), tick, topology=world.topology)
    [disruption] = detect_disruptions(snap, before)
    params = ExplorationParams(scenario.constraints, 3, scenario.routes, world.catalog)
    return world, snap, disruption, params


class Scripted:
    """Policy stub that replays canned answers and records every call."""

    def __init__(self, answers):
        self.answers = list(answers)
        self.calls = 0
        self.feedback = []

    def propose(self, prompt, feedback=None):
        self.calls += 1
        self.feedback.append(prompt.feedback)
        return self.answers.pop(0) if self.answers else "not json"


def answer(agent, events):
    return serialize_output(ExplorationOutput(agent, tuple(events), "scripted"))


def test_example_selects_robot1(example3):
    world, snap, disruption, params = broken_world(example3)
    out = explore(disruption, snap, BuiltinPolicy(), params, example3.policy.scoring)
    assert out.exploration_agent == "Robot1"
    assert out.event_ids == ["σ3", "σ4"]


def test_example_merge_reaches_machine_input(example3):
    world, snap, disruption, params = broken_world(example3)
    out = explore(disruption, snap, BuiltinPolicy(), params)
    r1 = world.agents["Robot1"]
    before = len(r1.model.events)
    record = merge_capabilities(r1, out, disruption, world.agents, params)
    # |E'| = |E_original| + |E_new| for disjoint event sets
    assert len(r1.model.events) == before + 2
    assert r1.model.transitions[("X1", "σ3")] == "X8"
    assert r1.model.transitions[("X8", "σ4")] == "X5"
    assert "X5" in r1.model.marked_states
    assert "Robot1" in world.agents["Machine1"].neighbors.entries.get("X5", set())
    assert world.agents["Robot2"].deactivated == disruption.affected_events
    revoke_capabilities(record, world.agents)
    assert r1.model == record.before
    assert "Robot1" not in world.agents["Machine1"].neighbors.entries.get("X5", set())
    assert world.agents["Robot2"].deactivated == frozenset()


def test_feedback_strings_and_round_limit(example3):
    world, snap, disruption, params = broken_world(example3)
    events = [snap.agents["Robot2"].pristine.events[e] for e in sorted(disruption.affected_events)]
    far = [ProcessEvent(e.id, e.kind, e.duration, dict(e.params, x_to=99.0)) for e in events]
    stub = Scripted(["{oops", answer("Robot9", events), answer("Robot1", far)])
    with pytest.raises(ExplorationFailed) as err:
        explore(disruption, snap, stub, params)
    assert stub.calls == 3 and err.value.rounds == 3
    assert err.value.reason.startswith(CONSTRAINTS_NOT_MET)
    assert stub.feedback[1][0].startswith(SYNTAX_ERROR)
    assert stub.feedback[2][1].startswith(INVALID_AGENT)


def test_disrupted_agent_is_not_a_valid_substitute(example3):
    world, snap, disruption, params = broken_world(example3)
    events = list(snap.agents["Robot2"].pristine.events.values())
    v = validate(answer("Robot2", events), params, snap, 1, disrupted="Robot2")
    assert not v.valid and v.feedback.startswith(INVALID_AGENT)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_validate_uses_at_most_n_rounds(example3, n):
    world, snap, disruption, params = broken_world(example3)
    stub = Scripted([])
    v = validate("bad", params, snap, n, lambda fb: stub.propose(type("P", (), {"feedback": fb})()))
    assert not v.valid and v.rounds == n and stub.calls == n - 1


def test_no_candidate_raises(example3):
    world, snap, disruption, params = broken_world(example3)
    tight = {aid: ConstraintSet({"x_from": (100.0, 101.0)}) for aid in ("Robot1", "Robot3")}
    params = ExplorationParams(tight, 3, params.routes, params.catalog)
    with pytest.raises(ExplorationFailed, match="no operational candidate"):
        explore(disruption, snap, BuiltinPolicy(), params)


# -- validation against an independent constraint oracle -------------------------

AGENTS = ["A", "B", "C"]
PARAMS = ["x_from", "x_to", "payload"]
bounds = st.tuples(st.floats(-50, 50), st.floats(0, 50)).map(lambda t: (t[0], t[0] + t[1]))


@st.composite
def proposals(draw):
    agent = draw(st.sampled_from(AGENTS + ["Z"]))
    caps = draw(st.lists(st.builds(
        ProcessEvent, st.sampled_from(["e1", "e2", "e3"]), st.just(EventKind.TRANSPORT),
        st.integers(1, 9), st.dictionaries(st.sampled_from(PARAMS), st.floats(-80, 80), max_size=3)),
        min_size=1, max_size=3))
    cons = {a: ConstraintSet(draw(st.dictionaries(st.sampled_from(PARAMS), bounds)),
                             draw(st.dictionaries(st.sampled_from(PARAMS), bounds)))
            for a in AGENTS}
    broken = draw(st.sampled_from(AGENTS))
    return ExplorationOutput(agent, tuple(caps)), cons, broken


def oracle(output, cons, broken):
    if output.exploration_agent not in AGENTS or output.exploration_agent == broken:
        return False
    ops, safe = cons[output.exploration_agent].operation_bounds, cons[output.exploration_agent].safety_limits
    for cap in output.explored_capabilities:
        for p, v in cap.params.items():
            for table in (ops, safe):
                if p in table and not table[p][0] <= v <= table[p][1]:
                    return False
    return True


@settings(max_examples=1000, deadline=None)
@given(proposals())
def test_validate_agrees_with_oracle(case):
    output, cons, broken = case
    agents = {a: ResourceAgent(a, "robot", make_model([("s", "m", "t")], {"t"}, "s")) for a in AGENTS}
    agents[broken].apply_status(ResourceStatus.broken(0, 10), 0)
    snap = take_snapshot(agents.values(), 0)
    v = validate(output, ExplorationParams(cons), snap, 1)
    assert v.valid == oracle(output, cons, broken)


# -- merge and revoke are inverse -----------------------------------------------

def test_merge_then_revoke_restores_everything():
    from mascap.knowledge import Disruption
    rng = random.Random(7)
    for _ in range(100):
        agents = random_world(rng)
        d, s = agents["D"], agents["S"]
        # a suffix of D's chain, so every explored event still leads to the hub
        chain = sorted(d.model.events, key=lambda e: int(e[1:]))
        chosen = chain[rng.randrange(len(chain)):]
        caps = tuple(d.model.events[e] for e in sorted(chosen))
        before = {a: (x.model, {k: set(v) for k, v in x.neighbors.entries.items()}, x.deactivated)
                  for a, x in agents.items()}
        disruption = Disruption("D", frozenset(s for (s, e) in d.model.transitions),
                                frozenset(d.model.events), 0)
        record = merge_capabilities(s, ExplorationOutput("S", caps), disruption, agents)
        assert len(s.model.events) == len(before["S"][0].events) + len(caps)
        for e in chosen:
            src = next(k[0] for k in s.model.transitions if k[1] == e)
            path_to_marked(s.model, src)  # raises if the merge is unsound
        revoke_capabilities(record, agents)
        after = {a: (x.model, {k: set(v) for k, v in x.neighbors.entries.items() if v}, x.deactivated)
                 for a, x in agents.items()}
        assert after == {a: (m, {k: v for k, v in t.items() if v}, dd)
                         for a, (m, t, dd) in before.items()}
