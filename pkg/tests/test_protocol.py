"""Policy answer parsing and prompt documents."""

from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mascap.model import EventKind, ProcessEvent
from mascap.protocol import (
    TEMPLATE,
    ExplorationOutput,
    OutputSyntaxError,
    PolicyInput,
    parse_output,
    serialize_output,
)

GOOD = {"exploration_agent": "Robot1",
        "explored_capabilities": [{"event": "s3", "kind": "transport", "duration": 5,
                                   "params": {"x_from": 0, "x_to": 4.5}}],
        "rationale": "closest idle robot"}


def test_parse_good_answer():
    out = parse_output(json.dumps(GOOD))
    assert out.exploration_agent == "Robot1"
    assert out.explored_capabilities[0] == ProcessEvent("s3", EventKind.TRANSPORT, 5,
                                                        {"x_from": 0.0, "x_to": 4.5})


@pytest.mark.parametrize("mutate, fragment", [
    (lambda d: d.pop("exploration_agent"), "exploration_agent"),
    (lambda d: d.update(explored_capabilities=[]), "non-empty list"),
    (lambda d: d["explored_capabilities"][0].update(kind="fly"), "kind"),
    (lambda d: d["explored_capabilities"][0].update(duration=0), "duration"),
    (lambda d: d["explored_capabilities"][0].update(duration=True), "duration"),
    (lambda d: d["explored_capabilities"][0]["params"].update(x_to="far"), "x_to"),
    (lambda d: d.update(rationale=3), "rationale"),
])
def test_malformed_answers(mutate, fragment):
    doc = json.loads(json.dumps(GOOD))
    mutate(doc)
    with pytest.raises(OutputSyntaxError, match=fragment):
        parse_output(json.dumps(doc))


def test_json_error_has_position():
    with pytest.raises(OutputSyntaxError) as err:
        parse_output('{"exploration_agent": ')
    assert err.value.position == 22


@pytest.mark.parametrize("text", ["", "   ", "[1, 2]", "null"])
def test_non_object_rejected(text):
    with pytest.raises(OutputSyntaxError):
        parse_output(text)


names = st.text("abcdefghXYZ0123456789_", min_size=1, max_size=8)
caps = st.builds(ProcessEvent, names, st.sampled_from(list(EventKind)), st.integers(1, 500),
                 st.dictionaries(names, st.floats(-1e6, 1e6, allow_nan=False), max_size=3))


@given(names, st.lists(caps, min_size=1, max_size=4), st.text(max_size=30))
def test_serialize_parse_round_trip(agent, capabilities, rationale):
    out = ExplorationOutput(agent, tuple(capabilities), rationale)
    assert parse_output(serialize_output(out)) == out


def test_policy_input_feedback_accumulates():
    p = PolicyInput("pick one", {"candidates": []})
    q = p.with_feedback("Invalid agent: X").with_feedback("Syntax error: y")
    assert q.feedback == ("Invalid agent: X", "Syntax error: y")
    assert "Syntax error: y" in q.instructions and q.template == TEMPLATE
    assert set(json.loads(q.dumps())) == {"instructions", "data", "template"}
    with pytest.raises(ValueError):
        PolicyInput("", {})
