"""Performance sampling, snapshots and disruption detection."""

from __future__ import annotations

import math

import networkx as nx
import pytest

from conftest import make_model
from mascap.knowledge import detect_disruptions, sample_performance, take_snapshot
from mascap.resource import ResourceAgent, ResourceStatus


def agent(aid="R"):
    model = make_model([("a", "m", "b"), ("b", "n", "c")], {"c"}, "a", durations={"m": 4, "n": 2})
    return ResourceAgent(aid, "robot", model)


def test_utilization_is_busy_over_window():
    r = agent()
    r.start_event("p", "m", 0, "a", ready_at=2)  # busy 2..6
    for t in range(10):
        r.tick_complete(t)
    pv = sample_performance(r, 10, window=5)     # window [5, 10): busy at 5 only
    assert pv.utilization == pytest.approx(1 / 5)
    assert pv.throughput == 1  # the task finished at tick 6, inside the window
    pv = sample_performance(r, 10, window=200)   # early run: divide by 10 ticks
    assert pv.utilization == pytest.approx(4 / 10) and pv.throughput == 1


def test_zero_tick_sample_is_idle():
    assert sample_performance(agent(), 0).utilization == 0.0


def test_availability_tracks_breakdown():
    r = agent()
    r.apply_status(ResourceStatus.broken(3, 4), 3)
    pv = sample_performance(r, 3)
    assert pv.breakdown and pv.availability == 0


def test_detect_only_new_breakdowns():
    a, b = agent("A"), agent("B")
    before = take_snapshot([a, b], 0)
    a.apply_status(ResourceStatus.broken(1, 5), 1)
    now = take_snapshot([a, b], 1)
    found = detect_disruptions(now, before)
    assert [d.disrupted_agent for d in found] == ["A"]
    assert found[0].affected_events == {"m", "n"}
    assert found[0].affected_states == {"a", "b"}
    assert detect_disruptions(take_snapshot([a, b], 2), now) == []


def test_proximity_is_hop_count():
    g = nx.Graph([("A", "buf"), ("buf", "B"), ("C", "x")])
    snap = take_snapshot([agent("A")], 0, topology=g)
    assert snap.proximity("A", "B") == 2
    assert math.isinf(snap.proximity("A", "C"))


def test_snapshot_serializes():
    r = agent()
    text = take_snapshot([r], 0).dumps()
    assert '"R"' in text
