"""Product agents: plan progress and bid solicitation."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mascap.model import NeighborTable, ProcessPlan, ProductHistory
from mascap.product import (
    AllBidsInvalid,
    Bid,
    BidRequest,
    InconsistentHistory,
    NoReachableAgents,
    ProductAgent,
    contacted_agents,
    next_requirement,
    next_step,
    record_progress,
    select_bid,
    solicit_bids,
)

WAFER = ProcessPlan.of(["P1"], ["P2"], ["P3"], ["P4"], ["P5"], ["P6"])


def history_with(*props):
    h = ProductHistory()
    for i, p in enumerate(props):
        h = record_progress(h, f"s{i}", {p}, "R")
    return h


def test_fresh_part_needs_first_step():
    assert next_requirement(WAFER, ProductHistory()) == {"P1"}


def test_plan_complete_returns_none():
    assert next_step(WAFER, history_with("P1", "P2", "P3", "P4", "P5", "P6")) is None


def test_out_of_order_history_is_inconsistent():
    with pytest.raises(InconsistentHistory):
        next_step(WAFER, history_with("P2"))


@given(st.integers(0, 6))
def test_next_step_counts_prefix(k):
    done = [f"P{i}" for i in range(1, k + 1)]
    idx = next_step(WAFER, history_with(*done))
    assert idx == (None if k == 6 else k)


def test_record_progress_is_append_only():
    h1 = history_with("P1")
    h2 = record_progress(h1, "x", {"P2"}, "M")
    assert h1.visited_states == ("s0",)
    assert h2.visited_states == ("s0", "x")
    assert h2.reporting_agent["x"] == "M"
    assert h2.achieved == {"P1", "P2"}


def test_contacted_agents_includes_owner():
    table = NeighborTable({"buf": {"B1", "M12"}})
    assert contacted_agents(table, "buf", "B2") == ["B1", "B2", "M12"]
    assert contacted_agents(table, "other", None) == []


def test_solicit_without_neighbors_raises():
    req = BidRequest("p", frozenset({"P1"}), "nowhere")
    with pytest.raises(NoReachableAgents):
        solicit_bids(req, NeighborTable(), None, lambda a, r: Bid.invalid(a, "x"))


def test_select_bid_minimum_cost_then_id():
    bids = [Bid("B", ("e",), 5, True), Bid("A", ("e",), 5, True), Bid("C", ("e",), 3, False)]
    assert select_bid(bids).bidder == "A"
    with pytest.raises(AllBidsInvalid):
        select_bid([Bid.invalid("A", "broken")])


def test_bid_request_needs_properties():
    with pytest.raises(ValueError):
        BidRequest("p", frozenset(), "s")


def test_product_agent_step_index_is_monotone():
    part = ProductAgent("p", WAFER, "start", 0)
    assert part.requirement() == {"P1"}
    part.advance("a", {"P1"}, "ST01")
    assert part.requirement() == {"P2"}
    assert part.step_index == 1
    assert part.owner == "ST01"
    part.advance("b", set(), "B1")  # a plain move keeps the step
    assert part.step_index == 1 and part.owner == "B1"
