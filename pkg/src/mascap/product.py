"""Product agents: walk a part through its process plan by soliciting bids."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

from .model import EnvironmentModel, NeighborTable, ProcessPlan, ProductHistory, neighbor_lookup


class BiddingError(Exception):
    pass


class NoReachableAgents(BiddingError):
    pass


class AllBidsInvalid(BiddingError):
    pass


class InconsistentHistory(Exception):
    pass


@dataclass(frozen=True)
class BidRequest:
    part_id: str
    required_props: frozenset[str]
    from_state: str
    deadline_hint: int | None = None

    def __post_init__(self):
        if not self.required_props:
            raise ValueError("bid request needs at least one required property")


@dataclass(frozen=True)
class Bid:
    bidder: str
    promised_path: tuple[str, ...] = ()
    completion_cost: int = 0
    valid: bool = False
    reason: str = ""
    # (event, owner) for every hop; forwarded routes cross several agents
    route: tuple[tuple[str, str], ...] = ()

    @classmethod
    def invalid(cls, bidder: str, reason: str) -> "Bid":
        return cls(bidder=bidder, valid=False, reason=reason)


def next_step(plan: ProcessPlan, history: ProductHistory) -> int | None:
    """Index of the first unsatisfied plan step, or None once the plan is done."""
    achieved = history.achieved
    satisfied = [step.properties <= achieved for step in plan.steps]
    if False not in satisfied:
        return None
    first = satisfied.index(False)
    if any(satisfied[first + 1:]):
        later = satisfied.index(True, first + 1)
        raise InconsistentHistory(f"step {later + 1} achieved before step {first + 1}")
    return first


def next_requirement(plan: ProcessPlan, history: ProductHistory) -> frozenset[str] | None:
    """Properties of the next plan step; ``None`` means the plan is complete."""
    idx = next_step(plan, history)
    return None if idx is None else plan.steps[idx].properties


def record_progress(history: ProductHistory, state: str, props: Iterable[str],
                    reporter: str) -> ProductHistory:
    achieved = dict(history.achieved_props)
    achieved[state] = achieved.get(state, frozenset()) | frozenset(props)
    reporters = dict(history.reporting_agent)
    reporters[state] = reporter
    return ProductHistory(
        visited_states=history.visited_states + (state,),
        achieved_props=achieved,
        reporting_agent=reporters,
    )


def contacted_agents(neighbors: NeighborTable, state: str, owner: str | None) -> list[str]:
    contacted = neighbor_lookup(neighbors, state)
    if owner:
        contacted.add(owner)
    return sorted(contacted)


def solicit_bids(req: BidRequest, neighbors: NeighborTable, owner: str | None,
                 evaluate: Callable[[str, BidRequest], Bid],
                 env: EnvironmentModel | None = None) -> list[Bid]:
    """One bid per contacted agent: neighbors of the part's state plus its owner."""
    if env is not None and req.from_state not in env.states:
        raise NoReachableAgents(f"{req.from_state} unknown to the environment model")
    contacted = contacted_agents(neighbors, req.from_state, owner)
    if not contacted:
        raise NoReachableAgents(f"nobody serves {req.from_state}")
    return [evaluate(agent, req) for agent in contacted]


def select_bid(bids: Sequence[Bid]) -> Bid:
    valid = [b for b in bids if b.valid]
    if not valid:
        raise AllBidsInvalid(", ".join(f"{b.bidder}: {b.reason}" for b in bids) or "no bids")
    return min(valid, key=lambda b: (b.completion_cost, b.bidder))


class PartStatus(str, Enum):
    PENDING = "pending"
    ACTIVE = "active"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class ProductAgent:
    part_id: str
    plan: ProcessPlan
    current_state: str
    released_at: int
    history: ProductHistory = field(default_factory=ProductHistory)
    status: PartStatus = PartStatus.ACTIVE
    attempts: int = 0
    step_index: int = 0
    finished_at: int | None = None

    @property
    def owner(self) -> str | None:
        """Agent that last reported this part's state."""
        if not self.history.visited_states:
            return None
        return self.history.reporting_agent.get(self.history.visited_states[-1])

    @property
    def done(self) -> bool:
        return self.status in (PartStatus.COMPLETED, PartStatus.FAILED)

    def requirement(self) -> frozenset[str] | None:
        idx = next_step(self.plan, self.history)
        if idx is not None:
            # plan monotonicity: progress is never undone
            self.step_index = max(self.step_index, idx)
            return self.plan.steps[idx].properties
        self.step_index = len(self.plan.steps)
        return None

    def advance(self, state: str, props: Iterable[str], reporter: str) -> None:
        self.history = record_progress(self.history, state, props, reporter)
        self.current_state = state

    def bid_request(self) -> BidRequest | None:
        req = self.requirement()
        if req is None:
            return None
        return BidRequest(self.part_id, req, self.current_state)

    def snapshot(self) -> "ProductAgent":
        return dataclasses.replace(self)
