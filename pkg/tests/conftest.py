from __future__ import annotations

import pytest

from mascap.engine import Simulation
from mascap.model import CapabilityModel, EventKind, PartState, ProcessEvent
from mascap.scenario import load_scenario


def make_model(transitions, marked, initial=None, props=None, durations=None, shared=()):
    """Small capability model from (src, event, dst) triples."""
    states = {s for src, _, dst in transitions for s in (src, dst)} | set(marked)
    if initial is not None:
        states.add(initial)
    events = {}
    for _, e, _ in transitions:
        events[e] = ProcessEvent(e, EventKind.TRANSPORT, (durations or {}).get(e, 1))
    return CapabilityModel(
        states={s: PartState(s) for s in sorted(states)},
        events=events,
        transitions={(src, e): dst for src, e, dst in transitions},
        physical_props={k: frozenset(v) for k, v in (props or {}).items()},
        initial_state=initial if initial is not None else sorted(states)[0],
        marked_states=frozenset(marked),
        shared_states=frozenset(shared),
    )


@pytest.fixture(scope="session")
def waferfab():
    return load_scenario("waferfab20")


@pytest.fixture(scope="session")
def example3():
    return load_scenario("example3robot")


@pytest.fixture(scope="session")
def wafer_off(waferfab):
    return Simulation(waferfab, exploration=False).run()


@pytest.fixture(scope="session")
def wafer_on(waferfab):
    return Simulation(waferfab, exploration=True).run()


def one_cell_scenario(count=1, transport=10, horizon=2000):
    """One robot serving ENTRY, EXIT and one station per wafer process."""
    from mascap.model import ProcessPlan
    from mascap.scenario import (BufferSpec, Facility, Options, Release, RobotSpec, Scenario,
                                 StationSpec)
    times = {"P1": 150, "P2": 60, "P3": 110, "P4": 100, "P5": 170, "P6": 20}
    stations = tuple(StationSpec(f"ST{i}", 1, p, float(i)) for i, p in enumerate(times, 1))
    buffers = (BufferSpec("ENTRY", 0.0, "entry"), BufferSpec("EXIT", 7.0, "exit"))
    robot = RobotSpec("R", ("ENTRY",) + tuple(s.id for s in stations) + ("EXIT",), 1)
    return Scenario(
        name="onecell", process_times=times, parameters=["x_from", "x_to", "payload"],
        plans={"wafer": ProcessPlan.of(*([p] for p in times))},
        releases=[Release(0, count, "wafer", "buf:ENTRY", "w")],
        facility=Facility(buffers, stations, (robot,)),
        options=Options(horizon=horizon, transport_duration=transport),
    )


def random_world(rng):
    """Three chain agents D, S and N meeting in a shared marked state."""
    from mascap.resource import ResourceAgent
    agents = {}
    for name in ("D", "S", "N"):
        n = rng.randint(2, 5)
        states = [f"{name.lower()}{i}" for i in range(n)] + ["hub"]
        trans = [(states[i], f"{name}{i}", states[i + 1]) for i in range(len(states) - 1)]
        agents[name] = ResourceAgent(name, "robot", make_model(trans, {"hub"}, states[0],
                                                               shared=("hub",)))
    for a in agents.values():
        for b in agents.values():
            a.neighbors.add("hub", b.id)
    return agents
