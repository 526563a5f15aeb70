"""Scenario files: loading, round trips, validation and compilation."""

from __future__ import annotations

import dataclasses
import json

import pytest

from mascap.model import path_to_marked
from mascap.resource import AgentKind
from mascap.scenario import (
    DisruptionSchedule,
    ParseError,
    ScenarioError,
    ScheduleEntry,
    ValidationError,
    compile_world,
    dumps,
    load_scenario,
    loads,
    random_schedule,
    save_scenario,
    scenario_to_dict,
    validate_scenario,
)


def test_waferfab_contents(waferfab):
    assert waferfab.process_times == {"P1": 150, "P2": 60, "P3": 110, "P4": 100, "P5": 170, "P6": 20}
    assert len(waferfab.facility.stations) == 20
    assert waferfab.part_count == 25
    assert [(e.agent, e.breakdown_tick, e.mttr) for e in waferfab.schedule.entries] == \
        [("M12", 1000, 450), ("B3", 2500, 450), ("B4", 3000, 340), ("B6", 4500, 390)]


def test_waferfab_world(waferfab):
    world = compile_world(waferfab)
    robots = sorted(a for a, ag in world.agents.items() if ag.kind is AgentKind.ROBOT)
    assert robots == ["B1", "B2", "B3", "B4", "B5", "B6", "M12", "M34", "M56"]
    # every station takes the duration of its process
    for st in waferfab.facility.stations:
        ev = world.agents[st.id].model.events[f"proc:{st.id}"]
        assert ev.duration == waferfab.process_times[st.process]


def test_example_contents(example3):
    world = compile_world(example3)
    kinds = sorted(a.kind.value for a in world.agents.values())
    assert kinds.count("robot") == 3 and kinds.count("machine") == 2
    assert example3.buffers == ["Inventory", "ProductABuffer", "ProductBBuffer"]
    r1 = world.agents["Robot1"].model
    assert path_to_marked(r1, "X1") in (["σ1", "σ2"], ["σ5", "σ6"])


@pytest.mark.parametrize("name", ["waferfab20", "example3robot"])
def test_save_load_round_trip(name, tmp_path):
    s = load_scenario(name)
    path = tmp_path / "s.json"
    save_scenario(s, path)
    assert load_scenario(path) == s
    assert dumps(load_scenario(path)) == dumps(s)


def test_overlapping_breakdowns_rejected(example3):
    doc = scenario_to_dict(example3)
    doc["schedule"] = [{"agent": "Robot2", "breakdown_tick": 5, "mttr": 200},
                       {"agent": "Robot3", "breakdown_tick": 100, "mttr": 10}]
    with pytest.raises(ValidationError, match="simultaneous breakdowns"):
        loads(json.dumps(doc))


def test_parse_error_has_position():
    with pytest.raises(ParseError, match=r"<string>:2:5"):
        loads('{\n    oops}')


def test_unknown_option_rejected(example3):
    doc = scenario_to_dict(example3)
    doc["options"]["warp"] = 9
    with pytest.raises(ParseError, match="warp"):
        loads(json.dumps(doc))


def test_missing_file():
    with pytest.raises(ScenarioError, match="not found"):
        load_scenario("/nonexistent/scenario.json")


def test_disconnected_topology_reported(example3):
    s = dataclasses.replace(example3, links=[l for l in example3.links if "Robot3" not in l])
    assert any(p.startswith("topology") for p in validate_scenario(s))


def test_unknown_schedule_agent_reported(example3):
    s = dataclasses.replace(example3, schedule=DisruptionSchedule((ScheduleEntry("Ghost", 3, 4),)))
    assert any("unknown agent Ghost" in p for p in validate_scenario(s))


@pytest.mark.parametrize("seed", range(10))
def test_random_schedule_is_valid(waferfab, seed):
    sched = random_schedule(waferfab, 5, seed, 6000)
    assert len(sched.entries) == 5 and not sched.overlaps()
    assert all(0 <= e.breakdown_tick and e.repair_tick <= 6000 for e in sched.entries)
    assert random_schedule(waferfab, 5, seed, 6000) == sched


def test_generator_reproduces_bundled_file():
    import importlib.util
    from pathlib import Path
    from mascap.scenario import bundled_path
    path = Path(__file__).resolve().parent.parent / "tools" / "make_waferfab20.py"
    spec = importlib.util.spec_from_file_location("make_waferfab20", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    assert dumps(module.build()) == bundled_path("waferfab20").read_text(encoding="utf-8")
