"""Regenerate the bundled waferfab20 scenario.

Six cells sit on a line, 20 units apart. Each cell has a cell robot Bk and a
cell buffer CBk; transfer robots M12, M34 and M56 bridge cell pairs through two
shared buffers each, while B2|B3 and B4|B5 share one buffer directly.

Usage: python tools/make_waferfab20.py [output.json]
"""

from __future__ import annotations

import sys
from pathlib import Path

from mascap.constraints import ConstraintSet
from mascap.model import PlanStep, ProcessPlan
from mascap.scenario import (
    PolicyConfig,
    BufferSpec,
    DisruptionSchedule,
    Facility,
    Options,
    Release,
    RobotSpec,
    Scenario,
    ScheduleEntry,
    StationSpec,
    save_scenario,
)
from mascap.scoring import ScoringConfig

PROCESS_TIMES = {"P1": 150, "P2": 60, "P3": 110, "P4": 100, "P5": 170, "P6": 20}

# cell -> processes of its stations, left to right
CELLS = {
    1: ["P1", "P1", "P2"],
    2: ["P1", "P2", "P3"],
    3: ["P3", "P3", "P4", "P2"],
    4: ["P4", "P5", "P4", "P5"],
    5: ["P5", "P6", "P3"],
    6: ["P6", "P5", "P4"],
}

CELL_PITCH = 20.0
CELL_REACH = 22.0  # how far past its own span a cell robot may be sent
TRANSFER_REACH = 20.0
LOT_MASS = 25.0
PAYLOAD_LIMIT = 40.0
SAFE_PAYLOAD = 30.0
TRANSPORT = 40  # ticks per robot move; sets the pace of the lot wave down the line

SCHEDULE = [("M12", 1000, 450), ("B3", 2500, 450), ("B4", 3000, 340), ("B6", 4500, 390)]


def centre(cell: int) -> float:
    return CELL_PITCH * cell


def build() -> Scenario:
    buffers = [BufferSpec("ENTRY", centre(1) - 8, "entry", "entrance"),
               BufferSpec("EXIT", centre(6) + 8, "exit", "exit", ("exited",))]
    for k in CELLS:
        buffers.append(BufferSpec(f"CB{k}", centre(k), "buffer", f"cell {k} buffer"))
    shared = [
        ("SB12a", centre(1) + 8, "between B1 and M12"),
        ("SB12b", centre(1) + 12, "between M12 and B2"),
        ("SB23", centre(2) + 10, "between B2 and B3"),
        ("SB34a", centre(3) + 8, "between B3 and M34"),
        ("SB34b", centre(3) + 12, "between M34 and B4"),
        ("SB45", centre(4) + 10, "between B4 and B5"),
        ("SB56a", centre(5) + 8, "between B5 and M56"),
        ("SB56b", centre(5) + 12, "between M56 and B6"),
    ]
    buffers += [BufferSpec(i, x, "buffer", d) for i, x, d in shared]

    stations = []
    serial = 0
    for cell, procs in CELLS.items():
        n = len(procs)
        for j, proc in enumerate(procs):
            serial += 1
            x = centre(cell) - 6 + 12 * (j + 0.5) / n
            stations.append(StationSpec(f"ST{serial:02d}", cell, proc, round(x, 2)))

    def cell_stations(cell: int) -> list[str]:
        return [s.id for s in stations if s.cell == cell]

    left = {1: ["ENTRY"], 2: ["SB12b"], 3: ["SB23"], 4: ["SB34b"], 5: ["SB45"], 6: ["SB56b"]}
    right = {1: ["SB12a"], 2: ["SB23"], 3: ["SB34a"], 4: ["SB45"], 5: ["SB56a"], 6: ["EXIT"]}
    robots = [RobotSpec(f"B{k}", tuple(left[k] + [f"CB{k}"] + cell_stations(k) + right[k]), k, "cell")
              for k in CELLS]
    robots += [RobotSpec("M12", ("SB12a", "SB12b"), None, "transfer"),
               RobotSpec("M34", ("SB34a", "SB34b"), None, "transfer"),
               RobotSpec("M56", ("SB56a", "SB56b"), None, "transfer")]

    xs = {b.id: b.x for b in buffers} | {s.id: s.x for s in stations}
    constraints = {}
    for r in robots:
        lo = min(xs[loc] for loc in r.serves)
        hi = max(xs[loc] for loc in r.serves)
        reach = CELL_REACH if r.role == "cell" else TRANSFER_REACH
        constraints[r.id] = ConstraintSet(
            operation_bounds={"x_from": (lo - reach, hi + reach), "x_to": (lo - reach, hi + reach),
                              "payload": (0.0, PAYLOAD_LIMIT)},
            safety_limits={"payload": (0.0, SAFE_PAYLOAD)},
        )

    return Scenario(
        name="waferfab20",
        description=("Reconstructed 20-station wafer fab: six cells on a line, cell robots "
                     "B1-B6, transfer robots M12/M34/M56; four robot breakdowns."),
        process_times=dict(PROCESS_TIMES),
        parameters=["x_from", "x_to", "payload"],
        plans={"wafer": ProcessPlan(tuple(PlanStep(frozenset({p})) for p in PROCESS_TIMES)
                                   + (PlanStep(frozenset(), frozenset({"exited"})),))},
        releases=[Release(10, 25, "wafer", "buf:ENTRY", "lot")],
        facility=Facility(tuple(buffers), tuple(stations), tuple(robots), LOT_MASS),
        constraints=constraints,
        schedule=DisruptionSchedule(tuple(ScheduleEntry(a, t, m) for a, t, m in SCHEDULE)),
        # prefer idle substitutes: a saturated robot cannot absorb more work
        policy=PolicyConfig(scoring=ScoringConfig.default(utilization_complement=True)),
        options=Options(transport_duration=TRANSPORT),
    )


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else \
        Path(__file__).resolve().parent.parent / "src" / "mascap" / "scenarios" / "waferfab20.json"
    save_scenario(build(), out)
    print(f"wrote {out}")
