"""Run outputs (CSV, line-delimited event log, summary, gnuplot script) and
side-by-side comparison of two output directories."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from statistics import mean
from typing import Sequence

from .engine import RunMetrics, summarize
from .scenario import DisruptionSchedule, Scenario

METRICS_FILE = "metrics.csv"
EVENTS_FILE = "events.log"
SUMMARY_FILE = "summary.txt"
RUN_FILE = "run.json"
PLOT_FILE = "plot.gp"


class IncompatibleRuns(ValueError):
    pass


@dataclass(frozen=True)
class WindowStats:
    """Windowed utilization before and during one breakdown."""

    agent: str
    start: int
    end: int
    pre: float
    during: float
    substitute: str | None = None
    substitute_pre: float | None = None
    substitute_during: float | None = None

    @property
    def disrupted_declined(self) -> bool:
        return self.during < self.pre

    @property
    def substitute_increased(self) -> bool:
        return (self.substitute is not None and self.substitute_during is not None
                and self.substitute_pre is not None and self.substitute_during > self.substitute_pre)


def _span_mean(series: Sequence[float], start: int, end: int) -> float:
    values = series[max(0, start):max(0, min(end, len(series)))]
    return mean(values) if values else 0.0


def utilization_transfer(metrics: RunMetrics, schedule: DisruptionSchedule,
                         window: int) -> list[WindowStats]:
    """Compare each breakdown interval with the ``window`` ticks before it.

    Both sides are means of the windowed utilization series; the substitute
    is the agent chosen by the exploration that the breakdown triggered.
    """
    chosen = {(e.tick, e.disrupted_agent): e.exploration_agent for e in metrics.explorations}
    stats = []
    for entry in sorted(schedule.entries, key=lambda e: (e.breakdown_tick, e.agent)):
        a, b = entry.breakdown_tick, entry.repair_tick
        series = metrics.utilization_series.get(entry.agent, [])
        sub = chosen.get((a, entry.agent))
        sub_series = metrics.utilization_series.get(sub, []) if sub else []
        stats.append(WindowStats(
            entry.agent, a, b, _span_mean(series, a - window, a), _span_mean(series, a, b),
            sub,
            _span_mean(sub_series, a - window, a) if sub else None,
            _span_mean(sub_series, a, b) if sub else None,
        ))
    return stats


def topology_key(scenario: Scenario) -> str:
    """Fingerprint of the agents and layout; runs are comparable when equal."""
    from .scenario import build_models, build_topology
    models = build_models(scenario)
    topo = build_topology(scenario, models)
    doc = {"agents": sorted(models), "edges": sorted(sorted(e) for e in topo.edges)}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def metrics_rows(metrics: RunMetrics, stride: int = 1) -> tuple[list[str], list[list]]:
    summary = summarize(metrics, stride)
    agents = sorted(summary.utilization)
    header = ["tick", "completed_cum"] + [f"util_{a}" for a in agents]
    rows = []
    for i, tick in enumerate(summary.ticks):
        rows.append([tick, summary.completed[i]] +
                    [f"{summary.utilization[a][i]:.6f}" for a in agents])
    return header, rows


def gnuplot_script(header: list[str], breakdowns: DisruptionSchedule, title: str) -> str:
    lines = [
        "# gnuplot -p plot.gp",
        "set datafile separator ','",
        "set key autotitle columnhead outside",
        "set xlabel 'tick'",
    ]
    for i, e in enumerate(sorted(breakdowns.entries, key=lambda e: e.breakdown_tick), 1):
        lines.append(f"set object {i} rect from {e.breakdown_tick},graph 0 to {e.repair_tick},graph 1 "
                     "fc rgb '#dddddd' fs solid 0.5 behind")
    lines += [
        "set multiplot layout 2,1",
        f"set title '{title}: completed parts'",
        "set ylabel 'parts'",
        f"plot '{METRICS_FILE}' using 1:2 with steps lw 2",
        f"set title '{title}: robot utilization'",
        "set ylabel 'utilization'",
        "plot " + ", ".join(
            f"'{METRICS_FILE}' using 1:{j + 1} with lines"
            for j, name in enumerate(header) if name.startswith("util_") and not name.startswith("util_ST")
        ),
        "unset multiplot",
    ]
    return "\n".join(lines) + "\n"


def render_summary(scenario: Scenario, metrics: RunMetrics, exploration: bool,
                   stats: list[WindowStats]) -> str:
    lines = [
        f"scenario     {scenario.name}",
        f"exploration  {'on' if exploration else 'off'}",
        f"horizon      {metrics.horizon}",
        f"released     {metrics.released}",
        f"completed    {metrics.completed_parts}",
        f"failed       {metrics.failed_parts}",
        f"in system    {metrics.in_system}",
        "",
        "explorations",
    ]
    if not metrics.explorations:
        lines.append("  none")
    for e in metrics.explorations:
        outcome = e.exploration_agent or f"failed ({e.error})"
        lines.append(f"  t={e.tick:<6} {e.disrupted_agent:<10} -> {outcome}  "
                     f"[{len(e.events)} events, {e.rounds} round(s)]")
    lines += ["", "utilization over breakdown windows (mean of windowed series)",
              f"  {'agent':<10} {'window':<13} {'pre':>6} {'during':>7}   "
              f"{'substitute':<10} {'pre':>6} {'during':>7}"]
    for s in stats:
        sub = ""
        if s.substitute is not None:
            sub = f"{s.substitute:<10} {s.substitute_pre:6.3f} {s.substitute_during:7.3f}"
        lines.append(f"  {s.agent:<10} {f'{s.start}-{s.end}':<13} {s.pre:6.3f} {s.during:7.3f}   {sub}")
    return "\n".join(lines) + "\n"


def write_outputs(out: str | Path, scenario: Scenario, metrics: RunMetrics, exploration: bool,
                  schedule: DisruptionSchedule | None = None, stride: int = 1,
                  seed: int | None = None) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    schedule = scenario.schedule if schedule is None else schedule
    header, rows = metrics_rows(metrics, stride)
    with open(out / METRICS_FILE, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    (out / EVENTS_FILE).write_text(metrics.events_text())
    stats = utilization_transfer(metrics, schedule, scenario.options.window)
    (out / SUMMARY_FILE).write_text(render_summary(scenario, metrics, exploration, stats))
    (out / PLOT_FILE).write_text(gnuplot_script(header, schedule, scenario.name))
    run_doc = {
        "scenario": scenario.name,
        "topology": topology_key(scenario),
        "exploration": exploration,
        "seed": seed,
        "horizon": metrics.horizon,
        "stride": stride,
        "released": metrics.released,
        "completed": metrics.completed_parts,
        "failed": metrics.failed_parts,
        "windows": [asdict(s) for s in stats],
    }
    (out / RUN_FILE).write_text(json.dumps(run_doc, indent=2, sort_keys=True) + "\n")
    return out


# -- comparison ----------------------------------------------------------------

@dataclass(frozen=True)
class EventCounts:
    released: int
    completed: int
    failed: int


def count_events(path: str | Path) -> EventCounts:
    """Recount part outcomes straight from an event log."""
    released = completed = failed = 0
    with open(path) as fh:
        for line in fh:
            kind = json.loads(line)["kind"]
            if kind == "release":
                released += 1
            elif kind == "part-completed":
                completed += 1
            elif kind == "part-failed":
                failed += 1
    return EventCounts(released, completed, failed)


def _read_series(path: Path) -> tuple[list[int], list[int], dict[str, list[float]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ticks, completed = [], []
        util: dict[str, list[float]] = {h[len("util_"):]: [] for h in header[2:]}
        names = list(util)
        for row in reader:
            ticks.append(int(row[0]))
            completed.append(int(row[1]))
            for name, value in zip(names, row[2:]):
                util[name].append(float(value))
    return ticks, completed, util


@dataclass(frozen=True)
class Comparison:
    a: EventCounts
    b: EventCounts
    ticks: list[int]
    throughput_delta: list[int]
    window_deltas: list[tuple[str, int, int, str, float]]  # (breakdown agent, start, end, agent, delta)

    @property
    def completed_delta(self) -> int:
        return self.b.completed - self.a.completed

    @property
    def failed_delta(self) -> int:
        return self.b.failed - self.a.failed

    def render(self, label_a: str = "A", label_b: str = "B") -> str:
        lines = [f"{'':<12} {label_a:>10} {label_b:>10} {'delta':>8}"]
        for name in ("released", "completed", "failed"):
            va, vb = getattr(self.a, name), getattr(self.b, name)
            lines.append(f"{name:<12} {va:>10} {vb:>10} {vb - va:>+8}")
        if self.ticks:
            worst = min(self.throughput_delta)
            best = max(self.throughput_delta)
            lines.append(f"throughput delta range over {len(self.ticks)} samples: {worst:+d} .. {best:+d}")
            lines.append(f"final cumulative delta: {self.throughput_delta[-1]:+d}")
        if self.window_deltas:
            lines.append("utilization deltas over breakdown windows (B - A):")
            for agent, start, end, who, delta in self.window_deltas:
                lines.append(f"  {agent:<8} {start}-{end:<8} {who:<8} {delta:+.3f}")
        return "\n".join(lines) + "\n"


def compare(dir_a: str | Path, dir_b: str | Path) -> Comparison:
    dir_a, dir_b = Path(dir_a), Path(dir_b)
    for d in (dir_a, dir_b):
        for name in (RUN_FILE, EVENTS_FILE, METRICS_FILE):
            if not (d / name).exists():
                raise FileNotFoundError(f"{d / name} missing; is {d} a run directory?")
    run_a = json.loads((dir_a / RUN_FILE).read_text())
    run_b = json.loads((dir_b / RUN_FILE).read_text())
    if run_a["topology"] != run_b["topology"]:
        raise IncompatibleRuns(
            f"runs use different layouts ({run_a['scenario']} vs {run_b['scenario']})")
    ticks_a, comp_a, util_a = _read_series(dir_a / METRICS_FILE)
    ticks_b, comp_b, util_b = _read_series(dir_b / METRICS_FILE)
    if ticks_a != ticks_b:
        raise IncompatibleRuns("runs were sampled at different ticks (horizon or stride differ)")
    deltas = [b - a for a, b in zip(comp_a, comp_b)]
    index = {t: i for i, t in enumerate(ticks_a)}
    window_deltas = []
    for w in run_a["windows"]:
        lo = [index[t] for t in ticks_a if w["start"] <= t < w["end"]]
        if not lo:
            continue
        involved = [w["agent"]] + [x for x in (w.get("substitute"),) if x]
        for other in run_b["windows"]:
            if other["agent"] == w["agent"] and other["start"] == w["start"] and other.get("substitute"):
                involved.append(other["substitute"])
        for who in dict.fromkeys(involved):
            ua, ub = util_a.get(who), util_b.get(who)
            if ua is None or ub is None:
                continue
            delta = mean(ub[i] for i in lo) - mean(ua[i] for i in lo)
            window_deltas.append((w["agent"], w["start"], w["end"], who, delta))
    return Comparison(count_events(dir_a / EVENTS_FILE), count_events(dir_b / EVENTS_FILE),
                      ticks_a, deltas, window_deltas)
