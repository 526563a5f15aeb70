"""Command-line front end: ``mascap run | compare | validate``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .engine import ScenarioInvalid, Simulation, make_policy
from .report import IncompatibleRuns, compare, write_outputs
from .scenario import ScenarioError, load_scenario, validate_scenario

log = logging.getLogger("mascap")


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mascap", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and write outputs")
    run.add_argument("--scenario", required=True, help="scenario file or bundled name")
    run.add_argument("--exploration", type=_on_off, default=None, metavar="{on,off}")
    run.add_argument("--policy", choices=("builtin", "service"), default=None)
    run.add_argument("--service-url", default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default="out")
    run.add_argument("--horizon", type=int, default=None)
    run.add_argument("--stride", type=int, default=1, help="ticks between metrics.csv rows")
    run.add_argument("--export-snapshot", type=int, default=None, metavar="TICK",
                     help="also write the controller's knowledge snapshot at TICK")

    cmp = sub.add_parser("compare", help="compare two run directories")
    cmp.add_argument("run_a")
    cmp.add_argument("run_b")

    val = sub.add_parser("validate", help="lint a scenario file")
    val.add_argument("path")
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None and args.seed < 0:
        raise ScenarioInvalid("seed must be non-negative")
    policy = make_policy(scenario, args.policy, args.service_url)
    out = Path(args.out)
    hook = None
    if args.export_snapshot is not None:
        wanted = args.export_snapshot

        def hook(snapshot):
            if snapshot.tick == wanted:
                out.mkdir(parents=True, exist_ok=True)
                (out / f"snapshot-{wanted}.json").write_text(snapshot.dumps() + "\n")

    started = time.perf_counter()
    sim = Simulation(scenario, policy, args.exploration, args.horizon, args.seed, on_snapshot=hook)
    metrics = sim.run()
    write_outputs(out, scenario, metrics, sim.exploration, sim.schedule, args.stride, sim.seed)
    log.info("run took %.2fs", time.perf_counter() - started)
    print(f"{scenario.name}: exploration {'on' if sim.exploration else 'off'}, "
          f"completed {metrics.completed_parts}/{metrics.released}, failed {metrics.failed_parts}, "
          f"outputs in {out}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    result = compare(args.run_a, args.run_b)
    print(result.render(Path(args.run_a).name or "A", Path(args.run_b).name or "B"), end="")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.path)  # raises with the full problem list
    assert not validate_scenario(scenario)
    print(f"{args.path}: ok ({scenario.name}, {scenario.part_count} parts)")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "compare": cmd_compare, "validate": cmd_validate}
    try:
        return handlers[args.command](args)
    except (ScenarioError, IncompatibleRuns) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
