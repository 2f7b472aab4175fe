"""Command line front end.

``parley run`` executes a scenario and reports one line per task;
``parley validate`` just parses and resolves; ``parley dump-protocol``
prints the role machines of a bundled or on-disk protocol document.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import ParleyError, ParseError, UnresolvedReferenceError
from .fixtures import protocol_path, scenario_path
from .model import Protocol, load_protocol
from .runtime import write_trace
from .scenario import (
    JOINT,
    MIXED,
    SEQUENTIAL,
    Scenario,
    parse_scenario,
    run_scenario,
)

MODE_ALIASES = {
    "joint": JOINT,
    "seq": SEQUENTIAL,
    "mixed": MIXED,
}


def _find_scenario(name: str) -> Path:
    candidate = Path(name)
    if candidate.exists():
        return candidate
    bundled = scenario_path(candidate.stem)
    if bundled.exists():
        return bundled
    raise ParseError(f"no scenario file or bundled scenario named {name!r}")


def _find_protocol(name: str) -> Path:
    candidate = Path(name)
    if candidate.exists():
        return candidate
    bundled = protocol_path(candidate.stem)
    if bundled.exists():
        return bundled
    raise ParseError(f"no protocol file or bundled protocol named {name!r}")


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.mode is not None:
        changes["selection_mode"] = MODE_ALIASES[args.mode]
    if args.max_ticks is not None:
        changes["max_ticks"] = args.max_ticks
    if not changes:
        return scenario
    scenario = dataclasses.replace(scenario, **changes)
    if scenario.selection_mode != JOINT:
        for task in scenario.tasks:
            named = {a for agents in task.participants.values() for a in agents}
            if len(named) != 1:
                raise UnresolvedReferenceError(
                    f"task {task.task_id}: cannot switch to "
                    f"{scenario.selection_mode} with {len(named)} named "
                    f"participants (need exactly one)"
                )
    return scenario


def cmd_run(args) -> int:
    path = _find_scenario(args.scenario)
    scenario = _apply_overrides(parse_scenario(path), args)
    trace, summary = run_scenario(scenario, base_dir=path.parent)
    if args.trace:
        write_trace(trace, args.trace)
    print(f"{summary.scenario_id}: mode={summary.selection_mode} "
          f"seed={summary.seed} ticks={summary.ticks} events={len(trace)}")
    for task in summary.tasks:
        detail = json.dumps(task.detail, sort_keys=True) if task.detail else "{}"
        print(f"  task {task.task_id}: {task.outcome} "
              f"messages={task.messages} recoveries={task.recoveries} {detail}")
    return 0 if summary.all_terminated else 1


def cmd_validate(args) -> int:
    path = _find_scenario(args.scenario)
    scenario = parse_scenario(path)
    print(f"{scenario.scenario_id}: ok "
          f"({len(scenario.agents)} agents, {len(scenario.tasks)} tasks, "
          f"{len(scenario.protocols)} protocols)")
    return 0


def _dump_protocol(protocol: Protocol) -> None:
    print(f"protocol {protocol.protocol_id} "
          f"capabilities={sorted(protocol.capability_tags)}")
    for schema in protocol.schemas.values():
        print(f"  schema {schema.schema_id}: {schema.performative} "
              f"{json.dumps(schema.content_pattern, sort_keys=True)}")
    for role_id in sorted(protocol.roles):
        machine = protocol.roles[role_id]
        head = f"  role {role_id} [{machine.kind.value} x{machine.multiplicity}]"
        if machine.father:
            head += f" father={machine.father}"
        print(head)
        print(f"    states: {machine.initial_state} -> "
              f"{sorted(machine.terminal_states)}")
        for t in machine.transitions:
            trig = t.trigger
            if trig.kind == "receive":
                left = f"receive {trig.schema_id}"
            else:
                left = f"internal {trig.variable}"
            act = t.action
            if act.kind == "send":
                right = f"send {act.schema_id}"
            elif act.kind == "data_change":
                right = f"set {act.variable}"
            else:
                right = "-"
            print(f"    {t.from_state} --{t.method}: {left} / {right}--> {t.to_state}")


def cmd_dump_protocol(args) -> int:
    _dump_protocol(load_protocol(_find_protocol(args.protocol)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parley",
        description="Run protocol-selection scenarios on the simulated message bus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a scenario and print a per-task report")
    run_p.add_argument("scenario", help="scenario file or bundled scenario name")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--trace", default=None, help="write the JSON Lines trace here")
    run_p.add_argument("--mode", choices=sorted(MODE_ALIASES), default=None,
                       help="override the selection mode")
    run_p.add_argument("--max-ticks", type=int, default=None, dest="max_ticks",
                       help="override the tick budget")
    run_p.set_defaults(func=cmd_run)

    val_p = sub.add_parser("validate", help="parse a scenario and resolve every reference")
    val_p.add_argument("scenario", help="scenario file or bundled scenario name")
    val_p.set_defaults(func=cmd_validate)

    dump_p = sub.add_parser("dump-protocol", help="print the role machines of a protocol")
    dump_p.add_argument("protocol", help="protocol file or bundled protocol name")
    dump_p.set_defaults(func=cmd_dump_protocol)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, UnresolvedReferenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ParleyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
