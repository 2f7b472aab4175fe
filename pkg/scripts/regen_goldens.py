#!/usr/bin/env python3
"""Regenerate the frozen golden traces under tests/data/.

Each golden is the full JSON Lines trace of one bundled scenario,
produced by a seeded run and then kept byte-for-byte.  Before freezing
anything this script re-checks the narrative that made the seed worth
keeping; if an edit to the engine breaks a predicate the script fails
instead of silently freezing a different story.

Run from the repository root:  python3 scripts/regen_goldens.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from parley.fixtures import scenario_path  # noqa: E402
from parley.runtime import render_trace  # noqa: E402
from parley.scenario import parse_scenario, run_scenario  # noqa: E402

DATA = ROOT / "tests" / "data"


def _error_kinds(trace):
    return [
        e.payload["content"]["kind"]
        for e in trace
        if e.kind == "send" and e.payload["performative"] == "error-notify"
    ]


def check_t1_joint(trace, summary):
    task = summary.tasks[0]
    assert task.outcome == "selected", task
    assert task.detail == {
        "protocol": "ips",
        "role": "ips:replier",
        "agent": "d4",
    }, task.detail
    assert task.recoveries == 0
    solved = [e for e in trace if e.kind == "selection" and e.payload.get("step") == "solved"]
    assert len(solved) == 1
    # the story: d1 never answers (deadline), d2 declines, d4 accepts
    stops = [e.payload["to"] for e in trace
             if e.kind == "send" and e.payload["performative"] == "stop-selection"]
    assert "d1" in stops, stops
    unable = [e.payload["from"] for e in trace
              if e.kind == "send" and e.payload["performative"] == "unable-to-select"]
    assert unable == ["d2"], unable


def check_t1_joint_refusal(trace, summary):
    task = summary.tasks[0]
    assert task.outcome == "failure", task
    assert task.detail == {"reason": "exhausted"}
    assert not summary.all_terminated


def check_t2_sequential_fault(trace, summary):
    task = summary.tasks[0]
    assert task.outcome == "concluded" and task.detail == {"final_state": "done"}, task
    assert sum(1 for e in trace if e.kind == "fault") == 1
    assert _error_kinds(trace) == ["wrong-content"]
    recoveries = [e for e in trace if e.kind == "recovery"]
    assert len(recoveries) == 1
    payload = recoveries[0].payload
    assert payload["action"] == "replacement"
    assert payload["purged"], "at least one candidate must be purged"
    notices = [e for e in trace
               if e.kind == "send" and e.payload["performative"] == "termination-notice"]
    assert len(notices) == 2, "termination must be mutual"
    assert task.terminated


def check_t2_mixed_fault(trace, summary):
    task = summary.tasks[0]
    assert task.outcome == "concluded" and task.detail == {"final_state": "done"}, task
    assert sum(1 for e in trace if e.kind == "fault") == 1
    assert "wrong-content" in _error_kinds(trace)
    recoveries = [e for e in trace if e.kind == "recovery"]
    assert len(recoveries) == 1
    payload = recoveries[0].payload
    assert payload["action"] == "reactivation" and payload["restart"] is True
    notices = [e for e in trace
               if e.kind == "send" and e.payload["performative"] == "termination-notice"]
    assert len(notices) == 2
    assert task.terminated


def check_cnp_largest_set(trace, summary):
    task = summary.tasks[0]
    assert task.outcome == "selected"
    assert task.detail["role"] == "cnp:contractor"
    assert task.detail["agents"] == ["a1", "a2", "a3"]
    stops = [e.payload["to"] for e in trace
             if e.kind == "send" and e.payload["performative"] == "stop-selection"]
    assert stops == ["a4"], stops


def check_auction_tree(trace, summary):
    task = summary.tasks[0]
    assert task.outcome == "selected"
    assignment = task.detail["assignment"]
    assert set(assignment) == {"auction:buyer", "auction:manager", "auction:seller"}
    assert len(set(assignment.values())) == 3, "allocation should be injective here"


GOLDENS = {
    "t1_joint": check_t1_joint,
    "t1_joint_refusal": check_t1_joint_refusal,
    "t2_sequential_fault": check_t2_sequential_fault,
    "t2_mixed_fault": check_t2_mixed_fault,
    "cnp_largest_set": check_cnp_largest_set,
    "auction_tree": check_auction_tree,
}


def main() -> int:
    DATA.mkdir(parents=True, exist_ok=True)
    for name, check in GOLDENS.items():
        scenario = parse_scenario(scenario_path(name))
        trace, summary = run_scenario(scenario)
        check(trace, summary)
        out = DATA / f"{name}.trace.jsonl"
        out.write_text(render_trace(trace), encoding="utf-8")
        counts = {
            "tasks": [
                {
                    "task_id": t.task_id,
                    "outcome": t.outcome,
                    "messages": t.messages,
                    "recoveries": t.recoveries,
                    "terminated": t.terminated,
                }
                for t in summary.tasks
            ],
            "events": len(trace),
            "ticks": summary.ticks,
        }
        (DATA / f"{name}.summary.json").write_text(
            json.dumps(counts, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(f"{name}: {len(trace)} events -> {out.relative_to(ROOT)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
