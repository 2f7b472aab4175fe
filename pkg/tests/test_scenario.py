"""Scenario files: parsing, reference resolution, golden runs, CLI."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from parley.cli import main as cli_main
from parley.errors import ParseError, UnresolvedReferenceError
from parley.fixtures import scenario_path
from parley.runtime import render_trace
from parley.scenario import (
    JOINT,
    MIXED,
    SEQUENTIAL,
    parse_scenario,
    run_scenario,
    scenario_from_dict,
    scenario_to_dict,
    serialize_scenario,
)

DATA = Path(__file__).parent / "data"

BUNDLED = (
    "t1_joint",
    "t1_joint_refusal",
    "t2_sequential_fault",
    "t2_mixed_fault",
    "cnp_largest_set",
    "auction_tree",
)


def minimal_raw(**overrides):
    raw = {
        "scenario_id": "mini",
        "seed": 1,
        "selection_mode": "joint",
        "protocols": ["ips"],
        "agents": [
            {"id": "boss", "enacts": {"ips": ["asker"]}},
            {"id": "helper", "enacts": {"ips": ["replier"]}},
        ],
        "tasks": [
            {
                "id": "job",
                "initiator": "boss",
                "capabilities": ["document-query"],
                "participants": {"ips": ["helper"]},
            }
        ],
    }
    raw.update(overrides)
    return raw


class TestParsing:
    def test_bundled_scenarios_all_parse(self):
        for name in BUNDLED:
            scenario = parse_scenario(scenario_path(name))
            assert scenario.scenario_id == name
            assert scenario.agents and scenario.tasks

    def test_defaults(self):
        scenario = scenario_from_dict(minimal_raw())
        assert scenario.reply_deadline == 10
        assert scenario.max_ticks == 200
        assert scenario.exploration == "protocol-oriented"
        assert scenario.faults == ()
        assert scenario.agents[0].willing is True
        assert scenario.agents[0].behavior == "auto"

    def test_missing_file(self):
        with pytest.raises(ParseError):
            parse_scenario("/nowhere/else.json")

    def test_invalid_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope", encoding="utf-8")
        with pytest.raises(ParseError):
            parse_scenario(bad)

    def test_unknown_mode(self):
        with pytest.raises(ParseError):
            scenario_from_dict(minimal_raw(selection_mode="telepathy"))

    def test_unknown_exploration(self):
        with pytest.raises(ParseError):
            scenario_from_dict(minimal_raw(exploration="depth-first"))

    def test_unknown_behavior(self):
        raw = minimal_raw()
        raw["agents"][1]["behavior"] = "chatty"
        with pytest.raises(ParseError):
            scenario_from_dict(raw)

    def test_missing_required_key(self):
        raw = minimal_raw()
        del raw["tasks"]
        with pytest.raises(ParseError):
            scenario_from_dict(raw)

    def test_bad_fault_op(self):
        raw = minimal_raw(
            faults=[{"conversation": "*", "ordinal": 1, "op": "teleport"}]
        )
        with pytest.raises(ParseError):
            scenario_from_dict(raw)


class TestResolution:
    def _write(self, tmp_path, raw):
        path = tmp_path / "s.json"
        path.write_text(json.dumps(raw), encoding="utf-8")
        return path

    def test_unknown_protocol_in_enacts(self, tmp_path):
        raw = minimal_raw()
        raw["agents"][1]["enacts"]["mystery"] = ["replier"]
        with pytest.raises(UnresolvedReferenceError):
            parse_scenario(self._write(tmp_path, raw))

    def test_unknown_role_in_enacts(self, tmp_path):
        raw = minimal_raw()
        raw["agents"][1]["enacts"]["ips"] = ["king"]
        with pytest.raises(UnresolvedReferenceError):
            parse_scenario(self._write(tmp_path, raw))

    def test_unknown_initiator(self, tmp_path):
        raw = minimal_raw()
        raw["tasks"][0]["initiator"] = "nobody"
        with pytest.raises(UnresolvedReferenceError):
            parse_scenario(self._write(tmp_path, raw))

    def test_unknown_participant(self, tmp_path):
        raw = minimal_raw()
        raw["tasks"][0]["participants"]["ips"] = ["stranger"]
        with pytest.raises(UnresolvedReferenceError):
            parse_scenario(self._write(tmp_path, raw))

    def test_duplicate_agent_ids(self, tmp_path):
        raw = minimal_raw()
        raw["agents"].append({"id": "helper", "enacts": {}})
        with pytest.raises(ParseError):
            parse_scenario(self._write(tmp_path, raw))

    def test_individual_mode_needs_exactly_one_participant(self, tmp_path):
        raw = minimal_raw(selection_mode=SEQUENTIAL)
        raw["agents"].append({"id": "extra", "enacts": {"ips": ["replier"]}})
        raw["tasks"][0]["participants"]["ips"] = ["helper", "extra"]
        with pytest.raises(UnresolvedReferenceError):
            parse_scenario(self._write(tmp_path, raw))

    def test_bad_compatibility_reference(self, tmp_path):
        raw = minimal_raw(compatibility=[["ips:asker", "ips:phantom"]])
        with pytest.raises(UnresolvedReferenceError):
            parse_scenario(self._write(tmp_path, raw))


class TestSerialization:
    @pytest.mark.parametrize("name", BUNDLED)
    def test_parse_serialize_parse_identity(self, name, tmp_path):
        original = parse_scenario(scenario_path(name))
        out = tmp_path / "echo.json"
        serialize_scenario(original, out)
        assert parse_scenario(out) == original

    def test_to_dict_keeps_only_non_defaults(self):
        raw = scenario_to_dict(scenario_from_dict(minimal_raw()))
        assert "reply_deadline" not in raw
        assert "max_ticks" not in raw
        assert "exploration" not in raw
        assert "faults" not in raw
        assert "willing" not in raw["agents"][0]


def recount_from_trace(trace, conversations):
    messages = sum(
        1
        for e in trace
        if e.kind == "send"
        and e.payload.get("conversation") in conversations
        and e.payload.get("from") != e.payload.get("to")
    )
    recoveries = sum(
        1
        for e in trace
        if e.kind == "recovery" and e.payload.get("conversation") in conversations
    )
    return messages, recoveries


class TestGoldenRuns:
    """Every bundled scenario replays byte-identically to its frozen trace.

    The traces under tests/data/ were produced by the first full run of
    each scenario (scripts/regen_goldens.py checks the narrative before
    freezing); these tests pin them.
    """

    @pytest.mark.parametrize("name", BUNDLED)
    def test_trace_bytes(self, name):
        scenario = parse_scenario(scenario_path(name))
        trace, _ = run_scenario(scenario)
        frozen = (DATA / f"{name}.trace.jsonl").read_text(encoding="utf-8")
        assert render_trace(trace) == frozen

    @pytest.mark.parametrize("name", BUNDLED)
    def test_summary_counts_match_trace(self, name):
        scenario = parse_scenario(scenario_path(name))
        trace, summary = run_scenario(scenario)
        for task_summary, task in zip(summary.tasks, scenario.tasks):
            if scenario.selection_mode == JOINT:
                convs = {f"{task.task_id}!select"}
            else:
                participant = next(
                    a for agents in task.participants.values() for a in agents
                )
                convs = {f"{task.task_id}/{participant}"}
            messages, recoveries = recount_from_trace(trace, convs)
            assert task_summary.messages == messages
            assert task_summary.recoveries == recoveries

    @pytest.mark.parametrize("name", BUNDLED)
    def test_frozen_summary(self, name):
        scenario = parse_scenario(scenario_path(name))
        trace, summary = run_scenario(scenario)
        frozen = json.loads((DATA / f"{name}.summary.json").read_text(encoding="utf-8"))
        assert frozen["events"] == len(trace)
        assert frozen["ticks"] == summary.ticks
        for got, want in zip(summary.tasks, frozen["tasks"]):
            assert got.task_id == want["task_id"]
            assert got.outcome == want["outcome"]
            assert got.messages == want["messages"]
            assert got.recoveries == want["recoveries"]
            assert got.terminated == want["terminated"]

    @pytest.mark.parametrize("name", BUNDLED)
    def test_every_delivery_has_a_send(self, name):
        trace, _ = run_scenario(parse_scenario(scenario_path(name)))
        sent = {e.payload["seq"] for e in trace if e.kind == "send"}
        for e in trace:
            if e.kind == "deliver":
                assert e.payload["seq"] in sent


class TestCli:
    def test_run_bundled_by_name(self, capsys):
        assert cli_main(["run", "t1_joint"]) == 0
        out = capsys.readouterr().out
        assert "task t1: selected" in out

    def test_run_exit_one_when_a_task_fails(self):
        assert cli_main(["run", "t1_joint_refusal"]) == 1

    def test_run_writes_trace_file(self, tmp_path, capsys):
        out = tmp_path / "run.jsonl"
        assert cli_main(["run", "t2_mixed_fault", "--trace", str(out)]) == 0
        capsys.readouterr()
        frozen = (DATA / "t2_mixed_fault.trace.jsonl").read_text(encoding="utf-8")
        assert out.read_text(encoding="utf-8") == frozen

    def test_run_seed_override(self, capsys):
        assert cli_main(["run", "t1_joint", "--seed", "99"]) == 0
        assert "seed=99" in capsys.readouterr().out

    def test_run_mode_override_guard(self, capsys):
        assert cli_main(["run", "t1_joint", "--mode", "seq"]) == 2
        assert "need exactly one" in capsys.readouterr().err

    def test_run_mode_override_crossover(self, capsys):
        code = cli_main(["run", "t2_sequential_fault", "--mode", "mixed", "--seed", "3"])
        assert code == 0
        assert "concluded" in capsys.readouterr().out

    def test_validate_ok(self, capsys):
        assert cli_main(["validate", "cnp_largest_set"]) == 0
        assert "ok" in capsys.readouterr().out

    def test_validate_broken(self, tmp_path, capsys):
        raw = minimal_raw()
        raw["tasks"][0]["initiator"] = "nobody"
        path = tmp_path / "broken.json"
        path.write_text(json.dumps(raw), encoding="utf-8")
        assert cli_main(["validate", str(path)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_scenario(self, capsys):
        assert cli_main(["run", "does_not_exist"]) == 2
        capsys.readouterr()

    def test_dump_protocol(self, capsys):
        assert cli_main(["dump-protocol", "attr_query"]) == 0
        out = capsys.readouterr().out
        assert "role querier" in out
        assert "aq-bail" in out


class TestDeterminism:
    def test_same_scenario_same_bytes(self):
        scenario = parse_scenario(scenario_path("t2_mixed_fault"))
        first, _ = run_scenario(scenario)
        second, _ = run_scenario(scenario)
        assert render_trace(first) == render_trace(second)

    def test_mode_constants_are_distinct(self):
        assert len({JOINT, SEQUENTIAL, MIXED}) == 3
