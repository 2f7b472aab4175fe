"""Protocol documents: classification, validation, serde."""

from __future__ import annotations

import json

import pytest

from parley.errors import CompositeProtocolError, ParseError, UnknownRoleError
from parley.model import (
    MANY,
    Action,
    CompatibilityTable,
    InteractionModel,
    MessageSchema,
    Message,
    Protocol,
    ProtocolCategory,
    RoleKind,
    RoleRef,
    RoleStateMachine,
    TaskDescription,
    Transition,
    Trigger,
    classify_protocol,
    compatible,
    is_control_performative,
    is_domain_performative,
    is_selection_performative,
    load_protocol,
    match_task_to_protocols,
    protocol_from_dict,
    protocol_to_dict,
    validate_protocol,
)

from .helpers import one_n_protocol, one_one_n_protocol, one_one_protocol


def test_role_ref_renders_and_parses():
    ref = RoleRef("ips", "replier")
    assert str(ref) == "ips:replier"
    assert RoleRef.parse("ips:replier") == ref
    for bad in ("noseparator", ":role", "proto:"):
        with pytest.raises(ParseError):
            RoleRef.parse(bad)


def test_performative_families_are_disjoint():
    assert is_selection_performative("ready-to-select")
    assert is_control_performative("recover-at")
    assert is_domain_performative("ask-one")
    assert not is_domain_performative("stop-selection")
    assert not is_domain_performative("termination-warning")


class TestClassification:
    def test_three_shapes(self):
        assert classify_protocol(one_one_protocol("p")) is ProtocolCategory.ONE_ONE
        assert classify_protocol(one_one_n_protocol("p")) is ProtocolCategory.ONE_ONE_N
        one_n = one_n_protocol("p", {"x": None, "y": None})
        assert classify_protocol(one_n) is ProtocolCategory.ONE_N

    def test_mixed_traits_rejected(self):
        base = one_n_protocol("p", {"x": None, "y": None})
        crowd = base.roles["y"]
        mixed = Protocol(
            protocol_id="p",
            capability_tags=base.capability_tags,
            schemas=base.schemas,
            roles={
                **base.roles,
                "y": RoleStateMachine(
                    role_id="y",
                    kind=crowd.kind,
                    multiplicity=MANY,
                    states=crowd.states,
                    initial_state=crowd.initial_state,
                    terminal_states=crowd.terminal_states,
                    transitions=crowd.transitions,
                ),
            },
        )
        with pytest.raises(CompositeProtocolError):
            classify_protocol(mixed)

    def test_missing_initiator_rejected(self):
        base = one_one_protocol("p")
        only_participant = Protocol(
            protocol_id="p",
            capability_tags=base.capability_tags,
            schemas=base.schemas,
            roles={"replier": base.roles["replier"]},
        )
        with pytest.raises(CompositeProtocolError):
            classify_protocol(only_participant)


class TestValidation:
    def test_builders_produce_clean_protocols(self):
        assert validate_protocol(one_one_protocol("p")) == []
        assert validate_protocol(one_one_n_protocol("p")) == []
        assert validate_protocol(one_n_protocol("p", {"x": None, "y": "x"})) == []

    def test_reserved_performative_flagged(self):
        base = one_one_protocol("p")
        poisoned = Protocol(
            protocol_id="p",
            capability_tags=base.capability_tags,
            schemas={
                **base.schemas,
                "meta": MessageSchema(
                    schema_id="meta",
                    performative="stop-selection",
                    content_pattern={},
                ),
            },
            roles=base.roles,
        )
        codes = {v.code for v in validate_protocol(poisoned)}
        assert "reserved-performative" in codes

    def test_dangling_schema_and_state_refs_flagged(self):
        machine = RoleStateMachine(
            role_id="r",
            kind=RoleKind.INITIATOR,
            multiplicity=1,
            states=frozenset({"s0", "lonely", "done"}),
            initial_state="s0",
            terminal_states=frozenset({"done"}),
            transitions=(
                Transition(
                    "s0",
                    Trigger(kind="internal", variable="task"),
                    Action(kind="send", schema_id="ghost"),
                    "done",
                    "m1",
                ),
                Transition(
                    "done",
                    Trigger(kind="internal", variable="x"),
                    Action(kind="none"),
                    "done",
                    "m2",
                ),
            ),
        )
        protocol = Protocol(
            protocol_id="p",
            capability_tags=frozenset(),
            schemas={},
            roles={"r": machine},
        )
        codes = {v.code for v in validate_protocol(protocol)}
        assert {"bad-schema-ref", "terminal-outgoing", "unreachable-state"} <= codes

    def test_first_transition_direction_checked(self):
        base = one_one_protocol("p")
        asker = base.roles["asker"]
        backwards = RoleStateMachine(
            role_id="asker",
            kind=RoleKind.INITIATOR,
            multiplicity=1,
            states=asker.states,
            initial_state=asker.initial_state,
            terminal_states=asker.terminal_states,
            transitions=(
                Transition(
                    "s0",
                    Trigger(kind="receive", schema_id="reply"),
                    Action(kind="none"),
                    "s1",
                    "m1",
                ),
            )
            + asker.transitions[1:],
        )
        protocol = Protocol(
            protocol_id="p",
            capability_tags=base.capability_tags,
            schemas=base.schemas,
            roles={**base.roles, "asker": backwards},
        )
        codes = {v.code for v in validate_protocol(protocol)}
        assert "bad-first-action" in codes


def test_schema_structure_vs_content():
    schema = MessageSchema(
        schema_id="tell", performative="tell", content_pattern={"value": "?number"}
    )

    def msg(content, performative="tell", language="kv"):
        return Message(
            performative=performative,
            content=content,
            language=language,
            ontology="core",
            sender="a",
            receiver="b",
            conversation_id="c",
        )

    assert schema.content_matches(msg({"value": 3}))
    assert schema.structure_matches(msg({"value": "three"}))
    assert not schema.content_matches(msg({"value": "three"}))
    assert not schema.structure_matches(msg({"other": 3}))
    assert not schema.structure_matches(msg({"value": 3}, performative="ask-one"))
    assert not schema.structure_matches(msg({"value": 3}, language="prolog"))


def test_task_matching_filters_and_sorts():
    registry = {
        "zeta": one_one_protocol("zeta", tags=("query", "extra")),
        "alpha": one_one_protocol("alpha", tags=("query",)),
        "other": one_one_protocol("other", tags=("archive",)),
        "unenacted": one_one_protocol("unenacted", tags=("query",)),
    }
    model = InteractionModel()
    model.extend("zeta", ["asker"])
    model.extend("alpha", ["asker"])
    model.extend("other", ["asker"])
    model.extend("unenacted", ["replier"])  # can answer but not drive
    task = TaskDescription(task_id="t", required_capabilities=frozenset({"query"}))
    found = match_task_to_protocols(task, model, registry)
    assert [(p.protocol_id, role) for p, role in found] == [
        ("alpha", "asker"),
        ("zeta", "asker"),
    ]


def test_compatibility_reflexive_directed_and_strict():
    a = RoleRef("ips", "asker")
    b = RoleRef("request", "replier")
    table = CompatibilityTable(pairs=frozenset({(a, b)}))
    assert compatible(a, a, table)
    assert compatible(a, b, table)
    assert not compatible(b, a, table)
    strict = CompatibilityTable(pairs=frozenset({(a, b)}), known_roles=frozenset({a, b}))
    with pytest.raises(UnknownRoleError):
        compatible(a, RoleRef("nowhere", "nobody"), strict)


def test_interaction_model_accumulates():
    model = InteractionModel()
    model.extend("ips", ["replier"])
    model.extend("ips", ["asker"])
    assert model.enacts(RoleRef("ips", "asker"))
    assert not model.enacts(RoleRef("ips", "stranger"))
    assert model.role_refs() == [RoleRef("ips", "asker"), RoleRef("ips", "replier")]


class TestSerde:
    def test_round_trip_preserves_everything(self):
        for protocol in (
            one_one_protocol("p1"),
            one_one_n_protocol("p2"),
            one_n_protocol("p3", {"x": None, "y": "x"}),
        ):
            raw = json.loads(json.dumps(protocol_to_dict(protocol)))
            assert protocol_from_dict(raw) == protocol

    def test_omega_carried_opaquely(self):
        base = one_one_protocol("p")
        noted = Protocol(
            protocol_id=base.protocol_id,
            capability_tags=base.capability_tags,
            schemas=base.schemas,
            roles=base.roles,
            omega={"annotation": ["anything", 1]},
        )
        again = protocol_from_dict(protocol_to_dict(noted))
        assert again.omega == {"annotation": ["anything", 1]}

    def test_malformed_documents_raise_parse_error(self, tmp_path):
        with pytest.raises(ParseError):
            protocol_from_dict({"protocol_id": "p"})  # no schemas/roles
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ParseError):
            load_protocol(bad)

    def test_load_from_file(self, tmp_path):
        protocol = one_one_protocol("disk")
        path = tmp_path / "disk.json"
        path.write_text(json.dumps(protocol_to_dict(protocol)))
        assert load_protocol(path) == protocol
