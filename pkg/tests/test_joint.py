"""Candidate matrix exploration, arbitration rules and the 1-1 flow."""

from __future__ import annotations

from random import Random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parley.errors import (
    CyclicFatherRelationError,
    ProtocolViolationError,
    TransportDownError,
)
from parley.joint import (
    AGENT_ORIENTED,
    PROTOCOL_ORIENTED,
    CandidateMatrix,
    OneOneSolution,
    ParticipantMetaState,
    ReadyToSelectPayload,
    SelectionFailure,
    assign_roles_1_n,
    build_candidate_matrix,
    father_order,
    next_vector,
    offered_roles,
    participant_meta_step,
    run_joint_1_1,
    select_largest_set,
)
from parley.model import (
    CALL_FOR_COLLABORATION,
    NOTIFY_ASSIGNMENT,
    READY_TO_SELECT,
    STOP_SELECTION,
    UNABLE_TO_SELECT,
    CompatibilityTable,
    InteractionModel,
    Message,
    RoleRef,
    TaskDescription,
)

from .generators import forest_instances, largest_set_instances
from .helpers import one_n_protocol, one_one_protocol
from .oracles import (
    oracle_assignment_valid,
    oracle_injective_exists,
    oracle_largest_set,
)

TASK = TaskDescription(task_id="t1", required_capabilities=frozenset({"query"}))

# the canonical two-protocol / seven-agent incidence exercised throughout
INCIDENCES = {
    "ips": ["d1", "d2", "d4", "d5", "d7"],
    "request": ["d3", "d4", "d5", "d7"],
}


def canonical_matrix() -> CandidateMatrix:
    protocols = [(one_one_protocol(pid), "asker") for pid in sorted(INCIDENCES)]
    return build_candidate_matrix(TASK, protocols, INCIDENCES)


def _msg(performative: str, content: dict, sender: str = "q1") -> Message:
    return Message(
        performative=performative,
        content=content,
        language="kv",
        ontology="core",
        sender=sender,
        receiver="d1",
        conversation_id="t1/d1",
    )


# ---------------------------------------------------------------------------
# Matrix and exploration order
# ---------------------------------------------------------------------------


class TestMatrix:
    def test_rows_and_columns(self):
        matrix = canonical_matrix()
        assert matrix.protocols == ("ips", "request")
        assert matrix.agents == ("d1", "d2", "d3", "d4", "d5", "d7")
        assert matrix.row("ips") == ("d1", "d2", "d4", "d5", "d7")
        assert matrix.row("request") == ("d3", "d4", "d5", "d7")
        assert matrix.column("d4") == ("ips", "request")
        assert matrix.column("d3") == ("request",)

    def test_densest_row_explored_first(self):
        matrix = canonical_matrix()
        assert next_vector(matrix, PROTOCOL_ORIENTED, frozenset()) == "ips"
        assert next_vector(matrix, PROTOCOL_ORIENTED, {"ips"}) == "request"
        assert next_vector(matrix, PROTOCOL_ORIENTED, {"ips", "request"}) is None

    def test_agent_oriented_ties_break_lexicographically(self):
        matrix = canonical_matrix()
        # d4, d5, d7 each sit in both rows; d4 is the smallest label
        assert next_vector(matrix, AGENT_ORIENTED, frozenset()) == "d4"
        assert next_vector(matrix, AGENT_ORIENTED, {"d4"}) == "d5"

    def test_empty_vectors_never_selected(self):
        matrix = build_candidate_matrix(
            TASK,
            [(one_one_protocol("bare"), "asker"), (one_one_protocol("ips"), "asker")],
            {"ips": ["d1"]},
        )
        assert matrix.row("bare") == ()
        assert next_vector(matrix, PROTOCOL_ORIENTED, frozenset()) == "ips"
        assert next_vector(matrix, PROTOCOL_ORIENTED, {"ips"}) is None

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            next_vector(canonical_matrix(), "sideways", frozenset())


# ---------------------------------------------------------------------------
# Largest candidate set
# ---------------------------------------------------------------------------


def payload(*labels: str) -> ReadyToSelectPayload:
    return ReadyToSelectPayload(tuple(RoleRef.parse(lbl) for lbl in labels))


def as_plain(replies: dict[str, ReadyToSelectPayload]) -> dict[str, list[str]]:
    return {a: [str(r) for r in p.preferred_roles] for a, p in replies.items()}


class TestLargestSet:
    def test_partial_overlap_prefers_first_saved_set(self):
        # a2 backs both roles; neither side has more exclusive backers,
        # and no later group breaks the tie, so the smaller label wins
        # with its full backing.
        replies = {
            "a1": payload("many:rA"),
            "a2": payload("many:rA", "many:rB"),
            "a3": payload("many:rB"),
        }
        expected = (RoleRef("many", "rA"), frozenset({"a1", "a2"}))
        plain = oracle_largest_set(as_plain(replies), {"many"})
        assert plain == ("many:rA", frozenset({"a1", "a2"}))
        assert select_largest_set(replies, {"many"}) == expected

    def test_unanimous_role_wins_outright(self):
        replies = {
            "a1": payload("many:rB", "many:rA"),
            "a2": payload("many:rA"),
            "a3": payload("many:rA", "many:rC"),
        }
        got = select_largest_set(replies, {"many"})
        assert got == (RoleRef("many", "rA"), frozenset({"a1", "a2", "a3"}))

    def test_exclusive_backers_decide_within_a_group(self):
        # two equal-size sets always tie on exclusives (|A-B| = |B-A|
        # when |A| = |B|), so a decisive group needs three roles
        replies = {
            "a1": payload("many:rA"),
            "a2": payload("many:rA"),
            "a3": payload("many:rB"),
            "a4": payload("many:rB", "many:rC"),
            "a5": payload("many:rC"),
        }
        got = select_largest_set(replies, {"many"})
        assert got == (RoleRef("many", "rA"), frozenset({"a1", "a2"}))

    def test_trade_can_move_to_the_larger_label(self):
        replies = {
            "a1": payload("many:rA"),
            "a2": payload("many:rA", "many:rB"),
            "a3": payload("many:rA", "many:rB"),
            "a4": payload("many:rB", "many:rC"),
        }
        # {rA, rB} park as an exclusive tie; the size-1 group decides
        # rC = {a4}, and rB is the parked set overlapping it.
        got = select_largest_set(replies, {"many"})
        assert got == (RoleRef("many", "rB"), frozenset({"a2", "a3", "a4"}))

    def test_saved_group_traded_against_later_winner(self):
        replies = {
            "a1": payload("many:rA", "many:rC"),
            "a2": payload("many:rA", "many:rB"),
            "a3": payload("many:rB"),
        }
        # size-2 group {rA, rB} is an exclusive tie and gets parked;
        # size-1 group decides rC = {a1}; rA overlaps {a1} more than rB.
        got = select_largest_set(replies, {"many"})
        assert got == (RoleRef("many", "rA"), frozenset({"a1", "a2"}))

    def test_unidentified_protocols_filtered_out(self):
        replies = {
            "a1": payload("ghost:rZ", "many:rA"),
            "a2": payload("ghost:rZ", "many:rA"),
        }
        got = select_largest_set(replies, {"many"})
        assert got == (RoleRef("many", "rA"), frozenset({"a1", "a2"}))

    def test_nothing_selectable(self):
        assert select_largest_set({}, {"many"}) is None
        replies = {"a1": payload("ghost:rZ")}
        assert select_largest_set(replies, {"many"}) is None

    @settings(max_examples=300)
    @given(largest_set_instances())
    def test_agrees_with_oracle(self, instance):
        plain_replies, identified = instance
        replies = {a: payload(*labels) for a, labels in plain_replies.items()}
        expected = oracle_largest_set(plain_replies, identified)
        got = select_largest_set(replies, identified)
        if expected is None:
            assert got is None
        else:
            assert got is not None
            assert (str(got[0]), got[1]) == expected


# ---------------------------------------------------------------------------
# Father forest and role allocation
# ---------------------------------------------------------------------------


class TestFatherOrder:
    def test_chain_walks_from_the_top(self):
        protocol = one_n_protocol(
            "auction", {"seller": "manager", "manager": "buyer", "buyer": None}
        )
        assert father_order(protocol) == ["buyer", "manager", "seller"]

    def test_top_level_roles_sorted_then_children(self):
        protocol = one_n_protocol("cer", {"x": None, "y": "x", "z": None})
        assert father_order(protocol) == ["x", "z", "y"]

    def test_father_may_name_the_initiator(self):
        protocol = one_n_protocol("cer", {"x": "chair", "y": "x"})
        assert father_order(protocol) == ["x", "y"]

    def test_cycle_rejected(self):
        protocol = one_n_protocol("cer", {"x": "y", "y": "x"})
        with pytest.raises(CyclicFatherRelationError):
            father_order(protocol)

    def test_unknown_father_rejected(self):
        protocol = one_n_protocol("cer", {"x": "nobody"})
        with pytest.raises(CyclicFatherRelationError):
            father_order(protocol)


class TestAssignRoles:
    def test_draws_avoid_breaking_injectivity(self):
        # z is drawn first (top of the forest) and a naive draw of a or
        # b would force x and y to collide; every seed must route z to c.
        protocol = one_n_protocol("cer", {"z": None, "x": "z", "y": "z"})
        replies = {
            "a": payload("cer:z", "cer:x", "cer:y"),
            "b": payload("cer:z", "cer:x", "cer:y"),
            "c": payload("cer:z"),
        }
        for seed in range(25):
            got = assign_roles_1_n(replies, [protocol], Random(seed))
            assert got is not None
            assert got.assignment[RoleRef("cer", "z")] == "c"
            assert len(set(got.assignment.values())) == 3

    def test_singleton_rule_cascades(self):
        protocol = one_n_protocol("cer", {"x": None, "y": None, "z": None})
        replies = {
            "a": payload("cer:x", "cer:y", "cer:z"),
            "b": payload("cer:y", "cer:z"),
            "c": payload("cer:z"),
        }
        got = assign_roles_1_n(replies, [protocol], Random(0))
        assert got is not None
        assert got.assignment == {
            RoleRef("cer", "x"): "a",
            RoleRef("cer", "y"): "b",
            RoleRef("cer", "z"): "c",
        }

    def test_uncovered_role_drops_the_protocol(self):
        roomy = one_n_protocol("roomy", {"u": None, "v": None})
        gappy = one_n_protocol("gappy", {"u": None, "v": None})
        replies = {
            "a": payload("roomy:u", "gappy:u"),
            "b": payload("roomy:v"),
        }
        got = assign_roles_1_n(replies, [gappy, roomy], Random(3))
        assert got is not None
        assert got.protocol == "roomy"

    def test_fewest_collisions_wins_between_protocols(self):
        crowded = one_n_protocol("crowded", {"u": None, "v": None})
        roomy = one_n_protocol("roomy", {"u": None, "v": None})
        replies = {
            "a": payload("crowded:u", "crowded:v", "roomy:u"),
            "b": payload("roomy:v"),
        }
        got = assign_roles_1_n(replies, [crowded, roomy], Random(1))
        assert got is not None
        assert got.protocol == "roomy"
        assert got.agents == frozenset({"a", "b"})

    def test_collision_allowed_when_unavoidable(self):
        protocol = one_n_protocol("cer", {"x": None, "y": None})
        replies = {"a": payload("cer:x", "cer:y")}
        got = assign_roles_1_n(replies, [protocol], Random(0))
        assert got is not None
        assert got.assignment == {
            RoleRef("cer", "x"): "a",
            RoleRef("cer", "y"): "a",
        }

    def test_no_protocol_covered(self):
        protocol = one_n_protocol("cer", {"x": None, "y": None})
        assert assign_roles_1_n({"a": payload("cer:x")}, [protocol], Random(0)) is None

    @settings(max_examples=200)
    @given(forest_instances(), st.integers(min_value=0, max_value=2**32 - 1))
    def test_assignments_valid_and_injective_when_possible(self, instance, seed):
        fathers, plain_replies = instance
        protocol = one_n_protocol("cer", fathers)
        replies = {
            agent: payload(*[f"cer:{r}" for r in roles])
            for agent, roles in plain_replies.items()
        }
        got = assign_roles_1_n(replies, [protocol], Random(seed))
        assert got is not None
        candidates = {
            role: {a for a, roles in plain_replies.items() if role in roles}
            for role in fathers
        }
        assignment = {ref.role: agent for ref, agent in got.assignment.items()}
        assert oracle_assignment_valid(candidates, assignment)

    def test_same_seed_same_result(self):
        fathers = {"p1": None, "p2": "p1", "p3": None}
        protocol = one_n_protocol("cer", fathers)
        replies = {
            "a1": payload("cer:p1", "cer:p2", "cer:p3"),
            "a2": payload("cer:p1", "cer:p2", "cer:p3"),
            "a3": payload("cer:p2", "cer:p3"),
        }
        first = assign_roles_1_n(replies, [protocol], Random(42))
        second = assign_roles_1_n(replies, [protocol], Random(42))
        assert first == second


# ---------------------------------------------------------------------------
# Participant side
# ---------------------------------------------------------------------------


def _participant_world():
    registry = {"ips": one_one_protocol("ips"), "request": one_one_protocol("request")}
    model = InteractionModel()
    model.extend("ips", ["replier"])
    model.extend("request", ["replier"])
    table = CompatibilityTable(
        pairs=frozenset({(RoleRef("ips", "asker"), RoleRef("request", "replier"))})
    )
    return registry, model, table


class TestParticipantMeta:
    def test_call_answered_with_offer(self):
        registry, model, table = _participant_world()
        state, replies = participant_meta_step(
            ParticipantMetaState(),
            _msg(CALL_FOR_COLLABORATION, {"protocol": "ips", "task": "t1"}),
            model,
            table,
            registry,
            willing=lambda p, t: True,
        )
        assert state.phase == "offered"
        assert replies == [(READY_TO_SELECT, {"roles": ["ips:replier", "request:replier"]})]

    def test_compatibility_is_directional(self):
        registry, model, table = _participant_world()
        # request's initiator has no pairs pointing anywhere: only the
        # agent's own request role can be offered for a request call.
        _, replies = participant_meta_step(
            ParticipantMetaState(),
            _msg(CALL_FOR_COLLABORATION, {"protocol": "request", "task": "t1"}),
            model,
            table,
            registry,
            willing=lambda p, t: True,
        )
        assert replies == [(READY_TO_SELECT, {"roles": ["request:replier"]})]

    def test_preferences_rank_the_offer(self):
        registry, model, table = _participant_world()
        _, replies = participant_meta_step(
            ParticipantMetaState(),
            _msg(CALL_FOR_COLLABORATION, {"protocol": "ips", "task": "t1"}),
            model,
            table,
            registry,
            willing=lambda p, t: True,
            preferences=(RoleRef("request", "replier"),),
        )
        assert replies == [(READY_TO_SELECT, {"roles": ["request:replier", "ips:replier"]})]

    def test_unwilling_agent_declines(self):
        registry, model, table = _participant_world()
        state, replies = participant_meta_step(
            ParticipantMetaState(),
            _msg(CALL_FOR_COLLABORATION, {"protocol": "ips", "task": "t1"}),
            model,
            table,
            registry,
            willing=lambda p, t: False,
        )
        assert state.phase == "idle"
        assert replies == [(UNABLE_TO_SELECT, {"reason": "unwilling"})]

    def test_malformed_call_declines(self):
        registry, model, table = _participant_world()
        _, replies = participant_meta_step(
            ParticipantMetaState(),
            _msg(CALL_FOR_COLLABORATION, {"task": "t1"}),
            model,
            table,
            registry,
            willing=lambda p, t: True,
        )
        assert replies == [(UNABLE_TO_SELECT, {"reason": "malformed-call"})]

    def test_assignment_must_match_an_offer(self):
        registry, model, table = _participant_world()
        state, _ = participant_meta_step(
            ParticipantMetaState(),
            _msg(CALL_FOR_COLLABORATION, {"protocol": "ips", "task": "t1"}),
            model,
            table,
            registry,
            willing=lambda p, t: True,
        )
        state, replies = participant_meta_step(
            state,
            _msg(NOTIFY_ASSIGNMENT, {"role": "ips:replier"}),
            model,
            table,
            registry,
            willing=lambda p, t: True,
        )
        assert replies == []
        assert state.phase == "assigned"
        assert state.assignment == RoleRef("ips", "replier")

    def test_unoffered_assignment_rejected(self):
        registry, model, table = _participant_world()
        state, _ = participant_meta_step(
            ParticipantMetaState(),
            _msg(CALL_FOR_COLLABORATION, {"protocol": "request", "task": "t1"}),
            model,
            table,
            registry,
            willing=lambda p, t: True,
        )
        with pytest.raises(ProtocolViolationError):
            participant_meta_step(
                state,
                _msg(NOTIFY_ASSIGNMENT, {"role": "ips:replier"}),
                model,
                table,
                registry,
                willing=lambda p, t: True,
            )

    def test_stop_resets_the_thread(self):
        registry, model, table = _participant_world()
        state, _ = participant_meta_step(
            ParticipantMetaState(),
            _msg(CALL_FOR_COLLABORATION, {"protocol": "ips", "task": "t1"}),
            model,
            table,
            registry,
            willing=lambda p, t: True,
        )
        state, replies = participant_meta_step(
            state, _msg(STOP_SELECTION, {}), model, table, registry, lambda p, t: True
        )
        assert state.phase == "stopped"
        assert replies == []


# ---------------------------------------------------------------------------
# One-to-one run over a scripted transport
# ---------------------------------------------------------------------------


class ScriptedTransport:
    """Replays canned replies; records every outgoing call."""

    def __init__(self, script: dict[str, list[tuple[str, dict]]]):
        self.script = {agent: list(replies) for agent, replies in script.items()}
        self.log: list[tuple[str, str, str, dict]] = []
        self.down = False

    def ask(self, agent, performative, content):
        if self.down:
            raise TransportDownError(agent)
        self.log.append(("ask", agent, performative, content))
        return self.script[agent].pop(0)

    def tell(self, agent, performative, content):
        self.log.append(("tell", agent, performative, content))

    def message_count(self) -> int:
        # an ask carries a call and a reply; a tell is one message
        return sum(2 if kind == "ask" else 1 for kind, *_ in self.log)


def _registry():
    return {"ips": one_one_protocol("ips"), "request": one_one_protocol("request")}


class TestRunJoint11:
    def test_first_acceptable_agent_wins(self):
        ready = (READY_TO_SELECT, {"roles": ["ips:replier"]})
        unable = (UNABLE_TO_SELECT, {"reason": "unwilling"})
        transport = ScriptedTransport({"d1": [unable], "d2": [ready]})
        matrix = build_candidate_matrix(
            TASK, [(one_one_protocol("ips"), "asker")], {"ips": ["d1", "d2"]}
        )
        got = run_joint_1_1(TASK, matrix, transport, _registry())
        assert got == OneOneSolution(agent="d2", protocol="ips", role=RoleRef("ips", "replier"))
        # d1 was stopped, d2 was assigned, and nobody else was contacted
        assert ("tell", "d1", STOP_SELECTION, {}) in transport.log
        assert ("tell", "d2", NOTIFY_ASSIGNMENT, {"role": "ips:replier"}) in transport.log

    def test_initiator_roles_are_not_acceptable(self):
        # an offer listing only initiator-kind roles is declined
        ready = (READY_TO_SELECT, {"roles": ["ips:asker"]})
        transport = ScriptedTransport({"d1": [ready]})
        matrix = build_candidate_matrix(
            TASK, [(one_one_protocol("ips"), "asker")], {"ips": ["d1"]}
        )
        got = run_joint_1_1(TASK, matrix, transport, _registry())
        assert got == SelectionFailure(reason="exhausted")
        assert ("tell", "d1", STOP_SELECTION, {}) in transport.log

    def test_compatible_role_of_other_identified_protocol_accepted(self):
        ready = (READY_TO_SELECT, {"roles": ["request:replier"]})
        transport = ScriptedTransport({"d7": [ready]})
        matrix = build_candidate_matrix(
            TASK,
            [(one_one_protocol("ips"), "asker"), (one_one_protocol("request"), "asker")],
            {"ips": ["d7"]},
        )
        got = run_joint_1_1(TASK, matrix, transport, _registry())
        assert got == OneOneSolution(
            agent="d7", protocol="request", role=RoleRef("request", "replier")
        )

    def test_exploration_moves_to_next_vector(self):
        unable = (UNABLE_TO_SELECT, {"reason": "unwilling"})
        ready = (READY_TO_SELECT, {"roles": ["request:replier"]})
        transport = ScriptedTransport(
            {"d1": [unable, unable], "d2": [unable], "d3": [ready]}
        )
        matrix = build_candidate_matrix(
            TASK,
            [(one_one_protocol("ips"), "asker"), (one_one_protocol("request"), "asker")],
            {"ips": ["d1", "d2"], "request": ["d1", "d3"]},
        )
        got = run_joint_1_1(TASK, matrix, transport, _registry())
        assert got == OneOneSolution(
            agent="d3", protocol="request", role=RoleRef("request", "replier")
        )
        asked = [(agent, content["protocol"]) for kind, agent, _, content in transport.log if kind == "ask"]
        assert asked == [("d1", "ips"), ("d2", "ips"), ("d1", "request"), ("d3", "request")]

    def test_everybody_refusing_exhausts_the_matrix(self):
        unable = (UNABLE_TO_SELECT, {"reason": "unwilling"})
        transport = ScriptedTransport({a: [unable, unable] for a in INCIDENCES["ips"] + ["d3"]})
        got = run_joint_1_1(TASK, canonical_matrix(), transport, _registry())
        assert got == SelectionFailure(reason="exhausted")

    def test_message_count_stays_under_bound(self):
        unable = (UNABLE_TO_SELECT, {"reason": "unwilling"})
        transport = ScriptedTransport({a: [unable, unable] for a in INCIDENCES["ips"] + ["d3"]})
        matrix = canonical_matrix()
        run_joint_1_1(TASK, matrix, transport, _registry())
        assert transport.message_count() <= 3 * len(matrix.protocols) * len(matrix.agents)

    def test_transport_failure_reported(self):
        transport = ScriptedTransport({})
        transport.down = True
        got = run_joint_1_1(TASK, canonical_matrix(), transport, _registry())
        assert got == SelectionFailure(reason="transport")


class TestPayload:
    def test_rejects_empty_and_duplicates(self):
        with pytest.raises(ValueError):
            ReadyToSelectPayload(())
        with pytest.raises(ValueError):
            payload("many:rA", "many:rA")


def test_offered_roles_unknown_protocol_is_empty():
    registry, model, table = _participant_world()
    assert offered_roles("mystery", model, table, registry) == ()
