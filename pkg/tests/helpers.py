"""Builders shared by the test modules.

Protocols built here are intentionally minimal but pass
validate_protocol, so tests exercising selection logic do not drag in
hand-written JSON documents.
"""

from __future__ import annotations

from parley.model import (
    MANY,
    Action,
    MessageSchema,
    Protocol,
    RoleKind,
    RoleStateMachine,
    Transition,
    Trigger,
)


def _ask_schema(performative: str = "ask-one") -> MessageSchema:
    return MessageSchema(
        schema_id="ask",
        performative=performative,
        content_pattern={"q": "?string"},
    )


def _reply_schema(performative: str = "tell") -> MessageSchema:
    return MessageSchema(
        schema_id="reply",
        performative=performative,
        content_pattern={"a": "?string"},
    )


def one_one_protocol(
    protocol_id: str,
    tags: tuple[str, ...] = ("query",),
    initiator_id: str = "asker",
    participant_id: str = "replier",
) -> Protocol:
    """Two roles, one exchange: ask, answer, done."""
    initiator = RoleStateMachine(
        role_id=initiator_id,
        kind=RoleKind.INITIATOR,
        multiplicity=1,
        states=frozenset({"s0", "s1", "done"}),
        initial_state="s0",
        terminal_states=frozenset({"done"}),
        transitions=(
            Transition(
                "s0",
                Trigger(kind="internal", variable="task"),
                Action(kind="send", schema_id="ask"),
                "s1",
                f"{protocol_id}-send-ask",
            ),
            Transition(
                "s1",
                Trigger(kind="receive", schema_id="reply"),
                Action(kind="none"),
                "done",
                f"{protocol_id}-take-reply",
            ),
        ),
    )
    participant = RoleStateMachine(
        role_id=participant_id,
        kind=RoleKind.PARTICIPANT,
        multiplicity=1,
        states=frozenset({"p0", "done"}),
        initial_state="p0",
        terminal_states=frozenset({"done"}),
        transitions=(
            Transition(
                "p0",
                Trigger(kind="receive", schema_id="ask"),
                Action(kind="send", schema_id="reply"),
                "done",
                f"{protocol_id}-answer",
            ),
        ),
    )
    return Protocol(
        protocol_id=protocol_id,
        capability_tags=frozenset(tags),
        schemas={"ask": _ask_schema(), "reply": _reply_schema()},
        roles={initiator_id: initiator, participant_id: participant},
    )


def one_one_n_protocol(
    protocol_id: str,
    tags: tuple[str, ...] = ("tender",),
    participant_id: str = "bidder",
) -> Protocol:
    """Two roles where the participant side is instantiated many times."""
    base = one_one_protocol(protocol_id, tags, participant_id=participant_id)
    bidder = base.roles[participant_id]
    many = RoleStateMachine(
        role_id=bidder.role_id,
        kind=bidder.kind,
        multiplicity=MANY,
        states=bidder.states,
        initial_state=bidder.initial_state,
        terminal_states=bidder.terminal_states,
        transitions=bidder.transitions,
    )
    return Protocol(
        protocol_id=base.protocol_id,
        capability_tags=base.capability_tags,
        schemas=base.schemas,
        roles={"asker": base.roles["asker"], participant_id: many},
    )


def one_n_protocol(
    protocol_id: str,
    fathers: dict[str, str | None],
    tags: tuple[str, ...] = ("ceremony",),
) -> Protocol:
    """One initiator plus one unit-multiplicity role per ``fathers`` key.

    ``fathers`` maps each participant role to the participant sending
    its first message, or None when that message comes from the
    initiator.
    """
    kick = MessageSchema(
        schema_id="kick", performative="inform", content_pattern={"go": "?string"}
    )
    roles: dict[str, RoleStateMachine] = {
        "chair": RoleStateMachine(
            role_id="chair",
            kind=RoleKind.INITIATOR,
            multiplicity=1,
            states=frozenset({"s0", "done"}),
            initial_state="s0",
            terminal_states=frozenset({"done"}),
            transitions=(
                Transition(
                    "s0",
                    Trigger(kind="internal", variable="task"),
                    Action(kind="send", schema_id="kick"),
                    "done",
                    f"{protocol_id}-kickoff",
                ),
            ),
        )
    }
    for role_id, father in fathers.items():
        roles[role_id] = RoleStateMachine(
            role_id=role_id,
            kind=RoleKind.PARTICIPANT,
            multiplicity=1,
            states=frozenset({"p0", "done"}),
            initial_state="p0",
            terminal_states=frozenset({"done"}),
            transitions=(
                Transition(
                    "p0",
                    Trigger(kind="receive", schema_id="kick"),
                    Action(kind="none"),
                    "done",
                    f"{protocol_id}-{role_id}-join",
                ),
            ),
            father=father,
        )
    return Protocol(
        protocol_id=protocol_id,
        capability_tags=frozenset(tags),
        schemas={"kick": kick},
        roles=roles,
    )
