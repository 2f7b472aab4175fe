"""Protocols, roles, messages and the operations that inspect them.

A protocol bundles message schemas with one state machine per role.
Exactly one role is the initiator; the others are participants.  A
declared multiplicity on each role drives the category split used by
the selection engine:

* two roles, participant multiplicity 1      -> one-to-one
* two roles, participant multiplicity many   -> one-to-many instances
  of a single role (contract-net style)
* more than two roles, each multiplicity 1   -> one interaction with
  several distinct participant roles (auction style)

Anything else mixes traits of different categories and is rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, NamedTuple

from .errors import CompositeProtocolError, ParseError, UnknownRoleError
from .patterns import content_matches, shape_matches, validate_pattern

# ---------------------------------------------------------------------------
# Performatives
#
# Selection performatives drive the role-selection meta protocol and are
# reserved: no domain protocol may use them.  Control performatives carry
# error recovery and termination bookkeeping between two interacting
# agents.  Everything else is a domain performative.
# ---------------------------------------------------------------------------

CALL_FOR_COLLABORATION = "call-for-collaboration"
UNABLE_TO_SELECT = "unable-to-select"
STOP_SELECTION = "stop-selection"
READY_TO_SELECT = "ready-to-select"
NOTIFY_ASSIGNMENT = "notify-assignment"

SELECTION_PERFORMATIVES = frozenset(
    {
        CALL_FOR_COLLABORATION,
        UNABLE_TO_SELECT,
        STOP_SELECTION,
        READY_TO_SELECT,
        NOTIFY_ASSIGNMENT,
    }
)

ERROR_NOTIFY = "error-notify"
RECOVER_AT = "recover-at"
TERMINATION_NOTICE = "termination-notice"
TERMINATION_WARNING = "termination-warning"

CONTROL_PERFORMATIVES = frozenset(
    {ERROR_NOTIFY, RECOVER_AT, TERMINATION_NOTICE, TERMINATION_WARNING}
)

#: Well-known domain performatives used by the bundled protocols.  The
#: set is open: any token outside the reserved sets above is a valid
#: domain performative.
DOMAIN_PERFORMATIVES = frozenset(
    {
        "ask-one",
        "tell",
        "insert",
        "sorry",
        "error",
        "request",
        "agree",
        "refuse",
        "inform",
        "failure",
        "cfp",
        "propose",
        "accept",
        "reject",
    }
)

RESERVED_PERFORMATIVES = SELECTION_PERFORMATIVES | CONTROL_PERFORMATIVES


def is_selection_performative(name: str) -> bool:
    return name in SELECTION_PERFORMATIVES


def is_control_performative(name: str) -> bool:
    return name in CONTROL_PERFORMATIVES


def is_domain_performative(name: str) -> bool:
    return name not in RESERVED_PERFORMATIVES


# ---------------------------------------------------------------------------
# Role references
# ---------------------------------------------------------------------------


class RoleRef(NamedTuple):
    """A (protocol_id, role_id) pair; renders as ``protocol:role``."""

    protocol: str
    role: str

    def __str__(self) -> str:
        return f"{self.protocol}:{self.role}"

    @classmethod
    def parse(cls, text: str) -> "RoleRef":
        protocol, sep, role = text.partition(":")
        if not sep or not protocol or not role:
            raise ParseError(f"bad role reference {text!r}, expected 'protocol:role'")
        return cls(protocol, role)


# ---------------------------------------------------------------------------
# Messages and schemas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MessageSchema:
    """Shape of one message kind exchanged inside a protocol."""

    schema_id: str
    performative: str
    content_pattern: Any
    language: str = "kv"
    ontology: str = "core"

    def structure_matches(self, msg: "Message") -> bool:
        return (
            msg.performative == self.performative
            and msg.language == self.language
            and msg.ontology == self.ontology
            and shape_matches(self.content_pattern, msg.content)
        )

    def content_matches(self, msg: "Message") -> bool:
        return self.structure_matches(msg) and content_matches(
            self.content_pattern, msg.content
        )


@dataclass(frozen=True)
class Message:
    """One concrete message on the wire."""

    performative: str
    content: Any
    language: str
    ontology: str
    sender: str
    receiver: str
    conversation_id: str
    reply_with: str | None = None
    in_reply_to: str | None = None

    def structure_key(self) -> tuple:
        from .patterns import content_shape

        return (
            self.performative,
            self.language,
            self.ontology,
            content_shape(self.content),
        )


# ---------------------------------------------------------------------------
# Role state machines
# ---------------------------------------------------------------------------


class RoleKind(str, Enum):
    INITIATOR = "initiator"
    PARTICIPANT = "participant"


#: Declared multiplicity of a role: a positive int, or MANY for an
#: unbounded number of instances of the same role.
MANY = "N"


@dataclass(frozen=True)
class Trigger:
    """What fires a transition.

    ``receive`` waits for a message matching a schema.  ``internal``
    fires on a change of the named agent variable; the very first
    transition of an initiator role is triggered this way when the
    agent takes up a task, and later ones by data_change actions of
    preceding transitions.
    """

    kind: str  # "receive" | "internal"
    schema_id: str | None = None
    variable: str | None = None


@dataclass(frozen=True)
class Action:
    kind: str  # "send" | "data_change" | "none"
    schema_id: str | None = None
    variable: str | None = None


@dataclass(frozen=True)
class Transition:
    from_state: str
    trigger: Trigger
    action: Action
    to_state: str
    method: str


@dataclass(frozen=True)
class RoleStateMachine:
    role_id: str
    kind: RoleKind
    multiplicity: int | str
    states: frozenset[str]
    initial_state: str
    terminal_states: frozenset[str]
    transitions: tuple[Transition, ...]
    #: participant role whose first message this role's father sends;
    #: None when the role receives its first message from the initiator
    #: (or is the initiator itself).
    father: str | None = None

    def transitions_from(self, state: str) -> tuple[Transition, ...]:
        return tuple(t for t in self.transitions if t.from_state == state)

    def receive_schema_ids(self, state: str) -> tuple[str, ...]:
        seen: list[str] = []
        for t in self.transitions_from(state):
            if t.trigger.kind == "receive" and t.trigger.schema_id not in seen:
                seen.append(t.trigger.schema_id)  # type: ignore[arg-type]
        return tuple(seen)

    def method_ids(self) -> frozenset[str]:
        return frozenset(t.method for t in self.transitions)


# ---------------------------------------------------------------------------
# Protocols
# ---------------------------------------------------------------------------


class ProtocolCategory(str, Enum):
    ONE_ONE = "one-one"
    ONE_ONE_N = "one-one-many"
    ONE_N = "one-many-roles"


@dataclass(frozen=True)
class Protocol:
    protocol_id: str
    capability_tags: frozenset[str]
    schemas: dict[str, MessageSchema]
    roles: dict[str, RoleStateMachine]
    #: opaque annotation block, carried but never interpreted
    omega: Any = None

    def schema(self, schema_id: str) -> MessageSchema:
        return self.schemas[schema_id]

    def role(self, role_id: str) -> RoleStateMachine:
        return self.roles[role_id]

    def initiator_role(self) -> RoleStateMachine:
        for machine in self.roles.values():
            if machine.kind is RoleKind.INITIATOR:
                return machine
        raise UnknownRoleError(f"protocol {self.protocol_id} has no initiator role")

    def participant_roles(self) -> list[RoleStateMachine]:
        return [m for m in self.roles.values() if m.kind is RoleKind.PARTICIPANT]

    def ref(self, role_id: str) -> RoleRef:
        if role_id not in self.roles:
            raise UnknownRoleError(f"{self.protocol_id} has no role {role_id}")
        return RoleRef(self.protocol_id, role_id)


#: Protocols known to a running system, keyed by protocol_id.
ProtocolRegistry = dict[str, Protocol]


def classify_protocol(protocol: Protocol) -> ProtocolCategory:
    """Assign the selection category; composite protocols are an error."""
    participants = protocol.participant_roles()
    initiators = [m for m in protocol.roles.values() if m.kind is RoleKind.INITIATOR]
    if len(initiators) != 1 or not participants:
        raise CompositeProtocolError(
            f"{protocol.protocol_id}: needs exactly one initiator and at least "
            f"one participant role"
        )
    if any(m.multiplicity != 1 for m in initiators):
        raise CompositeProtocolError(
            f"{protocol.protocol_id}: initiator multiplicity must be 1"
        )
    if len(protocol.roles) == 2:
        mult = participants[0].multiplicity
        if mult == 1:
            return ProtocolCategory.ONE_ONE
        return ProtocolCategory.ONE_ONE_N
    if all(m.multiplicity == 1 for m in participants):
        return ProtocolCategory.ONE_N
    raise CompositeProtocolError(
        f"{protocol.protocol_id}: several participant roles with non-unit "
        f"multiplicity mix category traits"
    )


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    detail: str

    def __str__(self) -> str:
        return f"{self.code} [{self.subject}]: {self.detail}"


def validate_protocol(protocol: Protocol) -> list[Violation]:
    """Static checks; an empty report means the protocol is usable."""
    report: list[Violation] = []

    def bad(code: str, subject: str, detail: str) -> None:
        report.append(Violation(code, subject, detail))

    initiators = [m for m in protocol.roles.values() if m.kind is RoleKind.INITIATOR]
    if len(initiators) != 1:
        bad("initiator-count", protocol.protocol_id, f"found {len(initiators)} initiator roles")
    for schema in protocol.schemas.values():
        for problem in validate_pattern(schema.content_pattern):
            bad("bad-pattern", f"{protocol.protocol_id}/{schema.schema_id}", problem)
        if schema.performative in RESERVED_PERFORMATIVES:
            bad(
                "reserved-performative",
                f"{protocol.protocol_id}/{schema.schema_id}",
                f"{schema.performative} is reserved for the meta protocol",
            )
    for machine in protocol.roles.values():
        subject = f"{protocol.protocol_id}:{machine.role_id}"
        if machine.initial_state not in machine.states:
            bad("bad-initial", subject, f"initial state {machine.initial_state!r} undeclared")
        if not machine.terminal_states <= machine.states:
            bad("bad-terminals", subject, "terminal states must be declared states")
        if machine.multiplicity != MANY and (
            not isinstance(machine.multiplicity, int) or machine.multiplicity < 1
        ):
            bad("bad-multiplicity", subject, f"{machine.multiplicity!r}")
        if machine.kind is RoleKind.INITIATOR and machine.multiplicity != 1:
            bad("bad-multiplicity", subject, "initiator roles have multiplicity 1")
        if machine.father is not None and machine.father not in protocol.roles:
            bad("bad-father", subject, f"father {machine.father!r} is not a role")
        for t in machine.transitions:
            if t.from_state not in machine.states or t.to_state not in machine.states:
                bad("bad-transition", subject, f"{t.from_state}->{t.to_state} uses undeclared states")
            if t.from_state in machine.terminal_states:
                bad("terminal-outgoing", subject, f"transition leaves terminal {t.from_state}")
            if t.trigger.kind == "receive" and t.trigger.schema_id not in protocol.schemas:
                bad("bad-schema-ref", subject, f"trigger schema {t.trigger.schema_id!r}")
            if t.action.kind == "send" and t.action.schema_id not in protocol.schemas:
                bad("bad-schema-ref", subject, f"action schema {t.action.schema_id!r}")
        # reachability
        reachable = {machine.initial_state}
        frontier = [machine.initial_state]
        while frontier:
            here = frontier.pop()
            for t in machine.transitions_from(here):
                if t.to_state not in reachable:
                    reachable.add(t.to_state)
                    frontier.append(t.to_state)
        for state in sorted(machine.states - reachable):
            bad("unreachable-state", subject, state)
        first = machine.transitions_from(machine.initial_state)
        if not first and machine.states - machine.terminal_states:
            bad("no-first-transition", subject, "initial state has no outgoing transition")
        if machine.kind is RoleKind.PARTICIPANT:
            for t in first:
                if t.trigger.kind != "receive":
                    bad("bad-first-trigger", subject, "participant roles start by receiving")
        else:
            for t in first:
                if t.action.kind != "send":
                    bad("bad-first-action", subject, "initiator roles start by sending")
    return report


# ---------------------------------------------------------------------------
# Interaction models, compatibility, tasks
# ---------------------------------------------------------------------------


@dataclass
class InteractionModel:
    """The roles an agent is able and willing to enact, per protocol."""

    entries: dict[str, frozenset[str]] = field(default_factory=dict)

    def extend(self, protocol_id: str, role_ids: Iterable[str]) -> None:
        merged = self.entries.get(protocol_id, frozenset()) | frozenset(role_ids)
        self.entries[protocol_id] = merged

    def enacts(self, ref: RoleRef) -> bool:
        return ref.role in self.entries.get(ref.protocol, frozenset())

    def role_refs(self) -> list[RoleRef]:
        refs = [
            RoleRef(pid, rid)
            for pid, rids in self.entries.items()
            for rid in rids
        ]
        return sorted(refs)


@dataclass(frozen=True)
class CompatibilityTable:
    """Directed compatibility between roles of different protocols.

    A pair (a, b) states that an agent enacting a can interact with an
    agent enacting b.  The relation is reflexive by construction and
    deliberately not symmetric: a plain initiator can often drive the
    participant of a richer dialect, while the richer initiator would
    starve against the plain participant.
    """

    pairs: frozenset[tuple[RoleRef, RoleRef]] = frozenset()
    known_roles: frozenset[RoleRef] = frozenset()


def compatible(a: RoleRef, b: RoleRef, table: CompatibilityTable) -> bool:
    if table.known_roles:
        for ref in (a, b):
            if ref not in table.known_roles:
                raise UnknownRoleError(f"unknown role reference {ref}")
    if a == b:
        return True
    return (a, b) in table.pairs


@dataclass(frozen=True)
class TaskDescription:
    task_id: str
    required_capabilities: frozenset[str]
    constraints: dict[str, Any] = field(default_factory=dict)


def match_task_to_protocols(
    task: TaskDescription,
    model: InteractionModel,
    registry: ProtocolRegistry,
) -> list[tuple[Protocol, str]]:
    """Protocols able to carry the task, paired with the initiator role
    the agent would play.  Ordered by protocol id so exploration is
    reproducible."""
    found: list[tuple[Protocol, str]] = []
    for protocol_id in sorted(registry):
        protocol = registry[protocol_id]
        if not task.required_capabilities <= protocol.capability_tags:
            continue
        initiator = protocol.initiator_role()
        if initiator.role_id in model.entries.get(protocol_id, frozenset()):
            found.append((protocol, initiator.role_id))
    return found


#: An autonomy predicate: may this agent commit to this protocol for
#: this task right now?
Willingness = Callable[[str, str], bool]


# ---------------------------------------------------------------------------
# JSON (de)serialisation of protocol documents
# ---------------------------------------------------------------------------


def _trigger_from_dict(raw: dict) -> Trigger:
    kind = raw.get("kind")
    if kind == "receive":
        return Trigger(kind="receive", schema_id=raw["schema"])
    if kind == "internal":
        return Trigger(kind="internal", variable=raw["variable"])
    raise ParseError(f"bad trigger {raw!r}")


def _action_from_dict(raw: dict) -> Action:
    kind = raw.get("kind")
    if kind == "send":
        return Action(kind="send", schema_id=raw["schema"])
    if kind == "data_change":
        return Action(kind="data_change", variable=raw["variable"])
    if kind == "none":
        return Action(kind="none")
    raise ParseError(f"bad action {raw!r}")


def _trigger_to_dict(trigger: Trigger) -> dict:
    if trigger.kind == "receive":
        return {"kind": "receive", "schema": trigger.schema_id}
    return {"kind": "internal", "variable": trigger.variable}


def _action_to_dict(action: Action) -> dict:
    if action.kind == "send":
        return {"kind": "send", "schema": action.schema_id}
    if action.kind == "data_change":
        return {"kind": "data_change", "variable": action.variable}
    return {"kind": "none"}


def protocol_from_dict(raw: dict) -> Protocol:
    try:
        schemas = {
            s["schema_id"]: MessageSchema(
                schema_id=s["schema_id"],
                performative=s["performative"],
                content_pattern=s["content_pattern"],
                language=s.get("language", "kv"),
                ontology=s.get("ontology", "core"),
            )
            for s in raw["schemas"]
        }
        roles = {}
        for r in raw["roles"]:
            transitions = tuple(
                Transition(
                    from_state=t["from"],
                    trigger=_trigger_from_dict(t["trigger"]),
                    action=_action_from_dict(t["action"]),
                    to_state=t["to"],
                    method=t["method"],
                )
                for t in r["transitions"]
            )
            roles[r["role_id"]] = RoleStateMachine(
                role_id=r["role_id"],
                kind=RoleKind(r["kind"]),
                multiplicity=r["multiplicity"],
                states=frozenset(r["states"]),
                initial_state=r["initial"],
                terminal_states=frozenset(r["terminals"]),
                transitions=transitions,
                father=r.get("father"),
            )
        return Protocol(
            protocol_id=raw["protocol_id"],
            capability_tags=frozenset(raw.get("capability_tags", [])),
            schemas=schemas,
            roles=roles,
            omega=raw.get("omega"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed protocol document: {exc!r}") from exc


def protocol_to_dict(protocol: Protocol) -> dict:
    return {
        "protocol_id": protocol.protocol_id,
        "capability_tags": sorted(protocol.capability_tags),
        "schemas": [
            {
                "schema_id": s.schema_id,
                "performative": s.performative,
                "content_pattern": s.content_pattern,
                "language": s.language,
                "ontology": s.ontology,
            }
            for _, s in sorted(protocol.schemas.items())
        ],
        "roles": [
            {
                "role_id": m.role_id,
                "kind": m.kind.value,
                "multiplicity": m.multiplicity,
                "states": sorted(m.states),
                "initial": m.initial_state,
                "terminals": sorted(m.terminal_states),
                "father": m.father,
                "transitions": [
                    {
                        "from": t.from_state,
                        "trigger": _trigger_to_dict(t.trigger),
                        "action": _action_to_dict(t.action),
                        "to": t.to_state,
                        "method": t.method,
                    }
                    for t in m.transitions
                ],
            }
            for _, m in sorted(protocol.roles.items())
        ],
        "omega": protocol.omega,
    }


def load_protocol(path: str | Path) -> Protocol:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return protocol_from_dict(raw)
