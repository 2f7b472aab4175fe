"""Individually selected roles and the machinery to swap them mid-run.

With individual selection each side of a conversation picks its own
role and discovers at runtime whether the pick was right.  The picking
side keeps a collection of candidate roles; when an incoming or
outgoing message betrays a wrong pick, the collection is purged of
roles that would repeat the failure, a replacement is chosen, both
journals are cut back to a safe point and the interaction resumes from
there.

The safe point is computed per side: the replacement role's point is
how far it can retrace the recorded history (as a path in its method
graph), the counterpart's point counts how many of its own sends are
still covered by the kept records.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from random import Random

from .errors import NoViableRoleError, PointOutOfRangeError
from .journal import Journal, JournalRecord, MessageReception
from .machine import (
    trigger_matches,
    enabled_for_message,
    replay_states,
    weak_schema_ids,
)
from .model import Message, Protocol, ProtocolRegistry, RoleRef

WRONG_STRUCTURE = "wrong-structure"
WRONG_CONTENT = "wrong-content"

INITIATOR_DETECTED = "initiator"
PARTICIPANT_DETECTED = "participant"


@dataclass(frozen=True)
class InteractionError:
    """A received message the current role cannot account for."""

    kind: str  # WRONG_STRUCTURE | WRONG_CONTENT
    location: int  # 1-based record index at the collection owner
    offending: Message
    detected_by: str  # INITIATOR_DETECTED | PARTICIPANT_DETECTED


def check_incoming(machine, protocol: Protocol, state: str, msg: Message) -> str | None:
    """None when some transition accepts the message; otherwise the
    error kind.  Structure is judged before content: only a message
    that fits an expected shape can be blamed on its values."""
    if enabled_for_message(machine, protocol, state, msg):
        return None
    if enabled_for_message(machine, protocol, state, msg, structural_only=True):
        return WRONG_CONTENT
    return WRONG_STRUCTURE


def locate_emission(records, reply_with: str) -> int:
    """1-based index of the record that emitted the message tagged
    ``reply_with``; 0 when no record did."""
    for record in records:
        for emitted in record.emissions():
            if emitted.reply_with == reply_with:
                return record.seq
    return 0


# ---------------------------------------------------------------------------
# Role collections
# ---------------------------------------------------------------------------


class RoleStatus(str, Enum):
    AVAILABLE = "available"
    ACTIVE = "active"
    REMOVED = "removed"


@dataclass
class RoleCollection:
    """Candidate roles of one agent for one conversation."""

    statuses: dict[RoleRef, RoleStatus]

    @classmethod
    def of(cls, refs) -> "RoleCollection":
        return cls(statuses={ref: RoleStatus.AVAILABLE for ref in sorted(refs)})

    def available(self) -> list[RoleRef]:
        return [r for r, s in sorted(self.statuses.items()) if s is RoleStatus.AVAILABLE]

    def active(self) -> RoleRef | None:
        for ref, status in self.statuses.items():
            if status is RoleStatus.ACTIVE:
                return ref
        return None

    def activate(self, ref: RoleRef) -> None:
        current = self.active()
        if current is not None and current != ref:
            raise ValueError(f"{current} is still active")
        if self.statuses.get(ref) is not RoleStatus.AVAILABLE:
            raise ValueError(f"{ref} is not available")
        self.statuses[ref] = RoleStatus.ACTIVE

    def remove(self, ref: RoleRef) -> None:
        if ref in self.statuses:
            self.statuses[ref] = RoleStatus.REMOVED

    def exhausted(self) -> bool:
        return not self.available() and self.active() is None


def build_collection(model, registry: ProtocolRegistry, kind) -> RoleCollection:
    """All roles of ``kind`` the agent enacts, per its interaction model."""
    refs = [
        ref
        for ref in model.role_refs()
        if ref.protocol in registry
        and ref.role in registry[ref.protocol].roles
        and registry[ref.protocol].roles[ref.role].kind is kind
    ]
    return RoleCollection.of(refs)


def receiving_roles(
    collection: RoleCollection, registry: ProtocolRegistry, msg: Message
) -> list[RoleRef]:
    """Available roles whose machine accepts ``msg`` in its initial state."""
    hits = []
    for ref in collection.available():
        protocol = registry[ref.protocol]
        machine = protocol.roles[ref.role]
        if enabled_for_message(machine, protocol, machine.initial_state, msg):
            hits.append(ref)
    return hits


# ---------------------------------------------------------------------------
# Purge rules
# ---------------------------------------------------------------------------


def _generates_same_structure(
    machine, protocol: Protocol, prefix, input_event, offending: Message
) -> bool:
    """Could this role, after living the same prefix, emit a message of
    the offending message's structure when fed the same input?"""
    states = replay_states(machine, protocol, prefix) if prefix else {machine.initial_state}
    for state in states:
        for t in machine.transitions_from(state):
            if not trigger_matches(protocol, t, input_event):
                continue
            if t.action.kind != "send":
                continue
            if protocol.schema(t.action.schema_id).structure_matches(offending):
                return True
    return False


def _receives_at_point(
    machine, protocol: Protocol, prefix, offending: Message, structural_only: bool
) -> bool:
    states = replay_states(machine, protocol, prefix) if prefix else {machine.initial_state}
    return any(
        enabled_for_message(machine, protocol, state, offending, structural_only)
        for state in states
    )


def purge_collection(
    collection: RoleCollection,
    registry: ProtocolRegistry,
    prefix,
    error: InteractionError,
    culprit_method: str | None = None,
    error_input=None,
) -> list[RoleRef]:
    """Drop every candidate role that would repeat the failure.

    ``prefix`` holds the journal records before the error location.
    For an error the counterpart detected (an own emission gone wrong),
    ``error_input`` is the event that fired the failing record and
    ``culprit_method`` the method that ran it; both are read off the
    still-untruncated journal by the caller.

    All candidates must be able to replay the prefix.  On top of that:

    * own emission judged structurally wrong -> roles able to produce
      that same structure at this point would fail the same way;
    * own emission judged wrong in content -> the structure itself was
      expected, so roles *unable* to produce it are useless, and roles
      sharing the culprit method would recompute the same values;
    * reception the current role cannot take -> keep exactly the roles
      that can take it (structurally for a structure error, fully for a
      content error).
    """
    removed: list[RoleRef] = []
    for ref in list(collection.available()):
        protocol = registry[ref.protocol]
        machine = protocol.roles[ref.role]
        drop = False
        if prefix and not replay_states(machine, protocol, prefix):
            drop = True
        elif error.detected_by == INITIATOR_DETECTED:
            same = _generates_same_structure(
                machine, protocol, prefix, error_input, error.offending
            )
            if error.kind == WRONG_STRUCTURE:
                drop = same
            else:
                drop = not same or (
                    culprit_method is not None and culprit_method in machine.method_ids()
                )
        else:
            structural_only = error.kind == WRONG_STRUCTURE
            drop = not _receives_at_point(
                machine, protocol, prefix, error.offending, structural_only
            )
        if drop:
            collection.remove(ref)
            removed.append(ref)
    return removed


# ---------------------------------------------------------------------------
# Replacement selection
# ---------------------------------------------------------------------------


def _schemas_at_point(machine, protocol: Protocol, prefix) -> frozenset[str]:
    """Schemas the role could still send or receive after the prefix."""
    starts = replay_states(machine, protocol, prefix) if prefix else {machine.initial_state}
    reachable = set(starts)
    frontier = list(starts)
    while frontier:
        here = frontier.pop()
        for t in machine.transitions_from(here):
            if t.to_state not in reachable:
                reachable.add(t.to_state)
                frontier.append(t.to_state)
    schemas: set[str] = set()
    for state in reachable:
        for t in machine.transitions_from(state):
            if t.trigger.kind == "receive":
                schemas.add(t.trigger.schema_id)  # type: ignore[arg-type]
            if t.action.kind == "send":
                schemas.add(t.action.schema_id)  # type: ignore[arg-type]
    return frozenset(schemas)


def select_replacement_role(
    collection: RoleCollection,
    registry: ProtocolRegistry,
    prefix,
    error: InteractionError,
    rng: Random,
) -> RoleRef:
    """Choose the next role to enact after a purge.

    After a content error the candidates are ranked by how many of
    their still-pending messages are weak - messages whose handling can
    only end the interaction - with the offending structure itself set
    aside.  A role rich in ways out is the conservative pick: if it is
    wrong too, it fails cheaply.  Ties (and structure errors, where the
    journal says nothing about content habits) fall to a seeded draw.
    """
    candidates = collection.available()
    if not candidates:
        raise NoViableRoleError("the role collection is exhausted")
    if error.kind == WRONG_CONTENT:
        scores: dict[RoleRef, int] = {}
        for ref in candidates:
            protocol = registry[ref.protocol]
            machine = protocol.roles[ref.role]
            pending = _schemas_at_point(machine, protocol, prefix)
            pending = frozenset(
                s
                for s in pending
                if not protocol.schema(s).structure_matches(error.offending)
            )
            scores[ref] = len(pending & weak_schema_ids(machine))
        top = max(scores.values())
        winners = [ref for ref in candidates if scores[ref] == top]
        if len(winners) == 1:
            return winners[0]
        return rng.choice(winners)
    return rng.choice(candidates)


# ---------------------------------------------------------------------------
# Method graphs and recovery points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MethodGraph:
    """Methods of a role and which can follow which.

    Method b follows method a when some transition running b starts in
    the state some transition running a ends in.  The initial method is
    the one fired from the machine's initial state; roles are written
    so that this method is unique.
    """

    initial: str
    follow: dict[str, frozenset[str]]
    input_kind: dict[str, str]  # method -> "message" | "data"


def method_graph(machine) -> MethodGraph:
    firsts = {t.method for t in machine.transitions_from(machine.initial_state)}
    if len(firsts) != 1:
        raise ValueError(
            f"role {machine.role_id} needs exactly one initial method, found "
            f"{sorted(firsts) or 'none'}"
        )
    enders: dict[str, set[str]] = {}
    for t in machine.transitions:
        enders.setdefault(t.to_state, set()).add(t.method)
    follow: dict[str, set[str]] = {t.method: set() for t in machine.transitions}
    for t in machine.transitions:
        for method in enders.get(t.from_state, ()):  # whatever lands here
            follow[method].add(t.method)
    input_kind = {}
    for t in machine.transitions:
        input_kind.setdefault(
            t.method, "message" if t.trigger.kind == "receive" else "data"
        )
    return MethodGraph(
        initial=next(iter(firsts)),
        follow={m: frozenset(s) for m, s in follow.items()},
        input_kind=input_kind,
    )


def compute_recovery_points(records, graph: MethodGraph) -> tuple[int, int]:
    """(counterpart point, own point) for a history against a method graph.

    The own point grows while the records trace a path of the graph
    from its initial method; the counterpart point additionally counts
    how many of the traced records were fired by a received message.
    Both start at 1: a history that diverges immediately restarts the
    interaction from scratch.  Note the records are taken as given -
    including any not yet erased after an error - so drivers cap the
    result at the failure location before acting on it.
    """
    i = j = 1
    if not records or records[0].method != graph.initial:
        return 1, 1
    current = records[0].method
    for record in records[1:]:
        if record.method not in graph.follow.get(current, frozenset()):
            break
        current = record.method
        j += 1
        if record.input_is_message():
            i += 1
    return i, j


def clamped_recovery_points(records, graph: MethodGraph, location: int) -> tuple[int, int]:
    """Recovery points capped at the failure location.

    ``location`` is the 1-based index of the failing record (one past
    the end for a failed reception).  The own point never reaches past
    it, and the counterpart point is recomputed for the capped prefix.
    """
    _, j = compute_recovery_points(records, graph)
    j_eff = min(j, location)
    i_eff = 1 + sum(1 for r in records[1:j_eff] if r.input_is_message())
    return i_eff, j_eff


def truncate_own(journal: Journal, point: int) -> None:
    """Keep the records before the recovery point; the record at the
    point itself is re-fired, everything after it never happened."""
    if point < 1 or point > len(journal) + 1:
        raise PointOutOfRangeError(f"point {point} outside journal of {len(journal)}")
    journal.keep_first(point - 1)


def truncate_counterpart(journal: Journal, point: int) -> None:
    """Keep the records up to and including the ``point``-th own
    emission; later records are rolled back."""
    if point < 1:
        raise PointOutOfRangeError(f"point {point} must be positive")
    emitted = 0
    for record in journal.records:
        emitted += len(record.emissions())
        if emitted >= point:
            journal.keep_first(record.seq)
            return
    raise PointOutOfRangeError(
        f"journal holds {emitted} emissions, point {point} asks for more"
    )


def refire_input(records, point: int, offending: Message | None):
    """The input event to feed the replacement role: the recorded input
    at the point, or the stored offending message when the point sits
    one past the recorded history."""
    if 1 <= point <= len(records):
        return records[point - 1].input_event
    if point == len(records) + 1 and offending is not None:
        return MessageReception(offending)
    raise PointOutOfRangeError(f"nothing to re-fire at point {point}")
