"""Parallel instantiation of candidate roles behind a control zone.

Instead of betting on one role and swapping it on failure, the serving
agent can instantiate every candidate at once.  All instances handle
the same incoming messages; the replies they generate are buffered in
a control zone, exactly one reply is sent on, and the roles whose
replies matched it stay active while the others are parked.  The
counterpart never learns any of this: it sees one message per step,
as if a single role were running.

When the sent message turns out wrong, recovery is local bookkeeping:
the roles that produced it are stopped, an alternate reply from the
same step can replace the failed one outright, and when the step's
candidates are used up the most recently parked roles are woken and
the shared journal is cut back to where their own method graphs can
pick it up.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import count
from random import Random
from typing import Callable

from .errors import NoViableRoleError
from .individual import (
    WRONG_CONTENT,
    WRONG_STRUCTURE,
    RoleCollection,
    clamped_recovery_points,
    method_graph,
    refire_input,
    truncate_own,
)
from .journal import (
    DataChange,
    Journal,
    MessageEmission,
    MessageReception,
)
from .machine import (
    enabled_for_message,
    enabled_for_variable,
    replay_state,
    weak_schema_ids,
)
from .model import Message, Protocol, ProtocolRegistry, RoleRef
from .patterns import fill_pattern

ACTIVE = "active"
DEACTIVATED = "deactivated"
STOPPED = "stopped"

_CASCADE_LIMIT = 8


@dataclass
class RoleInstance:
    """One candidate role running (or parked) inside the zone."""

    ref: RoleRef
    state: str
    activation: str = ACTIVE
    stamp: int = 0  # set when deactivated; higher = more recent
    last_message: Message | None = None  # reply generated this step


@dataclass(frozen=True)
class PendingRecord:
    """A journal record proposal, kept until its step's reply is picked."""

    method: str
    input_event: object
    output_events: tuple


@dataclass(frozen=True)
class OutboxEntry:
    """A candidate reply plus the records that would justify it."""

    ref: RoleRef
    message: Message
    schema_id: str
    records: tuple[PendingRecord, ...]


@dataclass
class ControlZone:
    """Shared state of one mixed-mode conversation on the serving side."""

    owner: str
    counterpart: str
    journal: Journal
    tag: Callable[[], str]
    instances: dict[RoleRef, RoleInstance] = field(default_factory=dict)
    outbox: list[OutboxEntry] = field(default_factory=list)
    sent_history: list[OutboxEntry] = field(default_factory=list)
    stamp_counter: int = 0
    last_received_tag: str | None = None

    def instance(self, ref: RoleRef) -> RoleInstance:
        return self.instances[ref]

    def active(self) -> list[RoleInstance]:
        return [
            self.instances[r]
            for r in sorted(self.instances)
            if self.instances[r].activation == ACTIVE
        ]

    def deactivated(self) -> list[RoleInstance]:
        return [
            self.instances[r]
            for r in sorted(self.instances)
            if self.instances[r].activation == DEACTIVATED
        ]

    def exhausted(self) -> bool:
        return not self.active() and not self.deactivated()


def sequence_tagger(prefix: str) -> Callable[[], str]:
    """Fresh reply tags ``prefix.1``, ``prefix.2``, ... for a zone."""
    counter = count(1)
    return lambda: f"{prefix}.{next(counter)}"


def same_signature(a: Message, b: Message) -> bool:
    """Structure and content both equal - the activation criterion."""
    return a.structure_key() == b.structure_key() and a.content == b.content


def zone_coherent(cz: ControlZone) -> bool:
    """All active instances' last replies carry one signature."""
    generated = [inst.last_message for inst in cz.active() if inst.last_message is not None]
    return all(same_signature(generated[0], m) for m in generated[1:]) if generated else True


def stop_active(cz: ControlZone) -> list[RoleRef]:
    """Stop every active instance (stopping is final)."""
    stopped = []
    for instance in cz.active():
        instance.activation = STOPPED
        instance.last_message = None
        stopped.append(instance.ref)
    return stopped


# ---------------------------------------------------------------------------
# Generation: one instance handles one input event
# ---------------------------------------------------------------------------


def _run_step(
    cz: ControlZone,
    instance: RoleInstance,
    protocol: Protocol,
    first: object,
    input_event: object,
    value: object,
    tag_value: str,
    rng: Random,
) -> OutboxEntry | None:
    """Drive the instance from transition ``first`` until it emits a
    reply or runs out of internal moves.  Advances the instance's
    state; returns None when no reply came out."""
    machine = protocol.roles[instance.ref.role]
    records: list[PendingRecord] = []
    t = first
    for _ in range(_CASCADE_LIMIT):
        if t.action.kind == "send":
            schema = protocol.schema(t.action.schema_id)
            reply = Message(
                performative=schema.performative,
                content=fill_pattern(schema.content_pattern),
                language=schema.language,
                ontology=schema.ontology,
                sender=cz.owner,
                receiver=cz.counterpart,
                conversation_id=cz.journal.conversation_id,
                reply_with=tag_value,
                in_reply_to=cz.last_received_tag,
            )
            records.append(PendingRecord(t.method, input_event, (MessageEmission(reply),)))
            instance.state = t.to_state
            return OutboxEntry(
                ref=instance.ref,
                message=reply,
                schema_id=schema.schema_id,
                records=tuple(records),
            )
        outputs: tuple = ()
        if t.action.kind == "data_change":
            outputs = (DataChange(t.action.variable, value),)
        records.append(PendingRecord(t.method, input_event, outputs))
        instance.state = t.to_state
        if t.action.kind != "data_change":
            return None  # the step ended without a reply
        nexts = enabled_for_variable(machine, instance.state, t.action.variable)
        if not nexts:
            return None
        input_event = outputs[0]
        t = nexts[0] if len(nexts) == 1 else rng.choice(nexts)
    return None


def _generate(
    cz: ControlZone,
    instance: RoleInstance,
    protocol: Protocol,
    msg: Message,
    tag_value: str,
    rng: Random,
) -> OutboxEntry | None:
    machine = protocol.roles[instance.ref.role]
    receptions = enabled_for_message(machine, protocol, instance.state, msg)
    if not receptions:
        return None
    t = receptions[0] if len(receptions) == 1 else rng.choice(receptions)
    return _run_step(
        cz, instance, protocol, t, MessageReception(msg), msg.content, tag_value, rng
    )


# ---------------------------------------------------------------------------
# Zone lifecycle
# ---------------------------------------------------------------------------


def instantiate_all(
    collection: RoleCollection,
    registry: ProtocolRegistry,
    m0: Message,
    tag: Callable[[], str],
    rng: Random,
) -> ControlZone:
    """Spin up every available role on the opening message.

    Each instance handles m0 and deposits its reply in the outbox; a
    role with no answer to m0 is stopped on the spot.  All survivors
    are then parked as one batch, waiting for the reply selection to
    wake the winners.
    """
    cz = ControlZone(
        owner=m0.receiver,
        counterpart=m0.sender,
        journal=Journal(owner=m0.receiver, conversation_id=m0.conversation_id),
        tag=tag,
        last_received_tag=m0.reply_with,
    )
    tag_value = cz.tag()
    for ref in collection.available():
        protocol = registry[ref.protocol]
        instance = RoleInstance(ref=ref, state=protocol.roles[ref.role].initial_state)
        cz.instances[ref] = instance
        entry = _generate(cz, instance, protocol, m0, tag_value, rng)
        if entry is None:
            instance.activation = STOPPED
            continue
        instance.last_message = entry.message
        cz.outbox.append(entry)
    cz.stamp_counter = 1
    for instance in cz.instances.values():
        if instance.activation == ACTIVE:
            instance.activation = DEACTIVATED
            instance.stamp = cz.stamp_counter
    return cz


def handle_incoming(
    cz: ControlZone, registry: ProtocolRegistry, msg: Message, rng: Random
) -> str | None:
    """Feed one incoming message to every active instance.

    Returns None when at least one instance takes the message: those
    instances generate this step's candidate replies (the previous
    step's leftover alternates are dropped first), and any active
    instance the real message just proved wrong is stopped.  When
    nobody takes it, returns the error kind and touches nothing.
    """
    actives = cz.active()
    fully = []
    structurally = False
    for instance in actives:
        protocol = registry[instance.ref.protocol]
        machine = protocol.roles[instance.ref.role]
        if enabled_for_message(machine, protocol, instance.state, msg):
            fully.append(instance)
        elif enabled_for_message(machine, protocol, instance.state, msg, structural_only=True):
            structurally = True
    if not fully:
        return WRONG_CONTENT if structurally else WRONG_STRUCTURE
    cz.outbox.clear()
    cz.last_received_tag = msg.reply_with
    tag_value = cz.tag()
    for instance in actives:
        if instance not in fully:
            instance.activation = STOPPED
            instance.last_message = None
            continue
        entry = _generate(cz, instance, registry[instance.ref.protocol], msg, tag_value, rng)
        instance.last_message = entry.message if entry else None
        if entry is not None:
            cz.outbox.append(entry)
    return None


def handle_refire(cz: ControlZone, registry: ProtocolRegistry, event, rng: Random) -> str | None:
    """Resume after a reactivation by replaying the re-fired input.

    A message event goes through the normal incoming path; a data
    change resumes each woken instance's internal step.  Instances that
    cannot fire it were woken in vain and are stopped.
    """
    if isinstance(event, MessageReception):
        return handle_incoming(cz, registry, event.message, rng)
    cz.outbox.clear()
    tag_value = cz.tag()
    for instance in cz.active():
        protocol = registry[instance.ref.protocol]
        machine = protocol.roles[instance.ref.role]
        nexts = enabled_for_variable(machine, instance.state, event.variable)
        if not nexts:
            instance.activation = STOPPED
            instance.last_message = None
            continue
        t = nexts[0] if len(nexts) == 1 else rng.choice(nexts)
        entry = _run_step(cz, instance, protocol, t, event, event.value, tag_value, rng)
        instance.last_message = entry.message if entry else None
        if entry is not None:
            cz.outbox.append(entry)
    return None


def _entry_is_weak(entry: OutboxEntry, registry: ProtocolRegistry) -> bool:
    machine = registry[entry.ref.protocol].roles[entry.ref.role]
    return entry.schema_id in weak_schema_ids(machine)


def _draw(entries: list[OutboxEntry], registry: ProtocolRegistry, rng: Random) -> OutboxEntry:
    """The reply-selection principle: prefer messages that keep the
    interaction alive, draw by seed within the preferred batch."""
    sturdy = [e for e in entries if not _entry_is_weak(e, registry)]
    pool = sturdy or entries
    return pool[0] if len(pool) == 1 else rng.choice(pool)


def select_outgoing(cz: ControlZone, registry: ProtocolRegistry, rng: Random) -> Message:
    """Pick this step's reply and reconcile activations around it.

    Identical candidates short-circuit: everyone stays active and no
    draw happens.  Otherwise the drawn reply wakes (or keeps awake)
    exactly the instances that generated its signature; active
    instances left out are parked as one freshly stamped batch.
    The losing candidates stay in the outbox - they are the alternates
    error handling may fall back on.
    """
    if not cz.outbox:
        raise ValueError("nothing to select: the outbox is empty")
    first = cz.outbox[0]
    if all(same_signature(first.message, e.message) for e in cz.outbox[1:]):
        chosen = first
    else:
        chosen = _draw(cz.outbox, registry, rng)
    matching = [e for e in cz.outbox if same_signature(chosen.message, e.message)]
    matching_refs = {e.ref for e in matching}
    parked = [inst for inst in cz.active() if inst.ref not in matching_refs]
    if parked:
        cz.stamp_counter += 1
        for instance in parked:
            instance.activation = DEACTIVATED
            instance.stamp = cz.stamp_counter
    for entry in matching:
        cz.instances[entry.ref].activation = ACTIVE
        cz.outbox.remove(entry)
    for record in chosen.records:
        cz.journal.append(record.method, record.input_event, record.output_events)
    cz.sent_history.append(chosen)
    return chosen.message


def reconcile_after_step(cz: ControlZone, registry: ProtocolRegistry, rng: Random) -> Message:
    """Selection at a quiescent step; same rule, named for the flow."""
    return select_outgoing(cz, registry, rng)


# ---------------------------------------------------------------------------
# Error handling
# ---------------------------------------------------------------------------


def _retag(cz: ControlZone, entry: OutboxEntry) -> OutboxEntry:
    """A replacement goes out as a fresh send: new reply tag, and the
    pending records updated to emit the retagged message."""
    message = replace(entry.message, reply_with=cz.tag())
    records = tuple(
        PendingRecord(
            rec.method,
            rec.input_event,
            tuple(
                MessageEmission(message) if isinstance(ev, MessageEmission) else ev
                for ev in rec.output_events
            ),
        )
        for rec in entry.records
    )
    return OutboxEntry(entry.ref, message, entry.schema_id, records)


def handle_error_mixed(
    cz: ControlZone, registry: ProtocolRegistry, kind: str, rng: Random
) -> Message | None:
    """React to the counterpart rejecting the last sent message.

    The roles behind it are stopped.  A structure complaint voids every
    same-structure alternate; a content complaint voids the same
    content pattern and restricts the replacement to the same structure
    under a different pattern.  The surviving alternates go through the
    usual selection; the winner replaces the failed message in the
    journal and is returned for sending.  None means this step has no
    substitute and the caller should wake parked roles instead.
    """
    if not cz.sent_history:
        raise ValueError("no sent message to recover from")
    failed = cz.sent_history[-1]
    stop_active(cz)
    failed_pattern = registry[failed.ref.protocol].schema(failed.schema_id).content_pattern
    if kind == WRONG_STRUCTURE:
        doomed = [
            e
            for e in cz.outbox
            if e.message.structure_key() == failed.message.structure_key()
        ]
    else:
        doomed = [
            e
            for e in cz.outbox
            if registry[e.ref.protocol].schema(e.schema_id).content_pattern == failed_pattern
        ]
    for entry in doomed:
        cz.outbox.remove(entry)
        cz.instances[entry.ref].activation = STOPPED
        cz.instances[entry.ref].last_message = None
    if kind == WRONG_STRUCTURE:
        eligible = list(cz.outbox)
    else:
        eligible = [
            e
            for e in cz.outbox
            if e.message.structure_key() == failed.message.structure_key()
        ]
    if not eligible:
        return None
    chosen = _draw(eligible, registry, rng)
    matching = [e for e in cz.outbox if same_signature(chosen.message, e.message)]
    retagged = _retag(cz, chosen)
    for entry in matching:
        cz.instances[entry.ref].activation = ACTIVE
        cz.instances[entry.ref].last_message = retagged.message
        cz.outbox.remove(entry)
    cz.journal.keep_first(len(cz.journal) - len(failed.records))
    for record in retagged.records:
        cz.journal.append(record.method, record.input_event, record.output_events)
    cz.sent_history.append(retagged)
    return retagged.message


# ---------------------------------------------------------------------------
# Reactivation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReactivationPlan:
    """What waking the most recently parked roles entails."""

    refs: tuple[RoleRef, ...]
    counterpart_point: int
    own_point: int
    refire: object  # input event to feed the woken instances
    weak_guard: bool  # every possible next reply would end the interaction
    restart: bool  # the shared journal gave nothing to keep


def _next_send_schemas(machine, state: str) -> frozenset[str]:
    return frozenset(
        t.action.schema_id
        for t in machine.transitions_from(state)
        if t.action.kind == "send"
    )


def reactivate(
    cz: ControlZone,
    registry: ProtocolRegistry,
    location: int,
    offending: Message | None,
) -> ReactivationPlan:
    """Wake every instance sharing the highest parking stamp.

    Each woken role retraces the shared journal with its own method
    graph; the journal is cut at the earliest of their recovery points
    (capped at the failure location) and the instances are rewound to
    replay the kept prefix.  The returned plan carries the input to
    re-fire and how far the counterpart must roll back.
    """
    pool = cz.deactivated()
    if not pool:
        raise NoViableRoleError("every parked role is used up")
    top = max(instance.stamp for instance in pool)
    cohort = [instance for instance in pool if instance.stamp == top]
    records = list(cz.journal.records)
    points = []
    for instance in cohort:
        machine = registry[instance.ref.protocol].roles[instance.ref.role]
        points.append(clamped_recovery_points(records, method_graph(machine), location))
    counterpart_point = min(p[0] for p in points)
    own_point = min(p[1] for p in points)
    refire = refire_input(records, own_point, offending)
    truncate_own(cz.journal, own_point)
    weak_guard = True
    any_send = False
    for instance in cohort:
        protocol = registry[instance.ref.protocol]
        machine = protocol.roles[instance.ref.role]
        instance.activation = ACTIVE
        instance.last_message = None
        instance.state = (
            replay_state(machine, protocol, cz.journal.records) or machine.initial_state
        )
        sends = _next_send_schemas(machine, instance.state)
        if sends:
            any_send = True
            if sends - weak_schema_ids(machine):
                weak_guard = False
    return ReactivationPlan(
        refs=tuple(instance.ref for instance in cohort),
        counterpart_point=counterpart_point,
        own_point=own_point,
        refire=refire,
        weak_guard=weak_guard and any_send,
        restart=own_point == 1,
    )


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------


def dump_control_zone(cz: ControlZone) -> str:
    """The journal dump plus one activation line per instance."""
    from .journal import dump_journal

    lines = [dump_journal(cz.journal)] if len(cz.journal) else []
    for ref in sorted(cz.instances):
        instance = cz.instances[ref]
        lines.append(
            f"{ref.protocol}:{ref.role} | {instance.activation} | "
            f"stamp={instance.stamp} | state={instance.state}"
        )
    return "\n".join(lines)
