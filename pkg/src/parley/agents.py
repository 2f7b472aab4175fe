"""Agents: the behaviors that drive selection and enactment on the bus.

Three families live here.  The joint-selection pair negotiates which
protocol and roles to use before anything domain-level happens.  The
individual-selection pair skips the negotiation: the opening domain
message itself makes the counterpart pick roles, either one at a time
(sequential, with purge-and-replace recovery) or all at once behind a
control zone (mixed).  A small machine driver shared by the initiator
and the sequential responder turns state machines into journaled
message exchanges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from random import Random

from .errors import NoViableRoleError
from .individual import (
    INITIATOR_DETECTED,
    PARTICIPANT_DETECTED,
    WRONG_CONTENT,
    WRONG_STRUCTURE,
    InteractionError,
    RoleCollection,
    build_collection,
    check_incoming,
    clamped_recovery_points,
    locate_emission,
    method_graph,
    purge_collection,
    receiving_roles,
    refire_input,
    select_replacement_role,
    truncate_counterpart,
    truncate_own,
)
from .journal import DataChange, Journal, MessageEmission, MessageReception
from .joint import (
    PROTOCOL_ORIENTED,
    CandidateMatrix,
    OneOneNSolution,
    OneOneSolution,
    ParticipantMetaState,
    ReadyToSelectPayload,
    SelectionFailure,
    acceptable_role,
    assign_roles_1_n,
    build_candidate_matrix,
    next_vector,
    participant_meta_step,
    select_largest_set,
)
from .machine import enabled_for_message, replay_state
from .mixed import (
    ControlZone,
    handle_error_mixed,
    handle_incoming,
    handle_refire,
    instantiate_all,
    reactivate,
    reconcile_after_step,
    sequence_tagger,
    stop_active,
)
from .model import (
    CALL_FOR_COLLABORATION,
    ERROR_NOTIFY,
    NOTIFY_ASSIGNMENT,
    READY_TO_SELECT,
    RECOVER_AT,
    SELECTION_PERFORMATIVES,
    STOP_SELECTION,
    TERMINATION_NOTICE,
    TERMINATION_WARNING,
    UNABLE_TO_SELECT,
    CompatibilityTable,
    InteractionModel,
    Message,
    ProtocolCategory,
    ProtocolRegistry,
    RoleKind,
    RoleRef,
    TaskDescription,
    Willingness,
    classify_protocol,
    match_task_to_protocols,
)
from .patterns import content_matches, fill_pattern
from .runtime import WAKE, AgentBase, SimRuntime

#: termination-warning reasons that end the interaction for good
FATAL_WARNINGS = frozenset({"exhausted", "no-viable-role"})

_CASCADE_LIMIT = 8


def _message(
    performative: str,
    content: dict,
    sender: str,
    receiver: str,
    conversation: str,
    reply_with: str | None = None,
    in_reply_to: str | None = None,
) -> Message:
    return Message(
        performative=performative,
        content=content,
        language="kv",
        ontology="core",
        sender=sender,
        receiver=receiver,
        conversation_id=conversation,
        reply_with=reply_with,
        in_reply_to=in_reply_to,
    )


# ---------------------------------------------------------------------------
# Machine driver: one enacted role over one journal
# ---------------------------------------------------------------------------


class MachineDriver:
    """Journaled execution of a single role state machine.

    Receptions come in through :meth:`receive`, internal steps are
    pumped until the machine has to wait, and every fired transition
    appends one journal record.  The driver never judges an incoming
    message - callers run :func:`check_incoming` first, so nothing
    invalid is ever journaled.
    """

    def __init__(
        self,
        ref: RoleRef,
        registry: ProtocolRegistry,
        journal: Journal,
        tagger,
        me: str,
        peer: str,
        conversation: str,
        content_overrides: dict[str, dict] | None = None,
    ) -> None:
        self.ref = ref
        self.protocol = registry[ref.protocol]
        self.machine = self.protocol.roles[ref.role]
        self.journal = journal
        self.tagger = tagger
        self.me = me
        self.peer = peer
        self.conversation = conversation
        self.content_overrides = content_overrides or {}
        self.state = self.machine.initial_state
        self.variables: dict[str, object] = {}
        self.last_received_tag: str | None = None

    @property
    def terminated(self) -> bool:
        return self.state in self.machine.terminal_states

    def _emit(self, schema_id: str) -> Message:
        schema = self.protocol.schema(schema_id)
        content = self.content_overrides.get(schema_id)
        if content is None or not content_matches(schema.content_pattern, content):
            content = fill_pattern(schema.content_pattern)
        return _message(
            schema.performative,
            content,
            self.me,
            self.peer,
            self.conversation,
            reply_with=self.tagger(),
            in_reply_to=self.last_received_tag,
        )

    def _fire(self, transition, input_event, rng: Random) -> Message | None:
        outputs: tuple = ()
        outgoing = None
        if transition.action.kind == "send":
            outgoing = self._emit(transition.action.schema_id)
            outputs = (MessageEmission(outgoing),)
        elif transition.action.kind == "data_change":
            value = (
                input_event.message.content
                if isinstance(input_event, MessageReception)
                else input_event.value
            )
            self.variables[transition.action.variable] = value
            outputs = (DataChange(transition.action.variable, value),)
        self.journal.append(transition.method, input_event, outputs)
        self.state = transition.to_state
        return outgoing

    def pump(self, rng: Random) -> list[Message]:
        """Fire internal transitions until the machine must wait."""
        sent: list[Message] = []
        for _ in range(_CASCADE_LIMIT):
            ready = [
                t
                for t in self.machine.transitions_from(self.state)
                if t.trigger.kind == "internal" and t.trigger.variable in self.variables
            ]
            if not ready:
                break
            t = ready[0] if len(ready) == 1 else rng.choice(ready)
            value = self.variables[t.trigger.variable]
            outgoing = self._fire(t, DataChange(t.trigger.variable, value), rng)
            if outgoing is not None:
                sent.append(outgoing)
        return sent

    def receive(self, msg: Message, rng: Random) -> list[Message]:
        """Journal a validated reception and everything it sets off."""
        enabled = enabled_for_message(self.machine, self.protocol, self.state, msg)
        if not enabled:
            raise ValueError(f"{self.ref} cannot take {msg.performative} in {self.state}")
        self.last_received_tag = msg.reply_with
        t = enabled[0] if len(enabled) == 1 else rng.choice(enabled)
        outgoing = self._fire(t, MessageReception(msg), rng)
        sent = [outgoing] if outgoing is not None else []
        sent.extend(self.pump(rng))
        return sent

    def resume(self, event, rng: Random) -> list[Message]:
        """Re-fire a recovered input event (reception or data change)."""
        if isinstance(event, MessageReception):
            return self.receive(event.message, rng)
        self.variables[event.variable] = event.value
        return self.pump(rng)

    def replay(self) -> None:
        """Rebuild state and variables from the journal as it stands."""
        self.state = (
            replay_state(self.machine, self.protocol, self.journal.records)
            or self.machine.initial_state
        )
        self.variables = {}
        self.last_received_tag = None
        for record in self.journal.records:
            if isinstance(record.input_event, MessageReception):
                self.last_received_tag = record.input_event.message.reply_with
            for event in record.output_events:
                if isinstance(event, DataChange):
                    self.variables[event.variable] = event.value


# ---------------------------------------------------------------------------
# Joint selection: initiator
# ---------------------------------------------------------------------------


@dataclass
class _Round:
    """One broadcast or per-pair contact within a vector."""

    number: int
    protocol: str | None = None
    agents: tuple[str, ...] = ()
    replies: dict[str, ReadyToSelectPayload] = field(default_factory=dict)
    refused: set[str] = field(default_factory=set)


class JointInitiator(AgentBase):
    """Runs the selection meta protocol for one task.

    Vectors come from the candidate matrix, least sparse first.  A
    one-to-one protocol is negotiated agent by agent: the first
    acceptable role wins.  Many-instance and multi-role protocols
    broadcast the call to the whole vector and arbitrate the replies
    (largest backing set, or an allocation along the father forest)
    once everyone answered or the reply deadline hit.
    """

    def __init__(
        self,
        name: str,
        task: TaskDescription,
        model: InteractionModel,
        registry: ProtocolRegistry,
        identified: dict[str, tuple[str, ...]],
        mode: str = PROTOCOL_ORIENTED,
        reply_deadline: int = 10,
    ) -> None:
        super().__init__(name)
        self.task = task
        self.model = model
        self.registry = registry
        self.identified = identified
        self.mode = mode
        self.reply_deadline = reply_deadline
        self.conversation = f"{task.task_id}!select"
        self.matrix: CandidateMatrix | None = None
        self.explored: set[str] = set()
        self.outcome = None
        self.round = _Round(number=0)
        self.pending_pairs: list[tuple[str, str]] = []
        self.inflight: tuple[str, str] | None = None
        self.contacted: set[str] = set()

    # -- plumbing ----------------------------------------------------------

    def _send(self, rt: SimRuntime, to: str, performative: str, content: dict) -> None:
        rt.schedule_send(
            _message(performative, content, self.name, to, self.conversation)
        )

    def _arm_deadline(self, rt: SimRuntime) -> None:
        rt.wake_self(
            self.name, self.conversation, {"round": self.round.number}, self.reply_deadline
        )

    def _category(self, protocol_id: str) -> ProtocolCategory:
        return classify_protocol(self.registry[protocol_id])

    # -- lifecycle ---------------------------------------------------------

    def on_start(self, rt: SimRuntime) -> None:
        candidates = match_task_to_protocols(self.task, self.model, self.registry)
        self.matrix = build_candidate_matrix(self.task, candidates, self.identified)
        rt.note(
            "selection",
            {
                "task": self.task.task_id,
                "step": "matrix",
                "protocols": list(self.matrix.protocols),
                "agents": list(self.matrix.agents),
                "cells": sorted(list(cell) for cell in self.matrix.cells),
            },
        )
        self._advance_vector(rt)

    def _advance_vector(self, rt: SimRuntime) -> None:
        vector = next_vector(self.matrix, self.mode, self.explored)
        if vector is None:
            self._conclude_failure(rt, "exhausted")
            return
        self.explored.add(vector)
        if self.mode == PROTOCOL_ORIENTED:
            pairs = [(vector, agent) for agent in self.matrix.row(vector)]
        else:
            pairs = [(protocol, vector) for protocol in self.matrix.column(vector)]
        rt.note(
            "selection",
            {"task": self.task.task_id, "step": "explore", "vector": vector},
        )
        if self.mode == PROTOCOL_ORIENTED and self._category(vector) in (
            ProtocolCategory.ONE_ONE_N,
            ProtocolCategory.ONE_N,
        ):
            self._open_broadcast(rt, vector, tuple(agent for _, agent in pairs))
        else:
            self.pending_pairs = pairs
            self._contact_next(rt)

    # -- one-to-one: agent after agent --------------------------------------

    def _contact_next(self, rt: SimRuntime) -> None:
        if not self.pending_pairs:
            self._advance_vector(rt)
            return
        protocol_id, agent = self.pending_pairs.pop(0)
        self.round = _Round(number=self.round.number + 1, protocol=protocol_id)
        self.inflight = (protocol_id, agent)
        self.contacted.add(agent)
        self._send(
            rt,
            agent,
            CALL_FOR_COLLABORATION,
            {"protocol": protocol_id, "task": self.task.task_id},
        )
        self._arm_deadline(rt)

    def _settle_one_one(self, rt: SimRuntime, agent: str, roles: list[RoleRef]) -> bool:
        ref = acceptable_role(roles, frozenset(self.matrix.protocols), self.registry)
        if ref is None:
            return False
        self._send(rt, agent, NOTIFY_ASSIGNMENT, {"role": str(ref)})
        self.outcome = OneOneSolution(agent=agent, protocol=ref.protocol, role=ref)
        rt.note(
            "selection",
            {
                "task": self.task.task_id,
                "step": "solved",
                "outcome": "one-one",
                "agent": agent,
                "protocol": ref.protocol,
                "role": str(ref),
            },
        )
        rt.note(
            "termination",
            {
                "conversation": self.conversation,
                "agent": self.name,
                "status": "concluded",
            },
        )
        self.inflight = None
        return True

    # -- broadcast rounds ----------------------------------------------------

    def _open_broadcast(self, rt: SimRuntime, protocol_id: str, agents: tuple[str, ...]) -> None:
        self.round = _Round(
            number=self.round.number + 1, protocol=protocol_id, agents=agents
        )
        self.inflight = None
        for agent in agents:
            self.contacted.add(agent)
            self._send(
                rt,
                agent,
                CALL_FOR_COLLABORATION,
                {"protocol": protocol_id, "task": self.task.task_id},
            )
        self._arm_deadline(rt)

    def _maybe_arbitrate(self, rt: SimRuntime, deadline: bool) -> None:
        answered = len(self.round.replies) + len(self.round.refused)
        if not deadline and answered < len(self.round.agents):
            return
        protocol_id = self.round.protocol
        category = self._category(protocol_id)
        replies = self.round.replies
        self.round = _Round(number=self.round.number + 1)  # invalidate late wakes
        if category is ProtocolCategory.ONE_ONE_N:
            picked = select_largest_set(replies, frozenset(self.matrix.protocols))
            if picked is None:
                self._stop_agents(rt, replies)
                self._advance_vector(rt)
                return
            role, agents = picked
            for agent in sorted(agents):
                self._send(rt, agent, NOTIFY_ASSIGNMENT, {"role": str(role)})
            self._stop_agents(rt, {a: None for a in replies if a not in agents})
            self.outcome = OneOneNSolution(
                agents=agents, protocol=role.protocol, role=role
            )
            rt.note(
                "selection",
                {
                    "task": self.task.task_id,
                    "step": "solved",
                    "outcome": "largest-set",
                    "role": str(role),
                    "agents": sorted(agents),
                },
            )
        else:
            solution = assign_roles_1_n(replies, [self.registry[protocol_id]], rt.rng)
            if solution is None:
                self._stop_agents(rt, replies)
                self._advance_vector(rt)
                return
            by_agent: dict[str, list[RoleRef]] = {}
            for ref, agent in solution.assignment.items():
                by_agent.setdefault(agent, []).append(ref)
            for agent in sorted(by_agent):
                refs = sorted(by_agent[agent])
                self._send(
                    rt,
                    agent,
                    NOTIFY_ASSIGNMENT,
                    {"role": str(refs[0]), "roles": [str(r) for r in refs]},
                )
            self._stop_agents(rt, {a: None for a in replies if a not in by_agent})
            self.outcome = solution
            rt.note(
                "selection",
                {
                    "task": self.task.task_id,
                    "step": "solved",
                    "outcome": "role-allocation",
                    "protocol": solution.protocol,
                    "assignment": {
                        str(ref): agent
                        for ref, agent in sorted(solution.assignment.items())
                    },
                },
            )
        rt.note(
            "termination",
            {
                "conversation": self.conversation,
                "agent": self.name,
                "status": "concluded",
            },
        )

    def _stop_agents(self, rt: SimRuntime, agents) -> None:
        for agent in sorted(agents):
            self._send(rt, agent, STOP_SELECTION, {})

    def _conclude_failure(self, rt: SimRuntime, reason: str) -> None:
        self.outcome = SelectionFailure(reason=reason)
        rt.note(
            "selection",
            {"task": self.task.task_id, "step": "failed", "reason": reason},
        )
        rt.note(
            "termination",
            {
                "conversation": self.conversation,
                "agent": self.name,
                "status": "failed",
            },
        )

    # -- message handling ----------------------------------------------------

    def on_message(self, rt: SimRuntime, msg: Message) -> None:
        if self.outcome is not None:
            if msg.performative == READY_TO_SELECT:
                self._send(rt, msg.sender, STOP_SELECTION, {})
            return
        if msg.performative == WAKE:
            if msg.content.get("round") != self.round.number:
                return  # a stale timer
            if self.round.agents:
                self._maybe_arbitrate(rt, deadline=True)
            elif self.inflight is not None:
                _, agent = self.inflight
                self._send(rt, agent, STOP_SELECTION, {})
                self.inflight = None
                self._contact_next(rt)
            return
        if msg.performative == READY_TO_SELECT:
            roles = [RoleRef.parse(r) for r in msg.content.get("roles", [])]
            if self.round.agents:  # broadcast round
                if msg.sender in self.round.agents and roles:
                    self.round.replies[msg.sender] = ReadyToSelectPayload(
                        preferred_roles=tuple(roles)
                    )
                    self._maybe_arbitrate(rt, deadline=False)
                return
            if self.inflight is None or msg.sender != self.inflight[1]:
                self._send(rt, msg.sender, STOP_SELECTION, {})  # late reply
                return
            if self._settle_one_one(rt, msg.sender, roles):
                return
            self._send(rt, msg.sender, STOP_SELECTION, {})
            self.inflight = None
            self._contact_next(rt)
            return
        if msg.performative == UNABLE_TO_SELECT:
            if self.round.agents:
                if msg.sender in self.round.agents:
                    self.round.refused.add(msg.sender)
                    self._maybe_arbitrate(rt, deadline=False)
                return
            if self.inflight is not None and msg.sender == self.inflight[1]:
                self.inflight = None
                self._contact_next(rt)
            return


# ---------------------------------------------------------------------------
# Joint selection: participant
# ---------------------------------------------------------------------------


class SelectionParticipant(AgentBase):
    """Answers calls for collaboration with the roles it can commit to."""

    def __init__(
        self,
        name: str,
        model: InteractionModel,
        registry: ProtocolRegistry,
        table: CompatibilityTable,
        willing: Willingness,
        preferences: tuple[RoleRef, ...] = (),
    ) -> None:
        super().__init__(name)
        self.model = model
        self.registry = registry
        self.table = table
        self.willing = willing
        self.preferences = preferences
        self.meta: dict[str, ParticipantMetaState] = {}

    def on_message(self, rt: SimRuntime, msg: Message) -> None:
        if msg.performative not in SELECTION_PERFORMATIVES:
            return
        state = self.meta.get(msg.conversation_id, ParticipantMetaState())
        new_state, replies = participant_meta_step(
            state,
            msg,
            self.model,
            self.table,
            self.registry,
            self.willing,
            self.preferences,
        )
        self.meta[msg.conversation_id] = new_state
        for performative, content in replies:
            rt.schedule_send(
                _message(
                    performative, content, self.name, msg.sender, msg.conversation_id
                )
            )
        if new_state.phase == "assigned" and state.phase != "assigned":
            rt.note(
                "termination",
                {
                    "conversation": msg.conversation_id,
                    "agent": self.name,
                    "status": "selected",
                    "role": str(new_state.assignment),
                },
            )


class SilentAgent(AgentBase):
    """Registered but never answers; exists to exercise deadlines."""


# ---------------------------------------------------------------------------
# Individual selection: initiator
# ---------------------------------------------------------------------------


class IndividualInitiator(AgentBase):
    """Opens a domain interaction directly and polices the replies.

    Every reception is validated before it is journaled; a bad one is
    reported with an error notice and simply dropped.  The counterpart
    answers either with a substitute message (mixed mode) or with a
    recover-at point that tells this side how much of its own journal
    still stands.
    """

    def __init__(
        self,
        name: str,
        task: TaskDescription,
        model: InteractionModel,
        registry: ProtocolRegistry,
        participant: str,
    ) -> None:
        super().__init__(name)
        self.task = task
        self.model = model
        self.registry = registry
        self.participant = participant
        self.conversation = f"{task.task_id}/{participant}"
        self.journal = Journal(owner=name, conversation_id=self.conversation)
        self.driver: MachineDriver | None = None
        self.status: str | None = None  # None while running
        self.final_state: str | None = None
        self.errors_reported = 0
        self.awaiting_notice = False

    @property
    def terminated(self) -> bool:
        return self.status is not None

    def on_start(self, rt: SimRuntime) -> None:
        matched = match_task_to_protocols(self.task, self.model, self.registry)
        if not matched:
            self.status = "failed"
            rt.note(
                "termination",
                {
                    "conversation": self.conversation,
                    "agent": self.name,
                    "status": "failed",
                    "reason": "no-protocol",
                },
            )
            return
        protocol, role_id = matched[0]
        overrides = self.task.constraints.get("contents", {})
        self.driver = MachineDriver(
            protocol.ref(role_id),
            self.registry,
            self.journal,
            sequence_tagger(self.name),
            me=self.name,
            peer=self.participant,
            conversation=self.conversation,
            content_overrides=overrides,
        )
        self.driver.variables["task"] = self.task.task_id
        for outgoing in self.driver.pump(rt.rng):
            rt.schedule_send(outgoing)

    def _conclude(self, rt: SimRuntime, status: str, **extra) -> None:
        self.status = status
        self.final_state = self.driver.state if self.driver else None
        rt.note(
            "termination",
            {
                "conversation": self.conversation,
                "agent": self.name,
                "status": status,
                **extra,
            },
        )

    def on_message(self, rt: SimRuntime, msg: Message) -> None:
        if self.terminated or self.driver is None:
            return
        performative = msg.performative
        if performative == ERROR_NOTIFY:
            # The counterpart flagged one of this side's messages; its
            # recover-at (or failure warning) follows, so just wait.
            return
        if performative == RECOVER_AT:
            point = int(msg.content.get("point", 1))
            truncate_counterpart(self.journal, point)
            self.driver.replay()
            return
        if performative == TERMINATION_WARNING:
            reason = msg.content.get("reason", "")
            if reason in FATAL_WARNINGS:
                self._conclude(rt, "failed", reason=reason)
            return
        if performative == TERMINATION_NOTICE:
            if self.awaiting_notice:
                self.awaiting_notice = False
                self._conclude(rt, "concluded", final_state=self.driver.state)
            return
        if performative == WAKE:
            return
        verdict = check_incoming(
            self.driver.machine, self.driver.protocol, self.driver.state, msg
        )
        if verdict is not None:
            self.errors_reported += 1
            rt.schedule_send(
                _message(
                    ERROR_NOTIFY,
                    {
                        "kind": verdict,
                        "tag": msg.reply_with or "",
                        "detected-by": "initiator",
                    },
                    self.name,
                    self.participant,
                    self.conversation,
                )
            )
            return
        for outgoing in self.driver.receive(msg, rt.rng):
            rt.schedule_send(outgoing)
        if self.driver.terminated and not self.awaiting_notice:
            self.awaiting_notice = True
            rt.schedule_send(
                _message(
                    TERMINATION_NOTICE,
                    {"state": self.driver.state},
                    self.name,
                    self.participant,
                    self.conversation,
                )
            )


# ---------------------------------------------------------------------------
# Individual selection: sequential responder
# ---------------------------------------------------------------------------


@dataclass
class _SequentialThread:
    peer: str
    conversation: str
    collection: RoleCollection
    journal: Journal
    tagger: object
    driver: MachineDriver | None = None
    closed: bool = False


class SequentialResponder(AgentBase):
    """Picks one candidate role per conversation and swaps it on error.

    The opening message fixes the collection (every enacted participant
    role that takes it in its initial state); a seeded draw activates
    one.  An error notice from the initiator triggers the purge rules,
    a replacement draw, the recovery-point computation, and a journal
    rewind on both sides; a reception nobody can take does the same
    from this side.
    """

    def __init__(self, name: str, model: InteractionModel, registry: ProtocolRegistry) -> None:
        super().__init__(name)
        self.model = model
        self.registry = registry
        self.threads: dict[str, _SequentialThread] = {}

    # -- helpers -------------------------------------------------------------

    def _reply(self, rt, thread, performative, content) -> None:
        rt.schedule_send(
            _message(performative, content, self.name, thread.peer, thread.conversation)
        )

    def _fail(self, rt: SimRuntime, thread: _SequentialThread, reason: str) -> None:
        self._reply(rt, thread, TERMINATION_WARNING, {"reason": reason})
        rt.note(
            "termination",
            {
                "conversation": thread.conversation,
                "agent": self.name,
                "status": "failed",
                "reason": reason,
            },
        )
        thread.closed = True

    def _new_driver(self, thread: _SequentialThread, ref: RoleRef) -> MachineDriver:
        driver = MachineDriver(
            ref,
            self.registry,
            thread.journal,
            thread.tagger,
            me=self.name,
            peer=thread.peer,
            conversation=thread.conversation,
        )
        return driver

    def _opening_rejection_kind(self, refs, msg: Message) -> str:
        """Nobody took the opening: content or structure complaint?"""
        for ref in refs:
            protocol = self.registry[ref.protocol]
            machine = protocol.roles[ref.role]
            if enabled_for_message(
                machine, protocol, machine.initial_state, msg, structural_only=True
            ):
                return WRONG_CONTENT
        return WRONG_STRUCTURE

    # -- the two recovery paths ----------------------------------------------

    def _recover(
        self,
        rt: SimRuntime,
        thread: _SequentialThread,
        error: InteractionError,
        culprit_method: str | None,
        error_input,
    ) -> None:
        records = list(thread.journal.records)
        prefix = records[: error.location - 1]
        thread.collection.remove(thread.driver.ref)
        purged = purge_collection(
            thread.collection,
            self.registry,
            prefix,
            error,
            culprit_method=culprit_method,
            error_input=error_input,
        )
        try:
            replacement = select_replacement_role(
                thread.collection, self.registry, prefix, error, rt.rng
            )
        except NoViableRoleError:
            self._fail(rt, thread, "exhausted")
            return
        machine = self.registry[replacement.protocol].roles[replacement.role]
        counterpart_point, own_point = clamped_recovery_points(
            records, method_graph(machine), error.location
        )
        refire = refire_input(
            records,
            own_point,
            error.offending if error.detected_by == PARTICIPANT_DETECTED else None,
        )
        truncate_own(thread.journal, own_point)
        thread.collection.activate(replacement)
        thread.driver = self._new_driver(thread, replacement)
        thread.driver.replay()
        rt.note(
            "recovery",
            {
                "conversation": thread.conversation,
                "agent": self.name,
                "action": "replacement",
                "kind": error.kind,
                "purged": [str(r) for r in purged],
                "role": str(replacement),
                "points": [counterpart_point, own_point],
            },
        )
        self._reply(rt, thread, RECOVER_AT, {"point": counterpart_point})
        for outgoing in thread.driver.resume(refire, rt.rng):
            rt.schedule_send(outgoing)

    # -- message handling ------------------------------------------------------

    def on_message(self, rt: SimRuntime, msg: Message) -> None:
        conversation = msg.conversation_id
        thread = self.threads.get(conversation)
        if thread is not None and thread.closed:
            return
        performative = msg.performative
        if performative == WAKE or performative in SELECTION_PERFORMATIVES:
            return
        if thread is None:
            thread = _SequentialThread(
                peer=msg.sender,
                conversation=conversation,
                collection=RoleCollection.of(()),
                journal=Journal(owner=self.name, conversation_id=conversation),
                tagger=sequence_tagger(self.name),
            )
            self.threads[conversation] = thread
        if performative == ERROR_NOTIFY:
            if thread.driver is None:
                return
            kind = msg.content.get("kind", WRONG_STRUCTURE)
            tag = msg.content.get("tag", "")
            location = locate_emission(thread.journal.records, tag)
            if location == 0:
                return  # notice about a message this journal never sent
            record = thread.journal.records[location - 1]
            offending = record.emissions()[0]
            error = InteractionError(
                kind=kind,
                location=location,
                offending=offending,
                detected_by=INITIATOR_DETECTED,
            )
            self._recover(
                rt,
                thread,
                error,
                culprit_method=record.method,
                error_input=record.input_event,
            )
            return
        if performative == TERMINATION_NOTICE:
            self._reply(rt, thread, TERMINATION_NOTICE, {"state": "acknowledged"})
            rt.note(
                "termination",
                {
                    "conversation": conversation,
                    "agent": self.name,
                    "status": "concluded",
                },
            )
            thread.closed = True
            return
        if performative in (TERMINATION_WARNING, RECOVER_AT):
            return
        # -- a domain message --------------------------------------------------
        if thread.driver is None:
            base = build_collection(self.model, self.registry, RoleKind.PARTICIPANT)
            takers = receiving_roles(base, self.registry, msg)
            thread.collection = RoleCollection.of(takers)
            if not takers:
                kind = self._opening_rejection_kind(base.available(), msg)
                self._reply(
                    rt,
                    thread,
                    ERROR_NOTIFY,
                    {"kind": kind, "tag": msg.reply_with or "", "detected-by": "participant"},
                )
                self._fail(rt, thread, "no-viable-role")
                return
            chosen = takers[0] if len(takers) == 1 else rt.rng.choice(takers)
            thread.collection.activate(chosen)
            thread.driver = self._new_driver(thread, chosen)
            rt.note(
                "selection",
                {
                    "conversation": conversation,
                    "agent": self.name,
                    "step": "role-instantiated",
                    "role": str(chosen),
                    "collection": [str(r) for r in thread.collection.available()],
                },
            )
            for outgoing in thread.driver.receive(msg, rt.rng):
                rt.schedule_send(outgoing)
            return
        verdict = check_incoming(
            thread.driver.machine, thread.driver.protocol, thread.driver.state, msg
        )
        if verdict is None:
            for outgoing in thread.driver.receive(msg, rt.rng):
                rt.schedule_send(outgoing)
            return
        location = len(thread.journal.records) + 1
        self._reply(
            rt,
            thread,
            ERROR_NOTIFY,
            {"kind": verdict, "tag": msg.reply_with or "", "detected-by": "participant"},
        )
        error = InteractionError(
            kind=verdict,
            location=location,
            offending=msg,
            detected_by=PARTICIPANT_DETECTED,
        )
        self._recover(rt, thread, error, culprit_method=None, error_input=None)


# ---------------------------------------------------------------------------
# Individual selection: mixed responder
# ---------------------------------------------------------------------------


@dataclass
class _MixedThread:
    peer: str
    conversation: str
    zone: ControlZone | None = None
    opening: Message | None = None
    closed: bool = False


class MixedResponder(AgentBase):
    """Runs every candidate role at once behind a control zone.

    The opening message instantiates the whole collection; one
    generated reply is selected per step and the rest stay parked as
    alternates.  Error notices first try a substitute from the current
    step's alternates, then wake the most recently parked cohort and
    rewind the shared journal to a point every woken role can retrace.
    """

    def __init__(self, name: str, model: InteractionModel, registry: ProtocolRegistry) -> None:
        super().__init__(name)
        self.model = model
        self.registry = registry
        self.threads: dict[str, _MixedThread] = {}

    def _reply(self, rt, thread, performative, content) -> None:
        rt.schedule_send(
            _message(performative, content, self.name, thread.peer, thread.conversation)
        )

    def _fail(self, rt: SimRuntime, thread: _MixedThread, reason: str) -> None:
        self._reply(rt, thread, TERMINATION_WARNING, {"reason": reason})
        rt.note(
            "termination",
            {
                "conversation": thread.conversation,
                "agent": self.name,
                "status": "failed",
                "reason": reason,
            },
        )
        thread.closed = True

    def _send_selected(self, rt: SimRuntime, thread: _MixedThread) -> None:
        outgoing = reconcile_after_step(thread.zone, self.registry, rt.rng)
        rt.schedule_send(outgoing)

    def _wake_parked(
        self,
        rt: SimRuntime,
        thread: _MixedThread,
        location: int,
        offending: Message | None,
    ) -> None:
        """Reactivate cohorts until one takes the re-fired input."""
        cz = thread.zone
        guard = 2 * len(cz.instances) + 1
        for _ in range(guard):
            if offending is None and len(cz.journal) == 0:
                # nothing left to retrace: re-fire the opening itself
                offending = thread.opening
            try:
                plan = reactivate(cz, self.registry, location, offending)
            except NoViableRoleError:
                self._fail(rt, thread, "exhausted")
                return
            rt.note(
                "recovery",
                {
                    "conversation": thread.conversation,
                    "agent": self.name,
                    "action": "reactivation",
                    "roles": [str(r) for r in plan.refs],
                    "points": [plan.counterpart_point, plan.own_point],
                    "restart": plan.restart,
                },
            )
            self._reply(rt, thread, RECOVER_AT, {"point": plan.counterpart_point})
            if plan.weak_guard:
                self._reply(rt, thread, TERMINATION_WARNING, {"reason": "weak-cohort"})
            verdict = handle_refire(cz, self.registry, plan.refire, rt.rng)
            if verdict is None and cz.outbox:
                self._send_selected(rt, thread)
                return
            stop_active(cz)
            location = max(len(cz.journal), 1)
            offending = None
        self._fail(rt, thread, "exhausted")

    def on_message(self, rt: SimRuntime, msg: Message) -> None:
        conversation = msg.conversation_id
        thread = self.threads.get(conversation)
        if thread is not None and thread.closed:
            return
        performative = msg.performative
        if performative == WAKE or performative in SELECTION_PERFORMATIVES:
            return
        if thread is None:
            thread = _MixedThread(peer=msg.sender, conversation=conversation)
            self.threads[conversation] = thread
        if performative == ERROR_NOTIFY:
            if thread.zone is None or not thread.zone.sent_history:
                return
            kind = msg.content.get("kind", WRONG_STRUCTURE)
            failed = thread.zone.sent_history[-1]
            substitute = handle_error_mixed(thread.zone, self.registry, kind, rt.rng)
            if substitute is not None:
                rt.note(
                    "recovery",
                    {
                        "conversation": conversation,
                        "agent": self.name,
                        "action": "replacement",
                        "kind": kind,
                        "tag": substitute.reply_with,
                    },
                )
                rt.schedule_send(substitute)
                return
            location = 1
            if failed is not None:
                location = max(1, len(thread.zone.journal) - len(failed.records) + 1)
            self._wake_parked(rt, thread, location, offending=None)
            return
        if performative == TERMINATION_NOTICE:
            self._reply(rt, thread, TERMINATION_NOTICE, {"state": "acknowledged"})
            rt.note(
                "termination",
                {
                    "conversation": conversation,
                    "agent": self.name,
                    "status": "concluded",
                },
            )
            thread.closed = True
            return
        if performative in (TERMINATION_WARNING, RECOVER_AT):
            return
        # -- a domain message --------------------------------------------------
        if thread.zone is None:
            base = build_collection(self.model, self.registry, RoleKind.PARTICIPANT)
            takers = receiving_roles(base, self.registry, msg)
            if not takers:
                structural = any(
                    enabled_for_message(
                        self.registry[ref.protocol].roles[ref.role],
                        self.registry[ref.protocol],
                        self.registry[ref.protocol].roles[ref.role].initial_state,
                        msg,
                        structural_only=True,
                    )
                    for ref in base.available()
                )
                kind = WRONG_CONTENT if structural else WRONG_STRUCTURE
                self._reply(
                    rt,
                    thread,
                    ERROR_NOTIFY,
                    {"kind": kind, "tag": msg.reply_with or "", "detected-by": "participant"},
                )
                self._fail(rt, thread, "no-viable-role")
                return
            thread.opening = msg
            thread.zone = instantiate_all(
                RoleCollection.of(takers),
                self.registry,
                msg,
                sequence_tagger(self.name),
                rt.rng,
            )
            rt.note(
                "selection",
                {
                    "conversation": conversation,
                    "agent": self.name,
                    "step": "all-instantiated",
                    "collection": [str(r) for r in sorted(thread.zone.instances)],
                    "candidates": len(thread.zone.outbox),
                },
            )
            if not thread.zone.outbox:
                self._fail(rt, thread, "no-viable-role")
                return
            self._send_selected(rt, thread)
            return
        verdict = handle_incoming(thread.zone, self.registry, msg, rt.rng)
        if verdict is None:
            if thread.zone.outbox:
                self._send_selected(rt, thread)
            return
        self._reply(
            rt,
            thread,
            ERROR_NOTIFY,
            {"kind": verdict, "tag": msg.reply_with or "", "detected-by": "participant"},
        )
        stop_active(thread.zone)
        self._wake_parked(
            rt, thread, location=len(thread.zone.journal) + 1, offending=msg
        )
