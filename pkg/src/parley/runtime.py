"""Deterministic discrete-tick message bus with scripted fault injection.

Agents are step functions invoked serially: the bus pops the next
delivery, hands it to the receiving agent, and collects whatever that
agent schedules in response.  Zero-delay sends land later within the
same tick, so a request/reply cascade plays out tick-locally while
still being totally ordered by enqueue sequence.  All randomness in a
run flows through the single seeded stream owned by the bus, and the
trace is a flat list of events ordered by (tick, sequence), so a
(scenario, seed) pair reproduces byte-identically.

Timers are plain self-addressed messages: an agent that wants to hear
back in N ticks schedules a wake to itself with delay N.  Self-sends
never count as conversation traffic, which keeps fault ordinals and
message tallies about the actual exchange.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, replace
from fnmatch import fnmatch
from random import Random
from typing import Protocol as TypingProtocol

from .errors import BudgetExceededError, UnknownReceiverError
from .model import RESERVED_PERFORMATIVES, Message
from .patterns import get_leaf, leaf_paths, set_leaf

#: performative of self-addressed timer messages
WAKE = "wake"

#: hard per-tick delivery cap; hitting it means a zero-delay livelock
PER_TICK_LIMIT = 10_000


@dataclass
class SimClock:
    tick: int = 0

    def advance_to(self, tick: int) -> None:
        if tick < self.tick:
            raise ValueError(f"clock cannot go back from {self.tick} to {tick}")
        self.tick = tick


@dataclass(frozen=True)
class TraceEvent:
    tick: int
    kind: str  # send | deliver | fault | recovery | selection | termination
    payload: dict

    def as_dict(self) -> dict:
        return {"tick": self.tick, "kind": self.kind, **self.payload}


def render_trace(trace: list[TraceEvent]) -> str:
    """One JSON object per line, fields in insertion order."""
    return "".join(json.dumps(event.as_dict()) + "\n" for event in trace)


def write_trace(trace: list[TraceEvent], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_trace(trace))


# ---------------------------------------------------------------------------
# Fault injection
# ---------------------------------------------------------------------------

STRUCTURE_FIELDS = ("performative", "language", "ontology", "shape")


@dataclass(frozen=True)
class FaultSpec:
    """One-shot mutation of the n-th conversation message in flight.

    Only messages of the interaction itself are counted: reserved
    (selection and control) performatives and self-addressed wakes
    pass through untouched and uncounted.
    """

    conversation: str  # fnmatch pattern over conversation ids
    ordinal: int  # 1-based position among counted messages
    op: str  # corrupt_structure | corrupt_content
    #: for corrupt_structure: which structural facet to mangle
    structure_field: str = "performative"
    #: for corrupt_content: path to the leaf to type-swap; falls back
    #: to the first leaf when the path does not resolve
    path: tuple = ()

    def __post_init__(self) -> None:
        if self.ordinal < 1:
            raise ValueError("fault ordinal is 1-based")
        if self.op not in ("corrupt_structure", "corrupt_content"):
            raise ValueError(f"unknown fault op {self.op!r}")
        if self.op == "corrupt_structure" and self.structure_field not in STRUCTURE_FIELDS:
            raise ValueError(f"unknown structure field {self.structure_field!r}")


def corrupt_structure(msg: Message, structure_field: str) -> Message:
    """Break one structural facet while leaving the payload alone."""
    if structure_field == "performative":
        return replace(msg, performative=f"garbled-{msg.performative}")
    if structure_field == "language":
        return replace(msg, language="garbled")
    if structure_field == "ontology":
        return replace(msg, ontology="garbled")
    if isinstance(msg.content, dict):
        return replace(msg, content={**msg.content, "garbled": True})
    return replace(msg, content={"garbled": msg.content})


def corrupt_content(msg: Message, path: tuple) -> Message:
    """Swap the type of one content leaf; the shape stays intact."""
    paths = leaf_paths(msg.content)
    if not paths:
        return msg
    target = tuple(path) if tuple(path) in paths else paths[0]
    old = get_leaf(msg.content, target)
    new = 99 if isinstance(old, str) else "garbled"
    return replace(msg, content=set_leaf(msg.content, target, new))


@dataclass
class _FaultState:
    spec: FaultSpec
    seen: int = 0
    used: bool = False


# ---------------------------------------------------------------------------
# The bus
# ---------------------------------------------------------------------------


class Agent(TypingProtocol):
    """Anything the bus can deliver to."""

    name: str

    def on_start(self, runtime: "SimRuntime") -> None:
        """Called once before the first tick runs."""

    def on_message(self, runtime: "SimRuntime", msg: Message) -> None:
        """Handle one delivered message; schedule replies on the runtime."""


class AgentBase:
    """Convenience base: a named agent that ignores everything."""

    def __init__(self, name: str) -> None:
        self.name = name

    def on_start(self, runtime: "SimRuntime") -> None:
        pass

    def on_message(self, runtime: "SimRuntime", msg: Message) -> None:
        pass


class SimRuntime:
    def __init__(self, seed: int = 0, max_ticks: int = 200) -> None:
        self.clock = SimClock()
        self.rng = Random(seed)
        self.seed = seed
        self.max_ticks = max_ticks
        self.agents: dict[str, Agent] = {}
        self.trace: list[TraceEvent] = []
        self._heap: list[tuple[int, int, Message]] = []
        self._seq = 0
        self._faults: list[_FaultState] = []
        self._started = False

    # -- wiring ------------------------------------------------------------

    def register(self, agent: Agent) -> None:
        if agent.name in self.agents:
            raise ValueError(f"agent {agent.name!r} registered twice")
        self.agents[agent.name] = agent

    def inject_fault(self, spec: FaultSpec) -> None:
        self._faults.append(_FaultState(spec))

    # -- event log ---------------------------------------------------------

    def note(self, kind: str, payload: dict) -> None:
        self.trace.append(TraceEvent(tick=self.clock.tick, kind=kind, payload=payload))

    # -- sending -----------------------------------------------------------

    def schedule_send(self, msg: Message, delay: int = 0) -> None:
        if delay < 0:
            raise ValueError("delay must be >= 0")
        if msg.receiver not in self.agents:
            raise UnknownReceiverError(f"no agent named {msg.receiver!r}")
        self._seq += 1
        heapq.heappush(self._heap, (self.clock.tick + delay, self._seq, msg))
        self.note(
            "send",
            {
                "seq": self._seq,
                "from": msg.sender,
                "to": msg.receiver,
                "conversation": msg.conversation_id,
                "performative": msg.performative,
                "tag": msg.reply_with,
                "content": msg.content,
            },
        )

    def wake_self(self, agent: str, conversation: str, content: dict, delay: int) -> None:
        """Schedule a timer: a wake message from the agent to itself."""
        self.schedule_send(
            Message(
                performative=WAKE,
                content=content,
                language="kv",
                ontology="core",
                sender=agent,
                receiver=agent,
                conversation_id=conversation,
            ),
            delay=delay,
        )

    # -- running -----------------------------------------------------------

    def _counted_for_faults(self, msg: Message) -> bool:
        return (
            msg.sender != msg.receiver
            and msg.performative not in RESERVED_PERFORMATIVES
            and msg.performative != WAKE
        )

    def _apply_faults(self, seq: int, msg: Message) -> Message:
        if not self._counted_for_faults(msg):
            return msg
        for state in self._faults:
            if state.used or not fnmatch(msg.conversation_id, state.spec.conversation):
                continue
            state.seen += 1
            if state.seen != state.spec.ordinal:
                continue
            state.used = True
            if state.spec.op == "corrupt_structure":
                msg = corrupt_structure(msg, state.spec.structure_field)
            else:
                msg = corrupt_content(msg, state.spec.path)
            self.note(
                "fault",
                {
                    "seq": seq,
                    "op": state.spec.op,
                    "conversation": msg.conversation_id,
                    "ordinal": state.spec.ordinal,
                },
            )
        return msg

    def _deliver(self, seq: int, msg: Message) -> None:
        msg = self._apply_faults(seq, msg)
        self.note(
            "deliver",
            {
                "seq": seq,
                "from": msg.sender,
                "to": msg.receiver,
                "conversation": msg.conversation_id,
                "performative": msg.performative,
            },
        )
        self.agents[msg.receiver].on_message(self, msg)

    def run_until_quiescent(self, max_ticks: int | None = None) -> list[TraceEvent]:
        budget = self.max_ticks if max_ticks is None else max_ticks
        if budget <= 0:
            raise ValueError("max_ticks must be positive")
        if not self._started:
            self._started = True
            for agent in list(self.agents.values()):
                agent.on_start(self)
        while self._heap:
            next_tick = self._heap[0][0]
            if next_tick > budget:
                raise BudgetExceededError(
                    f"{len(self._heap)} message(s) still pending at tick budget {budget}"
                )
            self.clock.advance_to(next_tick)
            delivered = 0
            while self._heap and self._heap[0][0] == self.clock.tick:
                _, seq, msg = heapq.heappop(self._heap)
                delivered += 1
                if delivered > PER_TICK_LIMIT:
                    raise BudgetExceededError(
                        f"over {PER_TICK_LIMIT} deliveries in tick {self.clock.tick}; "
                        f"zero-delay livelock"
                    )
                self._deliver(seq, msg)
        return self.trace
