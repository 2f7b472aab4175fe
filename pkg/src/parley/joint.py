"""Joint selection of a protocol and of the agents enacting its roles.

An initiator holding a task first builds a candidate matrix: one row
per protocol able to carry the task, one column per agent known to
enact a role of that protocol.  Exploration then walks the matrix one
vector at a time, always starting from the vector with the most cells,
and runs a five-performative exchange with the candidates:

    call-for-collaboration ->  ready-to-select | unable-to-select
    then                       notify-assignment | stop-selection

Arbitration depends on the protocol category: one-to-one interactions
accept the first agreeable agent, single-role many-instance protocols
pick the role backed by the largest candidate set, and multi-role
protocols allocate one agent per role along the protocol's father
forest.
"""

from __future__ import annotations

from dataclasses import dataclass
from random import Random
from typing import Iterable, Protocol as TypingProtocol

from .errors import (
    CyclicFatherRelationError,
    ProtocolViolationError,
    TransportDownError,
)
from .model import (
    CALL_FOR_COLLABORATION,
    NOTIFY_ASSIGNMENT,
    READY_TO_SELECT,
    STOP_SELECTION,
    UNABLE_TO_SELECT,
    CompatibilityTable,
    InteractionModel,
    Message,
    Protocol,
    ProtocolRegistry,
    RoleKind,
    RoleRef,
    TaskDescription,
    Willingness,
    compatible,
)

# ---------------------------------------------------------------------------
# Candidate matrix
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateMatrix:
    """Protocol x agent incidence for one task."""

    task_id: str
    protocols: tuple[str, ...]
    agents: tuple[str, ...]
    cells: frozenset[tuple[str, str]]  # (protocol_id, agent_id)

    def row(self, protocol_id: str) -> tuple[str, ...]:
        return tuple(a for a in self.agents if (protocol_id, a) in self.cells)

    def column(self, agent_id: str) -> tuple[str, ...]:
        return tuple(p for p in self.protocols if (p, agent_id) in self.cells)


def build_candidate_matrix(
    task: TaskDescription,
    candidates: Iterable[tuple[Protocol, str]],
    identified: dict[str, Iterable[str]],
) -> CandidateMatrix:
    """Cross the matched protocols with the agents identified for each.

    ``identified`` maps protocol_id to the agents the initiator believes
    can enact a participant role of that protocol.
    """
    protocol_ids = sorted(p.protocol_id for p, _ in candidates)
    cells = set()
    agents: set[str] = set()
    for protocol_id in protocol_ids:
        for agent in identified.get(protocol_id, ()):  # unknown rows stay empty
            cells.add((protocol_id, agent))
            agents.add(agent)
    return CandidateMatrix(
        task_id=task.task_id,
        protocols=tuple(protocol_ids),
        agents=tuple(sorted(agents)),
        cells=frozenset(cells),
    )


PROTOCOL_ORIENTED = "protocol-oriented"
AGENT_ORIENTED = "agent-oriented"


def next_vector(
    matrix: CandidateMatrix, mode: str, explored: frozenset[str] | set[str]
) -> str | None:
    """The least sparse unexplored vector: the row (or column) with the
    most cells.  Ties break on the lexicographically smaller label;
    vectors without any cell are never worth exploring."""
    if mode == PROTOCOL_ORIENTED:
        labels = matrix.protocols
        count = lambda label: len(matrix.row(label))  # noqa: E731
    elif mode == AGENT_ORIENTED:
        labels = matrix.agents
        count = lambda label: len(matrix.column(label))  # noqa: E731
    else:
        raise ValueError(f"unknown exploration mode {mode!r}")
    best: str | None = None
    best_count = 0
    for label in labels:
        if label in explored:
            continue
        n = count(label)
        if n > best_count or (n == best_count and n > 0 and (best is None or label < best)):
            best, best_count = label, n
    return best


# ---------------------------------------------------------------------------
# Payloads and outcomes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReadyToSelectPayload:
    """Ordered, duplicate-free role list revealed by a participant."""

    preferred_roles: tuple[RoleRef, ...]

    def __post_init__(self) -> None:
        if not self.preferred_roles:
            raise ValueError("a ready-to-select payload lists at least one role")
        if len(set(self.preferred_roles)) != len(self.preferred_roles):
            raise ValueError("duplicate roles in ready-to-select payload")


@dataclass(frozen=True)
class OneOneSolution:
    agent: str
    protocol: str
    role: RoleRef


@dataclass(frozen=True)
class OneOneNSolution:
    agents: frozenset[str]
    protocol: str
    role: RoleRef


@dataclass(frozen=True)
class OneNSolution:
    agents: frozenset[str]
    protocol: str
    #: one agent per participant role; several roles may share an agent
    #: when no injective allocation exists
    assignment: dict[RoleRef, str]


@dataclass(frozen=True)
class SelectionFailure:
    reason: str  # "exhausted" | "transport" | ...


JointOutcome = OneOneSolution | OneOneNSolution | OneNSolution | SelectionFailure


# ---------------------------------------------------------------------------
# Participant side of the meta protocol
# ---------------------------------------------------------------------------


@dataclass
class ParticipantMetaState:
    phase: str = "idle"  # idle | offered | assigned | stopped
    offered: tuple[RoleRef, ...] = ()
    assignment: RoleRef | None = None


def offered_roles(
    protocol_id: str,
    model: InteractionModel,
    table: CompatibilityTable,
    registry: ProtocolRegistry,
    preferences: tuple[RoleRef, ...] = (),
) -> tuple[RoleRef, ...]:
    """Participant roles the agent can commit to for a call naming
    ``protocol_id``: its roles of that protocol plus every enacted role
    compatible with the caller's initiator role.  Ordered by the
    agent's declared preference, then own-protocol first."""
    protocol = registry.get(protocol_id)
    if protocol is None:
        return ()
    initiator_ref = protocol.ref(protocol.initiator_role().role_id)
    usable: list[RoleRef] = []
    for ref in model.role_refs():
        owner = registry.get(ref.protocol)
        if owner is None or owner.roles[ref.role].kind is not RoleKind.PARTICIPANT:
            continue
        if ref.protocol == protocol_id or compatible(initiator_ref, ref, table):
            usable.append(ref)
    ranked = [r for r in preferences if r in usable]
    rest = [r for r in usable if r not in ranked]
    rest.sort(key=lambda r: (r.protocol != protocol_id, r))
    return tuple(ranked + rest)


def participant_meta_step(
    state: ParticipantMetaState,
    incoming: Message,
    model: InteractionModel,
    table: CompatibilityTable,
    registry: ProtocolRegistry,
    willing: Willingness,
    preferences: tuple[RoleRef, ...] = (),
) -> tuple[ParticipantMetaState, list[tuple[str, dict]]]:
    """Advance one participant-side selection thread.

    Returns the new state and the replies to send as (performative,
    content) pairs.  A malformed call and an unwilling agent both
    answer unable-to-select; an assignment that was never offered is a
    protocol violation.
    """
    performative = incoming.performative
    if performative == CALL_FOR_COLLABORATION:
        content = incoming.content if isinstance(incoming.content, dict) else {}
        protocol_id = content.get("protocol")
        task_id = content.get("task", "")
        if not isinstance(protocol_id, str) or protocol_id not in registry:
            return state, [(UNABLE_TO_SELECT, {"reason": "malformed-call"})]
        if not willing(protocol_id, task_id):
            return state, [(UNABLE_TO_SELECT, {"reason": "unwilling"})]
        roles = offered_roles(protocol_id, model, table, registry, preferences)
        if not roles:
            return state, [(UNABLE_TO_SELECT, {"reason": "no-role"})]
        new = ParticipantMetaState(phase="offered", offered=roles)
        return new, [(READY_TO_SELECT, {"roles": [str(r) for r in roles]})]
    if performative == NOTIFY_ASSIGNMENT:
        if state.phase != "offered":
            raise ProtocolViolationError("assignment without a pending offer")
        ref = RoleRef.parse(incoming.content.get("role", ""))
        if ref not in state.offered:
            raise ProtocolViolationError(f"assigned role {ref} was never offered")
        return ParticipantMetaState(phase="assigned", offered=state.offered, assignment=ref), []
    if performative == STOP_SELECTION:
        return ParticipantMetaState(phase="stopped"), []
    raise ProtocolViolationError(f"unexpected {performative} in selection thread")


# ---------------------------------------------------------------------------
# Arbitration: largest candidate set (single role, many instances)
# ---------------------------------------------------------------------------


def select_largest_set(
    replies: dict[str, ReadyToSelectPayload],
    identified_protocols: frozenset[str] | set[str],
) -> tuple[RoleRef, frozenset[str]] | None:
    """Pick the role backed by the largest candidate set.

    Roles of protocols the initiator never identified are dropped
    first.  A role listed by every replier wins outright.  Otherwise
    roles are grouped by how many agents listed them and the groups are
    scanned from the most-backed down:

    * all candidate sets in the group equal -> pick one role (smallest
      label);
    * otherwise compare each set's private part (its difference with
      the union of the others); a unique largest private part wins;
    * a tie means no decision: the group's sets are remembered (for the
      highest undecided group only) and the scan continues.

    When a later group does produce a winner, the remembered sets are
    reconsidered: the one overlapping the winner's set the most is
    adopted instead, together with its own role.  When the scan ends
    with nothing but remembered sets, the smallest-labelled remembered
    role is adopted.  Returns None when nothing was selectable at all.
    """
    if not replies:
        return None
    n = len(replies)
    backing: dict[RoleRef, set[str]] = {}
    for agent in sorted(replies):
        for ref in replies[agent].preferred_roles:
            if ref.protocol in identified_protocols:
                backing.setdefault(ref, set()).add(agent)
    if not backing:
        return None

    full = sorted(r for r, agents in backing.items() if len(agents) == n)
    if full:
        return full[0], frozenset(backing[full[0]])

    saved: list[tuple[RoleRef, frozenset[str]]] | None = None
    chosen: tuple[RoleRef, frozenset[str]] | None = None
    for size in range(n - 1, 0, -1):
        group = sorted(r for r, agents in backing.items() if len(agents) == size)
        if not group:
            continue
        sets = [backing[r] for r in group]
        if all(s == sets[0] for s in sets):
            chosen = (group[0], frozenset(backing[group[0]]))
            break
        private: dict[RoleRef, set[str]] = {}
        for ref in group:
            others: set[str] = set()
            for other in group:
                if other != ref:
                    others |= backing[other]
            private[ref] = backing[ref] - others
        top = max(len(p) for p in private.values())
        winners = [r for r in group if len(private[r]) == top]
        if len(winners) == 1:
            chosen = (winners[0], frozenset(backing[winners[0]]))
            break
        if saved is None:  # remember only the highest undecided group
            saved = [(r, frozenset(backing[r])) for r in group]

    if chosen is None:
        if saved is None:
            return None
        return min(saved, key=lambda item: item[0])
    if saved is not None:
        return min(saved, key=lambda item: (-len(item[1] & chosen[1]), item[0]))
    return chosen


# ---------------------------------------------------------------------------
# Arbitration: role allocation along the father forest (multi-role)
# ---------------------------------------------------------------------------


def father_order(protocol: Protocol) -> list[str]:
    """Participant roles in breadth-first father order.

    A role's father is the role sending its first message; roles fed
    directly by the initiator sit at the top level.  The declared
    relation must be a forest over the participant roles.
    """
    participants = {m.role_id for m in protocol.participant_roles()}
    initiator_id = protocol.initiator_role().role_id
    children: dict[str | None, list[str]] = {}
    for role_id in sorted(participants):
        father = protocol.roles[role_id].father
        if father == initiator_id or father is None:
            children.setdefault(None, []).append(role_id)
        elif father in participants:
            children.setdefault(father, []).append(role_id)
        else:
            raise CyclicFatherRelationError(
                f"{protocol.protocol_id}: father of {role_id} is unknown"
            )
    order: list[str] = []
    frontier = children.get(None, [])
    while frontier:
        order.extend(frontier)
        nxt: list[str] = []
        for role_id in frontier:
            nxt.extend(children.get(role_id, []))
        frontier = nxt
    if len(order) != len(participants):
        raise CyclicFatherRelationError(
            f"{protocol.protocol_id}: father relation is not a forest"
        )
    return order


def _injective_completion_exists(
    roles: list[RoleRef], candidates: dict[RoleRef, set[str]], used: set[str]
) -> bool:
    """Can the remaining roles be matched to distinct unused agents?"""
    match: dict[str, RoleRef] = {}

    def try_assign(role: RoleRef, seen: set[str]) -> bool:
        for agent in sorted(candidates[role]):
            if agent in used or agent in seen:
                continue
            seen.add(agent)
            if agent not in match or try_assign(match[agent], seen):
                match[agent] = role
                return True
        return False

    return all(try_assign(role, set()) for role in roles)


def _strip_singletons(
    candidates: dict[RoleRef, set[str]], pending: list[RoleRef]
) -> None:
    """Propagate the singleton rule to a fixpoint: an agent that is the
    only candidate of some role is withdrawn from every other set that
    is not itself a singleton."""
    changed = True
    while changed:
        changed = False
        for role in pending:
            if len(candidates[role]) != 1:
                continue
            (owner,) = candidates[role]
            for other in pending:
                if other == role or len(candidates[other]) <= 1:
                    continue
                if owner in candidates[other]:
                    candidates[other].discard(owner)
                    changed = True


def assign_roles_1_n(
    replies: dict[str, ReadyToSelectPayload],
    protocols: Iterable[Protocol],
    rng: Random,
) -> OneNSolution | None:
    """Allocate one agent to every participant role of some protocol.

    Roles are clustered by protocol; a protocol is dropped as soon as
    one of its participant roles has no candidate.  Within a protocol,
    allocation walks the father forest breadth-first, drawing an agent
    for each role from its candidate set.  Draws are restricted to
    agents that keep an injective completion reachable whenever one is
    reachable at all, and after every assignment the assigned agent is
    withdrawn from the remaining non-singleton sets (the singleton rule
    is also applied before the walk and after each withdrawal).

    Among fully assigned protocols the one with the fewest role
    collisions wins; remaining ties prefer fewer forced singleton
    conflicts, then the smallest protocol id.
    """
    fully: list[tuple[int, int, str, OneNSolution]] = []
    for protocol in sorted(protocols, key=lambda p: p.protocol_id):
        order = [protocol.ref(rid) for rid in father_order(protocol)]
        candidates: dict[RoleRef, set[str]] = {ref: set() for ref in order}
        for agent in sorted(replies):
            for ref in replies[agent].preferred_roles:
                if ref in candidates:
                    candidates[ref].add(agent)
        if any(not agents for agents in candidates.values()):
            continue
        original = {ref: frozenset(agents) for ref, agents in candidates.items()}
        pending = list(order)
        _strip_singletons(candidates, pending)
        assignment: dict[RoleRef, str] = {}
        used: set[str] = set()
        for ref in order:
            pending.remove(ref)
            pool = sorted(candidates[ref])
            viable = [
                agent
                for agent in pool
                if agent not in used
                and _injective_completion_exists(pending, candidates, used | {agent})
            ]
            agent = rng.choice(viable if viable else pool)
            assignment[ref] = agent
            used.add(agent)
            for other in pending:
                if len(candidates[other]) > 1:
                    candidates[other].discard(agent)
            _strip_singletons(candidates, pending)
        collisions = len(assignment) - len(set(assignment.values()))
        forced = sum(
            1
            for ref in order
            if len(original[ref]) == 1
            and list(assignment.values()).count(assignment[ref]) > 1
        )
        fully.append(
            (
                collisions,
                forced,
                protocol.protocol_id,
                OneNSolution(
                    agents=frozenset(assignment.values()),
                    protocol=protocol.protocol_id,
                    assignment=assignment,
                ),
            )
        )
    if not fully:
        return None
    fully.sort(key=lambda item: (item[0], item[1], item[2]))
    return fully[0][3]


# ---------------------------------------------------------------------------
# One-to-one selection over a synchronous transport
# ---------------------------------------------------------------------------


class Transport(TypingProtocol):
    """Synchronous request/reply channel used by run_joint_1_1."""

    def ask(self, agent: str, performative: str, content: dict) -> tuple[str, dict]:
        """Send and wait for the reply; raises TransportDownError."""

    def tell(self, agent: str, performative: str, content: dict) -> None:
        """Send without waiting for an answer."""


def acceptable_role(
    payload_roles: Iterable[RoleRef],
    identified_protocols: frozenset[str] | set[str],
    registry: ProtocolRegistry,
) -> RoleRef | None:
    """First preferred role that is a participant role of any protocol
    the initiator identified for the task."""
    for ref in payload_roles:
        if ref.protocol not in identified_protocols:
            continue
        protocol = registry[ref.protocol]
        if ref.role in protocol.roles and protocol.roles[ref.role].kind is RoleKind.PARTICIPANT:
            return ref
    return None


def run_joint_1_1(
    task: TaskDescription,
    matrix: CandidateMatrix,
    transport: Transport,
    registry: ProtocolRegistry,
    mode: str = PROTOCOL_ORIENTED,
) -> JointOutcome:
    """Drive a complete one-to-one selection over a transport.

    Agents of the current vector are contacted one after the other and
    the first acceptable role wins; a vector exhausted without a deal
    sends the exploration to the next one.
    """
    identified = frozenset(matrix.protocols)
    explored: set[str] = set()
    try:
        while True:
            vector = next_vector(matrix, mode, explored)
            if vector is None:
                return SelectionFailure(reason="exhausted")
            explored.add(vector)
            if mode == PROTOCOL_ORIENTED:
                pairs = [(vector, agent) for agent in matrix.row(vector)]
            else:
                pairs = [(protocol, vector) for protocol in matrix.column(vector)]
            for protocol_id, agent in pairs:
                performative, content = transport.ask(
                    agent,
                    CALL_FOR_COLLABORATION,
                    {"protocol": protocol_id, "task": task.task_id},
                )
                if performative == READY_TO_SELECT:
                    roles = [RoleRef.parse(r) for r in content.get("roles", [])]
                    ref = acceptable_role(roles, identified, registry)
                    if ref is not None:
                        transport.tell(agent, NOTIFY_ASSIGNMENT, {"role": str(ref)})
                        return OneOneSolution(agent=agent, protocol=ref.protocol, role=ref)
                transport.tell(agent, STOP_SELECTION, {})
    except TransportDownError:
        return SelectionFailure(reason="transport")
