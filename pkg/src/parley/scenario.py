"""Scenario files: declarative wiring for a full simulation run.

A scenario names the protocol fixtures, the agents with their
interaction models, the tasks (initiator, capabilities, identified
participants), an optional compatibility table, fault injections, and
the seed.  Parsing resolves every cross reference up front so a typo
fails loudly instead of producing a silently empty run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .agents import (
    IndividualInitiator,
    JointInitiator,
    MixedResponder,
    SelectionParticipant,
    SequentialResponder,
    SilentAgent,
)
from .errors import ParseError, UnresolvedReferenceError
from .fixtures import protocol_path
from .joint import AGENT_ORIENTED, PROTOCOL_ORIENTED, SelectionFailure
from .model import (
    CompatibilityTable,
    InteractionModel,
    Protocol,
    ProtocolRegistry,
    RoleRef,
    TaskDescription,
    load_protocol,
)
from .runtime import FaultSpec, SimRuntime, TraceEvent

JOINT = "joint"
SEQUENTIAL = "individual_sequential"
MIXED = "individual_mixed"
SELECTION_MODES = (JOINT, SEQUENTIAL, MIXED)

SILENT = "silent"
BEHAVIORS = ("auto", SILENT)


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    enacts: dict[str, tuple[str, ...]]
    willing: bool = True
    behavior: str = "auto"


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    initiator: str
    capabilities: frozenset[str]
    participants: dict[str, tuple[str, ...]]
    constraints: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    seed: int
    selection_mode: str
    protocols: tuple[str, ...]
    agents: tuple[AgentSpec, ...]
    tasks: tuple[TaskSpec, ...]
    compatibility: tuple[tuple[str, str], ...] = ()
    faults: tuple[FaultSpec, ...] = ()
    exploration: str = PROTOCOL_ORIENTED
    reply_deadline: int = 10
    max_ticks: int = 200

    def agent(self, agent_id: str) -> AgentSpec:
        for spec in self.agents:
            if spec.agent_id == agent_id:
                return spec
        raise UnresolvedReferenceError(f"no agent {agent_id!r}")


# ---------------------------------------------------------------------------
# Parsing and serialisation
# ---------------------------------------------------------------------------


def _require(raw: dict, key: str, where: str):
    if key not in raw:
        raise ParseError(f"{where}: missing {key!r}")
    return raw[key]


def parse_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no scenario file at {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    scenario = scenario_from_dict(raw, where=str(path))
    _resolve(scenario, base_dir=path.parent)
    return scenario


def scenario_from_dict(raw: dict, where: str = "scenario") -> Scenario:
    mode = _require(raw, "selection_mode", where)
    if mode not in SELECTION_MODES:
        raise ParseError(f"{where}: unknown selection_mode {mode!r}")
    exploration = raw.get("exploration", PROTOCOL_ORIENTED)
    if exploration not in (PROTOCOL_ORIENTED, AGENT_ORIENTED):
        raise ParseError(f"{where}: unknown exploration {exploration!r}")
    agents = []
    for entry in _require(raw, "agents", where):
        agent_id = _require(entry, "id", f"{where}: agent")
        behavior = entry.get("behavior", "auto")
        if behavior not in BEHAVIORS:
            raise ParseError(f"{where}: agent {agent_id}: unknown behavior {behavior!r}")
        agents.append(
            AgentSpec(
                agent_id=agent_id,
                enacts={
                    protocol: tuple(roles)
                    for protocol, roles in entry.get("enacts", {}).items()
                },
                willing=bool(entry.get("willing", True)),
                behavior=behavior,
            )
        )
    tasks = []
    for entry in _require(raw, "tasks", where):
        task_id = _require(entry, "id", f"{where}: task")
        tasks.append(
            TaskSpec(
                task_id=task_id,
                initiator=_require(entry, "initiator", f"{where}: task {task_id}"),
                capabilities=frozenset(entry.get("capabilities", [])),
                participants={
                    protocol: tuple(agents_)
                    for protocol, agents_ in entry.get("participants", {}).items()
                },
                constraints=dict(entry.get("constraints", {})),
            )
        )
    faults = []
    for entry in raw.get("faults", []):
        try:
            faults.append(
                FaultSpec(
                    conversation=_require(entry, "conversation", f"{where}: fault"),
                    ordinal=int(_require(entry, "ordinal", f"{where}: fault")),
                    op=_require(entry, "op", f"{where}: fault"),
                    structure_field=entry.get("field", "performative"),
                    path=tuple(entry.get("path", [])),
                )
            )
        except ValueError as exc:
            raise ParseError(f"{where}: fault: {exc}") from exc
    return Scenario(
        scenario_id=raw.get("scenario_id", "scenario"),
        seed=int(raw.get("seed", 0)),
        selection_mode=mode,
        protocols=tuple(_require(raw, "protocols", where)),
        agents=tuple(agents),
        tasks=tuple(tasks),
        compatibility=tuple(
            (pair[0], pair[1]) for pair in raw.get("compatibility", [])
        ),
        faults=tuple(faults),
        exploration=exploration,
        reply_deadline=int(raw.get("reply_deadline", 10)),
        max_ticks=int(raw.get("max_ticks", 200)),
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    out: dict = {
        "scenario_id": scenario.scenario_id,
        "seed": scenario.seed,
        "selection_mode": scenario.selection_mode,
        "protocols": list(scenario.protocols),
        "agents": [],
        "tasks": [],
    }
    for spec in scenario.agents:
        entry: dict = {
            "id": spec.agent_id,
            "enacts": {p: list(r) for p, r in spec.enacts.items()},
        }
        if not spec.willing:
            entry["willing"] = False
        if spec.behavior != "auto":
            entry["behavior"] = spec.behavior
        out["agents"].append(entry)
    for task in scenario.tasks:
        entry = {
            "id": task.task_id,
            "initiator": task.initiator,
            "capabilities": sorted(task.capabilities),
            "participants": {p: list(a) for p, a in task.participants.items()},
        }
        if task.constraints:
            entry["constraints"] = task.constraints
        out["tasks"].append(entry)
    if scenario.compatibility:
        out["compatibility"] = [list(pair) for pair in scenario.compatibility]
    if scenario.faults:
        out["faults"] = []
        for fault in scenario.faults:
            entry = {
                "conversation": fault.conversation,
                "ordinal": fault.ordinal,
                "op": fault.op,
            }
            if fault.op == "corrupt_structure":
                entry["field"] = fault.structure_field
            if fault.path:
                entry["path"] = list(fault.path)
            out["faults"].append(entry)
    if scenario.exploration != PROTOCOL_ORIENTED:
        out["exploration"] = scenario.exploration
    if scenario.reply_deadline != 10:
        out["reply_deadline"] = scenario.reply_deadline
    if scenario.max_ticks != 200:
        out["max_ticks"] = scenario.max_ticks
    return out


def serialize_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(
        json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=False) + "\n",
        encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# Reference resolution
# ---------------------------------------------------------------------------


def load_registry(scenario: Scenario, base_dir: Path | None = None) -> ProtocolRegistry:
    registry: ProtocolRegistry = {}
    for name in scenario.protocols:
        candidate = Path(name)
        if candidate.suffix == ".json":
            if not candidate.is_absolute() and base_dir is not None:
                candidate = base_dir / candidate
            if not candidate.exists():
                raise UnresolvedReferenceError(f"no protocol file {name!r}")
            protocol = load_protocol(candidate)
        else:
            bundled = protocol_path(name)
            if not bundled.exists():
                raise UnresolvedReferenceError(f"no bundled protocol {name!r}")
            protocol = load_protocol(bundled)
        registry[protocol.protocol_id] = protocol
    return registry


def _resolve(scenario: Scenario, base_dir: Path | None = None) -> None:
    """Check every cross reference; raise with a location on failure."""
    registry = load_registry(scenario, base_dir)
    ids = {spec.agent_id for spec in scenario.agents}
    if len(ids) != len(scenario.agents):
        raise ParseError(f"{scenario.scenario_id}: duplicate agent ids")
    for spec in scenario.agents:
        for protocol_id, roles in spec.enacts.items():
            if protocol_id not in registry:
                raise UnresolvedReferenceError(
                    f"agent {spec.agent_id}: unknown protocol {protocol_id!r}"
                )
            for role in roles:
                if role not in registry[protocol_id].roles:
                    raise UnresolvedReferenceError(
                        f"agent {spec.agent_id}: no role {protocol_id}:{role}"
                    )
    for task in scenario.tasks:
        if task.initiator not in ids:
            raise UnresolvedReferenceError(
                f"task {task.task_id}: unknown initiator {task.initiator!r}"
            )
        for protocol_id, agents in task.participants.items():
            if protocol_id not in registry:
                raise UnresolvedReferenceError(
                    f"task {task.task_id}: unknown protocol {protocol_id!r}"
                )
            for agent in agents:
                if agent not in ids:
                    raise UnresolvedReferenceError(
                        f"task {task.task_id}: unknown participant {agent!r}"
                    )
        if scenario.selection_mode != JOINT:
            named = {a for agents in task.participants.values() for a in agents}
            if len(named) != 1:
                raise UnresolvedReferenceError(
                    f"task {task.task_id}: individual selection needs exactly one "
                    f"identified participant, got {sorted(named)}"
                )
    for left, right in scenario.compatibility:
        for text in (left, right):
            ref = RoleRef.parse(text)
            if ref.protocol not in registry or ref.role not in registry[ref.protocol].roles:
                raise UnresolvedReferenceError(f"compatibility: no role {text!r}")


# ---------------------------------------------------------------------------
# Wiring and running
# ---------------------------------------------------------------------------


def _interaction_model(spec: AgentSpec) -> InteractionModel:
    model = InteractionModel()
    for protocol_id, roles in spec.enacts.items():
        model.extend(protocol_id, roles)
    return model


def _compatibility_table(scenario: Scenario, registry: ProtocolRegistry) -> CompatibilityTable:
    pairs = frozenset(
        (RoleRef.parse(a), RoleRef.parse(b)) for a, b in scenario.compatibility
    )
    return CompatibilityTable(pairs=pairs, known_roles=frozenset())


def build_runtime(scenario: Scenario, base_dir: Path | None = None) -> SimRuntime:
    """Instantiate the bus and all agents for one run of the scenario."""
    registry = load_registry(scenario, base_dir)
    table = _compatibility_table(scenario, registry)
    runtime = SimRuntime(seed=scenario.seed, max_ticks=scenario.max_ticks)
    for fault in scenario.faults:
        runtime.inject_fault(fault)
    initiators = {task.initiator: task for task in scenario.tasks}
    for spec in scenario.agents:
        model = _interaction_model(spec)
        if spec.behavior == SILENT:
            runtime.register(SilentAgent(spec.agent_id))
            continue
        task_spec = initiators.get(spec.agent_id)
        if task_spec is not None:
            task = TaskDescription(
                task_id=task_spec.task_id,
                required_capabilities=task_spec.capabilities,
                constraints=task_spec.constraints,
            )
            if scenario.selection_mode == JOINT:
                runtime.register(
                    JointInitiator(
                        spec.agent_id,
                        task,
                        model,
                        registry,
                        identified=task_spec.participants,
                        mode=scenario.exploration,
                        reply_deadline=scenario.reply_deadline,
                    )
                )
            else:
                participant = next(
                    a for agents in task_spec.participants.values() for a in agents
                )
                runtime.register(
                    IndividualInitiator(
                        spec.agent_id, task, model, registry, participant
                    )
                )
            continue
        if scenario.selection_mode == JOINT:
            willing = (lambda p, t: True) if spec.willing else (lambda p, t: False)
            runtime.register(
                SelectionParticipant(
                    spec.agent_id, model, registry, table, willing
                )
            )
        elif scenario.selection_mode == SEQUENTIAL:
            runtime.register(SequentialResponder(spec.agent_id, model, registry))
        else:
            runtime.register(MixedResponder(spec.agent_id, model, registry))
    return runtime


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskSummary:
    task_id: str
    outcome: str
    detail: dict
    recoveries: int
    messages: int
    terminated: bool


@dataclass(frozen=True)
class RunSummary:
    scenario_id: str
    seed: int
    selection_mode: str
    ticks: int
    tasks: tuple[TaskSummary, ...]

    @property
    def all_terminated(self) -> bool:
        return all(task.terminated for task in self.tasks)


def _task_conversations(scenario: Scenario, task: TaskSpec) -> list[str]:
    if scenario.selection_mode == JOINT:
        return [f"{task.task_id}!select"]
    participant = next(a for agents in task.participants.values() for a in agents)
    return [f"{task.task_id}/{participant}"]


def _describe_outcome(agent) -> tuple[str, dict, bool]:
    if isinstance(agent, JointInitiator):
        outcome = agent.outcome
        if outcome is None:
            return "unresolved", {}, False
        if isinstance(outcome, SelectionFailure):
            return "failure", {"reason": outcome.reason}, False
        detail: dict = {"protocol": outcome.protocol}
        if hasattr(outcome, "assignment"):
            detail["assignment"] = {
                str(ref): who for ref, who in sorted(outcome.assignment.items())
            }
        elif hasattr(outcome, "agents"):
            detail["role"] = str(outcome.role)
            detail["agents"] = sorted(outcome.agents)
        else:
            detail["role"] = str(outcome.role)
            detail["agent"] = outcome.agent
        return "selected", detail, True
    # individual initiator
    if agent.status == "concluded":
        return "concluded", {"final_state": agent.final_state}, True
    if agent.status == "failed":
        return "failed", {}, False
    return "unresolved", {}, False


def summarize(scenario: Scenario, runtime: SimRuntime, trace: list[TraceEvent]) -> RunSummary:
    tasks = []
    for task in scenario.tasks:
        conversations = set(_task_conversations(scenario, task))
        recoveries = sum(
            1
            for e in trace
            if e.kind == "recovery" and e.payload.get("conversation") in conversations
        )
        messages = sum(
            1
            for e in trace
            if e.kind == "send"
            and e.payload.get("conversation") in conversations
            and e.payload.get("from") != e.payload.get("to")
        )
        agent = runtime.agents[task.initiator]
        outcome, detail, terminated = _describe_outcome(agent)
        tasks.append(
            TaskSummary(
                task_id=task.task_id,
                outcome=outcome,
                detail=detail,
                recoveries=recoveries,
                messages=messages,
                terminated=terminated,
            )
        )
    return RunSummary(
        scenario_id=scenario.scenario_id,
        seed=scenario.seed,
        selection_mode=scenario.selection_mode,
        ticks=runtime.clock.tick,
        tasks=tuple(tasks),
    )


def run_scenario(
    scenario: Scenario, base_dir: Path | None = None
) -> tuple[list[TraceEvent], RunSummary]:
    runtime = build_runtime(scenario, base_dir)
    trace = runtime.run_until_quiescent()
    return trace, summarize(scenario, runtime, trace)
