#!/usr/bin/env python3
"""Regenerate the bundled protocol documents.

Run from the repository root after changing a definition here:

    python3 scripts/build_fixtures.py

Every document is validated and classified before it is written; the
script fails loudly rather than shipping a protocol the engine would
reject at load time.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from parley.model import (
    MANY,
    Action,
    MessageSchema,
    Protocol,
    ProtocolCategory,
    RoleKind,
    RoleStateMachine,
    Transition,
    Trigger,
    classify_protocol,
    protocol_to_dict,
    validate_protocol,
)

OUT = Path(__file__).resolve().parent.parent / "src" / "parley" / "fixtures" / "protocols"


def schema(schema_id: str, performative: str, pattern) -> MessageSchema:
    return MessageSchema(schema_id=schema_id, performative=performative, content_pattern=pattern)


def role(role_id, kind, states, initial, terminals, transitions, multiplicity=1, father=None):
    return RoleStateMachine(
        role_id=role_id,
        kind=kind,
        multiplicity=multiplicity,
        states=frozenset(states),
        initial_state=initial,
        terminal_states=frozenset(terminals),
        transitions=tuple(transitions),
        father=father,
    )


def t(frm, trigger, action, to, method):
    return Transition(frm, trigger, action, to, method)


def recv(schema_id):
    return Trigger(kind="receive", schema_id=schema_id)


def on(variable):
    return Trigger(kind="internal", variable=variable)


def send(schema_id):
    return Action(kind="send", schema_id=schema_id)


def store(variable):
    return Action(kind="data_change", variable=variable)


DONE = Action(kind="none")


# ---------------------------------------------------------------------------
# Plain one-question protocols used by the joint-selection scenarios
# ---------------------------------------------------------------------------


def simple_query(protocol_id: str, tags: tuple[str, ...]) -> Protocol:
    return Protocol(
        protocol_id=protocol_id,
        capability_tags=frozenset(tags),
        schemas={
            "ask": schema("ask", "ask-one", {"attribute": "?string", "document": "?string"}),
            "answer": schema("answer", "tell", {"value": "?string"}),
        },
        roles={
            "asker": role(
                "asker",
                RoleKind.INITIATOR,
                {"s0", "s1", "done"},
                "s0",
                {"done"},
                [
                    t("s0", on("task"), send("ask"), "s1", f"{protocol_id}-open"),
                    t("s1", recv("answer"), store("answer"), "done", f"{protocol_id}-settle"),
                ],
            ),
            "replier": role(
                "replier",
                RoleKind.PARTICIPANT,
                {"p0", "done"},
                "p0",
                {"done"},
                [
                    t("p0", recv("ask"), send("answer"), "done", f"{protocol_id}-serve"),
                ],
            ),
        },
    )


# ---------------------------------------------------------------------------
# Tender protocols: one call, many bidders (single many-instance role)
# ---------------------------------------------------------------------------


def tender(protocol_id: str, tags: tuple[str, ...]) -> Protocol:
    return Protocol(
        protocol_id=protocol_id,
        capability_tags=frozenset(tags),
        schemas={
            "call": schema("call", "cfp", {"job": "?string"}),
            "bid": schema("bid", "propose", {"price": "?number"}),
            "award": schema("award", "accept", {}),
        },
        roles={
            "manager": role(
                "manager",
                RoleKind.INITIATOR,
                {"m0", "m1", "m2", "done"},
                "m0",
                {"done"},
                [
                    t("m0", on("task"), send("call"), "m1", f"{protocol_id}-call"),
                    t("m1", recv("bid"), store("bid"), "m2", f"{protocol_id}-weigh"),
                    t("m2", on("bid"), send("award"), "done", f"{protocol_id}-award"),
                ],
            ),
            "contractor": role(
                "contractor",
                RoleKind.PARTICIPANT,
                {"c0", "c1", "c2", "done"},
                "c0",
                {"done"},
                [
                    t("c0", recv("call"), store("job"), "c1", f"{protocol_id}-hear"),
                    t("c1", on("job"), send("bid"), "c2", f"{protocol_id}-bid"),
                    t("c2", recv("award"), DONE, "done", f"{protocol_id}-win"),
                ],
                multiplicity=MANY,
            ),
        },
    )


# ---------------------------------------------------------------------------
# A three-role ceremony whose first messages form a chain:
# the opener addresses the buyer, the buyer briefs the manager, the
# manager engages the seller.
# ---------------------------------------------------------------------------


def auction() -> Protocol:
    return Protocol(
        protocol_id="auction",
        capability_tags=frozenset({"brokering"}),
        schemas={
            "open": schema("open", "inform", {"lot": "?string"}),
            "brief": schema("brief", "inform", {"items": "?string"}),
            "engage": schema("engage", "request", {"price": "?number"}),
        },
        roles={
            "opener": role(
                "opener",
                RoleKind.INITIATOR,
                {"s0", "done"},
                "s0",
                {"done"},
                [t("s0", on("task"), send("open"), "done", "auction-open")],
            ),
            "buyer": role(
                "buyer",
                RoleKind.PARTICIPANT,
                {"b0", "done"},
                "b0",
                {"done"},
                [t("b0", recv("open"), send("brief"), "done", "auction-brief")],
                father=None,
            ),
            "manager": role(
                "manager",
                RoleKind.PARTICIPANT,
                {"m0", "done"},
                "m0",
                {"done"},
                [t("m0", recv("brief"), send("engage"), "done", "auction-engage")],
                father="buyer",
            ),
            "seller": role(
                "seller",
                RoleKind.PARTICIPANT,
                {"s0", "done"},
                "s0",
                {"done"},
                [t("s0", recv("engage"), DONE, "done", "auction-close")],
                father="manager",
            ),
        },
    )


# ---------------------------------------------------------------------------
# The attribute-serving family used by the individual-selection runs.
#
# All four share the ask shape, so any of their serving roles can pick
# up an incoming question; they differ in how they answer.  Serving
# roles loop - a served question returns them to their waiting state -
# and their "give up" answers are terminal.  Queriers ask twice before
# settling, which keeps a recovered conversation going long enough to
# be worth watching.
# ---------------------------------------------------------------------------

ASK = {"attribute": "?string", "document": "?string"}


def _querier(prefix: str, good: str, bad: str, bad_stores: bool) -> RoleStateMachine:
    """Ask, take an answer, ask again, settle.  ``good`` answers carry
    the interaction forward; ``bad`` answers end it."""
    bad_early = (
        t("i1", recv(bad), store("more"), "i2", f"{prefix}-sidestep")
        if bad_stores
        else t("i1", recv(bad), DONE, "failed", f"{prefix}-refused")
    )
    bad_late = (
        t("i3", recv(bad), store("answer"), "done", f"{prefix}-settle-odd")
        if bad_stores
        else t("i3", recv(bad), DONE, "failed", f"{prefix}-refused-late")
    )
    states = {"i0", "i1", "i2", "i3", "done"} | (set() if bad_stores else {"failed"})
    return role(
        "querier",
        RoleKind.INITIATOR,
        states,
        "i0",
        {"done"} | (set() if bad_stores else {"failed"}),
        [
            t("i0", on("task"), send("ask"), "i1", f"{prefix}-open"),
            t("i1", recv(good), store("more"), "i2", f"{prefix}-first-answer"),
            bad_early,
            t("i2", on("more"), send("ask"), "i3", f"{prefix}-follow-up"),
            t("i3", recv(good), store("answer"), "done", f"{prefix}-final-answer"),
            bad_late,
        ],
    )


def _server(prefix: str, answers) -> RoleStateMachine:
    """Wait for a question, answer it, loop; terminal answers leave."""
    transitions = [t("p0", recv("ask"), store("q"), "p1", f"{prefix}-take")]
    states = {"p0", "p1"}
    terminals = set()
    for schema_id, method_suffix, ends in answers:
        if ends:
            states.add("gone")
            terminals.add("gone")
            transitions.append(t("p1", on("q"), send(schema_id), "gone", f"{prefix}-{method_suffix}"))
        else:
            transitions.append(t("p1", on("q"), send(schema_id), "p0", f"{prefix}-{method_suffix}"))
    return role("server", RoleKind.PARTICIPANT, states, "p0", terminals, transitions)


def attribute_family() -> list[Protocol]:
    protocols = []

    # answers with a fact to insert, or apologises and stops
    protocols.append(
        Protocol(
            protocol_id="attr_lookup",
            capability_tags=frozenset({"attribute-sharing"}),
            schemas={
                "ask": schema("ask", "ask-one", ASK),
                "fact": schema("fact", "insert", {"fact": "?string"}),
                "pass": schema("pass", "sorry", {}),
            },
            roles={
                "querier": _querier("al", good="fact", bad="pass", bad_stores=False),
                "server": _server(
                    "al", [("fact", "share", False), ("pass", "decline", True)]
                ),
            },
        )
    )

    # answers with a numeric digest, or volunteers a fact instead
    protocols.append(
        Protocol(
            protocol_id="attr_digest",
            capability_tags=frozenset({"attribute-sharing"}),
            schemas={
                "ask": schema("ask", "ask-one", ASK),
                "summary": schema("summary", "tell", {"value": "?number"}),
                "fact": schema("fact", "insert", {"fact": "?string"}),
            },
            roles={
                "querier": _querier("ad", good="summary", bad="fact", bad_stores=True),
                "server": _server(
                    "ad", [("summary", "measure", False), ("fact", "share", False)]
                ),
            },
        )
    )

    # answers with the text value, or apologises and stops
    protocols.append(
        Protocol(
            protocol_id="attr_probe",
            capability_tags=frozenset({"attribute-sharing"}),
            schemas={
                "ask": schema("ask", "ask-one", ASK),
                "reading": schema("reading", "tell", {"value": "?string"}),
                "pass": schema("pass", "sorry", {}),
            },
            roles={
                "querier": _querier("ap", good="reading", bad="pass", bad_stores=False),
                "server": _server(
                    "ap", [("reading", "answer", False), ("pass", "decline", True)]
                ),
            },
        )
    )

    # answers with the text value, or reports an error and stops
    protocols.append(
        Protocol(
            protocol_id="attr_query",
            capability_tags=frozenset({"attribute-retrieval"}),
            schemas={
                "ask": schema("ask", "ask-one", ASK),
                "reading": schema("reading", "tell", {"value": "?string"}),
                "trouble": schema("trouble", "error", {"info": "?string"}),
            },
            roles={
                "querier": _querier("aq", good="reading", bad="trouble", bad_stores=False),
                "server": _server(
                    "aq", [("reading", "answer", False), ("trouble", "bail", True)]
                ),
            },
        )
    )
    return protocols


def main() -> int:
    documents = [
        simple_query("ips", ("document-query", "incremental")),
        simple_query("request", ("document-query",)),
        tender("cnp", ("contracting",)),
        tender("icnp", ("contracting", "iterated")),
        auction(),
        *attribute_family(),
    ]
    OUT.mkdir(parents=True, exist_ok=True)
    for protocol in documents:
        report = validate_protocol(protocol)
        if report:
            for violation in report:
                print(f"REJECTED {protocol.protocol_id}: {violation}", file=sys.stderr)
            return 1
        category = classify_protocol(protocol)
        path = OUT / f"{protocol.protocol_id}.json"
        path.write_text(json.dumps(protocol_to_dict(protocol), indent=2, sort_keys=True) + "\n")
        print(f"wrote {path.relative_to(OUT.parent.parent.parent.parent)} ({category.value})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
