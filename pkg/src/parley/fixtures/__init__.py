"""Bundled protocol and scenario documents.

Regenerated by scripts/build_fixtures.py; loaded here by name so tests
and the command line can share them without path gymnastics.
"""

from __future__ import annotations

from pathlib import Path

from ..model import Protocol, ProtocolRegistry, load_protocol

ROOT = Path(__file__).parent


def protocol_path(name: str) -> Path:
    return ROOT / "protocols" / f"{name}.json"


def scenario_path(name: str) -> Path:
    return ROOT / "scenarios" / f"{name}.json"


def bundled_protocol(name: str) -> Protocol:
    return load_protocol(protocol_path(name))


def bundled_registry(*names: str) -> ProtocolRegistry:
    found = {}
    for name in names:
        protocol = bundled_protocol(name)
        found[protocol.protocol_id] = protocol
    return found
