"""Scenario file format, loader/validator, and the built-in library.

A scenario is a declarative JSON document: protocol parameters, the
Byzantine set, client requests (or FaB leader inputs), an ordered directive
script, and the verdicts the run is expected to produce. Directives execute
in array order as the global event sequence.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

from .core import PROTOCOLS, quorum_config
from .checkers import PROPERTIES

STATUSES = ("holds", "violated", "occurred", "not_applicable")

_DIRECTIVES = {
    "client_request": {"client", "to"},
    "deliver": {"match"},
    "drop": {"match"},
    "delay_all_except": {"match"},
    "timeout": {"node"},
    "view_change": {"view", "nodes"},
    "propose": {"node"},
    "adversary": {"actor", "action"},
}


class ScenarioError(ValueError):
    """Scenario fails to parse or violates a structural invariant."""


@dataclass
class Scenario:
    name: str
    protocol: str
    f: int
    t: int = 0
    byzantine: list = field(default_factory=list)
    clients: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    description: str = ""
    script: list = field(default_factory=list)
    expected: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "protocol": self.protocol,
            "f": self.f,
            "t": self.t,
            "byzantine": self.byzantine,
            "clients": self.clients,
            "inputs": self.inputs,
            "description": self.description,
            "script": self.script,
            "expected": self.expected,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def validate(sc: Scenario) -> Scenario:
    if sc.protocol not in PROTOCOLS:
        raise ScenarioError(f"unknown protocol {sc.protocol!r}")
    try:
        cfg = quorum_config(sc.protocol, sc.f, sc.t)
    except ValueError as e:
        raise ScenarioError(str(e)) from None
    if len(sc.byzantine) > sc.f:
        raise ScenarioError(f"{len(sc.byzantine)} byzantine replicas exceeds f={sc.f}")
    for b in sc.byzantine:
        if not isinstance(b, int) or not 0 <= b < cfg.n:
            raise ScenarioError(f"byzantine id {b!r} outside 0..{cfg.n - 1}")
    ids = [c["id"] for c in sc.clients]
    if len(set(ids)) != len(ids):
        raise ScenarioError("duplicate client ids")
    ops = [c["op"] for c in sc.clients]
    if len(set(ops)) != len(ops):
        raise ScenarioError("client ops must be distinct")
    for i, step in enumerate(sc.script):
        if not isinstance(step, dict) or "do" not in step:
            raise ScenarioError(f"script[{i}] is not a directive")
        do = step["do"]
        if do not in _DIRECTIVES:
            raise ScenarioError(f"script[{i}]: unknown directive {do!r}")
        missing = _DIRECTIVES[do] - set(step)
        if do == "delay_all_except":  # its match is optional (null = everything)
            missing -= {"match"}
        if missing:
            raise ScenarioError(f"script[{i}] ({do}): missing fields {sorted(missing)}")
    for e in sc.expected:
        if e.get("property") not in PROPERTIES:
            raise ScenarioError(f"unknown expected property {e.get('property')!r}")
        if e.get("status") not in STATUSES:
            raise ScenarioError(f"unknown expected status {e.get('status')!r}")
    return sc


def from_dict(data: dict) -> Scenario:
    known = {f for f in Scenario.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ScenarioError(f"unknown scenario fields: {sorted(unknown)}")
    try:
        sc = Scenario(**data)
    except TypeError as e:
        raise ScenarioError(str(e)) from None
    return validate(sc)


def loads(text: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON: {e}") from None
    return from_dict(data)


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


BUILTIN_NAMES = (
    "zyzzyva-benign-fast",
    "zyzzyva-benign-two-phase",
    "zyzzyva-cc-priority",
    "zyzzyva-longest-cc",
    "fab5-benign",
    "pfab-benign",
    "pfab-stuck",
)


def get_builtin(name: str) -> Scenario:
    if name not in BUILTIN_NAMES:
        raise ScenarioError(f"no builtin scenario named {name!r}")
    text = resources.files("bftlab.builtins").joinpath(f"{name}.json").read_text()
    return loads(text)


def builtin_scenarios() -> list:
    return [get_builtin(n) for n in BUILTIN_NAMES]
