"""The fixed vocabulary of actions an agent brain may request.

The event loop applies actions serially in the order returned, so a brain
can register a candidate and submit its job in the same decision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Union


@dataclass(frozen=True)
class SendMessage:
    recipient: str
    body: str


@dataclass(frozen=True)
class GenerateCandidate:
    version: str
    parent: str | None
    params: Mapping[str, int]
    label: str
    source: str


@dataclass(frozen=True)
class SubmitJob:
    version: str
    gpus: int


@dataclass(frozen=True)
class ReviewCandidate:
    version: str
    verdict: str  # "clean" | "violation"
    reason: str = ""


@dataclass(frozen=True)
class SpawnAgent:
    role: str


@dataclass(frozen=True)
class MarkInvalid:
    version: str
    reason: str = ""


@dataclass(frozen=True)
class EmitReport:
    pass


@dataclass(frozen=True)
class Terminate:
    scope: str = "project"  # "project" | "self"
    reason: str = ""


@dataclass(frozen=True)
class NoOp:
    pass


Action = Union[
    SendMessage,
    GenerateCandidate,
    SubmitJob,
    ReviewCandidate,
    SpawnAgent,
    MarkInvalid,
    EmitReport,
    Terminate,
    NoOp,
]

ACTION_KINDS = {
    "SendMessage": SendMessage,
    "GenerateCandidate": GenerateCandidate,
    "SubmitJob": SubmitJob,
    "ReviewCandidate": ReviewCandidate,
    "SpawnAgent": SpawnAgent,
    "MarkInvalid": MarkInvalid,
    "EmitReport": EmitReport,
    "Terminate": Terminate,
    "NoOp": NoOp,
}


def action_kind(action: Action) -> str:
    return type(action).__name__


def action_from_dict(data: Mapping) -> Action:
    """Build an action from {"kind": ..., <fields>}; raises on unknown kinds."""
    payload = dict(data)
    kind = payload.pop("kind", None)
    cls = ACTION_KINDS.get(kind)
    if cls is None:
        raise ValueError(f"unknown action kind: {kind!r}")
    return cls(**payload)
