"""In-process message bus with ordered delivery and an append-only transcript.

Delivery is reliable, in-order, and exactly-once per recipient. Messages
carry monotonically increasing ids assigned at send time; a drain returns
the recipient's pending messages in global id order. Messages addressed to
an agent that terminates before draining stay in the transcript, flagged
undelivered.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .errors import DeadRecipient, UnknownAgent

BROADCAST = "*"


@dataclass
class Message:
    id: int
    sender: str
    recipient: str
    role_tag: str
    body: str
    tick: int
    delivered: bool = True


class MessageBus:
    def __init__(self, clock: Callable[[], int] | None = None,
                 sink: Callable[[Message], None] | None = None):
        self._clock = clock or (lambda: 0)
        self._sink = sink
        self._next_id = 0
        self._tags: dict[str, str] = {}
        self._live: set[str] = set()
        self._mailboxes: dict[str, deque[Message]] = {}
        self.transcript: list[Message] = []

    def attach(self, agent_id: str, role_tag: str | None = None) -> None:
        """Register a live endpoint; its tag stamps every message it sends."""
        self._tags[agent_id] = role_tag or f"[{agent_id}]"
        self._live.add(agent_id)
        self._mailboxes.setdefault(agent_id, deque())

    def detach(self, agent_id: str) -> None:
        """Mark an endpoint dead; pending mail is flagged undelivered."""
        if agent_id not in self._tags:
            raise UnknownAgent(agent_id)
        self._live.discard(agent_id)
        for message in self._mailboxes.get(agent_id, ()):
            message.delivered = False
        self._mailboxes[agent_id] = deque()

    def is_live(self, agent_id: str) -> bool:
        return agent_id in self._live

    def live_agents(self) -> list[str]:
        return [a for a in self._tags if a in self._live]

    def send(self, sender: str, recipient: str, body: str) -> list[Message]:
        """Deliver body to recipient (or everyone but the sender for '*').

        Returns the messages created, one per addressed mailbox. Raises
        UnknownAgent for unattached endpoints and DeadRecipient for a
        terminated one.
        """
        if sender not in self._live:
            raise UnknownAgent(sender)
        if recipient == BROADCAST:
            targets = [a for a in self._tags if a in self._live and a != sender]
        else:
            if recipient not in self._tags:
                raise UnknownAgent(recipient)
            if recipient not in self._live:
                raise DeadRecipient(recipient)
            targets = [recipient]

        out: list[Message] = []
        tick = self._clock()
        for target in targets:
            message = Message(
                id=self._next_id,
                sender=sender,
                recipient=target,
                role_tag=self._tags[sender],
                body=body,
                tick=tick,
            )
            self._next_id += 1
            self.transcript.append(message)
            self._mailboxes[target].append(message)
            if self._sink is not None:
                self._sink(message)
            out.append(message)
        return out

    def pending(self, agent_id: str) -> int:
        if agent_id not in self._tags:
            raise UnknownAgent(agent_id)
        return len(self._mailboxes[agent_id])

    def drain(self, agent_id: str) -> list[Message]:
        """Empty the agent's mailbox, returning messages in id order."""
        if agent_id not in self._live:
            raise UnknownAgent(agent_id)
        box = self._mailboxes[agent_id]
        out = sorted(box, key=lambda m: m.id)
        box.clear()
        return out
