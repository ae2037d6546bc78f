"""Decision brains: the seam between deterministic orchestration and text.

A brain receives an observation snapshot and returns actions plus the
token cost charged against the agent's context window. ScriptedBrain is a
deterministic decision-table wrapper used for tests and offline runs;
RemoteBrain speaks an HTTP chat-completion wire format and treats the
request/response bodies as opaque text.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace

from .actions import Action, NoOp, action_from_dict, action_kind

# Fixed per-kind context cost of a scripted decision.
TOKEN_COSTS = {
    "SendMessage": 300,
    "GenerateCandidate": 8000,
    "SubmitJob": 500,
    "ReviewCandidate": 2000,
    "SpawnAgent": 400,
    "MarkInvalid": 300,
    "EmitReport": 1500,
    "Terminate": 200,
    "NoOp": 100,
}


def estimate_tokens(text: str) -> int:
    """~4 characters per token; a deliberately crude, stable heuristic."""
    return len(text) // 4 + 1


@dataclass
class Decision:
    actions: list[Action]
    tokens_charged: int
    error: str | None = None


class ScriptedBrain:
    """Deterministic brain: a pure role policy plus a fixed cost table.

    The brain owns the one piece of state a policy must not: what the
    agent still remembers. Compaction under the lossy policy drops the
    requirement prohibitions from memory, after which the policy sees
    ``knows_prohibitions=False`` in its observations.
    """

    def __init__(self, policy, lossy: bool = False):
        self.policy = policy
        self.lossy = lossy
        self.knows_prohibitions = True
        self._last_obs = None

    def decide(self, obs) -> Decision:
        obs = replace(obs, knows_prohibitions=self.knows_prohibitions)
        self._last_obs = obs
        actions = list(self.policy.step(obs))
        if not actions:
            actions = [NoOp()]
        charged = sum(TOKEN_COSTS[action_kind(a)] for a in actions)
        return Decision(actions=actions, tokens_charged=charged)

    def summarize(self) -> str:
        """Fixed-template digest kept after a compaction.

        The lossy variant omits the prohibition list and forgets it.
        """
        obs = self._last_obs
        sota = getattr(obs, "sota", None) if obs is not None else None
        sota_text = f"v{sota[0]} at {sota[1]} GFLOPS" if sota else "none yet"
        pending = getattr(obs, "my_pending_version", None) if obs is not None else None
        parts = [
            "recap:",
            f"best valid {sota_text};",
            f"open task {pending or 'next candidate'};",
        ]
        if not self.lossy:
            forbidden = list(getattr(obs, "forbidden", ())) if obs is not None else []
            parts.append(f"rules: never use {', '.join(forbidden) or 'restricted libraries'}.")
        else:
            self.knows_prohibitions = False
        return " ".join(parts)


def _render_template(template: str, slots: dict[str, str]) -> str:
    class _Default(dict):
        def __missing__(self, key):  # leave unknown slots blank
            return ""
    return template.format_map(_Default(slots))


class RemoteBrain:
    """Brain backed by an HTTP chat-completion endpoint.

    Failures (timeout, transport error, malformed reply) never kill the
    agent: they map to a NoOp decision carrying an error string that the
    event loop records as an Error event.
    """

    def __init__(self, url: str, model: str, prompt_template: str = "",
                 api_key: str | None = None, timeout_s: float = 30.0):
        self.url = url
        self.model = model
        self.prompt_template = prompt_template
        self.api_key = api_key
        self.timeout_s = timeout_s

    def _post(self, messages: list[dict]) -> dict:
        body = json.dumps({"model": self.model, "messages": messages}).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        request = urllib.request.Request(self.url, data=body, headers=headers)
        with urllib.request.urlopen(request, timeout=self.timeout_s) as response:
            return json.loads(response.read().decode("utf-8"))

    def _observation_digest(self, obs) -> str:
        digest = {
            "tick": getattr(obs, "tick", 0),
            "budget_status": getattr(obs, "budget_status", ""),
            "sota": getattr(obs, "sota", None),
            "inbox": [getattr(m, "body", str(m)) for m in getattr(obs, "inbox", [])],
        }
        return json.dumps(digest, default=str)

    def decide(self, obs) -> Decision:
        slots = {
            "requirements": getattr(obs, "requirements_text", ""),
            "recent_messages": "\n".join(
                f"{getattr(m, 'role_tag', '')} {getattr(m, 'body', '')}"
                for m in getattr(obs, "inbox", [])),
            "changelog_digest": str(getattr(obs, "sota", "")),
            "budget_status": getattr(obs, "budget_status", ""),
            "sota_status": str(getattr(obs, "sota", "")),
        }
        messages = [
            {"role": "system", "content": _render_template(self.prompt_template, slots)},
            {"role": "user", "content": self._observation_digest(obs)},
        ]
        try:
            reply = self._post(messages)
        except (urllib.error.URLError, OSError, ValueError, TimeoutError) as exc:
            return Decision([NoOp()], 0, error=f"endpoint failure: {exc}")

        try:
            content = reply["choices"][0]["message"]["content"]
            tokens = int(reply.get("usage", {}).get("total_tokens")
                         or estimate_tokens(content))
            raw_actions = json.loads(content)
            actions = [action_from_dict(item) for item in raw_actions]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            return Decision([NoOp()], 0, error=f"malformed reply: {exc}")
        if not actions:
            actions = [NoOp()]
        return Decision(actions=actions, tokens_charged=tokens)

    def summarize(self) -> str:
        messages = [
            {"role": "system", "content": "Summarize your working context in one short paragraph."},
            {"role": "user", "content": "compact"},
        ]
        try:
            reply = self._post(messages)
            return str(reply["choices"][0]["message"]["content"])
        except (urllib.error.URLError, OSError, ValueError, KeyError,
                IndexError, TypeError, TimeoutError):
            return "recap: context compacted; endpoint summary unavailable."
