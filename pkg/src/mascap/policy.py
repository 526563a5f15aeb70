"""Decision policies that answer an exploration prompt.

``BuiltinPolicy`` is deterministic and needs no network. ``ServicePolicy``
posts the prompt to an external decision service (for example a language
model gateway) and returns whatever text comes back.
"""

from __future__ import annotations

import json
import logging
import os
import urllib.error
import urllib.request
from typing import Protocol

from .model import ProcessEvent
from .protocol import ExplorationOutput, PolicyInput, serialize_output
from .scoring import ScoringConfig, score_candidates

log = logging.getLogger(__name__)

TOKEN_ENV = "MASCAP_SERVICE_TOKEN"


class PolicyUnavailable(RuntimeError):
    pass


class Policy(Protocol):
    def propose(self, prompt: PolicyInput, feedback: str | None = None) -> str: ...


class BuiltinPolicy:
    """Picks the best-scoring candidate and hands it every disrupted event.

    Each piece of feedback already attached to the prompt moves the choice one
    rank down, so a rejected agent is not proposed again.
    """

    def __init__(self, config: ScoringConfig | None = None):
        self.config = config or ScoringConfig.default()

    def propose(self, prompt: PolicyInput, feedback: str | None = None) -> str:
        if feedback:
            prompt = prompt.with_feedback(feedback)
        candidates = [(c["id"], c["factors"]) for c in prompt.data.get("candidates", [])]
        ranking = score_candidates(candidates, self.config)
        if not ranking:
            # nothing to choose from; an empty answer fails the syntax check
            return ""
        agent, score = ranking[min(len(prompt.feedback), len(ranking) - 1)]
        events = tuple(
            ProcessEvent(e["event"], e["kind"], e["duration"], e.get("params", {}))
            for e in prompt.data["disruption"]["events"]
        )
        rationale = (f"{agent} has the highest weighted score {score:.3f} among "
                     f"{len(ranking)} feasible candidates")
        if prompt.feedback:
            rationale += f" after {len(prompt.feedback)} rejected proposal(s)"
        return serialize_output(ExplorationOutput(agent, events, rationale))


class ServicePolicy:
    def __init__(self, url: str, timeout: float = 30.0, token_env: str = TOKEN_ENV):
        self.url = url
        self.timeout = timeout
        self.token_env = token_env

    def propose(self, prompt: PolicyInput, feedback: str | None = None) -> str:
        if feedback:
            prompt = prompt.with_feedback(feedback)
        body = json.dumps(prompt.to_document(), sort_keys=True).encode()
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        request = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                return resp.read().decode("utf-8", errors="replace")
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            log.warning("decision service at %s unavailable: %s", self.url, exc)
            raise PolicyUnavailable(str(exc)) from exc
