"""Minimal chat-completion client with a content-addressed disk cache.

Requests run at temperature 0 and the full request payload is hashed, so a
repeated call is answered from the cache without touching the network. The
transport is injectable for tests and for services with a different wire
format; the default speaks the common chat-completions JSON dialect.
"""

from __future__ import annotations

import hashlib
import json
import os
import urllib.request
from dataclasses import dataclass
from pathlib import Path

from .errors import UsageError


@dataclass
class ChatConfig:
    url: str
    model: str = "gpt-3.5-turbo"
    token_env: str = "CHAT_API_TOKEN"
    temperature: float = 0.0
    timeout: float = 30.0


def _default_transport(url: str, headers: dict[str, str], payload: dict, timeout: float) -> str:
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode("utf-8"),
        headers={"Content-Type": "application/json", **headers}, method="POST",
    )
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        body = json.loads(resp.read().decode("utf-8"))
    return body["choices"][0]["message"]["content"]


class ChatCompletionClient:
    """complete(system, user) -> reply text, cached on disk by payload hash."""

    def __init__(self, config: ChatConfig, cache_dir, transport=None):
        self.config = config
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.transport = transport or _default_transport
        self.hits = 0
        self.misses = 0

    def _payload(self, system: str, user: str) -> dict:
        return {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }

    def _cache_path(self, payload: dict) -> Path:
        digest = hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode("utf-8")
        ).hexdigest()
        return self.cache_dir / f"{digest}.json"

    def complete(self, system: str, user: str) -> str:
        payload = self._payload(system, user)
        path = self._cache_path(payload)
        if path.exists():
            self.hits += 1
            with open(path, "r", encoding="utf-8") as fh:
                return json.load(fh)["reply"]
        self.misses += 1
        token = os.environ.get(self.config.token_env, "")
        if not token:
            raise UsageError(
                f"environment variable {self.config.token_env} is not set; "
                "needed for the external summarizer"
            )
        reply = self.transport(
            self.config.url, {"Authorization": f"Bearer {token}"},
            payload, self.config.timeout,
        )
        if not isinstance(reply, str):
            raise TypeError("transport must return the reply text")
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump({"request": payload, "reply": reply}, fh)
        os.replace(tmp, path)
        return reply
