"""Deterministic in-process transport for tests, demos, and dry runs.

Chat, captioner, and judge roles consume scripted responses FIFO per
role; running past the end of a script raises :class:`ScriptExhausted`
(loudly, never silently recycling). Embedder roles fall back to a
deterministic hash embedding when unscripted, so retrieval over mocks
works without enumerating vectors. Failure injection is a scripted
entry: a :class:`ScriptedFailure` is raised instead of returned, and is
consumed per attempt, so "fail twice then succeed" is three entries.

Every transport-level attempt is appended to :attr:`MockTransport.log`,
which is the ground truth for "live calls" in tests.
"""

from __future__ import annotations

import hashlib
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable

from .profiles import (
    BackendProfile,
    BackendRole,
    ModelRequest,
    ProtocolError,
    TransientBackendError,
)

EMBEDDER_ROLES = (BackendRole.TEXT_EMBEDDER, BackendRole.MULTIMODAL_EMBEDDER)


class ScriptExhausted(ProtocolError):
    """A scripted role ran out of responses."""


@dataclass(frozen=True)
class ScriptedFailure:
    message: str = "injected failure"
    transient: bool = True


@dataclass(frozen=True)
class MockCall:
    seq: int
    role: BackendRole
    model_name: str
    payload: dict[str, Any]
    ok: bool


@dataclass
class MockTransport:
    embedding_dim: int = 8
    delay: float = 0.0  # per-call sleep; widens race windows in tests

    _scripts: dict[BackendRole, deque[Any]] = field(default_factory=dict)
    _log: list[MockCall] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock)
    _in_flight: int = 0
    _max_in_flight_seen: int = 0

    def script(self, role: BackendRole, responses: Iterable[Any]) -> None:
        """Append responses to the FIFO script for ``role``."""
        with self._lock:
            self._scripts.setdefault(role, deque()).extend(responses)

    @property
    def log(self) -> list[MockCall]:
        with self._lock:
            return list(self._log)

    def role_sequence(self, start: int = 0) -> list[BackendRole]:
        return [c.role for c in self.log[start:]]

    @property
    def calls_made(self) -> int:
        with self._lock:
            return len(self._log)

    @property
    def max_in_flight_seen(self) -> int:
        with self._lock:
            return self._max_in_flight_seen

    def remaining(self, role: BackendRole) -> int:
        with self._lock:
            return len(self._scripts.get(role, ()))

    def send(self, profile: BackendProfile, request: ModelRequest) -> Any:
        with self._lock:
            self._in_flight += 1
            self._max_in_flight_seen = max(self._max_in_flight_seen, self._in_flight)
            queue = self._scripts.get(request.role)
            # `entry` stays None when the role has no script or it is spent.
            entry = queue.popleft() if queue else None
        try:
            if self.delay:
                time.sleep(self.delay)
            ok = True
            try:
                return self._respond(request, entry)
            except Exception:
                ok = False
                raise
            finally:
                with self._lock:
                    self._log.append(
                        MockCall(
                            seq=len(self._log),
                            role=request.role,
                            model_name=request.model_name,
                            payload=dict(request.payload),
                            ok=ok,
                        )
                    )
        finally:
            with self._lock:
                self._in_flight -= 1

    def _respond(self, request: ModelRequest, entry: Any) -> Any:
        if isinstance(entry, ScriptedFailure):
            if entry.transient:
                raise TransientBackendError(entry.message)
            raise ProtocolError(entry.message)
        if entry is not None:
            return entry
        if request.role in EMBEDDER_ROLES:
            return self._hash_embed(request)
        raise ScriptExhausted(f"script for role {request.role.value!r} is exhausted")

    # -- deterministic embeddings -------------------------------------------

    def _hash_embed(self, request: ModelRequest) -> list[list[float]]:
        if request.role is BackendRole.TEXT_EMBEDDER:
            contents = [(text, "") for text in request.payload["input"]]
        else:
            contents = [
                (pair.get("text", ""), pair.get("image", ""))
                for pair in request.payload["inputs"]
            ]
        return [self._hash_vector(text, image) for text, image in contents]

    def _hash_vector(self, text: str, image: str) -> list[float]:
        if not text and not image:
            return [0.0] * self.embedding_dim
        seed = f"{text}\x1f{image}".encode("utf-8")
        blob = b""
        counter = 0
        while len(blob) < self.embedding_dim * 8:
            blob += hashlib.sha256(seed + counter.to_bytes(4, "big")).digest()
            counter += 1
        out = []
        for i in range(self.embedding_dim):
            word = int.from_bytes(blob[i * 8 : (i + 1) * 8], "big")
            out.append(word / float(2**64) * 2.0 - 1.0)
        return out
