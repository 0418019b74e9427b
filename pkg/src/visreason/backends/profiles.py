"""Backend roles, profiles, canonical requests, and call records."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping


class BackendRole(str, Enum):
    TEXT_LLM = "text_llm"
    CAPTIONER = "captioner"
    TEXT_EMBEDDER = "text_embedder"
    MULTIMODAL_EMBEDDER = "multimodal_embedder"
    JUDGE = "judge"


CHAT_ROLES = (BackendRole.TEXT_LLM, BackendRole.JUDGE)


@dataclass(frozen=True)
class BackendProfile:
    """Connection settings and limits for one role."""

    role: BackendRole
    model_name: str
    endpoint: str = ""           # empty means an in-process transport
    api_key_env: str = ""        # env var holding the bearer token, if any
    timeout: float = 30.0
    max_retries: int = 2
    retry_backoff: float = 0.25  # seconds; doubles per retry
    max_in_flight: int = 4


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.0
    max_tokens: int = 512
    seed: int | None = 0


def canonical_json(payload: Any) -> str:
    """Stable JSON used for cache keys: sorted keys, no whitespace."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class ModelRequest:
    """One backend call, canonicalized so equal requests share a digest."""

    role: BackendRole
    model_name: str
    payload: Mapping[str, Any]

    def canonical(self) -> str:
        return canonical_json(
            {"role": self.role.value, "model": self.model_name, "payload": self.payload}
        )

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CallRecord:
    """One gateway call as observed by callers (cache hits included)."""

    seq: int
    role: BackendRole
    request_digest: str
    cache_hit: bool
    attempts: int
    latency: float


class BackendError(RuntimeError):
    pass


class TransientBackendError(BackendError):
    """Retryable: rate limits, server errors, transport interruptions."""


class ProtocolError(BackendError):
    """Not retryable: malformed requests or responses."""


class BackendUnavailable(BackendError):
    """Retries exhausted; carries the final underlying error."""

    def __init__(self, message: str, last_error: BackendError | None = None):
        super().__init__(message)
        self.last_error = last_error


def chat_payload(messages: list[dict[str, str]], params: SamplingParams) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "messages": messages,
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
    }
    if params.seed is not None:
        payload["seed"] = params.seed
    return payload


@dataclass
class RoleProfiles:
    """Profile lookup with a helpful error for unconfigured roles."""

    profiles: Mapping[BackendRole, BackendProfile] = field(default_factory=dict)

    def get(self, role: BackendRole) -> BackendProfile:
        try:
            return self.profiles[role]
        except KeyError:
            raise ProtocolError(f"no backend profile configured for role {role.value!r}") from None

    def __contains__(self, role: BackendRole) -> bool:
        return role in self.profiles
