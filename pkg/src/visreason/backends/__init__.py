"""Backend gateway: role profiles, caching, retries, mock and HTTP transports."""

from .gateway import DiskCache, Gateway, MemoryCache, ResponseCache, Transport
from .http_api import HttpTransport
from .mock import MockCall, MockTransport, ScriptedFailure, ScriptExhausted
from .profiles import (
    BackendError,
    BackendProfile,
    BackendRole,
    BackendUnavailable,
    CallRecord,
    ModelRequest,
    ProtocolError,
    RoleProfiles,
    SamplingParams,
    TransientBackendError,
    canonical_json,
)

__all__ = [
    "BackendError",
    "BackendProfile",
    "BackendRole",
    "BackendUnavailable",
    "CallRecord",
    "DiskCache",
    "Gateway",
    "HttpTransport",
    "MemoryCache",
    "MockCall",
    "MockTransport",
    "ModelRequest",
    "ProtocolError",
    "ResponseCache",
    "RoleProfiles",
    "SamplingParams",
    "ScriptExhausted",
    "ScriptedFailure",
    "Transport",
    "TransientBackendError",
    "canonical_json",
]
