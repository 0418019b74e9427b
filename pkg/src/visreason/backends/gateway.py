"""Role-routed gateway over model backends.

All model traffic flows through one :class:`Gateway`, which provides
response caching keyed by canonical request digest, bounded retries with
exponential backoff on transient failures, per-role in-flight limits, and
a globally ordered log of :class:`CallRecord` entries. Everything is
thread safe; the run harness fans instances out over a thread pool.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
import time
from typing import Any, Mapping, Protocol, Sequence

import numpy as np

from ..records import ImageRef
from .profiles import (
    BackendProfile,
    BackendRole,
    BackendUnavailable,
    CallRecord,
    CHAT_ROLES,
    ModelRequest,
    ProtocolError,
    RoleProfiles,
    SamplingParams,
    TransientBackendError,
    chat_payload,
)

logger = logging.getLogger("visreason.backends")


class Transport(Protocol):
    def send(self, profile: BackendProfile, request: ModelRequest) -> Any:
        """Execute one request, returning the role-shaped response value."""


class ResponseCache(Protocol):
    def get(self, digest: str) -> tuple[bool, Any]: ...

    def put(self, digest: str, value: Any) -> None: ...


class MemoryCache:
    def __init__(self) -> None:
        self._data: dict[str, Any] = {}
        self._lock = threading.Lock()

    def get(self, digest: str) -> tuple[bool, Any]:
        with self._lock:
            if digest in self._data:
                return True, self._data[digest]
        return False, None

    def put(self, digest: str, value: Any) -> None:
        with self._lock:
            self._data[digest] = value

    def __len__(self) -> int:
        return len(self._data)


class DiskCache:
    """One JSON file per request digest, written atomically.

    A warm directory survives across processes: a rerun with identical
    requests is served entirely from disk.
    """

    def __init__(self, directory: str) -> None:
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self._memory = MemoryCache()

    def _path(self, digest: str) -> str:
        return os.path.join(self.directory, digest + ".json")

    def get(self, digest: str) -> tuple[bool, Any]:
        hit, value = self._memory.get(digest)
        if hit:
            return True, value
        path = self._path(digest)
        try:
            with open(path, encoding="utf-8") as fh:
                value = json.load(fh)["value"]
        except FileNotFoundError:
            return False, None
        except (json.JSONDecodeError, KeyError):
            logger.warning("dropping unreadable cache entry %s", path)
            return False, None
        self._memory.put(digest, value)
        return True, value

    def put(self, digest: str, value: Any) -> None:
        self._memory.put(digest, value)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump({"value": value}, fh)
            os.replace(tmp, self._path(digest))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


class Gateway:
    """Typed entry points per role over a transport (or one per role)."""

    def __init__(
        self,
        profiles: RoleProfiles | Mapping[BackendRole, BackendProfile],
        transport: Transport | Mapping[BackendRole, Transport],
        cache: ResponseCache | None = None,
        sampling: SamplingParams = SamplingParams(),
    ) -> None:
        if not isinstance(profiles, RoleProfiles):
            profiles = RoleProfiles(dict(profiles))
        self.profiles = profiles
        self._transports = transport
        self.cache = cache
        self.sampling = sampling
        self._records: list[CallRecord] = []
        self._seq = 0
        self._lock = threading.Lock()
        self._semaphores: dict[BackendRole, threading.Semaphore] = {}

    # -- plumbing -----------------------------------------------------------

    def _transport(self, role: BackendRole) -> Transport:
        if isinstance(self._transports, Mapping):
            try:
                return self._transports[role]
            except KeyError:
                raise ProtocolError(f"no transport for role {role.value!r}") from None
        return self._transports

    def _semaphore(self, profile: BackendProfile) -> threading.Semaphore:
        with self._lock:
            sem = self._semaphores.get(profile.role)
            if sem is None:
                sem = threading.Semaphore(max(1, profile.max_in_flight))
                self._semaphores[profile.role] = sem
            return sem

    def _record(self, role: BackendRole, digest: str, cache_hit: bool, attempts: int, latency: float) -> None:
        with self._lock:
            self._records.append(
                CallRecord(self._seq, role, digest, cache_hit, attempts, latency)
            )
            self._seq += 1

    def _call(self, role: BackendRole, payload: Mapping[str, Any]) -> Any:
        profile = self.profiles.get(role)
        request = ModelRequest(role=role, model_name=profile.model_name, payload=payload)
        digest = request.digest()
        started = time.monotonic()
        if self.cache is not None:
            hit, value = self.cache.get(digest)
            if hit:
                self._record(role, digest, True, 0, time.monotonic() - started)
                return value

        sem = self._semaphore(profile)
        delay = profile.retry_backoff
        attempts = 0
        last_error: TransientBackendError | None = None
        while attempts <= profile.max_retries:
            attempts += 1
            try:
                with sem:
                    value = self._transport(role).send(profile, request)
            except TransientBackendError as exc:
                last_error = exc
                if attempts > profile.max_retries:
                    break
                logger.debug("retrying %s after transient error: %s", role.value, exc)
                time.sleep(delay)
                delay *= 2
                continue
            if self.cache is not None:
                self.cache.put(digest, value)
            self._record(role, digest, False, attempts, time.monotonic() - started)
            return value
        raise BackendUnavailable(
            f"{role.value} call failed after {attempts} attempts: {last_error}",
            last_error,
        )

    # -- observability ------------------------------------------------------

    @property
    def records(self) -> list[CallRecord]:
        with self._lock:
            return list(self._records)

    def counts(self) -> tuple[int, int]:
        """(live, cached) call counts so far."""
        with self._lock:
            live = sum(1 for r in self._records if not r.cache_hit)
            return live, len(self._records) - live

    # -- typed entry points ---------------------------------------------------

    def complete(
        self,
        messages: Sequence[Mapping[str, str]] | str,
        role: BackendRole = BackendRole.TEXT_LLM,
        params: SamplingParams | None = None,
    ) -> str:
        if role not in CHAT_ROLES:
            raise ProtocolError(f"complete() is for chat roles, not {role.value!r}")
        if isinstance(messages, str):
            messages = [{"role": "user", "content": messages}]
        payload = chat_payload([dict(m) for m in messages], params or self.sampling)
        value = self._call(role, payload)
        if not isinstance(value, str):
            raise ProtocolError(f"{role.value} returned non-text response: {value!r}")
        return value

    def caption(self, image: ImageRef, prompt: str) -> str:
        value = self._call(BackendRole.CAPTIONER, {"prompt": prompt, "image": image.uri})
        if not isinstance(value, str):
            raise ProtocolError(f"captioner returned non-text response: {value!r}")
        return value

    def embed_text(self, text: str) -> np.ndarray:
        value = self._call(BackendRole.TEXT_EMBEDDER, {"input": [text]})
        vectors = _as_matrix(value, expected=1)
        vec = vectors[0]
        if not np.any(vec):
            logger.warning("text embedding collapsed to the zero vector")
        return vec

    def embed_multimodal(self, text: str, images: Sequence[ImageRef]) -> np.ndarray:
        """Joint text+image embedding; multi-image inputs are mean-pooled."""
        if not images:
            raise ProtocolError("multimodal embedding needs at least one image")
        payload = {"inputs": [{"text": text, "image": im.uri} for im in images]}
        value = self._call(BackendRole.MULTIMODAL_EMBEDDER, payload)
        vectors = _as_matrix(value, expected=len(images))
        pooled = vectors.mean(axis=0)
        if not np.any(pooled):
            logger.warning("multimodal embedding collapsed to the zero vector")
        return pooled


def _as_matrix(value: Any, expected: int) -> np.ndarray:
    try:
        matrix = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"embedding response is not numeric: {value!r}") from exc
    if matrix.ndim != 2 or matrix.shape[0] != expected:
        raise ProtocolError(
            f"embedding response shape {matrix.shape} does not match {expected} inputs"
        )
    return matrix
