"""HTTP transport for live backends.

Wire formats, one endpoint per role profile:

  chat roles       POST {model, messages, temperature, max_tokens, seed}
                   <- {choices: [{message: {content}}]}
  captioner        POST {model, prompt, image: {uri}|{base64}}
                   <- {caption}
  text embedder    POST {model, input: [text, ...]}
                   <- {data: [{embedding: [...]}, ...]}
  multimodal       POST {model, inputs: [{text, image: {uri}|{base64}}, ...]}
                   <- {data: [{embedding: [...]}, ...]}

Authentication is a bearer token read from the profile's ``api_key_env``
environment variable at call time. HTTP 429 and 5xx are transient (the
gateway retries them); other non-200 statuses and malformed bodies are
protocol errors.
"""

from __future__ import annotations

import base64
import os
from typing import Any

import requests

from .profiles import (
    BackendProfile,
    BackendRole,
    CHAT_ROLES,
    ModelRequest,
    ProtocolError,
    TransientBackendError,
)


def _image_field(uri: str) -> dict[str, str]:
    """Reference remote images by URI; inline local files as base64."""
    if "://" in uri or not os.path.isfile(uri):
        return {"uri": uri}
    with open(uri, "rb") as fh:
        return {"base64": base64.b64encode(fh.read()).decode("ascii")}


def build_wire_payload(request: ModelRequest) -> dict[str, Any]:
    body: dict[str, Any] = {"model": request.model_name}
    payload = request.payload
    if request.role in CHAT_ROLES:
        body.update(payload)
    elif request.role is BackendRole.CAPTIONER:
        body["prompt"] = payload["prompt"]
        body["image"] = _image_field(payload["image"])
    elif request.role is BackendRole.TEXT_EMBEDDER:
        body["input"] = list(payload["input"])
    elif request.role is BackendRole.MULTIMODAL_EMBEDDER:
        body["inputs"] = [
            {"text": pair["text"], "image": _image_field(pair["image"])}
            for pair in payload["inputs"]
        ]
    else:
        raise ProtocolError(f"no wire format for role {request.role!r}")
    return body


def parse_wire_response(role: BackendRole, body: Any) -> Any:
    try:
        if role in CHAT_ROLES:
            return body["choices"][0]["message"]["content"]
        if role is BackendRole.CAPTIONER:
            return body["caption"]
        return [item["embedding"] for item in body["data"]]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"malformed {role.value} response body: {exc!r}") from exc


class HttpTransport:
    def __init__(self, session: requests.Session | None = None) -> None:
        self.session = session or requests.Session()

    def send(self, profile: BackendProfile, request: ModelRequest) -> Any:
        if not profile.endpoint:
            raise ProtocolError(f"profile for {profile.role.value!r} has no endpoint")
        headers = {}
        if profile.api_key_env:
            key = os.environ.get(profile.api_key_env, "")
            if not key:
                raise ProtocolError(
                    f"api key env var {profile.api_key_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self.session.post(
                profile.endpoint,
                json=build_wire_payload(request),
                headers=headers,
                timeout=profile.timeout,
            )
        except requests.RequestException as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(
                f"backend returned {resp.status_code}: {resp.text[:200]}"
            )
        if resp.status_code != 200:
            raise ProtocolError(
                f"backend returned {resp.status_code}: {resp.text[:200]}"
            )
        try:
            body = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"response is not JSON: {resp.text[:200]}") from exc
        return parse_wire_response(request.role, body)
