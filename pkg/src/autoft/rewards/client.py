"""Client for an external vision-language success-detection service.

Wire contract: POST a JSON body ``{"image": <base64 bytes>, "prompt": text}``
and receive ``{"yes_prob": float, "no_prob": float}``. The prediction is the
yes-probability renormalized over the two answers. Queries are read-only, so
retries are safe; after the configured attempts the caller gets an explicit
unavailability error to handle.
"""

from __future__ import annotations

import base64
import io
from typing import Callable

import numpy as np

from ..core import Observation
from .base import RewardPrediction, prediction_from_p_yes

__all__ = [
    "RewardUnavailableError",
    "VLMRewardClient",
    "MockVLMBackend",
    "vlm_client_query",
    "observation_to_png_bytes",
]

Transport = Callable[[dict], dict]


class RewardUnavailableError(RuntimeError):
    """The reward service could not be reached within the retry budget."""


def observation_to_png_bytes(obs: Observation) -> bytes:
    """Encode the observation's image as PNG for the wire."""
    if obs.image is None:
        raise ValueError("observation carries no image to send")
    from PIL import Image

    arr = (np.clip(obs.image, 0.0, 1.0) * 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def _http_transport(endpoint: str, timeout: float) -> Transport:
    import requests

    def call(request: dict) -> dict:
        resp = requests.post(endpoint, json=request, timeout=timeout)
        resp.raise_for_status()
        return resp.json()

    return call


class VLMRewardClient:
    """Bounded-retry client; a custom transport may replace real HTTP."""

    def __init__(
        self,
        endpoint: str,
        timeout: float = 5.0,
        retries: int = 3,
        transport: Transport | None = None,
    ):
        if retries < 1:
            raise ValueError("retries must be >= 1")
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self._transport = transport or _http_transport(endpoint, timeout)

    def query(self, image_bytes: bytes, prompt: str) -> RewardPrediction:
        request = {
            "image": base64.b64encode(image_bytes).decode("ascii"),
            "prompt": prompt,
        }
        last_error: Exception | None = None
        for _ in range(self.retries):
            try:
                response = self._transport(request)
                return self._parse(response)
            except (KeyError, TypeError, ValueError) as exc:
                # malformed response payload: no point retrying
                raise RewardUnavailableError(f"malformed reward response: {exc}") from exc
            except Exception as exc:  # transport/timeout errors are retryable
                last_error = exc
        raise RewardUnavailableError(
            f"reward service at {self.endpoint} unavailable after {self.retries} attempts"
        ) from last_error

    @staticmethod
    def _parse(response: dict) -> RewardPrediction:
        yes = float(response["yes_prob"])
        no = float(response["no_prob"])
        if yes < 0 or no < 0:
            raise ValueError("answer probabilities must be nonnegative")
        total = yes + no
        p_yes = 0.5 if total == 0.0 else yes / total
        return prediction_from_p_yes(p_yes)


def vlm_client_query(
    endpoint: str,
    image_bytes: bytes,
    prompt: str,
    timeout: float = 5.0,
    retries: int = 3,
    transport: Transport | None = None,
) -> RewardPrediction:
    """One-shot convenience wrapper around :class:`VLMRewardClient`."""
    client = VLMRewardClient(endpoint, timeout=timeout, retries=retries, transport=transport)
    return client.query(image_bytes, prompt)


class MockVLMBackend:
    """Deterministic in-process transport for tests and dry runs.

    ``responder`` maps the decoded request to (yes_prob, no_prob); the default
    answers a fixed pair. Records every request it serves.
    """

    def __init__(self, yes_prob: float = 0.0, no_prob: float = 1.0, responder=None):
        self.yes_prob = yes_prob
        self.no_prob = no_prob
        self.responder = responder
        self.requests: list[dict] = []

    def __call__(self, request: dict) -> dict:
        self.requests.append(request)
        if self.responder is not None:
            yes, no = self.responder(request)
        else:
            yes, no = self.yes_prob, self.no_prob
        return {"yes_prob": yes, "no_prob": no}
