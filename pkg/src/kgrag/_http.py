"""Shared HTTP plumbing for the embedding and completion backends."""

from __future__ import annotations

import time

import httpx

from .errors import BackendTimeout, BackendUnavailable, MalformedBackendResponse


def post_json_with_retries(
    client: httpx.Client,
    url: str,
    payload: dict,
    max_retries: int = 2,
    backoff_base: float = 0.5,
) -> dict:
    """POST with up to max_retries retries on transport failure / 5xx.

    Requests are idempotent reads, so retrying cannot duplicate side effects.
    4xx responses are permanent and raised immediately.
    """
    last_exc: Exception | None = None
    for attempt in range(max_retries + 1):
        try:
            response = client.post(url, json=payload)
        except httpx.TimeoutException as exc:
            last_exc = exc
        except httpx.HTTPError as exc:
            last_exc = exc
        else:
            if response.status_code >= 500:
                last_exc = BackendUnavailable(
                    f"server error {response.status_code} from {url}"
                )
            elif response.status_code >= 400:
                raise BackendUnavailable(
                    f"request rejected ({response.status_code}) by {url}: "
                    f"{response.text[:200]}"
                )
            else:
                try:
                    return response.json()
                except ValueError as exc:
                    raise MalformedBackendResponse(
                        f"non-JSON response from {url}"
                    ) from exc
        if attempt < max_retries:
            time.sleep(backoff_base * (2**attempt))
    if isinstance(last_exc, httpx.TimeoutException):
        raise BackendTimeout(f"timed out calling {url}") from last_exc
    raise BackendUnavailable(f"cannot reach {url}: {last_exc}") from last_exc
