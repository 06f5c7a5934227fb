"""Shared JSON-over-HTTP client with the bounded retry policy.

Retries are attempted only for 429, 5xx, and transport errors; anything else
fails immediately. Backoff is exponential so eval runs stay bounded in
wall-clock time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import requests

from .errors import ProviderError


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base_s: float = 0.5
    backoff_factor: float = 2.0
    timeout_s: float = 60.0


def post_json(url: str, payload: dict, headers: dict[str, str], retry: RetryPolicy = RetryPolicy()) -> dict:
    """POST a JSON body and return the decoded JSON response.

    Raises ProviderError carrying the last status code and the attempt count
    once retries are exhausted.
    """
    last_status: int | None = None
    last_detail = ""
    for attempt in range(1, retry.max_attempts + 1):
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=retry.timeout_s)
        except requests.RequestException as exc:
            last_status = None
            last_detail = str(exc)
        else:
            if resp.status_code == 200:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise ProviderError(
                        f"non-JSON response from {url}: {exc}", status_code=resp.status_code, attempts=attempt
                    ) from exc
            last_status = resp.status_code
            last_detail = resp.text[:200]
            if not (resp.status_code == 429 or resp.status_code >= 500):
                raise ProviderError(
                    f"HTTP {resp.status_code} from {url}: {last_detail}",
                    status_code=resp.status_code,
                    attempts=attempt,
                )
        if attempt < retry.max_attempts:
            time.sleep(retry.backoff_base_s * retry.backoff_factor ** (attempt - 1))
    raise ProviderError(
        f"request to {url} failed after {retry.max_attempts} attempts: {last_detail}",
        status_code=last_status,
        attempts=retry.max_attempts,
    )
