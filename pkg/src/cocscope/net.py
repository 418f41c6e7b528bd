"""HTTP plumbing: politeness scheduling and pluggable transports.

The politeness gap is a global per-host contract: every live request from any
worker goes through one shared :class:`PolitenessScheduler`, which reserves
send slots so concurrent callers can never violate the minimum interval.
Snapshot transports replay recorded responses and never touch the network, so
they bypass scheduling.
"""

from __future__ import annotations

import base64
import json
import threading
import time
from dataclasses import dataclass, field
from urllib.parse import urlsplit

from .errors import TransportError

DEFAULT_TIMEOUT = 30.0
MIN_POLITENESS_SECONDS = 10.0


class PolitenessScheduler:
    """Serializes requests per host with a minimum inter-request interval.

    ``wait(host)`` blocks until at least ``min_interval`` has elapsed since
    the host's previous *actual* send time, then records the new send time.
    The per-host lock is held through the sleep, so the gap guarantee holds
    across concurrent workers; requests to different hosts proceed in
    parallel.
    """

    def __init__(self, min_interval: float, clock=time.monotonic, sleeper=time.sleep):
        if min_interval < 0:
            raise ValueError("min_interval must be non-negative")
        self.min_interval = float(min_interval)
        self._clock = clock
        self._sleep = sleeper
        self._registry_lock = threading.Lock()
        self._host_locks: dict[str, threading.Lock] = {}
        self._sent: dict[str, list[float]] = {}

    def _host_lock(self, host: str) -> threading.Lock:
        with self._registry_lock:
            if host not in self._host_locks:
                self._host_locks[host] = threading.Lock()
                self._sent[host] = []
            return self._host_locks[host]

    def wait(self, host: str) -> float:
        """Block until the host's gap has elapsed; record and return send time."""
        with self._host_lock(host):
            sent = self._sent[host]
            target = sent[-1] + self.min_interval if sent else self._clock()
            while True:
                now = self._clock()
                if now >= target:
                    break
                self._sleep(target - now)
            sent.append(now)
            return now

    def sent_times(self, host: str) -> list[float]:
        with self._host_lock(host):
            return list(self._sent[host])

    def min_observed_gap(self, host: str):
        """Smallest recorded inter-request gap for the host, or None."""
        times = self.sent_times(host)
        if len(times) < 2:
            return None
        return min(b - a for a, b in zip(times, times[1:]))


@dataclass
class TransportResponse:
    status: int
    headers: dict
    body: bytes

    @property
    def location(self):
        for key, value in self.headers.items():
            if key.lower() == "location":
                return value
        return None


class HttpTransport:
    """Live transport over ``requests``; every call pays the politeness gap.

    Redirects are not followed here -- callers that need redirect handling
    (URL validation) implement the hop limit themselves.
    """

    def __init__(self, scheduler: PolitenessScheduler, timeout: float = DEFAULT_TIMEOUT,
                 headers: dict | None = None):
        import requests

        self._requests = requests
        self.scheduler = scheduler
        self.timeout = timeout
        self.headers = headers or {"User-Agent": "cocscope/0.1 (research measurement)"}

    def get(self, url: str) -> TransportResponse:
        host = host_of(url)
        self.scheduler.wait(host)
        try:
            resp = self._requests.get(url, timeout=self.timeout, headers=self.headers,
                                      allow_redirects=False)
        except self._requests.RequestException as exc:
            raise TransportError(str(exc), url=url) from exc
        return TransportResponse(resp.status_code, dict(resp.headers), resp.content)


@dataclass
class SnapshotTransport:
    """Replays recorded responses keyed by exact URL; offline and instant.

    Snapshot file format: JSON object mapping URL -> {"status": int,
    "headers": {...}, "body": str, "body_b64": str}.  ``body`` is UTF-8 text;
    ``body_b64`` wins when both are present.
    """

    responses: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "SnapshotTransport":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        responses = {}
        for url, entry in raw.items():
            if "body_b64" in entry:
                body = base64.b64decode(entry["body_b64"])
            else:
                body = entry.get("body", "").encode("utf-8")
            responses[url] = TransportResponse(
                int(entry.get("status", 200)), dict(entry.get("headers", {})), body)
        return cls(responses)

    def get(self, url: str) -> TransportResponse:
        if url not in self.responses:
            raise TransportError(f"no snapshot entry for {url}", url=url)
        return self.responses[url]


def host_of(url: str) -> str:
    parts = urlsplit(url)
    host = (parts.hostname or "").lower()
    if parts.port is not None:
        return f"{host}:{parts.port}"
    return host
