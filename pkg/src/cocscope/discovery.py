"""Conduct-page discovery: provider queries, domain filtering, HTTP validation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Protocol
from urllib.parse import urlsplit, urlunsplit, urljoin

from .catalog import GameRecord
from .errors import TransportError, ValidationError
from .jsonlio import dumps, read_jsonl

log = logging.getLogger(__name__)

MAX_REDIRECTS = 5

REJECT_INVALID_URL = "invalid-url"
REJECT_NOT_STANDALONE = "not-standalone"
REJECT_OFF_DOMAIN = "off-domain"
REJECT_HTTP = "http"
REJECT_UNREACHABLE = "unreachable"
NOTE_NO_DOMAIN = "no-domain"


def normalize_url(url: str) -> str:
    """Lowercase scheme+host, drop the fragment.  Idempotent."""
    parts = urlsplit(url.strip())
    host = (parts.hostname or "").lower()
    if parts.port is not None:
        host = f"{host}:{parts.port}"
    return urlunsplit((parts.scheme.lower(), host, parts.path, parts.query, ""))


def on_registrable_domain(url: str, official_domains: Iterable[str]) -> bool:
    """Suffix match on registrable domains, so support.example.com matches
    example.com."""
    host = (urlsplit(url).hostname or "").lower()
    if not host:
        return False
    for domain in official_domains:
        domain = domain.lower()
        if host == domain or host.endswith("." + domain):
            return True
    return False


@dataclass
class CocCandidate:
    app_id: int
    url: str
    provider_verdict: bool
    on_official_domain: bool = False
    http_status: int = 0
    accepted: bool = False
    reject_reason: str | None = None
    body: bytes = b""

    def __post_init__(self):
        if self.accepted:
            ok = (self.provider_verdict and self.on_official_domain
                  and 200 <= self.http_status <= 299)
            if not ok:
                raise ValueError("accepted candidate violates acceptance invariant")

    def to_record(self) -> dict:
        import base64

        rec = {
            "app_id": self.app_id,
            "url": self.url,
            "provider_verdict": self.provider_verdict,
            "on_official_domain": self.on_official_domain,
            "http_status": self.http_status,
            "accepted": self.accepted,
            "reject_reason": self.reject_reason,
        }
        if self.body:
            rec["body_b64"] = base64.b64encode(self.body).decode("ascii")
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "CocCandidate":
        import base64

        body = base64.b64decode(rec["body_b64"]) if rec.get("body_b64") else b""
        return cls(
            app_id=int(rec["app_id"]),
            url=rec["url"],
            provider_verdict=bool(rec["provider_verdict"]),
            on_official_domain=bool(rec.get("on_official_domain", False)),
            http_status=int(rec.get("http_status", 0)),
            accepted=bool(rec.get("accepted", False)),
            reject_reason=rec.get("reject_reason"),
            body=body,
        )


@dataclass
class DiscoveryResult:
    app_id: int
    candidates: list[CocCandidate] = field(default_factory=list)
    note: str | None = None

    @property
    def accepted(self) -> list[CocCandidate]:
        return [c for c in self.candidates if c.accepted]


class SearchProvider(Protocol):
    def query(self, game: GameRecord) -> list[tuple[str, bool]]:
        """Return (url, standalone-conduct-page verdict) pairs for a game."""
        ...


class TranscriptReplayProvider:
    """Replays a recorded provider transcript, byte-for-byte reproducible.

    Transcript format, one JSON record per line:
      {"type": "request", "app_id": A, "query": "..."}
      {"type": "response", "app_id": A, "results": [{"url": U, "standalone": B}, ...]}
    """

    def __init__(self, path):
        self._responses: dict[int, list[tuple[str, bool]]] = {}
        for rec in read_jsonl(path):
            if rec.get("type") == "response":
                results = [(r["url"], bool(r["standalone"])) for r in rec.get("results", [])]
                self._responses[int(rec["app_id"])] = results

    def query(self, game: GameRecord) -> list[tuple[str, bool]]:
        return list(self._responses.get(game.app_id, []))


class TranscriptRecorder:
    """Wraps a provider, appending request/response records so a later run
    can replay the exact transcript."""

    def __init__(self, provider: SearchProvider, path):
        self._provider = provider
        self._path = path

    def query(self, game: GameRecord) -> list[tuple[str, bool]]:
        results = self._provider.query(game)
        with open(self._path, "a", encoding="utf-8") as fh:
            fh.write(dumps({"type": "request", "app_id": game.app_id,
                            "query": build_search_query(game)}) + "\n")
            fh.write(dumps({"type": "response", "app_id": game.app_id,
                            "results": [{"url": u, "standalone": v} for u, v in results]}) + "\n")
        return results


def build_search_query(game: GameRecord) -> str:
    # Our own prompt wording; the upstream search model's prompt is not public.
    return (f'Find the official standalone code of conduct or community rules page '
            f'for the video game "{game.title}". Only pages whose primary purpose is '
            f'player behavior guidance count; terms of service do not.')


class LiveSearchAdapter:
    """Adapter for a JSON web-search endpoint.

    Expects the endpoint to accept {"query": str} POSTs and answer
    {"results": [{"url": str, "standalone": bool}, ...]}.  The concrete
    search model behind the endpoint is deployment configuration.
    """

    def __init__(self, endpoint: str, api_key: str | None = None, timeout: float = 60.0):
        import requests

        self._requests = requests
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout

    def query(self, game: GameRecord) -> list[tuple[str, bool]]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._requests.post(self.endpoint, json={"query": build_search_query(game)},
                                       headers=headers, timeout=self.timeout)
            resp.raise_for_status()
        except self._requests.RequestException as exc:
            raise TransportError(str(exc), app_id=game.app_id) from exc
        payload = resp.json()
        return [(r["url"], bool(r.get("standalone", False))) for r in payload.get("results", [])]


def validate_http(url: str, transport) -> tuple[int, bytes]:
    """Fetch a URL following at most MAX_REDIRECTS redirects.

    Returns (final status, final body).  Raises ValidationError with reason
    'too-many-redirects' or 'unreachable'.
    """
    current = url
    for _ in range(MAX_REDIRECTS + 1):
        try:
            resp = transport.get(current)
        except TransportError as exc:
            raise ValidationError(str(exc), reason=REJECT_UNREACHABLE) from exc
        if resp.status in (301, 302, 303, 307, 308) and resp.location:
            current = urljoin(current, resp.location)
            continue
        return resp.status, resp.body
    raise ValidationError(f"more than {MAX_REDIRECTS} redirects from {url}",
                          reason="too-many-redirects")


def discover(game: GameRecord, provider: SearchProvider, transport) -> DiscoveryResult:
    """Query the provider for a game and validate the returned candidates.

    Acceptance requires all three predicates: provider says standalone, URL is
    on an official domain, and HTTP validation lands in 2xx.  Candidates are
    deduplicated by normalized URL; off-domain or non-standalone URLs are
    rejected without being fetched.
    """
    if not game.official_domains:
        return DiscoveryResult(game.app_id, [], note=NOTE_NO_DOMAIN)

    result = DiscoveryResult(game.app_id)
    seen: set[str] = set()
    for raw_url, verdict in provider.query(game):
        try:
            url = normalize_url(raw_url)
            if not urlsplit(url).scheme or not urlsplit(url).hostname:
                raise ValueError("missing scheme or host")
        except ValueError:
            result.candidates.append(CocCandidate(game.app_id, raw_url, verdict,
                                                  reject_reason=REJECT_INVALID_URL))
            continue
        if url in seen:
            continue
        seen.add(url)

        on_domain = on_registrable_domain(url, game.official_domains)
        if not verdict:
            result.candidates.append(CocCandidate(game.app_id, url, verdict, on_domain,
                                                  reject_reason=REJECT_NOT_STANDALONE))
            continue
        if not on_domain:
            result.candidates.append(CocCandidate(game.app_id, url, verdict, False,
                                                  reject_reason=REJECT_OFF_DOMAIN))
            continue
        try:
            status, body = validate_http(url, transport)
        except ValidationError as exc:
            result.candidates.append(CocCandidate(game.app_id, url, verdict, True,
                                                  reject_reason=exc.reason))
            continue
        if 200 <= status <= 299:
            result.candidates.append(CocCandidate(game.app_id, url, verdict, True,
                                                  http_status=status, accepted=True, body=body))
        else:
            result.candidates.append(CocCandidate(game.app_id, url, verdict, True,
                                                  http_status=status, reject_reason=REJECT_HTTP))
    return result
