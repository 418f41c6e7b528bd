"""Marketplace catalog ingestion: game metadata, reviews, title filtering."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import NotFoundError, TransportError
from .net import MIN_POLITENESS_SECONDS, PolitenessScheduler, host_of

log = logging.getLogger(__name__)

AGE_RATINGS = ("0+", "6+", "12+", "16+", "18+", "unrated")
GENRES = ("MOBA", "BattleRoyale", "Shooter", "MMORPG", "Sports", "Fighting", "Sandbox", "other")
MULTIPLAYER_TAGS = ("MMO", "OnlinePvP", "OnlineCoop")

# Minimum-age thresholds as reported by the marketplace, mapped to rating buckets.
_AGE_BY_THRESHOLD = {0: "0+", 6: "6+", 12: "12+", 16: "16+", 18: "18+"}


@dataclass
class GameRecord:
    app_id: int
    title: str
    official_domains: set[str] = field(default_factory=set)
    age_rating: str = "unrated"
    genres: set[str] = field(default_factory=set)
    multiplayer_tags: set[str] = field(default_factory=set)
    is_dlc: bool = False
    anti_cheat_certified: bool = False
    review_count: int = 0

    def __post_init__(self):
        if self.age_rating not in AGE_RATINGS:
            raise ValueError(f"unknown age rating {self.age_rating!r}")
        if self.review_count < 0:
            raise ValueError("review_count must be >= 0")
        self.official_domains = {d.lower() for d in self.official_domains}

    def to_record(self) -> dict:
        return {
            "app_id": self.app_id,
            "title": self.title,
            "official_domains": sorted(self.official_domains),
            "age_rating": self.age_rating,
            "genres": sorted(self.genres),
            "multiplayer_tags": sorted(self.multiplayer_tags),
            "is_dlc": self.is_dlc,
            "anti_cheat_certified": self.anti_cheat_certified,
            "review_count": self.review_count,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "GameRecord":
        return cls(
            app_id=int(rec["app_id"]),
            title=rec["title"],
            official_domains=set(rec.get("official_domains", [])),
            age_rating=rec.get("age_rating", "unrated"),
            genres=set(rec.get("genres", [])),
            multiplayer_tags=set(rec.get("multiplayer_tags", [])),
            is_dlc=bool(rec.get("is_dlc", False)),
            anti_cheat_certified=bool(rec.get("anti_cheat_certified", False)),
            review_count=int(rec.get("review_count", 0)),
        )


@dataclass
class ReviewRecord:
    review_id: str
    app_id: int
    timestamp: float  # UTC seconds
    text: str

    def __post_init__(self):
        if self.timestamp <= 0:
            raise ValueError("timestamp must be positive")

    def to_record(self) -> dict:
        return {"review_id": self.review_id, "app_id": self.app_id,
                "timestamp": self.timestamp, "text": self.text}

    @classmethod
    def from_record(cls, rec: dict) -> "ReviewRecord":
        return cls(rec["review_id"], int(rec["app_id"]), float(rec["timestamp"]), rec["text"])


@dataclass
class CatalogSource:
    """Endpoint descriptor.  Fixtures and the live marketplace share this
    one code path; only the base URL differs."""

    base_url: str
    list_path: str = "/apps"
    detail_path: str = "/apps/{app_id}"
    reviews_path: str = "/apps/{app_id}/reviews"

    def list_url(self) -> str:
        return self.base_url.rstrip("/") + self.list_path

    def detail_url(self, app_id: int) -> str:
        return self.base_url.rstrip("/") + self.detail_path.format(app_id=app_id)

    def reviews_url(self, app_id: int) -> str:
        return self.base_url.rstrip("/") + self.reviews_path.format(app_id=app_id)


def parse_age_rating(value) -> str:
    """Marketplace minimum-age field -> rating bucket; anything unparseable
    lands in 'unrated' (kept as a bucket, never dropped)."""
    if value is None:
        return "unrated"
    try:
        threshold = int(value)
    except (TypeError, ValueError):
        return "unrated"
    return _AGE_BY_THRESHOLD.get(threshold, "unrated")


def game_from_payload(payload: dict) -> GameRecord:
    """Build a GameRecord from a marketplace detail payload.

    Raises KeyError/ValueError on malformed payloads; the crawler skips and
    logs those.
    """
    genres = {g if g in GENRES else "other" for g in payload.get("genres", [])}
    tags = {t for t in payload.get("multiplayer_tags", []) if t in MULTIPLAYER_TAGS}
    return GameRecord(
        app_id=int(payload["app_id"]),
        title=str(payload["title"]),
        official_domains=set(payload.get("official_domains", [])),
        age_rating=parse_age_rating(payload.get("min_age")),
        genres=genres,
        multiplayer_tags=tags,
        is_dlc=bool(payload.get("is_dlc", False)),
        anti_cheat_certified=bool(payload.get("anti_cheat_certified", False)),
        review_count=int(payload.get("review_count", 0)),
    )


def _get_json(transport, url, retries=2):
    import json

    last = None
    for _ in range(retries + 1):
        try:
            resp = transport.get(url)
        except TransportError as exc:
            last = exc
            continue
        if resp.status >= 500:
            last = TransportError(f"HTTP {resp.status}", url=url)
            continue
        if resp.status != 200:
            raise TransportError(f"HTTP {resp.status}", url=url)
        return json.loads(resp.body.decode("utf-8"))
    raise last


def crawl_catalog(source: CatalogSource, politeness: float, transport=None,
                  scheduler: PolitenessScheduler | None = None) -> Iterator[GameRecord]:
    """Crawl the source index, emitting one GameRecord per distinct app_id.

    ``politeness`` must honor the >= 10 s per-host floor; live transports are
    built on the shared scheduler so the gap holds across workers.  Malformed
    detail payloads are skipped with a log line.
    """
    if politeness < MIN_POLITENESS_SECONDS:
        raise ValueError(f"politeness must be >= {MIN_POLITENESS_SECONDS} seconds")
    if transport is None:
        from .net import HttpTransport

        scheduler = scheduler or PolitenessScheduler(politeness)
        transport = HttpTransport(scheduler)

    listing = _get_json(transport, source.list_url())
    seen: set[int] = set()
    for entry in listing.get("apps", []):
        try:
            app_id = int(entry["app_id"])
        except (KeyError, TypeError, ValueError):
            log.warning("skipping malformed listing entry: %r", entry)
            continue
        if app_id in seen:
            continue
        seen.add(app_id)
        try:
            payload = _get_json(transport, source.detail_url(app_id))
            record = game_from_payload(payload)
        except TransportError as exc:
            exc.app_id = app_id
            raise
        except (KeyError, TypeError, ValueError) as exc:
            log.warning("skipping app %s: malformed metadata (%s)", app_id, exc)
            continue
        yield record


def filter_titles(catalog: Iterable[GameRecord]) -> Iterator[GameRecord]:
    """Keep non-DLC titles carrying at least one online-multiplayer tag.

    Pure and idempotent; order preserved.
    """
    for game in catalog:
        if game.is_dlc:
            continue
        if not game.multiplayer_tags:
            continue
        yield game


def filter_review_window(reviews: Iterable[ReviewRecord], window_years: int,
                         now: float) -> list[ReviewRecord]:
    """Reviews with timestamps in [now - window_years, now], newest first."""
    if window_years <= 0:
        raise ValueError("window_years must be positive")
    horizon = now - window_years * 365.25 * 86400.0
    kept = [r for r in reviews if horizon <= r.timestamp <= now]
    kept.sort(key=lambda r: (-r.timestamp, r.review_id))
    return kept


def fetch_app_reviews(source: CatalogSource, app_id: int, transport) -> list[ReviewRecord]:
    """Fetch every available review for an app (no window applied)."""
    payload = _get_json(transport, source.reviews_url(app_id))
    reviews = []
    for rec in payload.get("reviews", []):
        try:
            reviews.append(ReviewRecord(str(rec["review_id"]), app_id,
                                        float(rec["timestamp"]), str(rec.get("text", ""))))
        except (KeyError, ValueError) as exc:
            log.warning("skipping malformed review for app %s: %s", app_id, exc)
    return reviews


def fetch_reviews(source: CatalogSource, catalog: dict[int, GameRecord], app_id: int,
                  window_years: int, now: float, transport) -> list[ReviewRecord]:
    """Fetch an app's reviews and restrict them to the recent window."""
    if app_id not in catalog:
        raise NotFoundError(f"app_id {app_id} not in catalog")
    return filter_review_window(fetch_app_reviews(source, app_id, transport),
                                window_years, now)


def source_host(source: CatalogSource) -> str:
    return host_of(source.base_url)
