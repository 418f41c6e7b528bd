import json

import pytest

from cocscope.catalog import (CatalogSource, GameRecord, ReviewRecord, crawl_catalog,
                              fetch_reviews, filter_review_window, filter_titles,
                              game_from_payload, parse_age_rating)
from cocscope.errors import NotFoundError
from cocscope.net import PolitenessScheduler, SnapshotTransport, TransportResponse


class FakeClock:
    def __init__(self):
        self.t = 0.0
        self.sleeps = []

    def monotonic(self):
        return self.t

    def sleep(self, seconds):
        self.sleeps.append(seconds)
        self.t += seconds


def make_source_transport(apps, reviews=None):
    base = "http://market.test"
    responses = {f"{base}/apps": TransportResponse(
        200, {}, json.dumps({"apps": [{"app_id": a["app_id"]} for a in apps]}).encode())}
    for a in apps:
        responses[f"{base}/apps/{a['app_id']}"] = TransportResponse(
            200, {}, json.dumps(a).encode())
        responses[f"{base}/apps/{a['app_id']}/reviews"] = TransportResponse(
            200, {}, json.dumps({"reviews": (reviews or {}).get(a["app_id"], [])}).encode())
    return CatalogSource(base_url=base), SnapshotTransport(responses)


def app_payload(app_id, **overrides):
    payload = {"app_id": app_id, "title": f"G{app_id}", "official_domains": [f"g{app_id}.test"],
               "min_age": 12, "genres": ["Shooter"], "multiplayer_tags": ["OnlinePvP"],
               "is_dlc": False, "anti_cheat_certified": False, "review_count": 10}
    payload.update(overrides)
    return payload


def test_crawl_emits_one_record_per_app_in_id_order():
    apps = [app_payload(1), app_payload(2), app_payload(3)]
    source, transport = make_source_transport(apps)
    games = list(crawl_catalog(source, 10, transport=transport))
    assert [g.app_id for g in games] == [1, 2, 3]


def test_crawl_deduplicates_listing_entries():
    apps = [app_payload(7)]
    source, transport = make_source_transport(apps)
    listing = {"apps": [{"app_id": 7}, {"app_id": 7}]}
    transport.responses[f"{source.base_url}/apps"] = TransportResponse(
        200, {}, json.dumps(listing).encode())
    games = list(crawl_catalog(source, 10, transport=transport))
    assert len(games) == 1


def test_crawl_skips_malformed_metadata():
    apps = [app_payload(1), app_payload(2)]
    source, transport = make_source_transport(apps)
    transport.responses[f"{source.base_url}/apps/2"] = TransportResponse(
        200, {}, b'{"title": "missing app_id"}')
    games = list(crawl_catalog(source, 10, transport=transport))
    assert [g.app_id for g in games] == [1]


def test_crawl_rejects_impolite_interval():
    source, transport = make_source_transport([app_payload(1)])
    with pytest.raises(ValueError):
        list(crawl_catalog(source, 5, transport=transport))


def test_scheduler_reserves_min_interval_slots():
    clock = FakeClock()
    scheduler = PolitenessScheduler(10, clock=clock.monotonic, sleeper=clock.sleep)
    for _ in range(3):
        scheduler.wait("market.test")
    assert scheduler.min_observed_gap("market.test") >= 10
    # Other hosts are independent.
    scheduler.wait("elsewhere.test")
    assert scheduler.min_observed_gap("elsewhere.test") is None


def test_scheduler_gap_holds_across_threads():
    import threading

    clock = FakeClock()
    lock = threading.Lock()

    def locked_monotonic():
        with lock:
            return clock.t

    def locked_sleep(seconds):
        with lock:
            clock.t += seconds

    scheduler = PolitenessScheduler(10, clock=locked_monotonic, sleeper=locked_sleep)
    threads = [threading.Thread(target=scheduler.wait, args=("h.test",)) for _ in range(5)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(scheduler.sent_times("h.test")) == 5
    assert scheduler.min_observed_gap("h.test") >= 10


def test_filter_titles_rules():
    games = [
        GameRecord(1, "dlc", multiplayer_tags={"OnlinePvP"}, is_dlc=True),
        GameRecord(2, "solo", multiplayer_tags=set()),
        GameRecord(3, "mmo", multiplayer_tags={"MMO"}),
    ]
    kept = list(filter_titles(games))
    assert [g.app_id for g in kept] == [3]


def test_filter_titles_idempotent():
    games = [GameRecord(i, f"g{i}", multiplayer_tags={"MMO"} if i % 2 else set(),
                        is_dlc=(i % 3 == 0)) for i in range(12)]
    once = list(filter_titles(games))
    twice = list(filter_titles(once))
    assert once == twice


def test_age_rating_parsing():
    assert parse_age_rating(16) == "16+"
    assert parse_age_rating(None) == "unrated"
    assert parse_age_rating("junk") == "unrated"
    assert parse_age_rating(13) == "unrated"


def test_game_from_payload_normalizes():
    record = game_from_payload(app_payload(5, official_domains=["MiXeD.Example.COM"],
                                           genres=["Shooter", "weird-genre"]))
    assert record.official_domains == {"mixed.example.com"}
    assert record.genres == {"Shooter", "other"}


def test_review_window_filters_and_sorts():
    now = 1_000_000_000.0
    year = 365.25 * 86400
    ages = [0.2, 1.2, 2.2, 3.2, 4.2]  # years; 2 reviews fall outside window=3
    reviews = [ReviewRecord(f"r{i}", 1, now - age * year, f"text {i}")
               for i, age in enumerate(ages)]
    kept = filter_review_window(reviews, 3, now)
    assert [r.review_id for r in kept] == ["r0", "r1", "r2"]
    assert all(kept[i].timestamp >= kept[i + 1].timestamp for i in range(len(kept) - 1))
    assert kept[-1].timestamp > now - 3 * year  # oldest returned is < 3 years old


def test_fetch_reviews_unknown_app():
    apps = [app_payload(1)]
    source, transport = make_source_transport(apps)
    catalog = {1: game_from_payload(apps[0])}
    with pytest.raises(NotFoundError):
        fetch_reviews(source, catalog, 99, 3, now=1e9, transport=transport)


def test_fetch_reviews_applies_window():
    now = 2_000_000_000.0
    year = 365.25 * 86400
    reviews = {1: [{"review_id": "new", "timestamp": now - 0.5 * year, "text": "a"},
                   {"review_id": "old", "timestamp": now - 4 * year, "text": "b"}]}
    apps = [app_payload(1)]
    source, transport = make_source_transport(apps, reviews)
    catalog = {1: game_from_payload(apps[0])}
    got = fetch_reviews(source, catalog, 1, 3, now=now, transport=transport)
    assert [r.review_id for r in got] == ["new"]
    assert got[0].timestamp > now - 3 * year
