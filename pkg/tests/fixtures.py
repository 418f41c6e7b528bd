"""Desk-scale fixture corpus: a snapshot marketplace, conduct pages, and a
provider transcript, all deterministic and offline."""

from __future__ import annotations

import json
from pathlib import Path

import yaml

# Epoch anchor for review timestamps (fixed so reruns are byte-identical).
NOW = 1_750_000_000.0
YEAR = 365.25 * 86400.0

GENRE_CYCLE = ["Shooter", "MMORPG", "MOBA", "BattleRoyale", "Sports", "Fighting", "Sandbox"]
AGE_CYCLE = [0, 6, 12, 16, 18, None]  # None -> unrated

# Exploit vocabulary for conduct pages; repeated mentions seed dense clusters.
EXPLOIT_WORDS = ["aimbot", "wallhack", "glitch", "macro", "injector", "trainer"]


def _conduct_html(doc_index: int, exploit: str, mention_children: bool) -> str:
    """A conduct page exercising headings, lists, scripts, and stub triggers.

    Content varies by doc index so coverage and co-occurrence are not
    constant across the fixture corpus.
    """
    child_line = ("<p>We protect children and minors from harmful content, and any "
                  "content inappropriate for children is prohibited.</p>" if mention_children
                  else "<p>We protect players and the community from harmful conduct.</p>")
    exploit_lines = "".join(
        f"<li>Using an {exploit} or any {exploit} tool is forbidden and will "
        f"lead to a permanent ban.</li>" for _ in range(3))
    privacy_line = ("<li>Do not dox players or share personal information; privacy "
                    "matters and violators face suspension.</li>"
                    if doc_index % 3 != 2 else "")
    fraud_line = ("<li>Scams, fraud and phishing are illegal, violate the law and "
                  "lead to account termination.</li>" if doc_index % 4 != 3 else "")
    hate_line = ("<li>No hate or discriminatory slurs against any player or group; "
                 "our filters scan chat and offenders are muted.</li>"
                 if doc_index % 5 != 4 else "")
    if doc_index % 2 == 0:
        enforcement = ("<p>Moderators review every report. Penalties include warnings, "
                       "mutes, temporary suspension and permanent bans; appeals go "
                       "through the support team's report button and our anti-cheat "
                       "detection with game logs.</p>")
    else:
        enforcement = ("<p>Violations are punished with warnings, temporary suspension "
                       "or a permanent ban decided by our moderators.</p>")
    return f"""<html><head><title>Rules {doc_index}</title>
<style>body {{ color: red; }}</style></head>
<body>
<nav><a href="/">home</a><a href="/rules">rules</a></nav>
<script>trackVisit({doc_index});</script>
<h1>Community Rules</h1>
<p>Harassment and threats toward players are prohibited misconduct and violations
are taken seriously by our moderators.</p>
<h2>Fair play</h2>
<p>Cheating with a {exploit} or exploiting any bug or {exploit} glitch is
forbidden and results in account suspension or revocation after review.</p>
<ul>
{hate_line}
<li>No spam or inappropriate content in chat.</li>
{exploit_lines}
{privacy_line}
{fraud_line}
</ul>
{child_line}
<h2>Enforcement</h2>
{enforcement}
<p>Be respectful, play fair and treat others well; we believe our community
values inclusivity.</p>
</body></html>"""


LANDING_HTML = """<html><body>
<h1>Welcome</h1>
<p>Welcome to the official website for our game, check the store for news and
seasonal events coming soon this year.</p>
<p>Follow the development blog for updates, patch notes and community
spotlights published every single week.</p>
</body></html>"""


def build_desk_fixture(root: Path, n_docs: int = 20, resamples: int = 1000) -> dict:
    """Write snapshot.json, transcript.jsonl and run.yaml under ``root``.

    Returns a manifest of what was planted (app ids, doc urls, ...).
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    base = "http://market.test"
    snapshot: dict[str, dict] = {}
    apps = []
    details = {}
    reviews_by_app = {}
    transcript_lines = []

    planted = {"doc_urls": [], "coc_app_ids": [], "no_domain_app_ids": [],
               "excluded_doc_urls": []}

    app_id = 100
    doc_specs = []
    for d in range(n_docs):
        exploit = EXPLOIT_WORDS[d % len(EXPLOIT_WORDS)]
        mention_children = d % 3 == 0
        if d == n_docs - 1:
            html = LANDING_HTML  # generic landing page: excluded at labeling
        else:
            html = _conduct_html(d, exploit, mention_children)
        doc_specs.append((d, html))

    # One game per document, plus two extra games sharing docs 0 and 1.
    for d, html in doc_specs:
        domain = f"game{d}.test"
        url = f"http://support.{domain}/conduct"
        snapshot[url] = {"status": 200, "body": html}
        planted["doc_urls"].append(url)
        if d == len(doc_specs) - 1:
            planted["excluded_doc_urls"].append(url)
        genre = GENRE_CYCLE[d % len(GENRE_CYCLE)]
        age = AGE_CYCLE[d % len(AGE_CYCLE)]
        toxic = d % 2 == 0
        details[app_id] = {
            "app_id": app_id,
            "title": f"Game {d}",
            "official_domains": [domain],
            "min_age": age,
            "genres": [genre] + (["Sandbox"] if d % 5 == 0 and genre != "Sandbox" else []),
            "multiplayer_tags": ["OnlinePvP"] if d % 2 == 0 else ["MMO", "OnlineCoop"],
            "is_dlc": False,
            "anti_cheat_certified": d % 2 == 0,
            "review_count": [120, 900, 4500, 15000][d % 4],
        }
        reviews_by_app[app_id] = _reviews(app_id, toxic)
        transcript_lines.append({"type": "request", "app_id": app_id, "query": f"coc {d}"})
        transcript_lines.append({"type": "response", "app_id": app_id,
                                 "results": [{"url": url, "standalone": True}]})
        planted["coc_app_ids"].append(app_id)
        apps.append(app_id)
        app_id += 1

    # Two games sharing existing conduct documents (company-wide pages).
    for shared_doc in (0, 1):
        domain = f"game{shared_doc}.test"
        url = f"http://support.{domain}/conduct"
        details[app_id] = {
            "app_id": app_id, "title": f"Game shared {shared_doc}",
            "official_domains": [domain], "min_age": 12,
            "genres": ["MMORPG"], "multiplayer_tags": ["MMO"],
            "is_dlc": False, "anti_cheat_certified": True, "review_count": 2500,
        }
        reviews_by_app[app_id] = _reviews(app_id, toxic=True)
        transcript_lines.append({"type": "request", "app_id": app_id, "query": "shared"})
        transcript_lines.append({"type": "response", "app_id": app_id,
                                 "results": [{"url": url, "standalone": True}]})
        planted["coc_app_ids"].append(app_id)
        apps.append(app_id)
        app_id += 1

    # Games without conduct pages: rejected candidates and empty results.
    reject_specs = [
        ("offdomain", [{"url": "http://unrelated.example/conduct", "standalone": True}]),
        ("http404", [{"url": None, "standalone": True}]),  # filled below
        ("notstandalone", [{"url": None, "standalone": False}]),
        ("empty", []),
    ]
    for i, (kind, results) in enumerate(reject_specs):
        domain = f"plain{i}.test"
        details[app_id] = {
            "app_id": app_id, "title": f"Plain {i}",
            "official_domains": [domain],
            "min_age": AGE_CYCLE[i % len(AGE_CYCLE)],
            "genres": [GENRE_CYCLE[i % len(GENRE_CYCLE)]],
            "multiplayer_tags": ["OnlineCoop"],
            "is_dlc": False, "anti_cheat_certified": False,
            "review_count": [80, 700, 3000, 20000][i % 4],
        }
        reviews_by_app[app_id] = _reviews(app_id, toxic=False)
        for r in results:
            if r.get("url") is None:
                r["url"] = f"http://{domain}/missing"
                snapshot[r["url"]] = {"status": 404, "body": "not found"}
        transcript_lines.append({"type": "request", "app_id": app_id, "query": kind})
        transcript_lines.append({"type": "response", "app_id": app_id, "results": results})
        apps.append(app_id)
        app_id += 1

    # More CoC-less games so every genre and age bucket has both outcomes.
    for i in range(10):
        details[app_id] = {
            "app_id": app_id, "title": f"Quiet {i}",
            "official_domains": [f"quiet{i}.test"],
            "min_age": AGE_CYCLE[i % len(AGE_CYCLE)],
            "genres": [GENRE_CYCLE[i % len(GENRE_CYCLE)]],
            "multiplayer_tags": ["OnlinePvP"],
            "is_dlc": False, "anti_cheat_certified": i % 3 == 0,
            "review_count": [60, 1500, 8000, 30][i % 4],
        }
        reviews_by_app[app_id] = _reviews(app_id, toxic=i % 4 == 0)
        transcript_lines.append({"type": "request", "app_id": app_id, "query": "none"})
        transcript_lines.append({"type": "response", "app_id": app_id, "results": []})
        apps.append(app_id)
        app_id += 1

    # A game with no official domains (discovery records a note).
    details[app_id] = {
        "app_id": app_id, "title": "Domainless", "official_domains": [],
        "min_age": 12, "genres": ["Shooter"], "multiplayer_tags": ["OnlinePvP"],
        "is_dlc": False, "anti_cheat_certified": False, "review_count": 10,
    }
    reviews_by_app[app_id] = []
    planted["no_domain_app_ids"].append(app_id)
    apps.append(app_id)
    app_id += 1

    # DLC and tagless titles: filtered out before discovery.
    details[app_id] = {"app_id": app_id, "title": "Cosmetic Pack",
                       "official_domains": ["game0.test"], "min_age": 0,
                       "genres": ["Shooter"], "multiplayer_tags": ["OnlinePvP"],
                       "is_dlc": True, "anti_cheat_certified": False, "review_count": 5}
    apps.append(app_id)
    app_id += 1
    details[app_id] = {"app_id": app_id, "title": "Solo Story",
                       "official_domains": ["solo.test"], "min_age": 12,
                       "genres": ["other"], "multiplayer_tags": [],
                       "is_dlc": False, "anti_cheat_certified": False, "review_count": 400}
    apps.append(app_id)
    app_id += 1

    listing = {"apps": [{"app_id": a} for a in apps]}
    # Duplicate listing entry: crawler must dedupe.
    listing["apps"].append({"app_id": apps[0]})

    snapshot[f"{base}/apps"] = {"status": 200, "body": json.dumps(listing)}
    for a, payload in details.items():
        snapshot[f"{base}/apps/{a}"] = {"status": 200, "body": json.dumps(payload)}
        snapshot[f"{base}/apps/{a}/reviews"] = {
            "status": 200, "body": json.dumps({"reviews": reviews_by_app.get(a, [])})}

    with open(root / "snapshot.json", "w", encoding="utf-8") as fh:
        json.dump(snapshot, fh, sort_keys=True)
    with open(root / "transcript.jsonl", "w", encoding="utf-8") as fh:
        for line in transcript_lines:
            fh.write(json.dumps(line, sort_keys=True) + "\n")

    config = {
        "run_dir": str(root / "out"),
        "seed": 7,
        "politeness_seconds": 10,
        "transport": {"kind": "snapshot", "snapshot": str(root / "snapshot.json")},
        "catalog": {"source": {"base_url": base}, "window_years": 3, "now_utc": NOW},
        "discovery": {"provider": "transcript", "transcript": str(root / "transcript.jsonl")},
        "specificity": {"min_cluster_size": 5, "min_samples": 3, "group_by": ["game", "label"]},
        "analytics": {"resamples": resamples},
    }
    with open(root / "run.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(config, fh, sort_keys=True)

    planted["config_path"] = str(root / "run.yaml")
    planted["app_count"] = len(apps)
    return planted


def _reviews(app_id: int, toxic: bool) -> list[dict]:
    texts_toxic = [
        "the community is toxic and harassing new players",
        "so much griefing and trolling in ranked",
        "got insulted every match, devs do nothing",
        "abusive teammates everywhere",
    ]
    texts_clean = [
        "great co-op fun with friends",
        "lovely art style and relaxing gameplay",
        "performance improved a lot after the patch",
        "matchmaking is fast and fair",
    ]
    # Toxic share varies per app so prevalence values are not constant.
    toxic_count = (1 + app_id % 4) if toxic else (app_id % 3)
    out = []
    for i in range(8):
        text = (texts_toxic if i < toxic_count else texts_clean)[i % 4]
        # Two reviews per app fall outside the 3-year window.
        age_years = 4.5 if i >= 6 else 0.5 + i * 0.3
        out.append({"review_id": f"r{app_id}-{i}", "timestamp": NOW - age_years * YEAR,
                    "text": text})
    return out
