"""Deterministic rule backends for model-free pipeline runs and tests.

The keyword backends trigger on curated term lists (same trailing-wildcard
convention as the lexicons); the hashing encoder derives a stable
pseudo-random vector per token.  All three are pure functions of their
inputs, safe for concurrent use.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

from ..extractor import DEFAULT_CATEGORIES
from ..labeler import DEFAULT_SCHEME, HYPOTHESIS_TEMPLATE


def _term_pattern(term: str) -> re.Pattern:
    wildcard = term.endswith("*")
    stem = term[:-1] if wildcard else term
    body = r"\s+".join(re.escape(p) for p in stem.split())
    suffix = r"\w*" if wildcard else ""
    return re.compile(rf"\b{body}{suffix}\b", re.IGNORECASE)


_LABEL_TERMS: dict[str, tuple[str, ...]] = {
    "misconduct": ("misconduct", "violation*", "prohibited", "forbidden", "not allowed",
                   "against the rules", "zero tolerance"),
    "harassment_and_threat": ("harass*", "threat*", "bully*", "stalk*", "intimidat*"),
    "hate_and_discrimination": ("hate", "hateful", "racis*", "discriminat*", "slur*",
                                "bigot*", "homophob*"),
    "exploiting_and_cheating": ("cheat*", "exploit*", "hack*", "aimbot*", "wallhack*",
                                "bug", "bugs", "glitch*", "macro*", "third-party software",
                                "unfair advantage"),
    "abuse_of_play": ("grief*", "troll*", "teamkill*", "feeding", "sabotag*",
                      "throwing matches", "afk abuse"),
    "circumventing_moderation": ("ban evasion", "evad*", "circumvent*", "false report*",
                                 "new account* to avoid", "smurf*"),
    "inappropriate_content": ("inappropriate", "obscene", "nsfw", "spam", "pornograph*",
                              "explicit content", "offensive content"),
    "privacy_breach": ("dox*", "personal information", "privacy", "private data",
                       "home address", "sensitive information"),
    "impersonation": ("impersonat*", "identity theft", "pose as", "pretend* to be"),
    "unauthorized_transaction": ("real-money", "real money", "account sharing",
                                 "sell* account*", "buy* account*", "rmt",
                                 "unauthorized purchase*", "gold selling"),
    "fraud_and_scamming": ("scam*", "fraud*", "phish*", "deceiv*", "social engineering"),
    "law_violation": ("illegal", "unlawful", "law*", "criminal", "regulation*"),
    "moderation": ("moderat*", "enforce*", "penalt*", "disciplinary", "sanction*"),
    "moderation_consequence": ("ban", "banned", "bans", "banning", "suspend*", "suspension*",
                               "warning*", "mute*", "rollback", "revocation", "terminat*",
                               "restriction*"),
    "moderation_mechanism": ("report button", "reporting tool*", "report a player",
                             "detection", "anti-cheat", "scan*", "review process",
                             "appeal*", "filter*", "game logs"),
    "expected_conduct": ("be kind", "be respectful", "respect*", "sportsmanship",
                         "follow the rules", "treat others", "play fair"),
    "value_justification": ("we believe", "our values", "community values", "inclusiv*",
                            "committed to", "welcoming"),
}

_HYPOTHESIS_PREFIX = HYPOTHESIS_TEMPLATE.format(label="")


class KeywordEntailmentBackend:
    """Entailment stub: the premise entails a label hypothesis when any of
    the label's trigger terms appears.  Confidence is hits/(hits+1), so one
    hit sits exactly on the default 0.5 decision threshold."""

    def __init__(self, scheme=DEFAULT_SCHEME):
        self._by_hypothesis = {}
        for label in scheme.labels:
            patterns = [_term_pattern(t) for t in _LABEL_TERMS[label]]
            self._by_hypothesis[scheme.hypothesis(label)] = patterns

    def entails(self, premise: str, hypothesis: str) -> tuple[bool, float]:
        patterns = self._by_hypothesis.get(hypothesis)
        if patterns is None:
            raise ValueError(f"unknown hypothesis {hypothesis!r}")
        hits = sum(len(p.findall(premise)) for p in patterns)
        return hits > 0, hits / (hits + 1.0)


_CATEGORY_TERMS: dict[str, tuple[str, ...]] = {
    "target_of_protection": ("player*", "user*", "community", "communities", "team*",
                             "clan*", "children", "minors", "streamer*", "celebrit*",
                             "moderator*", "staff", "employee*", "parent*", "guardian*"),
    "vulnerability_exploit": ("bug", "bugs", "glitch*", "aimbot*", "wallhack*", "macro*",
                              "bot", "bots", "hack*", "trainer*", "injector*",
                              "physics system", "ranking", "currency"),
    "inappropriate_information": ("spam", "nudity", "profanity", "spoiler*",
                                  "disinformation", "misinformation", "advertisement*",
                                  "hateful content", "obscene content"),
    "moderation_role": ("moderator*", "game master*", "admin*", "staff",
                        "trust and safety", "law enforcement", "support team",
                        "player*", "user*"),
    "moderation_consequence": ("ban*", "suspension*", "warning*", "mute*", "rollback*",
                               "restriction*", "removal", "termination", "revocation"),
    "moderation_mechanism": ("report*", "appeal*", "anti-cheat", "detection", "logs",
                             "filter*", "scan*"),
}


class KeywordQaBackend:
    """Extractive QA stub: answers a category query with every occurrence of
    the category's trigger terms, offsets exact."""

    def __init__(self, categories=DEFAULT_CATEGORIES):
        self._by_query = {}
        for category in categories:
            patterns = [_term_pattern(t) for t in _CATEGORY_TERMS[category.id]]
            self._by_query[category.query_text] = patterns

    def answer(self, context: str, query: str) -> list[tuple[str, int, int]]:
        patterns = self._by_query.get(query)
        if patterns is None:
            raise ValueError(f"unknown query {query!r}")
        found = []
        for pattern in patterns:
            for m in pattern.finditer(context):
                found.append((m.group(0), m.start(), m.end()))
        # Text order, dedup by offsets.
        found.sort(key=lambda t: (t[1], t[2]))
        deduped = []
        seen = set()
        for span in found:
            if (span[1], span[2]) not in seen:
                seen.add((span[1], span[2]))
                deduped.append(span)
        return deduped


_TOKEN_RE = re.compile(r"\S+")


class HashingEncoder:
    """Pseudo sentence encoder: each token gets a stable unit vector seeded
    by its lowercased text.  Context-free by construction; it exists so the
    embedding/clustering/scoring path runs without model weights."""

    def __init__(self, dim: int = 32):
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        key = token.lower()
        if key not in self._cache:
            digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
            seed = int.from_bytes(digest, "big")
            vec = np.random.Generator(np.random.PCG64(seed)).standard_normal(self.dim)
            self._cache[key] = vec / np.linalg.norm(vec)
        return self._cache[key]

    def encode(self, text: str) -> tuple[np.ndarray, list[tuple[int, int]]]:
        offsets = [(m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]
        if not offsets:
            return np.zeros((0, self.dim)), []
        matrix = np.stack([self._token_vector(text[s:e]) for s, e in offsets])
        return matrix, offsets
