"""HTML sanitization and segmentation of conduct documents.

Sanitization strips markup and non-content subtrees while preserving the
block structure (headings, paragraphs, list items) in document order.
Segmentation maps blocks onto classifiable text segments with exact character
offsets into the sanitized text, so concatenating segments in order
reproduces the sanitized text minus the whitespace between them.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser

from .discovery import normalize_url

BLOCK_SEPARATOR = "\n\n"

# Subtrees whose text is never content.
_SKIP_TAGS = {"script", "style", "nav", "noscript", "head", "iframe", "svg",
              "canvas", "template", "object"}
# Tags that open a typed text block.
_HEADING_TAGS = {"h1", "h2", "h3", "h4", "h5", "h6"}
_BLOCK_TAGS = _HEADING_TAGS | {"p", "li"}
# Structural containers: entering/leaving one flushes any loose inline text.
_STRUCTURAL_TAGS = {"div", "section", "article", "main", "aside", "header", "footer",
                    "ul", "ol", "table", "tr", "td", "th", "blockquote", "pre",
                    "figure", "figcaption", "dl", "dt", "dd", "form", "body", "html"}

_WS_RE = re.compile(r"\s+")
_TOKEN_RE = re.compile(r"\S+")
_WORD_RE = re.compile(r"[^\W\d_]+", re.UNICODE)


def _normalize_ws(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


class _BlockExtractor(HTMLParser):
    """Collects (kind, text) blocks in document order, skipping non-content."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.blocks: list[tuple[str, str]] = []
        self._skip_depth = 0
        self._open: list[tuple[str, list[str]]] = []  # (tag, text parts)
        self._loose: list[str] = []

    def _kind_of(self, tag: str) -> str:
        if tag in _HEADING_TAGS:
            return "heading"
        if tag == "p":
            return "paragraph"
        return "list_item"

    def _flush_loose(self):
        text = _normalize_ws("".join(self._loose))
        self._loose = []
        if text:
            self.blocks.append(("other", text))

    def _close_block(self, tag: str):
        for i in range(len(self._open) - 1, -1, -1):
            if self._open[i][0] == tag:
                # Inner unclosed blocks are emitted too, innermost last opened first.
                for open_tag, parts in self._open[i:]:
                    text = _normalize_ws("".join(parts))
                    if text:
                        self.blocks.append((self._kind_of(open_tag), text))
                del self._open[i:]
                return

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
            return
        if self._skip_depth:
            return
        if tag == "br":
            target = self._open[-1][1] if self._open else self._loose
            target.append(" ")
            return
        if tag in _BLOCK_TAGS:
            self._flush_loose()
            # HTML permits implied closes: <li>a<li>b, <p>a<p>b.
            if self._open and self._open[-1][0] == tag:
                self._close_block(tag)
            self._open.append((tag, []))
            return
        if tag in _STRUCTURAL_TAGS:
            self._flush_loose()

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)
            return
        if self._skip_depth:
            return
        if tag in _BLOCK_TAGS:
            self._close_block(tag)
        elif tag in _STRUCTURAL_TAGS:
            self._flush_loose()

    def handle_data(self, data):
        if self._skip_depth:
            return
        if self._open:
            self._open[-1][1].append(data)
        else:
            self._loose.append(data)

    def close(self):
        super().close()
        while self._open:
            self._close_block(self._open[-1][0])
        self._flush_loose()


def sanitize_html(raw: bytes) -> tuple[str, list[tuple[str, int, int]]]:
    """Strip markup from raw HTML, keeping typed blocks in document order.

    Returns (sanitized_text, block_map) where each block_map entry is
    (kind, start, end) and sanitized_text[start:end] is the block text.
    Blocks are joined by a blank line.  Empty or markup-free input yields an
    empty block map.
    """
    text = raw.decode("utf-8", errors="replace")
    parser = _BlockExtractor()
    parser.feed(text)
    parser.close()

    pieces = []
    block_map = []
    cursor = 0
    for kind, block_text in parser.blocks:
        if pieces:
            pieces.append(BLOCK_SEPARATOR)
            cursor += len(BLOCK_SEPARATOR)
        start = cursor
        pieces.append(block_text)
        cursor += len(block_text)
        block_map.append((kind, start, cursor))
    return "".join(pieces), block_map


@dataclass
class Segment:
    seg_index: int
    text: str
    start_offset: int
    end_offset: int
    block_kind: str = "paragraph"
    language: str = ""

    def __post_init__(self):
        if self.end_offset <= self.start_offset:
            raise ValueError("end_offset must exceed start_offset")
        if not _normalize_ws(self.text):
            raise ValueError("segment text is empty after whitespace normalization")

    def token_count(self) -> int:
        return len(_TOKEN_RE.findall(self.text))

    def to_record(self, doc_id: str) -> dict:
        return {"type": "segment", "doc_id": doc_id, "seg_index": self.seg_index,
                "text": self.text, "start": self.start_offset, "end": self.end_offset,
                "kind": self.block_kind, "language": self.language}

    @classmethod
    def from_record(cls, rec: dict) -> "Segment":
        return cls(int(rec["seg_index"]), rec["text"], int(rec["start"]), int(rec["end"]),
                   rec.get("kind", "paragraph"), rec.get("language", ""))


@dataclass
class CocDocument:
    doc_id: str
    app_ids: set[int]
    url: str
    raw_html: bytes = b""
    sanitized_text: str = ""
    segments: list[Segment] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    @classmethod
    def from_fetch(cls, url: str, raw_html: bytes, app_ids: set[int]) -> "CocDocument":
        return cls(doc_id=compute_doc_id(url, raw_html), app_ids=set(app_ids),
                   url=normalize_url(url), raw_html=raw_html)

    def header_record(self) -> dict:
        return {"type": "doc", "doc_id": self.doc_id, "app_ids": sorted(self.app_ids),
                "url": self.url, "flags": sorted(self.flags),
                "segment_count": len(self.segments)}


def compute_doc_id(url: str, raw_html: bytes) -> str:
    """Stable id over (normalized URL, content); shared pages collapse to one
    document across the titles that link them."""
    content = hashlib.sha256(raw_html).hexdigest()
    return hashlib.sha256(f"{normalize_url(url)}\n{content}".encode("utf-8")).hexdigest()


@dataclass
class SegmenterConfig:
    # Headings under min_tokens merge into the following paragraph; blocks
    # over max_tokens split at sentence boundaries.
    min_tokens: int = 8
    max_tokens: int = 512


_SENTENCE_END_RE = re.compile(r"[.!?][\"')\]]?\s")


def _split_long_block(text: str, base: int, max_tokens: int) -> list[tuple[int, int]]:
    """Split a long block into <= max_tokens pieces; offsets are absolute."""
    tokens = list(_TOKEN_RE.finditer(text))
    if len(tokens) <= max_tokens:
        return [(base, base + len(text))]
    spans = []
    idx = 0
    while idx < len(tokens):
        window = tokens[idx:idx + max_tokens]
        if idx + max_tokens >= len(tokens):
            cut = len(tokens)
        else:
            # Prefer the last sentence end inside the window.
            cut = idx + len(window)
            window_text = text[window[0].start():window[-1].end()]
            best = None
            for m in _SENTENCE_END_RE.finditer(window_text):
                best = window[0].start() + m.start() + 1
            if best is not None:
                # Convert the character cut back to a token count.
                n_inside = sum(1 for t in window if t.end() <= best)
                if n_inside > 0:
                    cut = idx + n_inside
        piece_start = tokens[idx].start()
        piece_end = tokens[cut - 1].end()
        spans.append((base + piece_start, base + piece_end))
        idx = cut
    return spans


def segment_document(doc: CocDocument, config: SegmenterConfig | None = None) -> CocDocument:
    """Populate doc.segments from its sanitized text and block map.

    Requires sanitize_html output; call with doc.sanitized_text set, or it is
    computed here from raw_html.  Zero-segment documents get the 'empty' flag.
    """
    config = config or SegmenterConfig()
    doc.sanitized_text, block_map = sanitize_html(doc.raw_html)
    text = doc.sanitized_text
    merged: list[tuple[str, int, int]] = []
    i = 0
    while i < len(block_map):
        kind, start, end = block_map[i]
        n_tokens = len(_TOKEN_RE.findall(text[start:end]))
        if (kind == "heading" and n_tokens < config.min_tokens
                and i + 1 < len(block_map) and block_map[i + 1][0] == "paragraph"):
            _, _, para_end = block_map[i + 1]
            merged.append(("paragraph", start, para_end))
            i += 2
            continue
        merged.append((kind, start, end))
        i += 1

    segments: list[Segment] = []
    for kind, start, end in merged:
        for piece_start, piece_end in _split_long_block(text[start:end], start, config.max_tokens):
            piece_text = text[piece_start:piece_end]
            if not _normalize_ws(piece_text):
                continue
            segments.append(Segment(len(segments), piece_text, piece_start, piece_end, kind))

    doc.segments = segments
    if not segments and "empty" not in doc.flags:
        doc.flags.append("empty")
    return doc


# ---------------------------------------------------------------------------
# Language identification.  A deterministic stopword-profile detector: no
# model artifacts, identical verdicts on identical input, enough for keeping
# English segments and spotting the common European localizations.

_STOPWORDS = {
    "en": """the and is are was were be been being to of in that it with as for this
             you your not or by from we our will may any all do does did have has had
             if on at they their them can must should would could other please while
             about against between during before after above below under again then
             once here there when where why how no nor only own same so than too very""",
    "de": """der die das und ist sind war waren nicht mit für dass ein eine einen dem
             den des auf im zu von sich werden wird wir ihr sie es auch oder bei nach
             aus über wenn kann können müssen dürfen sollte keine kein sein haben seid
             euch ihre ihren unserer zum zur als wie noch nur durch gegen ohne""",
    "fr": """le la les et est sont être ne pas des une un du que qui dans pour avec sur
             vous votre vos nous notre nos ce cette ces il elle ils elles ou mais si
             tout tous toute peut doit doivent sans aux par plus comme leur leurs été""",
    "es": """el la los las y es son está están no de del que en un una por para con su
             sus se lo como más pero si este esta estos estas usted ustedes nosotros
             puede pueden debe deben sin al ser hay cuando donde porque también""",
    "it": """il lo la gli le e è sono non di che in un una per con su si del della dei
             delle questo questa questi queste come ma se può possono deve devono senza
             al ai nel nella anche più essere sia loro quando dove perché""",
    "pt": """o a os as e é são não de do da dos das que em um uma por para com seu sua
             seus suas se como mas mais este esta você vocês pode podem deve devem sem
             ao à nos nas também ser há quando onde porque foi""",
    "nl": """de het een en is zijn was waren niet met voor dat dit je jij u uw wij we
             ze zij op aan van te om bij naar uit over als kan kunnen moet moeten geen
             ook maar of nog door tegen zonder worden wordt hun onze deze die""",
}
_PROFILES = {lang: frozenset(words.split()) for lang, words in _STOPWORDS.items()}

MIN_DETECTION_TOKENS = 3
_DETECTION_THRESHOLD = 0.15


class StopwordLanguageDetector:
    """Scores text against per-language stopword profiles.

    Returns an ISO 639-1 code, or None when no profile clears the threshold
    or the top two profiles tie (ambiguous).
    """

    def detect(self, text: str) -> str | None:
        tokens = _WORD_RE.findall(text.lower())
        if not tokens:
            return None
        scores = {lang: sum(1 for t in tokens if t in profile) / len(tokens)
                  for lang, profile in _PROFILES.items()}
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        best_lang, best = ranked[0]
        if best < _DETECTION_THRESHOLD:
            return None
        if len(ranked) > 1 and ranked[1][1] == best:
            return None
        return best_lang


def annotate_languages(segments: list[Segment], detector=None) -> None:
    """Set each segment's language in place.

    Segments under MIN_DETECTION_TOKENS inherit the document's majority
    language; with no computable majority they get 'und'.  Detector failures
    also yield 'und' (conservative: excluded from classification).
    """
    detector = detector or StopwordLanguageDetector()
    verdicts: list[str | None] = []
    for seg in segments:
        if seg.token_count() < MIN_DETECTION_TOKENS:
            verdicts.append(None)
        else:
            try:
                verdicts.append(detector.detect(seg.text))
            except Exception:
                verdicts.append("und")

    counts: dict[str, int] = {}
    for v in verdicts:
        if v and v != "und":
            counts[v] = counts.get(v, 0) + 1
    majority = None
    if counts:
        ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if len(ordered) == 1 or ordered[0][1] > ordered[1][1]:
            majority = ordered[0][0]

    for seg, verdict in zip(segments, verdicts):
        if verdict is None:
            seg.language = majority if (seg.token_count() < MIN_DETECTION_TOKENS and majority) else "und"
        else:
            seg.language = verdict


def filter_english(segments: list[Segment], detector=None) -> list[Segment]:
    """Annotate languages, then return only the English segments in order."""
    annotate_languages(segments, detector)
    return [seg for seg in segments if seg.language == "en"]


# ---------------------------------------------------------------------------
# Corpus persistence: one doc header line followed by its segment lines.

def corpus_records(docs: list[CocDocument]):
    for doc in docs:
        yield doc.header_record()
        for seg in doc.segments:
            yield seg.to_record(doc.doc_id)


def read_corpus(records) -> list[CocDocument]:
    docs: list[CocDocument] = []
    by_id: dict[str, CocDocument] = {}
    for rec in records:
        if rec.get("type") == "doc":
            doc = CocDocument(doc_id=rec["doc_id"], app_ids=set(rec.get("app_ids", [])),
                              url=rec.get("url", ""), flags=list(rec.get("flags", [])))
            docs.append(doc)
            by_id[doc.doc_id] = doc
        elif rec.get("type") == "segment":
            by_id[rec["doc_id"]].segments.append(Segment.from_record(rec))
    for doc in docs:
        doc.segments.sort(key=lambda s: s.seg_index)
    return docs
