"""Quantitative analyses over the labeled corpus and game metadata.

Lexicon measures, per-category coverage and co-occurrence matrices, review
stratification, and the statistical test family (Pearson and permutation
chi-square with BH false-discovery control, Spearman, Mann-Whitney with
rank-biserial effect, and likelihood-ratio logistic regression).  Test
statistics and p-values are computed from their standard definitions here;
the test suite cross-checks them against an independent implementation.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import mpmath
import numpy as np

from .catalog import AGE_RATINGS, GENRES, GameRecord, ReviewRecord
from .errors import ConvergenceError, DegenerateTableError
from .labeler import (MISCONDUCT_SUBTOPICS, MODERATION_SUBTOPICS, TOPIC_EXPECTED,
                      TOPIC_VALUES, LabelVector)

# ---------------------------------------------------------------------------
# Lexicons.  Roots with a trailing '*' match any token continuing the stem;
# multi-word and hyphenated roots match as phrases.

TOXICITY_ROOTS = ("toxic*", "harass*", "insult*", "grief*", "trol*",
                  "offen*", "inappropriate", "abus*", "flam*")

CHILD_ROOTS = ("child*", "kid*", "minor*", "youth*", "youngster*", "juvenile*",
               "underage*", "under 18", "under-age*", "young player*", "young user*")


@dataclass
class Lexicon:
    name: str
    roots: tuple[str, ...]

    def __post_init__(self):
        self._patterns = [(root, _root_pattern(root)) for root in self.roots]

    def match(self, text: str) -> list[str]:
        """All matched surface terms, in text order (may repeat)."""
        hits = []
        for _, pattern in self._patterns:
            hits.extend((m.start(), m.group(0)) for m in pattern.finditer(text))
        return [term for _, term in sorted(hits)]


def _root_pattern(root: str) -> re.Pattern:
    wildcard = root.endswith("*")
    stem = root[:-1] if wildcard else root
    parts = [re.escape(p) for p in stem.split()]
    body = r"\s+".join(parts)
    suffix = r"\w*" if wildcard else ""
    return re.compile(rf"\b{body}{suffix}\b", re.IGNORECASE)


TOXICITY_LEXICON = Lexicon("toxicity", TOXICITY_ROOTS)
CHILD_LEXICON = Lexicon("child", CHILD_ROOTS)


def lexicon_match(text: str, lexicon: Lexicon) -> tuple[bool, list[str]]:
    terms = lexicon.match(text)
    return bool(terms), terms


@dataclass
class PrevalenceResult:
    value: float
    matched: int
    total: int
    zero_denominator: bool = False


def toxicity_prevalence(reviews: Sequence[ReviewRecord],
                        lexicon: Lexicon = TOXICITY_LEXICON) -> PrevalenceResult:
    """Share of reviews matching the lexicon.  Reviews must already be
    restricted to the analysis window; an empty list yields a flagged zero."""
    total = len(reviews)
    if total == 0:
        return PrevalenceResult(0.0, 0, 0, zero_denominator=True)
    matched = sum(1 for r in reviews if lexicon.match(r.text))
    return PrevalenceResult(matched / total, matched, total)


# ---------------------------------------------------------------------------
# Coverage and co-occurrence.

def game_label_coverage(docs) -> dict[int, set[str]]:
    """Per-game label coverage from a labeled corpus: a game covers a label
    when any segment of any of its documents is positive for it."""
    coverage: dict[int, set[str]] = {}
    for doc in docs:
        labels: set[str] = set()
        for seg in doc.segments:
            vec = getattr(seg, "labels", None)
            if vec is not None:
                labels |= vec.true_labels()
        for app_id in doc.app_ids:
            coverage.setdefault(app_id, set()).update(labels)
    return coverage


def _category_values(game: GameRecord, axis: str) -> set[str]:
    if axis == "genre":
        return set(game.genres) or {"other"}
    if axis == "age_rating":
        return {game.age_rating}
    raise ValueError(f"unknown axis {axis!r}")


_AXIS_ORDER = {"genre": GENRES, "age_rating": AGE_RATINGS}


@dataclass
class CoverageMatrix:
    axis: str
    rows: list[str]
    cols: list[str]
    cells: list[list[float]]  # percentages in [0, 100]
    row_counts: list[int]
    notes: list[str] = field(default_factory=list)

    def cell(self, row: str, col: str) -> float:
        return self.cells[self.rows.index(row)][self.cols.index(col)]


def coverage_matrix(games: Sequence[GameRecord], game_labels: dict[int, set[str]],
                    axis: str, labels: Sequence[str]) -> CoverageMatrix:
    """Per-category coverage percentages over CoC-available games.

    Only games present in ``game_labels`` (i.e. with an analyzable document)
    enter the denominators; a multi-genre game counts once per genre row.
    Empty category rows are omitted with a note.
    """
    rows, cells, row_counts, notes = [], [], [], []
    for row in _AXIS_ORDER[axis]:
        members = [g for g in games if g.app_id in game_labels
                   and row in _category_values(g, axis)]
        if not members:
            notes.append(f"row {row!r} omitted: no games with documents")
            continue
        rows.append(row)
        row_counts.append(len(members))
        cells.append([
            100.0 * sum(1 for g in members if label in game_labels[g.app_id]) / len(members)
            for label in labels
        ])
    return CoverageMatrix(axis, rows, list(labels), cells, row_counts, notes)


GOVERNANCE_COLUMNS = MODERATION_SUBTOPICS + (TOPIC_EXPECTED, TOPIC_VALUES)


@dataclass
class CooccurrenceMatrix:
    rows: list[str]
    cols: list[str]
    rates: list[list[float | None]]  # row-normalized; None when row support is 0
    row_support: list[int]
    counts: list[list[int]]

    def rate(self, row: str, col: str) -> float | None:
        return self.rates[self.rows.index(row)][self.cols.index(col)]


def cooccurrence_matrix(vectors: Iterable[LabelVector],
                        rows: Sequence[str] = MISCONDUCT_SUBTOPICS,
                        cols: Sequence[str] = GOVERNANCE_COLUMNS) -> CooccurrenceMatrix:
    """Row-normalized segment co-occurrence: the share of segments carrying
    the row label that also carry the column label."""
    vectors = list(vectors)
    counts = [[0] * len(cols) for _ in rows]
    support = [0] * len(rows)
    for vec in vectors:
        on = vec.true_labels()
        for i, row in enumerate(rows):
            if row not in on:
                continue
            support[i] += 1
            for j, col in enumerate(cols):
                if col in on:
                    counts[i][j] += 1
    rates: list[list[float | None]] = []
    for i in range(len(rows)):
        if support[i] == 0:
            rates.append([None] * len(cols))
        else:
            rates.append([counts[i][j] / support[i] for j in range(len(cols))])
    return CooccurrenceMatrix(list(rows), list(cols), rates, support, counts)


# ---------------------------------------------------------------------------
# Availability and stratification.

@dataclass
class AvailabilityRow:
    category: str
    with_coc: int
    total: int

    @property
    def rate_pct(self) -> float:
        return 100.0 * self.with_coc / self.total if self.total else 0.0


def availability_table(games: Sequence[GameRecord], coc_app_ids: set[int],
                       axis: str | None = None) -> list[AvailabilityRow]:
    """CoC availability counts and rates, overall or per category."""
    if axis is None:
        return [AvailabilityRow("all", sum(1 for g in games if g.app_id in coc_app_ids),
                                len(games))]
    rows = []
    for category in _AXIS_ORDER[axis]:
        members = [g for g in games if category in _category_values(g, axis)]
        if not members:
            continue
        rows.append(AvailabilityRow(
            category, sum(1 for g in members if g.app_id in coc_app_ids), len(members)))
    return rows


def stratify(games: Sequence[GameRecord], bounds: Sequence[float]) -> list[tuple[str, list[GameRecord]]]:
    """Partition games by review count into half-open strata.

    bounds [a, b] produce [0, a), [a, b), [b, inf); a game exactly on a bound
    goes to the upper stratum.
    """
    if list(bounds) != sorted(set(bounds)):
        raise ValueError("bounds must be strictly increasing")
    edges = [0.0, *[float(b) for b in bounds], math.inf]
    strata: list[tuple[str, list[GameRecord]]] = []
    for lo, hi in zip(edges, edges[1:]):
        label = f"[{lo:g}, {hi:g})" if hi != math.inf else f"[{lo:g}, inf)"
        strata.append((label, [g for g in games if lo <= g.review_count < hi]))
    return strata


def child_mention_by_age(games: Sequence[GameRecord], game_texts: dict[int, str],
                         lexicon: Lexicon = CHILD_LEXICON):
    """2 x 5 table of child-lexicon mention vs age rating.

    Only rated games with an analyzable document enter the table; the
    'unrated' bucket is excluded by construction.
    """
    rated = [r for r in AGE_RATINGS if r != "unrated"]
    table = [[0] * len(rated) for _ in range(2)]
    for game in games:
        if game.age_rating == "unrated" or game.app_id not in game_texts:
            continue
        mention = 1 if lexicon.match(game_texts[game.app_id]) else 0
        table[mention][rated.index(game.age_rating)] += 1
    return table, ["no-mention", "mention"], rated


# ---------------------------------------------------------------------------
# Distribution tails (independent of scipy: erfc + regularized incomplete
# gamma/beta via mpmath).

def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def chi2_sf(x: float, dof: int) -> float:
    if x <= 0:
        return 1.0
    return float(mpmath.gammainc(dof / 2.0, x / 2.0, mpmath.inf, regularized=True))


def t_sf(t: float, df: float) -> float:
    if t < 0:
        return 1.0 - t_sf(-t, df)
    if t == 0:
        return 0.5
    x = df / (df + t * t)
    return float(0.5 * mpmath.betainc(df / 2.0, 0.5, 0, x, regularized=True))


# ---------------------------------------------------------------------------
# Statistical tests.

@dataclass
class StatResult:
    test: str
    statistic: float
    p: float
    dof: int | None
    effect: float | None
    n: int
    extra: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {"test": self.test, "statistic": self.statistic, "p": self.p,
               "dof": self.dof, "effect": self.effect, "n": self.n}
        rec.update(self.extra)
        return rec


def crosstab(xs: Sequence, ys: Sequence):
    """Contingency counts for two categorical vectors, categories sorted."""
    if len(xs) != len(ys):
        raise ValueError("vectors differ in length")
    x_cats = sorted(set(xs), key=str)
    y_cats = sorted(set(ys), key=str)
    table = [[0] * len(y_cats) for _ in x_cats]
    xi = {c: i for i, c in enumerate(x_cats)}
    yi = {c: i for i, c in enumerate(y_cats)}
    for x, y in zip(xs, ys):
        table[xi[x]][yi[y]] += 1
    return table, x_cats, y_cats


def _chi2_statistic(table: np.ndarray) -> tuple[float, int]:
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise DegenerateTableError("table has a zero margin")
    n = table.sum()
    expected = np.outer(rows, cols) / n
    stat = float(((table - expected) ** 2 / expected).sum())
    dof = (table.shape[0] - 1) * (table.shape[1] - 1)
    return stat, dof


def chi2_test(table) -> StatResult:
    """Pearson chi-square test of independence (no continuity correction)."""
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 2 or table.shape[1] < 2:
        raise ValueError("need an r x c table with r, c >= 2")
    stat, dof = _chi2_statistic(table)
    return StatResult("chi2", stat, chi2_sf(stat, dof), dof, None, int(table.sum()))


def permutation_chi2(xs: Sequence, ys: Sequence, n_resamples: int = 10_000,
                     seed: int = 0, n_streams: int = 8) -> StatResult:
    """Permutation test of independence with the chi-square statistic.

    Labels in ``ys`` are permuted against ``xs``; p uses the add-one rule
    (1 + hits) / (N + 1).  Resamples are generated from ``n_streams``
    independent child streams of the seed, so the result is identical no
    matter how the streams are executed.
    """
    table, x_cats, y_cats = crosstab(xs, ys)
    if len(x_cats) < 2 or len(y_cats) < 2:
        raise DegenerateTableError("a categorical vector is constant")
    observed, dof = _chi2_statistic(np.asarray(table, dtype=np.float64))

    x_index = {c: i for i, c in enumerate(x_cats)}
    y_index = {c: i for i, c in enumerate(y_cats)}
    x_codes = np.asarray([x_index[x] for x in xs])
    y_codes = np.asarray([y_index[y] for y in ys])
    n_x, n_y = len(x_cats), len(y_cats)
    n = len(x_codes)

    counts = [n_resamples // n_streams] * n_streams
    for i in range(n_resamples % n_streams):
        counts[i] += 1
    hits = 0
    row_margin = np.bincount(x_codes, minlength=n_x).astype(np.float64)
    col_margin = np.bincount(y_codes, minlength=n_y).astype(np.float64)
    expected = np.outer(row_margin, col_margin) / n
    for stream, count in zip(np.random.SeedSequence(seed).spawn(n_streams), counts):
        rng = np.random.Generator(np.random.PCG64(stream))
        for _ in range(count):
            perm = rng.permutation(y_codes)
            observed_counts = np.bincount(x_codes * n_y + perm,
                                          minlength=n_x * n_y).reshape(n_x, n_y)
            stat = ((observed_counts - expected) ** 2 / expected).sum()
            if stat >= observed - 1e-12:
                hits += 1
    p = (1 + hits) / (n_resamples + 1)
    return StatResult("perm_chi2", observed, p, dof, None, n,
                      extra={"n_resamples": n_resamples, "seed": seed})


def fdr_bh(pvalues: Sequence[float]) -> list[float]:
    """Benjamini-Hochberg adjusted p-values (step-up, clipped at 1)."""
    p = np.asarray(pvalues, dtype=np.float64)
    m = len(p)
    if m == 0:
        return []
    order = np.argsort(p, kind="stable")
    adjusted = np.empty(m)
    running = 1.0
    for rank in range(m - 1, -1, -1):
        idx = order[rank]
        running = min(running, p[idx] * m / (rank + 1))
        adjusted[idx] = min(1.0, running)
    return adjusted.tolist()


def perm_chi2_family(pairs: Sequence[tuple[Sequence, Sequence]], n_resamples: int = 10_000,
                     seed: int = 0) -> list[StatResult]:
    """Permutation chi-square over a family of tests with BH correction.

    Each pair gets its own child seed; adjusted p-values are stored in
    ``extra['p_adjusted']``.
    """
    results = []
    children = np.random.SeedSequence(seed).spawn(len(pairs))
    for (xs, ys), child in zip(pairs, children):
        child_seed = int(child.generate_state(1)[0])
        results.append(permutation_chi2(xs, ys, n_resamples, seed=child_seed))
    for result, adjusted in zip(results, fdr_bh([r.p for r in results])):
        result.test = "perm_chi2_fdr"
        result.extra["p_adjusted"] = adjusted
    return results


def _rankdata(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing the mean rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> StatResult:
    """Spearman rank correlation with the t-approximation p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 3:
        raise ValueError("need paired vectors of length >= 3")
    rx, ry = _rankdata(x), _rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx ** 2).sum() * (ry ** 2).sum()))
    if denom == 0:
        raise DegenerateTableError("constant vector has no rank correlation")
    r = float((rx * ry).sum() / denom)
    n = len(x)
    if abs(r) >= 1.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1 - r * r))
        p = 2.0 * t_sf(abs(t), n - 2)
    return StatResult("spearman", r, min(1.0, p), None, None, n)


def mannwhitney(a: Sequence[float], b: Sequence[float],
                use_continuity: bool = True) -> StatResult:
    """Two-sided Mann-Whitney U with tie-corrected normal approximation.

    Effect is the rank-biserial correlation 2U/(n1 n2) - 1 for sample ``a``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    combined = np.concatenate([a, b])
    ranks = _rankdata(combined)
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    mean = n1 * n2 / 2.0

    n = n1 + n2
    _, tie_counts = np.unique(combined, return_counts=True)
    tie_term = float((tie_counts ** 3 - tie_counts).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var == 0:
        raise DegenerateTableError("all observations identical")
    numerator = abs(u1 - mean)
    if use_continuity:
        numerator = max(0.0, numerator - 0.5)
    z = numerator / math.sqrt(var)
    p = min(1.0, 2.0 * normal_sf(z))
    rank_biserial = 2.0 * u1 / (n1 * n2) - 1.0
    return StatResult("mannwhitney", u1, p, None, rank_biserial, n)


def logit_lr(y: Sequence[float], covariates) -> StatResult:
    """Likelihood-ratio test for logistic regression vs the intercept-only
    model, fitted by iteratively reweighted least squares.

    Effect is the odds ratio of the first covariate.  Convergence tolerance
    1e-8 on the coefficient step, at most 100 iterations.
    """
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(covariates, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if len(y) != X.shape[0]:
        raise ValueError("outcome and covariates differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("outcome must be binary")
    design = np.column_stack([np.ones(len(y)), X])
    beta = np.zeros(design.shape[1])

    tol, max_iter = 1e-8, 100
    for iteration in range(max_iter):
        eta = design @ beta
        prob = 1.0 / (1.0 + np.exp(-eta))
        w = prob * (1.0 - prob)
        if np.any(w < 1e-300):
            raise ConvergenceError("degenerate fitted probabilities (separation?)",
                                   {"iteration": iteration})
        try:
            step = np.linalg.solve(design.T @ (design * w[:, None]),
                                   design.T @ (y - prob))
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular information matrix",
                                   {"iteration": iteration}) from exc
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    else:
        raise ConvergenceError("IRLS did not converge",
                               {"iterations": max_iter,
                                "max_step": float(np.max(np.abs(step)))})

    eta = design @ beta
    ll_full = float(np.sum(y * eta - np.log1p(np.exp(eta))))
    p_bar = y.mean()
    if p_bar in (0.0, 1.0):
        raise DegenerateTableError("outcome is constant")
    ll_null = float(len(y) * (p_bar * math.log(p_bar) + (1 - p_bar) * math.log(1 - p_bar)))
    lr = 2.0 * (ll_full - ll_null)
    dof = X.shape[1]
    odds_ratio = float(np.exp(beta[1]))
    return StatResult("logit_lr", lr, chi2_sf(lr, dof), dof, odds_ratio, len(y),
                      extra={"coefficients": [float(v) for v in beta]})


_TESTS = {
    "chi2": lambda data, **kw: chi2_test(data),
    "perm_chi2_fdr": lambda data, **kw: perm_chi2_family(data, **kw),
    "logit_lr": lambda data, **kw: logit_lr(data[0], data[1]),
    "spearman": lambda data, **kw: spearman(data[0], data[1]),
    "mannwhitney": lambda data, **kw: mannwhitney(data[0], data[1], **kw),
}


def run_stat(test: str, data, **options):
    """Dispatch a named test.  ``perm_chi2_fdr`` takes a family (list of
    categorical vector pairs) and returns one result per member."""
    if test not in _TESTS:
        raise ValueError(f"unknown test {test!r}; choose from {sorted(_TESTS)}")
    return _TESTS[test](data, **options)
