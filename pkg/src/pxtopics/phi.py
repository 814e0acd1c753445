"""Rule-based PHI detection and redaction for free-text comments.

Every category is covered by explicit pattern rules; no statistical NER.
Text is Unicode-normalized (NFC) before scanning and all span offsets
refer to the normalized text. Placeholders are bracketed uppercase tags
chosen so that no rule can re-match them, which makes redaction
idempotent and re-scans of redacted text empty.
"""

from __future__ import annotations

import random
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence


class PhiCategory(Enum):
    Name = "Name"
    Date = "Date"
    Phone = "Phone"
    Address = "Address"
    Email = "Email"
    Url = "Url"
    IdNumber = "IdNumber"
    CustomTerm = "CustomTerm"


PLACEHOLDERS = {
    PhiCategory.Name: "[NAME]",
    PhiCategory.Date: "[DATE]",
    PhiCategory.Phone: "[PHONE]",
    PhiCategory.Address: "[ADDRESS]",
    PhiCategory.Email: "[EMAIL]",
    PhiCategory.Url: "[URL]",
    PhiCategory.IdNumber: "[ID]",
    PhiCategory.CustomTerm: "[TERM]",
}

# Overlaps across categories are resolved in this order, highest first.
PRIORITY = (
    PhiCategory.IdNumber,
    PhiCategory.Phone,
    PhiCategory.Date,
    PhiCategory.Email,
    PhiCategory.Url,
    PhiCategory.Address,
    PhiCategory.Name,
    PhiCategory.CustomTerm,
)


@dataclass(frozen=True)
class RedactionSpan:
    start: int
    end: int
    category: PhiCategory
    matched_text: str


@dataclass(frozen=True)
class RedactionResult:
    redacted_text: str
    spans: tuple[RedactionSpan, ...]
    placeholder_counts: dict[PhiCategory, int]


@dataclass(frozen=True)
class PhiConfig:
    """Deny lists and per-category toggles.

    ``name_gazetteer`` holds staff names redacted as Name; ``custom_terms``
    holds the deny list (e.g. area hospital names) redacted as CustomTerm.
    """

    name_gazetteer: frozenset[str] = frozenset()
    custom_terms: frozenset[str] = frozenset()
    disabled: frozenset[PhiCategory] = frozenset()
    sample_size: int = 5
    seed: int = 0

    @classmethod
    def from_files(
        cls,
        name_gazetteer: str | Path | None = None,
        custom_terms: str | Path | None = None,
        **kwargs,
    ) -> "PhiConfig":
        return cls(
            name_gazetteer=load_gazetteer(name_gazetteer) if name_gazetteer else frozenset(),
            custom_terms=load_gazetteer(custom_terms) if custom_terms else frozenset(),
            **kwargs,
        )


def load_gazetteer(path: str | Path) -> frozenset[str]:
    """Load a term list, one term per line, UTF-8, blank lines ignored."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return frozenset(line.strip() for line in lines if line.strip())


def _street_suffixes() -> list[str]:
    text = resources.files("pxtopics.data").joinpath("street_suffixes.txt").read_text("utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


_MONTHS = (
    "January|February|March|April|May|June|July|August|September|October|"
    "November|December|Jan|Feb|Mar|Apr|Jun|Jul|Aug|Sep|Sept|Oct|Nov|Dec"
)

# R-ID1: SSN shape.
_RE_SSN = re.compile(r"(?<!\d)\d{3}-\d{2}-\d{4}(?!\d)(?!-\d)")
# R-ID2: bare digit runs of length >= 7; trigger-word proximity checked separately.
_RE_LONG_DIGITS = re.compile(r"(?<![\d.])\d{7,}(?!\.?\d)")
_ID_TRIGGERS = {"mrn", "record", "account", "member", "ssn", "id"}

# R-P1: North-American phone forms, 10 digits total, optional +1.
_RE_PHONE = re.compile(r"(?<![\d-])(?:\+?1[-. ]?)?\(?\d{3}\)?[-. ]?\d{3}[-. ]?\d{4}(?![\d-])")

# R-D1: numeric dates M/D/Y and M-D-Y with 2- or 4-digit year.
_RE_DATE_NUMERIC = re.compile(r"\b\d{1,2}([/-])\d{1,2}\1(?:\d{4}|\d{2})(?!\d)")
# R-D2: month name (full or 3-letter) + day, optional year. Bare years are kept.
_RE_DATE_TEXTUAL = re.compile(
    r"\b(?:" + _MONTHS + r")\.?\s+\d{1,2}(?:st|nd|rd|th)?(?:,?\s+\d{4})?\b"
)

# R-E1: email anchored to a token boundary so addresses inside URLs are
# left to the URL rule (avoids fracturing a URL around its userinfo part).
_RE_EMAIL = re.compile(
    r"(?<![A-Za-z0-9._%+/:@-])[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}(?![A-Za-z0-9-])"
)

# R-U1: scheme- or www-prefixed tokens.
_RE_URL = re.compile(r"\b(?:https?://|www\.)[^\s<>\"']+")
_URL_TRAILING = ".,;:!?)’'\""

# R-N1: capitalized token(s) immediately after an honorific; the honorific
# itself stays outside the span so titles survive redaction.
_RE_HONORIFIC_NAME = re.compile(
    r"\b(?:Doctor|Dr|Mrs|Ms|Mr|Nurse)\.?\s+([A-Z][a-z]+(?:[-'][A-Z][a-z]+)*"
    r"(?:\s+[A-Z][a-z]+(?:[-'][A-Z][a-z]+)*)?)"
)

_SUFFIX_ALT = "|".join(sorted(_street_suffixes(), key=len, reverse=True))
# R-A1: house number + 1-4 capitalized words + street suffix (suffix lexicon),
# optional unit and ZIP. "Dr" only acts as a suffix behind a number.
_RE_ADDRESS = re.compile(
    r"\b\d{1,6}\s+(?:[A-Z][A-Za-z']*\s+){1,4}(?:" + _SUFFIX_ALT + r")\b\.?"
    r"(?:,?\s*(?:Apt|Apartment|Suite|Ste|Unit|#)\.?\s*[\w-]+)?"
    r"(?:,?\s*\d{5}(?:-\d{4})?)?"
)


def _normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def _matches(pattern: re.Pattern, text: str, group: int = 0) -> list[tuple[int, int]]:
    return [(m.start(group), m.end(group)) for m in pattern.finditer(text)]


def _id_number_matches(text: str) -> list[tuple[int, int]]:
    hits = _matches(_RE_SSN, text)
    for start, end in _matches(_RE_LONG_DIGITS, text):
        preceding = re.sub(r"[^\w\s]", " ", text[:start]).split()
        if any(tok.lower() in _ID_TRIGGERS for tok in preceding[-3:]):
            hits.append((start, end))
    return hits


def _url_matches(text: str) -> list[tuple[int, int]]:
    hits = []
    for start, end in _matches(_RE_URL, text):
        while end > start and text[end - 1] in _URL_TRAILING:
            end -= 1
        if end > start:
            hits.append((start, end))
    return hits


def _gazetteer_matches(text: str, terms: Iterable[str]) -> list[tuple[int, int]]:
    hits = []
    for term in terms:
        pattern = re.compile(r"(?<!\w)" + re.escape(term) + r"(?!\w)", re.IGNORECASE)
        hits.extend(_matches(pattern, text))
    return hits


def _raw_category_matches(text: str, category: PhiCategory, config: PhiConfig) -> list[tuple[int, int]]:
    if category is PhiCategory.IdNumber:
        return _id_number_matches(text)
    if category is PhiCategory.Phone:
        return _matches(_RE_PHONE, text)
    if category is PhiCategory.Date:
        return _matches(_RE_DATE_NUMERIC, text) + _matches(_RE_DATE_TEXTUAL, text)
    if category is PhiCategory.Email:
        return _matches(_RE_EMAIL, text)
    if category is PhiCategory.Url:
        return _url_matches(text)
    if category is PhiCategory.Address:
        return _matches(_RE_ADDRESS, text)
    if category is PhiCategory.Name:
        hits = _matches(_RE_HONORIFIC_NAME, text, group=1)
        hits.extend(_gazetteer_matches(text, config.name_gazetteer))
        return hits
    if category is PhiCategory.CustomTerm:
        return _gazetteer_matches(text, config.custom_terms)
    raise ValueError(f"unknown category: {category}")


def _resolve(hits: list[tuple[int, int]], key) -> list[tuple[int, int]]:
    """Greedy non-overlapping selection under the given candidate ordering."""
    kept: list[tuple[int, int]] = []
    for start, end in sorted(hits, key=key):
        if all(end <= s or start >= e for s, e in kept):
            kept.append((start, end))
    return sorted(kept)


def scan_category(text: str, category: PhiCategory, config: PhiConfig | None = None) -> list[RedactionSpan]:
    """All maximal non-overlapping matches for one category, left to right."""
    config = config or PhiConfig()
    text = _normalize(text)
    hits = _raw_category_matches(text, category, config)
    kept = _resolve(hits, key=lambda h: (h[0], h[0] - h[1]))
    return [RedactionSpan(start=s, end=e, category=category, matched_text=text[s:e]) for s, e in kept]


def detect_all(text: str, config: PhiConfig | None = None) -> list[RedactionSpan]:
    """Union of all category scans, overlap-resolved and sorted by start.

    Overlapping candidates are resolved by category priority, then longer
    match, then earlier start.
    """
    config = config or PhiConfig()
    text = _normalize(text)
    rank = {category: i for i, category in enumerate(PRIORITY)}
    candidates: list[tuple[int, int, PhiCategory]] = []
    for category in PRIORITY:
        if category in config.disabled:
            continue
        for span in scan_category(text, category, config):
            candidates.append((span.start, span.end, category))
    kept: list[tuple[int, int, PhiCategory]] = []
    for start, end, category in sorted(
        candidates, key=lambda c: (rank[c[2]], c[0] - c[1], c[0])
    ):
        if all(end <= s or start >= e for s, e, _ in kept):
            kept.append((start, end, category))
    kept.sort()
    return [
        RedactionSpan(start=s, end=e, category=cat, matched_text=text[s:e]) for s, e, cat in kept
    ]


def redact(text: str, config: PhiConfig | None = None) -> RedactionResult:
    """Replace every detected span with its category placeholder.

    Non-span text is preserved exactly; honorific titles preceding a name
    stay in place because the Name rule never captures them.
    """
    config = config or PhiConfig()
    normalized = _normalize(text)
    spans = detect_all(normalized, config)
    pieces: list[str] = []
    cursor = 0
    for span in spans:
        pieces.append(normalized[cursor:span.start])
        pieces.append(PLACEHOLDERS[span.category])
        cursor = span.end
    pieces.append(normalized[cursor:])
    counts = Counter(span.category for span in spans)
    return RedactionResult(
        redacted_text="".join(pieces),
        spans=tuple(spans),
        placeholder_counts=dict(counts),
    )


def reconstruct_original(result: RedactionResult) -> str:
    """Invert a redaction by splicing matched_text back over each placeholder.

    Placeholder positions are recovered arithmetically from the span
    offsets, so literal placeholder look-alikes in the source text do not
    confuse the reconstruction.
    """
    out = result.redacted_text
    # once spans 0..k-1 are restored, placeholder k sits exactly at its
    # original start offset, so positions need no further adjustment
    for span in result.spans:
        placeholder = PLACEHOLDERS[span.category]
        assert out[span.start:span.start + len(placeholder)] == placeholder
        out = out[:span.start] + span.matched_text + out[span.start + len(placeholder):]
    return out


@dataclass(frozen=True)
class PhiReport:
    comments_scanned: int
    comments_with_phi: int
    phi_fraction: float
    category_counts: dict[str, int]
    sample: tuple[dict[str, str], ...]
    sample_size: int
    seed: int


def redaction_report(comments: Sequence, config: PhiConfig | None = None) -> PhiReport:
    """Corpus-level redaction summary plus a seeded reviewer sample."""
    config = config or PhiConfig()
    counts: Counter = Counter()
    with_phi = 0
    redacted: dict[str, RedactionResult] = {}
    for comment in comments:
        result = redact(comment.text, config)
        redacted[comment.id] = result
        for category, n in result.placeholder_counts.items():
            counts[category.value] += n
        if result.spans:
            with_phi += 1
    n = len(comments)
    rng = random.Random(config.seed)
    k = min(config.sample_size, n)
    picked = sorted(rng.sample(range(n), k))
    sample = tuple(
        {
            "comment_id": comments[i].id,
            "original": comments[i].text,
            "redacted": redacted[comments[i].id].redacted_text,
        }
        for i in picked
    )
    return PhiReport(
        comments_scanned=n,
        comments_with_phi=with_phi,
        phi_fraction=(with_phi / n) if n else 0.0,
        category_counts={c.value: counts.get(c.value, 0) for c in PhiCategory},
        sample=sample,
        sample_size=k,
        seed=config.seed,
    )
