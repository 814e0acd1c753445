"""Canonical topic set and corpus loading.

Comments, survey records, and annotation sets are loaded from CSV
(UTF-8, header row, RFC-4180 quoting) or JSONL (one object per line).
Loading never mutates input files; all returned objects are immutable.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from pxtopics.errors import (
    DuplicateId,
    MalformedRecord,
    NonBinaryLabel,
    UnknownColumn,
    UnknownTopicColumn,
)

logger = logging.getLogger(__name__)

TOPIC_COUNT = 10

FORMATS = ("csv", "jsonl")


class _Missing:
    """Singleton marker for an explicitly missing categorical value."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MISSING"


MISSING = _Missing()


@dataclass(frozen=True)
class Topic:
    index: int
    name: str
    definition: str


@lru_cache(maxsize=1)
def _load_topics() -> tuple[Topic, ...]:
    raw = json.loads(resources.files("pxtopics.data").joinpath("topics.json").read_text("utf-8"))
    topics = tuple(Topic(index=r["index"], name=r["name"], definition=r["definition"]) for r in raw)
    if len(topics) != TOPIC_COUNT:
        raise RuntimeError(f"bundled topic list has {len(topics)} entries, expected {TOPIC_COUNT}")
    names = [t.name for t in topics]
    if len(set(names)) != TOPIC_COUNT or any(not t.definition for t in topics):
        raise RuntimeError("bundled topic list violates uniqueness/non-empty invariants")
    if [t.index for t in topics] != list(range(TOPIC_COUNT)):
        raise RuntimeError("bundled topic list is not in index order")
    return topics


def canonical_topics() -> list[Topic]:
    """Return the fixed ten-topic list, in canonical order."""
    return list(_load_topics())


def topic_names() -> list[str]:
    return [t.name for t in _load_topics()]


@dataclass(frozen=True, order=True)
class LabelVector:
    """Ordered 10-bit topic assignment; position i corresponds to topic index i."""

    bits: tuple[bool, ...]

    def __post_init__(self):
        if len(self.bits) != TOPIC_COUNT:
            raise ValueError(f"label vector must have {TOPIC_COUNT} bits, got {len(self.bits)}")
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))

    @classmethod
    def zeros(cls) -> "LabelVector":
        return cls(bits=(False,) * TOPIC_COUNT)

    @classmethod
    def from_indices(cls, indices: Iterable[int]) -> "LabelVector":
        wanted = set(indices)
        bad = [i for i in wanted if not 0 <= i < TOPIC_COUNT]
        if bad:
            raise ValueError(f"topic indices out of range: {sorted(bad)}")
        return cls(bits=tuple(i in wanted for i in range(TOPIC_COUNT)))

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "LabelVector":
        lookup = {t.name: t.index for t in _load_topics()}
        indices = []
        for name in names:
            if name not in lookup:
                raise ValueError(f"unknown topic name: {name!r}")
            indices.append(lookup[name])
        return cls.from_indices(indices)

    def to_names(self) -> list[str]:
        names = topic_names()
        return [names[i] for i in range(TOPIC_COUNT) if self.bits[i]]

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(TOPIC_COUNT) if self.bits[i])

    def as_ints(self) -> tuple[int, ...]:
        return tuple(int(b) for b in self.bits)

    def __iter__(self) -> Iterator[bool]:
        return iter(self.bits)

    def __getitem__(self, i: int) -> bool:
        return self.bits[i]

    def __len__(self) -> int:
        return TOPIC_COUNT


@dataclass(frozen=True)
class Comment:
    id: str
    text: str


@dataclass(frozen=True)
class SurveyRecord:
    comment_id: str
    demographics: Mapping[str, object] = field(default_factory=dict)
    ratings: Mapping[str, object] = field(default_factory=dict)
    mc_answers: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class AnnotationSet:
    comment_id: str
    annotator_id: str
    labels: LabelVector


@dataclass(frozen=True)
class SurveySchema:
    """Column-to-variable mapping for survey files.

    ``ratings`` maps a rating name to its inclusive (lo, hi) integer range;
    the HCAHPS overall rating defaults to 0-10 when configured without one.
    """

    id_column: str = "comment_id"
    demographics: tuple[str, ...] = ()
    ratings: Mapping[str, tuple[int, int]] = field(default_factory=dict)
    mc_answers: tuple[str, ...] = ()

    def variable_columns(self) -> list[str]:
        return list(self.demographics) + list(self.ratings) + list(self.mc_answers)


def _iter_rows(path: str | Path, fmt: str) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record_dict) pairs for either supported format."""
    if fmt not in FORMATS:
        raise ValueError(f"unsupported format {fmt!r}, expected one of {FORMATS}")
    path = Path(path)
    if fmt == "csv":
        with path.open("r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                return
            for lineno, row in enumerate(reader, start=2):
                if None in row:
                    raise MalformedRecord("row has more cells than the header", line=lineno)
                yield lineno, {k.strip(): v for k, v in row.items()}
    else:
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedRecord(f"invalid JSON: {exc.msg}", line=lineno) from exc
                if not isinstance(obj, dict):
                    raise MalformedRecord("JSONL record is not an object", line=lineno)
                yield lineno, obj


def load_comments(path: str | Path, fmt: str = "csv") -> list[Comment]:
    """Load comments in file order. Duplicate ids are rejected."""
    comments: list[Comment] = []
    seen: set[str] = set()
    for lineno, row in _iter_rows(path, fmt):
        if "id" not in row or row["id"] in (None, ""):
            raise MalformedRecord("missing 'id'", line=lineno)
        cid = str(row["id"])
        if cid in seen:
            raise DuplicateId(f"duplicate comment id {cid!r}")
        seen.add(cid)
        text = row.get("text")
        if text is None:
            text = ""
        text = str(text)
        if not text.strip():
            logger.warning("comment %s has empty text", cid)
        comments.append(Comment(id=cid, text=text))
    return comments


def _parse_category(value) -> object:
    if value is None:
        return MISSING
    value = str(value)
    return MISSING if value.strip() == "" else value


def _parse_rating(name: str, value, lo: int, hi: int, lineno: int) -> object:
    cell = _parse_category(value)
    if cell is MISSING:
        return MISSING
    try:
        rating = int(str(cell).strip())
    except ValueError:
        raise MalformedRecord(f"rating {name!r} is not an integer: {cell!r}", line=lineno) from None
    if not lo <= rating <= hi:
        raise MalformedRecord(
            f"rating {name!r} value {rating} outside declared range {lo}-{hi}", line=lineno
        )
    return rating


def load_survey_records(
    path: str | Path, fmt: str = "csv", schema: SurveySchema | None = None
) -> list[SurveyRecord]:
    """Load survey records per ``schema``; blank cells become MISSING markers."""
    schema = schema or SurveySchema()
    records: list[SurveyRecord] = []
    header_checked = False
    for lineno, row in _iter_rows(path, fmt):
        if fmt == "csv" and not header_checked:
            absent = [c for c in [schema.id_column, *schema.variable_columns()] if c not in row]
            if absent:
                raise UnknownColumn(f"configured columns not in file header: {absent}")
            header_checked = True
        cid = row.get(schema.id_column)
        if cid in (None, ""):
            raise MalformedRecord(f"missing {schema.id_column!r}", line=lineno)
        demographics = {name: _parse_category(row.get(name)) for name in schema.demographics}
        mc_answers = {name: _parse_category(row.get(name)) for name in schema.mc_answers}
        ratings = {
            name: _parse_rating(name, row.get(name), lo, hi, lineno)
            for name, (lo, hi) in schema.ratings.items()
        }
        records.append(
            SurveyRecord(
                comment_id=str(cid),
                demographics=demographics,
                ratings=ratings,
                mc_answers=mc_answers,
            )
        )
    return records


_ID_COLUMNS = ("comment_id", "annotator_id")


def _labels_from_cells(cells: Mapping[str, object], lineno: int) -> LabelVector:
    names = topic_names()
    missing = [n for n in names if n not in cells]
    if missing:
        raise UnknownTopicColumn(f"label columns missing for topics: {missing}")
    unknown = [n for n in cells if n not in names]
    if unknown:
        raise UnknownTopicColumn(f"columns match no canonical topic: {unknown}")
    bits = []
    for name in names:
        raw = str(cells[name]).strip()
        if raw not in ("0", "1"):
            raise NonBinaryLabel(f"label cell for {name!r} must be 0/1, got {raw!r} (line {lineno})")
        bits.append(raw == "1")
    return LabelVector(bits=tuple(bits))


def load_annotations(path: str | Path, fmt: str = "csv") -> list[AnnotationSet]:
    """Load annotation sets; at most one per (comment_id, annotator_id) pair."""
    annotations: list[AnnotationSet] = []
    seen: set[tuple[str, str]] = set()
    for lineno, row in _iter_rows(path, fmt):
        cid = row.get("comment_id")
        aid = row.get("annotator_id")
        if cid in (None, "") or aid in (None, ""):
            raise MalformedRecord("missing comment_id or annotator_id", line=lineno)
        cid, aid = str(cid), str(aid)
        if (cid, aid) in seen:
            raise DuplicateId(f"duplicate annotation for ({cid!r}, {aid!r})")
        seen.add((cid, aid))
        if fmt == "jsonl":
            cells = row.get("labels")
            if not isinstance(cells, dict):
                raise MalformedRecord("missing 'labels' object", line=lineno)
        else:
            cells = {
                k.strip(): v for k, v in row.items() if k.strip() not in _ID_COLUMNS
            }
        annotations.append(
            AnnotationSet(comment_id=cid, annotator_id=aid, labels=_labels_from_cells(cells, lineno))
        )
    return annotations


def gold_labels(annotations: Iterable[AnnotationSet]) -> dict[str, LabelVector]:
    """Collapse an adjudicated annotation file (one row per comment) to a gold map."""
    gold: dict[str, LabelVector] = {}
    for ann in annotations:
        if ann.comment_id in gold:
            raise DuplicateId(
                f"comment {ann.comment_id!r} has multiple annotations; "
                "an adjudicated file must hold exactly one per comment"
            )
        gold[ann.comment_id] = ann.labels
    return gold


# --- serialization (mirrors the loaders; round-trips structurally) ---

def dump_comments(comments: Iterable[Comment], path: str | Path, fmt: str = "csv") -> None:
    path = Path(path)
    if fmt == "csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "text"])
            for c in comments:
                writer.writerow([c.id, c.text])
    elif fmt == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for c in comments:
                fh.write(json.dumps({"id": c.id, "text": c.text}, ensure_ascii=False) + "\n")
    else:
        raise ValueError(f"unsupported format {fmt!r}")


def _category_cell(value) -> str:
    return "" if value is MISSING else str(value)


def dump_survey_records(
    records: Iterable[SurveyRecord], path: str | Path, schema: SurveySchema, fmt: str = "csv"
) -> None:
    path = Path(path)
    columns = [schema.id_column, *schema.variable_columns()]
    rows = []
    for r in records:
        merged: dict[str, object] = {schema.id_column: r.comment_id}
        merged.update(r.demographics)
        merged.update(r.ratings)
        merged.update(r.mc_answers)
        rows.append(merged)
    if fmt == "csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for merged in rows:
                writer.writerow([_category_cell(merged.get(c, MISSING)) for c in columns])
    elif fmt == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for merged in rows:
                obj = {
                    c: (None if merged.get(c, MISSING) is MISSING else merged[c]) for c in columns
                }
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
    else:
        raise ValueError(f"unsupported format {fmt!r}")


def dump_annotations(annotations: Iterable[AnnotationSet], path: str | Path, fmt: str = "csv") -> None:
    path = Path(path)
    names = topic_names()
    if fmt == "csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["comment_id", "annotator_id", *names])
            for ann in annotations:
                writer.writerow([ann.comment_id, ann.annotator_id, *ann.labels.as_ints()])
    elif fmt == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for ann in annotations:
                obj = {
                    "comment_id": ann.comment_id,
                    "annotator_id": ann.annotator_id,
                    "labels": dict(zip(names, ann.labels.as_ints())),
                }
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
    else:
        raise ValueError(f"unsupported format {fmt!r}")
