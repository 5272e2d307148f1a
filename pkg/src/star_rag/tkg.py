"""Temporal knowledge graph corpus: quadruple files, interned ids, day-index timestamps."""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterator

_YEAR_ONLY = re.compile(r"^\d{4}$")


class ParseError(ValueError):
    """Malformed corpus input. ``line`` is the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class FieldCountError(ParseError):
    pass


class EmptyFieldError(ParseError):
    pass


def parse_timestamp(text: str) -> int:
    """Parse ``YYYY-MM-DD`` (or a bare year, mapped to Jan 1) into an integer day index."""
    text = text.strip()
    if _YEAR_ONLY.match(text):
        return date(int(text), 1, 1).toordinal()
    try:
        return date.fromisoformat(text).toordinal()
    except ValueError as exc:
        raise ParseError(f"invalid date {text!r}: expected YYYY-MM-DD or YYYY") from exc


def format_timestamp(day: int) -> str:
    return date.fromordinal(day).isoformat()


@dataclass(frozen=True, slots=True)
class Event:
    """One timestamped fact. Subject/relation/object are interned integer ids."""

    subject: int
    relation: int
    object: int
    time: int
    event_id: int


class StringTable:
    """Dense-id string interner with O(1) lookup in both directions."""

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._strings: list[str] = []

    def intern(self, value: str) -> int:
        idx = self._ids.get(value)
        if idx is None:
            idx = len(self._strings)
            self._ids[value] = idx
            self._strings.append(value)
        return idx

    def get(self, value: str) -> int | None:
        return self._ids.get(value)

    def __getitem__(self, idx: int) -> str:
        return self._strings[idx]

    def __len__(self) -> int:
        return len(self._strings)

    def __iter__(self) -> Iterator[str]:
        return iter(self._strings)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, StringTable) and self._strings == other._strings


class TemporalKG:
    """An immutable-after-load event corpus with entity/relation/time tables."""

    def __init__(self) -> None:
        self.events: list[Event] = []
        self.entities = StringTable()
        self.relations = StringTable()
        self.times: list[int] = []
        self._seen: set[tuple[int, int, int, int]] = set()

    def add(self, subject: str, relation: str, obj: str, day: int) -> bool:
        """Append one event; exact duplicate quadruples are kept once."""
        s = self.entities.intern(subject)
        r = self.relations.intern(relation)
        o = self.entities.intern(obj)
        quad = (s, r, o, day)
        if quad in self._seen:
            return False
        self._seen.add(quad)
        self.events.append(Event(s, r, o, day, len(self.events)))
        return True

    def finalize(self) -> "TemporalKG":
        self.times = sorted({ev.time for ev in self.events})
        return self

    @property
    def num_events(self) -> int:
        return len(self.events)

    def day_range(self) -> int:
        """Span in days between the earliest and latest timestamps (0 if fewer than 2)."""
        if len(self.times) < 2:
            return 0
        return self.times[-1] - self.times[0]

    def quad_strings(self, event: Event) -> tuple[str, str, str, str]:
        return (
            self.entities[event.subject],
            self.relations[event.relation],
            self.entities[event.object],
            format_timestamp(event.time),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TemporalKG):
            return NotImplemented
        return (
            self.events == other.events
            and self.entities == other.entities
            and self.relations == other.relations
            and self.times == other.times
        )


@dataclass(frozen=True, slots=True)
class DatasetStats:
    num_events: int
    num_entities: int
    num_relations: int
    num_timestamps: int


def parse_event_line(line: str) -> tuple[str, str, str, str]:
    """Split one corpus line into (subject, relation, object, date-text).

    Fields are tab-separated and trimmed; the date text is not validated here.
    """
    fields = line.rstrip("\n").split("\t")
    if len(fields) != 4:
        raise FieldCountError(f"expected 4 tab-separated fields, got {len(fields)}")
    trimmed = tuple(f.strip() for f in fields)
    if any(f == "" for f in trimmed):
        raise EmptyFieldError("empty field after trimming")
    return trimmed  # type: ignore[return-value]


def load_tkg(path: str | Path) -> TemporalKG:
    """Load a quadruple file. Fails fast on the first malformed line.

    Lines beginning with ``#`` and blank lines are skipped. Line order defines
    event_id order; exact duplicate quadruples are dropped.
    """
    kg = TemporalKG()
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                subject, relation, obj, date_text = parse_event_line(raw)
                day = parse_timestamp(date_text)
            except ParseError as exc:
                raise ParseError(f"line {lineno}: {exc}", line=lineno) from exc
            kg.add(subject, relation, obj, day)
    return kg.finalize()


def kg_stats(kg: TemporalKG) -> DatasetStats:
    return DatasetStats(
        num_events=len(kg.events),
        num_entities=len(kg.entities),
        num_relations=len(kg.relations),
        num_timestamps=len(kg.times),
    )


def event_lines(kg: TemporalKG) -> Iterator[str]:
    """Serialize events back to the tab-separated line format (round-trip safe)."""
    for event in kg.events:
        subject, relation, obj, day = kg.quad_strings(event)
        yield f"{subject}\t{relation}\t{obj}\t{day}"


def dump_tkg(kg: TemporalKG, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for line in event_lines(kg):
            handle.write(line + "\n")
