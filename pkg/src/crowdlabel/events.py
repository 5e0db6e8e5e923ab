"""Append-only event log: canonical encoding, file persistence, replay reading.

Every state change in a campaign is an event with a strictly increasing
sequence number. The log is the source of truth; reconstruction happens by
re-applying events in order, so encoding must be canonical (sorted keys,
fixed separators) for byte-stable snapshots and logs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator


class LogCorruptionError(ValueError):
    """Raised when an event log has gaps, duplicates, or unparseable lines."""


@dataclass(frozen=True)
class Event:
    seq: int
    ts: int
    kind: str
    payload: dict

    def encode(self) -> str:
        return json.dumps(
            {"seq": self.seq, "ts": self.ts, "kind": self.kind, "payload": self.payload},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def decode(cls, line: str) -> "Event":
        try:
            record = json.loads(line)
            return cls(
                seq=record["seq"],
                ts=record["ts"],
                kind=record["kind"],
                payload=record["payload"],
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise LogCorruptionError(f"unparseable event line: {exc}") from exc


class LogicalClock:
    """Deterministic timestamp source: 0, 1, 2, ... per call."""

    def __init__(self, start: int = 0) -> None:
        self._next = start

    def __call__(self) -> int:
        value = self._next
        self._next += 1
        return value


class EventWriter:
    """Durable line-per-event sink; flushes each append to survive crashes."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._fh = open(self.path, "a", encoding="utf-8")

    def __call__(self, event: Event) -> None:
        self._fh.write(event.encode() + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "EventWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def check_contiguity(events: Iterable[Event], start: int = 1) -> list[Event]:
    """Validate strictly increasing, gap-free sequence numbers."""
    out = []
    expected = start
    for event in events:
        if event.seq != expected:
            raise LogCorruptionError(
                f"expected sequence {expected}, found {event.seq}"
            )
        out.append(event)
        expected += 1
    return out


def read_log(path: str | Path) -> list[Event]:
    """Read and validate a full event log file."""
    events = []
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(Event.decode(line))
            except LogCorruptionError as exc:
                raise LogCorruptionError(f"{path}:{line_number}: {exc}") from exc
    return check_contiguity(events)


def iter_log(path: str | Path) -> Iterator[Event]:
    for event in read_log(path):
        yield event


class Tee:
    """Fan an event out to several sinks."""

    def __init__(self, *sinks: Callable[[Event], None]) -> None:
        self.sinks = [s for s in sinks if s is not None]

    def __call__(self, event: Event) -> None:
        for sink in self.sinks:
            sink(event)
