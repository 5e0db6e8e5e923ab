"""Dataset records, validation, and filtering for typed sentence-level relation data.

Records live in JSONL files with the field vocabulary of the public TACRED
release (id, token, subj_start, subj_end, obj_start, obj_end, subj_type,
obj_type, relation, split). Spans are 0-based and half-open.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

SUBJECT_TYPES = frozenset({"PERSON", "ORGANIZATION"})

OBJECT_TYPES = frozenset({
    "PERSON", "ORGANIZATION", "CITY", "COUNTRY", "STATE_OR_PROVINCE",
    "LOCATION", "NATIONALITY", "TITLE", "DATE", "NUMBER", "DURATION",
    "URL", "RELIGION", "IDEOLOGY", "CRIMINAL_CHARGE", "CAUSE_OF_DEATH",
    "MISC",
})

ENTITY_TYPES = OBJECT_TYPES

SPLITS = ("train", "dev", "test")

# Small built-in stopword list; enough to separate English prose from
# non-English or non-linguistic token streams at the 1-per-10 rate.
ENGLISH_STOPWORDS = frozenset({
    "the", "a", "an", "of", "in", "on", "at", "to", "and", "or", "is",
    "are", "was", "were", "be", "been", "by", "for", "with", "as", "that",
    "this", "it", "he", "she", "his", "her", "they", "their", "from",
    "has", "have", "had", "not", "but", "who", "which", "its", "we",
    "you", "i", "will", "would", "can", "said", "than", "after", "before",
})


class DatasetError(Exception):
    """Base error for dataset loading and validation."""


class DatasetParseError(DatasetError):
    def __init__(self, path: str, line_number: int, detail: str):
        self.path = path
        self.line_number = line_number
        self.detail = detail
        super().__init__(f"{path}:{line_number}: {detail}")


class DatasetValidationError(DatasetError):
    def __init__(self, instance_id: str, invariant: str, detail: str = ""):
        self.instance_id = instance_id
        self.invariant = invariant
        msg = f"instance {instance_id!r} violates {invariant}"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


@dataclass(frozen=True)
class Instance:
    """One sentence with subject/object spans, entity types, and an optional label."""

    id: str
    tokens: tuple[str, ...]
    subj_span: tuple[int, int]
    obj_span: tuple[int, int]
    subj_type: str
    obj_type: str
    original_label: str | None = None
    split: str = "train"

    @property
    def type_pair(self) -> tuple[str, str]:
        return (self.subj_type, self.obj_type)

    def text(self) -> str:
        return " ".join(self.tokens)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "token": list(self.tokens),
            "subj_start": self.subj_span[0],
            "subj_end": self.subj_span[1],
            "obj_start": self.obj_span[0],
            "obj_end": self.obj_span[1],
            "subj_type": self.subj_type,
            "obj_type": self.obj_type,
            "relation": self.original_label,
            "split": self.split,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Instance":
        return cls(
            id=str(record["id"]),
            tokens=tuple(record["token"]),
            subj_span=(int(record["subj_start"]), int(record["subj_end"])),
            obj_span=(int(record["obj_start"]), int(record["obj_end"])),
            subj_type=record["subj_type"],
            obj_type=record["obj_type"],
            original_label=record.get("relation"),
            split=record.get("split", "train"),
        )


def validate_instance(inst: Instance) -> None:
    """Raise DatasetValidationError naming the first violated invariant."""
    for name, (lo, hi) in (("subj_span", inst.subj_span), ("obj_span", inst.obj_span)):
        if not (0 <= lo < hi <= len(inst.tokens)):
            raise DatasetValidationError(
                inst.id, f"{name}_bounds",
                f"span [{lo}, {hi}) must be non-empty and inside {len(inst.tokens)} tokens",
            )
    s_lo, s_hi = inst.subj_span
    o_lo, o_hi = inst.obj_span
    if not (s_hi <= o_lo or o_hi <= s_lo):
        raise DatasetValidationError(
            inst.id, "span_overlap",
            f"subj [{s_lo}, {s_hi}) intersects obj [{o_lo}, {o_hi})",
        )
    if inst.subj_type not in SUBJECT_TYPES:
        raise DatasetValidationError(
            inst.id, "subj_type", f"{inst.subj_type!r} is not PERSON or ORGANIZATION"
        )
    if inst.obj_type not in OBJECT_TYPES:
        raise DatasetValidationError(
            inst.id, "obj_type", f"{inst.obj_type!r} is not one of the 17 object types"
        )
    if inst.split not in SPLITS:
        raise DatasetValidationError(
            inst.id, "split", f"{inst.split!r} is not one of {SPLITS}"
        )


@dataclass(frozen=True)
class Dataset:
    """Validated instances plus the ids filtered out of them, with reasons."""

    instances: tuple[Instance, ...]
    exclusions: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        seen: set[str] = set()
        for inst in self.instances:
            if inst.id in seen:
                raise DatasetValidationError(inst.id, "unique_id", "duplicate id")
            seen.add(inst.id)

    def __len__(self) -> int:
        return len(self.instances)

    def by_id(self) -> dict[str, Instance]:
        return {inst.id: inst for inst in self.instances}

    def labels(self) -> dict[str, str | None]:
        return {inst.id: inst.original_label for inst in self.instances}


@dataclass(frozen=True)
class ExclusionReport:
    kept: int
    excluded: tuple[tuple[str, str], ...]
    unknown_ids: tuple[str, ...] = ()

    @property
    def removed(self) -> int:
        return len(self.excluded)


def load_dataset(path: str | Path) -> Dataset:
    """Load and validate a JSONL dataset file.

    Raises DatasetParseError with the offending line number, or
    DatasetValidationError naming the invariant and instance id.
    """
    path = Path(path)
    instances: list[Instance] = []
    with path.open(encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(str(path), line_number, f"bad JSON: {exc.msg}") from exc
            try:
                inst = Instance.from_record(record)
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetParseError(
                    str(path), line_number, f"missing or malformed field: {exc}"
                ) from exc
            validate_instance(inst)
            instances.append(inst)
    return Dataset(instances=tuple(instances))


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write instances as JSONL; exclusions go to `<path>.exclusions` if present."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for inst in dataset.instances:
            fh.write(json.dumps(inst.to_record(), ensure_ascii=False) + "\n")
    if dataset.exclusions:
        write_exclusion_report(dataset.exclusions, path.with_suffix(path.suffix + ".exclusions"))


def write_exclusion_report(exclusions: Iterable[tuple[str, str]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for inst_id, reason in exclusions:
            fh.write(json.dumps({"id": inst_id, "reason": reason}) + "\n")


def read_exclusion_report(path: str | Path) -> list[tuple[str, str]]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                record = json.loads(line)
                out.append((str(record["id"]), record["reason"]))
    return out


LanguageDetector = Callable[[Sequence[str]], "str | None"]


def heuristic_english_detector(tokens: Sequence[str]) -> str:
    """Default detector: ASCII-letter token ratio plus an English stopword rate.

    A sentence passes as English when at least 80% of its tokens are pure
    ASCII-letter strings and it contains at least one stopword per 10 tokens.
    """
    if not tokens:
        return "und"
    ascii_letter = sum(
        1 for t in tokens if t and all("a" <= c <= "z" or "A" <= c <= "Z" for c in t)
    )
    if ascii_letter * 5 < len(tokens) * 4:  # ratio < 0.8
        return "und"
    stopwords = sum(1 for t in tokens if t.lower() in ENGLISH_STOPWORDS)
    if stopwords * 10 < len(tokens):  # fewer than 1 per 10 tokens
        return "und"
    return "en"


def language_filter(
    dataset: Dataset, detector: LanguageDetector = heuristic_english_detector
) -> tuple[Dataset, ExclusionReport]:
    """Move non-English instances to exclusions with reason ``non_english``.

    Detector failures (exceptions or None) default to keeping the instance.
    """
    kept: list[Instance] = []
    excluded: list[tuple[str, str]] = []
    for inst in dataset.instances:
        try:
            tag = detector(inst.tokens)
        except Exception:
            tag = None
        if tag is not None and tag != "en":
            excluded.append((inst.id, "non_english"))
        else:
            kept.append(inst)
    report = ExclusionReport(kept=len(kept), excluded=tuple(excluded))
    filtered = Dataset(
        instances=tuple(kept), exclusions=dataset.exclusions + tuple(excluded)
    )
    return filtered, report


def apply_exclusion_list(
    dataset: Dataset, ids: Iterable[str], reason: str
) -> tuple[Dataset, ExclusionReport]:
    """Move the listed ids to exclusions. Unknown ids are reported, not fatal."""
    wanted = list(dict.fromkeys(ids))
    known = {inst.id for inst in dataset.instances}
    unknown = tuple(i for i in wanted if i not in known)
    target = set(wanted) & known
    kept = tuple(inst for inst in dataset.instances if inst.id not in target)
    excluded = tuple((inst.id, reason) for inst in dataset.instances if inst.id in target)
    report = ExclusionReport(kept=len(kept), excluded=excluded, unknown_ids=unknown)
    filtered = Dataset(instances=kept, exclusions=dataset.exclusions + excluded)
    return filtered, report


def relabel_instance(inst: Instance, new_label: str | None) -> Instance:
    return replace(inst, original_label=new_label)
