"""Agreement statistics, relabeling diffs, difficulty ranking, revision patches.

Kappa and agreement values are computed in exact rational arithmetic and
returned as floats, so they match an independent evaluation of the same
formulas to well below 1e-12.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from crowdlabel.data import Dataset, Instance, relabel_instance
from crowdlabel.taxonomy import NO_RELATION

REMOVE = "remove"
RELABEL = "relabel"


class AnalyticsError(ValueError):
    pass


class UndefinedKappaError(AnalyticsError):
    """All rating mass sits in one category, so chance agreement is 1."""


@dataclass(frozen=True)
class RatingMatrix:
    """Per-item category counts with a constant rater count per item."""

    categories: tuple[str, ...]
    items: tuple[tuple[str, Mapping[str, int]], ...]
    raters_per_item: int

    def __post_init__(self) -> None:
        if self.raters_per_item < 2:
            raise AnalyticsError("raters_per_item must be at least 2")
        if not self.items:
            raise AnalyticsError("rating matrix has no items")
        known = set(self.categories)
        for item_id, counts in self.items:
            if set(counts) - known:
                raise AnalyticsError(f"item {item_id!r} rates unknown categories")
            if sum(counts.values()) != self.raters_per_item:
                raise AnalyticsError(
                    f"item {item_id!r} counts sum to {sum(counts.values())}, "
                    f"expected {self.raters_per_item}"
                )
            if any(c < 0 for c in counts.values()):
                raise AnalyticsError(f"item {item_id!r} has negative counts")


def _per_item_agreement(counts: Mapping[str, int], n: int) -> Fraction:
    # P_i = (sum_j n_ij^2 - n) / (n (n - 1))
    return Fraction(sum(c * c for c in counts.values()) - n, n * (n - 1))


def _kappa_from_items(
    item_counts: Sequence[Mapping[str, int]], totals: Sequence[int]
) -> Fraction:
    observed = Fraction(0)
    category_mass: Counter[str] = Counter()
    all_ratings = 0
    for counts, n in zip(item_counts, totals):
        observed += _per_item_agreement(counts, n)
        for category, count in counts.items():
            category_mass[category] += count
        all_ratings += n
    p_bar_o = observed / len(item_counts)
    p_bar_e = sum(
        Fraction(mass, all_ratings) ** 2 for mass in category_mass.values()
    )
    if p_bar_e == 1:
        raise UndefinedKappaError(
            "every rating falls in a single category; kappa is undefined"
        )
    return (p_bar_o - p_bar_e) / (1 - p_bar_e)


def fleiss_kappa_exact(matrix: RatingMatrix) -> Fraction:
    n = matrix.raters_per_item
    return _kappa_from_items(
        [counts for _, counts in matrix.items], [n] * len(matrix.items)
    )


def fleiss_kappa(matrix: RatingMatrix) -> float:
    """Chance-corrected multi-rater agreement for a constant rater count."""
    return float(fleiss_kappa_exact(matrix))


def fleiss_kappa_generalized(
    item_counts: Sequence[Mapping[str, int]],
) -> float:
    """Kappa over items with varying rater counts (each item needs >= 2)."""
    if not item_counts:
        raise AnalyticsError("no items")
    totals = [sum(c.values()) for c in item_counts]
    if any(n < 2 for n in totals):
        raise AnalyticsError("every item needs at least 2 ratings")
    return float(_kappa_from_items(item_counts, totals))


def agreement_rate_exact(matrix: RatingMatrix) -> Fraction:
    n = matrix.raters_per_item
    total = sum(_per_item_agreement(counts, n) for _, counts in matrix.items)
    return total / len(matrix.items)


def agreement_rate(matrix: RatingMatrix) -> float:
    """Mean per-item pairwise agreement (the observed-agreement term of kappa)."""
    return float(agreement_rate_exact(matrix))


def rating_items_from_states(
    states: Iterable, mode: str = "first2"
) -> list[tuple[str, dict[str, int]]]:
    """Rating rows from sentence states' accepted responses.

    ``first2`` keeps each sentence's first two responses (constant 2 raters,
    the round-1 pair); ``all`` keeps every accepted response for the
    generalized formula. Sentences with fewer than 2 responses are skipped.
    """
    if mode not in ("first2", "all"):
        raise AnalyticsError(f"unknown rating mode {mode!r}")
    rows = []
    for state in states:
        labels = state.labels()
        if len(labels) < 2:
            continue
        if mode == "first2":
            labels = labels[:2]
        rows.append((state.instance.id, dict(Counter(labels))))
    return rows


def rating_matrix_from_states(states: Iterable) -> RatingMatrix:
    """First-2-responses matrix over every sentence with at least 2 responses."""
    rows = rating_items_from_states(states, mode="first2")
    if not rows:
        raise AnalyticsError("no sentence has 2 accepted responses yet")
    categories = sorted({c for _, counts in rows for c in counts})
    return RatingMatrix(
        categories=tuple(categories), items=tuple(rows), raters_per_item=2
    )


# ----------------------------------------------------------------------
# Relabeling diff

NEG_TO_POS = "neg_to_pos"
POS_TO_NEG = "pos_to_neg"
POS_TO_POS = "pos_to_pos"


def transition_class(before: str, after: str) -> str:
    """Polarity transition of one changed label; before != after required."""
    if before == after:
        raise AnalyticsError("transition_class needs a changed pair")
    if before == NO_RELATION:
        return NEG_TO_POS
    if after == NO_RELATION:
        return POS_TO_NEG
    return POS_TO_POS


@dataclass(frozen=True)
class DiffReport:
    total: int
    changed: int
    counts: Mapping[str, int]
    fractions: Mapping[str, float]
    per_label_deltas: Mapping[str, dict]
    only_before: tuple[str, ...]
    only_after: tuple[str, ...]

    @property
    def changed_fraction(self) -> float:
        return self.changed / self.total if self.total else 0.0

    def to_record(self) -> dict:
        return {
            "total": self.total,
            "changed": self.changed,
            "changed_fraction": self.changed_fraction,
            "counts": dict(self.counts),
            "fractions": dict(self.fractions),
            "per_label_deltas": {k: dict(v) for k, v in self.per_label_deltas.items()},
            "only_before": list(self.only_before),
            "only_after": list(self.only_after),
        }


def diff(
    before: Mapping[str, str],
    after: Mapping[str, str],
    labels: Iterable[str] | None = None,
) -> DiffReport:
    """Classify every relabeled id by polarity transition.

    ``labels``, when given, is the allowed label universe; anything outside
    it is an error. Ids present on only one side are listed separately and
    not counted as changed.
    """
    if labels is not None:
        universe = set(labels) | {NO_RELATION}
        for side, assignment in (("before", before), ("after", after)):
            unknown = sorted(set(assignment.values()) - universe)
            if unknown:
                raise AnalyticsError(f"unknown labels in {side}: {unknown}")
    shared = [i for i in before if i in after]
    only_before = tuple(sorted(i for i in before if i not in after))
    only_after = tuple(sorted(i for i in after if i not in before))
    counts = {NEG_TO_POS: 0, POS_TO_NEG: 0, POS_TO_POS: 0}
    deltas: dict[str, dict] = {}

    def bucket(label: str) -> dict:
        return deltas.setdefault(label, {"before": 0, "after": 0, "inflows": {}})

    changed = 0
    for item_id in shared:
        b, a = before[item_id], after[item_id]
        bucket(b)["before"] += 1
        bucket(a)["after"] += 1
        if b != a:
            changed += 1
            counts[transition_class(b, a)] += 1
            inflows = bucket(a)["inflows"]
            inflows[b] = inflows.get(b, 0) + 1
    fractions = {
        key: (value / changed if changed else 0.0) for key, value in counts.items()
    }
    return DiffReport(
        total=len(shared),
        changed=changed,
        counts=counts,
        fractions=fractions,
        per_label_deltas={k: deltas[k] for k in sorted(deltas)},
        only_before=only_before,
        only_after=only_after,
    )


# ----------------------------------------------------------------------
# Difficulty ranking


def disagreement_proportion(labels: Sequence[str]) -> Fraction:
    """1 - plurality share; 0 for unanimity, rising with label spread."""
    if len(labels) < 2:
        raise AnalyticsError("disagreement needs at least 2 responses")
    top = max(Counter(labels).values())
    return 1 - Fraction(top, len(labels))


def difficulty_report(states: Iterable) -> list[tuple[str, float]]:
    """Sentences ranked by worker disagreement, hardest first, ties by id."""
    rows = []
    for state in states:
        labels = state.labels()
        if len(labels) < 2:
            continue
        rows.append((state.instance.id, disagreement_proportion(labels)))
    rows.sort(key=lambda row: (-row[1], row[0]))
    return [(item_id, float(value)) for item_id, value in rows]


# ----------------------------------------------------------------------
# Revision patch


@dataclass(frozen=True)
class PatchEntry:
    id: str
    action: str
    new_label: str | None = None
    reason: str | None = None

    def __post_init__(self) -> None:
        if self.action == RELABEL:
            if not self.new_label:
                raise AnalyticsError(f"relabel entry {self.id!r} needs new_label")
        elif self.action == REMOVE:
            if not self.reason:
                raise AnalyticsError(f"remove entry {self.id!r} needs reason")
        else:
            raise AnalyticsError(f"unknown patch action {self.action!r}")

    def to_record(self) -> dict:
        record: dict = {"id": self.id, "action": self.action}
        if self.action == RELABEL:
            record["new_label"] = self.new_label
        else:
            record["reason"] = self.reason
        return record

    @classmethod
    def from_record(cls, record: Mapping) -> "PatchEntry":
        return cls(
            id=str(record["id"]),
            action=record["action"],
            new_label=record.get("new_label"),
            reason=record.get("reason"),
        )


@dataclass(frozen=True)
class RevisionPatch:
    entries: tuple[PatchEntry, ...]

    def __post_init__(self) -> None:
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise AnalyticsError("duplicate ids in patch")

    def __len__(self) -> int:
        return len(self.entries)


def emit_patch(
    assignments: Mapping[str, str],
    exclusions: Iterable[Mapping[str, str]],
    base: Dataset,
    valid_labels: Iterable[str] | None = None,
) -> RevisionPatch:
    """Express a revision against its base dataset as relabels and removals.

    Ids already carrying their new label produce no entry, so an unchanged
    dataset yields an empty patch.
    """
    by_id = base.by_id()
    dangling = sorted(set(assignments) - set(by_id))
    if dangling:
        raise AnalyticsError(f"assignment ids not in base dataset: {dangling}")
    if valid_labels is not None:
        allowed = set(valid_labels) | {NO_RELATION}
        bad = sorted({v for v in assignments.values() if v not in allowed})
        if bad:
            raise AnalyticsError(f"labels outside the refined taxonomy: {bad}")
    entries: list[PatchEntry] = []
    removed: set[str] = set()
    for row in exclusions:
        if row["id"] not in by_id:
            raise AnalyticsError(f"exclusion id not in base dataset: {row['id']!r}")
        entries.append(PatchEntry(row["id"], REMOVE, reason=row["reason"]))
        removed.add(row["id"])
    for inst in base.instances:
        if inst.id in removed or inst.id not in assignments:
            continue
        new_label = assignments[inst.id]
        if new_label != inst.original_label:
            entries.append(PatchEntry(inst.id, RELABEL, new_label=new_label))
    return RevisionPatch(tuple(entries))


def apply_patch(patch: RevisionPatch, base: Dataset) -> Dataset:
    """Relabel and remove per the patch; entries must reference base ids."""
    by_id = base.by_id()
    dangling = sorted({e.id for e in patch.entries} - set(by_id))
    if dangling:
        raise AnalyticsError(f"patch ids not in base dataset: {dangling}")
    actions = {e.id: e for e in patch.entries}
    instances: list[Instance] = []
    exclusions: list[tuple[str, str]] = []
    for inst in base.instances:
        entry = actions.get(inst.id)
        if entry is None:
            instances.append(inst)
        elif entry.action == RELABEL:
            instances.append(relabel_instance(inst, entry.new_label))
        else:
            exclusions.append((inst.id, entry.reason))
    return Dataset(
        instances=tuple(instances), exclusions=base.exclusions + tuple(exclusions)
    )


def save_patch(patch: RevisionPatch, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for entry in patch.entries:
            fh.write(json.dumps(entry.to_record(), ensure_ascii=False) + "\n")


def load_patch(path: str | Path) -> RevisionPatch:
    entries = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entries.append(PatchEntry.from_record(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise AnalyticsError(f"{path}:{line_number}: bad patch entry: {exc}") from exc
    return RevisionPatch(tuple(entries))
