"""Model-evaluation analytics: micro P/R/F1, category breakdowns, error classes.

The negative class never counts as a positive prediction, per the usual
relation-extraction convention: precision pools over predicted positives,
recall over gold positives, and exact label match defines a true positive.
"""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from crowdlabel.analytics import transition_class, NEG_TO_POS, POS_TO_NEG, POS_TO_POS
from crowdlabel.taxonomy import NO_RELATION, Taxonomy


class ScoringError(ValueError):
    pass


class ScoreWarning(UserWarning):
    """Non-fatal degenerate cases: empty denominators, empty categories."""


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    true_positives: int = 0
    predicted_positives: int = 0
    gold_positives: int = 0

    def to_record(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "true_positives": self.true_positives,
            "predicted_positives": self.predicted_positives,
            "gold_positives": self.gold_positives,
        }


def _check_ids(gold: Mapping[str, str], pred: Mapping[str, str]) -> None:
    if set(gold) != set(pred):
        missing = sorted(set(gold) ^ set(pred))[:5]
        raise ScoringError(f"gold and predictions cover different ids, e.g. {missing}")


def _ratio(numerator: int, denominator: int, what: str) -> Fraction:
    if denominator == 0:
        warnings.warn(f"no {what}; reporting 0", ScoreWarning, stacklevel=3)
        return Fraction(0)
    return Fraction(numerator, denominator)


def micro_prf(
    gold: Mapping[str, str],
    pred: Mapping[str, str],
    negative_label: str = NO_RELATION,
) -> PRF:
    """Micro-averaged precision/recall/F1 with the negative class excluded."""
    _check_ids(gold, pred)
    tp = sum(
        1
        for i in gold
        if gold[i] == pred[i] and gold[i] != negative_label
    )
    predicted = sum(1 for i in pred if pred[i] != negative_label)
    golden = sum(1 for i in gold if gold[i] != negative_label)
    precision = _ratio(tp, predicted, "predicted positives")
    recall = _ratio(tp, golden, "gold positives")
    if precision + recall == 0:
        f1 = Fraction(0)
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return PRF(
        precision=float(precision),
        recall=float(recall),
        f1=float(f1),
        true_positives=tp,
        predicted_positives=predicted,
        gold_positives=golden,
    )


def category_scores(
    gold: Mapping[str, str],
    pred: Mapping[str, str],
    categories: Mapping[str, Iterable[str]],
    negative_label: str = NO_RELATION,
) -> dict[str, PRF]:
    """Micro scores restricted per category.

    An instance belongs to a category when its gold or its predicted label is
    in the category's relation set, so in-category false positives hurt that
    category's precision.
    """
    _check_ids(gold, pred)
    out = {}
    for name in categories:
        members = set(categories[name])
        ids = [i for i in gold if gold[i] in members or pred[i] in members]
        if not ids:
            warnings.warn(f"category {name!r} has no members", ScoreWarning, stacklevel=2)
            out[name] = PRF(0.0, 0.0, 0.0)
            continue
        out[name] = micro_prf(
            {i: gold[i] for i in ids},
            {i: pred[i] for i in ids},
            negative_label=negative_label,
        )
    return out


def _location_group(labels: Iterable[str], prefix: str, suffix: str) -> set[str]:
    kinds = (
        "CITY",
        "CITIES",
        "COUNTRY",
        "COUNTRIES",
        "STATE_OR_PROVINCE",
        "STATES_OR_PROVINCES",
    )
    wanted = {f"{prefix}:{kind}_OF_{suffix}" for kind in kinds}
    return {label for label in labels if label in wanted}


def default_categories(taxonomy: Taxonomy) -> dict[str, set[str]]:
    """The standard reporting categories over refined labels.

    Subject-side groups (PER:*, ORG:*), subject/object pair groups from the
    super-clusters, and the location aggregates (residence, birth, death,
    organization branches).
    """
    refined = set(taxonomy.refined_labels)
    by_cluster = {c.name: set(c.merged_relations) for c in taxonomy.clusters}
    categories: dict[str, set[str]] = {
        "PER:*": {l for l in refined if l.startswith("PERSON:")},
        "ORG:*": {l for l in refined if l.startswith("ORGANIZATION:")},
    }
    pair_groups = {
        "PER:ORG": "per2org",
        "ORG:PER": "org2per",
        "PER:PER": "per2per",
        "ORG:ORG": "org2org",
        "PER:LOCATION": "per2locmulti",
        "ORG:LOCATION": "org2locmulti",
    }
    for name, cluster in pair_groups.items():
        if cluster in by_cluster:
            categories[name] = by_cluster[cluster]
    categories["PER:RESIDENCE"] = _location_group(refined, "PERSON", "RESIDENCE")
    categories["PER:BIRTH"] = _location_group(refined, "PERSON", "BIRTH")
    categories["PER:DEATH"] = _location_group(refined, "PERSON", "DEATH")
    return {name: members for name, members in categories.items() if members}


def category_set(taxonomy: Taxonomy, name: str) -> set[str]:
    categories = default_categories(taxonomy)
    if name not in categories:
        raise ScoringError(
            f"unknown category {name!r}; known: {sorted(categories)}"
        )
    return categories[name]


def confusion(gold: Mapping[str, str], pred: Mapping[str, str]) -> dict[str, dict[str, int]]:
    _check_ids(gold, pred)
    table: dict[str, dict[str, int]] = {}
    for i in gold:
        row = table.setdefault(gold[i], {})
        row[pred[i]] = row.get(pred[i], 0) + 1
    return {g: dict(sorted(row.items())) for g, row in sorted(table.items())}


@dataclass(frozen=True)
class ScoreReport:
    model: str
    train_tag: str
    test_tag: str
    overall: PRF
    per_category: Mapping[str, PRF]
    confusion: Mapping[str, Mapping[str, int]]

    def to_record(self) -> dict:
        return {
            "model": self.model,
            "train_tag": self.train_tag,
            "test_tag": self.test_tag,
            "overall": self.overall.to_record(),
            "per_category": {k: v.to_record() for k, v in self.per_category.items()},
            "confusion": {g: dict(row) for g, row in self.confusion.items()},
            # Restriction semantics are a reporting choice; state it up front.
            "category_membership": "instance counts toward a category when its "
            "gold or predicted label is in the category set",
        }


def score_report(
    predictions: "PredictionFile",
    gold: Mapping[str, str],
    taxonomy: Taxonomy | None = None,
    negative_label: str = NO_RELATION,
) -> ScoreReport:
    pred = predictions.rows
    categories = default_categories(taxonomy) if taxonomy is not None else {}
    return ScoreReport(
        model=predictions.model,
        train_tag=predictions.train_tag,
        test_tag=predictions.test_tag,
        overall=micro_prf(gold, pred, negative_label=negative_label),
        per_category=category_scores(gold, pred, categories, negative_label=negative_label)
        if categories
        else {},
        confusion=confusion(gold, pred),
    )


# ----------------------------------------------------------------------
# Error-correction taxonomy


@dataclass(frozen=True)
class ErrorTaxonomyReport:
    corrected: tuple[str, ...]
    counts: Mapping[str, int]
    fractions: Mapping[str, float]
    by_class: Mapping[str, tuple[str, ...]]

    def to_record(self) -> dict:
        return {
            "corrected": list(self.corrected),
            "counts": dict(self.counts),
            "fractions": dict(self.fractions),
            "by_class": {k: list(v) for k, v in self.by_class.items()},
        }


def error_taxonomy(
    gold: Mapping[str, str],
    pred_a: Mapping[str, str],
    pred_b: Mapping[str, str],
    negative_label: str = NO_RELATION,
) -> ErrorTaxonomyReport:
    """Partition the ids model B fixes relative to model A.

    Corrected = A wrong, B right. Classes by A's error polarity against
    gold: negative-for-positive, positive-for-negative, or wrong positive.
    """
    _check_ids(gold, pred_a)
    _check_ids(gold, pred_b)
    corrected = sorted(i for i in gold if pred_a[i] != gold[i] and pred_b[i] == gold[i])
    by_class: dict[str, list[str]] = {NEG_TO_POS: [], POS_TO_NEG: [], POS_TO_POS: []}
    for i in corrected:
        a, g = pred_a[i], gold[i]
        if a == negative_label:
            key = NEG_TO_POS
        elif g == negative_label:
            key = POS_TO_NEG
        else:
            key = POS_TO_POS
        by_class[key].append(i)
    total = len(corrected)
    counts = {k: len(v) for k, v in by_class.items()}
    fractions = {k: (c / total if total else 0.0) for k, c in counts.items()}
    return ErrorTaxonomyReport(
        corrected=tuple(corrected),
        counts=counts,
        fractions=fractions,
        by_class={k: tuple(v) for k, v in by_class.items()},
    )


# ----------------------------------------------------------------------
# Cross-combination comparison


def cross_matrix(reports: Mapping[tuple[str, str], PRF]) -> str:
    """Render train/test score combinations with pairwise test-side deltas."""
    if not reports:
        raise ScoringError("no reports to compare")
    lines = []
    header = f"{'train':<12} {'test':<12} {'P':>8} {'R':>8} {'F1':>8}"
    lines.append(header)
    lines.append("-" * len(header))
    keys = sorted(reports)
    for train_tag, test_tag in keys:
        r = reports[(train_tag, test_tag)]
        lines.append(
            f"{train_tag:<12} {test_tag:<12} "
            f"{r.precision * 100:>8.1f} {r.recall * 100:>8.1f} {r.f1 * 100:>8.1f}"
        )
    by_train: dict[str, list[str]] = {}
    for train_tag, test_tag in keys:
        by_train.setdefault(train_tag, []).append(test_tag)
    for train_tag, test_tags in sorted(by_train.items()):
        for i in range(len(test_tags)):
            for j in range(i + 1, len(test_tags)):
                a = reports[(train_tag, test_tags[i])]
                b = reports[(train_tag, test_tags[j])]
                lines.append(
                    f"{train_tag:<12} {'Δ ' + test_tags[j] + '-' + test_tags[i]:<12} "
                    f"{(b.precision - a.precision) * 100:>8.1f} "
                    f"{(b.recall - a.recall) * 100:>8.1f} "
                    f"{(b.f1 - a.f1) * 100:>8.1f}"
                )
    return "\n".join(lines)


def select_median_f1(candidates: Sequence[tuple[str, PRF]]) -> str:
    """Name of the median-F1 candidate (lower middle for even counts)."""
    if not candidates:
        raise ScoringError("no candidates")
    ordered = sorted(candidates, key=lambda c: (c[1].f1, c[0]))
    return ordered[(len(ordered) - 1) // 2][0]


# ----------------------------------------------------------------------
# Prediction files


@dataclass(frozen=True)
class PredictionFile:
    model: str
    train_tag: str
    test_tag: str
    rows: Mapping[str, str]

    def __post_init__(self) -> None:
        if not self.rows:
            raise ScoringError("prediction file has no rows")


def load_predictions(path: str | Path) -> PredictionFile:
    """JSONL: an optional header line with model/train_tag/test_tag, then
    one {id, label} row per instance."""
    model, train_tag, test_tag = "model", "default", "default"
    rows: dict[str, str] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except ValueError as exc:
                raise ScoringError(f"{path}:{line_number}: bad JSON: {exc}") from exc
            if "model" in record and line_number == 1:
                model = record["model"]
                train_tag = record.get("train_tag", train_tag)
                test_tag = record.get("test_tag", test_tag)
                continue
            try:
                row_id, label = str(record["id"]), record["label"]
            except KeyError as exc:
                raise ScoringError(
                    f"{path}:{line_number}: prediction rows need id and label"
                ) from exc
            if row_id in rows:
                raise ScoringError(f"{path}:{line_number}: duplicate id {row_id!r}")
            rows[row_id] = label
    return PredictionFile(model=model, train_tag=train_tag, test_tag=test_tag, rows=rows)


def save_predictions(predictions: PredictionFile, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "model": predictions.model,
                    "train_tag": predictions.train_tag,
                    "test_tag": predictions.test_tag,
                }
            )
            + "\n"
        )
        for row_id in predictions.rows:
            fh.write(json.dumps({"id": row_id, "label": predictions.rows[row_id]}) + "\n")
