"""Annotator quality gating: prerequisites, qualification tests, control accuracy.

Three successive filters decide whose responses count. Platform history must
show at least 500 approved tasks at a 95% approval rate. Each super-cluster
then requires a perfect score on its qualification test. Finally a rolling
per-cluster accuracy on hidden control sentences suspends anyone who drops
below 80% once enough controls have been seen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from crowdlabel.data import Instance
from crowdlabel.taxonomy import WRONG_TYPE, Taxonomy

ACTIVE = "active"
SUSPENDED = "suspended"

PASSED = "passed"
FAILED = "failed"
UNTESTED = "untested"


class QualityError(ValueError):
    """Raised on gate misuse: unqualified annotators, malformed tests or pools."""


@dataclass(frozen=True)
class GateConfig:
    """Thresholds for the three admission filters.

    All bounds are inclusive on the passing side: 500 approved tasks pass,
    an 0.80 control accuracy passes, below it suspends. Suspension requires
    at least ``min_sample`` controls so one early mistake cannot ban anyone.
    """

    min_approved: int = 500
    min_approval_rate: Fraction = Fraction(95, 100)
    accuracy_threshold: Fraction = Fraction(80, 100)
    min_sample: int = 5
    enabled: bool = True

    def to_record(self) -> dict:
        return {
            "min_approved": self.min_approved,
            "min_approval_rate": [
                self.min_approval_rate.numerator,
                self.min_approval_rate.denominator,
            ],
            "accuracy_threshold": [
                self.accuracy_threshold.numerator,
                self.accuracy_threshold.denominator,
            ],
            "min_sample": self.min_sample,
            "enabled": self.enabled,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "GateConfig":
        return cls(
            min_approved=record["min_approved"],
            min_approval_rate=Fraction(*record["min_approval_rate"]),
            accuracy_threshold=Fraction(*record["accuracy_threshold"]),
            min_sample=record["min_sample"],
            enabled=record["enabled"],
        )


@dataclass
class ControlStats:
    correct: int = 0
    seen: int = 0

    def accuracy(self) -> Fraction | None:
        if self.seen == 0:
            return None
        return Fraction(self.correct, self.seen)


def below_gate(stats: ControlStats, config: GateConfig) -> bool:
    """True when the rolling accuracy mandates suspension.

    Exact integer comparison: correct/seen < threshold without float error.
    """
    if not config.enabled or stats.seen < config.min_sample:
        return False
    t = config.accuracy_threshold
    return stats.correct * t.denominator < stats.seen * t.numerator


@dataclass
class AnnotatorProfile:
    """Per-annotator admission state, tracked separately for every cluster."""

    annotator_id: str
    approved_count: int
    approval_rate: Fraction
    qualifications: dict[str, str] = field(default_factory=dict)
    control_stats: dict[str, ControlStats] = field(default_factory=dict)
    status: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 <= self.approval_rate <= 1:
            raise QualityError(
                f"approval_rate must lie in [0, 1], got {self.approval_rate}"
            )
        if self.approved_count < 0:
            raise QualityError("approved_count must be non-negative")

    def qualification(self, cluster: str) -> str:
        return self.qualifications.get(cluster, UNTESTED)

    def cluster_status(self, cluster: str) -> str:
        return self.status.get(cluster, ACTIVE)

    def stats_for(self, cluster: str) -> ControlStats:
        return self.control_stats.setdefault(cluster, ControlStats())

    def is_eligible(self, cluster: str) -> bool:
        """Qualified for the cluster and not suspended in it."""
        return (
            self.qualification(cluster) == PASSED
            and self.cluster_status(cluster) == ACTIVE
        )

    def to_record(self) -> dict:
        return {
            "annotator_id": self.annotator_id,
            "approved_count": self.approved_count,
            "approval_rate": [
                self.approval_rate.numerator,
                self.approval_rate.denominator,
            ],
            "qualifications": dict(sorted(self.qualifications.items())),
            "control_stats": {
                cluster: [stats.correct, stats.seen]
                for cluster, stats in sorted(self.control_stats.items())
            },
            "status": dict(sorted(self.status.items())),
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "AnnotatorProfile":
        return cls(
            annotator_id=record["annotator_id"],
            approved_count=record["approved_count"],
            approval_rate=Fraction(*record["approval_rate"]),
            qualifications=dict(record["qualifications"]),
            control_stats={
                cluster: ControlStats(correct=pair[0], seen=pair[1])
                for cluster, pair in record["control_stats"].items()
            },
            status=dict(record["status"]),
        )


def check_prerequisites(
    profile: AnnotatorProfile, config: GateConfig = GateConfig()
) -> bool:
    """Platform-history filter: task floor and approval-rate floor, inclusive."""
    return (
        profile.approved_count >= config.min_approved
        and profile.approval_rate >= config.min_approval_rate
    )


@dataclass(frozen=True)
class QualificationQuestion:
    instance: Instance
    choices: tuple[str, ...]
    correct: str

    def __post_init__(self) -> None:
        if self.correct not in self.choices:
            raise QualityError(
                f"correct answer {self.correct!r} missing from choices "
                f"for question {self.instance.id!r}"
            )


@dataclass(frozen=True)
class QualificationTest:
    """Per-cluster entry exam; passing requires every answer correct."""

    cluster: str
    questions: tuple[QualificationQuestion, ...]
    # Shown before the questions; must cover every candidate relation.
    definitions: Mapping[str, str] = field(default_factory=dict)
    pass_score: float = 1.0

    def __post_init__(self) -> None:
        if not self.questions:
            raise QualityError(f"qualification test for {self.cluster!r} has no questions")


def validate_test_definitions(test: QualificationTest, taxonomy: Taxonomy) -> None:
    """Every merged candidate relation of the cluster needs definition text."""
    cluster = taxonomy.cluster_named(test.cluster)
    missing = [
        label for label in cluster.merged_relations if not test.definitions.get(label)
    ]
    if missing:
        raise QualityError(
            f"test for {test.cluster!r} lacks definitions for: {missing}"
        )


def grade_qualification(
    test: QualificationTest, answers: Mapping[str, str]
) -> str:
    """Grade a full submission; returns PASSED only on a perfect score."""
    missing = [q.instance.id for q in test.questions if q.instance.id not in answers]
    if missing:
        raise QualityError(f"incomplete submission, unanswered: {missing}")
    correct = sum(1 for q in test.questions if answers[q.instance.id] == q.correct)
    return PASSED if correct == len(test.questions) else FAILED


def record_control(
    profile: AnnotatorProfile,
    cluster: str,
    correct: bool,
    config: GateConfig = GateConfig(),
) -> bool:
    """Update the rolling control accuracy; returns True if this suspends.

    Suspension is sticky for the run and scoped to the cluster. Recording
    against an unqualified annotator is an error.
    """
    if profile.qualification(cluster) != PASSED:
        raise QualityError(
            f"annotator {profile.annotator_id!r} not qualified for {cluster!r}"
        )
    stats = profile.stats_for(cluster)
    stats.seen += 1
    if correct:
        stats.correct += 1
    already = profile.cluster_status(cluster) == SUSPENDED
    if not already and below_gate(stats, config):
        profile.status[cluster] = SUSPENDED
        return True
    return False


def expected_control_answer(truth: str, choices: Sequence[str]) -> str:
    """The gradable answer for a control at a given stage.

    A control whose true label is not among the offered choices can only be
    answered honestly with WRONG_TYPE, the escape option present at every
    stage.
    """
    return truth if truth in choices else WRONG_TYPE


@dataclass(frozen=True)
class ControlSentence:
    instance: Instance
    truth: str


class ControlPool:
    """Hand-labeled control sentences, grouped by super-cluster."""

    RECOMMENDED_MIN = 100

    def __init__(self, taxonomy: Taxonomy) -> None:
        self._taxonomy = taxonomy
        self._by_cluster: dict[str, list[ControlSentence]] = {}
        self._by_id: dict[str, ControlSentence] = {}

    def add(self, cluster: str, instance: Instance, truth: str) -> None:
        allowed = set(self._taxonomy.cluster_named(cluster).merged_set)
        if truth not in allowed:
            raise QualityError(
                f"control label {truth!r} outside candidate set of {cluster!r}"
            )
        if instance.id in self._by_id:
            raise QualityError(f"duplicate control id {instance.id!r}")
        control = ControlSentence(instance, truth)
        self._by_id[instance.id] = control
        self._by_cluster.setdefault(cluster, []).append(control)

    def controls(self, cluster: str) -> tuple[ControlSentence, ...]:
        return tuple(self._by_cluster.get(cluster, ()))

    def lookup(self, control_id: str) -> ControlSentence:
        try:
            return self._by_id[control_id]
        except KeyError:
            raise QualityError(f"unknown control id {control_id!r}") from None

    def __contains__(self, control_id: str) -> bool:
        return control_id in self._by_id

    def size(self, cluster: str) -> int:
        return len(self._by_cluster.get(cluster, ()))

    def clusters(self) -> tuple[str, ...]:
        return tuple(sorted(self._by_cluster))

    def warnings(self) -> list[str]:
        """Advisory sizing notes; small pools make the gate easy to game."""
        notes = []
        for cluster in sorted(self._by_cluster):
            n = self.size(cluster)
            if n < self.RECOMMENDED_MIN:
                notes.append(
                    f"control pool for {cluster!r} has {n} sentences; "
                    f"{self.RECOMMENDED_MIN}+ recommended"
                )
        return notes


def load_control_pool(path: str | Path, taxonomy: Taxonomy) -> ControlPool:
    """Read controls from JSONL: dataset fields plus a true_label field."""
    pool = ControlPool(taxonomy)
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                truth = record.pop("true_label")
                instance = Instance.from_record(record)
            except (KeyError, ValueError) as exc:
                raise QualityError(
                    f"{path}:{line_number}: bad control record: {exc}"
                ) from exc
            cluster = taxonomy.super_cluster_of(*instance.type_pair).name
            pool.add(cluster, instance, truth)
    return pool


def load_qualification_tests(
    path: str | Path, taxonomy: Taxonomy
) -> dict[str, QualificationTest]:
    """Read per-cluster tests from JSONL.

    Each row carries the dataset fields plus correct_label and optional
    choices (defaulting to the cluster's first-stage choices). Definition
    text is filled from the taxonomy.
    """
    rows: dict[str, list[QualificationQuestion]] = {}
    for line_number, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            correct = record.pop("correct_label")
            choices = record.pop("choices", None)
            instance = Instance.from_record(record)
        except (KeyError, ValueError) as exc:
            raise QualityError(
                f"{path}:{line_number}: bad qualification record: {exc}"
            ) from exc
        cluster = taxonomy.super_cluster_of(*instance.type_pair)
        if choices is None:
            choices = cluster.stage_choices(0)
        rows.setdefault(cluster.name, []).append(
            QualificationQuestion(instance, tuple(choices), correct)
        )
    tests = {}
    for name, questions in rows.items():
        cluster = taxonomy.cluster_named(name)
        definitions = {
            label: taxonomy.definition(label) for label in cluster.merged_set
        }
        tests[name] = QualificationTest(
            cluster=name, questions=tuple(questions), definitions=definitions
        )
    return tests


def make_qualification_test(
    taxonomy: Taxonomy,
    cluster_name: str,
    questions: Iterable[QualificationQuestion],
) -> QualificationTest:
    """Build a test whose definitions cover the cluster's full choice set."""
    cluster = taxonomy.cluster_named(cluster_name)
    definitions = {label: taxonomy.definition(label) for label in cluster.merged_set}
    test = QualificationTest(
        cluster=cluster_name, questions=tuple(questions), definitions=definitions
    )
    return test
