"""Annotation lifecycle state machine, event-sourced.

Commands validate against current state, then emit events; applying events is
the only way state changes. Replaying a log therefore reconstructs the exact
state that produced it, which is what crash recovery, snapshots, and the
determinism tests rely on.

Protocol summary: sentences are annotated per super-cluster in HITs of 5
slots (4 task sentences + 1 hidden control). A sentence resolves once a label
holds a unique plurality of at least 2 among its accepted responses; each
disagreement round adds one annotator, up to 4 rounds. A WRONG_TYPE
resolution moves the sentence to the cluster's next label subset; running out
of subsets excludes it. Annotators failing the rolling control-accuracy gate
are suspended per cluster and their accepted responses invalidated.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from crowdlabel.data import Instance
from crowdlabel.events import Event, LogicalClock, check_contiguity
from crowdlabel.quality import (
    ACTIVE,
    PASSED,
    SUSPENDED,
    AnnotatorProfile,
    ControlPool,
    GateConfig,
    QualificationQuestion,
    QualificationTest,
    below_gate,
    check_prerequisites,
    expected_control_answer,
    grade_qualification,
    make_qualification_test,
)
from crowdlabel.taxonomy import WRONG_TYPE, Taxonomy, taxonomy_from_config

UNRESOLVED = "unresolved"
RESOLVED = "resolved"
WRONG_TYPE_EXHAUSTED = "wrong_type_exhausted"
UNRESOLVABLE = "unresolvable"

OPEN = "open"
COMPLETED = "completed"
EXPIRED = "expired"

# Rejection reasons attached to response_rejected events.
REJECT_GATE = "gate"
REJECT_SETTLED = "settled"
REJECT_STALE = "stale"


class OrchestratorError(ValueError):
    """Command precondition violation; no events were emitted."""


def required_responses(round_number: int) -> int:
    """Accepted responses needed to adjudicate a round: 2, then +1 per round."""
    return round_number + 1


def settle(labels: Sequence[str], max_rounds: int = 4) -> tuple[str, int, str | None, str | None]:
    """Replay adjudication over accepted labels in arrival order.

    Returns (resolution, round, resolved_label, reason). At each round the
    prefix of responses available so far is checked for a label with a unique
    plurality of at least 2; a tie burns the round, and a tie in the final
    round is unresolvable.
    """
    round_number = 1
    for k in range(2, len(labels) + 1):
        if k < required_responses(round_number):
            continue
        counts = Counter(labels[:k])
        top = max(counts.values())
        winners = [label for label, count in counts.items() if count == top]
        if top >= 2 and len(winners) == 1:
            return (RESOLVED, round_number, winners[0], None)
        if round_number < max_rounds:
            round_number += 1
        else:
            return (UNRESOLVABLE, round_number, None, "no_plurality")
    return (UNRESOLVED, round_number, None, None)


def _fraction_record(value: Fraction) -> list[int]:
    return [value.numerator, value.denominator]


@dataclass(frozen=True)
class CampaignConfig:
    seed: int = 0
    price: Fraction = Fraction(15, 100)
    gate: GateConfig = GateConfig()
    max_rounds: int = 4
    hit_size: int = 5
    pending_per_hit: int = 4

    def __post_init__(self) -> None:
        if not 1 <= self.pending_per_hit < self.hit_size:
            raise OrchestratorError("pending_per_hit must leave room for a control")
        if self.max_rounds < 1:
            raise OrchestratorError("max_rounds must be positive")

    def to_record(self) -> dict:
        return {
            "seed": self.seed,
            "price": _fraction_record(self.price),
            "gate": self.gate.to_record(),
            "max_rounds": self.max_rounds,
            "hit_size": self.hit_size,
            "pending_per_hit": self.pending_per_hit,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "CampaignConfig":
        return cls(
            seed=record["seed"],
            price=Fraction(*record["price"]),
            gate=GateConfig.from_record(record["gate"]),
            max_rounds=record["max_rounds"],
            hit_size=record["hit_size"],
            pending_per_hit=record["pending_per_hit"],
        )


@dataclass
class Response:
    annotator_id: str
    label: str
    round: int

    def to_record(self) -> dict:
        return {"annotator_id": self.annotator_id, "label": self.label, "round": self.round}

    @classmethod
    def from_record(cls, record: Mapping) -> "Response":
        return cls(record["annotator_id"], record["label"], record["round"])


@dataclass
class SentenceState:
    instance: Instance
    cluster: str
    stage: int = 0
    round: int = 1
    responses: list[Response] = field(default_factory=list)
    resolution: str = UNRESOLVED
    resolved_label: str | None = None
    reason: str | None = None

    def labels(self) -> list[str]:
        return [r.label for r in self.responses]

    def has_response_from(self, annotator_id: str) -> bool:
        return any(r.annotator_id == annotator_id for r in self.responses)

    @property
    def terminal(self) -> bool:
        return self.resolution != UNRESOLVED

    def to_record(self) -> dict:
        return {
            "instance": self.instance.to_record(),
            "cluster": self.cluster,
            "stage": self.stage,
            "round": self.round,
            "responses": [r.to_record() for r in self.responses],
            "resolution": self.resolution,
            "resolved_label": self.resolved_label,
            "reason": self.reason,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "SentenceState":
        return cls(
            instance=Instance.from_record(record["instance"]),
            cluster=record["cluster"],
            stage=record["stage"],
            round=record["round"],
            responses=[Response.from_record(r) for r in record["responses"]],
            resolution=record["resolution"],
            resolved_label=record["resolved_label"],
            reason=record["reason"],
        )


@dataclass
class Slot:
    sentence_id: str
    is_control: bool

    def to_record(self) -> dict:
        return {"sentence_id": self.sentence_id, "is_control": self.is_control}


@dataclass
class HitState:
    hit_id: str
    cluster: str
    stage: int
    slots: list[Slot]
    price: Fraction
    status: str = OPEN
    claimed_by: str | None = None
    answered_by: str | None = None

    def pending_ids(self) -> list[str]:
        return [s.sentence_id for s in self.slots if not s.is_control]

    def control_ids(self) -> list[str]:
        return [s.sentence_id for s in self.slots if s.is_control]

    def slot_ids(self) -> list[str]:
        return [s.sentence_id for s in self.slots]

    def to_record(self) -> dict:
        return {
            "hit_id": self.hit_id,
            "cluster": self.cluster,
            "stage": self.stage,
            "slots": [s.to_record() for s in self.slots],
            "price": _fraction_record(self.price),
            "status": self.status,
            "claimed_by": self.claimed_by,
            "answered_by": self.answered_by,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "HitState":
        return cls(
            hit_id=record["hit_id"],
            cluster=record["cluster"],
            stage=record["stage"],
            slots=[Slot(s["sentence_id"], s["is_control"]) for s in record["slots"]],
            price=Fraction(*record["price"]),
            status=record["status"],
            claimed_by=record["claimed_by"],
            answered_by=record["answered_by"],
        )


@dataclass(frozen=True)
class IngestResult:
    hit_id: str
    accepted: tuple[str, ...] = ()
    rejected: tuple[tuple[str, str], ...] = ()
    controls_graded: int = 0
    controls_correct: int = 0
    suspended: bool = False
    public: dict = field(default_factory=dict)
    replayed: bool = False


@dataclass(frozen=True)
class FinalLabels:
    assignments: dict[str, str]
    exclusions: list[dict]
    pending: list[str]


class CampaignState:
    """Mutable campaign state; changed exclusively by event application."""

    def __init__(self, config: CampaignConfig, taxonomy_config: dict) -> None:
        self.config = config
        self.taxonomy_config = taxonomy_config
        self.taxonomy: Taxonomy = taxonomy_from_config(taxonomy_config)
        self.annotators: dict[str, AnnotatorProfile] = {}
        self.test_rows: dict[str, dict] = {}
        self.tests: dict[str, QualificationTest] = {}
        self.controls = ControlPool(self.taxonomy)
        self.control_rows: list[dict] = []
        self.sentences: dict[str, SentenceState] = {}
        self.hits: dict[str, HitState] = {}
        self.idempotency: dict[str, dict] = {}
        self.hit_seq: int = 0

    def to_record(self) -> dict:
        return {
            "config": self.config.to_record(),
            "taxonomy": self.taxonomy_config,
            "annotators": {a: p.to_record() for a, p in self.annotators.items()},
            "tests": dict(self.test_rows),
            "controls": list(self.control_rows),
            "sentences": {i: s.to_record() for i, s in self.sentences.items()},
            "hits": {h: hit.to_record() for h, hit in self.hits.items()},
            "idempotency": dict(self.idempotency),
            "hit_seq": self.hit_seq,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "CampaignState":
        state = cls(
            CampaignConfig.from_record(record["config"]), dict(record["taxonomy"])
        )
        for annotator_id, rec in record["annotators"].items():
            state.annotators[annotator_id] = AnnotatorProfile.from_record(rec)
        for cluster, rec in record["tests"].items():
            state.test_rows[cluster] = dict(rec)
            state.tests[cluster] = _test_from_payload(state.taxonomy, rec)
        for rec in record["controls"]:
            state.control_rows.append(dict(rec))
            state.controls.add(
                rec["cluster"], Instance.from_record(rec["instance"]), rec["truth"]
            )
        for sentence_id, rec in record["sentences"].items():
            state.sentences[sentence_id] = SentenceState.from_record(rec)
        for hit_id, rec in record["hits"].items():
            state.hits[hit_id] = HitState.from_record(rec)
        state.idempotency = {k: dict(v) for k, v in record["idempotency"].items()}
        state.hit_seq = record["hit_seq"]
        return state


def _test_from_payload(taxonomy: Taxonomy, payload: Mapping) -> QualificationTest:
    questions = [
        QualificationQuestion(
            Instance.from_record(q["instance"]), tuple(q["choices"]), q["correct"]
        )
        for q in payload["questions"]
    ]
    return make_qualification_test(taxonomy, payload["cluster"], questions)


def canonical_state(state: "CampaignState | Mapping") -> str:
    """Canonical JSON form used for byte-level state comparison."""
    record = state.to_record() if isinstance(state, CampaignState) else state
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def state_digest(state: "CampaignState | Mapping") -> str:
    return hashlib.sha256(canonical_state(state).encode("utf-8")).hexdigest()


class Orchestrator:
    """Single-writer command interface over the event-sourced campaign state."""

    def __init__(
        self,
        sink: Callable[[Event], None] | None = None,
        clock: Callable[[], int] | None = None,
    ) -> None:
        self._sink = sink
        self._clock = clock if clock is not None else LogicalClock()
        self._seq = 0
        self.events: list[Event] = []
        self.state: CampaignState | None = None

    # ------------------------------------------------------------------
    # Event machinery

    def _emit(self, kind: str, payload: dict) -> Event:
        event = Event(self._seq + 1, self._clock(), kind, payload)
        self._seq = event.seq
        self.events.append(event)
        if self._sink is not None:
            self._sink(event)
        self._apply(event)
        return event

    def _apply(self, event: Event) -> None:
        handler = getattr(self, f"_apply_{event.kind}", None)
        if handler is None:
            raise OrchestratorError(f"unknown event kind {event.kind!r}")
        handler(event.payload)

    @classmethod
    def replay(
        cls,
        events: Iterable[Event],
        sink: Callable[[Event], None] | None = None,
        clock: Callable[[], int] | None = None,
    ) -> "Orchestrator":
        """Rebuild state by applying a contiguous event log."""
        orch = cls(sink=None, clock=clock)
        last_ts = 0
        for event in check_contiguity(events):
            orch._seq = event.seq
            orch.events.append(event)
            orch._apply(event)
            last_ts = event.ts
        if clock is None:
            orch._clock = LogicalClock(last_ts + 1)
        orch._sink = sink
        return orch

    @classmethod
    def from_snapshot(
        cls,
        record: Mapping,
        tail: Iterable[Event] = (),
        sink: Callable[[Event], None] | None = None,
    ) -> "Orchestrator":
        """Restore from a state snapshot plus the events logged after it."""
        orch = cls(sink=None)
        orch.state = CampaignState.from_record(record["state"])
        orch._seq = record["last_seq"]
        last_ts = record["last_ts"]
        for event in check_contiguity(tail, start=orch._seq + 1):
            orch._seq = event.seq
            orch.events.append(event)
            orch._apply(event)
            last_ts = event.ts
        orch._clock = LogicalClock(last_ts + 1)
        orch._sink = sink
        return orch

    def snapshot(self) -> dict:
        self._require_configured()
        last_ts = self.events[-1].ts if self.events else 0
        return {
            "state": self.state.to_record(),
            "last_seq": self._seq,
            "last_ts": last_ts,
        }

    def state_record(self) -> dict:
        self._require_configured()
        record = self.state.to_record()
        record["last_seq"] = self._seq
        return record

    @property
    def last_seq(self) -> int:
        return self._seq

    @property
    def configured(self) -> bool:
        return self.state is not None

    @property
    def taxonomy(self) -> Taxonomy:
        self._require_configured()
        return self.state.taxonomy

    @property
    def config(self) -> CampaignConfig:
        self._require_configured()
        return self.state.config

    def _require_configured(self) -> None:
        if self.state is None:
            raise OrchestratorError("campaign not configured")

    # ------------------------------------------------------------------
    # Commands

    def configure(
        self, taxonomy: Taxonomy, config: CampaignConfig = CampaignConfig()
    ) -> None:
        if self.state is not None:
            raise OrchestratorError("campaign already configured")
        self._emit(
            "campaign_configured",
            {"config": config.to_record(), "taxonomy": taxonomy.to_config()},
        )

    def _apply_campaign_configured(self, payload: Mapping) -> None:
        self.state = CampaignState(
            CampaignConfig.from_record(payload["config"]), dict(payload["taxonomy"])
        )

    def register_annotator(
        self, annotator_id: str, approved_count: int, approval_rate: Fraction | float | str
    ) -> AnnotatorProfile:
        self._require_configured()
        if annotator_id in self.state.annotators:
            raise OrchestratorError(f"annotator {annotator_id!r} already registered")
        rate = Fraction(str(approval_rate)) if not isinstance(approval_rate, Fraction) else approval_rate
        profile = AnnotatorProfile(annotator_id, approved_count, rate)
        self._emit(
            "annotator_registered",
            {
                "annotator_id": annotator_id,
                "approved_count": approved_count,
                "approval_rate": _fraction_record(rate),
            },
        )
        return self.state.annotators[annotator_id]

    def _apply_annotator_registered(self, payload: Mapping) -> None:
        self.state.annotators[payload["annotator_id"]] = AnnotatorProfile(
            payload["annotator_id"],
            payload["approved_count"],
            Fraction(*payload["approval_rate"]),
        )

    def add_qualification_test(
        self, cluster: str, questions: Sequence[QualificationQuestion]
    ) -> None:
        self._require_configured()
        self.taxonomy.cluster_named(cluster)
        if not questions:
            raise OrchestratorError(f"qualification test for {cluster!r} has no questions")
        if cluster in self.state.tests:
            raise OrchestratorError(f"qualification test for {cluster!r} already added")
        payload = {
            "cluster": cluster,
            "questions": [
                {
                    "instance": q.instance.to_record(),
                    "choices": list(q.choices),
                    "correct": q.correct,
                }
                for q in questions
            ],
        }
        _test_from_payload(self.taxonomy, payload)  # validate before emitting
        self._emit("qualification_test_added", payload)

    def _apply_qualification_test_added(self, payload: Mapping) -> None:
        self.state.test_rows[payload["cluster"]] = dict(payload)
        self.state.tests[payload["cluster"]] = _test_from_payload(
            self.state.taxonomy, payload
        )

    def grade_qualification_submission(
        self, annotator_id: str, cluster: str, answers: Mapping[str, str]
    ) -> str:
        self._require_configured()
        profile = self._profile(annotator_id)
        if not check_prerequisites(profile, self.config.gate):
            raise OrchestratorError(
                f"annotator {annotator_id!r} does not meet the task-history prerequisites"
            )
        if profile.cluster_status(cluster) == SUSPENDED:
            raise OrchestratorError(
                f"annotator {annotator_id!r} is suspended in {cluster!r}"
            )
        test = self.state.tests.get(cluster)
        if test is None:
            raise OrchestratorError(f"no qualification test for {cluster!r}")
        result = grade_qualification(test, answers)
        self._emit(
            "qualification_graded",
            {"annotator_id": annotator_id, "cluster": cluster, "result": result},
        )
        return result

    def _apply_qualification_graded(self, payload: Mapping) -> None:
        profile = self.state.annotators[payload["annotator_id"]]
        profile.qualifications[payload["cluster"]] = payload["result"]

    def add_control(self, instance: Instance, truth: str) -> None:
        self._require_configured()
        cluster = self.taxonomy.super_cluster_of(*instance.type_pair)
        if truth not in cluster.merged_set:
            raise OrchestratorError(
                f"control label {truth!r} outside candidate set of {cluster.name!r}"
            )
        if instance.id in self.state.controls or instance.id in self.state.sentences:
            raise OrchestratorError(f"duplicate id {instance.id!r}")
        self._emit(
            "control_added",
            {"cluster": cluster.name, "truth": truth, "instance": instance.to_record()},
        )

    def _apply_control_added(self, payload: Mapping) -> None:
        self.state.control_rows.append(dict(payload))
        self.state.controls.add(
            payload["cluster"], Instance.from_record(payload["instance"]), payload["truth"]
        )

    def enqueue_sentence(self, instance: Instance) -> SentenceState:
        self._require_configured()
        cluster = self.taxonomy.super_cluster_of(*instance.type_pair)
        if instance.id in self.state.sentences or instance.id in self.state.controls:
            raise OrchestratorError(f"duplicate id {instance.id!r}")
        self._emit(
            "sentence_enqueued",
            {"cluster": cluster.name, "instance": instance.to_record()},
        )
        return self.state.sentences[instance.id]

    def _apply_sentence_enqueued(self, payload: Mapping) -> None:
        instance = Instance.from_record(payload["instance"])
        self.state.sentences[instance.id] = SentenceState(
            instance=instance, cluster=payload["cluster"]
        )

    def enqueue_dataset(self, instances: Iterable[Instance]) -> int:
        count = 0
        for instance in instances:
            self.enqueue_sentence(instance)
            count += 1
        return count

    # ------------------------------------------------------------------
    # HIT construction

    def _outstanding(self) -> dict[str, int]:
        """Open-HIT pending slots per sentence, counted at matching stage."""
        counts: dict[str, int] = {}
        for hit in self.state.hits.values():
            if hit.status != OPEN:
                continue
            for slot in hit.slots:
                if slot.is_control:
                    continue
                sentence = self.state.sentences[slot.sentence_id]
                if sentence.stage == hit.stage:
                    counts[slot.sentence_id] = counts.get(slot.sentence_id, 0) + 1
        return counts

    def needed_responses(self, sentence: SentenceState, outstanding: int) -> int:
        if sentence.resolution != UNRESOLVED:
            return 0
        return required_responses(sentence.round) - len(sentence.responses) - outstanding

    def build_hits(
        self, pending: Sequence[str], cluster: str, stage: int
    ) -> list[HitState]:
        """Batch pending sentences of one (cluster, stage) into 5-slot HITs.

        Each HIT gets pending_per_hit task slots plus controls up to
        hit_size; a short final chunk is padded with extra controls. Control
        choice and position come from a per-HIT seeded generator.
        """
        self._require_configured()
        cluster_def = self.taxonomy.cluster_named(cluster)
        if not 0 <= stage < cluster_def.stage_count:
            raise OrchestratorError(f"stage {stage} out of range for {cluster!r}")
        pool = self.state.controls.controls(cluster)
        if not pool:
            raise OrchestratorError(f"empty control pool for cluster {cluster!r}")
        for sentence_id in pending:
            sentence = self.state.sentences.get(sentence_id)
            if sentence is None:
                raise OrchestratorError(f"unknown sentence {sentence_id!r}")
            if sentence.cluster != cluster or sentence.stage != stage:
                raise OrchestratorError(
                    f"sentence {sentence_id!r} is not pending in {cluster!r} stage {stage}"
                )
        if len(set(pending)) != len(pending):
            raise OrchestratorError("duplicate sentence in one batch")

        hits = []
        per_hit = self.config.pending_per_hit
        for start in range(0, len(pending), per_hit):
            chunk = list(pending[start : start + per_hit])
            control_count = self.config.hit_size - len(chunk)
            if control_count > len(pool):
                raise OrchestratorError(
                    f"control pool for {cluster!r} too small to pad a HIT "
                    f"(need {control_count}, have {len(pool)})"
                )
            hit_seq = self.state.hit_seq
            rng = random.Random(f"{self.config.seed}:hit:{hit_seq}")
            controls = rng.sample(range(len(pool)), control_count)
            slots = [Slot(sentence_id, False) for sentence_id in chunk] + [
                Slot(pool[i].instance.id, True) for i in controls
            ]
            rng.shuffle(slots)
            payload = {
                "hit_id": f"h{hit_seq:06d}",
                "hit_seq": hit_seq,
                "cluster": cluster,
                "stage": stage,
                "slots": [s.to_record() for s in slots],
                "price": _fraction_record(self.config.price),
            }
            self._emit("hit_issued", payload)
            hits.append(self.state.hits[payload["hit_id"]])
        return hits

    def _apply_hit_issued(self, payload: Mapping) -> None:
        hit = HitState(
            hit_id=payload["hit_id"],
            cluster=payload["cluster"],
            stage=payload["stage"],
            slots=[Slot(s["sentence_id"], s["is_control"]) for s in payload["slots"]],
            price=Fraction(*payload["price"]),
        )
        self.state.hits[hit.hit_id] = hit
        self.state.hit_seq = payload["hit_seq"] + 1

    def issue_wave(self) -> list[HitState]:
        """Issue HITs covering every sentence that needs one more response.

        Each sentence appears at most once per wave; round 1 therefore takes
        two waves, giving the 2 x ceil(N/4) HIT count for N quiet sentences.
        """
        self._require_configured()
        outstanding = self._outstanding()
        groups: dict[tuple[str, int], list[str]] = {}
        for sentence_id, sentence in self.state.sentences.items():
            if self.needed_responses(sentence, outstanding.get(sentence_id, 0)) > 0:
                groups.setdefault((sentence.cluster, sentence.stage), []).append(
                    sentence_id
                )
        hits = []
        for cluster, stage in sorted(groups):
            hits.extend(self.build_hits(groups[(cluster, stage)], cluster, stage))
        return hits

    # ------------------------------------------------------------------
    # Claiming and expiry

    def claimed_hit(self, annotator_id: str) -> HitState | None:
        for hit in self.state.hits.values():
            if hit.status == OPEN and hit.claimed_by == annotator_id:
                return hit
        return None

    def can_claim(self, annotator_id: str, hit: HitState) -> bool:
        profile = self.state.annotators.get(annotator_id)
        if profile is None or not check_prerequisites(profile, self.config.gate):
            return False
        if not profile.is_eligible(hit.cluster):
            return False
        if hit.status != OPEN or hit.claimed_by is not None:
            return False
        for sentence_id in hit.pending_ids():
            sentence = self.state.sentences[sentence_id]
            if sentence.stage == hit.stage and sentence.has_response_from(annotator_id):
                return False
        return True

    def claim_next_hit(self, annotator_id: str) -> HitState | None:
        """Assign the first claimable open HIT; re-claim is idempotent."""
        self._require_configured()
        self._profile(annotator_id)
        held = self.claimed_hit(annotator_id)
        if held is not None:
            return held
        for hit in self.state.hits.values():
            if self.can_claim(annotator_id, hit):
                self._emit(
                    "hit_claimed", {"hit_id": hit.hit_id, "annotator_id": annotator_id}
                )
                return hit
        return None

    def _apply_hit_claimed(self, payload: Mapping) -> None:
        self.state.hits[payload["hit_id"]].claimed_by = payload["annotator_id"]

    def expire_hit(self, hit_id: str, reason: str = "expired") -> None:
        self._require_configured()
        hit = self.state.hits.get(hit_id)
        if hit is None:
            raise OrchestratorError(f"unknown hit {hit_id!r}")
        if hit.status != OPEN:
            raise OrchestratorError(f"hit {hit_id!r} is not open")
        self._emit("hit_expired", {"hit_id": hit_id, "reason": reason})

    def _apply_hit_expired(self, payload: Mapping) -> None:
        hit = self.state.hits[payload["hit_id"]]
        hit.status = EXPIRED
        hit.claimed_by = None

    # ------------------------------------------------------------------
    # Response ingestion

    def ingest_response(
        self,
        hit_id: str,
        annotator_id: str,
        answers: Mapping[str, str],
        idempotency_key: str | None = None,
    ) -> IngestResult:
        """Record a full HIT submission: grade controls, accept or reject tasks.

        Controls are graded first; a submission that drives the annotator
        below the accuracy gate suspends them, invalidates their earlier
        accepted responses in the cluster, and rejects this HIT's task
        answers. Duplicate idempotency keys return the stored result without
        emitting anything.
        """
        self._require_configured()
        if idempotency_key is not None and idempotency_key in self.state.idempotency:
            stored = self.state.idempotency[idempotency_key]
            return IngestResult(
                hit_id=stored["hit_id"],
                suspended=stored["suspended"],
                public=dict(stored),
                replayed=True,
            )

        hit = self.state.hits.get(hit_id)
        if hit is None:
            raise OrchestratorError(f"unknown hit {hit_id!r}")
        if hit.status != OPEN:
            raise OrchestratorError(f"hit {hit_id!r} is not open")
        if hit.claimed_by is not None and hit.claimed_by != annotator_id:
            raise OrchestratorError(f"hit {hit_id!r} is claimed by another annotator")
        profile = self._profile(annotator_id)
        if profile.qualification(hit.cluster) != PASSED:
            raise OrchestratorError(
                f"annotator {annotator_id!r} not qualified for {hit.cluster!r}"
            )
        slot_ids = hit.slot_ids()
        if set(answers) != set(slot_ids) or len(answers) != len(slot_ids):
            raise OrchestratorError("answers must cover every slot exactly once")
        choices = set(
            self.taxonomy.cluster_named(hit.cluster).stage_choices(hit.stage)
        )
        for sentence_id, label in answers.items():
            if label not in choices:
                raise OrchestratorError(
                    f"label {label!r} outside the stage candidate set"
                )
        for sentence_id in hit.pending_ids():
            sentence = self.state.sentences[sentence_id]
            if sentence.stage == hit.stage and sentence.has_response_from(annotator_id):
                raise OrchestratorError(
                    f"annotator {annotator_id!r} already labeled {sentence_id!r} "
                    f"at this stage"
                )

        cluster = hit.cluster
        stage_choice_list = self.taxonomy.cluster_named(cluster).stage_choices(hit.stage)
        controls_graded = 0
        controls_correct = 0
        for slot in hit.slots:
            if not slot.is_control:
                continue
            control = self.state.controls.lookup(slot.sentence_id)
            expected = expected_control_answer(control.truth, stage_choice_list)
            answer = answers[slot.sentence_id]
            correct = answer == expected
            controls_graded += 1
            controls_correct += int(correct)
            self._emit(
                "control_graded",
                {
                    "hit_id": hit_id,
                    "annotator_id": annotator_id,
                    "cluster": cluster,
                    "control_id": slot.sentence_id,
                    "answer": answer,
                    "expected": expected,
                    "correct": correct,
                },
            )
            if profile.cluster_status(cluster) == ACTIVE and below_gate(
                profile.stats_for(cluster), self.config.gate
            ):
                self._suspend(annotator_id, cluster, current_hit=hit_id)

        accepted: list[str] = []
        rejected: list[tuple[str, str]] = []
        for slot in hit.slots:
            if slot.is_control:
                continue
            sentence = self.state.sentences[slot.sentence_id]
            label = answers[slot.sentence_id]
            reason = None
            if profile.cluster_status(cluster) == SUSPENDED:
                reason = REJECT_GATE
            elif sentence.resolution != UNRESOLVED:
                reason = REJECT_SETTLED
            elif sentence.stage != hit.stage:
                reason = REJECT_STALE
            if reason is None:
                self._emit(
                    "response_accepted",
                    {
                        "sentence_id": slot.sentence_id,
                        "annotator_id": annotator_id,
                        "label": label,
                        "round": sentence.round,
                        "stage": sentence.stage,
                        "hit_id": hit_id,
                    },
                )
                accepted.append(slot.sentence_id)
                self._reconcile(slot.sentence_id)
            else:
                self._emit(
                    "response_rejected",
                    {
                        "sentence_id": slot.sentence_id,
                        "annotator_id": annotator_id,
                        "label": label,
                        "stage": hit.stage,
                        "hit_id": hit_id,
                        "reason": reason,
                    },
                )
                rejected.append((slot.sentence_id, reason))

        suspended = profile.cluster_status(cluster) == SUSPENDED
        public = {"hit_id": hit_id, "status": "recorded", "suspended": suspended}
        self._emit(
            "hit_answered",
            {
                "hit_id": hit_id,
                "annotator_id": annotator_id,
                "idempotency_key": idempotency_key,
                "result": public,
            },
        )
        return IngestResult(
            hit_id=hit_id,
            accepted=tuple(accepted),
            rejected=tuple(rejected),
            controls_graded=controls_graded,
            controls_correct=controls_correct,
            suspended=suspended,
            public=public,
        )

    def _apply_control_graded(self, payload: Mapping) -> None:
        profile = self.state.annotators[payload["annotator_id"]]
        stats = profile.stats_for(payload["cluster"])
        stats.seen += 1
        if payload["correct"]:
            stats.correct += 1

    def _apply_response_accepted(self, payload: Mapping) -> None:
        sentence = self.state.sentences[payload["sentence_id"]]
        sentence.responses.append(
            Response(payload["annotator_id"], payload["label"], payload["round"])
        )

    def _apply_response_rejected(self, payload: Mapping) -> None:
        pass  # bookkeeping only; rejected responses never enter state

    def _apply_hit_answered(self, payload: Mapping) -> None:
        hit = self.state.hits[payload["hit_id"]]
        hit.status = COMPLETED
        hit.answered_by = payload["annotator_id"]
        hit.claimed_by = payload["annotator_id"]
        if payload["idempotency_key"] is not None:
            self.state.idempotency[payload["idempotency_key"]] = dict(payload["result"])

    # ------------------------------------------------------------------
    # Suspension cascade

    def _suspend(self, annotator_id: str, cluster: str, current_hit: str | None) -> None:
        profile = self.state.annotators[annotator_id]
        stats = profile.stats_for(cluster)
        self._emit(
            "annotator_suspended",
            {
                "annotator_id": annotator_id,
                "cluster": cluster,
                "correct": stats.correct,
                "seen": stats.seen,
            },
        )
        # Retroactive invalidation: their accepted responses in this cluster
        # are struck and affected sentences re-adjudicated.
        for sentence_id, sentence in list(self.state.sentences.items()):
            if sentence.cluster != cluster:
                continue
            if sentence.reason == "starved":
                continue
            if not sentence.has_response_from(annotator_id):
                continue
            response = next(
                r for r in sentence.responses if r.annotator_id == annotator_id
            )
            self._emit(
                "response_invalidated",
                {
                    "sentence_id": sentence_id,
                    "annotator_id": annotator_id,
                    "label": response.label,
                    "round": response.round,
                    "stage": sentence.stage,
                },
            )
            self._reconcile(sentence_id)
        for hit in list(self.state.hits.values()):
            if (
                hit.status == OPEN
                and hit.claimed_by == annotator_id
                and hit.cluster == cluster
                and hit.hit_id != current_hit
            ):
                self._emit(
                    "hit_expired",
                    {"hit_id": hit.hit_id, "reason": "annotator_suspended"},
                )

    def _apply_annotator_suspended(self, payload: Mapping) -> None:
        profile = self.state.annotators[payload["annotator_id"]]
        profile.status[payload["cluster"]] = SUSPENDED

    def _apply_response_invalidated(self, payload: Mapping) -> None:
        sentence = self.state.sentences[payload["sentence_id"]]
        for i, response in enumerate(sentence.responses):
            if response.annotator_id == payload["annotator_id"]:
                del sentence.responses[i]
                break

    # ------------------------------------------------------------------
    # Adjudication

    def _reconcile(self, sentence_id: str) -> None:
        """Re-derive resolution and round from accepted responses; emit deltas."""
        sentence = self.state.sentences[sentence_id]
        resolution, round_number, label, reason = settle(
            sentence.labels(), self.config.max_rounds
        )
        if resolution == UNRESOLVED:
            if sentence.resolution != UNRESOLVED:
                self._emit(
                    "sentence_reopened",
                    {"sentence_id": sentence_id, "round": round_number},
                )
            elif round_number != sentence.round:
                self._emit(
                    "round_advanced",
                    {"sentence_id": sentence_id, "round": round_number},
                )
        elif resolution == RESOLVED:
            already = (
                sentence.resolution == RESOLVED and sentence.resolved_label == label
            )
            exhausted_same = (
                sentence.resolution == WRONG_TYPE_EXHAUSTED and label == WRONG_TYPE
            )
            if already or exhausted_same:
                return
            self._emit(
                "sentence_resolved",
                {
                    "sentence_id": sentence_id,
                    "label": label,
                    "round": round_number,
                    "stage": sentence.stage,
                },
            )
            if label == WRONG_TYPE:
                cluster = self.state.taxonomy.cluster_named(sentence.cluster)
                if sentence.stage + 1 < cluster.stage_count:
                    self._emit(
                        "stage_advanced",
                        {"sentence_id": sentence_id, "stage": sentence.stage + 1},
                    )
                else:
                    self._emit(
                        "sentence_exhausted",
                        {"sentence_id": sentence_id, "stage": sentence.stage},
                    )
        elif resolution == UNRESOLVABLE:
            if sentence.resolution != UNRESOLVABLE:
                self._emit(
                    "sentence_unresolvable",
                    {
                        "sentence_id": sentence_id,
                        "stage": sentence.stage,
                        "round": round_number,
                        "reason": reason,
                    },
                )

    def _apply_sentence_reopened(self, payload: Mapping) -> None:
        sentence = self.state.sentences[payload["sentence_id"]]
        sentence.resolution = UNRESOLVED
        sentence.resolved_label = None
        sentence.reason = None
        sentence.round = payload["round"]

    def _apply_round_advanced(self, payload: Mapping) -> None:
        self.state.sentences[payload["sentence_id"]].round = payload["round"]

    def _apply_sentence_resolved(self, payload: Mapping) -> None:
        sentence = self.state.sentences[payload["sentence_id"]]
        sentence.resolution = RESOLVED
        sentence.resolved_label = payload["label"]
        sentence.round = payload["round"]
        sentence.reason = None

    def _apply_stage_advanced(self, payload: Mapping) -> None:
        sentence = self.state.sentences[payload["sentence_id"]]
        sentence.stage = payload["stage"]
        sentence.round = 1
        sentence.responses = []
        sentence.resolution = UNRESOLVED
        sentence.resolved_label = None
        sentence.reason = None

    def _apply_sentence_exhausted(self, payload: Mapping) -> None:
        sentence = self.state.sentences[payload["sentence_id"]]
        sentence.resolution = WRONG_TYPE_EXHAUSTED
        sentence.resolved_label = None
        sentence.reason = "wrong_type_exhausted"

    def _apply_sentence_unresolvable(self, payload: Mapping) -> None:
        sentence = self.state.sentences[payload["sentence_id"]]
        sentence.resolution = UNRESOLVABLE
        sentence.resolved_label = None
        sentence.round = payload["round"]
        sentence.reason = payload["reason"]

    def mark_starved(self, sentence_id: str) -> None:
        """Terminal state for a sentence no eligible annotator can still label."""
        self._require_configured()
        sentence = self.state.sentences.get(sentence_id)
        if sentence is None:
            raise OrchestratorError(f"unknown sentence {sentence_id!r}")
        if sentence.resolution != UNRESOLVED:
            raise OrchestratorError(f"sentence {sentence_id!r} is already settled")
        self._emit(
            "sentence_unresolvable",
            {
                "sentence_id": sentence_id,
                "stage": sentence.stage,
                "round": sentence.round,
                "reason": "starved",
            },
        )

    # ------------------------------------------------------------------
    # Reads

    def _profile(self, annotator_id: str) -> AnnotatorProfile:
        profile = self.state.annotators.get(annotator_id)
        if profile is None:
            raise OrchestratorError(f"unknown annotator {annotator_id!r}")
        return profile

    def is_complete(self) -> bool:
        self._require_configured()
        return all(s.terminal for s in self.state.sentences.values())

    def emit_final_labels(self) -> FinalLabels:
        """Resolved labels plus the exclusion report; WRONG_TYPE never emitted."""
        self._require_configured()
        assignments: dict[str, str] = {}
        exclusions: list[dict] = []
        pending: list[str] = []
        for sentence_id, sentence in self.state.sentences.items():
            if sentence.resolution == RESOLVED:
                assert sentence.resolved_label != WRONG_TYPE
                assignments[sentence_id] = sentence.resolved_label
            elif sentence.resolution == WRONG_TYPE_EXHAUSTED:
                exclusions.append({"id": sentence_id, "reason": "wrong_type_exhausted"})
            elif sentence.resolution == UNRESOLVABLE:
                exclusions.append({"id": sentence_id, "reason": sentence.reason})
            else:
                pending.append(sentence_id)
        return FinalLabels(assignments, exclusions, pending)

    def suspensions(self) -> list[dict]:
        self._require_configured()
        rows = []
        for annotator_id in sorted(self.state.annotators):
            profile = self.state.annotators[annotator_id]
            for cluster in sorted(profile.status):
                if profile.status[cluster] == SUSPENDED:
                    stats = profile.stats_for(cluster)
                    rows.append(
                        {
                            "annotator_id": annotator_id,
                            "cluster": cluster,
                            "correct": stats.correct,
                            "seen": stats.seen,
                        }
                    )
        return rows

    def progress(self) -> dict:
        """Campaign counters; the dashboard and the CLI both read from here."""
        self._require_configured()
        per_cluster: dict[str, dict] = {}
        rounds: dict[str, int] = {}
        for sentence in self.state.sentences.values():
            bucket = per_cluster.setdefault(
                sentence.cluster,
                {
                    "sentences": 0,
                    "resolved": 0,
                    "wrong_type_exhausted": 0,
                    "unresolvable": 0,
                    "pending": 0,
                },
            )
            bucket["sentences"] += 1
            if sentence.resolution == RESOLVED:
                bucket["resolved"] += 1
            elif sentence.resolution == WRONG_TYPE_EXHAUSTED:
                bucket["wrong_type_exhausted"] += 1
            elif sentence.resolution == UNRESOLVABLE:
                bucket["unresolvable"] += 1
            else:
                bucket["pending"] += 1
            rounds[str(sentence.round)] = rounds.get(str(sentence.round), 0) + 1
        hits_issued = len(self.state.hits)
        open_hits = sum(1 for h in self.state.hits.values() if h.status == OPEN)
        return {
            "sentences": len(self.state.sentences),
            "resolved": sum(b["resolved"] for b in per_cluster.values()),
            "wrong_type_exhausted": sum(
                b["wrong_type_exhausted"] for b in per_cluster.values()
            ),
            "unresolvable": sum(b["unresolvable"] for b in per_cluster.values()),
            "pending": sum(b["pending"] for b in per_cluster.values()),
            "hits_issued": hits_issued,
            "hits_open": open_hits,
            "cost_units": float(self.config.price * hits_issued),
            "suspensions": len(self.suspensions()),
            "round_distribution": {k: rounds[k] for k in sorted(rounds)},
            "per_cluster": {k: per_cluster[k] for k in sorted(per_cluster)},
        }
