"""Synthetic campaigns: parameterized worker pools driving the orchestrator.

Everything is deterministic under the config seed: sentence truths, worker
error draws, control placement, and claim order, so identical configs yield
byte-identical event logs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from crowdlabel.analytics import (
    UndefinedKappaError,
    fleiss_kappa,
    rating_matrix_from_states,
)
from crowdlabel.data import Instance
from crowdlabel.events import Event
from crowdlabel.orchestrator import (
    OPEN,
    RESOLVED,
    UNRESOLVED,
    UNRESOLVABLE,
    WRONG_TYPE_EXHAUSTED,
    CampaignConfig,
    Orchestrator,
)
from crowdlabel.quality import GateConfig, QualificationQuestion, expected_control_answer
from crowdlabel.taxonomy import (
    NO_RELATION,
    WRONG_TYPE,
    Taxonomy,
    synthetic_taxonomy,
)

CALIBRATED = "calibrated"
SPAMMER = "spammer"
PERFECTIONIST = "perfectionist"

UNIFORM = "uniform"
NEGATIVE_BIASED = "negative_biased"


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class WorkerModel:
    """One synthetic annotator.

    Calibrated workers answer correctly with probability ``accuracy`` and
    draw errors from the presented choices per the kernel; spammers answer
    uniformly at random; perfectionists never err.
    """

    worker_id: str
    kind: str
    accuracy: float = 0.9
    error_kernel: str = UNIFORM

    def __post_init__(self) -> None:
        if self.kind not in (CALIBRATED, SPAMMER, PERFECTIONIST):
            raise SimulationError(f"unknown worker kind {self.kind!r}")
        if not 0 <= self.accuracy <= 1:
            raise SimulationError("accuracy must lie in [0, 1]")
        if self.error_kernel not in (UNIFORM, NEGATIVE_BIASED):
            raise SimulationError(f"unknown error kernel {self.error_kernel!r}")

    def answer(self, rng: random.Random, correct: str, choices: Sequence[str]) -> str:
        if self.kind == PERFECTIONIST:
            return correct
        if self.kind == SPAMMER:
            return rng.choice(list(choices))
        if rng.random() < self.accuracy:
            return correct
        wrong = [c for c in choices if c != correct]
        if not wrong:
            return correct
        if self.error_kernel == NEGATIVE_BIASED and NO_RELATION in wrong:
            # Half the error mass on the negative label, echoing annotators
            # who default to "no relation" when unsure.
            if rng.random() < 0.5:
                return NO_RELATION
            rest = [c for c in wrong if c != NO_RELATION] or [NO_RELATION]
            return rng.choice(rest)
        return rng.choice(wrong)


@dataclass(frozen=True)
class WorkerShare:
    """One slice of the worker population; fractions must sum to 1."""

    kind: str
    fraction: float
    accuracy: float = 0.9
    error_kernel: str = UNIFORM


def make_workers(count: int, mix: Sequence[WorkerShare]) -> list[WorkerModel]:
    """Allocate ``count`` workers across the mix, largest remainders first."""
    if count < 1:
        raise SimulationError("worker count must be positive")
    total = sum(share.fraction for share in mix)
    if abs(total - 1.0) > 1e-9:
        raise SimulationError(f"population fractions sum to {total}, expected 1")
    raw = [share.fraction * count for share in mix]
    counts = [int(x) for x in raw]
    remainder = count - sum(counts)
    order = sorted(
        range(len(mix)), key=lambda i: (-(raw[i] - counts[i]), i)
    )
    for i in order[:remainder]:
        counts[i] += 1
    workers = []
    for share, n in zip(mix, counts):
        for _ in range(n):
            workers.append(
                WorkerModel(
                    worker_id=f"w{len(workers):03d}",
                    kind=share.kind,
                    accuracy=share.accuracy,
                    error_kernel=share.error_kernel,
                )
            )
    return workers


@dataclass(frozen=True)
class SimulationConfig:
    sentence_count: int = 200
    worker_count: int = 10
    mix: tuple[WorkerShare, ...] = (
        WorkerShare(CALIBRATED, 0.8, accuracy=0.9),
        WorkerShare(SPAMMER, 0.2),
    )
    seed: int = 0
    cluster_size: int = 9
    max_subset_size: int = 9
    wrong_type_fraction: float = 0.05
    no_relation_fraction: float = 0.15
    control_pool_size: int = 120
    control_wrong_type_fraction: float = 0.2
    gate: GateConfig = GateConfig()
    price: Fraction = Fraction(15, 100)
    max_rounds: int = 4

    def __post_init__(self) -> None:
        if self.sentence_count < 1:
            raise SimulationError("sentence_count must be positive")
        if not 0 <= self.wrong_type_fraction <= 1:
            raise SimulationError("wrong_type_fraction must lie in [0, 1]")
        if self.control_pool_size < self.max_subset_size:
            raise SimulationError("control pool too small to pad HITs")
        make_workers(self.worker_count, self.mix)  # validates the mix


@dataclass(frozen=True)
class SimulationReport:
    sentence_count: int
    accuracy: float
    correct: int
    kappa: float | None
    agreement: float | None
    hits_issued: int
    cost_units: float
    suspensions: int
    resolved: int
    wrong_type_exhausted: int
    unresolvable: int
    starved: int
    stage_counts: Mapping[str, int]
    round_counts: Mapping[str, int]
    wrong_type_resolutions: int

    def to_record(self) -> dict:
        return {
            "sentence_count": self.sentence_count,
            "accuracy": self.accuracy,
            "correct": self.correct,
            "kappa": self.kappa,
            "agreement": self.agreement,
            "hits_issued": self.hits_issued,
            "cost_units": self.cost_units,
            "suspensions": self.suspensions,
            "resolved": self.resolved,
            "wrong_type_exhausted": self.wrong_type_exhausted,
            "unresolvable": self.unresolvable,
            "starved": self.starved,
            "stage_counts": dict(self.stage_counts),
            "round_counts": dict(self.round_counts),
            "wrong_type_resolutions": self.wrong_type_resolutions,
        }


def _synthetic_instance(instance_id: str, pair: tuple[str, str], rng: random.Random) -> Instance:
    length = rng.randint(6, 12)
    tokens = tuple(f"tok{i}" for i in range(length))
    subj_start = rng.randrange(0, length - 3)
    obj_start = rng.randrange(subj_start + 1, length - 1)
    return Instance(
        id=instance_id,
        tokens=tokens,
        subj_span=(subj_start, subj_start + 1),
        obj_span=(obj_start, obj_start + 1),
        subj_type=pair[0],
        obj_type=pair[1],
    )


def _sample_truth(
    rng: random.Random,
    positives: Sequence[str],
    wrong_type_fraction: float,
    no_relation_fraction: float,
) -> str:
    roll = rng.random()
    if roll < wrong_type_fraction:
        return WRONG_TYPE
    if roll < wrong_type_fraction + no_relation_fraction:
        return NO_RELATION
    return rng.choice(list(positives))


class Simulation:
    """One campaign: a worker pool annotating synthetic sentences to completion."""

    def __init__(
        self,
        config: SimulationConfig,
        sink: Callable[[Event], None] | None = None,
        taxonomy: Taxonomy | None = None,
    ) -> None:
        self.config = config
        self.taxonomy = taxonomy or synthetic_taxonomy(
            config.cluster_size, max_subset_size=config.max_subset_size
        )
        if len(self.taxonomy.clusters) != 1:
            raise SimulationError("simulation expects a single-cluster taxonomy")
        self.cluster = self.taxonomy.clusters[0]
        self.pair = self.cluster.pairs[0]
        self.workers = make_workers(config.worker_count, config.mix)
        self.truths: dict[str, str] = {}
        self.orchestrator = Orchestrator(sink=sink)
        self._worker_rngs = {
            w.worker_id: random.Random(f"{config.seed}:worker:{w.worker_id}")
            for w in self.workers
        }
        self._wrong_type_resolutions = 0

    # ------------------------------------------------------------------

    def setup(self) -> None:
        config = self.config
        orch = self.orchestrator
        orch.configure(
            self.taxonomy,
            CampaignConfig(
                seed=config.seed,
                price=config.price,
                gate=config.gate,
                max_rounds=config.max_rounds,
            ),
        )
        rng = random.Random(f"{config.seed}:setup")
        positives = self.cluster.merged_relations

        questions = []
        for i in range(5):
            instance = _synthetic_instance(f"q{i:03d}", self.pair, rng)
            answer = rng.choice(list(self.cluster.stage_choices(0)))
            questions.append(
                QualificationQuestion(instance, self.cluster.stage_choices(0), answer)
            )
        orch.add_qualification_test(self.cluster.name, questions)

        for worker in self.workers:
            orch.register_annotator(worker.worker_id, 1000, Fraction(99, 100))
            # Every simulated worker games the entry test with deliberate
            # effort, including spammers; the gate must catch them later.
            answers = {q.instance.id: q.correct for q in questions}
            orch.grade_qualification_submission(
                worker.worker_id, self.cluster.name, answers
            )

        for i in range(config.control_pool_size):
            instance = _synthetic_instance(f"c{i:04d}", self.pair, rng)
            if rng.random() < config.control_wrong_type_fraction:
                truth = WRONG_TYPE
            elif rng.random() < config.no_relation_fraction:
                truth = NO_RELATION
            else:
                truth = rng.choice(list(positives))
            self.truths[instance.id] = truth
            orch.add_control(instance, truth)

        for i in range(config.sentence_count):
            instance = _synthetic_instance(f"s{i:05d}", self.pair, rng)
            truth = _sample_truth(
                rng,
                positives,
                config.wrong_type_fraction,
                config.no_relation_fraction,
            )
            self.truths[instance.id] = truth
            orch.enqueue_sentence(instance)

    # ------------------------------------------------------------------

    def _answer_hit(self, worker: WorkerModel, hit) -> None:
        orch = self.orchestrator
        rng = self._worker_rngs[worker.worker_id]
        choices = self.taxonomy.cluster_named(hit.cluster).stage_choices(hit.stage)
        answers = {}
        for slot in hit.slots:
            truth = self.truths[slot.sentence_id]
            correct = expected_control_answer(truth, choices)
            answers[slot.sentence_id] = worker.answer(rng, correct, choices)
        orch.ingest_response(
            hit.hit_id,
            worker.worker_id,
            answers,
            idempotency_key=f"sim:{hit.hit_id}:{worker.worker_id}",
        )

    def _run_workers(self) -> bool:
        """Round-robin claims until nobody can take anything; True if any did."""
        orch = self.orchestrator
        any_work = False
        while True:
            claimed = False
            for worker in self.workers:
                hit = orch.claim_next_hit(worker.worker_id)
                if hit is None:
                    continue
                self._answer_hit(worker, hit)
                claimed = True
                any_work = True
            if not claimed:
                return any_work

    def _open_unclaimed(self) -> list:
        return [
            h
            for h in self.orchestrator.state.hits.values()
            if h.status == OPEN and h.claimed_by is None
        ]

    def run(self) -> SimulationReport:
        self.setup()
        orch = self.orchestrator
        while not orch.is_complete():
            orch.issue_wave()
            if self._run_workers():
                continue
            # Nothing claimable: batching may have bundled sentences with
            # annotators' leftovers. Rebatch each stuck sentence alone.
            for hit in self._open_unclaimed():
                orch.expire_hit(hit.hit_id, "unclaimable")
            outstanding = orch._outstanding()
            stuck = [
                sentence_id
                for sentence_id, sentence in orch.state.sentences.items()
                if orch.needed_responses(sentence, outstanding.get(sentence_id, 0)) > 0
            ]
            for sentence_id in stuck:
                sentence = orch.state.sentences[sentence_id]
                orch.build_hits([sentence_id], sentence.cluster, sentence.stage)
            if self._run_workers():
                continue
            # Still nothing: every remaining sentence has exhausted the pool.
            for hit in self._open_unclaimed():
                orch.expire_hit(hit.hit_id, "starved")
            for sentence_id, sentence in list(orch.state.sentences.items()):
                if sentence.resolution == UNRESOLVED:
                    orch.mark_starved(sentence_id)
        return self.report()

    # ------------------------------------------------------------------

    def report(self) -> SimulationReport:
        orch = self.orchestrator
        state = orch.state
        correct = 0
        resolved = exhausted = unresolvable = starved = 0
        stage_counts: dict[str, int] = {}
        round_counts: dict[str, int] = {}
        for sentence_id, sentence in state.sentences.items():
            truth = self.truths[sentence_id]
            if sentence.resolution == RESOLVED:
                resolved += 1
                if sentence.resolved_label == truth:
                    correct += 1
            elif sentence.resolution == WRONG_TYPE_EXHAUSTED:
                exhausted += 1
                if truth == WRONG_TYPE:
                    correct += 1
            elif sentence.resolution == UNRESOLVABLE:
                if sentence.reason == "starved":
                    starved += 1
                else:
                    unresolvable += 1
            stage_counts[str(sentence.stage)] = stage_counts.get(str(sentence.stage), 0) + 1
            round_counts[str(sentence.round)] = round_counts.get(str(sentence.round), 0) + 1
        try:
            matrix = rating_matrix_from_states(state.sentences.values())
            kappa = fleiss_kappa(matrix)
            from crowdlabel.analytics import agreement_rate

            agreement = agreement_rate(matrix)
        except (UndefinedKappaError, ValueError):
            kappa = None
            agreement = None
        hits_issued = len(state.hits)
        wrong_type_resolutions = sum(
            1 for e in orch.events if e.kind == "sentence_resolved" and e.payload["label"] == WRONG_TYPE
        )
        return SimulationReport(
            sentence_count=len(state.sentences),
            accuracy=correct / len(state.sentences) if state.sentences else 0.0,
            correct=correct,
            kappa=kappa,
            agreement=agreement,
            hits_issued=hits_issued,
            cost_units=float(orch.config.price * hits_issued),
            suspensions=len(orch.suspensions()),
            resolved=resolved,
            wrong_type_exhausted=exhausted,
            unresolvable=unresolvable,
            starved=starved,
            stage_counts={k: stage_counts[k] for k in sorted(stage_counts)},
            round_counts={k: round_counts[k] for k in sorted(round_counts)},
            wrong_type_resolutions=wrong_type_resolutions,
        )


def run(
    config: SimulationConfig,
    sink: Callable[[Event], None] | None = None,
    taxonomy: Taxonomy | None = None,
) -> tuple[SimulationReport, Simulation]:
    """Run one campaign to completion; returns the report and the simulation."""
    simulation = Simulation(config, sink=sink, taxonomy=taxonomy)
    report = simulation.run()
    return report, simulation


# ----------------------------------------------------------------------
# Cost comparison


@dataclass(frozen=True)
class CostComparison:
    """Task counts under per-type-pair enumeration vs super-cluster grouping.

    A task is one candidate-set annotation pass over a sentence. Naive
    enumeration retries a wrong-typed sentence against every type pair in
    the worst case; grouping retries at most once per cluster stage.
    """

    sentences: int
    wrong_typed: int
    baseline_tasks: int
    naive_tasks: int
    clustered_tasks: int
    worst_case_bound: Fraction
    naive_overhead: float
    clustered_overhead: float

    @property
    def realized_ratio(self) -> float:
        return self.naive_tasks / self.clustered_tasks

    def to_record(self) -> dict:
        return {
            "sentences": self.sentences,
            "wrong_typed": self.wrong_typed,
            "baseline_tasks": self.baseline_tasks,
            "naive_tasks": self.naive_tasks,
            "clustered_tasks": self.clustered_tasks,
            "worst_case_bound": float(self.worst_case_bound),
            "naive_overhead": self.naive_overhead,
            "clustered_overhead": self.clustered_overhead,
            "realized_ratio": self.realized_ratio,
        }


def naive_vs_clustered_cost(
    taxonomy: Taxonomy,
    sentences: int = 20000,
    wrong_type_fraction: float = 0.05,
    seed: int = 0,
) -> CostComparison:
    """Count annotation tasks under both strategies on sampled sentences.

    Correctly typed sentences cost one task either way; a wrong-typed
    sentence costs every type pair's task naively, but only its cluster's
    stage count when grouped.
    """
    if not 0 <= wrong_type_fraction <= 1:
        raise SimulationError("wrong_type_fraction must lie in [0, 1]")
    rng = random.Random(f"{seed}:cost")
    pairs = list(taxonomy.type_pairs)
    pair_count = len(pairs)
    naive = clustered = wrong = 0
    for _ in range(sentences):
        pair = pairs[rng.randrange(pair_count)]
        if rng.random() < wrong_type_fraction:
            wrong += 1
            naive += pair_count
            clustered += taxonomy.super_cluster_of(*pair).stage_count
        else:
            naive += 1
            clustered += 1
    return CostComparison(
        sentences=sentences,
        wrong_typed=wrong,
        baseline_tasks=sentences,
        naive_tasks=naive,
        clustered_tasks=clustered,
        worst_case_bound=Fraction(pair_count, len(taxonomy.clusters)),
        naive_overhead=(naive - sentences) / sentences,
        clustered_overhead=(clustered - sentences) / sentences,
    )
