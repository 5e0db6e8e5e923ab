"""Campaign orchestrator: adjudication, HIT lifecycle, gating, replay."""

from fractions import Fraction

import pytest

from conftest import make_instance
from crowdlabel.events import LogCorruptionError
from crowdlabel.orchestrator import (
    COMPLETED,
    EXPIRED,
    OPEN,
    REJECT_GATE,
    REJECT_SETTLED,
    REJECT_STALE,
    RESOLVED,
    UNRESOLVABLE,
    UNRESOLVED,
    WRONG_TYPE_EXHAUSTED,
    CampaignConfig,
    Orchestrator,
    OrchestratorError,
    canonical_state,
    required_responses,
    settle,
    state_digest,
)
from crowdlabel.quality import (
    GateConfig,
    QualificationQuestion,
    expected_control_answer,
)
from crowdlabel.taxonomy import NO_RELATION, WRONG_TYPE, synthetic_taxonomy

WORKERS = ("alice", "bob", "carol", "dave", "erin")


def fresh(
    label_count=5,
    workers=WORKERS,
    control_count=8,
    sentence_count=8,
    seed=0,
    gate=None,
    sink=None,
):
    """A configured campaign with qualified workers, controls, and sentences."""
    taxonomy = synthetic_taxonomy(label_count)
    orch = Orchestrator(sink=sink)
    orch.configure(taxonomy, CampaignConfig(seed=seed, gate=gate or GateConfig()))
    cluster = taxonomy.clusters[0]
    choices = cluster.stage_choices(0)
    orch.add_qualification_test(
        cluster.name, [QualificationQuestion(make_instance("qual-q0"), choices, choices[0])]
    )
    for worker in workers:
        orch.register_annotator(worker, 600, Fraction(96, 100))
        orch.grade_qualification_submission(worker, cluster.name, {"qual-q0": choices[0]})
    for i in range(control_count):
        orch.add_control(make_instance(f"ctl-{i:02d}"), "PERSON:REL_00")
    for i in range(sentence_count):
        orch.enqueue_sentence(make_instance(f"s-{i:02d}"))
    return orch, cluster


def control_answers(orch, hit):
    answers = {}
    choices = orch.taxonomy.cluster_named(hit.cluster).stage_choices(hit.stage)
    for slot in hit.slots:
        if slot.is_control:
            truth = orch.state.controls.lookup(slot.sentence_id).truth
            answers[slot.sentence_id] = expected_control_answer(truth, choices)
    return answers


def full_answers(orch, hit, label_for):
    """Correct control answers plus label_for(sentence_id) on task slots."""
    answers = control_answers(orch, hit)
    for sentence_id in hit.pending_ids():
        answers[sentence_id] = label_for(sentence_id)
    return answers


def drive(orch, workers, label_for, max_cycles=60):
    """Issue waves and have workers claim and answer until nothing moves."""
    for _ in range(max_cycles):
        if orch.is_complete():
            return
        issued = orch.issue_wave()
        moved = False
        for worker in workers:
            while True:
                hit = orch.claim_next_hit(worker)
                if hit is None:
                    break
                orch.ingest_response(
                    hit.hit_id, worker, full_answers(orch, hit, lambda s: label_for(worker, s))
                )
                moved = True
        if not issued and not moved:
            return
    raise AssertionError("campaign did not settle within the cycle budget")


class TestAdjudication:
    def test_required_responses_grows_by_one_per_round(self):
        assert [required_responses(r) for r in (1, 2, 3, 4)] == [2, 3, 4, 5]

    def test_no_responses_is_unresolved_round_one(self):
        assert settle([]) == (UNRESOLVED, 1, None, None)

    def test_single_response_cannot_resolve(self):
        assert settle(["A"]) == (UNRESOLVED, 1, None, None)

    def test_two_agreeing_resolve_in_round_one(self):
        assert settle(["A", "A"]) == (RESOLVED, 1, "A", None)

    def test_round_one_split_burns_the_round(self):
        assert settle(["A", "B"]) == (UNRESOLVED, 2, None, None)

    def test_tiebreaker_response_resolves_round_two(self):
        assert settle(["A", "B", "A"]) == (RESOLVED, 2, "A", None)

    def test_second_disagreement_pushes_to_round_three(self):
        assert settle(["A", "B", "C", "B"]) == (RESOLVED, 3, "B", None)

    def test_pair_formed_by_fifth_response_resolves_round_four(self):
        assert settle(["A", "B", "C", "D", "A"]) == (RESOLVED, 4, "A", None)

    def test_five_distinct_labels_are_unresolvable(self):
        assert settle(["A", "B", "C", "D", "E"]) == (
            UNRESOLVABLE,
            4,
            None,
            "no_plurality",
        )

    def test_resolution_uses_earliest_winning_prefix(self):
        # the trailing disagreement arrives after round one already closed
        assert settle(["A", "A", "B"]) == (RESOLVED, 1, "A", None)

    def test_first_completed_pair_wins_on_prefix_order(self):
        # adjudication replays arrival order, so A's pair resolves round two
        # before B's pair can even form
        assert settle(["A", "B", "A", "B"]) == (RESOLVED, 2, "A", None)

    def test_max_rounds_caps_adjudication(self):
        assert settle(["A", "B", "C"], max_rounds=2) == (
            UNRESOLVABLE,
            2,
            None,
            "no_plurality",
        )


class TestHitConstruction:
    def test_eight_sentences_make_two_full_hits(self):
        orch, cluster = fresh(sentence_count=8)
        hits = orch.build_hits([f"s-{i:02d}" for i in range(8)], cluster.name, 0)
        assert [h.hit_id for h in hits] == ["h000000", "h000001"]
        for hit in hits:
            assert len(hit.slots) == 5
            assert len(hit.pending_ids()) == 4
            assert len(hit.control_ids()) == 1
            assert hit.status == OPEN
            assert hit.price == Fraction(15, 100)

    def test_nine_sentences_leave_a_short_final_chunk(self):
        orch, cluster = fresh(sentence_count=9, control_count=10)
        hits = orch.build_hits([f"s-{i:02d}" for i in range(9)], cluster.name, 0)
        assert [len(h.pending_ids()) for h in hits] == [4, 4, 1]
        assert [len(h.control_ids()) for h in hits] == [1, 1, 4]

    def test_single_sentence_hit_is_padded_with_controls(self):
        orch, cluster = fresh(sentence_count=1)
        (hit,) = orch.build_hits(["s-00"], cluster.name, 0)
        assert len(hit.slots) == 5
        assert hit.pending_ids() == ["s-00"]
        controls = hit.control_ids()
        assert len(controls) == 4
        assert len(set(controls)) == 4

    def test_empty_batch_builds_nothing(self):
        orch, cluster = fresh()
        assert orch.build_hits([], cluster.name, 0) == []

    def test_duplicate_sentence_in_batch_rejected(self):
        orch, cluster = fresh()
        with pytest.raises(OrchestratorError, match="duplicate"):
            orch.build_hits(["s-00", "s-00"], cluster.name, 0)

    def test_unknown_sentence_rejected(self):
        orch, cluster = fresh()
        with pytest.raises(OrchestratorError, match="unknown sentence"):
            orch.build_hits(["nope"], cluster.name, 0)

    def test_stage_mismatch_rejected(self):
        orch, cluster = fresh(label_count=14)
        with pytest.raises(OrchestratorError, match="not pending"):
            orch.build_hits(["s-00"], cluster.name, 1)

    def test_stage_out_of_range_rejected(self):
        orch, cluster = fresh()
        with pytest.raises(OrchestratorError, match="out of range"):
            orch.build_hits(["s-00"], cluster.name, 5)

    def test_empty_control_pool_rejected(self):
        orch, cluster = fresh(control_count=0)
        with pytest.raises(OrchestratorError, match="empty control pool"):
            orch.build_hits(["s-00"], cluster.name, 0)

    def test_pool_too_small_to_pad_rejected(self):
        orch, cluster = fresh(control_count=3)
        with pytest.raises(OrchestratorError, match="too small"):
            orch.build_hits(["s-00"], cluster.name, 0)

    def test_control_position_varies_across_hits(self):
        orch, cluster = fresh(sentence_count=12, control_count=8)
        positions = set()
        for i in range(12):
            (hit,) = orch.build_hits([f"s-{i:02d}"], cluster.name, 0)
            positions.add(hit.slots.index(next(s for s in hit.slots if not s.is_control)))
        assert len(positions) >= 2

    def test_slot_layout_is_seed_deterministic(self):
        def layout(seed):
            orch, cluster = fresh(seed=seed, sentence_count=8)
            hits = orch.build_hits([f"s-{i:02d}" for i in range(8)], cluster.name, 0)
            return [[(s.sentence_id, s.is_control) for s in h.slots] for h in hits]

        assert layout(0) == layout(0)
        assert layout(0) != layout(1)


class TestWaves:
    def test_quiet_campaign_uses_two_waves_per_four_sentences(self):
        orch, cluster = fresh(sentence_count=10)
        # round one needs two responses, so two waves go out back to back,
        # each covering every sentence at most once
        wave1 = orch.issue_wave()
        assert len(wave1) == 3  # ceil(10 / 4)
        wave2 = orch.issue_wave()
        assert len(wave2) == 3
        # now every sentence has two outstanding slots; nothing more to issue
        assert orch.issue_wave() == []
        for hit in wave1:
            orch.ingest_response(hit.hit_id, "alice", full_answers(orch, hit, lambda s: "PERSON:REL_01"))
        for hit in wave2:
            orch.ingest_response(hit.hit_id, "bob", full_answers(orch, hit, lambda s: "PERSON:REL_01"))
        assert orch.issue_wave() == []
        assert orch.is_complete()
        assert len(orch.state.hits) == 6  # 2 x ceil(10 / 4)
        for sentence in orch.state.sentences.values():
            assert sentence.resolution == RESOLVED
            assert sentence.round == 1
            assert len(sentence.responses) == 2

    def test_driver_resolves_unanimous_campaign(self):
        orch, _ = fresh(sentence_count=10)
        drive(orch, WORKERS, lambda w, s: "PERSON:REL_02")
        assert orch.is_complete()
        final = orch.emit_final_labels()
        assert final.assignments == {f"s-{i:02d}": "PERSON:REL_02" for i in range(10)}
        assert final.exclusions == []
        assert final.pending == []

    def test_needed_responses_zero_once_settled(self):
        orch, _ = fresh(sentence_count=4)
        drive(orch, WORKERS, lambda w, s: NO_RELATION)
        sentence = orch.state.sentences["s-00"]
        assert orch.needed_responses(sentence, 0) == 0


class TestClaiming:
    def test_claim_assigns_and_reclaim_is_idempotent(self):
        orch, _ = fresh()
        orch.issue_wave()
        first = orch.claim_next_hit("alice")
        assert first is not None
        assert first.claimed_by == "alice"
        again = orch.claim_next_hit("alice")
        assert again.hit_id == first.hit_id

    def test_two_workers_get_distinct_hits(self):
        orch, _ = fresh(sentence_count=8)
        orch.issue_wave()
        a = orch.claim_next_hit("alice")
        b = orch.claim_next_hit("bob")
        assert a.hit_id != b.hit_id

    def test_unknown_annotator_cannot_claim(self):
        orch, _ = fresh()
        orch.issue_wave()
        with pytest.raises(OrchestratorError, match="unknown annotator"):
            orch.claim_next_hit("mallory")

    def test_unqualified_annotator_gets_nothing(self):
        orch, _ = fresh()
        orch.register_annotator("frank", 700, Fraction(97, 100))
        orch.issue_wave()
        assert orch.claim_next_hit("frank") is None

    def test_prior_response_blocks_reclaim_at_same_stage(self):
        orch, _ = fresh(sentence_count=4)
        (hit1,) = orch.issue_wave()
        orch.claim_next_hit("alice")
        orch.ingest_response(hit1.hit_id, "alice", full_answers(orch, hit1, lambda s: NO_RELATION))
        (hit2,) = orch.issue_wave()
        assert not orch.can_claim("alice", hit2)
        assert orch.claim_next_hit("alice") is None
        assert orch.claim_next_hit("bob").hit_id == hit2.hit_id

    def test_expiry_releases_coverage_for_reissue(self):
        orch, _ = fresh(sentence_count=4)
        (hit1,) = orch.issue_wave()
        (hit2,) = orch.issue_wave()
        assert orch.issue_wave() == []
        assert orch.claim_next_hit("alice").hit_id == hit1.hit_id
        orch.expire_hit(hit1.hit_id)
        assert orch.state.hits[hit1.hit_id].status == EXPIRED
        assert orch.state.hits[hit1.hit_id].claimed_by is None
        (reissued,) = orch.issue_wave()
        assert reissued.hit_id not in (hit1.hit_id, hit2.hit_id)
        assert set(reissued.pending_ids()) == set(hit1.pending_ids())

    def test_expiring_a_completed_hit_is_an_error(self):
        orch, _ = fresh(sentence_count=4)
        (hit,) = orch.issue_wave()
        orch.ingest_response(hit.hit_id, "alice", full_answers(orch, hit, lambda s: NO_RELATION))
        with pytest.raises(OrchestratorError, match="not open"):
            orch.expire_hit(hit.hit_id)
        with pytest.raises(OrchestratorError, match="unknown hit"):
            orch.expire_hit("h999999")

    def test_submission_on_anothers_claim_is_rejected(self):
        orch, _ = fresh(sentence_count=4)
        (hit,) = orch.issue_wave()
        orch.claim_next_hit("alice")
        with pytest.raises(OrchestratorError, match="claimed by another"):
            orch.ingest_response(hit.hit_id, "bob", full_answers(orch, hit, lambda s: NO_RELATION))


class TestIngestValidation:
    def test_answers_must_cover_every_slot(self):
        orch, _ = fresh(sentence_count=4)
        (hit,) = orch.issue_wave()
        answers = full_answers(orch, hit, lambda s: NO_RELATION)
        short = dict(list(answers.items())[:-1])
        with pytest.raises(OrchestratorError, match="cover every slot"):
            orch.ingest_response(hit.hit_id, "alice", short)
        extra = dict(answers, stray=NO_RELATION)
        with pytest.raises(OrchestratorError, match="cover every slot"):
            orch.ingest_response(hit.hit_id, "alice", extra)

    def test_label_outside_stage_choices_rejected(self):
        orch, _ = fresh(sentence_count=4)
        (hit,) = orch.issue_wave()
        answers = full_answers(orch, hit, lambda s: NO_RELATION)
        answers[hit.pending_ids()[0]] = "PERSON:REL_99"
        with pytest.raises(OrchestratorError, match="outside the stage candidate set"):
            orch.ingest_response(hit.hit_id, "alice", answers)

    def test_escape_labels_are_always_offered(self):
        orch, _ = fresh(sentence_count=4)
        (hit,) = orch.issue_wave()
        answers = full_answers(orch, hit, lambda s: WRONG_TYPE)
        result = orch.ingest_response(hit.hit_id, "alice", answers)
        assert set(result.accepted) == set(hit.pending_ids())

    def test_double_labeling_a_sentence_at_one_stage_rejected(self):
        orch, _ = fresh(sentence_count=4)
        (hit1,) = orch.issue_wave()
        orch.ingest_response(hit1.hit_id, "alice", full_answers(orch, hit1, lambda s: NO_RELATION))
        (hit2,) = orch.issue_wave()
        with pytest.raises(OrchestratorError, match="already labeled"):
            orch.ingest_response(hit2.hit_id, "alice", full_answers(orch, hit2, lambda s: NO_RELATION))

    def test_unqualified_submission_rejected(self):
        orch, _ = fresh(sentence_count=4)
        orch.register_annotator("frank", 700, Fraction(97, 100))
        (hit,) = orch.issue_wave()
        with pytest.raises(OrchestratorError, match="not qualified"):
            orch.ingest_response(hit.hit_id, "frank", full_answers(orch, hit, lambda s: NO_RELATION))

    def test_completed_hit_cannot_be_answered_again(self):
        orch, _ = fresh(sentence_count=4)
        (hit,) = orch.issue_wave()
        answers = full_answers(orch, hit, lambda s: NO_RELATION)
        orch.ingest_response(hit.hit_id, "alice", answers)
        assert orch.state.hits[hit.hit_id].status == COMPLETED
        with pytest.raises(OrchestratorError, match="not open"):
            orch.ingest_response(hit.hit_id, "bob", answers)

    def test_unknown_hit_rejected(self):
        orch, _ = fresh()
        with pytest.raises(OrchestratorError, match="unknown hit"):
            orch.ingest_response("h000099", "alice", {})

    def test_thin_task_history_blocks_qualification(self):
        orch, cluster = fresh()
        orch.register_annotator("newbie", 100, Fraction(99, 100))
        choices = cluster.stage_choices(0)
        with pytest.raises(OrchestratorError, match="prerequisites"):
            orch.grade_qualification_submission("newbie", cluster.name, {"qual-q0": choices[0]})


class TestIngestResults:
    def test_result_counts_and_sanitized_public_payload(self):
        orch, _ = fresh(sentence_count=4)
        (hit,) = orch.issue_wave()
        result = orch.ingest_response(hit.hit_id, "alice", full_answers(orch, hit, lambda s: NO_RELATION))
        assert result.controls_graded == 1
        assert result.controls_correct == 1
        assert set(result.accepted) == set(hit.pending_ids())
        assert result.rejected == ()
        assert result.suspended is False
        assert result.replayed is False
        # the public payload never distinguishes control slots from task slots
        assert result.public == {"hit_id": hit.hit_id, "status": "recorded", "suspended": False}

    def test_idempotent_replay_returns_stored_result_without_events(self):
        orch, _ = fresh(sentence_count=4)
        (hit,) = orch.issue_wave()
        answers = full_answers(orch, hit, lambda s: NO_RELATION)
        first = orch.ingest_response(hit.hit_id, "alice", answers, idempotency_key="k-1")
        seq = orch.last_seq
        count = len(orch.events)
        replayed = orch.ingest_response(hit.hit_id, "alice", answers, idempotency_key="k-1")
        assert replayed.replayed is True
        assert replayed.public == first.public
        assert orch.last_seq == seq
        assert len(orch.events) == count

    def test_idempotency_keys_survive_log_replay(self):
        events = []
        orch, _ = fresh(sentence_count=4, sink=events.append)
        (hit,) = orch.issue_wave()
        orch.ingest_response(hit.hit_id, "alice", full_answers(orch, hit, lambda s: NO_RELATION), idempotency_key="k-9")
        restored = Orchestrator.replay(events)
        result = restored.ingest_response(hit.hit_id, "alice", {}, idempotency_key="k-9")
        assert result.replayed is True
        assert result.public["status"] == "recorded"


class TestGateCascade:
    def wrong_answers(self, orch, hit, task_label=NO_RELATION):
        """Deliberately miss every control; tasks get task_label."""
        choices = orch.taxonomy.cluster_named(hit.cluster).stage_choices(hit.stage)
        answers = {}
        for slot in hit.slots:
            if slot.is_control:
                truth = orch.state.controls.lookup(slot.sentence_id).truth
                expected = expected_control_answer(truth, choices)
                answers[slot.sentence_id] = next(c for c in choices if c != expected)
            else:
                answers[slot.sentence_id] = task_label
        return answers

    def test_fifth_wrong_control_suspends_mid_hit(self):
        orch, cluster = fresh(sentence_count=2)
        (h1,) = orch.build_hits(["s-00"], cluster.name, 0)
        r1 = orch.ingest_response(h1.hit_id, "erin", self.wrong_answers(orch, h1))
        # four misses stay under the minimum sample
        assert r1.suspended is False
        assert r1.accepted == ("s-00",)
        (h2,) = orch.build_hits(["s-01"], cluster.name, 0)
        r2 = orch.ingest_response(h2.hit_id, "erin", self.wrong_answers(orch, h2))
        assert r2.suspended is True
        assert r2.controls_graded == 4
        assert r2.rejected == (("s-01", REJECT_GATE),)
        profile = orch.state.annotators["erin"]
        assert profile.cluster_status(cluster.name) == "suspended"
        stats = profile.stats_for(cluster.name)
        assert (stats.correct, stats.seen) == (0, 8)

    def test_suspension_invalidates_history_and_reopens_sentences(self):
        orch, cluster = fresh(sentence_count=4)
        (hit1,) = orch.issue_wave()
        orch.ingest_response(hit1.hit_id, "erin", full_answers(orch, hit1, lambda s: "PERSON:REL_03"))
        (hit2,) = orch.issue_wave()
        orch.ingest_response(hit2.hit_id, "alice", full_answers(orch, hit2, lambda s: "PERSON:REL_03"))
        assert all(s.resolution == RESOLVED for s in orch.state.sentences.values())

        for i, sid in enumerate(("x-0", "x-1")):
            orch.enqueue_sentence(make_instance(sid))
            (extra,) = orch.build_hits([sid], cluster.name, 0)
            result = orch.ingest_response(extra.hit_id, "erin", self.wrong_answers(orch, extra))
        assert result.suspended is True

        kinds = [e.kind for e in orch.events]
        assert kinds.count("annotator_suspended") == 1
        invalidated = [e.payload for e in orch.events if e.kind == "response_invalidated"]
        assert {p["sentence_id"] for p in invalidated} >= {f"s-{i:02d}" for i in range(4)}
        assert all(p["annotator_id"] == "erin" for p in invalidated)
        assert "sentence_reopened" in kinds
        for i in range(4):
            sentence = orch.state.sentences[f"s-{i:02d}"]
            assert sentence.resolution == UNRESOLVED
            assert [r.annotator_id for r in sentence.responses] == ["alice"]

    def test_suspension_expires_other_held_hits(self):
        orch, cluster = fresh(sentence_count=4)
        (held,) = orch.issue_wave()
        orch.claim_next_hit("erin")
        orch.enqueue_sentence(make_instance("x-0"))
        orch.enqueue_sentence(make_instance("x-1"))
        (h1,) = orch.build_hits(["x-0"], cluster.name, 0)
        orch.ingest_response(h1.hit_id, "erin", self.wrong_answers(orch, h1))
        (h2,) = orch.build_hits(["x-1"], cluster.name, 0)
        orch.ingest_response(h2.hit_id, "erin", self.wrong_answers(orch, h2))
        expired = orch.state.hits[held.hit_id]
        assert expired.status == EXPIRED
        reasons = [e.payload["reason"] for e in orch.events if e.kind == "hit_expired"]
        assert "annotator_suspended" in reasons

    def test_suspended_annotator_cannot_claim_or_qualify(self):
        orch, cluster = fresh(sentence_count=2)
        (h1,) = orch.build_hits(["s-00"], cluster.name, 0)
        orch.ingest_response(h1.hit_id, "erin", self.wrong_answers(orch, h1))
        (h2,) = orch.build_hits(["s-01"], cluster.name, 0)
        orch.ingest_response(h2.hit_id, "erin", self.wrong_answers(orch, h2))
        orch.issue_wave()
        assert orch.claim_next_hit("erin") is None
        choices = cluster.stage_choices(0)
        with pytest.raises(OrchestratorError, match="suspended"):
            orch.grade_qualification_submission("erin", cluster.name, {"qual-q0": choices[0]})

    def test_disabled_gate_never_suspends(self):
        orch, cluster = fresh(sentence_count=2, gate=GateConfig(enabled=False))
        for sid in ("s-00", "s-01"):
            (hit,) = orch.build_hits([sid], cluster.name, 0)
            result = orch.ingest_response(hit.hit_id, "erin", self.wrong_answers(orch, hit))
        assert result.suspended is False
        assert orch.suspensions() == []

    def test_starved_sentences_survive_invalidation(self):
        orch, cluster = fresh(sentence_count=3)
        (h1,) = orch.build_hits(["s-00"], cluster.name, 0)
        orch.ingest_response(h1.hit_id, "erin", self.wrong_answers(orch, h1, task_label="PERSON:REL_02"))
        orch.mark_starved("s-00")
        starved = orch.state.sentences["s-00"]
        assert starved.resolution == UNRESOLVABLE
        assert starved.reason == "starved"
        (h2,) = orch.build_hits(["s-01"], cluster.name, 0)
        orch.ingest_response(h2.hit_id, "erin", self.wrong_answers(orch, h2))
        # the starved sentence keeps its record; no reopen happened for it
        assert orch.state.sentences["s-00"].resolution == UNRESOLVABLE
        assert not any(
            e.kind == "response_invalidated" and e.payload["sentence_id"] == "s-00"
            for e in orch.events
        )

    def test_controls_never_join_sentence_state(self):
        orch, _ = fresh(sentence_count=8)
        drive(orch, WORKERS, lambda w, s: "PERSON:REL_01")
        control_ids = {f"ctl-{i:02d}" for i in range(8)}
        assert control_ids.isdisjoint(orch.state.sentences)
        for event in orch.events:
            if event.kind == "response_accepted":
                assert event.payload["sentence_id"] not in control_ids

    def test_suspensions_report_rows(self):
        orch, cluster = fresh(sentence_count=2)
        for sid in ("s-00", "s-01"):
            (hit,) = orch.build_hits([sid], cluster.name, 0)
            orch.ingest_response(hit.hit_id, "erin", self.wrong_answers(orch, hit))
        rows = orch.suspensions()
        assert rows == [
            {"annotator_id": "erin", "cluster": cluster.name, "correct": 0, "seen": 8}
        ]


class TestWrongTypeFallback:
    def advance(self, orch, cluster, sentence_id, workers, label):
        """Two agreeing responses via consecutive single-sentence hits."""
        for worker in workers:
            stage = orch.state.sentences[sentence_id].stage
            (hit,) = orch.build_hits([sentence_id], cluster.name, stage)
            orch.ingest_response(hit.hit_id, worker, full_answers(orch, hit, lambda s: label))

    def test_wrong_type_plurality_advances_the_stage(self):
        orch, cluster = fresh(label_count=14, sentence_count=1)
        assert cluster.stage_count == 2
        self.advance(orch, cluster, "s-00", ("alice", "bob"), WRONG_TYPE)
        sentence = orch.state.sentences["s-00"]
        assert sentence.stage == 1
        assert sentence.resolution == UNRESOLVED
        assert sentence.round == 1
        assert sentence.responses == []
        kinds = [e.kind for e in orch.events]
        assert "sentence_resolved" in kinds and "stage_advanced" in kinds

    def test_wrong_type_at_final_stage_exhausts(self):
        orch, cluster = fresh(label_count=14, sentence_count=1)
        self.advance(orch, cluster, "s-00", ("alice", "bob"), WRONG_TYPE)
        self.advance(orch, cluster, "s-00", ("carol", "dave"), WRONG_TYPE)
        sentence = orch.state.sentences["s-00"]
        assert sentence.resolution == WRONG_TYPE_EXHAUSTED
        assert sentence.terminal
        final = orch.emit_final_labels()
        assert final.assignments == {}
        assert final.exclusions == [{"id": "s-00", "reason": "wrong_type_exhausted"}]

    def test_second_stage_can_still_resolve_to_a_label(self):
        orch, cluster = fresh(label_count=14, sentence_count=1)
        self.advance(orch, cluster, "s-00", ("alice", "bob"), WRONG_TYPE)
        label = cluster.stage_choices(1)[0]
        assert label not in cluster.stage_choices(0)
        self.advance(orch, cluster, "s-00", ("carol", "dave"), label)
        final = orch.emit_final_labels()
        assert final.assignments == {"s-00": label}
        assert WRONG_TYPE not in final.assignments.values()

    def test_stale_stage_submission_rejected_not_errored(self):
        orch, cluster = fresh(label_count=14, sentence_count=1)
        (stale,) = orch.build_hits(["s-00"], cluster.name, 0)
        self.advance(orch, cluster, "s-00", ("alice", "bob"), WRONG_TYPE)
        result = orch.ingest_response(
            stale.hit_id, "carol", full_answers(orch, stale, lambda s: NO_RELATION)
        )
        assert result.accepted == ()
        assert result.rejected == (("s-00", REJECT_STALE),)
        assert orch.state.sentences["s-00"].responses == []

    def test_settled_sentence_submission_rejected(self):
        orch, cluster = fresh(sentence_count=4)
        drive(orch, ("alice", "bob"), lambda w, s: "PERSON:REL_01")
        assert orch.is_complete()
        # settled sentences keep their stage, so a straggler HIT still builds
        (late,) = orch.build_hits([f"s-{i:02d}" for i in range(4)], cluster.name, 0)
        result = orch.ingest_response(late.hit_id, "carol", full_answers(orch, late, lambda s: NO_RELATION))
        assert result.accepted == ()
        assert {reason for _, reason in result.rejected} == {REJECT_SETTLED}
        for sentence in orch.state.sentences.values():
            assert sentence.resolved_label == "PERSON:REL_01"
            assert len(sentence.responses) == 2


class TestDisagreement:
    def test_full_disagreement_exhausts_rounds(self):
        orch, cluster = fresh(sentence_count=1)
        labels = [f"PERSON:REL_{i:02d}" for i in range(5)]
        for worker, label in zip(WORKERS, labels):
            (hit,) = orch.build_hits(["s-00"], cluster.name, 0)
            orch.ingest_response(hit.hit_id, worker, full_answers(orch, hit, lambda s: label))
        sentence = orch.state.sentences["s-00"]
        assert sentence.resolution == UNRESOLVABLE
        assert sentence.reason == "no_plurality"
        assert sentence.round == 4
        assert len(sentence.responses) == 5
        final = orch.emit_final_labels()
        assert final.exclusions == [{"id": "s-00", "reason": "no_plurality"}]

    def test_round_advances_are_logged(self):
        orch, cluster = fresh(sentence_count=1)
        for worker, label in zip(("alice", "bob", "carol"), ("PERSON:REL_00", "PERSON:REL_01", "PERSON:REL_01")):
            (hit,) = orch.build_hits(["s-00"], cluster.name, 0)
            orch.ingest_response(hit.hit_id, worker, full_answers(orch, hit, lambda s: label))
        sentence = orch.state.sentences["s-00"]
        assert sentence.resolution == RESOLVED
        assert sentence.resolved_label == "PERSON:REL_01"
        assert sentence.round == 2
        rounds = [e.payload["round"] for e in orch.events if e.kind == "round_advanced"]
        assert rounds == [2]

    def test_never_fewer_than_two_agreeing_responses(self):
        orch, cluster = fresh(sentence_count=6, seed=3)
        labels = ["PERSON:REL_00", "PERSON:REL_01"]
        drive(orch, WORKERS, lambda w, s: labels[(hash((w, s)) >> 3) % 2])
        for sentence in orch.state.sentences.values():
            if sentence.resolution == RESOLVED:
                agreeing = [r for r in sentence.responses if r.label == sentence.resolved_label]
                assert len(agreeing) >= 2

    def test_wave_loop_feeds_extra_rounds(self):
        orch, _ = fresh(sentence_count=4)
        # alice and bob split every sentence; carol breaks each tie
        votes = {"alice": "PERSON:REL_00", "bob": "PERSON:REL_01", "carol": "PERSON:REL_01"}
        drive(orch, ("alice", "bob", "carol"), lambda w, s: votes[w])
        for sentence in orch.state.sentences.values():
            assert sentence.resolution == RESOLVED
            assert sentence.resolved_label == "PERSON:REL_01"
            assert sentence.round == 2
        assert orch.progress()["round_distribution"] == {"2": 4}


class TestStarvation:
    def test_mark_starved_is_terminal(self):
        orch, _ = fresh(sentence_count=2)
        orch.mark_starved("s-00")
        sentence = orch.state.sentences["s-00"]
        assert sentence.resolution == UNRESOLVABLE
        assert sentence.reason == "starved"
        assert sentence.terminal
        final = orch.emit_final_labels()
        assert {"id": "s-00", "reason": "starved"} in final.exclusions
        assert final.pending == ["s-01"]

    def test_mark_starved_rejects_unknown_and_settled(self):
        orch, _ = fresh(sentence_count=1)
        with pytest.raises(OrchestratorError, match="unknown sentence"):
            orch.mark_starved("nope")
        orch.mark_starved("s-00")
        with pytest.raises(OrchestratorError, match="already settled"):
            orch.mark_starved("s-00")


class TestLifecycleGuards:
    def test_commands_require_configuration(self):
        orch = Orchestrator()
        assert orch.configured is False
        with pytest.raises(OrchestratorError, match="not configured"):
            orch.issue_wave()
        with pytest.raises(OrchestratorError, match="not configured"):
            orch.register_annotator("alice", 600, Fraction(96, 100))

    def test_configure_twice_rejected(self):
        orch, _ = fresh()
        with pytest.raises(OrchestratorError, match="already configured"):
            orch.configure(synthetic_taxonomy(5))

    def test_duplicate_registrations_and_ids_rejected(self):
        orch, cluster = fresh()
        with pytest.raises(OrchestratorError, match="already registered"):
            orch.register_annotator("alice", 600, Fraction(96, 100))
        with pytest.raises(OrchestratorError, match="duplicate id"):
            orch.add_control(make_instance("s-00"), "PERSON:REL_00")
        with pytest.raises(OrchestratorError, match="duplicate id"):
            orch.enqueue_sentence(make_instance("ctl-00"))
        with pytest.raises(OrchestratorError, match="already added"):
            choices = cluster.stage_choices(0)
            orch.add_qualification_test(
                cluster.name, [QualificationQuestion(make_instance("qq2"), choices, choices[0])]
            )

    def test_control_truth_must_sit_in_candidate_set(self):
        orch, _ = fresh()
        with pytest.raises(OrchestratorError, match="outside candidate set"):
            orch.add_control(make_instance("ctl-bad"), "PERSON:REL_77")

    def test_price_and_cost_tracking(self):
        orch, _ = fresh(sentence_count=8)
        drive(orch, WORKERS, lambda w, s: NO_RELATION)
        progress = orch.progress()
        assert progress["hits_issued"] == len(orch.state.hits)
        assert progress["cost_units"] == pytest.approx(0.15 * progress["hits_issued"])
        assert progress["resolved"] == 8
        assert progress["pending"] == 0


class TestReplay:
    def busy_campaign(self, sink=None, seed=7):
        orch, cluster = fresh(sentence_count=10, label_count=14, seed=seed, sink=sink, control_count=10)
        votes = {
            "alice": WRONG_TYPE,
            "bob": WRONG_TYPE,
            "carol": "PERSON:REL_01",
            "dave": "PERSON:REL_01",
            "erin": "PERSON:REL_02",
        }
        drive(orch, WORKERS, lambda w, s: votes[w] if s != "s-09" else "PERSON:REL_02")
        orch.issue_wave()
        hit = orch.claim_next_hit("erin")
        if hit is not None:
            orch.ingest_response(hit.hit_id, "erin", full_answers(orch, hit, lambda s: "PERSON:REL_02"), idempotency_key="tail")
        return orch

    def test_replay_reproduces_state_byte_for_byte(self):
        events = []
        live = self.busy_campaign(sink=events.append)
        restored = Orchestrator.replay(events)
        assert canonical_state(restored.state) == canonical_state(live.state)
        assert state_digest(restored.state) == state_digest(live.state)
        assert restored.last_seq == live.last_seq

    def test_replayed_log_reencodes_identically(self):
        first, second = [], []
        self.busy_campaign(sink=first.append)
        self.busy_campaign(sink=second.append)
        assert [e.encode() for e in first] == [e.encode() for e in second]

    def test_gap_in_log_is_detected(self):
        events = []
        self.busy_campaign(sink=events.append)
        broken = events[:10] + events[11:]
        with pytest.raises(LogCorruptionError, match="expected sequence"):
            Orchestrator.replay(broken)

    def test_snapshot_plus_tail_matches_full_replay(self):
        events = []
        orch, _ = fresh(sentence_count=8, sink=events.append)
        wave = orch.issue_wave()
        for worker, hit in zip(WORKERS, wave):
            orch.ingest_response(hit.hit_id, worker, full_answers(orch, hit, lambda s: NO_RELATION))
        snap = orch.snapshot()
        cut = len(events)
        drive(orch, WORKERS, lambda w, s: NO_RELATION)
        restored = Orchestrator.from_snapshot(snap, tail=events[cut:])
        assert state_digest(restored.state) == state_digest(orch.state)
        assert restored.last_seq == orch.last_seq

    def test_snapshot_tail_must_be_contiguous(self):
        events = []
        orch, _ = fresh(sentence_count=4, sink=events.append)
        snap = orch.snapshot()
        cut = len(events)
        drive(orch, WORKERS, lambda w, s: NO_RELATION)
        with pytest.raises(LogCorruptionError):
            Orchestrator.from_snapshot(snap, tail=events[cut + 1 :])

    def test_clock_stays_monotone_after_replay(self):
        events = []
        orch, _ = fresh(sentence_count=4, sink=events.append)
        last_ts = events[-1].ts
        restored = Orchestrator.replay(events)
        restored.enqueue_sentence(make_instance("s-99"))
        assert restored.events[-1].ts > last_ts

    def test_canonical_state_accepts_state_or_record(self):
        orch, _ = fresh(sentence_count=2)
        assert canonical_state(orch.state) == canonical_state(orch.state.to_record())
        assert state_digest(orch.state) == state_digest(orch.state.to_record())
