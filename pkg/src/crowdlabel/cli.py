"""Command-line interface: every subsystem reachable without the HTTP layer.

Errors print one machine-readable JSON line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from crowdlabel.analytics import (
    UndefinedKappaError,
    agreement_rate,
    apply_patch,
    diff,
    difficulty_report,
    emit_patch,
    fleiss_kappa,
    load_patch,
    rating_matrix_from_states,
    save_patch,
)
from crowdlabel.data import Dataset, load_dataset, save_dataset
from crowdlabel.events import read_log
from crowdlabel.orchestrator import Orchestrator, state_digest
from crowdlabel.quality import GateConfig
from crowdlabel.scoring import PredictionFile, load_predictions, micro_prf, score_report
from crowdlabel.simulate import (
    CALIBRATED,
    PERFECTIONIST,
    SPAMMER,
    SimulationConfig,
    WorkerShare,
    run as run_simulation,
)
from crowdlabel.taxonomy import NO_RELATION, Taxonomy, load_taxonomy

ENV_PORT = "CROWDLABEL_PORT"
ENV_DATA_DIR = "CROWDLABEL_DATA_DIR"
ENV_SEED = "CROWDLABEL_SEED"
ENV_ADMIN_TOKEN = "CROWDLABEL_ADMIN_TOKEN"


def _print(record: dict) -> None:
    print(json.dumps(record, ensure_ascii=False, sort_keys=True))


def _fail(code: str, message: str) -> int:
    sys.stderr.write(
        json.dumps({"error": {"code": code, "message": message}}, ensure_ascii=False)
        + "\n"
    )
    return 1


def _taxonomy(args: argparse.Namespace) -> Taxonomy:
    return load_taxonomy(getattr(args, "taxonomy", None))


def _parse_mix(text: str) -> tuple[WorkerShare, ...]:
    """kind:fraction[:accuracy[:kernel]], comma-separated."""
    shares = []
    for chunk in text.split(","):
        parts = chunk.strip().split(":")
        if len(parts) < 2:
            raise ValueError(f"bad mix entry {chunk!r}")
        kind = parts[0]
        if kind not in (CALIBRATED, SPAMMER, PERFECTIONIST):
            raise ValueError(f"unknown worker kind {kind!r}")
        fraction = float(parts[1])
        accuracy = float(parts[2]) if len(parts) > 2 else 0.9
        kernel = parts[3] if len(parts) > 3 else "uniform"
        shares.append(WorkerShare(kind, fraction, accuracy=accuracy, error_kernel=kernel))
    return tuple(shares)


# ----------------------------------------------------------------------
# Verbs


def cmd_validate(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    taxonomy = _taxonomy(args)
    known = (
        set(taxonomy.original_labels)
        | set(taxonomy.refined_labels)
        | {NO_RELATION}
    )
    unknown = sorted(
        {
            inst.original_label
            for inst in dataset.instances
            if inst.original_label and inst.original_label not in known
        }
    )
    if unknown:
        raise ValueError(f"labels outside the taxonomy: {unknown}")
    _print(
        {
            "ok": True,
            "instances": len(dataset.instances),
            "labels": len(dataset.labels()),
            "excluded": len(dataset.exclusions),
        }
    )
    return 0


def cmd_plan(args: argparse.Namespace) -> int:
    taxonomy = _taxonomy(args)
    report = taxonomy.cost_report()
    _print(
        {
            "clusters": len(taxonomy.clusters),
            "type_pairs": len(taxonomy.type_pairs),
            "original_labels": taxonomy.original_label_count(),
            "refined_labels": taxonomy.refined_label_count(),
            "max_subset_size": max(
                len(subset) for c in taxonomy.clusters for subset in c.subsets
            ),
            "cost_factor": float(report.reduction_factor),
            "cost": report.to_record(),
        }
    )
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from crowdlabel.server import serve

    admin_token = args.admin_token or os.environ.get(ENV_ADMIN_TOKEN)
    if not admin_token:
        return _fail("config", f"admin token required (--admin-token or {ENV_ADMIN_TOKEN})")
    serve(args.data_dir, admin_token, host=args.host, port=args.port)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    config = SimulationConfig(
        sentence_count=args.sentences,
        worker_count=args.workers,
        mix=_parse_mix(args.mix),
        seed=args.seed,
        cluster_size=args.cluster_size,
        wrong_type_fraction=args.wrong_type_fraction,
        gate=GateConfig(enabled=not args.no_gate),
    )
    sink = None
    writer = None
    if args.log:
        from crowdlabel.events import EventWriter

        writer = EventWriter(args.log)
        sink = writer
    try:
        report, _ = run_simulation(config, sink=sink)
    finally:
        if writer is not None:
            writer.close()
    _print(report.to_record())
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    events = read_log(args.log)
    orchestrator = Orchestrator.replay(events)
    states = list(orchestrator.state.sentences.values())
    try:
        matrix = rating_matrix_from_states(states)
        kappa = float(fleiss_kappa(matrix))
        agreement = float(agreement_rate(matrix))
    except (UndefinedKappaError, ValueError):
        kappa = None
        agreement = None
    record = {
        "progress": orchestrator.progress(),
        "kappa": kappa,
        "agreement": agreement,
        "suspensions": orchestrator.suspensions(),
        "difficulty": [
            {"sentence_id": sid, "disagreement": value}
            for sid, value in difficulty_report(states)[: args.top]
        ],
    }
    _print(record)
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    gold = load_predictions(args.gold)
    pred = load_predictions(args.pred)
    missing = sorted(set(gold.rows) - set(pred.rows))
    if missing:
        raise ValueError(f"predictions missing ids: {missing[:5]}")
    gold_rows = dict(gold.rows)
    trimmed = PredictionFile(
        model=pred.model,
        train_tag=pred.train_tag,
        test_tag=pred.test_tag,
        rows={i: pred.rows[i] for i in gold_rows},
    )
    if args.categories:
        taxonomy = _taxonomy(args)
        report = score_report(trimmed, gold_rows, taxonomy)
        _print(report.to_record())
    else:
        prf = micro_prf(gold_rows, trimmed.rows)
        _print(
            {
                "precision": float(prf.precision),
                "recall": float(prf.recall),
                "f1": float(prf.f1),
                "true_positives": prf.true_positives,
                "predicted_positives": prf.predicted_positives,
                "gold_positives": prf.gold_positives,
            }
        )
    return 0


def cmd_diff(args: argparse.Namespace) -> int:
    before = load_dataset(args.before)
    after = load_dataset(args.after)
    before_labels = {i.id: i.original_label or "" for i in before.instances}
    after_labels = {i.id: i.original_label or "" for i in after.instances}
    report = diff(before_labels, after_labels)
    _print(report.to_record())
    return 0


def cmd_patch(args: argparse.Namespace) -> int:
    base = load_dataset(args.base)
    if args.action == "emit":
        revised = load_dataset(args.revised)
        base_ids = {i.id for i in base.instances}
        revised_by_id = revised.by_id()
        assignments = {
            inst.id: revised_by_id[inst.id].original_label
            for inst in base.instances
            if inst.id in revised_by_id
        }
        recorded = {i: reason for i, reason in revised.exclusions}
        exclusions = [
            {"id": inst.id, "reason": recorded.get(inst.id, "removed")}
            for inst in base.instances
            if inst.id not in revised_by_id
        ]
        patch = emit_patch(assignments, exclusions, base)
        save_patch(patch, args.out)
        _print({"entries": len(patch), "out": str(args.out)})
    else:
        patch = load_patch(args.patch)
        revised = apply_patch(patch, base)
        save_dataset(revised, args.out)
        _print(
            {
                "instances": len(revised.instances),
                "excluded": len(revised.exclusions),
                "out": str(args.out),
            }
        )
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    events = read_log(args.log)
    orchestrator = Orchestrator.replay(events)
    record = {
        "events": len(events),
        "last_seq": orchestrator.last_seq,
        "digest": state_digest(orchestrator.state) if orchestrator.configured else None,
    }
    if args.expect_digest and record["digest"] != args.expect_digest:
        raise ValueError(
            f"digest mismatch: log yields {record['digest']}, expected {args.expect_digest}"
        )
    _print(record)
    return 0


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdlabel",
        description="Typed relation-annotation campaigns: plan, serve, simulate, analyze.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", help="check a dataset file")
    p.add_argument("dataset")
    p.add_argument("--taxonomy")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("plan", help="cluster and cost report for the taxonomy")
    p.add_argument("--taxonomy")
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("serve", help="run the HTTP gateway")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=int(os.environ.get(ENV_PORT, "8000")))
    p.add_argument(
        "--data-dir", default=os.environ.get(ENV_DATA_DIR, "./crowdlabel-data")
    )
    p.add_argument("--admin-token", default=None)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("simulate", help="run a synthetic campaign")
    p.add_argument("--sentences", type=int, default=200)
    p.add_argument("--workers", type=int, default=10)
    p.add_argument("--mix", default="calibrated:0.8:0.9,spammer:0.2")
    p.add_argument("--seed", type=int, default=int(os.environ.get(ENV_SEED, "0")))
    p.add_argument("--cluster-size", type=int, default=9)
    p.add_argument("--wrong-type-fraction", type=float, default=0.05)
    p.add_argument("--no-gate", action="store_true")
    p.add_argument("--log", help="write the event log here")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("stats", help="agreement and difficulty from an event log")
    p.add_argument("--log", required=True)
    p.add_argument("--top", type=int, default=20)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("score", help="micro-P/R/F1 of predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--categories", action="store_true")
    p.add_argument("--taxonomy")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("diff", help="label-change report between two dataset files")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.set_defaults(fn=cmd_diff)

    p = sub.add_parser("patch", help="emit or apply a revision patch")
    p.add_argument("action", choices=["emit", "apply"])
    p.add_argument("--base", required=True)
    p.add_argument("--revised")
    p.add_argument("--patch")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_patch)

    p = sub.add_parser("replay", help="rebuild state from an event log")
    p.add_argument("--log", required=True)
    p.add_argument("--expect-digest")
    p.set_defaults(fn=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verb == "patch":
        if args.action == "emit" and not args.revised:
            return _fail("usage", "patch emit requires --revised")
        if args.action == "apply" and not args.patch:
            return _fail("usage", "patch apply requires --patch")
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - single CLI error funnel
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
