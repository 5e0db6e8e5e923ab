"""HTTP/JSON gateway: annotator and admin endpoints over one campaign.

All writes funnel through a single lock around the orchestrator command
stream; the event log on disk makes restarts reconstruct identical state.
Annotator-facing payloads never carry control flags or control truths.
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable

from fastapi import Depends, FastAPI, Header, HTTPException
from fastapi.responses import PlainTextResponse

from crowdlabel.analytics import (
    UndefinedKappaError,
    agreement_rate,
    difficulty_report,
    emit_patch,
    fleiss_kappa,
    rating_matrix_from_states,
)
from crowdlabel.data import Dataset, Instance
from crowdlabel.events import EventWriter, read_log
from crowdlabel.orchestrator import (
    CampaignConfig,
    Orchestrator,
    OrchestratorError,
    state_digest,
)
from crowdlabel.quality import GateConfig, QualificationQuestion
from crowdlabel.taxonomy import (
    TaxonomyError,
    load_taxonomy,
    synthetic_taxonomy,
    taxonomy_from_config,
)

DEFAULT_SESSION_TTL = 8 * 3600


class GatewayError(RuntimeError):
    pass


@dataclass
class SessionToken:
    token: str
    annotator_id: str
    issued_at: float
    expires_at: float

    def expired(self, now: float) -> bool:
        return now >= self.expires_at


class Gateway:
    """One campaign behind a lock; sessions and admin auth on top."""

    def __init__(
        self,
        orchestrator: Orchestrator,
        admin_token: str,
        session_ttl: float = DEFAULT_SESSION_TTL,
        now: Callable[[], float] = time.time,
    ) -> None:
        if not admin_token:
            raise GatewayError("admin token must be non-empty")
        self.orchestrator = orchestrator
        self.admin_token = admin_token
        self.session_ttl = session_ttl
        self.now = now
        self.lock = threading.RLock()
        self.sessions: dict[str, SessionToken] = {}

    # -- persistence -----------------------------------------------------

    @classmethod
    def from_data_dir(
        cls,
        data_dir: str | Path,
        admin_token: str,
        session_ttl: float = DEFAULT_SESSION_TTL,
        now: Callable[[], float] = time.time,
    ) -> "Gateway":
        """Open (or create) the event log under ``data_dir`` and replay it."""
        directory = Path(data_dir)
        directory.mkdir(parents=True, exist_ok=True)
        log_path = directory / "events.jsonl"
        events = read_log(log_path) if log_path.exists() else []
        writer = EventWriter(log_path)
        if events:
            orchestrator = Orchestrator.replay(events, sink=writer)
        else:
            orchestrator = Orchestrator(sink=writer)
        gateway = cls(orchestrator, admin_token, session_ttl=session_ttl, now=now)
        gateway._writer = writer
        return gateway

    def close(self) -> None:
        writer = getattr(self, "_writer", None)
        if writer is not None:
            writer.close()

    # -- sessions ---------------------------------------------------------

    def open_session(self, annotator_id: str) -> SessionToken:
        with self.lock:
            if annotator_id not in self.orchestrator.state.annotators:
                raise KeyError(annotator_id)
            issued = self.now()
            token = SessionToken(
                token=secrets.token_hex(16),
                annotator_id=annotator_id,
                issued_at=issued,
                expires_at=issued + self.session_ttl,
            )
            self.sessions[token.token] = token
            return token

    def resolve_session(self, token: str) -> SessionToken:
        session = self.sessions.get(token)
        if session is None or session.expired(self.now()):
            raise PermissionError("invalid or expired session token")
        return session

    # -- payload shaping --------------------------------------------------

    def _instance_payload(self, instance: Instance) -> dict:
        return {
            "sentence_id": instance.id,
            "tokens": list(instance.tokens),
            "subj_span": list(instance.subj_span),
            "obj_span": list(instance.obj_span),
            "subj_type": instance.subj_type,
            "obj_type": instance.obj_type,
            "text": instance.text(),
        }

    def _slot_instance(self, sentence_id: str) -> Instance:
        state = self.orchestrator.state
        sentence = state.sentences.get(sentence_id)
        if sentence is not None:
            return sentence.instance
        control = state.controls.lookup(sentence_id)
        if control is None:
            raise OrchestratorError(f"unknown sentence {sentence_id!r}")
        return control.instance

    def hit_payload(self, hit) -> dict:
        """Annotator view of a HIT: five identical-shaped slots, no flags."""
        taxonomy = self.orchestrator.taxonomy
        cluster = taxonomy.cluster_named(hit.cluster)
        choices = [
            {"label": label, "definition": taxonomy.definition(label)}
            for label in cluster.stage_choices(hit.stage)
        ]
        return {
            "hit_id": hit.hit_id,
            "cluster": hit.cluster,
            "stage": hit.stage,
            "price": float(hit.price),
            "slots": [self._instance_payload(self._slot_instance(s.sentence_id)) for s in hit.slots],
            "choices": choices,
            "guidelines": dict(taxonomy.guidelines),
        }


def _error_detail(code: str, message: str) -> dict:
    return {"code": code, "message": message}


def create_app(gateway: Gateway) -> FastAPI:
    app = FastAPI(title="crowdlabel gateway", version="1.0.0")
    app.state.gateway = gateway

    def violation(exc: Exception) -> HTTPException:
        return HTTPException(status_code=400, detail=_error_detail("violation", str(exc)))

    async def require_session(authorization: str = Header(default="")) -> SessionToken:
        scheme, _, token = authorization.partition(" ")
        if scheme.lower() != "bearer" or not token:
            raise HTTPException(
                status_code=401,
                detail=_error_detail("unauthorized", "missing bearer session token"),
            )
        try:
            return gateway.resolve_session(token.strip())
        except PermissionError as exc:
            raise HTTPException(
                status_code=401, detail=_error_detail("unauthorized", str(exc))
            )

    async def require_admin(x_admin_token: str = Header(default="")) -> None:
        if not secrets.compare_digest(x_admin_token, gateway.admin_token):
            raise HTTPException(
                status_code=403, detail=_error_detail("forbidden", "bad admin token")
            )

    def run_command(fn, *args, **kwargs):
        with gateway.lock:
            try:
                return fn(*args, **kwargs)
            except (OrchestratorError, TaxonomyError, ValueError) as exc:
                raise violation(exc)

    # -- liveness ---------------------------------------------------------

    @app.get("/healthz")
    async def healthz() -> dict:
        with gateway.lock:
            configured = gateway.orchestrator.configured
            seq = gateway.orchestrator.last_seq
        return {"status": "ok", "configured": configured, "last_seq": seq}

    # -- sessions ---------------------------------------------------------

    @app.post("/sessions")
    async def open_session(body: dict) -> dict:
        annotator_id = body.get("annotator_id")
        if not annotator_id:
            raise violation(ValueError("annotator_id required"))
        try:
            with gateway.lock:
                session = gateway.open_session(annotator_id)
        except KeyError:
            raise HTTPException(
                status_code=404,
                detail=_error_detail("not_found", f"unknown annotator {annotator_id!r}"),
            )
        return {
            "token": session.token,
            "annotator_id": session.annotator_id,
            "expires_at": session.expires_at,
        }

    @app.get("/me")
    async def me(session: SessionToken = Depends(require_session)) -> dict:
        with gateway.lock:
            profile = gateway.orchestrator.state.annotators[session.annotator_id]
            clusters = {
                name: {
                    "qualification": profile.qualifications.get(name, "none"),
                    "status": profile.cluster_status(name),
                }
                for name in sorted(
                    set(profile.qualifications) | set(profile.status)
                )
            }
        return {"annotator_id": session.annotator_id, "clusters": clusters}

    # -- qualification ----------------------------------------------------

    @app.get("/qualification/{cluster}")
    async def fetch_qualification(
        cluster: str, session: SessionToken = Depends(require_session)
    ) -> dict:
        with gateway.lock:
            orch = gateway.orchestrator
            row = orch.state.test_rows.get(cluster)
            if row is None:
                raise HTTPException(
                    status_code=404,
                    detail=_error_detail("not_found", f"no qualification test for {cluster!r}"),
                )
            taxonomy = orch.taxonomy
            labels = sorted({c for q in row["questions"] for c in q["choices"]})
            questions = []
            for q in row["questions"]:
                instance = Instance.from_record(q["instance"])
                payload = gateway._instance_payload(instance)
                payload["choices"] = list(q["choices"])
                questions.append(payload)
            definitions = {label: taxonomy.definition(label) for label in labels}
        return {
            "cluster": cluster,
            "definitions": definitions,
            "guidelines": dict(taxonomy.guidelines),
            "questions": questions,
        }

    @app.post("/qualification/{cluster}")
    async def submit_qualification(
        cluster: str, body: dict, session: SessionToken = Depends(require_session)
    ) -> dict:
        answers = body.get("answers")
        if not isinstance(answers, dict):
            raise violation(ValueError("answers must be an object of id -> label"))
        result = run_command(
            gateway.orchestrator.grade_qualification_submission,
            session.annotator_id,
            cluster,
            answers,
        )
        return {"cluster": cluster, "result": result}

    # -- HITs ---------------------------------------------------------------

    @app.get("/hits/next")
    async def next_hit(session: SessionToken = Depends(require_session)) -> dict:
        with gateway.lock:
            orch = gateway.orchestrator
            try:
                hit = orch.claim_next_hit(session.annotator_id)
            except OrchestratorError as exc:
                raise violation(exc)
            profile = orch.state.annotators[session.annotator_id]
            suspended = sorted(
                c for c, status in profile.status.items() if status == "suspended"
            )
            payload = gateway.hit_payload(hit) if hit is not None else None
        return {"hit": payload, "suspended_clusters": suspended}

    @app.post("/hits/{hit_id}/responses")
    async def submit_responses(
        hit_id: str, body: dict, session: SessionToken = Depends(require_session)
    ) -> dict:
        answers = body.get("answers")
        key = body.get("idempotency_key")
        if not isinstance(answers, dict) or not answers:
            raise violation(ValueError("answers must be a non-empty object of sentence_id -> label"))
        if not key or not isinstance(key, str):
            raise violation(ValueError("idempotency_key required"))
        result = run_command(
            gateway.orchestrator.ingest_response,
            hit_id,
            session.annotator_id,
            answers,
            idempotency_key=key,
        )
        return dict(result.public)

    # -- admin --------------------------------------------------------------

    @app.post("/admin/configure")
    async def configure(body: dict, _: None = Depends(require_admin)) -> dict:
        if gateway.orchestrator.configured:
            raise violation(OrchestratorError("campaign already configured"))
        if "taxonomy" in body:
            taxonomy = taxonomy_from_config(body["taxonomy"])
        elif "synthetic_labels" in body:
            taxonomy = synthetic_taxonomy(int(body["synthetic_labels"]))
        else:
            taxonomy = load_taxonomy()
        gate_body = body.get("gate", {})
        gate = GateConfig(enabled=bool(gate_body.get("enabled", True)))
        config = CampaignConfig(
            seed=int(body.get("seed", 0)),
            price=Fraction(str(body.get("price", "0.15"))),
            gate=gate,
            max_rounds=int(body.get("max_rounds", 4)),
        )
        run_command(gateway.orchestrator.configure, taxonomy, config)
        return {"configured": True, "clusters": [c.name for c in taxonomy.clusters]}

    @app.post("/admin/annotators")
    async def register_annotator(body: dict, _: None = Depends(require_admin)) -> dict:
        try:
            annotator_id = body["annotator_id"]
            approved = int(body["approved_count"])
            rate = Fraction(str(body["approval_rate"]))
        except (KeyError, ValueError) as exc:
            raise violation(exc)
        run_command(
            gateway.orchestrator.register_annotator, annotator_id, approved, rate
        )
        return {"annotator_id": annotator_id, "registered": True}

    @app.post("/admin/tests")
    async def add_test(body: dict, _: None = Depends(require_admin)) -> dict:
        try:
            cluster = body["cluster"]
            questions = [
                QualificationQuestion(
                    Instance.from_record(q["instance"]),
                    tuple(q["choices"]),
                    q["correct"],
                )
                for q in body["questions"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise violation(exc)
        run_command(gateway.orchestrator.add_qualification_test, cluster, questions)
        return {"cluster": cluster, "questions": len(questions)}

    @app.post("/admin/controls")
    async def add_control(body: dict, _: None = Depends(require_admin)) -> dict:
        try:
            instance = Instance.from_record(body["instance"])
            truth = body["true_label"]
        except (KeyError, TypeError, ValueError) as exc:
            raise violation(exc)
        run_command(gateway.orchestrator.add_control, instance, truth)
        return {"added": instance.id}

    @app.post("/admin/sentences")
    async def enqueue(body: dict, _: None = Depends(require_admin)) -> dict:
        rows = body.get("instances")
        if not isinstance(rows, list) or not rows:
            raise violation(ValueError("instances must be a non-empty list"))
        try:
            instances = [Instance.from_record(r) for r in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise violation(exc)
        count = run_command(gateway.orchestrator.enqueue_dataset, instances)
        return {"enqueued": count}

    @app.post("/admin/waves")
    async def issue_wave(_: None = Depends(require_admin)) -> dict:
        hits = run_command(gateway.orchestrator.issue_wave)
        return {"issued": len(hits), "hit_ids": [h.hit_id for h in hits]}

    @app.get("/admin/progress")
    async def admin_progress(_: None = Depends(require_admin)) -> dict:
        return run_command(gateway.orchestrator.progress)

    @app.get("/admin/agreement")
    async def admin_agreement(_: None = Depends(require_admin)) -> dict:
        with gateway.lock:
            states = list(gateway.orchestrator.state.sentences.values())
            try:
                matrix = rating_matrix_from_states(states)
                kappa = float(fleiss_kappa(matrix))
                agreement = float(agreement_rate(matrix))
                items = len(matrix.items)
            except (UndefinedKappaError, ValueError) as exc:
                return {"kappa": None, "agreement": None, "items": 0, "reason": str(exc)}
        return {"kappa": kappa, "agreement": agreement, "items": items}

    @app.get("/admin/suspensions")
    async def admin_suspensions(_: None = Depends(require_admin)) -> dict:
        return {"suspensions": run_command(gateway.orchestrator.suspensions)}

    @app.get("/admin/cost")
    async def admin_cost(_: None = Depends(require_admin)) -> dict:
        with gateway.lock:
            orch = gateway.orchestrator
            hits = len(orch.state.hits)
            price = orch.config.price
        return {
            "hits_issued": hits,
            "price_per_hit": float(price),
            "cost_units": float(price * hits),
        }

    @app.get("/admin/difficulty")
    async def admin_difficulty(_: None = Depends(require_admin)) -> dict:
        with gateway.lock:
            states = list(gateway.orchestrator.state.sentences.values())
        report = difficulty_report(states)
        return {
            "items": [
                {"sentence_id": sid, "disagreement": value} for sid, value in report
            ]
        }

    @app.get("/admin/plan")
    async def admin_plan(_: None = Depends(require_admin)) -> dict:
        with gateway.lock:
            taxonomy = gateway.orchestrator.taxonomy
        report = taxonomy.cost_report()
        return {
            "clusters": len(taxonomy.clusters),
            "type_pairs": len(taxonomy.type_pairs),
            "cost": report.to_record(),
        }

    @app.get("/admin/patch", response_class=PlainTextResponse)
    async def admin_patch(_: None = Depends(require_admin)) -> str:
        with gateway.lock:
            orch = gateway.orchestrator
            try:
                final = orch.emit_final_labels()
                base = Dataset(
                    instances=tuple(
                        s.instance for s in orch.state.sentences.values()
                    )
                )
                patch = emit_patch(
                    final.assignments,
                    final.exclusions,
                    base,
                    valid_labels=orch.taxonomy.refined_labels,
                )
            except (OrchestratorError, ValueError) as exc:
                raise violation(exc)
        lines = [json.dumps(e.to_record(), ensure_ascii=False) for e in patch.entries]
        return "\n".join(lines) + ("\n" if lines else "")

    @app.get("/admin/state")
    async def admin_state(_: None = Depends(require_admin)) -> dict:
        with gateway.lock:
            orch = gateway.orchestrator
            digest = state_digest(orch.state) if orch.configured else None
            seq = orch.last_seq
        return {"digest": digest, "last_seq": seq}

    @app.get("/admin/final-labels")
    async def admin_final(_: None = Depends(require_admin)) -> dict:
        final = run_command(gateway.orchestrator.emit_final_labels)
        return {
            "assignments": final.assignments,
            "exclusions": final.exclusions,
            "pending": final.pending,
        }

    return app


def serve(
    data_dir: str | Path,
    admin_token: str,
    host: str = "127.0.0.1",
    port: int = 8000,
) -> None:
    """Run the gateway under uvicorn; replays any existing log first."""
    import uvicorn

    gateway = Gateway.from_data_dir(data_dir, admin_token)
    app = create_app(gateway)
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    finally:
        gateway.close()
