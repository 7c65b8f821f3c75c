"""REST service for human-in-the-loop code review.

Reviewers browse documents, run model prediction, edit the evidence list,
and re-code with their edits; every result is appended to a per-document
revision history. State lives in a store directory: a `documents/` folder
of note+gold files plus an append-only `events.jsonl` log that is replayed
on startup, so a restart reconstructs identical histories.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .documents import AnnotatedDocument, document_from_dict, document_to_dict, load_documents
from .eval_metrics import (
    DEFAULT_SIMILARITY_THRESHOLD,
    evaluate_corpus,
    match_evidence_local,
    report_to_dict,
)
from .icd_kb import CodeHierarchy
from .inference_parser import predict_document, predict_with_evidence
from .llm_gateway import Gateway, GatewayError

log = logging.getLogger(__name__)

MODE_MODEL = "model"
MODE_HUMAN_EVID = "human_evid"


@dataclass(frozen=True)
class Revision:
    timestamp: float
    evidence: tuple[str, ...]
    codes: tuple[str, ...]
    mode: str
    raw: str

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "evidence": list(self.evidence),
            "codes": list(self.codes),
            "mode": self.mode,
            "raw": self.raw,
        }


@dataclass
class ReviewSession:
    doc_id: str
    revisions: list[Revision]
    current: int | None  # None until the first revision lands


class ReviewStore:
    """File-backed sessions: documents/ directory plus an event log.

    Events are the source of truth for revision history; they are appended
    under a lock and fsynced, and replayed in order at startup."""

    def __init__(self, root: str | Path, documents: list[AnnotatedDocument] | None = None):
        self.root = Path(root)
        self.documents_dir = self.root / "documents"
        self.events_path = self.root / "events.jsonl"
        self.documents_dir.mkdir(parents=True, exist_ok=True)
        self._event_lock = threading.Lock()
        self._doc_locks: dict[str, threading.Lock] = {}
        self.documents: dict[str, AnnotatedDocument] = {}
        self.sessions: dict[str, ReviewSession] = {}

        for doc in documents or []:
            self._register(doc, persist=True)
        for path in sorted(self.documents_dir.glob("*.json")):
            row = json.loads(path.read_text(encoding="utf-8"))
            doc = document_from_dict(row)
            if doc.id not in self.documents:
                self._register(doc, persist=False)
        self._replay()

    def _register(self, doc: AnnotatedDocument, persist: bool) -> None:
        self.documents[doc.id] = doc
        self.sessions[doc.id] = ReviewSession(doc_id=doc.id, revisions=[], current=None)
        self._doc_locks[doc.id] = threading.Lock()
        if persist:
            path = self.documents_dir / f"{doc.id}.json"
            if not path.exists():
                path.write_text(
                    json.dumps(document_to_dict(doc), ensure_ascii=False), encoding="utf-8"
                )

    def _replay(self) -> None:
        if not self.events_path.exists():
            return
        for line in self.events_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                self._apply(json.loads(line))

    def _apply(self, event: dict) -> None:
        session = self.sessions.get(event["doc_id"])
        if session is None:
            log.warning("event for unknown document %r ignored", event["doc_id"])
            return
        if event["kind"] == "revision":
            session.revisions.append(
                Revision(
                    timestamp=event["timestamp"],
                    evidence=tuple(event["evidence"]),
                    codes=tuple(event["codes"]),
                    mode=event["mode"],
                    raw=event["raw"],
                )
            )
            session.current = len(session.revisions) - 1
        elif event["kind"] == "set_current":
            session.current = event["revision"]
        else:
            log.warning("unknown event kind %r ignored", event["kind"])

    def _append_event(self, event: dict) -> None:
        with self._event_lock:
            with open(self.events_path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(event, ensure_ascii=False) + "\n")
                handle.flush()
                os.fsync(handle.fileno())
        self._apply(event)

    def lock(self, doc_id: str) -> threading.Lock:
        return self._doc_locks[doc_id]

    def add_revision(self, doc_id: str, revision: Revision) -> int:
        self._append_event({"kind": "revision", "doc_id": doc_id, **revision.to_dict()})
        return len(self.sessions[doc_id].revisions) - 1

    def set_current(self, doc_id: str, index: int) -> None:
        session = self.sessions[doc_id]
        if not 0 <= index < len(session.revisions):
            raise IndexError(f"revision {index} out of range")
        self._append_event({"kind": "set_current", "doc_id": doc_id, "revision": index})


def _revision_payload(index: int, revision: Revision) -> dict:
    return {"index": index, **revision.to_dict()}


def corpus_report(
    store: ReviewStore, tau: float = DEFAULT_SIMILARITY_THRESHOLD
) -> dict:
    """Score every gold-labeled document's current revision; documents without
    a revision count as empty predictions."""
    gold_docs = [d for d in store.documents.values() if d.codes]
    if not gold_docs:
        raise ValueError("no document carries gold labels")
    code_pairs = []
    evidence_counts = []
    for doc in sorted(gold_docs, key=lambda d: d.id):
        session = store.sessions[doc.id]
        revision = (
            session.revisions[session.current] if session.current is not None else None
        )
        predicted_codes = set(revision.codes) if revision else set()
        code_pairs.append((set(doc.codes), predicted_codes))
        gold_spans = [span.text for span in doc.evidence]
        if gold_spans:
            predicted_spans = list(revision.evidence) if revision else []
            evidence_counts.append(
                match_evidence_local(predicted_spans, gold_spans, similarity_threshold=tau)
            )
    report = evaluate_corpus(code_pairs, evidence_counts or None)
    return report_to_dict(report)


class RecodeBody(BaseModel):
    evidence: list[str]


class CurrentBody(BaseModel):
    revision: int


def create_app(
    store_dir: str | Path,
    documents: list[AnnotatedDocument] | str | Path | None = None,
    gateway: Gateway | None = None,
    hierarchy: CodeHierarchy | None = None,
    ui_dir: str | Path | None = None,
    tau: float = DEFAULT_SIMILARITY_THRESHOLD,
) -> FastAPI:
    if isinstance(documents, (str, Path)):
        documents = load_documents(documents)
    store = ReviewStore(store_dir, documents)
    app = FastAPI(title="spancoder review service")
    app.state.store = store

    def get_document(doc_id: str) -> AnnotatedDocument:
        doc = store.documents.get(doc_id)
        if doc is None:
            raise HTTPException(status_code=404, detail=f"unknown document {doc_id!r}")
        return doc

    def require_gateway() -> tuple[Gateway, CodeHierarchy]:
        if gateway is None or hierarchy is None:
            raise HTTPException(status_code=502, detail="no model endpoint configured")
        return gateway, hierarchy

    @app.get("/documents")
    def list_docs():
        rows = []
        for doc_id in sorted(store.documents):
            session = store.sessions[doc_id]
            rows.append(
                {
                    "id": doc_id,
                    "gold_code_count": len(store.documents[doc_id].codes),
                    "revision_count": len(session.revisions),
                    "current": session.current,
                }
            )
        return rows

    @app.get("/documents/{doc_id}")
    def get_doc(doc_id: str):
        doc = get_document(doc_id)
        session = store.sessions[doc_id]
        return {
            "id": doc.id,
            "text": doc.text,
            "gold_codes": list(doc.codes),
            "gold_evidence": [
                {"text": s.text, "code": s.code, "start": s.start} for s in doc.evidence
            ],
            "revisions": [
                _revision_payload(i, r) for i, r in enumerate(session.revisions)
            ],
            "current": session.current,
        }

    @app.post("/documents/{doc_id}/predict")
    def predict(doc_id: str):
        doc = get_document(doc_id)
        gw, kb = require_gateway()
        with store.lock(doc_id):
            try:
                result = predict_document(doc.text, gw, kb)
            except GatewayError as exc:
                raise HTTPException(status_code=502, detail=str(exc)) from exc
            revision = Revision(
                timestamp=time.time(),
                evidence=result.evidence,
                codes=result.codes,
                mode=MODE_MODEL,
                raw=result.raw,
            )
            index = store.add_revision(doc_id, revision)
        return _revision_payload(index, revision)

    @app.post("/documents/{doc_id}/recode")
    def recode(doc_id: str, body: RecodeBody):
        doc = get_document(doc_id)
        spans = body.evidence
        if not spans or any(not s.strip() for s in spans):
            raise HTTPException(status_code=422, detail="evidence must be non-empty spans")
        gw, kb = require_gateway()
        with store.lock(doc_id):
            try:
                result = predict_with_evidence(doc.text, spans, gw, kb)
            except GatewayError as exc:
                raise HTTPException(status_code=502, detail=str(exc)) from exc
            revision = Revision(
                timestamp=time.time(),
                evidence=tuple(spans),
                codes=result.codes,
                mode=MODE_HUMAN_EVID,
                raw=result.raw,
            )
            index = store.add_revision(doc_id, revision)
        return _revision_payload(index, revision)

    @app.put("/documents/{doc_id}/current")
    def set_current(doc_id: str, body: CurrentBody):
        get_document(doc_id)
        with store.lock(doc_id):
            try:
                store.set_current(doc_id, body.revision)
            except IndexError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"id": doc_id, "current": store.sessions[doc_id].current}

    @app.get("/report")
    def report():
        try:
            return corpus_report(store, tau=tau)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
