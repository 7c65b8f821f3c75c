"""Annotated clinical documents and their JSONL interchange format.

A document carries the note text, its gold code labels, and optional
evidence annotations. Each evidence entry links a verbatim span to one of
the document's codes; the character offset is optional, and when present it
must point at an occurrence of the span text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class DocumentError(ValueError):
    """Document violates the interchange contract."""


@dataclass(frozen=True)
class EvidenceSpan:
    text: str
    code: str
    start: int | None = None


@dataclass(frozen=True)
class AnnotatedDocument:
    id: str
    text: str
    codes: tuple[str, ...]
    evidence: tuple[EvidenceSpan, ...] = field(default=())

    def validate(self) -> None:
        if not self.id:
            raise DocumentError("document id must be non-empty")
        if not self.text:
            raise DocumentError(f"document {self.id!r} has empty text")
        label_set = set(self.codes)
        for span in self.evidence:
            if not span.text:
                raise DocumentError(f"document {self.id!r} has an empty evidence span")
            if span.code not in label_set:
                raise DocumentError(
                    f"document {self.id!r}: evidence {span.text!r} links code "
                    f"{span.code!r} absent from the label list"
                )
            if span.start is not None:
                window = self.text[span.start : span.start + len(span.text)]
                if window != span.text:
                    raise DocumentError(
                        f"document {self.id!r}: offset {span.start} does not start "
                        f"span {span.text!r}"
                    )

    def span_position(self, span: EvidenceSpan) -> int:
        """Document-order key: explicit offset, else first occurrence."""
        if span.start is not None:
            return span.start
        position = self.text.find(span.text)
        if position < 0:
            raise DocumentError(
                f"document {self.id!r}: span {span.text!r} not found in text"
            )
        return position


def document_from_dict(row: dict) -> AnnotatedDocument:
    spans = tuple(
        EvidenceSpan(text=e["text"], code=e["code"], start=e.get("start"))
        for e in row.get("evidence", [])
    )
    doc = AnnotatedDocument(
        id=str(row["id"]),
        text=row["text"],
        codes=tuple(row.get("codes", [])),
        evidence=spans,
    )
    doc.validate()
    return doc


def document_to_dict(doc: AnnotatedDocument) -> dict:
    rows = []
    for span in doc.evidence:
        entry: dict = {"text": span.text, "code": span.code}
        if span.start is not None:
            entry["start"] = span.start
        rows.append(entry)
    return {"id": doc.id, "text": doc.text, "codes": list(doc.codes), "evidence": rows}


def load_documents(path: str | Path) -> list[AnnotatedDocument]:
    documents = []
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            documents.append(document_from_dict(json.loads(line)))
        except (KeyError, json.JSONDecodeError) as exc:
            raise DocumentError(f"{path}: line {number}: {exc}") from exc
    return documents


def save_documents(documents: list[AnnotatedDocument], path: str | Path) -> None:
    lines = [json.dumps(document_to_dict(d), ensure_ascii=False) for d in documents]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
