"""Inference prompt rendering and free-text completion parsing.

Two prompt modes: the standard document prompt (model generates evidence
then codes) and the prefilled-evidence mode, where reviewer-supplied spans
are baked into the prompt up to the code header so the model can only emit
codes. Parsing is total: any text yields a result, never an exception.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .dataset_builder import CODES_HEADER, EVIDENCE_HEADER
from .icd_kb import CodeHierarchy, extract_code_token, normalize_code, scan_code_tokens
from .llm_gateway import Gateway
from .prompts import render_doc_prompt

# headers tolerate missing #'s, case drift, and a trailing colon
_EVIDENCE_HEADER_RE = re.compile(r"^#*\s*evidence\s*:?\s*$", re.IGNORECASE)
_CODES_HEADER_RE = re.compile(r"^#*\s*icd-10-cm\s+codes\s*:?\s*$", re.IGNORECASE)
_LIST_MARKER_RE = re.compile(r"^[-*•]\s+")


@dataclass(frozen=True)
class PredictionResult:
    evidence: tuple[str, ...]
    codes: tuple[str, ...]
    raw: str
    unknown_codes: tuple[str, ...] = ()


def render_inference_prompt(note: str) -> str:
    """Same template the document samples train on."""
    if not note:
        raise ValueError("note must be non-empty")
    return render_doc_prompt(note)


def render_evid_prompt(note: str, human_evidence) -> str:
    """Prefill the evidence block with human spans, verbatim and in order,
    ending at the code header so generation is constrained to codes."""
    if not note:
        raise ValueError("note must be non-empty")
    spans = list(human_evidence)
    if not spans:
        raise ValueError("human evidence must be non-empty")
    return (
        render_doc_prompt(note)
        + f"\n{EVIDENCE_HEADER}\n\n"
        + "\n".join(spans)
        + f"\n\n{CODES_HEADER}\n"
    )


def _dedup(values) -> list[str]:
    seen: set[str] = set()
    kept = []
    for value in values:
        if value not in seen:
            seen.add(value)
            kept.append(value)
    return kept


def parse_prediction(completion: str, hierarchy: CodeHierarchy) -> PredictionResult:
    """Structured read of a free-text completion.

    With a code header present: evidence is the non-empty lines between the
    evidence and code headers (list markers stripped), codes are the first
    shape-valid token of each later line. Without one, the whole text is
    scanned for code-shaped tokens and evidence stays empty.
    """
    lines = completion.splitlines()
    codes_at = next(
        (i for i, line in enumerate(lines) if _CODES_HEADER_RE.match(line.strip())), None
    )

    evidence: list[str] = []
    raw_codes: list[str] = []
    if codes_at is None:
        raw_codes = scan_code_tokens(completion)
    else:
        evidence_at = next(
            (
                i
                for i, line in enumerate(lines[:codes_at])
                if _EVIDENCE_HEADER_RE.match(line.strip())
            ),
            None,
        )
        if evidence_at is not None:
            for line in lines[evidence_at + 1 : codes_at]:
                text = _LIST_MARKER_RE.sub("", line.strip())
                if text:
                    evidence.append(text)
        for line in lines[codes_at + 1 :]:
            token = extract_code_token(line)
            if token is not None:
                raw_codes.append(token)

    codes = _dedup(normalize_code(token, hierarchy, strict=False) for token in raw_codes)
    unknown = [code for code in codes if code not in hierarchy]
    return PredictionResult(
        evidence=tuple(_dedup(evidence)),
        codes=tuple(codes),
        raw=completion,
        unknown_codes=tuple(unknown),
    )


def predict_document(note: str, gateway: Gateway, hierarchy: CodeHierarchy) -> PredictionResult:
    """Standard mode: model produces evidence and codes in one completion."""
    response = gateway.complete(render_inference_prompt(note))
    return parse_prediction(response.text, hierarchy)


def predict_with_evidence(
    note: str, human_evidence, gateway: Gateway, hierarchy: CodeHierarchy
) -> PredictionResult:
    """Prefilled-evidence mode: the result's evidence is the request evidence,
    untouched; only the codes come from the model."""
    spans = tuple(human_evidence)
    response = gateway.complete(render_evid_prompt(note, spans))
    # re-attach the code header so parsing stays in per-line mode
    parsed = parse_prediction(f"{CODES_HEADER}\n" + response.text, hierarchy)
    return PredictionResult(
        evidence=spans,
        codes=parsed.codes,
        raw=response.text,
        unknown_codes=parsed.unknown_codes,
    )


def save_predictions(rows: dict[str, PredictionResult], path: str | Path) -> None:
    lines = [
        json.dumps(
            {
                "doc_id": doc_id,
                "evidence": list(result.evidence),
                "codes": list(result.codes),
                "raw": result.raw,
            },
            ensure_ascii=False,
        )
        for doc_id, result in rows.items()
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_predictions(path: str | Path) -> dict[str, PredictionResult]:
    rows: dict[str, PredictionResult] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        rows[row["doc_id"]] = PredictionResult(
            evidence=tuple(row.get("evidence", [])),
            codes=tuple(row.get("codes", [])),
            raw=row.get("raw", ""),
        )
    return rows
