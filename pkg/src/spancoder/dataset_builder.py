"""Instruction-tuning sample construction, mixing, and bundle emission.

Document samples teach the evidence-then-codes generation in one pass: the
completion lists evidence spans in document order, then the codes ordered by
their earliest supporting span. Span samples teach the span-to-code mapping
from the pair store. A code-only variant drops the evidence section for
ablation runs. Samples are mixed with a seeded shuffle and written as a
trainer-ready bundle with a pinned adapter config and a hashed manifest.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path

from .documents import AnnotatedDocument
from .icd_kb import CodeHierarchy
from .prompts import (
    code_only_instruction,
    doc_instruction,
    render_code_only_prompt,
    render_doc_prompt,
    render_span_prompt,
    span_instruction,
)

KIND_DOCUMENT = "document"
KIND_SPAN = "span"
KIND_CODE_ONLY = "code_only"

EVIDENCE_HEADER = "### Evidence"
CODES_HEADER = "### ICD-10-CM Codes"

TRAINING_CONFIG = {
    "adapter_rank": 8,
    "batch_size": 16,
    "learning_rate": 0.0001,
    "scheduler": "cosine",
    "warmup_ratio": 0.1,
}


class SampleError(ValueError):
    """Document or pair cannot be rendered into a sample."""


@dataclass(frozen=True)
class InstructionSample:
    prompt: str
    completion: str
    kind: str
    origin: str
    body: str  # the note or span substituted into the template

    def __post_init__(self):
        if not self.prompt or not self.completion:
            raise SampleError("prompt and completion must be non-empty")


def ordered_evidence(document: AnnotatedDocument) -> list[tuple[int, str, str]]:
    """Evidence as (position, text, code), sorted by document position with
    input order as the stable tie-break."""
    rows = [
        (document.span_position(span), span.text, span.code) for span in document.evidence
    ]
    rows.sort(key=lambda row: row[0])
    return rows


def _completion_blocks(evidence_lines: list[str], code_lines: list[str]) -> str:
    return (
        f"{EVIDENCE_HEADER}\n\n"
        + "\n".join(evidence_lines)
        + f"\n\n{CODES_HEADER}\n\n"
        + "\n".join(code_lines)
    )


def build_doc_sample(document: AnnotatedDocument, hierarchy: CodeHierarchy) -> InstructionSample:
    """Joint evidence+codes target. Every code needs at least one linked span;
    duplicate span texts collapse to their first occurrence; each code is
    emitted once, at its earliest evidence position."""
    document.validate()
    if not document.codes:
        raise SampleError(f"document {document.id!r} has no codes")
    rows = ordered_evidence(document)
    uncovered = set(document.codes) - {code for _, _, code in rows}
    if uncovered:
        raise SampleError(
            f"document {document.id!r}: codes without evidence: {sorted(uncovered)}"
        )

    evidence_lines = []
    seen_spans: set[str] = set()
    first_position: dict[str, int] = {}
    for position, text, code in rows:
        if text not in seen_spans:
            seen_spans.add(text)
            evidence_lines.append(text)
        if code not in first_position:
            first_position[code] = position
    codes = sorted(first_position, key=lambda c: (first_position[c], c))
    code_lines = [f"{code} - {hierarchy.long_description(code)}" for code in codes]

    return InstructionSample(
        prompt=render_doc_prompt(document.text),
        completion=_completion_blocks(evidence_lines, code_lines),
        kind=KIND_DOCUMENT,
        origin=document.id,
        body=document.text,
    )


def build_span_sample(
    evidence_text: str, codes, hierarchy: CodeHierarchy, origin: str = "span"
) -> InstructionSample:
    """Span-to-codes target; one description line per code, lexicographic."""
    if not evidence_text.strip():
        raise SampleError("evidence text must be non-empty")
    if not codes:
        raise SampleError(f"span {evidence_text!r} has no codes")
    lines = [f"{code} - {hierarchy.long_description(code)}" for code in sorted(set(codes))]
    return InstructionSample(
        prompt=render_span_prompt(evidence_text),
        completion="\n".join(lines),
        kind=KIND_SPAN,
        origin=origin,
        body=evidence_text,
    )


def build_code_only_sample(
    document: AnnotatedDocument, hierarchy: CodeHierarchy
) -> InstructionSample:
    """Codes-only target: the description lines in gold label order, no
    evidence section. Evidence annotations, if any, are ignored."""
    if not document.codes:
        raise SampleError(f"document {document.id!r} has no codes")
    lines = [f"{code} - {hierarchy.long_description(code)}" for code in document.codes]
    return InstructionSample(
        prompt=render_code_only_prompt(document.text),
        completion="\n".join(lines),
        kind=KIND_CODE_ONLY,
        origin=document.id,
        body=document.text,
    )


def build_span_samples_from_pairs(pairs, hierarchy: CodeHierarchy) -> list[InstructionSample]:
    """Group the pair store by exact evidence text; one sample per span with
    all its codes, so a multi-code span never yields contradictory targets."""
    codes_by_span: dict[str, list[str]] = {}
    sources_by_span: dict[str, set[str]] = {}
    for pair in pairs:
        bucket = codes_by_span.setdefault(pair.evidence, [])
        if pair.code not in bucket:
            bucket.append(pair.code)
        sources_by_span.setdefault(pair.evidence, set()).add(pair.source)
    samples = []
    for span in sorted(codes_by_span):
        origin = "+".join(sorted(sources_by_span[span]))
        samples.append(build_span_sample(span, codes_by_span[span], hierarchy, origin=origin))
    return samples


def mix_datasets(
    doc_samples, span_samples, seed: int, duplication: int = 1
) -> list[InstructionSample]:
    """Replicate documents `duplication` times, append spans, shuffle with a
    seeded generator. Output length = duplication * |docs| + |spans|."""
    if duplication < 1:
        raise ValueError("duplication must be >= 1")
    mixed = list(doc_samples) * duplication + list(span_samples)
    random.Random(seed).shuffle(mixed)
    return mixed


def sample_to_record(sample: InstructionSample) -> dict:
    instruction = {
        KIND_DOCUMENT: doc_instruction,
        KIND_SPAN: span_instruction,
        KIND_CODE_ONLY: code_only_instruction,
    }[sample.kind]()
    return {
        "instruction": instruction,
        "input": sample.body,
        "output": sample.completion,
        "kind": sample.kind,
        "origin": sample.origin,
    }


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def emit_training_bundle(samples, out_dir: str | Path, seed: int) -> dict:
    """Write dataset.jsonl, training_config.txt, and manifest.json; return the
    manifest (file name -> sha256 and record count)."""
    if not samples:
        raise SampleError("refusing to emit an empty bundle")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    dataset_path = out / "dataset.jsonl"
    lines = [json.dumps(sample_to_record(s), ensure_ascii=False) for s in samples]
    dataset_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    config_path = out / "training_config.txt"
    config = dict(TRAINING_CONFIG, seed=seed)
    config_path.write_text(
        "".join(f"{key}: {value}\n" for key, value in config.items()), encoding="utf-8"
    )

    manifest = {
        "files": {
            "dataset.jsonl": {"sha256": file_sha256(dataset_path), "records": len(samples)},
            "training_config.txt": {"sha256": file_sha256(config_path)},
        }
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


ABLATION_CONFIGS = ("code_only", "evidence", "evidence_gold", "full")


def emit_ablation_bundles(
    documents,
    gold_pairs,
    all_pairs,
    hierarchy: CodeHierarchy,
    out_dir: str | Path,
    seed: int,
    duplication: int = 1,
) -> dict[str, dict]:
    """Four bundles of increasing supervision: codes only, +evidence targets,
    +curated spans, +mined and generated spans. Same seed and duplication
    everywhere so counts are comparable."""
    doc_samples = [build_doc_sample(d, hierarchy) for d in documents]
    code_only_samples = [build_code_only_sample(d, hierarchy) for d in documents]
    gold_spans = build_span_samples_from_pairs(gold_pairs, hierarchy)
    all_spans = build_span_samples_from_pairs(all_pairs, hierarchy)

    plans = {
        "code_only": (code_only_samples, []),
        "evidence": (doc_samples, []),
        "evidence_gold": (doc_samples, gold_spans),
        "full": (doc_samples, all_spans),
    }
    manifests = {}
    for name, (docs, spans) in plans.items():
        mixed = mix_datasets(docs, spans, seed=seed, duplication=duplication)
        manifests[name] = emit_training_bundle(mixed, Path(out_dir) / name, seed=seed)
    return manifests
