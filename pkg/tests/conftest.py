"""Shared fixtures: the bundled corpus and record-then-replay transcripts.

Mock transcripts are built by rendering the same prompts the pipeline will
render and registering a canned completion per prompt hash. Tests then run
the real code against a transcript-backed gateway, so the suite is hermetic
and performs zero network activity.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from spancoder.dataset_builder import build_doc_sample
from spancoder.documents import load_documents
from spancoder.icd_kb import nearest_code, parse_alpha_index, parse_order_file
from spancoder.llm_gateway import ChatRequest, Gateway, request_hash
from spancoder.inference_parser import render_inference_prompt
from spancoder.span_expansion import (
    aggregate_evidence,
    build_reference_block,
    build_silver_pairs,
    extract_gold_pairs,
    knowledge_from_pairs,
    render_mining_prompt,
)
from spancoder.prompts import render_refinement_prompt, render_synthesis_prompt

DATA_DIR = Path(__file__).parent / "data"
GOLDEN_DIR = Path(__file__).parent / "golden"


class TranscriptBuilder:
    """Collects (prompt, completion) pairs keyed by request hash."""

    def __init__(self, model: str = "mock-model", temperature: float = 0.0,
                 max_tokens: int = 1024):
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.mapping: dict[str, str] = {}

    def register(self, prompt: str, completion: str) -> str:
        key = request_hash(
            ChatRequest(
                user=prompt,
                model=self.model,
                temperature=self.temperature,
                max_tokens=self.max_tokens,
            )
        )
        self.mapping[key] = completion
        return key

    def gateway(self, cache_dir=None) -> Gateway:
        return Gateway(
            model=self.model,
            transcript=dict(self.mapping),
            cache_dir=cache_dir,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
        )


@pytest.fixture()
def transcript_builder():
    return TranscriptBuilder()


@pytest.fixture(scope="session")
def hierarchy():
    return parse_order_file((DATA_DIR / "icd10cm_order_fixture.txt").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def index_entries():
    return parse_alpha_index((DATA_DIR / "alpha_index_fixture.jsonl").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def documents():
    return load_documents(DATA_DIR / "documents_fixture.jsonl")


def build_pipeline_transcript(hierarchy, documents, index_entries) -> TranscriptBuilder:
    """Transcripts for the full fixture pipeline: mining per document,
    consolidation per mined code, synthesis per uncovered code, and standard
    inference per document (the completion is the document's training
    target, i.e. a perfectly faithful model)."""
    builder = TranscriptBuilder()

    for doc in documents:
        lines = [
            f"{span.code} - {hierarchy.long_description(span.code)} > {span.text}"
            for span in doc.evidence
        ]
        builder.register(render_mining_prompt(doc, hierarchy), "\n".join(lines))

    gold_pairs, _ = extract_gold_pairs(index_entries, hierarchy)
    terms_by_code: dict[str, list[str]] = {}
    for pair in gold_pairs:
        terms_by_code.setdefault(pair.code, []).append(pair.evidence)

    mined = [(span.code, span.text) for doc in documents for span in doc.evidence]
    table = aggregate_evidence(mined)
    for code in sorted(table):
        terms = terms_by_code.get(code, [])
        prompt = render_refinement_prompt(
            code=code,
            alphabetic_index_term=", ".join(terms) if terms else "(none)",
            evidence_set="- (empty)",
            mimiciv_evidence="\n".join(f"- {t}" for t, _ in table[code]),
        )
        builder.register(prompt, "\n".join(f"- {t}" for t, _ in table[code]))

    # replay what the silver stage will produce, then cover the residue
    silver_pairs, skipped = build_silver_pairs(
        documents, builder.gateway(), hierarchy, gold_pairs=gold_pairs
    )
    assert not skipped
    knowledge = knowledge_from_pairs(gold_pairs + silver_pairs)
    covered = {code for code, texts in knowledge.items() if texts}
    for target in sorted(hierarchy.codes()):
        if knowledge.get(target):
            continue
        nearest = nearest_code(target, hierarchy, covered)
        prompt = render_synthesis_prompt(
            code=target,
            reference=build_reference_block(target, nearest, hierarchy, knowledge),
        )
        completion = "\n".join(
            [
                f"- {hierarchy.long_description(target).lower()}",
                f"- {hierarchy.record(target).short_description.lower()}",
            ]
        )
        builder.register(prompt, completion)

    for doc in documents:
        builder.register(
            render_inference_prompt(doc.text), build_doc_sample(doc, hierarchy).completion
        )
    return builder


@pytest.fixture(scope="session")
def pipeline_transcript(hierarchy, documents, index_entries) -> TranscriptBuilder:
    return build_pipeline_transcript(hierarchy, documents, index_entries)
