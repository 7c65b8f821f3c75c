"""Prompt rendering for every pipeline stage.

Templates ship as package data and are substituted literally: placeholder
tokens are replaced with caller-supplied text, nothing is escaped, and the
surrounding template bytes are never touched. Callers that need list-shaped
slots format them into a text block first.
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

_TEMPLATE_DIR = Path(__file__).parent / "templates"


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return (_TEMPLATE_DIR / f"{name}.txt").read_text(encoding="utf-8")


def render_doc_prompt(text: str) -> str:
    """Joint evidence-then-codes prompt; generation starts after the note body."""
    return load_template("doc_coding").replace("{text}", text)


def render_span_prompt(evidence: str) -> str:
    """Span-to-code prompt; generation starts after the codes header."""
    return load_template("span_coding").replace("{evidence}", evidence)


def render_code_only_prompt(text: str) -> str:
    """Codes-without-evidence prompt used by the code-only data configuration."""
    return load_template("code_only").replace("{text}", text)


def render_extraction_prompt(text: str, diagnosis_codes: str) -> str:
    """Stage-1 evidence mining prompt over one labeled note."""
    return (
        load_template("evidence_extraction")
        .replace("{text}", text)
        .replace("{diagnosis_codes}", diagnosis_codes)
    )


def render_refinement_prompt(
    code: str, alphabetic_index_term: str, evidence_set: str, mimiciv_evidence: str
) -> str:
    """Stage-2 per-code evidence consolidation prompt."""
    return (
        load_template("evidence_refinement")
        .replace("{code}", code)
        .replace("{alphabetic_index_term}", alphabetic_index_term)
        .replace("{evidence_set}", evidence_set)
        .replace("{mimiciv_evidence}", mimiciv_evidence)
    )


def render_synthesis_prompt(code: str, reference: str) -> str:
    """Evidence synthesis prompt for a code with no mined or curated spans."""
    return (
        load_template("evidence_synthesis")
        .replace("{code}", code)
        .replace("{reference}", reference)
    )


def render_judge_prompt(evidence: str, human_evidence: str) -> str:
    """One-to-one evidence matching prompt for the LLM judge."""
    return (
        load_template("evidence_judge")
        .replace("{evidence}", evidence)
        .replace("{human_evidence}", human_evidence)
    )


def doc_instruction() -> str:
    """Fixed task header of the document prompt (text before the note body)."""
    return load_template("doc_coding").split("{text}")[0]


def span_instruction() -> str:
    """Fixed header of the span prompt (text before the evidence body)."""
    return load_template("span_coding").split("{evidence}")[0]


def code_only_instruction() -> str:
    """Fixed task header of the code-only prompt."""
    return load_template("code_only").split("{text}")[0]
