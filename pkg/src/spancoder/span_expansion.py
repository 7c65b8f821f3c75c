"""Three-tier evidence-code pair expansion with full code coverage.

Pairs come from three sources, built in order:

1. gold: curated index terms paired with their default codes.
2. silver: spans mined from labeled notes in two model passes, first
   per-document extraction and then per-code consolidation of the
   frequency-ranked candidates.
3. synthetic: for codes still uncovered, evidence is generated from the
   nearest covered relative in the hierarchy and that relative's known
   evidence plus surrounding descriptions.

After the three passes every target code should hold at least one pair;
`coverage_report` verifies that and counts pairs per tier.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .documents import AnnotatedDocument
from .icd_kb import (
    CodeHierarchy,
    UnknownCodeError,
    extract_code_token,
    nearest_code,
    normalize_code,
)
from .llm_gateway import CompletionParseError, Gateway, GatewayError
from .prompts import render_extraction_prompt, render_refinement_prompt, render_synthesis_prompt

log = logging.getLogger(__name__)

SOURCE_GOLD = "gold"
SOURCE_SILVER = "silver"
SOURCE_SYNTHETIC = "synthetic"

DEFAULT_CONSOLIDATION_CAP = 10
DEFAULT_FALLBACK_K = 5

# code -> [(evidence, frequency)] sorted frequency-descending
CodeEvidenceTable = dict[str, list[tuple[str, int]]]


@dataclass(frozen=True)
class EvidenceCodePair:
    evidence: str
    code: str
    source: str
    frequency: int | None = None

    def __post_init__(self):
        if not self.evidence.strip():
            raise ValueError("evidence must be non-empty")
        if self.source not in (SOURCE_GOLD, SOURCE_SILVER, SOURCE_SYNTHETIC):
            raise ValueError(f"unknown pair source {self.source!r}")
        if self.frequency is not None and self.frequency < 1:
            raise ValueError("frequency must be positive when present")


@dataclass(frozen=True)
class ConsolidationResult:
    texts: tuple[str, ...]
    fallback: bool


@dataclass(frozen=True)
class CoverageReport:
    covered: frozenset[str]
    uncovered: frozenset[str]
    tier_counts: dict[str, int]


def normalize_span(text: str) -> str:
    """Dedup key: lowercase with whitespace collapsed. No stemming, so
    clinical surface forms stay distinct."""
    return " ".join(text.lower().split())


def _dedup_spans(texts: list[str]) -> list[str]:
    seen: set[str] = set()
    kept = []
    for text in texts:
        key = normalize_span(text)
        if key and key not in seen:
            seen.add(key)
            kept.append(text.strip())
    return kept


# -- gold tier -----------------------------------------------------------------


def extract_gold_pairs(index, hierarchy: CodeHierarchy) -> tuple[list[EvidenceCodePair], int]:
    """One pair per index entry whose code validates; returns (pairs, drop count)."""
    pairs = []
    dropped = 0
    for entry in index:
        try:
            code = normalize_code(entry.code, hierarchy, strict=True)
        except (ValueError, UnknownCodeError):
            dropped += 1
            continue
        pairs.append(EvidenceCodePair(evidence=entry.term, code=code, source=SOURCE_GOLD))
    return pairs, dropped


# -- silver tier ---------------------------------------------------------------


def format_code_lines(codes, hierarchy: CodeHierarchy) -> str:
    return "\n".join(f"{code} - {hierarchy.long_description(code)}" for code in codes)


def render_mining_prompt(document: AnnotatedDocument, hierarchy: CodeHierarchy) -> str:
    return render_extraction_prompt(document.text, format_code_lines(document.codes, hierarchy))


def parse_extraction_completion(
    text: str, labels, hierarchy: CodeHierarchy
) -> list[tuple[str, str]]:
    """Parse "CODE - description > evidence" lines into (code, evidence) tuples.

    "No evidence found" lines are recognized but yield nothing. Tuples whose
    code is not among `labels` are discarded. A completion with no
    recognizable line at all is a parse error.
    """
    label_set = set(labels)
    tuples = []
    recognized = 0
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if line.startswith(("- ", "* ")):
            line = line[2:].strip()
        if not line or line.startswith("#"):
            continue
        if "no evidence found" in line.lower():
            recognized += 1
            continue
        head, sep, evidence = line.partition(">")
        if not sep:
            continue
        evidence = evidence.strip()
        token = extract_code_token(head)
        if not evidence or token is None:
            continue
        recognized += 1
        code = normalize_code(token, hierarchy, strict=False)
        if code in label_set:
            tuples.append((code, evidence))
    if recognized == 0:
        raise CompletionParseError("no recognizable evidence lines in completion")
    return tuples


def mine_document_evidence(
    document: AnnotatedDocument, gateway: Gateway, hierarchy: CodeHierarchy
) -> list[tuple[str, str]]:
    response = gateway.complete(render_mining_prompt(document, hierarchy))
    return parse_extraction_completion(response.text, document.codes, hierarchy)


def mine_corpus_evidence(
    documents, gateway: Gateway, hierarchy: CodeHierarchy, parallelism: int = 4
) -> tuple[list[tuple[str, str]], list[str]]:
    """Mine every document, in parallel at the gateway. Documents whose
    completion fails or cannot be parsed are skipped and reported."""
    requests = [
        gateway.build_request(render_mining_prompt(doc, hierarchy)) for doc in documents
    ]
    responses = gateway.complete_many(requests, parallelism=parallelism)
    tuples: list[tuple[str, str]] = []
    skipped: list[str] = []
    for document, response in zip(documents, responses):
        if isinstance(response, GatewayError):
            log.warning("mining %s failed: %s", document.id, response)
            skipped.append(document.id)
            continue
        try:
            tuples.extend(parse_extraction_completion(response.text, document.codes, hierarchy))
        except CompletionParseError as exc:
            log.warning("mining %s unparseable: %s", document.id, exc)
            skipped.append(document.id)
    return tuples, skipped


def aggregate_evidence(tuples) -> CodeEvidenceTable:
    """Group tuples by code, dedup evidence by normalized equality keeping the
    first surface form, count occurrences, sort frequency-descending with
    lexicographic tie-break."""
    surfaces: dict[str, dict[str, str]] = {}
    counts: dict[str, Counter] = {}
    for code, evidence in tuples:
        key = normalize_span(evidence)
        if not key:
            continue
        surfaces.setdefault(code, {}).setdefault(key, evidence.strip())
        counts.setdefault(code, Counter())[key] += 1
    table: CodeEvidenceTable = {}
    for code in surfaces:
        entries = [(surfaces[code][key], n) for key, n in counts[code].items()]
        entries.sort(key=lambda pair: (-pair[1], pair[0]))
        table[code] = entries
    return table


def parse_bullet_list(text: str) -> list[str]:
    """Items of a "- item" bullet list, deduplicated. A first line without a
    marker is accepted as continuing the template's opening bullet."""
    items = []
    first_content_line = True
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith(("- ", "* ")):
            items.append(line[2:].strip())
        elif line in ("-", "*"):
            pass
        elif first_content_line:
            items.append(line)
        first_content_line = False
    return _dedup_spans([item for item in items if item])


def consolidate_code_evidence(
    code: str,
    candidates: list[tuple[str, int]],
    gold_terms: list[str],
    gateway: Gateway,
    existing: tuple[str, ...] = (),
    cap: int = DEFAULT_CONSOLIDATION_CAP,
    fallback_k: int = DEFAULT_FALLBACK_K,
) -> ConsolidationResult:
    """Refine one code's evidence set down to representative expressions.

    An empty or unusable completion falls back to the top-k candidates by
    frequency, flagged so callers can audit."""
    if not candidates and not gold_terms:
        raise ValueError(f"nothing to consolidate for {code}")
    prompt = render_refinement_prompt(
        code=code,
        alphabetic_index_term=", ".join(gold_terms) if gold_terms else "(none)",
        evidence_set="\n".join(f"- {t}" for t in existing) if existing else "- (empty)",
        mimiciv_evidence="\n".join(f"- {t}" for t, _ in candidates) if candidates else "- (none)",
    )
    response = gateway.complete(prompt)
    items = parse_bullet_list(response.text)
    items = [item for item in items if item not in ("(empty)", "(none)")]
    if items:
        return ConsolidationResult(texts=tuple(items[:cap]), fallback=False)
    top = _dedup_spans([t for t, _ in candidates[:fallback_k]])
    log.warning("consolidation for %s empty, falling back to top-%d candidates", code, fallback_k)
    return ConsolidationResult(texts=tuple(top), fallback=True)


def build_silver_pairs(
    documents,
    gateway: Gateway,
    hierarchy: CodeHierarchy,
    gold_pairs: list[EvidenceCodePair] = (),
    parallelism: int = 4,
    cap: int = DEFAULT_CONSOLIDATION_CAP,
) -> tuple[list[EvidenceCodePair], list[str]]:
    """Full silver tier: mine, aggregate, consolidate per code.

    Consolidated texts matching a mined candidate keep its frequency;
    reworded texts carry none. Returns (pairs, skipped document ids)."""
    tuples, skipped = mine_corpus_evidence(documents, gateway, hierarchy, parallelism)
    table = aggregate_evidence(tuples)
    terms_by_code: dict[str, list[str]] = {}
    for pair in gold_pairs:
        terms_by_code.setdefault(pair.code, []).append(pair.evidence)
    pairs = []
    for code in sorted(table):
        result = consolidate_code_evidence(
            code, table[code], terms_by_code.get(code, []), gateway, cap=cap
        )
        frequencies = {normalize_span(t): n for t, n in table[code]}
        for text in result.texts:
            pairs.append(
                EvidenceCodePair(
                    evidence=text,
                    code=code,
                    source=SOURCE_SILVER,
                    frequency=frequencies.get(normalize_span(text)),
                )
            )
    return pairs, skipped


# -- synthetic tier ------------------------------------------------------------


_PLACEHOLDER_ITEMS = {"<evidence term>", "..."}


def _real_items(items: list[str]) -> list[str]:
    """Drop template-echo output: literal placeholder bullets or ellipses."""
    kept = []
    for item in items:
        bare = item.strip()
        if bare in _PLACEHOLDER_ITEMS:
            continue
        if bare.startswith("<") and bare.endswith(">"):
            continue
        kept.append(item)
    return kept


def build_reference_block(
    target: str, nearest: str, hierarchy: CodeHierarchy, knowledge: dict[str, list[str]]
) -> str:
    lines = [f"Target code: {target} - {hierarchy.long_description(target)}"]
    lines.append(f"Nearest covered code: {nearest} - {hierarchy.long_description(nearest)}")
    lines.append(f"Known evidence for {nearest}:")
    lines.extend(f"- {text}" for text in knowledge[nearest])
    parent = hierarchy.parent_of(nearest)
    if parent is not None:
        lines.append(f"Parent code: {parent} - {hierarchy.long_description(parent)}")
    siblings = [s for s in hierarchy.siblings_of(nearest) if s != target]
    if siblings:
        lines.append("Sibling codes:")
        lines.extend(f"- {s} - {hierarchy.long_description(s)}" for s in siblings)
    return "\n".join(lines)


def synthesize_for_code(
    target: str,
    hierarchy: CodeHierarchy,
    knowledge: dict[str, list[str]],
    gateway: Gateway,
    quota: int = DEFAULT_CONSOLIDATION_CAP,
) -> list[EvidenceCodePair]:
    """Generate synthetic pairs for one uncovered code.

    Returns [] when the completion is unusable even after one refreshed
    retry; the caller reports such targets as uncovered residue."""
    if target in knowledge and knowledge[target]:
        raise ValueError(f"{target} is already covered")
    covered = {code for code, texts in knowledge.items() if texts}
    if not covered:
        raise ValueError("knowledge map is empty, nothing to reference")
    nearest = nearest_code(target, hierarchy, covered)
    prompt = render_synthesis_prompt(
        code=target, reference=build_reference_block(target, nearest, hierarchy, knowledge)
    )
    items = _real_items(parse_bullet_list(gateway.complete(prompt).text))
    if not items:
        items = _real_items(parse_bullet_list(gateway.complete(prompt, refresh=True).text))
    return [
        EvidenceCodePair(evidence=text, code=target, source=SOURCE_SYNTHETIC)
        for text in items[:quota]
    ]


def build_synthetic_pairs(
    targets,
    hierarchy: CodeHierarchy,
    knowledge: dict[str, list[str]],
    gateway: Gateway,
    quota: int = DEFAULT_CONSOLIDATION_CAP,
) -> tuple[list[EvidenceCodePair], list[str]]:
    """Synthesize for every uncovered target; returns (pairs, residue)."""
    pairs = []
    residue = []
    for target in sorted(targets):
        if knowledge.get(target):
            continue
        generated = synthesize_for_code(target, hierarchy, knowledge, gateway, quota=quota)
        if generated:
            pairs.extend(generated)
        else:
            log.warning("synthesis produced nothing for %s", target)
            residue.append(target)
    return pairs, residue


# -- coverage and storage --------------------------------------------------------


def knowledge_from_pairs(pairs) -> dict[str, list[str]]:
    knowledge: dict[str, list[str]] = {}
    for pair in pairs:
        bucket = knowledge.setdefault(pair.code, [])
        if pair.evidence not in bucket:
            bucket.append(pair.evidence)
    return knowledge


def coverage_report(pairs, targets) -> CoverageReport:
    have = {pair.code for pair in pairs}
    targets = set(targets)
    tier_counts = Counter(pair.source for pair in pairs)
    return CoverageReport(
        covered=frozenset(targets & have),
        uncovered=frozenset(targets - have),
        tier_counts={tier: tier_counts.get(tier, 0) for tier in
                     (SOURCE_GOLD, SOURCE_SILVER, SOURCE_SYNTHETIC)},
    )


def save_pairs(pairs, path: str | Path) -> None:
    """Write the pair store sorted by (code, source, evidence) so reruns diff
    cleanly."""
    ordered = sorted(pairs, key=lambda p: (p.code, p.source, p.evidence))
    lines = [
        json.dumps(
            {"evidence": p.evidence, "code": p.code, "source": p.source, "frequency": p.frequency},
            ensure_ascii=False,
        )
        for p in ordered
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_pairs(path: str | Path) -> list[EvidenceCodePair]:
    pairs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        pairs.append(
            EvidenceCodePair(
                evidence=row["evidence"],
                code=row["code"],
                source=row["source"],
                frequency=row.get("frequency"),
            )
        )
    return pairs
