"""Code-set and evidence-span scoring.

Code metrics use set semantics per document: duplicates collapse before
TP/FP/FN are counted. Micro metrics pool counts over the corpus; macro-F1
averages per-code F1 over the union of codes seen in gold or predictions
(or gold only, configurable). Evidence scoring matches predicted spans to
human spans one-to-one, either with a deterministic local matcher (maximum
bipartite matching over token containment) or with an LLM judge, then
micro-aggregates the counts. Every zero denominator scores 0.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .llm_gateway import CompletionParseError, Gateway
from .prompts import render_judge_prompt

log = logging.getLogger(__name__)

DEFAULT_SIMILARITY_THRESHOLD = 0.5

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_JUDGE_LINE_RES = {
    "human": re.compile(r"human evidence count\s*:\s*(\d+)", re.IGNORECASE),
    "predicted": re.compile(r"predicted evidence count\s*:\s*(\d+)", re.IGNORECASE),
    "matched": re.compile(r"matched evidence count\s*:\s*(\d+)", re.IGNORECASE),
}


@dataclass(frozen=True)
class MatchCounts:
    human_count: int
    predicted_count: int
    matched_count: int

    def __post_init__(self):
        if min(self.human_count, self.predicted_count, self.matched_count) < 0:
            raise ValueError("counts must be non-negative")
        if self.matched_count > min(self.human_count, self.predicted_count):
            raise ValueError("matched count exceeds one of the sides")


@dataclass(frozen=True)
class PerCodeTally:
    tp: int
    fp: int
    fn: int
    f1: float


@dataclass(frozen=True)
class EvalReport:
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_f1: float
    per_code: dict[str, PerCodeTally]
    document_count: int
    evidence_recall: float = 0.0
    evidence_precision: float = 0.0
    evidence_f1: float = 0.0
    evidence_scored: bool = False


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def _f1(precision: float, recall: float) -> float:
    return _safe_div(2 * precision * recall, precision + recall)


# -- code metrics ----------------------------------------------------------------


def code_set_metrics(pairs, macro_universe: str = "union") -> EvalReport:
    """Score (gold set, predicted set) pairs.

    `macro_universe` picks the codes macro-F1 averages over: "union" of codes
    in any gold or predicted set, or "gold" for gold-occurring codes only."""
    if macro_universe not in ("union", "gold"):
        raise ValueError(f"unknown macro universe {macro_universe!r}")
    tp: dict[str, int] = {}
    fp: dict[str, int] = {}
    fn: dict[str, int] = {}
    gold_codes: set[str] = set()
    count = 0
    for gold, predicted in pairs:
        gold, predicted = set(gold), set(predicted)
        gold_codes |= gold
        count += 1
        for code in gold & predicted:
            tp[code] = tp.get(code, 0) + 1
        for code in predicted - gold:
            fp[code] = fp.get(code, 0) + 1
        for code in gold - predicted:
            fn[code] = fn.get(code, 0) + 1

    universe = set(tp) | set(fp) | set(fn) if macro_universe == "union" else gold_codes
    per_code = {}
    for code in sorted(universe):
        t, p, n = tp.get(code, 0), fp.get(code, 0), fn.get(code, 0)
        per_code[code] = PerCodeTally(tp=t, fp=p, fn=n, f1=_safe_div(2 * t, 2 * t + p + n))

    total_tp = sum(tp.values())
    total_fp = sum(fp.values())
    total_fn = sum(fn.values())
    precision = _safe_div(total_tp, total_tp + total_fp)
    recall = _safe_div(total_tp, total_tp + total_fn)
    return EvalReport(
        micro_precision=precision,
        micro_recall=recall,
        micro_f1=_f1(precision, recall),
        macro_f1=_safe_div(sum(t.f1 for t in per_code.values()), len(per_code)),
        per_code=per_code,
        document_count=count,
    )


# -- evidence matching -------------------------------------------------------------


def _span_tokens(span: str) -> frozenset[str]:
    return frozenset(_TOKEN_RE.findall(span.lower()))


def span_similarity(a: str, b: str) -> float:
    """Containment: shared tokens over the smaller token set, so a more
    specific span still matches a shorter annotation."""
    ta, tb = _span_tokens(a), _span_tokens(b)
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / min(len(ta), len(tb))


def _dedup_normalized(spans) -> list[str]:
    seen: set[str] = set()
    kept = []
    for span in spans:
        key = " ".join(span.lower().split())
        if key and key not in seen:
            seen.add(key)
            kept.append(span)
    return kept


def max_bipartite_matching(adjacency: list[list[int]], right_size: int) -> int:
    """Maximum matching size via augmenting paths (Kuhn's algorithm)."""
    match_right: list[int | None] = [None] * right_size

    def try_assign(left: int, visited: set[int]) -> bool:
        for right in adjacency[left]:
            if right in visited:
                continue
            visited.add(right)
            if match_right[right] is None or try_assign(match_right[right], visited):
                match_right[right] = left
                return True
        return False

    return sum(1 for left in range(len(adjacency)) if try_assign(left, set()))


def match_evidence_local(
    predicted, gold, similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD
) -> MatchCounts:
    """Deterministic one-to-one matching: edge when similarity >= threshold,
    matched count = maximum bipartite matching."""
    predicted = _dedup_normalized(predicted)
    gold = _dedup_normalized(gold)
    adjacency = [
        [j for j, g in enumerate(gold) if span_similarity(p, g) >= similarity_threshold]
        for p in predicted
    ]
    matched = max_bipartite_matching(adjacency, len(gold))
    return MatchCounts(
        human_count=len(gold), predicted_count=len(predicted), matched_count=matched
    )


def parse_judge_counts(text: str) -> tuple[int, int, int]:
    values = {}
    for name, pattern in _JUDGE_LINE_RES.items():
        found = pattern.search(text)
        if not found:
            raise CompletionParseError(f"judge output lacks the {name} evidence count line")
        values[name] = int(found.group(1))
    return values["human"], values["predicted"], values["matched"]


def match_evidence_llm(predicted, gold, gateway: Gateway) -> MatchCounts:
    """Judge-based matching. Either side empty short-circuits to zero matches
    without a model call; an out-of-bound matched count is clamped."""
    predicted = list(predicted)
    gold = list(gold)
    if not predicted or not gold:
        return MatchCounts(
            human_count=len(gold), predicted_count=len(predicted), matched_count=0
        )
    prompt = render_judge_prompt(
        evidence="\n".join(predicted), human_evidence="\n".join(gold)
    )
    try:
        human, pred, matched = parse_judge_counts(gateway.complete(prompt).text)
    except CompletionParseError:
        human, pred, matched = parse_judge_counts(gateway.complete(prompt, refresh=True).text)
    bound = min(human, pred)
    if matched > bound:
        log.warning("judge reported %d matches for counts (%d, %d); clamping", matched, human, pred)
        matched = bound
    return MatchCounts(human_count=human, predicted_count=pred, matched_count=matched)


def evidence_metrics(counts) -> tuple[float, float]:
    """Micro-aggregated (recall, F1) from pooled match counts."""
    matched = sum(c.matched_count for c in counts)
    human = sum(c.human_count for c in counts)
    predicted = sum(c.predicted_count for c in counts)
    recall = _safe_div(matched, human)
    f1 = _safe_div(2 * matched, human + predicted)
    return recall, f1


def evidence_precision(counts) -> float:
    matched = sum(c.matched_count for c in counts)
    predicted = sum(c.predicted_count for c in counts)
    return _safe_div(matched, predicted)


# -- corpus reports ----------------------------------------------------------------


def evaluate_corpus(
    code_pairs, evidence_counts=None, macro_universe: str = "union"
) -> EvalReport:
    report = code_set_metrics(code_pairs, macro_universe=macro_universe)
    if evidence_counts is None:
        return report
    counts = list(evidence_counts)
    recall, f1 = evidence_metrics(counts)
    return EvalReport(
        micro_precision=report.micro_precision,
        micro_recall=report.micro_recall,
        micro_f1=report.micro_f1,
        macro_f1=report.macro_f1,
        per_code=report.per_code,
        document_count=report.document_count,
        evidence_recall=recall,
        evidence_precision=evidence_precision(counts),
        evidence_f1=f1,
        evidence_scored=True,
    )


_TABLE_ROWS = (
    ("Micro-F1", "micro_f1"),
    ("Macro-F1", "macro_f1"),
    ("Recall", "micro_recall"),
    ("Precision", "micro_precision"),
    ("Evi-Recall", "evidence_recall"),
    ("Evi-F1", "evidence_f1"),
)


def format_report_table(report: EvalReport) -> str:
    """Fixed-order metric table, percentages with one decimal. Evidence rows
    show "-" when no evidence matching was run."""
    lines = []
    for label, attr in _TABLE_ROWS:
        if attr.startswith("evidence") and not report.evidence_scored:
            shown = "-"
        else:
            shown = f"{100 * getattr(report, attr):.1f}"
        lines.append(f"{label:<12} {shown:>6}")
    return "\n".join(lines)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "micro_precision": report.micro_precision,
        "micro_recall": report.micro_recall,
        "micro_f1": report.micro_f1,
        "macro_f1": report.macro_f1,
        "document_count": report.document_count,
        "evidence_recall": report.evidence_recall,
        "evidence_precision": report.evidence_precision,
        "evidence_f1": report.evidence_f1,
        "evidence_scored": report.evidence_scored,
        "per_code": {
            code: {"tp": t.tp, "fp": t.fp, "fn": t.fn, "f1": t.f1}
            for code, t in report.per_code.items()
        },
    }


def save_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
