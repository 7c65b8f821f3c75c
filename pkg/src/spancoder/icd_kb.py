"""ICD-10-CM code knowledge base.

Parses the CMS order-file distribution of the Tabular List into an immutable
code hierarchy, parses the flat Alphabetic Index interchange format, and
provides code normalization plus nearest-neighbor lookup over the hierarchy.
"""

from __future__ import annotations

import json
import logging
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

# One letter, two alphanumerics, then optionally a dot and 1-4 alphanumerics.
CODE_SHAPE_RE = re.compile(r"[A-Z][0-9A-Z]{2}(?:\.[0-9A-Z]{1,4})?")

_TOKEN_TRIM_CHARS = ".,;:!?()[]{}<>\"'`*_-"


class CodeShapeError(ValueError):
    """Raised when a token cannot be normalized to the ICD-10-CM code shape."""


class UnknownCodeError(KeyError):
    """Raised when a shape-valid code is absent from the hierarchy in strict mode."""


class OrderFileError(ValueError):
    """Raised on a malformed, duplicated, or shape-invalid order-file line."""


@dataclass(frozen=True)
class CodeRecord:
    """One Tabular List entry: a code with its descriptions and billable flag."""

    code: str
    short_description: str
    long_description: str
    billable: bool
    parent: str | None = None


@dataclass(frozen=True)
class IndexEntry:
    """One Alphabetic Index record: a lead term mapped to its default code."""

    term: str
    code: str


@dataclass(frozen=True)
class CodeHierarchy:
    """Immutable code table with parent/child navigation.

    ``children`` lists and ``roots`` are lexicographically sorted so every
    traversal is deterministic. Safe for unlimited concurrent readers.
    """

    records: dict[str, CodeRecord]
    children: dict[str, list[str]] = field(default_factory=dict)
    roots: list[str] = field(default_factory=list)

    def __contains__(self, code: str) -> bool:
        return code in self.records

    def __len__(self) -> int:
        return len(self.records)

    def record(self, code: str) -> CodeRecord:
        try:
            return self.records[code]
        except KeyError:
            raise UnknownCodeError(f"code {code!r} is not in the knowledge base") from None

    def long_description(self, code: str) -> str:
        return self.record(code).long_description

    def parent_of(self, code: str) -> str | None:
        return self.record(code).parent

    def children_of(self, code: str) -> list[str]:
        return list(self.children.get(code, []))

    def siblings_of(self, code: str) -> list[str]:
        """Codes sharing this code's parent (roots are mutual siblings), excluding it."""
        parent = self.record(code).parent
        pool = self.children.get(parent, []) if parent is not None else self.roots
        return [c for c in pool if c != code]

    def codes(self) -> list[str]:
        return sorted(self.records)

    def to_json(self) -> str:
        rows = [
            {
                "code": r.code,
                "short_description": r.short_description,
                "long_description": r.long_description,
                "billable": r.billable,
            }
            for r in (self.records[c] for c in sorted(self.records))
        ]
        return json.dumps({"records": rows}, indent=2, sort_keys=True)


def strip_dot(code: str) -> str:
    return code.replace(".", "")


def _dotted(dotless: str) -> str:
    return dotless if len(dotless) <= 3 else dotless[:3] + "." + dotless[3:]


def _valid_shape(token: str) -> bool:
    return CODE_SHAPE_RE.fullmatch(token) is not None


def normalize_code(raw: str, hierarchy: CodeHierarchy, strict: bool = True) -> str:
    """Normalize a candidate code token against the knowledge base.

    Uppercases the token; a dotless token longer than three characters gets a
    dot inserted after position 3 when the dotted form exists in the
    hierarchy. Raises CodeShapeError on anything that cannot be brought into
    the code shape; raises UnknownCodeError for shape-valid codes absent from
    the hierarchy when ``strict`` is set, otherwise returns them as-is
    (callers flag them unknown).
    """
    token = raw.strip().upper()
    if _valid_shape(token):
        candidate = token
    elif "." not in token and len(token) > 3 and _dotted(token) in hierarchy:
        candidate = _dotted(token)
    else:
        raise CodeShapeError(f"not an ICD-10-CM code shape: {raw!r}")
    if strict and candidate not in hierarchy:
        raise UnknownCodeError(f"code {candidate!r} is not in the knowledge base")
    return candidate


def _code_like(token: str) -> bool:
    # every real code carries a digit; this keeps case-folded prose words
    # ("and" -> "AND") from matching the shape pattern
    return _valid_shape(token) and any(ch.isdigit() for ch in token)


def extract_code_token(line: str) -> str | None:
    """First whitespace token of ``line`` that looks like a code, if any.

    Tokens are trimmed of surrounding punctuation before matching, so
    "(J44.9)" and "I25.10." both yield their inner code.
    """
    for token in line.split():
        trimmed = token.strip(_TOKEN_TRIM_CHARS).upper()
        if trimmed and _code_like(trimmed):
            return trimmed
    return None


def scan_code_tokens(text: str) -> list[str]:
    """All code-looking tokens in ``text``, in order of appearance."""
    found = []
    for token in text.split():
        trimmed = token.strip(_TOKEN_TRIM_CHARS).upper()
        if trimmed and _code_like(trimmed):
            found.append(trimmed)
    return found


# CMS order-file layout, 1-based columns:
#   1-5 order number, 7-13 dotless code, 15 billable flag, 17-76 short
#   description, 78-end long description.
_ORDER_NUM = slice(0, 5)
_ORDER_CODE = slice(6, 13)
_ORDER_FLAG = 14
_ORDER_SHORT = slice(16, 76)
_ORDER_LONG_START = 77


def parse_order_file(content: str) -> CodeHierarchy:
    """Parse CMS order-file text into a code hierarchy.

    Parents are inferred as the longest proper dotless prefix that is itself
    a code in the file; codes without such a prefix become roots.
    """
    rows: dict[str, tuple[str, str, bool]] = {}
    order: list[str] = []
    for lineno, line in enumerate(content.splitlines(), 1):
        if not line.strip():
            continue
        if len(line) < _ORDER_SHORT.start + 1:
            raise OrderFileError(f"line {lineno}: too short for the order-file layout")
        if not line[_ORDER_NUM].strip().isdigit():
            raise OrderFileError(f"line {lineno}: order number is not numeric")
        flag = line[_ORDER_FLAG]
        if flag not in ("0", "1"):
            raise OrderFileError(f"line {lineno}: billable flag must be '0' or '1', got {flag!r}")
        dotless = line[_ORDER_CODE].strip().upper()
        code = _dotted(dotless)
        if not _valid_shape(code):
            raise OrderFileError(f"line {lineno}: invalid code shape {dotless!r}")
        if code in rows:
            raise OrderFileError(f"line {lineno}: duplicate code {code}")
        short = line[_ORDER_SHORT].strip()
        long = line[_ORDER_LONG_START:].strip() if len(line) > _ORDER_LONG_START else ""
        rows[code] = (short, long or short, flag == "1")
        order.append(code)

    dotless_to_code = {strip_dot(c): c for c in rows}
    records: dict[str, CodeRecord] = {}
    children: dict[str, list[str]] = {}
    roots: list[str] = []
    for code in order:
        short, long, billable = rows[code]
        parent = None
        dotless = strip_dot(code)
        for cut in range(len(dotless) - 1, 2, -1):
            candidate = dotless_to_code.get(dotless[:cut])
            if candidate is not None:
                parent = candidate
                break
        records[code] = CodeRecord(code, short, long, billable, parent)
        if parent is None:
            roots.append(code)
        else:
            children.setdefault(parent, []).append(code)

    for kids in children.values():
        kids.sort()
    return CodeHierarchy(records=records, children=children, roots=sorted(roots))


def parse_alpha_index(content: str) -> list[IndexEntry]:
    """Parse the line-delimited JSON Alphabetic Index interchange format.

    Records missing a field or carrying an invalid code shape are skipped;
    the skip count is logged. Terms are whitespace-normalized.
    """
    entries: list[IndexEntry] = []
    skipped = 0
    for lineno, line in enumerate(content.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            term = " ".join(str(obj["term"]).split())
            if not term:
                raise ValueError("empty term")
            token = str(obj["code"]).strip().upper()
            code = token if _valid_shape(token) else _dotted(token)
            if not _valid_shape(code):
                raise CodeShapeError(token)
        except (ValueError, KeyError, TypeError):
            skipped += 1
            logger.warning("alpha index line %d skipped: %s", lineno, line.strip()[:80])
            continue
        entries.append(IndexEntry(term=term, code=code))
    if skipped:
        logger.info("alpha index: %d entries parsed, %d skipped", len(entries), skipped)
    return entries


def nearest_code(target: str, hierarchy: CodeHierarchy, covered: set[str]) -> str:
    """Covered code at minimum tree distance from ``target``.

    Distance is path length in the parent/child tree, with chapter roots
    joined through one virtual super-root so every pair of codes is
    connected. Ties break lexicographically. BFS expands outward from the
    target one level at a time.
    """
    if not covered:
        raise ValueError("covered set is empty")
    if target not in hierarchy:
        raise UnknownCodeError(f"target {target!r} is not in the knowledge base")
    if target in covered:
        raise ValueError(f"target {target!r} is already covered")

    sentinel = None  # virtual super-root joining chapter roots

    def neighbors(node: str | None) -> list[str | None]:
        if node is sentinel:
            return list(hierarchy.roots)
        record = hierarchy.records[node]
        out: list[str | None] = [record.parent if record.parent is not None else sentinel]
        out.extend(hierarchy.children.get(node, []))
        return out

    visited: set[str | None] = {target}
    frontier: list[str | None] = [target]
    while frontier:
        nxt: list[str | None] = []
        for node in frontier:
            for nb in neighbors(node):
                if nb not in visited:
                    visited.add(nb)
                    nxt.append(nb)
        hits = sorted(n for n in nxt if n is not None and n in covered)
        if hits:
            return hits[0]
        frontier = nxt
    raise ValueError("no covered code is reachable from the target")


def load_hierarchy(path: str | Path) -> CodeHierarchy:
    """Load a hierarchy from an order file or from a compiled JSON snapshot."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        return hierarchy_from_json(text)
    return parse_order_file(text)


def hierarchy_from_json(text: str) -> CodeHierarchy:
    """Rebuild a hierarchy from a ``to_json`` snapshot (links are re-derived)."""
    rows = json.loads(text)["records"]
    width = max((len(strip_dot(r["code"])) for r in rows), default=3)
    lines = []
    for i, r in enumerate(rows, 1):
        dotless = strip_dot(r["code"]).ljust(max(7, width))
        flag = "1" if r["billable"] else "0"
        short = r["short_description"][:60].ljust(60)
        lines.append(f"{i:05d} {dotless[:7]} {flag} {short} {r['long_description']}")
    return parse_order_file("\n".join(lines))
