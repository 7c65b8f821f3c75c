/**
 * Pure layout logic for in-text evidence highlighting. Each span is located
 * at its earliest case-insensitive occurrence that does not overlap an
 * already-placed span; spans that cannot be placed go to the "not located"
 * list so the editor can still show them.
 */

export interface Segment {
  text: string;
  /** index into the input span list, or null for plain text */
  spanIndex: number | null;
}

export interface HighlightLayout {
  segments: Segment[];
  /** indexes of spans that could not be located in the text */
  missing: number[];
}

interface Placement {
  start: number;
  end: number;
  spanIndex: number;
}

function overlaps(start: number, end: number, placed: Placement[]): boolean {
  return placed.some((p) => start < p.end && end > p.start);
}

function locate(haystack: string, needle: string, placed: Placement[]): number {
  let from = 0;
  for (;;) {
    const at = haystack.indexOf(needle, from);
    if (at < 0) return -1;
    if (!overlaps(at, at + needle.length, placed)) return at;
    from = at + 1;
  }
}

export function layoutHighlights(text: string, spans: string[]): HighlightLayout {
  const lower = text.toLowerCase();
  const placed: Placement[] = [];
  const missing: number[] = [];

  spans.forEach((span, spanIndex) => {
    const needle = span.trim().toLowerCase();
    if (!needle) {
      missing.push(spanIndex);
      return;
    }
    const start = locate(lower, needle, placed);
    if (start < 0) {
      missing.push(spanIndex);
    } else {
      placed.push({ start, end: start + needle.length, spanIndex });
    }
  });

  placed.sort((a, b) => a.start - b.start);
  const segments: Segment[] = [];
  let cursor = 0;
  for (const p of placed) {
    if (p.start > cursor) {
      segments.push({ text: text.slice(cursor, p.start), spanIndex: null });
    }
    segments.push({ text: text.slice(p.start, p.end), spanIndex: p.spanIndex });
    cursor = p.end;
  }
  if (cursor < text.length) {
    segments.push({ text: text.slice(cursor), spanIndex: null });
  }
  return { segments, missing };
}
