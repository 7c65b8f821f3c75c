/** Payload shapes of the review service REST API. */

export interface DocumentSummary {
  id: string;
  gold_code_count: number;
  revision_count: number;
  current: number | null;
}

export interface GoldSpan {
  text: string;
  code: string;
  start: number | null;
}

export interface Revision {
  index: number;
  timestamp: number;
  evidence: string[];
  codes: string[];
  mode: "model" | "human_evid";
  raw: string;
}

export interface DocumentDetail {
  id: string;
  text: string;
  gold_codes: string[];
  gold_evidence: GoldSpan[];
  revisions: Revision[];
  current: number | null;
}

export interface CurrentSelection {
  id: string;
  current: number;
}

export interface Report {
  micro_precision: number;
  micro_recall: number;
  micro_f1: number;
  macro_f1: number;
  document_count: number;
  evidence_recall: number;
  evidence_precision: number;
  evidence_f1: number;
  evidence_scored: boolean;
  per_code: Record<string, { tp: number; fp: number; fn: number; f1: number }>;
}
