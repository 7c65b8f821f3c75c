/**
 * Typed client for the review service. One method per endpoint:
 *
 *   GET  /documents                     list documents
 *   GET  /documents/{id}                note text, gold labels, revisions
 *   POST /documents/{id}/predict       run the model, append a revision
 *   POST /documents/{id}/recode        re-code with reviewer evidence
 *   PUT  /documents/{id}/current       select the active revision
 *   GET  /report                        corpus metrics over current revisions
 */

import type {
  CurrentSelection,
  DocumentDetail,
  DocumentSummary,
  Report,
  Revision,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ReviewApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const payload = await response.json();
        if (payload && typeof payload.detail === "string") detail = payload.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  listDocuments(): Promise<DocumentSummary[]> {
    return this.request("GET", "/documents");
  }

  getDocument(id: string): Promise<DocumentDetail> {
    return this.request("GET", `/documents/${encodeURIComponent(id)}`);
  }

  predict(id: string): Promise<Revision> {
    return this.request("POST", `/documents/${encodeURIComponent(id)}/predict`);
  }

  recode(id: string, evidence: string[]): Promise<Revision> {
    return this.request("POST", `/documents/${encodeURIComponent(id)}/recode`, {
      evidence,
    });
  }

  setCurrent(id: string, revision: number): Promise<CurrentSelection> {
    return this.request("PUT", `/documents/${encodeURIComponent(id)}/current`, {
      revision,
    });
  }

  report(): Promise<Report> {
    return this.request("GET", "/report");
  }
}
