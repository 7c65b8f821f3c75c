/**
 * Review UI: a document list, the note with evidence highlighted in place,
 * an editable evidence list, predict / re-code actions, the revision history
 * with an active-revision picker, and the live corpus report.
 *
 * All rendering is plain DOM; the only I/O goes through ReviewApi.
 */

import { ApiError, ReviewApi } from "./api.js";
import { layoutHighlights } from "./highlight.js";
import type { DocumentDetail, DocumentSummary, Report, Revision } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function viewedRevision(detail: DocumentDetail): Revision | null {
  if (detail.current === null) return null;
  return detail.revisions[detail.current] ?? null;
}

/** Evidence driving the note highlights: the active revision's spans when one
 * exists, the gold annotations otherwise. */
export function displayedEvidence(detail: DocumentDetail): string[] {
  const revision = viewedRevision(detail);
  if (revision) return [...revision.evidence];
  return detail.gold_evidence.map((span) => span.text);
}

const REPORT_ROWS: Array<[string, keyof Report, boolean]> = [
  ["Micro-F1", "micro_f1", false],
  ["Macro-F1", "macro_f1", false],
  ["Recall", "micro_recall", false],
  ["Precision", "micro_precision", false],
  ["Evi-Recall", "evidence_recall", true],
  ["Evi-F1", "evidence_f1", true],
];

export class App {
  private summaries: DocumentSummary[] = [];
  private detail: DocumentDetail | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ReviewApi,
  ) {}

  async init(): Promise<void> {
    this.renderShell();
    await this.refreshList();
    await this.refreshReport();
    if (this.summaries.length > 0) await this.open(this.summaries[0].id);
  }

  private byId(id: string): HTMLElement {
    const node = this.root.querySelector<HTMLElement>(`[data-testid="${id}"]`);
    if (!node) throw new Error(`missing UI region ${id}`);
    return node;
  }

  private setStatus(message: string): void {
    this.byId("status").textContent = message;
  }

  private async guarded(action: () => Promise<void>): Promise<void> {
    try {
      await action();
      this.setStatus("");
    } catch (error) {
      if (error instanceof ApiError) this.setStatus(error.message);
      else this.setStatus(String(error));
    }
  }

  private renderShell(): void {
    this.root.replaceChildren();
    const status = el("p", { "data-testid": "status", class: "status" });
    const sidebar = el("aside", { class: "sidebar" });
    sidebar.append(el("h2", {}, "Documents"), el("ul", { "data-testid": "doc-list" }));

    const note = el("section", { class: "note-panel" });
    note.append(
      el("h2", { "data-testid": "doc-title" }, ""),
      el("div", { "data-testid": "note", class: "note" }),
      el("h3", {}, "Not located in note"),
      el("ul", { "data-testid": "missing-tray", class: "missing" }),
    );

    const editor = el("section", { class: "editor-panel" });
    const buttons = el("div", { class: "actions" });
    const predict = el("button", { "data-testid": "predict-btn" }, "Predict");
    const recode = el("button", { "data-testid": "recode-btn" }, "Re-code with evidence");
    predict.addEventListener("click", () => void this.guarded(() => this.predict()));
    recode.addEventListener("click", () => void this.guarded(() => this.recode()));
    buttons.append(predict, recode);
    editor.append(
      el("h2", {}, "Evidence (one span per line)"),
      el("textarea", { "data-testid": "evidence-editor", rows: "8" }),
      buttons,
      el("h3", {}, "Codes"),
      el("ul", { "data-testid": "codes-list" }),
      el("h3", {}, "Revisions"),
      el("ol", { "data-testid": "revision-list" }),
    );

    const report = el("section", { class: "report-panel" });
    const refresh = el("button", { "data-testid": "report-refresh" }, "Refresh report");
    refresh.addEventListener("click", () => void this.guarded(() => this.refreshReport()));
    report.append(el("h2", {}, "Corpus report"), el("table", { "data-testid": "report" }), refresh);

    this.root.append(status, sidebar, note, editor, report);
  }

  private async refreshList(): Promise<void> {
    this.summaries = await this.api.listDocuments();
    const list = this.byId("doc-list");
    list.replaceChildren(
      ...this.summaries.map((summary) => {
        const item = el("li", { "data-testid": "doc-item", "data-doc-id": summary.id });
        const link = el("a", { href: "#" }, `${summary.id} (${summary.revision_count} rev)`);
        link.addEventListener("click", (event) => {
          event.preventDefault();
          void this.guarded(() => this.open(summary.id));
        });
        item.append(link);
        return item;
      }),
    );
  }

  async open(id: string): Promise<void> {
    this.detail = await this.api.getDocument(id);
    this.renderDetail();
  }

  private renderDetail(): void {
    const detail = this.detail;
    if (!detail) return;
    this.byId("doc-title").textContent = detail.id;

    const spans = displayedEvidence(detail);
    const layout = layoutHighlights(detail.text, spans);
    const note = this.byId("note");
    note.replaceChildren(
      ...layout.segments.map((segment) =>
        segment.spanIndex === null
          ? document.createTextNode(segment.text)
          : el("mark", { "data-testid": "highlight" }, segment.text),
      ),
    );

    const tray = this.byId("missing-tray");
    tray.replaceChildren(
      ...layout.missing.map((index) =>
        el("li", { "data-testid": "missing-span" }, spans[index]),
      ),
    );

    const editor = this.byId("evidence-editor") as HTMLTextAreaElement;
    editor.value = spans.join("\n");

    const revision = viewedRevision(detail);
    const codes = revision ? revision.codes : [];
    this.byId("codes-list").replaceChildren(
      ...codes.map((code) => el("li", { "data-testid": "code-item" }, code)),
      ...(codes.length === 0 ? [el("li", { class: "placeholder" }, "no revision yet")] : []),
    );

    const revisions = this.byId("revision-list");
    revisions.replaceChildren(
      ...detail.revisions.map((rev) => {
        const item = el("li", { "data-testid": "revision-item", "data-mode": rev.mode });
        const radio = el("input", { type: "radio", name: "current-revision" }) as HTMLInputElement;
        radio.checked = detail.current === rev.index;
        radio.addEventListener("change", () =>
          void this.guarded(() => this.selectRevision(rev.index)),
        );
        item.append(
          radio,
          el("span", {}, ` #${rev.index} ${rev.mode}, ${rev.codes.length} codes`),
        );
        return item;
      }),
    );
  }

  private editorSpans(): string[] {
    const editor = this.byId("evidence-editor") as HTMLTextAreaElement;
    return editor.value
      .split("\n")
      .map((line) => line.trim())
      .filter((line) => line.length > 0);
  }

  private async predict(): Promise<void> {
    if (!this.detail) return;
    await this.api.predict(this.detail.id);
    await this.open(this.detail.id);
    await this.refreshList();
  }

  private async recode(): Promise<void> {
    if (!this.detail) return;
    await this.api.recode(this.detail.id, this.editorSpans());
    await this.open(this.detail.id);
    await this.refreshList();
  }

  private async selectRevision(index: number): Promise<void> {
    if (!this.detail) return;
    await this.api.setCurrent(this.detail.id, index);
    await this.open(this.detail.id);
  }

  async refreshReport(): Promise<void> {
    const report = await this.api.report();
    const table = this.byId("report");
    table.replaceChildren(
      ...REPORT_ROWS.map(([label, key, evidenceOnly]) => {
        const row = el("tr", {});
        const shown =
          evidenceOnly && !report.evidence_scored
            ? "-"
            : (100 * (report[key] as number)).toFixed(1);
        row.append(el("td", {}, label), el("td", { "data-metric": key }, shown));
        return row;
      }),
    );
  }
}

export function createApp(root: HTMLElement, api: ReviewApi): App {
  return new App(root, api);
}
