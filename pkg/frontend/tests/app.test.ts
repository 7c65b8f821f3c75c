// @vitest-environment jsdom

import { beforeEach, describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api.js";
import { createApp, displayedEvidence } from "../src/app.js";
import {
  DOCUMENTED_ENDPOINTS,
  FixtureService,
  MODEL_CODES,
  MODEL_EVIDENCE,
  RECODE_CODES,
} from "./fixture_service.js";

const NOTE = "Patient with CAD and stable COPD seen today for follow-up.";

function makeService(): FixtureService {
  return new FixtureService([
    {
      id: "doc-1",
      text: NOTE,
      gold_codes: ["I25.10", "J44.9", "D62"],
      gold_evidence: [
        { text: "CAD", code: "I25.10", start: 13 },
        { text: "stable COPD", code: "J44.9", start: 21 },
        { text: "acute blood loss anemia", code: "D62", start: null },
      ],
    },
    {
      id: "doc-2",
      text: "Hypertension well controlled.",
      gold_codes: ["I10"],
      gold_evidence: [{ text: "Hypertension", code: "I10", start: 0 }],
    },
  ]);
}

async function flush(): Promise<void> {
  for (let i = 0; i < 5; i += 1) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

function queryAll(selector: string): HTMLElement[] {
  return [...document.querySelectorAll<HTMLElement>(selector)];
}

function texts(selector: string): string[] {
  return queryAll(selector).map((node) => node.textContent ?? "");
}

describe("review app", () => {
  let service: FixtureService;

  beforeEach(async () => {
    document.body.innerHTML = '<div id="app"></div>';
    service = makeService();
    const api = new ReviewApi("", service.fetch);
    const app = createApp(document.getElementById("app") as HTMLElement, api);
    await app.init();
    await flush();
  });

  it("renders highlights whose substrings equal the evidence spans", () => {
    expect(texts('[data-testid="highlight"]')).toEqual(["CAD", "stable COPD"]);
    expect(texts('[data-testid="missing-span"]')).toEqual(["acute blood loss anemia"]);
    const note = document.querySelector('[data-testid="note"]');
    expect(note?.textContent).toBe(NOTE);
  });

  it("lists all documents and opens the first", () => {
    expect(queryAll('[data-testid="doc-item"]')).toHaveLength(2);
    expect(document.querySelector('[data-testid="doc-title"]')?.textContent).toBe("doc-1");
  });

  it("prediction appends a model revision and shows its codes", async () => {
    (document.querySelector('[data-testid="predict-btn"]') as HTMLElement).click();
    await flush();
    const doc = service.docs.get("doc-1")!;
    expect(doc.revisions).toHaveLength(1);
    expect(doc.revisions[0].mode).toBe("model");
    expect(texts('[data-testid="code-item"]')).toEqual(MODEL_CODES);
    expect(texts('[data-testid="highlight"]')).toEqual(MODEL_EVIDENCE);
  });

  it("edit-and-recode appends exactly one human_evid revision and refreshes codes", async () => {
    (document.querySelector('[data-testid="predict-btn"]') as HTMLElement).click();
    await flush();

    const editor = document.querySelector(
      '[data-testid="evidence-editor"]',
    ) as HTMLTextAreaElement;
    editor.value = "CAD\n today ";
    (document.querySelector('[data-testid="recode-btn"]') as HTMLElement).click();
    await flush();

    const doc = service.docs.get("doc-1")!;
    const humanRevisions = doc.revisions.filter((r) => r.mode === "human_evid");
    expect(humanRevisions).toHaveLength(1);
    expect(humanRevisions[0].evidence).toEqual(["CAD", "today"]);
    expect(texts('[data-testid="code-item"]')).toEqual(RECODE_CODES);
    expect(texts('[data-testid="highlight"]')).toEqual(["CAD", "today"]);
    const modes = queryAll('[data-testid="revision-item"]').map((n) =>
      n.getAttribute("data-mode"),
    );
    expect(modes).toEqual(["model", "human_evid"]);
  });

  it("switching the active revision re-renders its evidence", async () => {
    (document.querySelector('[data-testid="predict-btn"]') as HTMLElement).click();
    await flush();
    const editor = document.querySelector(
      '[data-testid="evidence-editor"]',
    ) as HTMLTextAreaElement;
    editor.value = "CAD";
    (document.querySelector('[data-testid="recode-btn"]') as HTMLElement).click();
    await flush();

    const radios = queryAll('[data-testid="revision-item"] input');
    (radios[0] as HTMLInputElement).click();
    await flush();
    expect(service.docs.get("doc-1")!.current).toBe(0);
    expect(texts('[data-testid="code-item"]')).toEqual(MODEL_CODES);
  });

  it("shows the corpus report with one-decimal percentages", () => {
    const cell = document.querySelector('[data-metric="micro_f1"]');
    expect(cell?.textContent).toBe("33.3");
    expect(document.querySelector('[data-metric="evidence_f1"]')?.textContent).toBe("-");
  });

  it("surfaces service errors in the status line", async () => {
    const editor = document.querySelector(
      '[data-testid="evidence-editor"]',
    ) as HTMLTextAreaElement;
    editor.value = "";
    (document.querySelector('[data-testid="recode-btn"]') as HTMLElement).click();
    await flush();
    const status = document.querySelector('[data-testid="status"]')?.textContent ?? "";
    expect(status).toContain("422");
  });

  it("every network call in the log matches a documented endpoint", async () => {
    (document.querySelector('[data-testid="predict-btn"]') as HTMLElement).click();
    await flush();
    const editor = document.querySelector(
      '[data-testid="evidence-editor"]',
    ) as HTMLTextAreaElement;
    editor.value = "CAD";
    (document.querySelector('[data-testid="recode-btn"]') as HTMLElement).click();
    await flush();
    (document.querySelector('[data-testid="report-refresh"]') as HTMLElement).click();
    await flush();

    expect(service.log.length).toBeGreaterThan(5);
    for (const call of service.log) {
      const documented = DOCUMENTED_ENDPOINTS.some(
        (endpoint) =>
          endpoint.method === call.method && endpoint.pattern.test(call.path),
      );
      expect(documented, `${call.method} ${call.path} is undocumented`).toBe(true);
    }
  });

  it("falls back to gold evidence before any revision exists", () => {
    const detail = {
      id: "d",
      text: "x",
      gold_codes: [],
      gold_evidence: [{ text: "CAD", code: "I25.10", start: null }],
      revisions: [],
      current: null,
    };
    expect(displayedEvidence(detail)).toEqual(["CAD"]);
  });
});
