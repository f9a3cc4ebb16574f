/** App wiring: poll the service every 2 s, render, and submit labels with
 * optimistic updates rolled back on rejection. */

import { ApiClient } from "./api.js";
import { renderAll } from "./render.js";
import {
  applyMetrics, applyQueue, applyStatus, initialState, markPending,
  resolveSubmission, SessionState,
} from "./state.js";

export const POLL_INTERVAL_MS = 2000;

export class App {
  readonly api: ApiClient;
  readonly state: SessionState;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private doc: Document,
    serverUrl: string,
    private annotator: string = "annotator",
  ) {
    this.api = new ApiClient(serverUrl);
    this.state = initialState(serverUrl);
  }

  async poll(): Promise<void> {
    try {
      const [status, queue, metrics] = await Promise.all([
        this.api.getStatus(),
        this.api.getQueue(),
        this.api.getMetrics(),
      ]);
      applyStatus(this.state, status);
      applyQueue(this.state, queue);
      applyMetrics(this.state, metrics);
      this.state.lastError = null;
    } catch (err) {
      this.state.lastError = `server unreachable: ${String(err)}`;
    }
    this.render();
  }

  async submit(sampleId: number, label: number): Promise<void> {
    markPending(this.state, sampleId);
    this.render();
    const outcome = await this.api.submitLabel(sampleId, label,
                                               this.annotator);
    resolveSubmission(this.state, sampleId, outcome);
    if (outcome.kind === "ok" && this.state.status) {
      // the server has accepted: reflect it in the gauge immediately
      this.state.status.budget_used += 1;
    }
    this.render();
  }

  render(): void {
    renderAll(this.doc, this.state, {
      onSubmit: (sampleId, label) => void this.submit(sampleId, label),
    });
  }

  start(): void {
    void this.poll();
    this.timer = setInterval(() => void this.poll(), POLL_INTERVAL_MS);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }
}

declare global {
  interface Window {
    modsepApp?: App;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined" &&
    document.getElementById("queue")) {
  const params = new URLSearchParams(window.location.search);
  const server = params.get("server") ?? "http://127.0.0.1:8490";
  const annotator = params.get("annotator") ?? "annotator";
  const app = new App(document, server, annotator);
  window.modsepApp = app;
  app.start();
}
