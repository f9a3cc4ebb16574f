/** Typed client for the annotation-service JSON API. */

export interface Status {
  mode: string | null;
  epoch: number;
  max_epoch: number;
  budget_total: number;
  budget_used: number;
  paused: boolean;
  class_names: string[];
}

export type ClassScore = [string, number];

export interface QueueItem {
  sample_id: number;
  category: "UN-a" | "UN-e";
  un_score: number;
  top_classes_vision: ClassScore[];
  top_classes_text: ClassScore[];
  media_ref: string | null;
  round: number;
}

export interface MetricsRow {
  epoch: number;
  acc_v: number | null;
  acc_l: number | null;
  acc_ens: number | null;
  w_star: number;
  n_tc: number;
  n_labeled: number;
  mdi_counts: { mi: number; ms: number; un_a: number; un_e: number };
  losses: Record<string, number> | null;
}

export type SubmitOutcome =
  | { kind: "ok" }
  | { kind: "duplicate" }
  | { kind: "budget" }
  | { kind: "rejected"; message: string }
  | { kind: "network"; message: string };

export class ApiClient {
  constructor(public baseUrl: string) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.baseUrl + path);
    if (!resp.ok) throw new Error(`GET ${path} -> ${resp.status}`);
    return (await resp.json()) as T;
  }

  getStatus(): Promise<Status> {
    return this.getJson<Status>("/status");
  }

  getQueue(): Promise<QueueItem[]> {
    return this.getJson<QueueItem[]>("/queue");
  }

  getMetrics(): Promise<Partial<MetricsRow>> {
    return this.getJson<Partial<MetricsRow>>("/metrics");
  }

  async submitLabel(
    sampleId: number,
    label: number,
    annotator: string,
  ): Promise<SubmitOutcome> {
    let resp: Response;
    try {
      resp = await fetch(this.baseUrl + "/labels", {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ sample_id: sampleId, label, annotator }),
      });
    } catch (err) {
      return { kind: "network", message: String(err) };
    }
    if (resp.ok) return { kind: "ok" };
    let message = `HTTP ${resp.status}`;
    try {
      const body = (await resp.json()) as { error?: string };
      if (body.error) message = body.error;
    } catch {
      /* non-JSON error body */
    }
    if (resp.status === 409 && message === "duplicate")
      return { kind: "duplicate" };
    if (resp.status === 409 && message === "budget")
      return { kind: "budget" };
    return { kind: "rejected", message };
  }

  async control(action: "pause" | "resume" | "advance_round"): Promise<boolean> {
    const resp = await fetch(this.baseUrl + "/control", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ action }),
    });
    return resp.ok;
  }
}
