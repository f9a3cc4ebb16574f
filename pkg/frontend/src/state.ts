/** Session state: everything derives from server responses, so a reload
 * rebuilds the identical view. Optimistic submissions are reconciled against
 * the server on every poll. */

import type { MetricsRow, QueueItem, Status } from "./api.js";

export type CardPhase = "idle" | "pending" | "duplicate" | "failed";

export interface Card {
  item: QueueItem;
  phase: CardPhase;
  error?: string;
}

export interface SessionState {
  serverUrl: string;
  status: Status | null;
  cards: Card[];                 // rendered order equals server order
  metrics: MetricsRow[];         // one point per epoch, strictly increasing
  pending: Set<number>;          // sample ids awaiting a server verdict
  duplicates: Set<number>;       // flagged already-labeled by the server
  failures: Map<number, string>; // sample id -> retry-able error message
  lastError: string | null;
}

export function initialState(serverUrl: string): SessionState {
  return {
    serverUrl,
    status: null,
    cards: [],
    metrics: [],
    pending: new Set(),
    duplicates: new Set(),
    failures: new Map(),
    lastError: null,
  };
}

export function applyStatus(state: SessionState, status: Status): void {
  state.status = status;
}

/** Merge a fresh queue snapshot, preserving server order exactly. Samples
 * that left the queue drop their transient flags. */
export function applyQueue(state: SessionState, queue: QueueItem[]): void {
  const present = new Set(queue.map((q) => q.sample_id));
  for (const id of [...state.pending]) {
    if (!present.has(id)) state.pending.delete(id);
  }
  for (const id of [...state.duplicates]) {
    if (!present.has(id)) state.duplicates.delete(id);
  }
  for (const id of [...state.failures.keys()]) {
    if (!present.has(id)) state.failures.delete(id);
  }
  state.cards = queue.map((item) => {
    const id = item.sample_id;
    let phase: CardPhase = "idle";
    if (state.pending.has(id)) phase = "pending";
    else if (state.duplicates.has(id)) phase = "duplicate";
    else if (state.failures.has(id)) phase = "failed";
    return { item, phase, error: state.failures.get(id) };
  });
}

export function applyMetrics(
  state: SessionState,
  row: Partial<MetricsRow>,
): void {
  if (row.epoch === undefined) return;
  const last = state.metrics[state.metrics.length - 1];
  if (last !== undefined && row.epoch <= last.epoch) return;
  state.metrics.push(row as MetricsRow);
}

export function markPending(state: SessionState, sampleId: number): void {
  state.pending.add(sampleId);
  state.failures.delete(sampleId);
  syncCardPhases(state);
}

export function resolveSubmission(
  state: SessionState,
  sampleId: number,
  outcome: { kind: string; message?: string },
): void {
  state.pending.delete(sampleId);
  switch (outcome.kind) {
    case "ok":
      // the card disappears once the next queue snapshot arrives; hide the
      // card right away so a submit feels immediate
      state.cards = state.cards.filter((c) => c.item.sample_id !== sampleId);
      break;
    case "duplicate":
      state.duplicates.add(sampleId);
      break;
    case "budget":
      state.lastError = "annotation budget exhausted";
      break;
    default:
      state.failures.set(sampleId, outcome.message ?? "submit failed");
  }
  syncCardPhases(state);
}

function syncCardPhases(state: SessionState): void {
  for (const card of state.cards) {
    const id = card.item.sample_id;
    if (state.pending.has(id)) card.phase = "pending";
    else if (state.duplicates.has(id)) card.phase = "duplicate";
    else if (state.failures.has(id)) {
      card.phase = "failed";
      card.error = state.failures.get(id);
    } else card.phase = "idle";
  }
}

/** Budget figures for the gauge. The displayed remaining budget counts
 * in-flight submissions, so it never exceeds what /status reports. */
export function budgetView(state: SessionState): {
  total: number;
  used: number;
  remaining: number;
} {
  const total = state.status?.budget_total ?? 0;
  const used = state.status?.budget_used ?? 0;
  const remaining = Math.max(0, total - used - state.pending.size);
  return { total, used, remaining };
}

/** Class labels the picker may offer; submissions outside this list are
 * impossible by construction. */
export function classNames(state: SessionState): string[] {
  return state.status?.class_names ?? [];
}
