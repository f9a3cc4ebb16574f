/** DOM rendering: a status/budget panel, the annotation queue as cards with
 * both heads' top-3 guesses side by side, and a metrics sparkline. */

import type { ClassScore } from "./api.js";
import { budgetView, classNames, SessionState } from "./state.js";

export interface RenderCallbacks {
  onSubmit: (sampleId: number, label: number) => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function scoreList(doc: Document, title: string, scores: ClassScore[]) {
  const box = el(doc, "div", "guesses");
  box.appendChild(el(doc, "h4", undefined, title));
  const ul = el(doc, "ul");
  for (const [name, score] of scores) {
    ul.appendChild(el(doc, "li", undefined, `${name} (${score.toFixed(2)})`));
  }
  box.appendChild(ul);
  return box;
}

export function renderStatus(doc: Document, root: Element,
                             state: SessionState): void {
  root.textContent = "";
  const s = state.status;
  const budget = budgetView(state);
  const line = s
    ? `${s.mode ?? "?"} — epoch ${s.epoch}/${s.max_epoch}` +
      (s.paused ? " (paused)" : "")
    : "connecting...";
  root.appendChild(el(doc, "div", "status-line", line));

  const gauge = el(doc, "div", "budget-gauge");
  gauge.setAttribute("data-used", String(budget.used));
  gauge.setAttribute("data-total", String(budget.total));
  gauge.setAttribute("data-remaining", String(budget.remaining));
  gauge.appendChild(el(doc, "span", "budget-text",
    `budget ${budget.used}/${budget.total} (${budget.remaining} left)`));
  const bar = el(doc, "div", "budget-bar");
  const fill = el(doc, "div", "budget-fill");
  fill.style.width = budget.total
    ? `${Math.round((100 * budget.used) / budget.total)}%`
    : "0%";
  bar.appendChild(fill);
  gauge.appendChild(bar);
  root.appendChild(gauge);

  if (state.lastError) {
    root.appendChild(el(doc, "div", "error-line", state.lastError));
  }
}

export function renderQueue(doc: Document, root: Element,
                            state: SessionState,
                            callbacks: RenderCallbacks): void {
  root.textContent = "";
  if (state.cards.length === 0) {
    root.appendChild(el(doc, "div", "banner", "no round open"));
    return;
  }
  const names = classNames(state);
  for (const card of state.cards) {
    const item = card.item;
    const box = el(doc, "div", `card card-${card.phase}`);
    box.setAttribute("data-sample", String(item.sample_id));

    const head = el(doc, "div", "card-head");
    head.appendChild(el(doc, "span", `badge badge-${item.category}`,
      item.category));
    head.appendChild(el(doc, "span", "sample-id", `#${item.sample_id}`));
    head.appendChild(el(doc, "span", "un-score",
      `uncertainty ${item.un_score.toFixed(3)}`));
    box.appendChild(head);

    if (item.media_ref) {
      const img = el(doc, "img", "sample-image");
      img.src = item.media_ref;
      img.alt = `sample ${item.sample_id}`;
      box.appendChild(img);
    }

    const pair = el(doc, "div", "guess-pair");
    pair.appendChild(scoreList(doc, "vision head", item.top_classes_vision));
    pair.appendChild(scoreList(doc, "text head", item.top_classes_text));
    box.appendChild(pair);

    if (card.phase === "duplicate") {
      box.appendChild(el(doc, "div", "flag", "already labeled"));
    } else if (card.phase === "failed") {
      box.appendChild(el(doc, "div", "flag flag-error",
        `${card.error ?? "failed"} — pick again to retry`));
    }

    const controls = el(doc, "div", "card-controls");
    const picker = el(doc, "select", "class-picker") as HTMLSelectElement;
    picker.appendChild(new Option("choose class...", ""));
    names.forEach((name, idx) => {
      picker.appendChild(new Option(name, String(idx)));
    });
    picker.disabled = card.phase === "pending" || card.phase === "duplicate";
    picker.addEventListener("change", () => {
      if (picker.value === "") return;
      callbacks.onSubmit(item.sample_id, Number(picker.value));
    });
    controls.appendChild(picker);
    if (card.phase === "pending") {
      controls.appendChild(el(doc, "span", "spinner", "submitting..."));
    }
    box.appendChild(controls);
    root.appendChild(box);
  }
}

export function renderMetrics(doc: Document, root: Element,
                              state: SessionState): void {
  root.textContent = "";
  const rows = state.metrics;
  if (rows.length === 0) {
    root.appendChild(el(doc, "div", "banner", "no metrics yet"));
    return;
  }
  const latest = rows[rows.length - 1];
  const summary = el(doc, "div", "metrics-summary");
  const fmt = (x: number | null | undefined) =>
    x === null || x === undefined ? "-" : (100 * x).toFixed(1) + "%";
  summary.textContent =
    `epoch ${latest.epoch}: vision ${fmt(latest.acc_v)} · ` +
    `text ${fmt(latest.acc_l)} · ensemble ${fmt(latest.acc_ens)} · ` +
    `w*=${latest.w_star.toFixed(3)} · labeled ${latest.n_labeled}`;
  root.appendChild(summary);

  // inline SVG sparkline of the ensemble accuracy, one point per epoch
  const w = 360;
  const h = 60;
  const svg = doc.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", `0 0 ${w} ${h}`);
  svg.setAttribute("class", "metrics-chart");
  svg.setAttribute("data-points", String(rows.length));
  const pts = rows
    .map((r, i) => {
      const x = rows.length > 1 ? (i / (rows.length - 1)) * (w - 4) + 2 : w / 2;
      const y = h - 2 - (r.acc_ens ?? 0) * (h - 4);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
  const line = doc.createElementNS("http://www.w3.org/2000/svg", "polyline");
  line.setAttribute("points", pts);
  line.setAttribute("fill", "none");
  line.setAttribute("stroke", "#2a7ae2");
  line.setAttribute("stroke-width", "1.5");
  svg.appendChild(line);
  root.appendChild(svg);
}

export function renderAll(doc: Document, state: SessionState,
                          callbacks: RenderCallbacks): void {
  const statusRoot = doc.getElementById("status");
  const queueRoot = doc.getElementById("queue");
  const metricsRoot = doc.getElementById("metrics");
  if (statusRoot) renderStatus(doc, statusRoot, state);
  if (queueRoot) renderQueue(doc, queueRoot, state, callbacks);
  if (metricsRoot) renderMetrics(doc, metricsRoot, state);
}
