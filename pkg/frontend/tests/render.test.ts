// @vitest-environment jsdom
import { describe, expect, it } from "vitest";

import type { MetricsRow, QueueItem, Status } from "../src/api.js";
import { renderMetrics, renderQueue, renderStatus } from "../src/render.js";
import {
  applyMetrics, applyQueue, applyStatus, initialState, markPending,
  resolveSubmission,
} from "../src/state.js";

const STATUS: Status = {
  mode: "ada", epoch: 2, max_epoch: 10, budget_total: 8, budget_used: 3,
  paused: false, class_names: ["a", "b", "c"],
};

function item(id: number, category: "UN-a" | "UN-e" = "UN-a",
              media: string | null = null): QueueItem {
  return {
    sample_id: id, category, un_score: 0.25,
    top_classes_vision: [["a", 1], ["b", 0.4], ["c", 0.1]],
    top_classes_text: [["b", 2], ["c", 1], ["a", 0.3]],
    media_ref: media, round: 0,
  };
}

function freshRoot(): HTMLElement {
  const root = document.createElement("div");
  document.body.appendChild(root);
  return root;
}

describe("renderQueue", () => {
  it("shows a banner when no round is open", () => {
    const s = initialState("http://x");
    const root = freshRoot();
    renderQueue(document, root, s, { onSubmit: () => {} });
    expect(root.textContent).toContain("no round open");
  });

  it("renders one card per item in server order with badges and pickers", () => {
    const s = initialState("http://x");
    applyStatus(s, STATUS);
    applyQueue(s, [item(7), item(4, "UN-e"), item(9)]);
    const root = freshRoot();
    renderQueue(document, root, s, { onSubmit: () => {} });
    const cards = [...root.querySelectorAll(".card")];
    expect(cards.map((c) => c.getAttribute("data-sample")))
      .toEqual(["7", "4", "9"]);
    expect(cards[0].querySelector(".badge")!.textContent).toBe("UN-a");
    expect(cards[1].querySelector(".badge")!.textContent).toBe("UN-e");
    const picker = cards[0].querySelector("select")!;
    // first option is the placeholder, then exactly the class list
    const labels = [...picker.options].map((o) => o.textContent);
    expect(labels).toEqual(["choose class...", "a", "b", "c"]);
    // both heads' guesses side by side
    expect(cards[0].querySelectorAll(".guesses").length).toBe(2);
  });

  it("renders an image only when media_ref resolves", () => {
    const s = initialState("http://x");
    applyStatus(s, STATUS);
    applyQueue(s, [item(1, "UN-a", "http://img/x.jpg"), item(2)]);
    const root = freshRoot();
    renderQueue(document, root, s, { onSubmit: () => {} });
    const cards = [...root.querySelectorAll(".card")];
    expect(cards[0].querySelector("img")).not.toBeNull();
    expect(cards[1].querySelector("img")).toBeNull();
  });

  it("submits through the picker and flags duplicates", () => {
    const s = initialState("http://x");
    applyStatus(s, STATUS);
    applyQueue(s, [item(5)]);
    const root = freshRoot();
    const calls: Array<[number, number]> = [];
    renderQueue(document, root, s, {
      onSubmit: (id, label) => calls.push([id, label]),
    });
    const picker = root.querySelector("select")!;
    picker.value = "2";
    picker.dispatchEvent(new window.Event("change"));
    expect(calls).toEqual([[5, 2]]);

    markPending(s, 5);
    resolveSubmission(s, 5, { kind: "duplicate" });
    renderQueue(document, root, s, { onSubmit: () => {} });
    expect(root.querySelector(".card-duplicate")).not.toBeNull();
    expect(root.textContent).toContain("already labeled");
  });
});

describe("renderStatus", () => {
  it("shows the budget gauge consistent with the state view", () => {
    const s = initialState("http://x");
    applyStatus(s, STATUS);
    const root = freshRoot();
    renderStatus(document, root, s);
    const gauge = root.querySelector(".budget-gauge")!;
    expect(gauge.getAttribute("data-used")).toBe("3");
    expect(gauge.getAttribute("data-total")).toBe("8");
    expect(root.textContent).toContain("budget 3/8");
  });
});

describe("renderMetrics", () => {
  it("appends one chart point per epoch", () => {
    const s = initialState("http://x");
    for (let e = 0; e <= 4; e++) {
      applyMetrics(s, { epoch: e, acc_v: 0.5, acc_l: 0.5, acc_ens: 0.5 + e / 100,
                        w_star: 0.5, n_tc: 0, n_labeled: e,
                        mdi_counts: { mi: 0, ms: 0, un_a: 0, un_e: 0 },
                        losses: null } as MetricsRow);
    }
    const root = freshRoot();
    renderMetrics(document, root, s);
    const chart = root.querySelector(".metrics-chart")!;
    expect(chart.getAttribute("data-points")).toBe("5");
    const pts = chart.querySelector("polyline")!.getAttribute("points")!;
    expect(pts.split(" ").length).toBe(5);
  });
});
