"""Modality-discrepancy categorization of target samples and the selection
rules built on it: confident-set extraction and active-annotation rounds.

Categories (per sample, a strict partition):
  MI   - both heads agree on the top-1 class
  MS   - top-2 classes of the heads are swapped (symmetric disagreement)
  UN-a - top-2 sets of the heads are disjoint (fully inconsistent)
  UN-e - every other disagreement

Top-k ties break toward the lowest class index everywhere.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

MI, MS, UN_A, UN_E = 0, 1, 2, 3
CATEGORY_NAMES = ("MI", "MS", "UN-a", "UN-e")


@dataclass
class MdiPartition:
    category: np.ndarray          # (N,) int8 codes
    mi_score: np.ndarray          # (N,) float, NaN outside MI
    un_score: np.ndarray          # (N,) float, NaN outside UN
    t_c: np.ndarray | None = None  # confident MI indices (ascending)
    th_c: float | None = None
    th_l: float | None = None

    @property
    def size(self) -> int:
        return self.category.shape[0]

    def indices(self, code: int) -> np.ndarray:
        return np.where(self.category == code)[0]

    def counts(self) -> dict:
        return {"mi": int((self.category == MI).sum()),
                "ms": int((self.category == MS).sum()),
                "un_a": int((self.category == UN_A).sum()),
                "un_e": int((self.category == UN_E).sum())}


def _top2(y: np.ndarray):
    """Indices and values of the two largest entries per row, ties to the
    lowest class index."""
    order = np.argsort(-y, axis=1, kind="stable")
    i1, i2 = order[:, 0], order[:, 1]
    rows = np.arange(y.shape[0])
    return i1, i2, y[rows, i1], y[rows, i2]


def categorize(y_v: np.ndarray, y_l: np.ndarray) -> MdiPartition:
    """Assign every target sample an MDI category with its score."""
    y_v = np.atleast_2d(y_v)
    y_l = np.atleast_2d(y_l)
    if y_v.shape != y_l.shape:
        raise ShapeError("paired logit matrices must share a shape")
    if y_v.shape[1] < 2:
        raise ConfigError("MDI needs at least 2 classes")
    v1, v2, val_v1, val_v2 = _top2(y_v)
    l1, l2, val_l1, val_l2 = _top2(y_l)

    mi = v1 == l1
    ms = ~mi & (v1 == l2) & (v2 == l1)
    un = ~mi & ~ms
    disjoint = ((v1 != l1) & (v1 != l2) & (v2 != l1) & (v2 != l2))
    un_a = un & disjoint
    un_e = un & ~disjoint

    category = np.empty(y_v.shape[0], dtype=np.int8)
    category[mi] = MI
    category[ms] = MS
    category[un_a] = UN_A
    category[un_e] = UN_E

    mi_score = np.full(y_v.shape[0], np.nan)
    mi_score[mi] = (val_v1 * val_l1 - val_v2 * val_l2)[mi]
    un_score = np.full(y_v.shape[0], np.nan)
    un_score[un] = (val_v1 - val_v2)[un]
    return MdiPartition(category=category, mi_score=mi_score, un_score=un_score)


def mi_score(y_v: np.ndarray, y_l: np.ndarray) -> float:
    """Confidence-weighted agreement: val1(y_v)val1(y_l) - val2(y_v)val2(y_l)."""
    _, _, v1, v2 = _top2(np.atleast_2d(y_v))
    _, _, l1, l2 = _top2(np.atleast_2d(y_l))
    return float(v1[0] * l1[0] - v2[0] * l2[0])


def un_score(y_v: np.ndarray) -> float:
    """Top-2 margin of the vision head (always >= 0)."""
    y = np.atleast_2d(y_v)
    if y.shape[1] < 2:
        raise ConfigError("un_score needs at least 2 classes")
    _, _, v1, v2 = _top2(y)
    return float(v1[0] - v2[0])


def select_confident(p: MdiPartition, m_pct: float = 0.10) -> np.ndarray:
    """Top-m_pct MI samples by MI-score. The threshold is the score of the
    quota-th largest; boundary ties are admitted up to the quota by lowest
    index. Returns the selected indices ascending and records them on ``p``."""
    mi_idx = p.indices(MI)
    if mi_idx.size == 0:
        p.t_c = np.empty(0, dtype=np.int64)
        p.th_c = None
        return p.t_c
    quota = int(math.ceil(m_pct * mi_idx.size))
    quota = min(quota, mi_idx.size)
    scores = p.mi_score[mi_idx]
    order = np.lexsort((mi_idx, -scores))       # score desc, then index asc
    chosen = mi_idx[order[:quota]]
    p.th_c = float(scores[order[quota - 1]])
    p.t_c = np.sort(chosen)
    return p.t_c


@dataclass
class AnnotationSet:
    """Actively annotated target samples with a hard total budget."""

    budget: int
    num_classes: int
    pairs: list = field(default_factory=list)   # [(index, label)] in selection order
    _by_index: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def remaining(self) -> int:
        return self.budget - len(self.pairs)

    def is_labeled(self, idx: int) -> bool:
        return int(idx) in self._by_index

    def label_of(self, idx: int) -> int:
        return self._by_index[int(idx)]

    def indices(self) -> np.ndarray:
        return np.array([i for i, _ in self.pairs], dtype=np.int64)

    def labels(self) -> np.ndarray:
        return np.array([l for _, l in self.pairs], dtype=np.int64)

    def add(self, idx: int, label: int) -> None:
        idx, label = int(idx), int(label)
        if idx in self._by_index:
            raise ValueError(f"sample {idx} already annotated")
        if len(self.pairs) >= self.budget:
            raise ValueError("annotation budget exhausted")
        if not 0 <= label < self.num_classes:
            raise ValueError(f"label {label} out of range")
        self.pairs.append((idx, label))
        self._by_index[idx] = label


@dataclass
class AnnotationRequest:
    """Payload describing one sample offered for human annotation."""

    sample_id: int
    category: str                 # "UN-a" | "UN-e"
    un_score: float
    top_classes_vision: list      # [(class name, logit), ...] top-3
    top_classes_text: list
    media_ref: str | None = None
    round: int = 0

    def to_json(self) -> dict:
        return {"sample_id": self.sample_id, "category": self.category,
                "un_score": self.un_score,
                "top_classes_vision": self.top_classes_vision,
                "top_classes_text": self.top_classes_text,
                "media_ref": self.media_ref, "round": self.round}


def _top3_named(logits_row, class_names):
    order = np.argsort(-logits_row, kind="stable")[:3]
    return [[class_names[int(i)], float(logits_row[int(i)])] for i in order]


def build_requests(p: MdiPartition, candidates, y_v, y_l, class_names,
                   media_refs=None, round_index: int = 0):
    reqs = []
    for idx in candidates:
        idx = int(idx)
        reqs.append(AnnotationRequest(
            sample_id=idx,
            category=CATEGORY_NAMES[p.category[idx]],
            un_score=float(p.un_score[idx]),
            top_classes_vision=_top3_named(y_v[idx], class_names),
            top_classes_text=_top3_named(y_l[idx], class_names),
            media_ref=None if media_refs is None else media_refs[idx],
            round=round_index))
    return reqs


def active_candidates(p: MdiPartition, aset: AnnotationSet, b_r: int) -> np.ndarray:
    """Candidate indices for one annotation round: unlabeled UN-a by ascending
    UN-score, then unlabeled UN-e by ascending UN-score, capped at
    min(b_r, remaining budget)."""
    want = min(int(b_r), aset.remaining)
    if want <= 0:
        return np.empty(0, dtype=np.int64)
    chosen = []
    for code in (UN_A, UN_E):
        if len(chosen) >= want:
            break
        idx = np.array([i for i in p.indices(code) if not aset.is_labeled(i)],
                       dtype=np.int64)
        if idx.size == 0:
            continue
        order = np.lexsort((idx, p.un_score[idx]))   # score asc, index asc
        chosen.extend(idx[order][:want - len(chosen)].tolist())
    return np.array(chosen, dtype=np.int64)


def select_active(p: MdiPartition, aset: AnnotationSet, b_r: int, oracle,
                  context=None):
    """Run one annotation round: pick candidates, query the oracle, append
    the labels it returns (possibly a subset, e.g. on interactive timeout).

    ``oracle.annotate(requests) -> {sample_id: label}``. Returns the list of
    (index, label) pairs actually added, in candidate order.
    """
    candidates = active_candidates(p, aset, b_r)
    if candidates.size == 0:
        return []
    if context is not None:
        requests = build_requests(p, candidates, context["y_v"], context["y_l"],
                                  context["class_names"],
                                  context.get("media_refs"),
                                  context.get("round", 0))
    else:
        requests = [AnnotationRequest(sample_id=int(i),
                                      category=CATEGORY_NAMES[p.category[int(i)]],
                                      un_score=float(p.un_score[int(i)]),
                                      top_classes_vision=[],
                                      top_classes_text=[])
                    for i in candidates]
    answers = oracle.annotate(requests)
    added = []
    for idx in candidates:
        idx = int(idx)
        if idx in answers:
            aset.add(idx, int(answers[idx]))
            added.append((idx, int(answers[idx])))
    if added:
        scored = [p.un_score[i] for i, _ in added if not math.isnan(p.un_score[i])]
        p.th_l = float(max(scored)) if scored else None
    return added


def dump_partition(p: MdiPartition, path) -> None:
    """JSON-lines dump: one row per sample with category and scores."""
    def clean(x):
        return None if math.isnan(x) else float(x)

    with open(path, "w", encoding="utf-8") as fh:
        for i in range(p.size):
            row = {"index": i, "category": CATEGORY_NAMES[p.category[i]],
                   "mi_score": clean(p.mi_score[i]),
                   "un_score": clean(p.un_score[i])}
            fh.write(json.dumps(row) + "\n")
