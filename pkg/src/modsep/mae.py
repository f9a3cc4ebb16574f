"""Modality-adaptive ensemble: per-sample thresholds deciding which head wins
at a given blend weight, and the knee of the sorted-threshold curve as the
global test-time weight.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

SOURCE_KNEE = "knee"
SOURCE_LEARNED = "learned_w"
SOURCE_OVERRIDE = "override"


@dataclass
class MaeState:
    deltas: np.ndarray        # valid thresholds, sorted ascending, in [0, 1]
    n_points: int
    w_star: float
    source: str

    def to_json(self) -> dict:
        return {"n_points": self.n_points, "w_star": self.w_star,
                "source": self.source}


def ensemble_threshold(y_v, y_l):
    """Blend weight at which the ensemble argmax flips between the heads'
    top classes. None when both heads agree (any weight ties) or when the
    denominator is non-positive (degenerate). Clamped to [0, 1]."""
    y_v = np.asarray(y_v, dtype=np.float64).ravel()
    y_l = np.asarray(y_l, dtype=np.float64).ravel()
    if y_v.shape != y_l.shape or y_v.size < 2:
        raise ConfigError("threshold needs two aligned logit vectors, K >= 2")
    i = int(y_v.argmax())
    j = int(y_l.argmax())
    if i == j:
        return None
    delta_i = y_v[i] - y_l[i]
    delta_j = y_v[j] - y_l[j]
    delta_l = y_l[j] - y_l[i]
    denom = delta_i - delta_j
    if denom <= 0:
        return None
    return float(np.clip(delta_l / denom, 0.0, 1.0))


def ensemble_thresholds(y_v: np.ndarray, y_l: np.ndarray) -> np.ndarray:
    """Vectorized thresholds for a batch; invalid samples come back NaN."""
    y_v = np.atleast_2d(np.asarray(y_v, dtype=np.float64))
    y_l = np.atleast_2d(np.asarray(y_l, dtype=np.float64))
    i = y_v.argmax(axis=1)
    j = y_l.argmax(axis=1)
    rows = np.arange(y_v.shape[0])
    delta_i = y_v[rows, i] - y_l[rows, i]
    delta_j = y_v[rows, j] - y_l[rows, j]
    delta_l = y_l[rows, j] - y_l[rows, i]
    denom = delta_i - delta_j
    out = np.full(y_v.shape[0], np.nan)
    valid = (i != j) & (denom > 0)
    out[valid] = np.clip(delta_l[valid] / denom[valid], 0.0, 1.0)
    return out


def knee_distances(deltas: np.ndarray, slope: float) -> np.ndarray:
    """Distances from points (delta_k, k), k = 1..n, to the line y = slope*x."""
    deltas = np.asarray(deltas, dtype=np.float64)
    ks = np.arange(1, deltas.size + 1, dtype=np.float64)
    return np.abs(slope * deltas - ks) / np.sqrt(slope * slope + 1.0)


def knee_w_star(deltas, n_total: int | None = None,
                use_total_slope: bool = False) -> float:
    """Most deviated point of the sorted-threshold curve.

    The reference line's slope is the number of plotted points (samples with
    no threshold carry no curve point); ``use_total_slope`` switches to the
    full target count instead. Ties break toward the smaller index. An empty
    curve falls back to 0.5.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.size == 0:
        return 0.5
    slope = float(n_total) if (use_total_slope and n_total) else float(deltas.size)
    d = knee_distances(deltas, slope)
    return float(deltas[int(d.argmax())])


def compute_mae(y_v: np.ndarray, y_l: np.ndarray,
                use_total_slope: bool = False) -> MaeState:
    """Build the sorted-threshold state and its knee weight for a batch."""
    raw = ensemble_thresholds(y_v, y_l)
    deltas = np.sort(raw[~np.isnan(raw)])
    if deltas.size == 0:
        return MaeState(deltas=deltas, n_points=0, w_star=0.5,
                        source=SOURCE_OVERRIDE)
    w = knee_w_star(deltas, n_total=raw.size, use_total_slope=use_total_slope)
    return MaeState(deltas=deltas, n_points=int(deltas.size), w_star=w,
                    source=SOURCE_KNEE)


def pick_test_weight(state: MaeState, epoch: int, learned_w_mean: float,
                     late_start: int, override: float | None = None) -> MaeState:
    """Final test-time weight: a fixed override when configured; the mean
    learned train-time weight every third epoch once training is late;
    otherwise the knee value. Returns the state updated in place."""
    if override is not None:
        state.w_star, state.source = float(override), SOURCE_OVERRIDE
    elif state.n_points == 0:
        state.w_star, state.source = 0.5, SOURCE_OVERRIDE
    elif epoch >= late_start and epoch % 3 == 0:
        state.w_star, state.source = float(learned_w_mean), SOURCE_LEARNED
    return state


def dump_delta_curve(state: MaeState, path) -> None:
    """CSV of the sorted-threshold curve: k, delta_k, distance-to-line."""
    slope = float(state.n_points) if state.n_points else 1.0
    dists = knee_distances(state.deltas, slope)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "delta", "distance"])
        for k, (d, dist) in enumerate(zip(state.deltas, dists), start=1):
            writer.writerow([k, repr(float(d)), repr(float(dist))])
