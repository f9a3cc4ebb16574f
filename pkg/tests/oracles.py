"""Independent brute-force oracles used by the tests.

Everything here is deliberately written straight from first principles
(loops, exhaustive scans, finite differences) and stays independent of the
library code paths it is used to check.
"""
from __future__ import annotations

import math

import numpy as np


def finite_difference(f, x: np.ndarray, eps: float = 1e-3) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x (float64 shadow)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / denom)


def softmax_ref(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_ref(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def kl_ref(student, teacher):
    pt = softmax_ref(teacher)
    ls = log_softmax_ref(student)
    lt = log_softmax_ref(teacher)
    return float((pt * (lt - ls)).sum(axis=-1).mean())


def ce_ref(logits, labels):
    ls = np.atleast_2d(log_softmax_ref(logits))
    labels = np.atleast_1d(labels)
    return float(np.mean([-ls[i, labels[i]] for i in range(ls.shape[0])]))


def im_ref(y_e):
    p = softmax_ref(y_e)
    ent = float(np.mean([-(row * np.log(np.maximum(row, 1e-8))).sum()
                         for row in p]))
    q = p.mean(axis=0)
    div = float((q * np.log(np.maximum(q, 1e-8))).sum())
    return ent + div


def bce_ref(y_d, targets):
    y = np.clip(np.asarray(y_d, dtype=np.float64), 1e-8, 1 - 1e-8)
    t = np.asarray(targets, dtype=np.float64)
    return float(np.mean(-(t * np.log(y) + (1 - t) * np.log(1 - y))))


def ortho_ref(f_lac_s, f_vac_s, f_lac_t, f_vac_t):
    total = 0.0
    for lac, vac in ((f_lac_s, f_vac_s), (f_lac_t, f_vac_t)):
        for a, b in zip(np.atleast_2d(lac), np.atleast_2d(vac)):
            total += float(np.dot(a, b)) ** 2
    return total


def zero_shot_ref(features, text_features):
    """Plain cosine-similarity argmax, written with explicit loops-free numpy
    but independent normalization code."""
    f = np.asarray(features, dtype=np.float64)
    t = np.asarray(text_features, dtype=np.float64)
    fn = f / np.sqrt((f ** 2).sum(axis=1))[:, None]
    tn = t / np.sqrt((t ** 2).sum(axis=1))[:, None]
    return (fn @ tn.T).argmax(axis=1)


# -- MDI oracle ----------------------------------------------------------------

def top2_ref(y):
    """(index, value) of the two largest entries, ties to lowest index."""
    pairs = sorted(enumerate(y), key=lambda kv: (-kv[1], kv[0]))
    return pairs[0], pairs[1]


def categorize_ref(y_v, y_l) -> str:
    (v1, _), (v2, _) = top2_ref(y_v)
    (l1, _), (l2, _) = top2_ref(y_l)
    if v1 == l1:
        return "MI"
    if v1 == l2 and v2 == l1:
        return "MS"
    if not ({v1, v2} & {l1, l2}):
        return "UN-a"
    return "UN-e"


def mi_score_ref(y_v, y_l) -> float:
    (_, vv1), (_, vv2) = top2_ref(y_v)
    (_, vl1), (_, vl2) = top2_ref(y_l)
    return vv1 * vl1 - vv2 * vl2


def un_score_ref(y_v) -> float:
    (_, v1), (_, v2) = top2_ref(y_v)
    return v1 - v2


def select_confident_ref(mi_indices, mi_scores, m_pct):
    """Quota-capped top scores, ties by lowest sample index."""
    if len(mi_indices) == 0:
        return []
    quota = min(math.ceil(m_pct * len(mi_indices)), len(mi_indices))
    order = sorted(zip(mi_indices, mi_scores), key=lambda t: (-t[1], t[0]))
    return sorted(i for i, _ in order[:quota])


def active_candidates_ref(categories, un_scores, labeled, b_r, remaining):
    """UN-a ascending score then UN-e ascending score, capped."""
    want = min(b_r, remaining)
    if want <= 0:
        return []
    out = []
    for cat in ("UN-a", "UN-e"):
        pool = [(un_scores[i], i) for i, c in enumerate(categories)
                if c == cat and i not in labeled]
        for _, i in sorted(pool):
            if len(out) >= want:
                break
            out.append(i)
    return out


# -- MaE oracles ----------------------------------------------------------------

def pairwise_flip_ref(y_v, y_l, grid=1001):
    """Smallest grid weight at which the vision head's top class beats the
    text head's top class in the two-class ensemble comparison; None if both
    heads agree."""
    y_v = np.asarray(y_v, dtype=np.float64)
    y_l = np.asarray(y_l, dtype=np.float64)
    i = int(y_v.argmax())
    j = int(y_l.argmax())
    if i == j:
        return None
    ws = np.linspace(0.0, 1.0, grid)
    vision_wins = (ws * y_v[i] + (1 - ws) * y_l[i]) > \
                  (ws * y_v[j] + (1 - ws) * y_l[j])
    idx = np.argmax(vision_wins)
    if not vision_wins.any():
        return 1.0
    return float(ws[idx])


def knee_ref(deltas, slope=None):
    """Exhaustive scan for the most deviated point of the sorted curve."""
    deltas = list(deltas)
    n = len(deltas)
    a = float(slope if slope is not None else n)
    best_k, best_d = 0, -1.0
    for k, d in enumerate(deltas, start=1):
        dist = abs(a * d - k) / math.sqrt(a * a + 1.0)
        if dist > best_d:
            best_d, best_k = dist, k
    return deltas[best_k - 1]


def weighted_means_ref(f_b, probs):
    """Per-class probability-weighted means, the long way."""
    k = probs.shape[1]
    out = np.zeros((k, f_b.shape[1]))
    for c in range(k):
        num = np.zeros(f_b.shape[1])
        den = 0.0
        for i in range(f_b.shape[0]):
            num += probs[i, c] * f_b[i]
            den += probs[i, c]
        out[c] = num / den if den > 1e-6 else f_b.mean(axis=0)
    return out


def nearest_centroid_ref(f_b, centroids):
    labels = []
    for row in np.atleast_2d(f_b):
        best, best_c = -2.0, 0
        for c, cen in enumerate(centroids):
            cos = float(np.dot(row, cen)
                        / (np.linalg.norm(row) * np.linalg.norm(cen)))
            if cos > best + 1e-15:
                best, best_c = cos, c
        labels.append(best_c)
    return np.array(labels)
