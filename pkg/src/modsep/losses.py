"""Training objectives: debias, orthogonality, distillation, cross-entropy,
information maximization, modality BCE, and the train-time ensemble.

Values are accumulated in float64 and returned as Python floats; gradients
come back in the dtype of the inputs. 2-D logit inputs are treated as a
batch and reduced by the mean, so returned gradients already carry the 1/B
factor. Probabilities are floored at 1e-8 inside every logarithm.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .numcore import cosine_matrix, log_softmax, softmax

_P_FLOOR = 1e-8


@dataclass
class LossWeights:
    alpha: float = 1.0    # source weight for the text branch
    beta: float = 1.0     # source weight for the vision branch
    gamma: float = 0.01   # regularization weight (ortho + discrimination)
    h: float = 1.0        # magnitude of handcrafted pseudo logits

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "h"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class DebiasState:
    """Running mean prediction of the text branch (ACDE debias)."""

    p_hat: np.ndarray
    m: float = 0.99
    eta: float = 0.5

    @classmethod
    def uniform(cls, num_classes: int, m: float = 0.99, eta: float = 0.5):
        return cls(p_hat=np.full(num_classes, 1.0 / num_classes), m=m, eta=eta)

    def correction(self) -> np.ndarray:
        """The additive term eta * log(p_hat) subtracted from raw text logits."""
        return self.eta * np.log(np.maximum(self.p_hat, _P_FLOOR))


def debias(state: DebiasState, y_tilde: np.ndarray):
    """Debias text logits with the pre-update running prior, then update it.

    Returns (debiased logits, new state); the new state's p_hat is the
    momentum blend of the old one with this batch's mean prediction,
    renormalized to sum 1.
    """
    y_tilde = np.atleast_2d(y_tilde)
    y_l = y_tilde - state.correction().astype(y_tilde.dtype)
    batch_mean = softmax(y_tilde.astype(np.float64)).mean(axis=0)
    p_new = state.m * state.p_hat + (1.0 - state.m) * batch_mean
    p_new = p_new / p_new.sum()
    return y_l, DebiasState(p_hat=p_new, m=state.m, eta=state.eta)


def loss_ortho(f_lac_s, f_vac_s, f_lac_t, f_vac_t):
    """Sum of squared row-wise inner products between paired LAC and VAC,
    over both domains. Returns (value, (g_lac_s, g_vac_s, g_lac_t, g_vac_t))."""
    value = 0.0
    grads = []
    for lac, vac in ((f_lac_s, f_vac_s), (f_lac_t, f_vac_t)):
        lac = np.atleast_2d(lac)
        vac = np.atleast_2d(vac)
        if lac.shape != vac.shape:
            raise ShapeError("paired LAC/VAC shapes differ")
        dots = np.einsum("bd,bd->b", lac.astype(np.float64),
                         vac.astype(np.float64))
        value += float((dots ** 2).sum())
        g = (2.0 * dots)[:, None]
        grads.append((g * vac).astype(lac.dtype))
        grads.append((g * lac).astype(vac.dtype))
    return value, tuple(grads)


def teacher_zeroshot(f_v, mu, tau: float):
    """Mean-centered zero-shot similarity logits from frozen text embeddings."""
    sims = cosine_matrix(f_v, mu) / tau
    return sims - sims.mean(axis=1, keepdims=True)


def pseudo_logits(label: int, num_classes: int, h: float) -> np.ndarray:
    """Handcrafted logits (2*e_label - 1) * h: +h at the label, -h elsewhere."""
    out = np.full(num_classes, -h, dtype=np.float64)
    out[label] = h
    return out


def pseudo_logits_batch(labels, num_classes: int, h: float) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.full((labels.size, num_classes), -h, dtype=np.float64)
    out[np.arange(labels.size), labels] = h
    return out


def _rows(logits):
    arr = np.asarray(logits)
    was_vector = arr.ndim == 1
    return np.atleast_2d(arr), was_vector


def loss_kl(student_logits, teacher_logits):
    """KL(softmax(teacher) || softmax(student)); mean over rows for batches.

    Gradient wrt student logits is softmax(student) - softmax(teacher)
    (per row, scaled by 1/B for batches).
    """
    s, was_vec = _rows(student_logits)
    t, _ = _rows(teacher_logits)
    if s.shape != t.shape:
        raise ShapeError("student/teacher logit shapes differ")
    ps = softmax(s.astype(np.float64))
    pt = softmax(t.astype(np.float64))
    ls = log_softmax(s.astype(np.float64))
    lt = np.log(np.maximum(pt, _P_FLOOR))
    b = s.shape[0]
    value = float((pt * (lt - ls)).sum() / b)
    grad = ((ps - pt) / b).astype(np.asarray(student_logits).dtype)
    return value, grad[0] if was_vec else grad


def loss_ce(logits, labels):
    """Cross-entropy -log softmax(logits)[label]; mean over rows for batches.

    Gradient wrt logits is softmax(logits) - onehot(label) (per row, /B).
    """
    z, was_vec = _rows(logits)
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if lab.shape[0] != z.shape[0]:
        raise ShapeError("labels do not match logits batch")
    ls = log_softmax(z.astype(np.float64))
    b = z.shape[0]
    idx = np.arange(b)
    value = float(-ls[idx, lab].sum() / b)
    grad = np.exp(ls)
    grad[idx, lab] -= 1.0
    grad = (grad / b).astype(np.asarray(logits).dtype)
    return value, grad[0] if was_vec else grad


def loss_im(y_e):
    """Information maximization over ensemble logits: mean per-sample entropy
    plus sum_k qbar_k log qbar_k with qbar the batch-mean prediction.

    Uniform predictions give exactly 0; distinct one-hot rows covering all
    classes equally approach the minimum -log K.
    """
    z, _ = _rows(y_e)
    p = softmax(z.astype(np.float64))
    b = z.shape[0]
    logp = np.log(np.maximum(p, _P_FLOOR))
    ent_rows = -(p * logp).sum(axis=1)
    value_ent = float(ent_rows.sum() / b)
    qbar = p.mean(axis=0)
    logq = np.log(np.maximum(qbar, _P_FLOOR))
    value_div = float((qbar * logq).sum())
    # d entropy / d z: -p * (logp + H_row) / B
    g_ent = -(p * (logp + ent_rows[:, None])) / b
    # d diversity / d z: p * (logq - sum_k p_k logq_k) / B
    g_div = (p * (logq[None, :] - (p * logq[None, :]).sum(axis=1, keepdims=True))) / b
    grad = (g_ent + g_div).astype(np.asarray(y_e).dtype)
    return value_ent + value_div, grad


def loss_bce(y_d, targets):
    """Mean binary cross-entropy on sigmoid outputs y_d against 0/1 targets.

    Returns the gradient wrt the pre-sigmoid logits, (y_d - target) / N.
    """
    y = np.atleast_1d(np.asarray(y_d, dtype=np.float64))
    t = np.atleast_1d(np.asarray(targets, dtype=np.float64))
    if y.shape != t.shape:
        raise ShapeError("BCE outputs/targets shapes differ")
    n = y.size
    yc = np.clip(y, _P_FLOOR, 1.0 - _P_FLOOR)
    value = float(-(t * np.log(yc) + (1.0 - t) * np.log(1.0 - yc)).sum() / n)
    grad = ((y - t) / n).astype(np.asarray(y_d).dtype)
    return value, grad


def ensemble_train(y_v, y_l, w):
    """Train-time ensemble w*y_v + (1-w)*y_l with per-sample weights."""
    y_v = np.atleast_2d(y_v)
    y_l = np.atleast_2d(y_l)
    w = np.atleast_1d(np.asarray(w))
    if y_v.shape != y_l.shape or w.shape[0] != y_v.shape[0]:
        raise ShapeError("ensemble operand shapes differ")
    wc = w[:, None]
    return wc * y_v + (1.0 - wc) * y_l


def ensemble_train_backward(y_v, y_l, w, grad_y_e):
    """Backward of the train-time ensemble. The text logits are detached:
    gradients flow only to y_v (scaled by w) and to w (via y_v - y_l)."""
    y_v = np.atleast_2d(y_v)
    y_l = np.atleast_2d(y_l)
    w = np.atleast_1d(np.asarray(w))
    g = np.atleast_2d(np.asarray(grad_y_e))
    grad_y_v = (w[:, None] * g).astype(y_v.dtype)
    grad_w = (g * (y_v - y_l)).sum(axis=1).astype(w.dtype)
    return grad_y_v, grad_w
