"""Trainable parameter groups and their forward/backward passes.

Every trainable module is a linear layer (or the raw text-embedding matrix),
so all gradients are hand-derived. Forwards return caches that the matching
backward consumes; backwards accumulate into the layers' gradient buffers and
return the gradient with respect to their input features.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, MissingFileError, ShapeError
from .numcore import (LinearLayer, TensorParam, cosine_matrix,
                      cosine_matrix_backward, normalize_rows, relu, sigmoid)


class ModelParams:
    """All trainable tensors: separators Q_v/Q_t, vision classifier Phi1/Phi2,
    weight generator, modality discriminator, and text embeddings mu.

    Q_t starts at exact identity so that at step 0 the text branch reproduces
    plain zero-shot similarities; Q_v starts at a rotation, so the vision
    branch keeps its geometry while the components begin separated.
    """

    def __init__(self, d_v: int, num_classes: int, text_features,
                 d_b: int = 256, tau: float = 0.01, rng=None,
                 separator_noise: float = 0.0):
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        text_features = np.asarray(text_features, dtype=np.float32)
        if text_features.shape != (num_classes, d_v):
            raise ShapeError("text_features must be (num_classes, d_v)")
        self.d_v = d_v
        self.d_b = d_b
        self.num_classes = num_classes
        self.tau = float(tau)

        def identity_layer():
            w = np.eye(d_v, dtype=np.float32)
            if separator_noise > 0:
                w = w + rng.standard_normal((d_v, d_v)).astype(np.float32) \
                    * separator_noise
            return LinearLayer(d_v, d_v, weight=w)

        def dense(nin, nout):
            w = rng.standard_normal((nout, nin)).astype(np.float32) \
                / np.sqrt(nin, dtype=np.float32)
            return LinearLayer(nin, nout, weight=w)

        def complement_rotation_layer():
            # rotation carrying the text-embedding span into an orthogonal
            # complement: an isometry under which vision components start
            # orthogonal to the language components on that span
            k = min(num_classes, d_v - num_classes)
            if k <= 0:
                w = np.eye(d_v, dtype=np.float32)
            else:
                probe = np.concatenate([
                    text_features.T.astype(np.float64),
                    rng.standard_normal((d_v, k))], axis=1)
                q, _ = np.linalg.qr(probe)
                b, c = q[:, :k], q[:, num_classes:num_classes + k]
                w = (np.eye(d_v) - b @ b.T - c @ c.T
                     + c @ b.T - b @ c.T).astype(np.float32)
            if separator_noise > 0:
                w = w + rng.standard_normal((d_v, d_v)).astype(np.float32) \
                    * separator_noise
            return LinearLayer(d_v, d_v, weight=w)

        # Q_t starts at identity so the text branch reproduces zero-shot
        # exactly; Q_v starts at a rotation that preserves the vision geometry
        # while keeping the two components separated from step 0
        self.q_t = identity_layer()
        self.q_v = complement_rotation_layer()
        self.phi1 = dense(d_v, d_b)
        self.phi2 = dense(d_b, num_classes)
        self.wgen1 = dense(d_v, 256)
        self.wgen2 = dense(256, 1)
        self.disc1 = dense(d_v, 256)
        self.disc2 = dense(256, 1)
        self.mu = TensorParam(normalize_rows(text_features))

    def trainable(self):
        return [self.q_v, self.q_t, self.phi1, self.phi2,
                self.wgen1, self.wgen2, self.disc1, self.disc2, self.mu]

    def zero_grad(self) -> None:
        for p in self.trainable():
            p.zero_grad()

    def renormalize_mu(self) -> None:
        self.mu.data[...] = normalize_rows(self.mu.data)

    def copy(self) -> "ModelParams":
        out = ModelParams.__new__(ModelParams)
        out.d_v, out.d_b = self.d_v, self.d_b
        out.num_classes, out.tau = self.num_classes, self.tau
        for name in ("q_v", "q_t", "phi1", "phi2",
                     "wgen1", "wgen2", "disc1", "disc2", "mu"):
            setattr(out, name, getattr(self, name).copy())
        return out


# -- forwards / backwards -----------------------------------------------------

def separate(params: ModelParams, f_v: np.ndarray):
    """Split frozen vision features into vision- and language-associated parts."""
    return params.q_v.forward(f_v), params.q_t.forward(f_v)


def text_logits_raw(params: ModelParams, f_lac: np.ndarray) -> np.ndarray:
    """Unnormalized text logits: cos(mu_i, f_lac_b) / tau, shape (B, K)."""
    return cosine_matrix(f_lac, params.mu.data) / params.tau


def text_logits_backward(params: ModelParams, f_lac, logits, grad_logits,
                         update_mu: bool = True):
    """Backward of text_logits_raw; accumulates into mu.grad, returns d f_lac."""
    cos = np.asarray(logits) * params.tau
    g = np.asarray(grad_logits) / params.tau
    du, dmu = cosine_matrix_backward(f_lac, params.mu.data, cos, g)
    if update_mu:
        params.mu.grad += dmu.astype(params.mu.grad.dtype)
    return du


def vision_logits(params: ModelParams, f_vac: np.ndarray):
    """Bottleneck features and vision logits (Phi2(Phi1(f_vac)))."""
    f_b = params.phi1.forward(f_vac)
    y_v = params.phi2.forward(f_b)
    return f_b, y_v


def vision_backward(params: ModelParams, f_vac, f_b, grad_y_v):
    d_fb = params.phi2.backward(f_b, grad_y_v)
    return params.phi1.backward(f_vac, d_fb)


@dataclass
class WgenCache:
    f_in: np.ndarray
    h: np.ndarray       # hidden activations (B, 256)
    w: np.ndarray       # sigmoid output (B,)


def gen_weight(params: ModelParams, f_vac: np.ndarray):
    """Per-sample learnable ensemble weight w = sigmoid(wgen(f_vac)) in (0,1).

    The input is treated as a constant: gradients stop at wgen1, they do not
    flow back into the separator. Saturated outputs are nudged into the open
    interval (one ulp at 1.0) so downstream convex-combination contracts hold.
    """
    h = params.wgen1.forward(f_vac)
    z = params.wgen2.forward(h)[:, 0]
    w = sigmoid(z)
    tiny = np.finfo(w.dtype).eps
    w = np.clip(w, tiny, 1.0 - tiny)
    return w, WgenCache(f_in=f_vac, h=h, w=w)


def gen_weight_backward(params: ModelParams, cache: WgenCache, grad_w) -> None:
    dz = (np.asarray(grad_w) * cache.w * (1.0 - cache.w))[:, None]
    dh = params.wgen2.backward(cache.h, dz)
    params.wgen1.backward(cache.f_in, dh)   # input gradient dropped (detach)


@dataclass
class DiscCache:
    f_in: np.ndarray
    a1: np.ndarray      # pre-activation (B, 256)
    h: np.ndarray       # relu(a1)
    y: np.ndarray       # sigmoid output (B,)


def discriminate(params: ModelParams, f: np.ndarray):
    """Modality discriminator: sigmoid(disc2(relu(disc1(f)))) in (0,1)."""
    a1 = params.disc1.forward(f)
    h = relu(a1)
    z = params.disc2.forward(h)[:, 0]
    y = sigmoid(z)
    return y, DiscCache(f_in=f, a1=a1, h=h, y=y)


def discriminate_backward(params: ModelParams, cache: DiscCache, grad_logit,
                          update_params: bool = True):
    """Backward from gradients wrt the pre-sigmoid logit. With
    update_params=False the discriminator stays frozen (its gradient buffers
    untouched) and only the input gradient is produced."""
    dz = np.atleast_2d(np.asarray(grad_logit)).reshape(-1, 1)
    if update_params:
        dh = params.disc2.backward(cache.h, dz)
    else:
        dh = dz @ params.disc2.weight
    da1 = dh * (cache.a1 > 0)
    if update_params:
        return params.disc1.backward(cache.f_in, da1)
    return da1 @ params.disc1.weight


# -- checkpoints --------------------------------------------------------------

CHECKPOINT_VERSION = "modsep-ckpt/1"

_PARAM_NAMES = ("q_v", "q_t", "phi1", "phi2", "wgen1", "wgen2",
                "disc1", "disc2")


def save_checkpoint(params: ModelParams, out_dir) -> Path:
    """JSON manifest plus one f32 blob per parameter tensor."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tensors = {}
    for name in _PARAM_NAMES:
        layer = getattr(params, name)
        tensors[f"{name}.weight"] = layer.weight
        tensors[f"{name}.bias"] = layer.bias
    tensors["mu"] = params.mu.data
    entries = {}
    for name, arr in tensors.items():
        fname = name + ".f32"
        arr.astype("<f4").tofile(out / fname)
        entries[name] = {"file": fname, "shape": list(arr.shape)}
    man = {"version": CHECKPOINT_VERSION, "d_v": params.d_v, "d_b": params.d_b,
           "num_classes": params.num_classes, "tau": params.tau,
           "params": entries}
    with open(out / "checkpoint.json", "w", encoding="utf-8") as fh:
        json.dump(man, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return out / "checkpoint.json"


def load_checkpoint(path) -> ModelParams:
    path = Path(path)
    if path.is_dir():
        path = path / "checkpoint.json"
    if not path.is_file():
        raise MissingFileError(f"missing checkpoint: {path}")
    with open(path, encoding="utf-8") as fh:
        man = json.load(fh)
    if man.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {man.get('version')!r}")
    root = path.parent

    def blob(name):
        entry = man["params"][name]
        shape = tuple(entry["shape"])
        fpath = root / entry["file"]
        if not fpath.is_file():
            raise MissingFileError(f"missing checkpoint blob: {fpath}")
        arr = np.fromfile(fpath, dtype="<f4")
        if arr.size != int(np.prod(shape)):
            raise DataError(f"checkpoint blob {fpath} has wrong size")
        return arr.reshape(shape).astype(np.float32)

    params = ModelParams.__new__(ModelParams)
    params.d_v = int(man["d_v"])
    params.d_b = int(man["d_b"])
    params.num_classes = int(man["num_classes"])
    params.tau = float(man["tau"])
    for name in _PARAM_NAMES:
        w = blob(f"{name}.weight")
        b = blob(f"{name}.bias")
        setattr(params, name, LinearLayer(w.shape[1], w.shape[0], weight=w, bias=b))
    params.mu = TensorParam(blob("mu"))
    return params
