"""Training orchestration: per-epoch teacher refresh, clustering pseudo-labels,
mini-batch optimization of the combined objective, the two-phase modality
discrimination schedule, MDI refresh, annotation rounds and evaluation, across
uda / ada / sfada / msda modes.

One logical thread owns all mutable state. Interactive annotation and UI
control arrive through a hooks object polled only at epoch boundaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import losses as L
from .dataio import FeatureDataset, augment
from .errors import ConfigError, NumericAbort
from .losses import DebiasState, LossWeights
from .mae import MaeState, compute_mae, pick_test_weight
from .mdi import AnnotationSet, MdiPartition, categorize, select_active, \
    select_confident
from .model import (ModelParams, discriminate, discriminate_backward,
                    gen_weight, gen_weight_backward, load_checkpoint, separate,
                    text_logits_backward, text_logits_raw, vision_backward,
                    vision_logits)
from .numcore import SgdConfig, cosine_matrix, sgd_step, softmax

MODES = ("uda", "ada", "sfada", "msda")


@dataclass
class TrainConfig:
    mode: str = "uda"
    max_epoch: int = 60
    batch_size: int = 32
    seed: int = 0
    d_b: int = 256
    tau: float = 0.01
    separator_noise: float = 0.0
    weights: LossWeights = field(default_factory=LossWeights)
    sgd: SgdConfig = field(default_factory=SgdConfig)
    debias_m: float = 0.99
    debias_eta: float = 0.5
    budget: float = 0.0           # fraction of target samples (ada/sfada)
    round_fraction: float = 0.5   # per-round count b_r = ceil(fraction * b)
    m_pct: float = 0.10
    late_start: int | None = None            # default 0.75 * max_epoch
    centroid_switch_epoch: int | None = None  # default max_epoch // 2
    w_star_override: float | None = None
    mae_slope_total: bool = False
    checkpoint: str | None = None  # sfada warm start

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.max_epoch < 1 or self.batch_size < 1:
            raise ConfigError("max_epoch and batch_size must be positive")
        if not 0.0 <= self.budget <= 1.0:
            raise ConfigError("budget must be a fraction in [0, 1]")
        if self.mode in ("ada", "sfada") and self.budget <= 0:
            raise ConfigError(f"mode {self.mode!r} needs a positive budget")
        if self.mode in ("uda", "msda") and self.budget > 0:
            raise ConfigError(f"mode {self.mode!r} does not take a budget")
        if self.mode == "sfada" and not self.checkpoint:
            raise ConfigError("sfada requires a source-pretrained checkpoint")
        if self.w_star_override is not None and not \
                0.0 <= self.w_star_override <= 1.0:
            raise ConfigError("w_star override must lie in [0, 1]")

    def resolved_late_start(self) -> int:
        if self.late_start is not None:
            return self.late_start
        return int(round(0.75 * self.max_epoch))

    def resolved_centroid_switch(self) -> int:
        if self.centroid_switch_epoch is not None:
            return self.centroid_switch_epoch
        return self.max_epoch // 2


class TrainerHooks:
    """No-op hooks; the annotation service supplies a live implementation."""

    def wait_if_paused(self) -> None:
        pass

    def on_status(self, status: dict) -> None:
        pass

    def on_metrics(self, row: dict) -> None:
        pass


class HiddenLabelOracle:
    """Batch annotation oracle answering from stored ground-truth labels."""

    def __init__(self, ds: FeatureDataset, domain: str):
        self.ds = ds
        self.domain = domain

    def annotate(self, requests) -> dict:
        labels = self.ds.hidden_labels(self.domain, "oracle")
        return {r.sample_id: int(labels[r.sample_id]) for r in requests}


@dataclass
class EvalResult:
    y_v: np.ndarray
    y_l: np.ndarray
    f_b: np.ndarray
    y_ens: np.ndarray
    w_train_mean: float
    partition: MdiPartition
    mae: MaeState
    preds_v: np.ndarray
    preds_l: np.ndarray
    preds_e: np.ndarray
    acc_v: float | None
    acc_l: float | None
    acc_ens: float | None


@dataclass
class EpochArtifacts:
    y_u: np.ndarray               # teacher logits per target sample
    pseudo_v: np.ndarray          # clustering pseudo-labels per target sample
    centroids: np.ndarray         # (K, d_b)
    centroid_flags: np.ndarray    # classes that fell back to the global mean
    labeled: dict                 # index -> label (T_L, or T_C proxy in uda/msda)


def compute_centroids(f_b: np.ndarray, probs: np.ndarray):
    """Probability-weighted class centroids of bottleneck features. Classes
    with negligible total mass fall back to the global mean and are flagged."""
    f64 = f_b.astype(np.float64)
    p64 = probs.astype(np.float64)
    mass = p64.sum(axis=0)
    centroids = p64.T @ f64
    flags = mass < 1e-6
    safe = np.where(flags, 1.0, mass)
    centroids = centroids / safe[:, None]
    if flags.any():
        centroids[flags] = f64.mean(axis=0)
    return centroids, flags


def assign_pseudo(f_b: np.ndarray, centroids: np.ndarray) -> int:
    """Nearest centroid by cosine similarity, ties to the lowest class index."""
    sims = cosine_matrix(np.atleast_2d(f_b), centroids)
    return int(sims[0].argmax())


def assign_pseudo_batch(f_b: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    sims = cosine_matrix(f_b, centroids)
    return sims.argmax(axis=1).astype(np.int64)


def _cycled(perm: np.ndarray, total: int) -> np.ndarray:
    return np.resize(perm, total)


class Trainer:
    def __init__(self, ds: FeatureDataset, cfg: TrainConfig, oracle=None,
                 hooks: TrainerHooks | None = None, probe=None):
        cfg.validate()
        self.ds = ds
        self.cfg = cfg
        self.hooks = hooks or TrainerHooks()
        self.probe = probe
        targets = ds.target_names()
        if len(targets) != 1:
            raise ConfigError(f"expected exactly one target domain, "
                              f"got {targets}")
        self.target = targets[0]
        sources = ds.source_names()
        if cfg.mode == "sfada":
            self.X_s, self.y_s = None, None
        else:
            if not sources:
                raise ConfigError("no source domain in dataset")
            if cfg.mode != "msda" and len(sources) > 1:
                raise ConfigError(f"mode {cfg.mode!r} expects one source "
                                  f"domain; use msda for {len(sources)}")
            self.X_s = np.concatenate([ds.features(n) for n in sources])
            self.y_s = np.concatenate([ds.labels(n) for n in sources])
        self.X_t = ds.features(self.target)
        n_t = self.X_t.shape[0]

        self.b_total = int(round(cfg.budget * n_t)) if cfg.budget else 0
        if cfg.mode in ("ada", "sfada") and self.b_total == 0:
            raise ConfigError("budget resolves to zero target samples")
        self.b_round = max(1, math.ceil(cfg.round_fraction * self.b_total)) \
            if self.b_total else 0
        self.annset = AnnotationSet(budget=self.b_total,
                                    num_classes=ds.num_classes)
        if self.b_total and oracle is None:
            raise ConfigError("annotation modes need an oracle")
        self.oracle = oracle

        model_ss, stream_ss = np.random.SeedSequence(cfg.seed).spawn(2)
        if cfg.mode == "sfada":
            self.params = load_checkpoint(cfg.checkpoint)
            if self.params.d_v != ds.d_v or \
                    self.params.num_classes != ds.num_classes:
                raise ConfigError("checkpoint dimensions disagree with dataset")
        else:
            self.params = ModelParams(
                ds.d_v, ds.num_classes, ds.text_features, d_b=cfg.d_b,
                tau=cfg.tau, rng=np.random.default_rng(model_ss),
                separator_noise=cfg.separator_noise)
        self.rng = np.random.default_rng(stream_ss)
        self.debias = DebiasState.uniform(ds.num_classes, m=cfg.debias_m,
                                          eta=cfg.debias_eta)
        # frozen manual-prompt teacher, independent of any training
        self.y_u0 = L.teacher_zeroshot(self.X_t, ds.text_features,
                                       self.params.tau)
        self.late_start = cfg.resolved_late_start()
        self.centroid_switch = cfg.resolved_centroid_switch()
        # annotation rounds spread evenly over the run so selection can use a
        # matured partition; a round re-fires while budget remains
        if self.b_total:
            n_rounds = math.ceil(self.b_total / self.b_round)
            step = cfg.max_epoch / (n_rounds + 1)
            self.round_epochs = sorted({max(1, int(round(step * (j + 1))))
                                        for j in range(n_rounds)})
        else:
            self.round_epochs = []
        self.history: list = []
        self._round_index = 0
        self._truth = None
        try:
            d = ds.domain(self.target)
            if d.labels is not None:
                self._truth = ds.hidden_labels(self.target, "eval") \
                    if d.hidden else ds.labels(self.target)
        except Exception:
            self._truth = None

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, n_completed: int) -> EvalResult:
        P = self.params
        f_vac, f_lac = separate(P, self.X_t)
        yt = text_logits_raw(P, f_lac)
        y_l = yt - self.debias.correction().astype(yt.dtype)
        f_b, y_v = vision_logits(P, f_vac)
        w_train, _ = gen_weight(P, f_vac)
        part = categorize(y_v, y_l)
        select_confident(part, self.cfg.m_pct)
        mae = compute_mae(y_v, y_l, self.cfg.mae_slope_total)
        mae = pick_test_weight(mae, n_completed, float(w_train.mean()),
                               self.late_start, self.cfg.w_star_override)
        y_ens = mae.w_star * y_v + (1.0 - mae.w_star) * y_l
        preds_v = y_v.argmax(axis=1)
        preds_l = y_l.argmax(axis=1)
        preds_e = y_ens.argmax(axis=1)
        acc = lambda p: float((p == self._truth).mean()) \
            if self._truth is not None else None
        return EvalResult(y_v=y_v, y_l=y_l, f_b=f_b, y_ens=y_ens,
                          w_train_mean=float(w_train.mean()), partition=part,
                          mae=mae, preds_v=preds_v, preds_l=preds_l,
                          preds_e=preds_e, acc_v=acc(preds_v),
                          acc_l=acc(preds_l), acc_ens=acc(preds_e))

    def zero_shot_accuracy(self) -> float | None:
        """Plain zero-shot accuracy from the frozen dataset text embeddings."""
        if self._truth is None:
            return None
        preds = cosine_matrix(self.X_t, self.ds.text_features).argmax(axis=1)
        return float((preds == self._truth).mean())

    # -- per-epoch artifacts --------------------------------------------------

    def build_artifacts(self, ev: EvalResult, epoch: int) -> EpochArtifacts:
        probs = softmax(ev.y_ens.astype(np.float64))
        if len(self.annset):
            # annotated samples have known classes; let the centroids use them
            idx = self.annset.indices()
            probs[idx] = 0.0
            probs[idx, self.annset.labels()] = 1.0
        ann_idx = self.annset.indices()
        ann_lab = self.annset.labels()

        def clamp_known(labels):
            if ann_idx.size:
                labels[ann_idx] = ann_lab
            return labels

        centroids, flags = compute_centroids(ev.f_b, probs)
        pseudo = clamp_known(assign_pseudo_batch(ev.f_b, centroids))
        # refine with hard k-means rounds (the deep-clustering recipe):
        # rebuild centroids from the assignments and re-assign until stable,
        # keeping annotated samples pinned to their known classes
        for _ in range(10):
            onehot = np.eye(self.ds.num_classes)[pseudo]
            centroids, flags = compute_centroids(ev.f_b, onehot)
            new_pseudo = clamp_known(assign_pseudo_batch(ev.f_b, centroids))
            if np.array_equal(new_pseudo, pseudo):
                break
            pseudo = new_pseudo
        if epoch < self.centroid_switch:
            y_u = self.y_u0
        else:
            sims = cosine_matrix(ev.f_b, centroids) / self.params.tau
            y_u = sims - sims.mean(axis=1, keepdims=True)
        # confident MI samples supervise with their agreed prediction; in
        # annotation modes the actively labeled set joins them (the two sets
        # are disjoint: T_C is MI, annotation draws from UN)
        labeled = {int(i): int(ev.preds_v[i])
                   for i in (ev.partition.t_c if ev.partition.t_c
                             is not None else [])}
        if self.cfg.mode in ("ada", "sfada"):
            labeled.update({int(i): int(l) for i, l in self.annset.pairs})
        return EpochArtifacts(y_u=y_u, pseudo_v=pseudo, centroids=centroids,
                              centroid_flags=flags, labeled=labeled)

    # -- training -------------------------------------------------------------

    def train_epoch(self, art: EpochArtifacts, epoch: int) -> dict:
        cfg = self.cfg
        bsz = cfg.batch_size
        n_t = self.X_t.shape[0]
        if self.X_s is not None:
            n_iters = math.ceil(max(self.X_s.shape[0], n_t) / bsz)
            order_s = _cycled(self.rng.permutation(self.X_s.shape[0]),
                              n_iters * bsz)
        else:
            n_iters = math.ceil(n_t / bsz)
            order_s = None
        order_t = _cycled(self.rng.permutation(n_t), n_iters * bsz)
        totals = {"lac": 0.0, "vac": 0.0, "ortho": 0.0, "d": 0.0, "im": 0.0}
        total_steps = cfg.max_epoch * n_iters
        for it in range(n_iters):
            tgt_idx = order_t[it * bsz:(it + 1) * bsz]
            src_idx = order_s[it * bsz:(it + 1) * bsz] \
                if order_s is not None else None
            progress = (epoch * n_iters + it) / total_steps
            vals = self._train_batch(src_idx, tgt_idx, art, progress,
                                     epoch, it)
            for k in totals:
                totals[k] += vals[k]
        return {k: v / n_iters for k, v in totals.items()}

    def _train_batch(self, src_idx, tgt_idx, art: EpochArtifacts,
                     progress: float, epoch: int, it: int) -> dict:
        P = self.params
        W = self.cfg.weights
        gamma = W.gamma
        has_src = src_idx is not None

        # ---- forwards: target main view
        x_t = self.X_t[tgt_idx]
        f_vac_t, f_lac_t = separate(P, x_t)
        yt_t = text_logits_raw(P, f_lac_t)
        corr = self.debias.correction().astype(yt_t.dtype)
        y_l_t, self.debias = L.debias(self.debias, yt_t)
        f_b_t, y_v_t = vision_logits(P, f_vac_t)
        w_t, wcache_t = gen_weight(P, f_vac_t)
        y_e_t = L.ensemble_train(y_v_t, y_l_t, w_t)

        # ---- labeled subset on augmented views
        lab_rows = np.array([r for r, i in enumerate(tgt_idx)
                             if int(i) in art.labeled], dtype=np.int64)
        unl_rows = np.array([r for r in range(len(tgt_idx))
                             if r not in set(lab_rows.tolist())],
                            dtype=np.int64)
        if lab_rows.size:
            lab_labels = np.array([art.labeled[int(tgt_idx[r])]
                                   for r in lab_rows], dtype=np.int64)
            x_a = np.stack([augment(self.ds, self.target, int(tgt_idx[r]),
                                    self.rng) for r in lab_rows])
            f_vac_a, f_lac_a = separate(P, x_a)
            yt_a = text_logits_raw(P, f_lac_a)
            y_l_a = yt_a - corr
            f_b_a, y_v_a = vision_logits(P, f_vac_a)
            w_a, wcache_a = gen_weight(P, f_vac_a)
            y_e_a = L.ensemble_train(y_v_a, y_l_a, w_a)

        # ---- forwards: source
        if has_src:
            x_s = self.X_s[src_idx]
            y_s = self.y_s[src_idx]
            f_vac_s, f_lac_s = separate(P, x_s)
            yt_s = text_logits_raw(P, f_lac_s)
            f_b_s, y_v_s = vision_logits(P, f_vac_s)
        else:
            x_s = np.zeros((0, self.ds.d_v), dtype=np.float32)
            f_vac_s = f_lac_s = x_s

        # ---- loss forward + logit gradients
        d_yl_t = np.zeros_like(y_l_t)
        d_ye_t = np.zeros_like(y_e_t)
        lac_t = vac_t = lac_s = vac_s = 0.0

        if unl_rows.size:
            v, g = L.loss_kl(y_l_t[unl_rows], art.y_u[tgt_idx[unl_rows]])
            lac_t += v
            d_yl_t[unl_rows] += g
            v, g = L.loss_ce(y_e_t[unl_rows], art.pseudo_v[tgt_idx[unl_rows]])
            vac_t += v
            d_ye_t[unl_rows] += g
        if lab_rows.size:
            # pseudo logits are handcrafted in cosine units; they target text
            # logits, which carry 1/tau, so scale them onto the same axis
            teach = L.pseudo_logits_batch(lab_labels, self.ds.num_classes,
                                          W.h) / P.tau
            v, d_yl_a = L.loss_kl(y_l_a, teach)
            lac_t += v
            v, d_ye_a = L.loss_ce(y_e_a, lab_labels)
            vac_t += v
        if has_src:
            v, g = L.loss_ce(yt_s, y_s)
            lac_s = v
            d_yl_s = W.alpha * g
            v, g = L.loss_ce(y_v_s, y_s)
            vac_s = v
            d_yv_s = W.beta * g
        im_val, g = L.loss_im(y_e_t)
        d_ye_t += g

        ortho_val, (gls, gvs, glt, gvt) = L.loss_ortho(
            f_lac_s, f_vac_s, f_lac_t, f_vac_t)
        d_flac_s = gamma * gls
        d_fvac_s = gamma * gvs
        d_flac_t = gamma * glt
        d_fvac_t = gamma * gvt

        # ---- two-phase modality discrimination
        d_val = 0.0
        if has_src:   # phase A: train discriminator (and separator) on source
            feats = np.concatenate([f_lac_s, f_vac_s])
            targets = np.concatenate([np.ones(len(f_lac_s)),
                                      np.zeros(len(f_vac_s))])
            y_d, cache = discriminate(P, feats)
            v, glog = L.loss_bce(y_d, targets)
            d_val += v
            d_feats = discriminate_backward(P, cache, gamma * glog,
                                            update_params=True)
            d_flac_s += d_feats[:len(f_lac_s)]
            d_fvac_s += d_feats[len(f_lac_s):]
        # phase B: frozen discriminator aligns target components and mu
        n_b = len(f_lac_t)
        feats = np.concatenate([f_lac_t, f_vac_t, P.mu.data])
        targets = np.concatenate([np.ones(n_b), np.zeros(n_b),
                                  np.ones(self.ds.num_classes)])
        y_d, cache = discriminate(P, feats)
        v, glog = L.loss_bce(y_d, targets)
        d_val += v
        d_feats = discriminate_backward(P, cache, gamma * glog,
                                        update_params=False)
        d_flac_t += d_feats[:n_b]
        d_fvac_t += d_feats[n_b:2 * n_b]
        P.mu.grad += d_feats[2 * n_b:].astype(P.mu.grad.dtype)

        vals = {"lac": lac_t + W.alpha * lac_s, "vac": vac_t + W.beta * vac_s,
                "ortho": ortho_val, "d": d_val, "im": im_val}
        if not all(math.isfinite(v) for v in vals.values()):
            raise NumericAbort(
                f"non-finite loss at epoch {epoch}, batch {it}",
                epoch=epoch, batch=it, breakdown=vals)

        if self.probe is not None:
            probe_data = {"epoch": epoch, "batch": it, "vals": dict(vals),
                          "gamma": gamma, "alpha": W.alpha, "beta": W.beta,
                          "y_l_t": y_l_t.copy(), "y_e_t": y_e_t.copy(),
                          "unl_rows": unl_rows.copy(),
                          "lab_rows": lab_rows.copy(),
                          "teacher": art.y_u[tgt_idx].copy(),
                          "pseudo": art.pseudo_v[tgt_idx].copy(),
                          "f_lac_s": f_lac_s.copy(), "f_vac_s": f_vac_s.copy(),
                          "f_lac_t": f_lac_t.copy(), "f_vac_t": f_vac_t.copy()}
            if has_src:
                probe_data.update({"yt_s": yt_s.copy(), "y_v_s": y_v_s.copy(),
                                   "y_s": y_s.copy()})
            if lab_rows.size:
                probe_data.update({"y_l_a": y_l_a.copy(),
                                   "y_e_a": y_e_a.copy(),
                                   "lab_labels": lab_labels.copy(),
                                   "h": W.h})
            self.probe(probe_data)

        # ---- backward assembly
        g_yv_t, g_w_t = L.ensemble_train_backward(y_v_t, y_l_t, w_t, d_ye_t)
        gen_weight_backward(P, wcache_t, g_w_t)
        d_flac_t += text_logits_backward(P, f_lac_t, yt_t, d_yl_t)
        d_fvac_t += vision_backward(P, f_vac_t, f_b_t, g_yv_t)
        P.q_t.backward(x_t, d_flac_t)
        P.q_v.backward(x_t, d_fvac_t)

        if lab_rows.size:
            g_yv_a, g_w_a = L.ensemble_train_backward(y_v_a, y_l_a, w_a,
                                                      d_ye_a)
            gen_weight_backward(P, wcache_a, g_w_a)
            d_flac_a = text_logits_backward(P, f_lac_a, yt_a, d_yl_a)
            d_fvac_a = vision_backward(P, f_vac_a, f_b_a, g_yv_a)
            P.q_t.backward(x_a, d_flac_a)
            P.q_v.backward(x_a, d_fvac_a)

        if has_src:
            d_flac_s += text_logits_backward(P, f_lac_s, yt_s, d_yl_s)
            d_fvac_s += vision_backward(P, f_vac_s, f_b_s, d_yv_s)
            P.q_t.backward(x_s, d_flac_s)
            P.q_v.backward(x_s, d_fvac_s)

        sgd_step(P.trainable(), self.cfg.sgd, progress)
        P.renormalize_mu()
        return vals

    # -- annotation -----------------------------------------------------------

    def _round_due(self, epoch: int) -> bool:
        if not self.round_epochs or self.annset.remaining <= 0:
            return False
        nxt = self.round_epochs[min(self._round_index,
                                    len(self.round_epochs) - 1)]
        return epoch >= nxt

    def annotation_round(self, ev: EvalResult) -> list:
        media = self.ds.domain(self.target).media_refs
        ctx = {"y_v": ev.y_v, "y_l": ev.y_l,
               "class_names": self.ds.class_names, "media_refs": media,
               "round": self._round_index}
        added = select_active(ev.partition, self.annset, self.b_round,
                              self.oracle, context=ctx)
        self._round_index += 1
        return added

    # -- orchestration ----------------------------------------------------------

    def _status(self, epoch: int) -> dict:
        return {"mode": self.cfg.mode, "epoch": epoch,
                "max_epoch": self.cfg.max_epoch,
                "budget_total": self.b_total,
                "budget_used": len(self.annset)}

    def _emit(self, epoch: int, ev: EvalResult, loss_avg: dict | None) -> None:
        row = {"epoch": epoch, "acc_v": ev.acc_v, "acc_l": ev.acc_l,
               "acc_ens": ev.acc_ens, "w_star": ev.mae.w_star,
               "w_source": ev.mae.source,
               "n_tc": int(ev.partition.t_c.size)
               if ev.partition.t_c is not None else 0,
               "n_labeled": len(self.annset),
               "mdi_counts": ev.partition.counts(),
               "losses": loss_avg}
        self.history.append(row)
        self.hooks.on_metrics(row)
        self.hooks.on_status(self._status(epoch))

    def run(self) -> dict:
        cfg = self.cfg
        zero_shot = self.zero_shot_accuracy()
        self.hooks.on_status(self._status(0))
        ev = self.evaluate(0)
        self._emit(0, ev, None)
        for epoch in range(cfg.max_epoch):
            self.hooks.wait_if_paused()
            art = self.build_artifacts(ev, epoch)
            loss_avg = self.train_epoch(art, epoch)
            ev = self.evaluate(epoch + 1)
            if self._round_due(epoch + 1):
                self.annotation_round(ev)
            self._emit(epoch + 1, ev, loss_avg)
        final = self.history[-1]
        return {"mode": cfg.mode, "seed": cfg.seed, "epochs": cfg.max_epoch,
                "n_target": int(self.X_t.shape[0]),
                "zero_shot_acc": zero_shot,
                "final": {"acc_v": final["acc_v"], "acc_l": final["acc_l"],
                          "acc_ens": final["acc_ens"],
                          "w_star": final["w_star"]},
                "budget": self.b_total, "budget_used": len(self.annset),
                "annotations": [[i, l] for i, l in self.annset.pairs],
                "history": self.history}


def run(ds: FeatureDataset, cfg: TrainConfig, oracle=None, hooks=None,
        probe=None):
    """Build a trainer, run the full loop, return (report, trainer)."""
    trainer = Trainer(ds, cfg, oracle=oracle, hooks=hooks, probe=probe)
    report = trainer.run()
    return report, trainer


# -- source-only pre-training (sfada warm start) -------------------------------

def pretrain_source(ds: FeatureDataset, epochs: int = 20, seed: int = 0,
                    batch_size: int = 32, d_b: int = 256, tau: float = 0.01,
                    sgd: SgdConfig | None = None,
                    weights: LossWeights | None = None,
                    holdout: float = 0.1) -> tuple:
    """Train separator, classifiers, text embeddings and the modality
    discriminator on labeled source data only. Returns (params, report);
    the report carries held-out source accuracies."""
    sgd_cfg = sgd or SgdConfig()
    W = weights or LossWeights()
    sources = ds.source_names()
    if not sources:
        raise ConfigError("dataset has no source domain")
    X = np.concatenate([ds.features(n) for n in sources])
    y = np.concatenate([ds.labels(n) for n in sources])
    model_ss, stream_ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(stream_ss)
    params = ModelParams(ds.d_v, ds.num_classes, ds.text_features, d_b=d_b,
                         tau=tau, rng=np.random.default_rng(model_ss))
    n = X.shape[0]
    n_hold = int(round(holdout * n))
    perm = rng.permutation(n)
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    Xtr, ytr = X[train_idx], y[train_idx]
    teacher = L.teacher_zeroshot(Xtr, ds.text_features, params.tau)
    n_iters = math.ceil(len(train_idx) / batch_size)
    total_steps = epochs * n_iters
    for epoch in range(epochs):
        order = _cycled(rng.permutation(len(train_idx)), n_iters * batch_size)
        for it in range(n_iters):
            idx = order[it * batch_size:(it + 1) * batch_size]
            x_b, y_b = Xtr[idx], ytr[idx]
            f_vac, f_lac = separate(params, x_b)
            yt = text_logits_raw(params, f_lac)
            f_b, y_v = vision_logits(params, f_vac)
            v_l, d_yl = L.loss_ce(yt, y_b)
            v_kl, g_kl = L.loss_kl(yt, teacher[idx])  # anchor the text path
            d_yl = d_yl + g_kl
            v_v, d_yv = L.loss_ce(y_v, y_b)
            empty = np.zeros((0, ds.d_v), dtype=np.float32)
            v_o, (gl, gv, _, _) = L.loss_ortho(f_lac, f_vac, empty, empty)
            d_flac = W.gamma * gl + text_logits_backward(params, f_lac, yt,
                                                         d_yl)
            d_fvac = W.gamma * gv + vision_backward(params, f_vac, f_b, d_yv)
            feats = np.concatenate([f_lac, f_vac])
            targets = np.concatenate([np.ones(len(f_lac)),
                                      np.zeros(len(f_vac))])
            y_d, cache = discriminate(params, feats)
            v_d, glog = L.loss_bce(y_d, targets)
            if not all(math.isfinite(v) for v in (v_l, v_kl, v_v, v_o, v_d)):
                raise NumericAbort("non-finite loss in source pre-training",
                                   epoch=epoch, batch=it)
            d_feats = discriminate_backward(params, cache, W.gamma * glog,
                                            update_params=True)
            d_flac += d_feats[:len(f_lac)]
            d_fvac += d_feats[len(f_lac):]
            params.q_t.backward(x_b, d_flac)
            params.q_v.backward(x_b, d_fvac)
            progress = (epoch * n_iters + it) / total_steps
            sgd_step(params.trainable(), sgd_cfg, progress)
            params.renormalize_mu()

    def _acc(idx) -> dict:
        xh, yh = X[idx], y[idx]
        f_vac, f_lac = separate(params, xh)
        yt = text_logits_raw(params, f_lac)
        _, y_v = vision_logits(params, f_vac)
        ens = 0.5 * y_v + 0.5 * yt
        zs = cosine_matrix(xh, ds.text_features).argmax(axis=1)
        return {"acc_v": float((y_v.argmax(1) == yh).mean()),
                "acc_l": float((yt.argmax(1) == yh).mean()),
                "acc_ens": float((ens.argmax(1) == yh).mean()),
                "zero_shot": float((zs == yh).mean())}

    report = {"epochs": epochs, "seed": seed, "n_source": int(n),
              "n_holdout": int(n_hold),
              "holdout": _acc(hold_idx) if n_hold else None,
              "train": _acc(train_idx)}
    return params, report
