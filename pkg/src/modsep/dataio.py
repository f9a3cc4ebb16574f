"""Feature-dataset container, binary blob I/O, and a synthetic two-domain benchmark.

On-disk format: a UTF-8 ``manifest.json`` plus headerless little-endian blobs,
float32 row-major for features (``*.f32``) and uint32 for labels (``*.u32``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ConfigError, DataError, HiddenLabelError, LabelRangeError,
                     MissingFileError, NonFiniteError, ShapeError,
                     SizeMismatchError)
from .numcore import normalize_rows

MANIFEST_VERSION = "modsep/1"

_MANIFEST_KEYS = {"version", "d_v", "num_classes", "class_names",
                  "text_features_file", "domains"}
_DOMAIN_KEYS = {"name", "role", "count", "features_file", "labels_file",
                "hidden", "aug_files", "media_refs"}


class AccessAudit:
    """Counts reads of hidden labels, split by purpose (oracle vs eval)."""

    def __init__(self):
        self.oracle_reads = 0
        self.eval_reads = 0

    def bump(self, purpose: str) -> None:
        if purpose == "oracle":
            self.oracle_reads += 1
        elif purpose == "eval":
            self.eval_reads += 1
        else:
            raise ValueError(f"unknown audit purpose {purpose!r}")


@dataclass
class DomainData:
    name: str
    role: str                      # "source" | "target"
    features: np.ndarray           # (N, d_v) float32
    labels: np.ndarray | None      # (N,) int64, None if absent
    hidden: bool = False           # labels reachable only via the audited API
    aug: list = field(default_factory=list)     # list of (N, d_v) float32 views
    media_refs: list | None = None

    @property
    def count(self) -> int:
        return self.features.shape[0]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class FeatureDataset:
    """Immutable bundle of per-domain features, labels and class text embeddings.

    Hidden target labels are reachable only through :meth:`hidden_labels`,
    which records every access in :attr:`audit`.
    """

    def __init__(self, class_names, text_features, domains, audit=None):
        self.class_names = list(class_names)
        self.text_features = _freeze(np.asarray(text_features, dtype=np.float32))
        self._domains = {d.name: d for d in domains}
        self._order = [d.name for d in domains]
        self.audit = audit or AccessAudit()
        self._validate()

    # -- construction-time invariants -------------------------------------

    def _validate(self):
        k, d_v = self.text_features.shape
        if k < 2:
            raise DataError("dataset must have at least 2 classes")
        if len(self.class_names) != k:
            raise DataError("class_names length disagrees with text features")
        if not np.isfinite(self.text_features).all():
            raise NonFiniteError("text features contain non-finite values")
        for d in self._domains.values():
            if d.role not in ("source", "target"):
                raise DataError(f"domain {d.name!r} has invalid role {d.role!r}")
            if d.features.shape[1] != d_v:
                raise ShapeError(f"domain {d.name!r} feature dim "
                                 f"{d.features.shape[1]} != {d_v}")
            if not np.isfinite(d.features).all():
                raise NonFiniteError(f"domain {d.name!r} features not finite")
            if d.role == "source":
                if d.labels is None:
                    raise DataError(f"source domain {d.name!r} lacks labels")
                if d.hidden:
                    raise DataError(f"source domain {d.name!r} cannot hide labels")
            if d.labels is not None:
                if d.labels.shape != (d.count,):
                    raise ShapeError(f"domain {d.name!r} label count mismatch")
                if d.labels.size and (d.labels.min() < 0 or d.labels.max() >= k):
                    raise LabelRangeError(f"domain {d.name!r} labels out of [0, {k})")
            for i, a in enumerate(d.aug):
                if a.shape != d.features.shape:
                    raise ShapeError(f"domain {d.name!r} aug view {i} shape mismatch")
                if not np.isfinite(a).all():
                    raise NonFiniteError(f"domain {d.name!r} aug view {i} not finite")
            if d.media_refs is not None and len(d.media_refs) != d.count:
                raise DataError(f"domain {d.name!r} media_refs length mismatch")
            _freeze(d.features)
            for a in d.aug:
                _freeze(a)
            if d.labels is not None:
                _freeze(d.labels)

    # -- accessors ---------------------------------------------------------

    @property
    def num_classes(self) -> int:
        return self.text_features.shape[0]

    @property
    def d_v(self) -> int:
        return self.text_features.shape[1]

    @property
    def domain_names(self) -> list:
        return list(self._order)

    def domain(self, name: str) -> DomainData:
        try:
            return self._domains[name]
        except KeyError:
            raise DataError(f"no domain named {name!r}") from None

    def source_names(self) -> list:
        return [n for n in self._order if self._domains[n].role == "source"]

    def target_names(self) -> list:
        return [n for n in self._order if self._domains[n].role == "target"]

    def features(self, name: str) -> np.ndarray:
        return self.domain(name).features

    def labels(self, name: str) -> np.ndarray:
        """Trainer-visible labels; hidden domains raise."""
        d = self.domain(name)
        if d.hidden:
            raise HiddenLabelError(
                f"labels of domain {name!r} are hidden; use the oracle/eval API")
        if d.labels is None:
            raise DataError(f"domain {name!r} has no labels")
        return d.labels

    def hidden_labels(self, name: str, purpose: str) -> np.ndarray:
        """Audited access to ground-truth labels (oracle queries, evaluation)."""
        d = self.domain(name)
        if d.labels is None:
            raise DataError(f"domain {name!r} has no labels")
        self.audit.bump(purpose)
        return d.labels


# -- blob I/O ---------------------------------------------------------------

def _read_blob(path: Path, dtype: str, count: int, what: str) -> np.ndarray:
    if not path.is_file():
        raise MissingFileError(f"missing {what} file: {path}")
    expected = 4 * count
    actual = path.stat().st_size
    if actual != expected:
        raise SizeMismatchError(
            f"{path} holds {actual} bytes, expected {expected} ({what})")
    return np.fromfile(path, dtype=dtype)


def _read_features(path: Path, count: int, d_v: int) -> np.ndarray:
    flat = _read_blob(path, "<f4", count * d_v, "features")
    arr = flat.reshape(count, d_v).astype(np.float32, copy=False)
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{path} contains non-finite values")
    return arr

def _read_labels(path: Path, count: int, num_classes: int) -> np.ndarray:
    raw = _read_blob(path, "<u4", count, "labels")
    if raw.size and raw.max() >= num_classes:
        raise LabelRangeError(
            f"{path} contains label {int(raw.max())} >= {num_classes}")
    return raw.astype(np.int64)


def load_dataset(manifest_path) -> FeatureDataset:
    """Load and fully validate a dataset from its manifest."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    if not manifest_path.is_file():
        raise MissingFileError(f"missing manifest: {manifest_path}")
    with open(manifest_path, encoding="utf-8") as fh:
        try:
            man = json.load(fh)
        except json.JSONDecodeError as e:
            raise DataError(f"manifest does not parse: {e}") from e
    unknown = set(man) - _MANIFEST_KEYS
    if unknown:
        raise DataError(f"unknown manifest keys: {sorted(unknown)}")
    if man.get("version") != MANIFEST_VERSION:
        raise DataError(f"unsupported format version {man.get('version')!r}")
    root = manifest_path.parent
    d_v = int(man["d_v"])
    k = int(man["num_classes"])
    names = man["class_names"]
    if len(names) != k:
        raise DataError("class_names length disagrees with num_classes")
    text = _read_features(root / man["text_features_file"], k, d_v)
    domains = []
    for entry in man["domains"]:
        unknown = set(entry) - _DOMAIN_KEYS
        if unknown:
            raise DataError(f"unknown domain keys: {sorted(unknown)}")
        count = int(entry["count"])
        feats = _read_features(root / entry["features_file"], count, d_v)
        labels = None
        if entry.get("labels_file"):
            labels = _read_labels(root / entry["labels_file"], count, k)
        aug = [_read_features(root / p, count, d_v)
               for p in entry.get("aug_files", [])]
        domains.append(DomainData(
            name=entry["name"], role=entry["role"], features=feats,
            labels=labels, hidden=bool(entry.get("hidden", False)),
            aug=aug, media_refs=entry.get("media_refs")))
    return FeatureDataset(names, text, domains)


def write_dataset(ds: FeatureDataset, out_dir) -> Path:
    """Write a dataset so that load_dataset(write_dataset(ds)) == ds bit for bit."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds.text_features.astype("<f4").tofile(out / "text_features.f32")
    entries = []
    for name in ds.domain_names:
        d = ds.domain(name)
        feat_file = f"{name}.f32"
        d.features.astype("<f4").tofile(out / feat_file)
        entry = {"name": name, "role": d.role, "count": d.count,
                 "features_file": feat_file}
        if d.labels is not None:
            lab_file = f"{name}.labels.u32"
            d.labels.astype("<u4").tofile(out / lab_file)
            entry["labels_file"] = lab_file
        if d.hidden:
            entry["hidden"] = True
        if d.aug:
            entry["aug_files"] = []
            for i, a in enumerate(d.aug):
                aug_file = f"{name}.aug{i}.f32"
                a.astype("<f4").tofile(out / aug_file)
                entry["aug_files"].append(aug_file)
        if d.media_refs is not None:
            entry["media_refs"] = list(d.media_refs)
        entries.append(entry)
    man = {"version": MANIFEST_VERSION, "d_v": ds.d_v,
           "num_classes": ds.num_classes, "class_names": ds.class_names,
           "text_features_file": "text_features.f32", "domains": entries}
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(man, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return out / "manifest.json"


# -- synthetic benchmark ------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    k: int
    d_v: int
    n_per_domain: int
    rotation_deg: float = 0.0
    translation_norm: float = 0.0
    modality_offset_norm: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0


def _span_rotation(k: int, angle_rad: float, rng) -> np.ndarray:
    """Orthogonal (k,k) matrix rotating by ``angle_rad`` in floor(k/2) planes
    of class space. Planes pair up randomly matched class axes, so the angle
    directly controls pairwise class confusion."""
    perm = rng.permutation(k)
    rot = np.eye(k)
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    for i in range(0, k - 1, 2):
        a, b = perm[i], perm[i + 1]
        rot[a, a] = c
        rot[b, b] = c
        rot[a, b] = -s
        rot[b, a] = s
    return rot


def gen_synthetic(cfg: SynthConfig) -> FeatureDataset:
    """Deterministic two-domain benchmark standing in for frozen VLM features.

    Class means are K orthonormalized random unit directions. The target
    domain rotates and translates them inside the class-mean subspace (so the
    shift parameters matter for classification, not just for geometry).
    Sample noise carries the energy of an isotropic d_v-dimensional Gaussian
    of the configured sigma, concentrated in the class-mean subspace: per
    span dimension it is scaled by sqrt(d_v / K). Text embeddings offset the
    source means by one shared random vector (the modality gap) and are
    unit-normalized. Target labels are stored hidden.
    """
    if cfg.k > cfg.d_v:
        raise ConfigError(f"k={cfg.k} exceeds d_v={cfg.d_v}")
    if cfg.k < 2:
        raise ConfigError("need at least 2 classes")
    if cfg.n_per_domain < 1:
        raise ConfigError("n_per_domain must be positive")
    rng = np.random.default_rng(cfg.seed)
    k, d_v, n = cfg.k, cfg.d_v, cfg.n_per_domain

    basis, _ = np.linalg.qr(rng.standard_normal((d_v, k)))
    means = basis.T                              # (k, d_v) orthonormal rows

    rot = _span_rotation(k, math.radians(cfg.rotation_deg), rng)
    tgt_means = rot.T @ means                    # rotated within the span
    t_dir = rng.standard_normal(k)
    t_dir /= np.linalg.norm(t_dir)
    tgt_means = tgt_means + cfg.translation_norm * (t_dir @ means)

    off_dirs = rng.standard_normal((k, k))
    off_dirs /= np.linalg.norm(off_dirs, axis=1, keepdims=True)
    off = cfg.modality_offset_norm * (off_dirs @ means)   # one per class
    text = normalize_rows(means + off).astype(np.float32)

    sigma_span = cfg.noise_sigma * math.sqrt(d_v / k)

    def draw(center_rows, labels):
        noise = rng.standard_normal((labels.size, k)) * sigma_span
        return (center_rows[labels] + noise @ means).astype(np.float32)

    domains = []
    for name, role, centers in (("source", "source", means),
                                ("target", "target", tgt_means)):
        labels = rng.permutation(np.arange(n) % k).astype(np.int64)
        feats = draw(centers, labels)
        aug = [draw(centers, labels)]             # one independent view
        domains.append(DomainData(
            name=name, role=role, features=feats, labels=labels,
            hidden=(role == "target"), aug=aug))
    names = [f"class_{i:02d}" for i in range(k)]
    return FeatureDataset(names, text, domains)


def augment(ds: FeatureDataset, domain: str, idx: int, rng) -> np.ndarray:
    """One alternative view of a sample: a stored view when available, else
    the feature plus Gaussian noise of norm ~= 0.1 * ||feature||."""
    d = ds.domain(domain)
    if d.aug:
        view = d.aug[0] if len(d.aug) == 1 else d.aug[int(rng.integers(len(d.aug)))]
        return view[idx].copy()
    f = d.features[idx]
    sigma = 0.1 * float(np.linalg.norm(f)) / math.sqrt(ds.d_v)
    return (f + rng.standard_normal(ds.d_v) * sigma).astype(np.float32)
