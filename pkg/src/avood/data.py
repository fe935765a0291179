"""Feature sets, the AVF1 binary format, splitting, synthetic benchmarks.

A FeatureSet is an N x H block of float32 activation-vector features
with integer labels (-1 marks unlabeled out-of-distribution rows).  The
synthetic generators build nonnegative per-class Gaussian clusters that
mimic post-ReLU penultimate-layer statistics and three ways of leaving
the in-distribution manifold: shifted cluster directions, norm-scaled
copies, and uniform box noise.
"""

from __future__ import annotations

import csv
import io
import struct
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataFormatError, DimensionError, ParameterError
from .rng import CounterRng

AVF1_MAGIC = b"AVF1"
AVF1_VERSION = 1

# counter-rng stream ids; fixed so files regenerate identically anywhere
STREAM_MEANS = 1
STREAM_OOD_DIRS = 2
STREAM_NOISE = 3
STREAM_SPLIT = 4

OOD_KINDS = ("shifted", "scaled-norm", "uniform")


@dataclass
class FeatureSet:
    """N x H float32 features plus per-row labels in [0, C) or -1."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        if self.features.ndim != 2:
            raise DimensionError("features must be 2-D (N x H)")
        if self.labels.shape != (self.features.shape[0],):
            raise DimensionError("labels must be one per feature row")
        if self.n_classes < 1:
            raise ParameterError("n_classes must be >= 1")
        if not np.all(np.isfinite(self.features)):
            raise DataFormatError("features contain NaN or Inf")
        bad = (self.labels != -1) & ((self.labels < 0) | (self.labels >= self.n_classes))
        if np.any(bad):
            raise DataFormatError(
                f"labels must lie in [0, {self.n_classes}) or be -1"
            )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def h(self) -> int:
        return self.features.shape[1]

    def take(self, index: np.ndarray) -> "FeatureSet":
        return FeatureSet(self.features[index], self.labels[index], self.n_classes)


def write_features(path, fs: FeatureSet) -> None:
    """Write the little-endian AVF1 container (header, f32 rows, i32 labels)."""
    header = struct.pack(
        "<4sIQII", AVF1_MAGIC, AVF1_VERSION, fs.n, fs.h, fs.n_classes
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(fs.features.astype("<f4", copy=False).tobytes(order="C"))
        fh.write(fs.labels.astype("<i4", copy=False).tobytes())


def read_features(path) -> FeatureSet:
    """Read an AVF1 file, validating magic, version, and payload size."""
    with open(path, "rb") as fh:
        raw = fh.read()
    head_size = struct.calcsize("<4sIQII")
    if len(raw) < head_size:
        raise DataFormatError(f"{path}: file shorter than AVF1 header")
    magic, version, n, h, c = struct.unpack_from("<4sIQII", raw)
    if magic != AVF1_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}, expected {AVF1_MAGIC!r}")
    if version != AVF1_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    expect = head_size + n * h * 4 + n * 4
    if len(raw) != expect:
        raise DataFormatError(
            f"{path}: payload is {len(raw)} bytes, header implies {expect}"
        )
    feats = np.frombuffer(raw, dtype="<f4", count=n * h, offset=head_size)
    labels = np.frombuffer(raw, dtype="<i4", count=n, offset=head_size + n * h * 4)
    return FeatureSet(feats.reshape(n, h).copy(), labels.copy(), c)


def write_features_csv(path, fs: FeatureSet) -> None:
    """Plain-text sibling of AVF1: header row ``label,f0..f{H-1}``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"f{i}" for i in range(fs.h)])
        for label, row in zip(fs.labels.tolist(), fs.features.tolist()):
            w.writerow([label] + [repr(x) for x in row])


def read_features_csv(path, n_classes: int | None = None) -> FeatureSet:
    """Import the CSV layout written above (or by external tools).

    ``n_classes`` is inferred as max(label)+1 when omitted; fully
    unlabeled files must pass it explicitly.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty CSV")
    header = rows[0]
    if not header or header[0] != "label":
        raise DataFormatError(f"{path}: first CSV column must be 'label'")
    h = len(header) - 1
    expected = ["label"] + [f"f{i}" for i in range(h)]
    if header != expected:
        raise DataFormatError(f"{path}: CSV header must be label,f0..f{h - 1}")
    body = [r for r in rows[1:] if r]
    labels = np.array([int(float(r[0])) for r in body], dtype=np.int32)
    feats = np.array([[float(x) for x in r[1:]] for r in body], dtype=np.float32)
    if body and feats.shape[1] != h:
        raise DataFormatError(f"{path}: row width does not match header")
    if n_classes is None:
        top = int(labels.max(initial=-1))
        if top < 0:
            raise DataFormatError(
                f"{path}: all labels are -1; pass n_classes explicitly"
            )
        n_classes = top + 1
    return FeatureSet(feats.reshape(len(body), h), labels, n_classes)


def split(fs: FeatureSet, val_fraction: float, seed: int) -> tuple[FeatureSet, FeatureSet]:
    """Stratified train/validation split, deterministic per seed.

    Every class contributes at least one validation row.  Both parts
    keep the original row order.
    """
    if not (0.0 < val_fraction <= 0.5):
        raise ParameterError(
            f"val_fraction must be in (0, 0.5], got {val_fraction}"
        )
    order = CounterRng(seed, STREAM_SPLIT).permutation(fs.n)
    val_idx: list[int] = []
    for cls in np.unique(fs.labels):
        members = [i for i in order.tolist() if fs.labels[i] == cls]
        k = max(1, int(val_fraction * len(members) + 0.5))
        val_idx.extend(members[:k])
    val_mask = np.zeros(fs.n, dtype=bool)
    val_mask[val_idx] = True
    return fs.take(np.flatnonzero(~val_mask)), fs.take(np.flatnonzero(val_mask))


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for the synthetic benchmark; a pure function of its fields.

    ``seed`` fixes the class geometry (cluster means and the held-out
    shift directions); ``sample_seed`` fixes the per-row noise, so
    several sets can share one geometry.  ``sample_seed=None`` reuses
    ``seed``.
    """

    n_classes: int = 10
    feature_dim: int = 64
    n_samples: int = 1000
    mean_scale: float = 6.0
    noise_sigma: float = 1.0
    ood_kind: str = "shifted"
    ood_multiplier: float = 0.5
    ood_shift: float = 1.0
    seed: int = 0
    sample_seed: int | None = None

    def __post_init__(self):
        if self.n_classes < 1 or self.feature_dim < 1 or self.n_samples < 1:
            raise ParameterError("n_classes, feature_dim, n_samples must be >= 1")
        if self.noise_sigma <= 0 or self.mean_scale < 0:
            raise ParameterError("noise_sigma must be > 0 and mean_scale >= 0")
        if self.ood_kind not in OOD_KINDS:
            raise ParameterError(f"ood_kind must be one of {OOD_KINDS}")
        if self.ood_multiplier <= 0 or self.ood_shift < 0:
            raise ParameterError("ood_multiplier must be > 0 and ood_shift >= 0")
        if self.feature_dim < self.n_classes:
            warnings.warn("feature_dim < n_classes gives weakly separable clusters")

    @property
    def noise_seed(self) -> int:
        return self.seed if self.sample_seed is None else self.sample_seed

    def with_(self, **kw) -> "SynthSpec":
        return replace(self, **kw)


def _unit_rows(m: np.ndarray) -> np.ndarray:
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def class_means(spec: SynthSpec) -> np.ndarray:
    """Cluster means: random unit directions scaled to ``mean_scale``."""
    rng = CounterRng(spec.seed, STREAM_MEANS)
    dirs = rng.normals(spec.n_classes * spec.feature_dim)
    dirs = _unit_rows(dirs.reshape(spec.n_classes, spec.feature_dim))
    return spec.mean_scale * dirs


def _shifted_means(spec: SynthSpec) -> np.ndarray:
    # blend each class direction with a held-out random direction;
    # shift 0 degenerates to the ID means exactly
    base = class_means(spec)
    if spec.ood_shift == 0.0:
        return base
    rng = CounterRng(spec.seed, STREAM_OOD_DIRS)
    extra = rng.normals(spec.n_classes * spec.feature_dim)
    extra = _unit_rows(extra.reshape(spec.n_classes, spec.feature_dim))
    mixed = _unit_rows(_unit_rows(base) + spec.ood_shift * extra)
    return spec.mean_scale * mixed


def _cluster_samples(spec: SynthSpec, means: np.ndarray) -> np.ndarray:
    labels = np.arange(spec.n_samples) % spec.n_classes
    rng = CounterRng(spec.noise_seed, STREAM_NOISE)
    noise = rng.normals(spec.n_samples * spec.feature_dim)
    noise = noise.reshape(spec.n_samples, spec.feature_dim)
    raw = means[labels] + spec.noise_sigma * noise
    return np.maximum(raw, 0.0)  # post-ReLU nonnegativity


def synth_id(spec: SynthSpec) -> FeatureSet:
    """In-distribution set: nonnegative Gaussian clusters, balanced labels."""
    feats = _cluster_samples(spec, class_means(spec))
    labels = (np.arange(spec.n_samples) % spec.n_classes).astype(np.int32)
    return FeatureSet(feats.astype(np.float32), labels, spec.n_classes)


def synth_ood(spec: SynthSpec, id_spec: SynthSpec | None = None) -> FeatureSet:
    """Out-of-distribution set of the kind ``spec.ood_kind``, labels all -1.

    ``id_spec`` supplies the in-distribution geometry (class count,
    dimensions, means); it defaults to ``spec`` itself.  All rows stay
    elementwise nonnegative, matching post-ReLU feature semantics.
    """
    base = spec if id_spec is None else id_spec
    geom = base.with_(
        n_samples=spec.n_samples,
        sample_seed=spec.noise_seed,
        ood_kind=spec.ood_kind,
        ood_multiplier=spec.ood_multiplier,
        ood_shift=spec.ood_shift,
    )
    if spec.ood_kind == "shifted":
        feats = _cluster_samples(geom, _shifted_means(geom))
    elif spec.ood_kind == "scaled-norm":
        feats = spec.ood_multiplier * _cluster_samples(geom, class_means(geom))
    else:  # uniform box over the typical ID coordinate range
        hi = geom.mean_scale / np.sqrt(geom.feature_dim) + 2.0 * geom.noise_sigma
        rng = CounterRng(spec.noise_seed, STREAM_NOISE)
        feats = hi * rng.uniforms(spec.n_samples * geom.feature_dim)
        feats = feats.reshape(spec.n_samples, geom.feature_dim)
    labels = np.full(spec.n_samples, -1, dtype=np.int32)
    return FeatureSet(feats.astype(np.float32), labels, geom.n_classes)
