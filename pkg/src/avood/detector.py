"""Detector assembly: architecture, training loop, calibration, model file.

The detector is one frozen-input FC encoder row W (C x H) with a
temperature softmax, plus two three-layer FC decoders: D1 maps the C
logits back to the H-dimensional feature, D2 maps the temperature
softmax back to the scaled logits.  Training minimizes the two
reconstruction norms plus a cross-entropy regularizer over shuffled
mini-batches with Adam and a two-stage learning-rate decay; calibration
fits one Gaussian per score statistic on held-out validation features.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .data import FeatureSet
from .errors import (
    CalibrationError,
    DimensionError,
    ModelFormatError,
    NonFiniteGradientError,
    ParameterError,
    TrainingDivergedError,
)
from .nn import AdamState, FcLayer, adam_step, detector_loss
from .rng import CounterRng
from .scoring import GaussianFit, raw_statistics

OLSR_MAGIC = b"OLSR"
OLSR_VERSION = 1

STREAM_INIT = 100      # + parameter slot (W, then d1 layers, then d2 layers)
STREAM_SHUFFLE = 1000  # + epoch


@dataclass
class DetectorModel:
    """Encoder row W plus the two decoders; immutable once trained."""

    W: np.ndarray          # (C, H)
    d1: list[FcLayer]      # C -> H
    d2: list[FcLayer]      # C -> C
    T: float

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.W.ndim != 2:
            raise DimensionError("W must be 2-D (C x H)")
        if not (self.T > 0):
            raise ParameterError(f"temperature must be > 0, got {self.T}")
        c, h = self.W.shape
        if self.d1[0].in_dim != c or self.d1[-1].out_dim != h:
            raise DimensionError("D1 must map C logits to an H feature")
        if self.d2[0].in_dim != c or self.d2[-1].out_dim != c:
            raise DimensionError("D2 must map C probabilities to C logits")

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    """Training and calibration settings; defaults are the standard run."""

    lam: float = 1.0
    temperature: float = 100.0
    lr: float = 1e-4
    batch: int = 128
    epochs: int = 300
    seed: int = 0
    decoder_hidden: int | None = None  # None -> max(H, 4 C)
    loss: str = "norm"                 # norm | squared
    k: float = 10.0                    # epsilon multiplier
    val_fraction: float = 0.04
    distance: str = "nl2"              # calibration/scoring residual kind
    detach_l2_target: bool = False
    decay_points: tuple[float, float] = (0.5, 0.75)
    decay_factor: float = 0.1

    def __post_init__(self):
        if self.lam < 0 or self.k < 0:
            raise ParameterError("lam and k must be >= 0")
        for name in ("temperature", "lr", "decay_factor"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0")
        if self.batch < 1 or self.epochs < 1:
            raise ParameterError("batch and epochs must be >= 1")
        if not (0.0 < self.val_fraction <= 0.5):
            raise ParameterError("val_fraction must be in (0, 0.5]")
        if self.decoder_hidden is not None and self.decoder_hidden < 1:
            raise ParameterError("decoder_hidden must be >= 1")
        if self.loss not in ("norm", "squared"):
            raise ParameterError(f"unknown loss variant {self.loss!r}")
        if self.distance not in ("nl2", "l2"):
            raise ParameterError(f"unknown distance {self.distance!r}")
        if not (0.0 < self.decay_points[0] < self.decay_points[1] <= 1.0):
            raise ParameterError("decay_points must satisfy 0 < p1 < p2 <= 1")

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


def _init_layer(out_dim: int, in_dim: int, activation: str, rng: CounterRng) -> FcLayer:
    # uniform fan-in scaling, weights then bias from one stream
    bound = 1.0 / math.sqrt(in_dim)
    w = rng.uniform_matrix(out_dim, in_dim, -bound, bound)
    b = rng.uniform_matrix(1, out_dim, -bound, bound)[0]
    return FcLayer(weight=w, bias=b, activation=activation)


def init_model(
    n_classes: int,
    feature_dim: int,
    config: TrainConfig,
    init_W: np.ndarray | None = None,
) -> DetectorModel:
    """Fresh seeded model; ``init_W`` loads an upstream classifier row."""
    c, h = n_classes, feature_dim
    hid = config.decoder_hidden or max(h, 4 * c)
    if init_W is not None:
        W = np.asarray(init_W, dtype=np.float64)
        if W.shape != (c, h):
            raise DimensionError(
                f"init_W shape {W.shape} does not match (C, H) = {(c, h)}"
            )
        W = W.copy()
    else:
        W = CounterRng(config.seed, STREAM_INIT).uniform_matrix(
            c, h, -1.0 / math.sqrt(h), 1.0 / math.sqrt(h)
        )
    shapes = {
        "d1": [(hid, c, "relu"), (hid, hid, "relu"), (h, hid, "none")],
        "d2": [(hid, c, "relu"), (hid, hid, "relu"), (c, hid, "none")],
    }
    slot = 1
    decoders: dict[str, list[FcLayer]] = {}
    for name, spec_list in shapes.items():
        layers = []
        for out_dim, in_dim, act in spec_list:
            rng = CounterRng(config.seed, STREAM_INIT + slot)
            layers.append(_init_layer(out_dim, in_dim, act, rng))
            slot += 1
        decoders[name] = layers
    return DetectorModel(W=W, d1=decoders["d1"], d2=decoders["d2"], T=config.temperature)


def params_dict(model: DetectorModel) -> dict[str, np.ndarray]:
    """Named views of every trainable array, in declared order."""
    out = {"W": model.W}
    for tag, layers in (("d1", model.d1), ("d2", model.d2)):
        for i, layer in enumerate(layers):
            out[f"{tag}.{i}.weight"] = layer.weight
            out[f"{tag}.{i}.bias"] = layer.bias
    return out


@dataclass
class TrainResult:
    model: DetectorModel
    history: list[dict] = field(default_factory=list)  # per-epoch mean losses


def train(
    features: FeatureSet,
    config: TrainConfig,
    init_W: np.ndarray | None = None,
) -> TrainResult:
    """Run the full training schedule on labeled ID features.

    Deterministic for a given (features, config, init_W): shuffling and
    initialization come from counter-based generators keyed off
    ``config.seed``, and updates run single-threaded in batch order.
    The learning rate drops by ``decay_factor`` after 50% and again
    after 75% of the total update count.
    """
    if features.n < config.batch:
        raise ParameterError(
            f"need at least one full batch: N = {features.n} < {config.batch}"
        )
    if np.any(features.labels < 0):
        raise ParameterError("training features must all be labeled")
    V = features.features.astype(np.float64)
    y = features.labels.astype(np.int64)

    model = init_model(features.n_classes, features.h, config, init_W)
    params = params_dict(model)
    state = AdamState.for_params(params, lr=config.lr)

    n_batches = math.ceil(features.n / config.batch)
    total_updates = config.epochs * n_batches
    b1 = math.floor(config.decay_points[0] * total_updates)
    b2 = math.floor(config.decay_points[1] * total_updates)

    history: list[dict] = []
    update = 0
    for epoch in range(config.epochs):
        order = CounterRng(config.seed, STREAM_SHUFFLE + epoch).permutation(features.n)
        sums = np.zeros(3)
        for bi in range(n_batches):
            idx = order[bi * config.batch : (bi + 1) * config.batch]
            if update >= b2:
                state.lr = config.lr * config.decay_factor**2
            elif update >= b1:
                state.lr = config.lr * config.decay_factor
            else:
                state.lr = config.lr
            result = detector_loss(
                params["W"], model.d1, model.d2, config.temperature,
                V[idx], y[idx], config.lam,
                loss=config.loss, detach_l2_target=config.detach_l2_target,
            )
            if not math.isfinite(result.total):
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}, batch {bi}"
                )
            try:
                new = adam_step(params, result.grads, state)
            except NonFiniteGradientError as exc:
                raise NonFiniteGradientError(
                    f"epoch {epoch}, batch {bi}: {exc}"
                ) from exc
            for name in params:
                np.copyto(params[name], new[name])
            sums += np.array([result.l1, result.l2, result.lreg]) * idx.size
            update += 1
        mean = sums / features.n
        history.append(
            {
                "epoch": epoch,
                "l1": float(mean[0]),
                "l2": float(mean[1]),
                "lreg": float(mean[2]),
                "lr": state.lr,
            }
        )
    return TrainResult(model=model, history=history)


def fit_gaussians(
    model: DetectorModel,
    val_features: FeatureSet,
    k: float = 10.0,
    distance: str = "nl2",
) -> tuple[GaussianFit, GaussianFit, GaussianFit]:
    """Calibrate the three score statistics on validation features.

    Each fit is the maximum-likelihood Gaussian (sample mean, population
    standard deviation) with widening ``epsilon = k * sigma``.  Order
    invariant by construction.
    """
    if val_features.n < 2:
        raise CalibrationError(
            f"need at least 2 validation samples, got {val_features.n}"
        )
    if k < 0:
        raise ParameterError("k must be >= 0")
    conf, r1, r2, flagged = raw_statistics(
        model, val_features.features.astype(np.float64), distance
    )
    if np.any(flagged):
        raise CalibrationError(
            f"{int(flagged.sum())} validation feature(s) have degenerate norms"
        )
    fits = []
    for values in (conf, r1, r2):
        mu = float(np.mean(values))
        sigma = float(np.std(values))  # population, divisor N
        fits.append(GaussianFit(mu=mu, sigma=sigma, epsilon=k * sigma))
    return fits[0], fits[1], fits[2]


# ---------------------------------------------------------------------------
# model file: little-endian header + float64 parameter blobs + fit triples

_HEADER = "<4sIIIddII"


def save_model(
    path,
    model: DetectorModel,
    fits: tuple[GaussianFit, GaussianFit, GaussianFit],
    k: float = 10.0,
) -> None:
    d1_hidden = model.d1[0].out_dim
    d2_hidden = model.d2[0].out_dim
    header = struct.pack(
        _HEADER, OLSR_MAGIC, OLSR_VERSION,
        model.feature_dim, model.n_classes, model.T, k, d1_hidden, d2_hidden,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in params_dict(model).values():
            fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))
        tail = []
        for g in fits:
            tail.extend([g.mu, g.sigma, g.epsilon])
        fh.write(struct.pack("<9d", *tail))


def _layer_shapes(h: int, c: int, hid1: int, hid2: int):
    return {
        "d1": [(hid1, c, "relu"), (hid1, hid1, "relu"), (h, hid1, "none")],
        "d2": [(hid2, c, "relu"), (hid2, hid2, "relu"), (c, hid2, "none")],
    }


def load_model(path) -> tuple[DetectorModel, tuple[GaussianFit, GaussianFit, GaussianFit]]:
    """Read a model file back; bit-exact inverse of ``save_model``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    head_size = struct.calcsize(_HEADER)
    if len(raw) < head_size:
        raise ModelFormatError(f"{path}: file shorter than model header")
    magic, version, h, c, t, k, hid1, hid2 = struct.unpack_from(_HEADER, raw)
    if magic != OLSR_MAGIC:
        raise ModelFormatError(f"{path}: bad magic {magic!r}, expected {OLSR_MAGIC!r}")
    if version != OLSR_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    if h < 1 or c < 1 or hid1 < 1 or hid2 < 1 or not t > 0 or k < 0:
        raise ModelFormatError(f"{path}: invalid header values (H={h}, C={c}, T={t})")

    shapes = _layer_shapes(h, c, hid1, hid2)
    counts = [c * h]
    for spec_list in shapes.values():
        for out_dim, in_dim, _ in spec_list:
            counts.extend([out_dim * in_dim, out_dim])
    expect = head_size + 8 * (sum(counts) + 9)
    if len(raw) != expect:
        raise ModelFormatError(
            f"{path}: payload is {len(raw)} bytes but header dimensions "
            f"(H={h}, C={c}, hidden={hid1}/{hid2}) imply {expect}"
        )

    offset = head_size
    blobs = []
    for count in counts:
        blobs.append(np.frombuffer(raw, dtype="<f8", count=count, offset=offset).copy())
        offset += 8 * count
    W = blobs[0].reshape(c, h)
    decoders: dict[str, list[FcLayer]] = {}
    pos = 1
    for name, spec_list in shapes.items():
        layers = []
        for out_dim, in_dim, act in spec_list:
            w = blobs[pos].reshape(out_dim, in_dim)
            b = blobs[pos + 1]
            pos += 2
            layers.append(FcLayer(weight=w, bias=b, activation=act))
        decoders[name] = layers
    tail = struct.unpack_from("<9d", raw, offset)
    fits = tuple(
        GaussianFit(mu=tail[3 * i], sigma=tail[3 * i + 1], epsilon=tail[3 * i + 2])
        for i in range(3)
    )
    model = DetectorModel(W=W, d1=decoders["d1"], d2=decoders["d2"], T=t)
    return model, fits
