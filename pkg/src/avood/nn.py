"""Minimal dense neural-network engine.

Implements exactly the topology the detector needs: stacks of fully
connected layers with ReLU or identity activations, a temperature
softmax, the three-term training loss with hand-derived reverse-mode
gradients, an Adam optimizer, and a finite-difference gradient checker.

Matrices are plain ``numpy.ndarray`` in row-major layout; a weight of
shape ``(out, in)`` maps column vectors ``x`` to ``W @ x + b``.  All
loss/gradient computation runs in float64.  Functions accept either a
single sample (1-D) or a batch (2-D, one row per sample); batch losses
are means over the per-sample values and gradients match that mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteGradientError, ParameterError, ShapeError

#: residual norms below this get a zero subgradient instead of 0/0
RESIDUAL_GUARD = 1e-12

_ACTIVATIONS = ("relu", "none")


@dataclass
class FcLayer:
    """One fully connected layer: ``act(weight @ x + bias)``."""

    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)
    activation: str = "none"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ShapeError(f"layer weight must be 2-D, got {self.weight.ndim}-D")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"bias length {self.bias.shape} does not match weight rows "
                f"{self.weight.shape[0]}"
            )
        if self.activation not in _ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ParameterError("layer parameters must be finite")

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]


@dataclass
class ForwardCache:
    """Per-layer intermediates retained for the backward pass."""

    inputs: list[np.ndarray]   # input to each layer
    pres: list[np.ndarray]     # pre-activation of each layer
    masks: list[np.ndarray | None]  # ReLU mask (pre > 0) or None


def forward(layers: list[FcLayer], x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run ``x`` through an FC stack, keeping the backward cache.

    ``x`` may be a vector ``(in,)`` or a batch ``(n, in)``.
    """
    h = np.asarray(x, dtype=np.float64)
    if h.shape[-1] != layers[0].in_dim:
        raise ShapeError(
            f"input width {h.shape[-1]} does not match first layer "
            f"input width {layers[0].in_dim}"
        )
    inputs, pres, masks = [], [], []
    for layer in layers:
        if h.shape[-1] != layer.in_dim:
            raise ShapeError("layer widths are not chained consistently")
        inputs.append(h)
        pre = h @ layer.weight.T + layer.bias
        pres.append(pre)
        if layer.activation == "relu":
            mask = pre > 0.0
            masks.append(mask)
            h = np.where(mask, pre, 0.0)
        else:
            masks.append(None)
            h = pre
    return h, ForwardCache(inputs, pres, masks)


def backward(
    layers: list[FcLayer], cache: ForwardCache, grad_out: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Backpropagate ``grad_out`` through a cached forward pass.

    Returns per-layer ``(grad_weight, grad_bias)`` plus the gradient with
    respect to the stack input.  Batched inputs sum the per-sample
    contributions (matrix product order is fixed, so results are
    deterministic).
    """
    g = np.asarray(grad_out, dtype=np.float64)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)  # type: ignore
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        if layer.activation == "relu":
            g = np.where(cache.masks[i], g, 0.0)
        x_in = cache.inputs[i]
        if g.ndim == 1:
            gw = np.outer(g, x_in)
            gb = g.copy()
        else:
            gw = g.T @ x_in
            gb = g.sum(axis=0)
        grads[i] = (gw, gb)
        g = g @ layer.weight
    return grads, g


def softmax_t(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Temperature softmax with max-subtraction for stability.

    Works on the last axis; ``temperature`` must be positive.
    """
    if not (temperature > 0.0):
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ParameterError("logits must be finite")
    shifted = (z - z.max(axis=-1, keepdims=True)) / temperature
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_backward(s: np.ndarray, grad_s: np.ndarray) -> np.ndarray:
    # J^T g for J = diag(s) - s s^T, batched over rows.
    t = s * grad_s
    return t - s * t.sum(axis=-1, keepdims=True)


@dataclass
class LossResult:
    """Mean losses over the batch plus gradients of the weighted total."""

    total: float
    l1: float
    l2: float
    lreg: float
    grads: dict[str, np.ndarray]
    relu_masks: list[np.ndarray]  # all decoder ReLU masks, d1 then d2


def _norm_rows(r: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(r * r, axis=-1))


def _residual_grad(r: np.ndarray, norms: np.ndarray, loss: str) -> np.ndarray:
    """d/d r of the per-sample residual loss (norm or mean-square)."""
    if loss == "squared":
        return 2.0 * r / r.shape[-1]
    safe = np.where(norms > RESIDUAL_GUARD, norms, 1.0)
    g = r / safe[..., None]
    return np.where((norms > RESIDUAL_GUARD)[..., None], g, 0.0)


def _residual_loss(r: np.ndarray, norms: np.ndarray, loss: str) -> np.ndarray:
    if loss == "squared":
        return np.mean(r * r, axis=-1)
    return norms


def detector_loss(
    W: np.ndarray,
    d1: list[FcLayer],
    d2: list[FcLayer],
    temperature: float,
    v: np.ndarray,
    y: np.ndarray,
    lam: float,
    loss: str = "norm",
    detach_l2_target: bool = False,
) -> LossResult:
    """Three-term training loss and its gradients.

    * ``l1``: per-sample L2 norm of ``v - D1(W v)``
    * ``l2``: per-sample L2 norm of ``W v / T - D2(softmax(W v / T))``
    * ``lreg``: cross-entropy of ``softmax(W v)`` against the label
      (no temperature)

    The returned gradients are for ``mean(l1) + mean(l2) + lam * mean(lreg)``
    over the batch.  ``W`` receives contributions from all three terms;
    each decoder only from its own reconstruction term.  With
    ``detach_l2_target`` the target occurrence of ``W v / T`` in ``l2`` is
    treated as a constant.
    """
    if loss not in ("norm", "squared"):
        raise ParameterError(f"unknown loss variant {loss!r}")
    W = np.asarray(W, dtype=np.float64)
    V = np.atleast_2d(np.asarray(v, dtype=np.float64))
    ys = np.atleast_1d(np.asarray(y, dtype=np.int64))
    n, h = V.shape
    c = W.shape[0]
    if W.shape[1] != h:
        raise ShapeError(f"W columns {W.shape[1]} != feature dim {h}")
    if ys.shape != (n,):
        raise ShapeError("labels do not match batch size")
    if np.any((ys < 0) | (ys >= c)):
        raise ParameterError(f"labels must lie in [0, {c})")

    Z = V @ W.T                       # (n, c) logits
    # L1: reconstruct the feature from the logits
    A, cache1 = forward(d1, Z)
    R1 = V - A
    n1 = _norm_rows(R1)
    l1_each = _residual_loss(R1, n1, loss)

    # L2: reconstruct the scaled logits from their softmax
    U = Z / temperature
    S = softmax_t(Z, temperature)
    B2, cache2 = forward(d2, S)
    R2 = U - B2
    n2 = _norm_rows(R2)
    l2_each = _residual_loss(R2, n2, loss)

    # regularizer: cross-entropy at temperature 1; a zero probability
    # yields inf here and is rejected by the finiteness check below
    Q = softmax_t(Z, 1.0)
    with np.errstate(divide="ignore"):
        lreg_each = -np.log(Q[np.arange(n), ys])

    inv_n = 1.0 / n
    # --- gradients ---
    g_a = -_residual_grad(R1, n1, loss) * inv_n          # dL/d D1-output
    d1_grads, g_z_l1 = backward(d1, cache1, g_a)

    g_r2 = _residual_grad(R2, n2, loss) * inv_n          # dL/d R2
    d2_grads, g_s = backward(d2, cache2, -g_r2)
    g_u = _softmax_backward(S, g_s)
    if not detach_l2_target:
        g_u = g_u + g_r2
    g_z_l2 = g_u / temperature

    onehot = np.zeros_like(Q)
    onehot[np.arange(n), ys] = 1.0
    g_z_reg = lam * (Q - onehot) * inv_n

    g_z = g_z_l1 + g_z_l2 + g_z_reg
    grads: dict[str, np.ndarray] = {"W": g_z.T @ V}
    for i, (gw, gb) in enumerate(d1_grads):
        grads[f"d1.{i}.weight"] = gw
        grads[f"d1.{i}.bias"] = gb
    for i, (gw, gb) in enumerate(d2_grads):
        grads[f"d2.{i}.weight"] = gw
        grads[f"d2.{i}.bias"] = gb

    masks = [m for m in cache1.masks + cache2.masks if m is not None]
    return LossResult(
        total=float(np.mean(l1_each) + np.mean(l2_each) + lam * np.mean(lreg_each)),
        l1=float(np.mean(l1_each)),
        l2=float(np.mean(l2_each)),
        lreg=float(np.mean(lreg_each)),
        grads=grads,
        relu_masks=masks,
    )


@dataclass
class AdamState:
    """Adam moment buffers keyed like the gradient dict."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float, **kw) -> "AdamState":
        state = cls(lr=lr, **kw)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p, dtype=np.float64)
            state.v[name] = np.zeros_like(p, dtype=np.float64)
        return state


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update; returns the new parameter dict.

    Mutates ``state`` (moment buffers, step counter).  Deterministic:
    identical inputs give bit-identical outputs.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape mismatch for {name!r}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"non-finite gradient for {name!r} at step {t}"
            )
        m = state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        new[name] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return new


def grad_check(
    W: np.ndarray,
    d1: list[FcLayer],
    d2: list[FcLayer],
    temperature: float,
    v: np.ndarray,
    y: int,
    lam: float,
    loss: str = "norm",
    detach_l2_target: bool = False,
    h: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Coordinates whose +/- h perturbation flips any ReLU mask sit on a
    kink where the finite difference is invalid; they are skipped.
    Relative error is |a - n| / (|a| + |n| + floor), where the floor is
    1e-3 of the largest analytic gradient entry: the cancellation noise
    of the difference quotient scales with the loss value, so judging a
    near-zero coordinate against its own magnitude would demand more
    precision than 64-bit arithmetic holds.
    """

    def packed() -> dict[str, np.ndarray]:
        out = {"W": W}
        for i, layer in enumerate(d1):
            out[f"d1.{i}.weight"] = layer.weight
            out[f"d1.{i}.bias"] = layer.bias
        for i, layer in enumerate(d2):
            out[f"d2.{i}.weight"] = layer.weight
            out[f"d2.{i}.bias"] = layer.bias
        return out

    def evaluate() -> LossResult:
        return detector_loss(
            W, d1, d2, temperature, v, y, lam,
            loss=loss, detach_l2_target=detach_l2_target,
        )

    base = evaluate()
    base_masks = [m.copy() for m in base.relu_masks]
    g_scale = max(
        float(np.max(np.abs(g))) for g in base.grads.values()
    )
    floor = 1e-3 * g_scale + 1e-12
    worst = 0.0
    for name, p in packed().items():
        analytic = base.grads[name]
        flat = p.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            plus = evaluate()
            flat[idx] = orig - h
            minus = evaluate()
            flat[idx] = orig
            if _masks_changed(base_masks, plus.relu_masks) or _masks_changed(
                base_masks, minus.relu_masks
            ):
                continue
            numeric = (plus.total - minus.total) / (2.0 * h)
            a = analytic.reshape(-1)[idx]
            rel = abs(a - numeric) / (abs(a) + abs(numeric) + floor)
            worst = max(worst, rel)
    return worst


def _masks_changed(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return any(not np.array_equal(x, y) for x, y in zip(a, b))
