"""Piecewise-affine analysis of ReLU FC stacks.

Inside one activation-pattern region a ReLU network is exactly affine:
f(x) = Gamma x + B, where Gamma chains the weight matrices through the
0/1 activation masks observed at x.  This module extracts (Gamma, B),
verifies the forward pass against them, checks the induced
reconstruction-error upper bound

    ‖x - f(x)‖ <= ‖I - Gamma‖ ‖x‖ + ‖B‖,

and tabulates how raw L2 reconstruction error grows with input norm
while the normalized variant stays flat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundViolationError, DimensionError, UnsupportedPathError
from .nn import FcLayer
from .rng import CounterRng

#: slack allowed when asserting actual <= bound
BOUND_SLACK = 1e-9

_POWER_SEED = 2718


@dataclass
class AffineDecomp:
    """Local affine form of a ReLU stack at one input."""

    gamma: np.ndarray               # (out, in)
    b: np.ndarray                   # (out,)
    pattern: list[np.ndarray]       # 0/1 mask per ReLU layer

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.gamma @ np.asarray(x, dtype=np.float64) + self.b


def decompose(layers: list[FcLayer], x: np.ndarray) -> AffineDecomp:
    """Extract (Gamma, B) for the activation pattern at ``x``.

    Masks are strict: a pre-activation of exactly zero takes mask 0.
    Inputs sharing a pattern yield bit-identical matrices, because
    Gamma and B depend on the weights and masks alone.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != layers[0].in_dim:
        raise DimensionError(
            f"x must be a vector of length {layers[0].in_dim}"
        )
    gamma: np.ndarray | None = None
    b: np.ndarray | None = None
    pattern: list[np.ndarray] = []
    h = x
    for layer in layers:
        pre = layer.weight @ h + layer.bias
        if gamma is None:
            gamma = layer.weight.copy()
            b = layer.bias.copy()
        else:
            gamma = layer.weight @ gamma
            b = layer.weight @ b + layer.bias
        if layer.activation == "relu":
            mask = pre > 0.0
            gamma = np.where(mask[:, None], gamma, 0.0)
            b = np.where(mask, b, 0.0)
            h = np.where(mask, pre, 0.0)
            pattern.append(mask.astype(np.uint8))
        else:
            h = pre
    return AffineDecomp(gamma=gamma, b=b, pattern=pattern)


def reconstruction_path(model, decoder: str = "d1") -> list[FcLayer]:
    """FC+ReLU path of a reconstruction map, for decomposition.

    ``d1`` yields v -> D1(W v), which is softmax-free.  The second
    decoder's input passes through a softmax, which is not piecewise
    affine, so ``d2`` is rejected.
    """
    if decoder == "d1":
        head = FcLayer(
            weight=model.W, bias=np.zeros(model.W.shape[0]), activation="none"
        )
        return [head] + list(model.d1)
    if decoder == "d2":
        raise UnsupportedPathError(
            "the D2 path applies a softmax, which has no affine decomposition"
        )
    raise UnsupportedPathError(f"unknown decoder {decoder!r}")


def spectral_norm(A: np.ndarray, iters: int = 30, tol: float = 1e-9) -> float:
    """Largest singular value by power iteration on A^T A.

    Fixed seeded start vector; stops early once the estimate moves by
    less than ``tol`` relatively.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError("spectral_norm expects a matrix")
    n = A.shape[1]
    gram = A.T @ A
    v = CounterRng(_POWER_SEED, stream=n).normals(n)
    norm = np.linalg.norm(v)
    v = v / norm
    prev = 0.0
    for _ in range(iters):
        w = gram @ v
        wn = float(np.linalg.norm(w))
        if wn == 0.0:
            return 0.0
        v = w / wn
        est = np.sqrt(wn)
        if abs(est - prev) <= tol * max(1.0, est):
            prev = est
            break
        prev = est
    return float(np.linalg.norm(A @ v))


def frobenius_norm(A: np.ndarray) -> float:
    """Cheap upper bound on the spectral norm."""
    return float(np.linalg.norm(np.asarray(A, dtype=np.float64)))


def _certified_cap(A: np.ndarray) -> float:
    """Provable upper bound on the largest singular value.

    min of the Frobenius norm and sqrt(‖A^T A‖_inf); both dominate the
    spectral norm, so a bound built from this cap is always valid.
    """
    gram = A.T @ A
    row_sum = float(np.max(np.sum(np.abs(gram), axis=1)))
    return min(frobenius_norm(A), float(np.sqrt(row_sum)))


def recon_error_bound(
    decomp: AffineDecomp, x: np.ndarray, norm: str = "spectral"
) -> tuple[float, float]:
    """(bound, actual) for the reconstruction error of a square map.

    bound = ‖I - Gamma‖ ‖x‖ + ‖B‖ with the chosen operator norm;
    actual = ‖x - (Gamma x + B)‖.  The power-iteration estimate can
    stall below the true spectral norm when the top singular values
    cluster, so an apparent violation is rechecked against a certified
    cap; the looser but sound bound is returned then.  Raising beyond
    that indicates a decomposition bug.
    """
    g = decomp.gamma
    if g.shape[0] != g.shape[1]:
        raise DimensionError(
            f"error bound needs a square map, got {g.shape[0]} x {g.shape[1]}"
        )
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.shape[1],):
        raise DimensionError(f"x must be a vector of length {g.shape[1]}")
    resid = np.eye(g.shape[0]) - g
    op = spectral_norm(resid) if norm == "spectral" else frobenius_norm(resid)
    x_norm = float(np.linalg.norm(x))
    b_norm = float(np.linalg.norm(decomp.b))
    bound = op * x_norm + b_norm
    actual = float(np.linalg.norm(x - decomp.apply(x)))
    if actual > bound + BOUND_SLACK:
        bound = _certified_cap(resid) * x_norm + b_norm
        if actual > bound + BOUND_SLACK:
            raise BoundViolationError(
                f"actual error {actual} exceeds bound {bound} beyond slack"
            )
    return bound, actual


@dataclass(frozen=True)
class NormBiasRow:
    """One grid entry: mean reconstruction errors at a fixed input norm."""

    input_norm: float
    mean_l2: float
    mean_nl2: float | None  # None at norm 0, where NL2 is undefined


def norm_bias_demo(
    model,
    norm_grid,
    directions: np.ndarray | None = None,
    n_directions: int = 64,
    seed: int = 0,
) -> list[NormBiasRow]:
    """Reconstruction error vs input norm for the feature decoder path.

    A fixed set of nonnegative unit directions is rescaled to each grid
    norm and pushed through v -> D1(W v).  The raw L2 error column
    tracks the norm; the normalized column does not.  Supplied
    ``directions`` are unit-normalized first, so their scale cannot
    influence the table.
    """
    from .nn import forward

    h = model.W.shape[1]
    if directions is None:
        raw = CounterRng(seed, stream=6).normals(n_directions * h)
        directions = np.abs(raw.reshape(n_directions, h))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if directions.shape[1] != h:
        raise DimensionError(f"directions must have width H = {h}")
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DimensionError("directions must be nonzero")
    units = directions / norms

    rows = []
    for g in norm_grid:
        g = float(g)
        if g < 0:
            raise DimensionError("norm grid entries must be >= 0")
        V = g * units
        Z = V @ model.W.T
        A, _ = forward(model.d1, Z)
        err = np.linalg.norm(V - A, axis=1)
        v_norm = np.linalg.norm(V, axis=1)
        if np.all(v_norm > 1e-12):
            mean_nl2 = float(np.mean(err / v_norm))
        else:
            mean_nl2 = None
        rows.append(
            NormBiasRow(input_norm=g, mean_l2=float(np.mean(err)), mean_nl2=mean_nl2)
        )
    return rows
