"""Normality scoring: residual distances, Gaussian factors, thresholds.

A trained detector turns a feature vector v into three statistics:

* ``conf``: the largest temperature-scaled softmax probability of W v,
* ``r1``: normalized L2 residual of the feature reconstruction D1(W v),
* ``r2``: normalized L2 residual of the scaled-logit reconstruction
  D2(softmax(W v / T)).

Each statistic passes through a Gaussian CDF (confidence) or CCDF
(residuals) calibrated on validation data, widened by epsilon; the
product of the three factors is the normality score in [0, 1].  Higher
means more in-distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DimensionError, ParameterError, ScoringError
from .nn import forward, softmax_t

#: features with L2 norm at or below this are degenerate for NL2
NORM_GUARD = 1e-12

DISTANCES = ("nl2", "l2")
SCORE_MODES = ("layerwise", "basic")


@dataclass(frozen=True)
class GaussianFit:
    """Gaussian calibration of one statistic: mean, spread, widening."""

    mu: float
    sigma: float
    epsilon: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma)):
            raise ParameterError("GaussianFit values must be finite")
        if self.sigma < 0 or self.epsilon < 0:
            raise ParameterError("sigma and epsilon must be >= 0")


def nl2(f: np.ndarray, f_hat: np.ndarray) -> float:
    """Normalized L2 distance: both terms divided by ``‖f‖``.

    Scale invariant: nl2(a f, a f_hat) = nl2(f, f_hat) for a > 0.
    """
    f = np.asarray(f, dtype=np.float64)
    f_hat = np.asarray(f_hat, dtype=np.float64)
    if f.shape != f_hat.shape:
        raise DimensionError("f and f_hat must have equal shapes")
    n = float(np.linalg.norm(f))
    if n <= NORM_GUARD:
        raise ScoringError(f"degenerate feature: ‖f‖ = {n} <= {NORM_GUARD}")
    return float(np.linalg.norm(f - f_hat) / n)


def _factor(x, g: GaussianFit, use_epsilon: bool, complement: bool):
    """Gaussian CDF (or CCDF) of x under the possibly widened fit."""
    x = np.asarray(x, dtype=np.float64)
    s = g.sigma + (g.epsilon if use_epsilon else 0.0)
    if s > 0.0:
        z = (x - g.mu) / s
        p = ndtr(-z) if complement else ndtr(z)
    else:
        # degenerate fit: step function with 0.5 at the mean
        above = np.where(x > g.mu, 1.0, 0.0)
        p = np.where(x == g.mu, 0.5, above)
        if complement:
            p = 1.0 - p
    return p if p.ndim else float(p)


def phi(x, g: GaussianFit, use_epsilon: bool = True):
    """P(X <= x) for X ~ N(mu, (sigma + epsilon)^2)."""
    return _factor(x, g, use_epsilon, complement=False)


def psi(x, g: GaussianFit, use_epsilon: bool = True):
    """Complementary CDF, 1 - phi(x, g)."""
    return _factor(x, g, use_epsilon, complement=True)


@dataclass
class ScoreTable:
    """Per-sample statistics, factors, and final scores for a batch."""

    conf: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    phi0: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray
    score: np.ndarray
    flagged: np.ndarray  # bool; degenerate rows scored 0 by convention

    def __len__(self) -> int:
        return self.score.size

    def row(self, i: int) -> "ScoreBundle":
        return ScoreBundle(
            conf=float(self.conf[i]), r1=float(self.r1[i]), r2=float(self.r2[i]),
            phi0=float(self.phi0[i]), psi1=float(self.psi1[i]),
            psi2=float(self.psi2[i]), score=float(self.score[i]),
            flagged=bool(self.flagged[i]),
        )


@dataclass(frozen=True)
class ScoreBundle:
    """One sample's statistics and factors; ``score`` is their product."""

    conf: float
    r1: float
    r2: float
    phi0: float
    psi1: float
    psi2: float
    score: float
    flagged: bool = False


def raw_statistics(
    model, V: np.ndarray, distance: str = "nl2"
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(conf, r1, r2, flagged) for each row of V under ``model``.

    ``model`` needs attributes W (C x H), d1, d2 (FC stacks) and T.
    With ``distance="l2"`` the residuals are plain L2 norms instead of
    normalized ones.  Rows whose feature or logit norm is at or below
    the guard are flagged; their residuals are +inf.
    """
    if distance not in DISTANCES:
        raise ParameterError(f"distance must be one of {DISTANCES}")
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    if V.shape[1] != model.W.shape[1]:
        raise DimensionError(
            f"feature dim {V.shape[1]} does not match model H = {model.W.shape[1]}"
        )
    Z = V @ model.W.T
    U = Z / model.T
    S = softmax_t(Z, model.T)
    conf = S.max(axis=1)

    A, _ = forward(model.d1, Z)
    B, _ = forward(model.d2, S)
    res1 = np.linalg.norm(V - A, axis=1)
    res2 = np.linalg.norm(U - B, axis=1)
    v_norm = np.linalg.norm(V, axis=1)
    u_norm = np.linalg.norm(U, axis=1)
    flagged = (v_norm <= NORM_GUARD) | (u_norm <= NORM_GUARD)

    if distance == "nl2":
        r1 = np.where(flagged, np.inf, res1 / np.where(flagged, 1.0, v_norm))
        r2 = np.where(flagged, np.inf, res2 / np.where(flagged, 1.0, u_norm))
    else:
        r1 = np.where(flagged, np.inf, res1)
        r2 = np.where(flagged, np.inf, res2)
    return conf, r1, r2, flagged


def score_batch(
    model,
    fits: tuple[GaussianFit, GaussianFit, GaussianFit],
    V: np.ndarray,
    distance: str = "nl2",
    mode: str = "layerwise",
    use_epsilon: bool = True,
) -> ScoreTable:
    """Score every row of V; pure and order-independent.

    ``mode="basic"`` drops the second-decoder factor (single-decoder
    score phi0 * psi1); ``use_epsilon=False`` evaluates the factors
    with sigma alone.  Flagged rows get all factors and the score set
    to 0 — a degenerate feature is treated as maximally abnormal.
    """
    if mode not in SCORE_MODES:
        raise ParameterError(f"mode must be one of {SCORE_MODES}")
    g0, g1, g2 = fits
    conf, r1, r2, flagged = raw_statistics(model, V, distance)
    ok = ~flagged
    phi0 = np.where(ok, phi(conf, g0, use_epsilon), 0.0)
    psi1 = np.where(ok, psi(np.where(ok, r1, 0.0), g1, use_epsilon), 0.0)
    psi2 = np.where(ok, psi(np.where(ok, r2, 0.0), g2, use_epsilon), 0.0)
    score = phi0 * psi1 if mode == "basic" else phi0 * psi1 * psi2
    return ScoreTable(
        conf=np.where(ok, conf, 0.0), r1=r1, r2=r2,
        phi0=phi0, psi1=psi1, psi2=psi2, score=score, flagged=flagged,
    )


def normality_score(
    model,
    fits: tuple[GaussianFit, GaussianFit, GaussianFit],
    v: np.ndarray,
    distance: str = "nl2",
    mode: str = "layerwise",
    use_epsilon: bool = True,
) -> ScoreBundle:
    """Score a single feature vector; see ``score_batch`` for semantics."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError("normality_score takes a single 1-D feature")
    return score_batch(
        model, fits, v[None, :], distance=distance, mode=mode,
        use_epsilon=use_epsilon,
    ).row(0)


def threshold_from_validation(val_scores, target_tpr: float = 0.95) -> float:
    """OoD decision threshold from ID validation scores alone.

    The empirical (1 - target_tpr) quantile with lower interpolation;
    classify OoD iff score < threshold (strictly), so ties at the
    threshold stay in-distribution.
    """
    s = np.asarray(val_scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ScoringError("validation scores must be nonempty")
    if not (0.0 < target_tpr <= 1.0):
        raise ParameterError(f"target_tpr must be in (0, 1], got {target_tpr}")
    return float(np.quantile(s, 1.0 - target_tpr, method="lower"))


def decide(scores, threshold: float) -> np.ndarray:
    """Boolean OoD mask: score < threshold."""
    return np.asarray(scores, dtype=np.float64) < threshold
