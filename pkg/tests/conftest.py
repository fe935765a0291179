"""Shared builders for small random detector models."""

import numpy as np

from avood.nn import FcLayer


def random_layer(rng, out_dim, in_dim, activation, scale=0.4):
    return FcLayer(
        weight=rng.normal(size=(out_dim, in_dim)) * scale,
        bias=rng.normal(size=out_dim) * 0.1,
        activation=activation,
    )


def random_decoder(rng, in_dim, hidden, out_dim, scale=0.4):
    return [
        random_layer(rng, hidden, in_dim, "relu", scale),
        random_layer(rng, hidden, hidden, "relu", scale),
        random_layer(rng, out_dim, hidden, "none", scale),
    ]


def random_detector_parts(rng, h, c, hidden):
    """(W, d1, d2) with random weights, shaped like a real detector."""
    W = rng.normal(size=(c, h)) * 0.5
    d1 = random_decoder(rng, c, hidden, h)
    d2 = random_decoder(rng, c, hidden, c)
    return W, d1, d2


class TinyModel:
    """Duck-typed model for scoring/affine functions."""

    def __init__(self, W, d1, d2, T=100.0):
        self.W = np.asarray(W, dtype=np.float64)
        self.d1 = d1
        self.d2 = d2
        self.T = T
