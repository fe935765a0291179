"""
Raw L2 error grows with input norm; the normalized error does not
=================================================================

An autoencoder path v -> D1(Wv) is piecewise affine, so far from the
origin its reconstruction error along a ray grows linearly with the
input norm.  Scoring with raw L2 therefore confuses "large input" with
"anomalous input".  Dividing by the input norm removes the bias.

Writes norm_bias.png next to this script when matplotlib is available.
"""

import numpy as np

from avood.affine import norm_bias_demo
from avood.data import SynthSpec, synth_id
from avood.detector import TrainConfig, train

spec = SynthSpec(
    n_classes=4, feature_dim=16, n_samples=1200,
    mean_scale=12.0, noise_sigma=0.8, seed=5, sample_seed=50,
)
train_set = synth_id(spec)
result = train(train_set, TrainConfig(seed=1, epochs=60, lr=1e-3))

# the training data lives at a typical norm; probe well past it
typical = float(np.mean(np.linalg.norm(train_set.features, axis=1)))
grid = [0.0, 0.25 * typical, 0.5 * typical, typical, 2 * typical, 4 * typical]
rows = norm_bias_demo(result.model, grid, n_directions=128, seed=2)

print(f"training-data norm is around {typical:.2f}")
print(f"{'input norm':>12}  {'mean L2 err':>12}  {'mean NL2 err':>12}")
for r in rows:
    nl2 = "undefined" if r.mean_nl2 is None else f"{r.mean_nl2:.4f}"
    print(f"{r.input_norm:>12.2f}  {r.mean_l2:>12.4f}  {nl2:>12}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    pass
else:
    xs = [r.input_norm for r in rows[1:]]
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(xs, [r.mean_l2 for r in rows[1:]], "o-", label="L2")
    ax1.set_xlabel("input norm")
    ax1.set_ylabel("mean L2 error")
    ax2 = ax1.twinx()
    ax2.plot(xs, [r.mean_nl2 for r in rows[1:]], "s--", color="tab:orange",
             label="NL2")
    ax2.set_ylabel("mean NL2 error")
    ax2.set_ylim(bottom=0.0)
    fig.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig("norm_bias.png", dpi=120)
    print("wrote norm_bias.png")
