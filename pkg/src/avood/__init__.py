"""Feature-level out-of-distribution detection toolkit.

Train a one-layer softmax encoder with two reconstruction decoders on
in-distribution activation-vector features, score test features with a
three-factor Gaussian normality measure, evaluate with the standard OoD
metrics, and verify the piecewise-affine error bound that motivates the
normalized residual distance.
"""

from .affine import (
    AffineDecomp,
    NormBiasRow,
    decompose,
    norm_bias_demo,
    recon_error_bound,
    reconstruction_path,
    spectral_norm,
)
from .data import (
    FeatureSet,
    SynthSpec,
    read_features,
    read_features_csv,
    split,
    synth_id,
    synth_ood,
    write_features,
    write_features_csv,
)
from .detector import (
    DetectorModel,
    TrainConfig,
    TrainResult,
    fit_gaussians,
    init_model,
    load_model,
    save_model,
    train,
)
from .errors import (
    AvoodError,
    BoundViolationError,
    CalibrationError,
    ConfigError,
    DataFormatError,
    DimensionError,
    EvaluationError,
    ModelFormatError,
    NonFiniteGradientError,
    ParameterError,
    ScoringError,
    ShapeError,
    TrainingDivergedError,
    UnsupportedPathError,
)
from .metrics import EvalReport, aupr_in, auroc, detection_error, evaluate, fpr_at_tpr
from .nn import AdamState, FcLayer, adam_step, detector_loss, forward, grad_check, softmax_t
from .rng import CounterRng
from .scoring import (
    GaussianFit,
    ScoreBundle,
    ScoreTable,
    nl2,
    normality_score,
    phi,
    psi,
    score_batch,
    threshold_from_validation,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
