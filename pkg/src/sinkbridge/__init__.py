"""Schrödinger-bridge estimation via the Sinkhorn bridge."""

from .clouds import EotProblem, PointCloud, squared_distances
from .drift import (
    BridgeWeights,
    BrownianBridgeSampler,
    DriftField,
    markovian_projection_oracle,
    softmax,
)
from .gaussian import (
    GaussianBridgeDrift,
    GaussianPair,
    cross_covariance,
    gaussian_bridge_drift,
    gaussian_bridge_marginal,
    random_spd,
    sample_gaussian,
)
from .nn import (
    AdamW,
    MlpModel,
    TrainBatch,
    TrainConfig,
    grad_params,
    loss_eval,
    sample_training_batch,
    train,
    train_from_coupling,
)
from .sde import SdeConfig, TrajectoryBatch, drift_mse, marginal_at, simulate
from .sinkhorn import (
    DualPotentials,
    HilbertDiagnostics,
    KernelMatrix,
    StoppingRule,
    build_kernel,
    contraction_bound,
    coupling_density,
    dual_objective,
    hilbert_metric,
    marginal_error,
    normalize_g,
    run_sinkhorn,
    sinkhorn_iterate,
)

__version__ = "0.1.0"
