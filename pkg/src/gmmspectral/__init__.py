"""Spectral clustering for isotropic Gaussian mixtures.

Typical use::

    from gmmspectral import GmmSpec, sample_instance, algorithm1, misclustering_loss

    inst = sample_instance(GmmSpec(n=600, p=20, k=3, delta=5.0, seed=1))
    out = algorithm1(inst.X, 3)
    misclustering_loss(out.labels, inst.z_star, 3).loss
"""
from .errors import (
    ConfigError,
    DimensionTooSmall,
    EmptyInputClass,
    GmmSpectralError,
    InfeasibleBalance,
    InstanceTooLarge,
    InsufficientUncensoredPoints,
    KExceedsN,
    LabelError,
    NoConvergence,
    NoiseModelNotIsotropic,
    RankRequestTooLarge,
    ShapeMismatch,
)
from .harness import RateFit, SweepConfig, TrialRecord, fit_rate, run_sweep, run_trial
from .kmeans import KMeansConfig, KMeansSolution, exact_oracle, lloyd, refine_once, solve
from .matgen import GmmInstance, GmmSpec, NoiseModel, build_centers, sample_instance
from .metrics import MatchResult, confusion, match, misclustering_loss
from .numlin import SvdFactors, operator_norm, projector_distance, thin_svd, truncate
from .spectral import ALGORITHMS, SpectralOutput, algorithm1, algorithm2, algorithm3

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "ConfigError",
    "DimensionTooSmall",
    "EmptyInputClass",
    "GmmInstance",
    "GmmSpec",
    "GmmSpectralError",
    "InfeasibleBalance",
    "InstanceTooLarge",
    "InsufficientUncensoredPoints",
    "KExceedsN",
    "KMeansConfig",
    "KMeansSolution",
    "LabelError",
    "MatchResult",
    "NoConvergence",
    "NoiseModel",
    "NoiseModelNotIsotropic",
    "RankRequestTooLarge",
    "RateFit",
    "ShapeMismatch",
    "SpectralOutput",
    "SvdFactors",
    "SweepConfig",
    "TrialRecord",
    "algorithm1",
    "algorithm2",
    "algorithm3",
    "build_centers",
    "confusion",
    "exact_oracle",
    "fit_rate",
    "lloyd",
    "match",
    "misclustering_loss",
    "operator_norm",
    "projector_distance",
    "refine_once",
    "run_sweep",
    "run_trial",
    "sample_instance",
    "solve",
    "thin_svd",
    "truncate",
]
