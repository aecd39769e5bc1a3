"""Learned rigid point-cloud registration with multi-scale cross-attention."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .data import RegistrationPair, SynthConfig, dataset, generate_pair, read_cloud, write_cloud
from .estimator import PCAMRegistration
from .exceptions import (
    CheckpointError,
    ConfigError,
    DegenerateWeightsError,
    EmptyCloudError,
    GenerationError,
    ModeError,
    NumericError,
    ParameterError,
    ParseError,
    PCAMError,
    RankDeficiencyError,
)
from .geometry import RigidTransform, knn, weighted_procrustes
from .icp import icp_refine
from .metrics import RegistrationResult, recall
from .model import PCAMNetwork

__version__ = "0.1.0"

__all__ = [
    "Checkpoint", "CheckpointError", "ConfigError", "DegenerateWeightsError", "EmptyCloudError",
    "GenerationError", "ModeError", "NumericError", "PCAMError", "PCAMNetwork", "PCAMRegistration",
    "ParameterError", "ParseError", "RankDeficiencyError", "RegistrationPair", "RegistrationResult",
    "RigidTransform", "RunConfig", "SynthConfig", "dataset", "generate_pair", "icp_refine", "knn",
    "load_checkpoint", "load_config", "read_cloud", "recall", "save_checkpoint", "weighted_procrustes",
    "write_cloud",
]
