"""Variational hyperspectral unmixing with endmember variability.

Library surface: synthetic data generation (:mod:`helen.synth`), the
alternating-maximization engines (:mod:`helen.engine`), evaluation metrics
(:mod:`helen.metrics`), and cube/JSON file IO (:mod:`helen.io`).
"""

from .core import (HsiCube, ModelParameters, OutlierDensity, PatchGrid,
                   UnmixResult, VariationalState, partition_image)
from .engine import EngineConfig, InitSpec, initialize, run
from .errors import ConfigError, DataError, HelenError, NumericalError
from .metrics import EvalReport, evaluate
from .priors import PosteriorParams, PriorParams
from .synth import SynthConfig, SynthGroundTruth, generate

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "EngineConfig", "EvalReport", "HelenError",
    "HsiCube", "InitSpec", "ModelParameters", "NumericalError",
    "OutlierDensity", "PatchGrid", "PosteriorParams", "PriorParams",
    "SynthConfig", "SynthGroundTruth", "UnmixResult", "VariationalState",
    "evaluate", "generate", "initialize", "partition_image", "run",
    "__version__",
]
