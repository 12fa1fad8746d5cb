"""Pan-sharpening toolkit.

A three-stream attention fusion network on a hand-rolled numpy autograd
core, Wald-protocol data simulation, classical fusion baselines, and a
reference / no-reference quality metric suite.
"""

from .autograd import ConvSpec, Tensor, backward, no_grad
from .baselines import BASELINES, FusionInput, prepare_fusion_input
from .gradcheck import GradCheckResult, grad_check
from .metrics import MetricReport, noreference_report, reference_report
from .network import FusionConfig, FusionNet, fuse_level
from .optim import Parameter, adam_step
from .raster import NormalizationParams, RasterImage, load_raster, save_raster
from .train import TrainConfig, TrainingDiverged, evaluate, load_model, save_model, train
from .wald import DatasetManifest, SamplePair, WaldConfig, degrade, make_dataset

__version__ = "0.1.0"

__all__ = [
    "BASELINES",
    "ConvSpec",
    "DatasetManifest",
    "FusionConfig",
    "FusionInput",
    "FusionNet",
    "GradCheckResult",
    "MetricReport",
    "NormalizationParams",
    "Parameter",
    "RasterImage",
    "SamplePair",
    "Tensor",
    "TrainConfig",
    "TrainingDiverged",
    "WaldConfig",
    "adam_step",
    "backward",
    "degrade",
    "evaluate",
    "fuse_level",
    "grad_check",
    "load_model",
    "load_raster",
    "make_dataset",
    "no_grad",
    "noreference_report",
    "prepare_fusion_input",
    "reference_report",
    "save_model",
    "save_raster",
    "train",
]
