"""Important-word-aware clip filtering with a verifiable numerical core."""

from .engine import ContractError, ShapeError, Tape, Tensor
from .fem import Affine, FemOutput, FemParams, WordHighlight
from .fixtures import Batch, FixtureError, Sample, load_fixture, save_fixture, synthesize
from .losses import LossReport, LossWeights
from .pipeline import ModelParams, NumericalError, RunConfig, run_batch, sweep_iters, train
from .rfm import FusionGate, RfmOutput

__all__ = [
    "Affine", "Batch", "ContractError", "FemOutput", "FemParams",
    "FixtureError", "FusionGate", "LossReport", "LossWeights", "ModelParams",
    "NumericalError", "RfmOutput", "RunConfig", "Sample", "ShapeError",
    "Tape", "Tensor", "WordHighlight", "load_fixture", "run_batch",
    "save_fixture", "sweep_iters", "synthesize", "train",
]

__version__ = "0.1.0"
