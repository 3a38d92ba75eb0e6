"""Neural-ODE modelling of latent code trajectories."""

from ._jit import JIT_ENABLED
from .dynamics import MlpParams, forward, init_params, vjp
from .editing import EditDirection, compare_interp, morph, propagate_edit
from .metrics import SsimConfig, mse, ssim
from .ode_core import IntegrationError, SolverConfig, integrate
from .toy_decoder import InvertConfig, ToyDecoder, invert
from .training import LossWeights, TrainConfig, TrainingError, fit
from .trajectory import FittedModel, LatentSequence, evaluate, interpolate, predict

__version__ = "0.1.0"

__all__ = [
    "JIT_ENABLED",
    "EditDirection", "FittedModel", "IntegrationError", "InvertConfig", "LatentSequence",
    "LossWeights", "MlpParams", "SolverConfig", "SsimConfig", "ToyDecoder", "TrainConfig",
    "TrainingError",
    "compare_interp", "evaluate", "fit", "forward", "init_params", "integrate", "interpolate",
    "invert", "morph", "mse", "predict", "propagate_edit", "ssim", "vjp",
]
