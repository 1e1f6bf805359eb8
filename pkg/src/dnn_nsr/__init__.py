"""Nonlinear matrix completion with a nonsmooth-regularized autoencoder."""
from importlib import resources

from .baselines import AemcConfig, SoftImputeConfig, soft_impute, train_aemc
from .checkpoint import load_checkpoint, save_checkpoint
from .datasets import ObservedMatrix, apply_mask, gen_synthetic
from .errors import FormatError, NumericalFailure, ParseError, ShapeError
from .fcnn import NetworkParams, forward, init_params
from .trainer import TrainSchedule, complete, train

__version__ = "0.1.0"


def sample_image_path():
    """Path of the bundled 64x64 RGB test image."""
    return str(resources.files(__name__).joinpath("data", "astronaut64.png"))
