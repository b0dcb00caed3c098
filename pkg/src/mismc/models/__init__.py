"""Bayesian inverse-problem models with multi-index resolution hierarchies."""
from mismc.models.base import (
    DiagonalLevelModel,
    Model,
    ModelError,
    gaussian_log_likelihood,
)
from mismc.models.elliptic2d import Elliptic2DModel
from mismc.models.loggaussian import LogGaussianModel
from mismc.models.toy1d import Toy1DModel

MODEL_NAMES = ("toy1d", "elliptic2d", "lgc", "lgp")


def make_model(name: str, **kwargs) -> Model:
    """Construct one of the shipped models by name."""
    if name == "toy1d":
        return Toy1DModel(**kwargs)
    if name == "elliptic2d":
        return Elliptic2DModel(**kwargs)
    if name in ("lgc", "lgp"):
        return LogGaussianModel(variant=name, **kwargs)
    raise ValueError(f"unknown model: {name!r} (expected one of {MODEL_NAMES})")


__all__ = [
    "DiagonalLevelModel",
    "Elliptic2DModel",
    "LogGaussianModel",
    "Model",
    "ModelError",
    "Toy1DModel",
    "MODEL_NAMES",
    "gaussian_log_likelihood",
    "make_model",
]
