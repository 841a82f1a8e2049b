"""Experiment models: prior, likelihood and design space."""
from .base import ExperimentModel, IndependentPrior, Latent
from .advertising import Advertising, advertising_eig, advertising_optimal_design, log_det_posterior_precision
from .ces import CES
from .death import DeathProcess
from .docking import Docking
from .regression import Regression
from .tiny import TinyDiscrete
from .toy import GaussianToy

MODELS = {
    "toy": GaussianToy,
    "death": DeathProcess,
    "regression": Regression,
    "advertising": Advertising,
    "docking": Docking,
    "ces": CES,
    "tiny": TinyDiscrete,
}


def make_model(name, **kw):
    from ..errors import ConfigError
    try:
        cls = MODELS[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return cls(**kw)


__all__ = [
    "ExperimentModel", "IndependentPrior", "Latent", "Advertising", "CES", "DeathProcess",
    "Docking", "GaussianToy", "Regression", "TinyDiscrete", "MODELS", "make_model",
    "advertising_eig", "advertising_optimal_design", "log_det_posterior_precision",
]
