"""Linear regression with sparse-ish weights and unknown noise scale.

``w_j ~ Laplace(0, 1)``, ``sigma ~ Exponential(1)`` and
``y_i ~ N(sum_j xi_ij w_j, sigma^2)``. Each design row has unit L1 norm.
"""
import numpy as np

from .. import autodiff as ad
from ..distributions import Exponential, Laplace, Normal
from ..guides import Guide, Head
from ..transforms import RowL1Normalize
from .base import ExperimentModel, IndependentPrior, Latent

EULER_GAMMA = 0.5772156649015329


class Regression(ExperimentModel):
    name = "regression"
    discrete_outcome = False
    reparam_outcome = True

    def __init__(self, n=20, p=20, prior=None):
        self.n = int(n)
        self.p = int(p)
        self.design_shape = (self.n, self.p)
        self.outcome_shape = (self.n,)
        self.latent_shapes = {"w": (self.p,), "sigma": ()}
        super().__init__(prior or IndependentPrior([
            Latent("w", Laplace(0.0, 1.0), (self.p,)),
            Latent("sigma", Exponential(1.0)),
        ]))

    def transform(self):
        return RowL1Normalize(self.design_shape)

    def _mean(self, theta, xi):
        if np.ndim(ad.value_of(xi)) > 2:
            return ad.matvec(xi, theta["w"])
        return ad.linear(theta["w"], xi)

    def log_likelihood(self, y, theta, xi):
        sigma = ad.expand_dims(theta["sigma"], -1)
        return ad.sum(Normal(self._mean(theta, xi), sigma).log_prob(y), axis=-1)

    def outcome_noise(self, rng, batch_shape):
        return rng.standard_normal(tuple(batch_shape) + (self.n,))

    def simulate(self, theta, xi, noise):
        return self._mean(theta, xi) + ad.expand_dims(theta["sigma"], -1) * noise

    def features(self, y):
        return y

    def default_guide(self, seed=0, hidden=(64, 64), **kw):
        # log sigma under Exponential(1) has mean -gamma and sd pi / sqrt(6)
        heads = [
            Head("w", "mvn", (self.p,), 0.0, np.sqrt(2.0)),
            Head("sigma", "lognormal", (), -EULER_GAMMA, np.pi / np.sqrt(6.0)),
        ]
        return Guide(heads, "mlp", features=self.features, n_features=self.n,
                     hidden=hidden, seed=seed)

    def describe(self):
        return {"name": self.name, "n": self.n, "p": self.p}
