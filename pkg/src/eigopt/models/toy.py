"""One-dimensional linear-Gaussian model with closed-form answers.

``theta ~ N(0, 1)``, ``y | theta ~ N(xi * theta, 1)`` with ``xi`` in ``(0, xi_max]``.
The posterior is ``N(xi y / (1 + xi^2), 1 / (1 + xi^2))`` and the EIG is
``log(1 + xi^2) / 2``.
"""
import numpy as np

from .. import autodiff as ad
from ..distributions import Normal
from ..guides import Guide, Head, softplus_inverse
from ..transforms import IntervalSigmoid
from .base import ExperimentModel, IndependentPrior, Latent


class GaussianToy(ExperimentModel):
    name = "toy"
    design_shape = ()
    outcome_shape = ()
    latent_shapes = {"theta": ()}
    reparam_outcome = True

    def __init__(self, xi_max=10.0, prior=None):
        self.xi_max = float(xi_max)
        super().__init__(prior or IndependentPrior([Latent("theta", Normal(0.0, 1.0))]))

    def transform(self):
        return IntervalSigmoid((), 0.0, self.xi_max)

    def log_likelihood(self, y, theta, xi):
        return Normal(xi * theta["theta"], 1.0).log_prob(y)

    def outcome_noise(self, rng, batch_shape):
        return rng.standard_normal(tuple(batch_shape))

    def simulate(self, theta, xi, noise):
        return xi * theta["theta"] + noise

    def analytic_eig(self, xi):
        return 0.5 * np.log1p(np.square(np.asarray(xi, dtype=np.float64)))

    def optimal_design(self):
        return np.asarray(self.xi_max)

    def posterior(self, y, xi):
        """Exact posterior mean and standard deviation."""
        prec = 1.0 + xi * xi
        return xi * np.asarray(y) / prec, 1.0 / np.sqrt(prec)

    def features(self, y):
        return ad.expand_dims(y, -1)

    def default_guide(self, seed=0, **kw):
        return Guide([Head("theta", "normal", (), 0.0, 1.0)], "linear",
                     features=self.features, n_features=1, seed=seed)

    def exact_guide(self, xi):
        """Linear guide whose output is the exact posterior at design ``xi``."""
        g = self.default_guide()
        mean_coef, sd = self.posterior(1.0, xi)
        g.phi = g.pack({"W": np.array([[mean_coef], [0.0]]),
                        "b": np.array([0.0, float(softplus_inverse(sd))])})
        return g

    def describe(self):
        return {"name": self.name, "xi_max": self.xi_max}
