"""Binary latent, binary outcome; small enough for exhaustive sums.

``theta ~ Bernoulli(1/2)`` and ``y | theta ~ Bernoulli(sigmoid(xi (2 theta - 1)))``.
At ``xi = log 4`` the success probability is 0.2 + 0.6 theta.
"""
import numpy as np

from .. import autodiff as ad
from ..distributions import Bernoulli
from ..guides import Guide, Head
from ..transforms import ConstraintTransform
from .base import ExperimentModel, IndependentPrior, Latent

LOG4 = float(np.log(4.0))


class TinyDiscrete(ExperimentModel):
    name = "tiny"
    design_shape = ()
    outcome_shape = ()
    latent_shapes = {"theta": ()}
    discrete_outcome = True

    def __init__(self, prior=None):
        super().__init__(prior or IndependentPrior([Latent("theta", Bernoulli(0.5))]))

    def transform(self):
        return ConstraintTransform(())

    def probs(self, theta, xi):
        return ad.sigmoid(xi * (2.0 * theta["theta"] - 1.0))

    def log_likelihood(self, y, theta, xi):
        return Bernoulli(self.probs(theta, xi)).log_prob(y)

    def sample_outcome(self, theta, xi, rng):
        return Bernoulli(ad.value_of(self.probs(theta, ad.value_of(xi)))).sample(rng)

    def enumerate_outcomes(self):
        return np.array([0.0, 1.0])

    def latent_support(self):
        return np.array([0.0, 1.0])

    def outcome_index(self, y):
        return np.asarray(ad.value_of(y)).astype(int)

    def default_guide(self, seed=0, **kw):
        return Guide([Head("theta", "bernoulli", (), 0.0)], "tabular",
                     index_fn=self.outcome_index, n_rows=2, seed=seed)

    def exact_guide(self, xi):
        """Tabular guide holding the exact posterior ``p(theta = 1 | y)`` at design ``xi``."""
        g = self.default_guide()
        p1 = 1.0 / (1.0 + np.exp(-xi))       # p(y = 1 | theta = 1) = p(y = 0 | theta = 0)
        # posterior log-odds of theta = 1: log p(y | 1) - log p(y | 0)
        logit_y0 = np.log(1.0 - p1) - np.log(p1)
        logit_y1 = np.log(p1) - np.log(1.0 - p1)
        g.phi = g.pack({"table": np.array([[logit_y0], [logit_y1]])})
        return g
