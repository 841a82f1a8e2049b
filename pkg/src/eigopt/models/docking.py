"""Dose-response style binary screening model.

Latents ``(top, bottom, ee50, slope)``; each of 100 compounds with docking
score ``xi_i`` in ``[-75, 0]`` is a hit with probability
``bottom + (top - bottom) * sigmoid((xi_i - ee50) * slope)``.
"""
import numpy as np
from scipy import special

from .. import autodiff as ad
from ..distributions import Bernoulli, Beta, Normal
from ..guides import Guide, Head
from ..transforms import IntervalSigmoid
from .base import ExperimentModel, IndependentPrior, Latent


def _logit_beta_moments(a, b):
    return special.digamma(a) - special.digamma(b), np.sqrt(special.polygamma(1, a) + special.polygamma(1, b))


class Docking(ExperimentModel):
    name = "docking"
    discrete_outcome = True
    latent_shapes = {"top": (), "bottom": (), "ee50": (), "slope": ()}
    lo, hi = -75.0, 0.0

    def __init__(self, n=100, prior=None):
        self.n = int(n)
        self.design_shape = (self.n,)
        self.outcome_shape = (self.n,)
        super().__init__(prior or IndependentPrior([
            Latent("top", Beta(25.0, 75.0)),
            Latent("bottom", Beta(4.0, 96.0)),
            Latent("ee50", Normal(-50.0, 15.0)),
            Latent("slope", Normal(-0.15, 0.1)),
        ]))

    def transform(self):
        return IntervalSigmoid(self.design_shape, self.lo, self.hi)

    def probs(self, theta, xi):
        e = lambda k: ad.expand_dims(theta[k], -1)
        top, bottom = e("top"), e("bottom")
        return bottom + (top - bottom) * ad.sigmoid((xi - e("ee50")) * e("slope"))

    def log_likelihood(self, y, theta, xi):
        return ad.sum(Bernoulli(self.probs(theta, xi)).log_prob(y), axis=-1)

    def sample_outcome(self, theta, xi, rng):
        return Bernoulli(ad.value_of(self.probs(theta, ad.value_of(xi)))).sample(rng)

    def uniform_design(self):
        return np.linspace(self.lo, self.hi, self.n)

    def features(self, y):
        return y

    def default_guide(self, seed=0, hidden=(64, 64), **kw):
        tm, ts = _logit_beta_moments(25.0, 75.0)
        bm, bs = _logit_beta_moments(4.0, 96.0)
        heads = [
            Head("top", "logitnormal", (), tm, ts),
            Head("bottom", "logitnormal", (), bm, bs),
            Head("ee50", "normal", (), -50.0, 15.0),
            Head("slope", "normal", (), -0.15, 0.1),
        ]
        return Guide(heads, "mlp", features=self.features, n_features=self.n,
                     hidden=hidden, seed=seed)

    def describe(self):
        return {"name": self.name, "n": self.n}
