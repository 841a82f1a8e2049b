"""Two-stage binomial survival experiment.

``theta ~ LogNormal(0, 1)``; with ``n`` individuals,
``I1 ~ Binomial(n, exp(-theta xi1))`` and ``I2 ~ Binomial(n - I1, exp(-theta xi2))``.
Designs are the two non-negative observation times.
"""
import numpy as np

from .. import autodiff as ad
from ..distributions import Binomial, LogNormal
from ..errors import ContractError
from ..guides import Guide, Head
from ..transforms import SoftplusPositive
from .base import ExperimentModel, IndependentPrior, Latent


class DeathProcess(ExperimentModel):
    name = "death"
    design_shape = (2,)
    outcome_shape = (2,)
    latent_shapes = {"theta": ()}
    discrete_outcome = True

    def __init__(self, n=10, prior=None):
        self.n = int(n)
        super().__init__(prior or IndependentPrior([Latent("theta", LogNormal(0.0, 1.0))]))
        out = [(i, j) for i in range(self.n + 1) for j in range(self.n + 1 - i)]
        self._outcomes = np.array(out, dtype=np.float64)
        self._index = -np.ones((self.n + 1, self.n + 1), dtype=int)
        for k, (i, j) in enumerate(out):
            self._index[i, j] = k

    def transform(self):
        return SoftplusPositive((2,))

    def _probs(self, theta, xi):
        t = ad.expand_dims(theta["theta"], -1)
        a = t * xi
        return ad.exp(-a), -ad.expm1(-a)

    def log_likelihood(self, y, theta, xi):
        y = np.asarray(ad.value_of(y))
        p, q = self._probs(theta, xi)
        i1, i2 = y[..., 0], y[..., 1]
        p1, p2 = ad.getitem(p, (Ellipsis, 0)), ad.getitem(p, (Ellipsis, 1))
        q1, q2 = ad.getitem(q, (Ellipsis, 0)), ad.getitem(q, (Ellipsis, 1))
        n2 = np.maximum(self.n - i1, 0.0)
        lp1 = Binomial(self.n, p1, q1).log_prob(i1)
        lp2 = Binomial(n2, p2, q2).log_prob(i2)
        return lp1 + lp2

    def sample_outcome(self, theta, xi, rng):
        p, _ = self._probs(theta, ad.value_of(xi))
        i1 = Binomial(self.n, p[..., 0]).sample(rng)
        i2 = Binomial(self.n - i1, p[..., 1]).sample(rng)
        return np.stack([i1, i2], -1)

    def enumerate_outcomes(self):
        return self._outcomes.copy()

    def outcome_index(self, y):
        y = np.asarray(ad.value_of(y)).astype(int)
        i1, i2 = y[..., 0], y[..., 1]
        ok = (i1 >= 0) & (i2 >= 0) & (i1 + i2 <= self.n)
        if not np.all(ok):
            raise ContractError("outcome is not in the enumerated outcome set")
        return self._index[i1, i2]

    def default_guide(self, seed=0, **kw):
        return Guide([Head("theta", "lognormal", (), 0.0, 1.0)], "tabular",
                     index_fn=self.outcome_index, n_rows=len(self._outcomes), seed=seed)

    def describe(self):
        return {"name": self.name, "n": self.n}
