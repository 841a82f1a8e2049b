"""Constant-elasticity-of-substitution preference model.

A participant compares baskets ``x`` and ``x'`` (the design, in ``[0, 100]^6``)
and answers on a slider. With utility ``U(x) = (sum_i alpha_i x_i^rho)^(1/rho)``,
``eta ~ N(u (U(x) - U(x')), (tau u (1 + |x - x'|))^2)`` and the response is
``sigmoid(eta)`` clipped to ``[tau, 1 - tau]`` with point masses at the ends.
"""
import numpy as np
from scipy import special

from .. import autodiff as ad
from ..distributions import Beta, CensoredSigmoidNormal, Dirichlet, LogNormal
from ..guides import Guide, Head
from ..transforms import IntervalSigmoid
from .base import ExperimentModel, IndependentPrior, Latent

RHO_MIN, RHO_MAX = 1e-3, 1.0 - 1e-3
BASKET_FLOOR = 1e-12
FEATURE_FLOOR = 1e-6


class CES(ExperimentModel):
    """:param log_u_scale: standard deviation of ``log u`` in the prior.
    :param log_u_scale_is_variance: read ``log_u_scale`` as a variance instead.
    """

    name = "ces"
    design_shape = (6,)
    outcome_shape = ()
    latent_shapes = {"rho": (), "alpha": (3,), "u": ()}
    reparam_outcome = True
    lo, hi = 0.0, 100.0

    def __init__(self, tau=0.005, log_u_loc=1.0, log_u_scale=3.0,
                 log_u_scale_is_variance=False, prior=None):
        self.tau = float(tau)
        self.log_u_loc = float(log_u_loc)
        self.log_u_scale = float(log_u_scale)
        self.log_u_scale_is_variance = bool(log_u_scale_is_variance)
        sd = np.sqrt(self.log_u_scale) if self.log_u_scale_is_variance else self.log_u_scale
        self.log_u_sd = float(sd)
        super().__init__(prior or IndependentPrior([
            Latent("rho", Beta(1.0, 1.0)),
            Latent("alpha", Dirichlet(np.ones(3)), (3,)),
            Latent("u", LogNormal(self.log_u_loc, self.log_u_sd)),
        ]))

    def transform(self):
        return IntervalSigmoid(self.design_shape, self.lo, self.hi)

    def utility(self, rho, alpha, x):
        """``U(x)`` for latents with batch axes; ``x`` has trailing size 3."""
        rho = ad.minimum(ad.maximum(rho, RHO_MIN), RHO_MAX)
        r = ad.expand_dims(rho, -1)
        logx = ad.log(ad.maximum(x, BASKET_FLOOR))
        return ad.exp(ad.logsumexp(ad.log(alpha) + r * logx, axis=-1) / rho)

    def outcome_dist(self, theta, xi):
        x = ad.getitem(xi, (Ellipsis, slice(0, 3)))
        xp = ad.getitem(xi, (Ellipsis, slice(3, 6)))
        rho, alpha, u = theta["rho"], theta["alpha"], theta["u"]
        diff = self.utility(rho, alpha, x) - self.utility(rho, alpha, xp)
        dist = ad.sqrt(ad.sum(ad.square(x - xp), axis=-1) + 1e-24)
        return CensoredSigmoidNormal(u * diff, self.tau * u * (1.0 + dist), eps=self.tau)

    def log_likelihood(self, y, theta, xi):
        return self.outcome_dist(theta, xi).log_prob(y)

    def outcome_noise(self, rng, batch_shape):
        return rng.standard_normal(tuple(batch_shape))

    def simulate(self, theta, xi, noise):
        return self.outcome_dist(theta, xi).rsample(noise)

    def features(self, y):
        """``logit y``, ``log |logit y|`` (floored) and ``1[y > 1/2]``."""
        y = ad.value_of(y)
        z = special.logit(y)
        return np.stack([z, np.log(np.maximum(np.abs(z), FEATURE_FLOOR)), (y > 0.5).astype(float)], -1)

    def default_guide(self, seed=0, **kw):
        # logit of Beta(1, 1) and log-ratios of Dirichlet(1, 1, 1) components have sd sqrt(2 psi'(1))
        sd = float(np.sqrt(2.0 * special.polygamma(1, 1.0)))
        heads = [
            Head("rho", "logitnormal", (), 0.0, sd),
            Head("alpha", "logisticnormal", (3,), 0.0, sd),
            Head("u", "lognormal", (), self.log_u_loc, self.log_u_sd),
        ]
        return Guide(heads, "linear", features=self.features, n_features=3, seed=seed)

    def describe(self):
        return {"name": self.name, "tau": self.tau, "log_u_loc": self.log_u_loc,
                "log_u_scale": self.log_u_scale,
                "log_u_scale_is_variance": self.log_u_scale_is_variance}
