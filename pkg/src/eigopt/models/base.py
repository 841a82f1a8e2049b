"""Shared experiment-model machinery.

Latents travel as ``dict[name, array]`` whose leading axes are batch axes and
whose trailing axes are the latent's event shape. Outcomes are arrays with
trailing ``outcome_shape`` axes. Every method broadcasts batch axes of the
latents against those of the outcome, which is how the bounds evaluate one
observed ``y`` against many contrastive latents at once.
"""
import copy

import numpy as np

from .. import autodiff as ad
from ..errors import CapabilityError


def _sum_trailing(x, k):
    for _ in range(k):
        x = ad.sum(x, axis=-1)
    return x


class Latent:
    """One named latent component with an (iid-extended) distribution.

    ``dist`` may have a smaller event rank than ``event_shape``; the missing
    trailing axes are treated as independent copies.
    """

    def __init__(self, name, dist, event_shape=()):
        self.name = name
        self.dist = dist
        self.event_shape = tuple(event_shape)
        self.extra = len(self.event_shape) - dist.event_ndim
        if self.extra < 0:
            raise ValueError(f"event shape of {name} is smaller than its distribution's")

    @property
    def copies(self):
        return int(np.prod(self.event_shape[:self.extra])) if self.extra else 1

    def sample(self, rng, shape):
        shape = tuple(shape)
        return self.dist.sample(rng, shape + self.event_shape[:self.extra])

    def log_prob(self, x):
        return _sum_trailing(self.dist.log_prob(x), self.extra)

    def log_unnormalized(self, x):
        return _sum_trailing(self.dist.log_unnormalized(x), self.extra)

    def log_normalizer(self):
        return self.copies * ad.value_of(self.dist.log_normalizer())

    def entropy(self):
        return self.copies * float(np.sum(self.dist.entropy()))


class IndependentPrior:
    """Product of independent latent components with known normalisers."""

    normalized = True

    def __init__(self, latents):
        self.latents = list(latents)
        self.names = [lat.name for lat in self.latents]

    def __getitem__(self, name):
        return self.latents[self.names.index(name)]

    def sample(self, rng, shape=()):
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        return {lat.name: lat.sample(rng, shape) for lat in self.latents}

    def log_prob(self, theta):
        out = 0.0
        for lat in self.latents:
            out = out + lat.log_prob(theta[lat.name])
        return out

    def log_unnorm(self, theta):
        out = 0.0
        for lat in self.latents:
            out = out + lat.log_unnormalized(theta[lat.name])
        return out

    def log_normalizer(self):
        return float(sum(lat.log_normalizer() for lat in self.latents))

    def log_density(self, theta):
        """Log-density used inside the bounds (exact here)."""
        return self.log_prob(theta)

    def entropy(self):
        return float(sum(lat.entropy() for lat in self.latents))


class ExperimentModel:
    """Prior plus likelihood bound to a design space.

    Subclasses define ``latent_shapes``, ``outcome_shape``, ``design_shape``,
    :meth:`log_likelihood`, :meth:`sample_outcome` and, when the outcome law
    allows it, :meth:`outcome_noise` and :meth:`simulate`.
    """

    name = "model"
    design_shape = ()
    outcome_shape = ()
    latent_shapes = {}
    discrete_outcome = False
    reparam_outcome = False

    def __init__(self, prior):
        self.prior = prior

    @property
    def latent_names(self):
        return list(self.latent_shapes)

    def with_prior(self, prior):
        """Shallow copy with a different prior (used between sequential rounds)."""
        m = copy.copy(self)
        m.prior = prior
        return m

    def transform(self):
        raise NotImplementedError

    def sample_prior(self, rng, shape=()):
        return self.prior.sample(rng, shape)

    def log_likelihood(self, y, theta, xi):
        raise NotImplementedError

    def outcome_noise(self, rng, batch_shape):
        raise CapabilityError(f"{self.name} has no reparameterised outcome")

    def simulate(self, theta, xi, noise):
        raise CapabilityError(f"{self.name} has no reparameterised outcome")

    def sample_outcome(self, theta, xi, rng):
        """Draw ``y ~ p(y | theta, xi)`` as a plain array."""
        batch = self.batch_shape(theta)
        return ad.value_of(self.simulate(theta, ad.value_of(xi), self.outcome_noise(rng, batch)))

    def enumerate_outcomes(self):
        """All outcomes as an array of shape (K, *outcome_shape), or None."""
        return None

    def analytic_eig(self, xi):
        raise CapabilityError(f"{self.name} has no closed-form EIG")

    def optimal_design(self):
        raise CapabilityError(f"{self.name} has no closed-form optimal design")

    def batch_shape(self, theta):
        shapes = []
        for name, ev in self.latent_shapes.items():
            s = np.shape(ad.value_of(theta[name]))
            shapes.append(s[:len(s) - len(ev)])
        return np.broadcast_shapes(*shapes)

    def default_guide(self, seed=0, **kw):
        raise NotImplementedError

    def describe(self):
        return {"name": self.name}


def expand_latent(x, ndim_after):
    """Append ``ndim_after`` singleton axes so a scalar latent broadcasts over outcomes."""
    for _ in range(ndim_after):
        x = ad.expand_dims(x, -1)
    return x
