"""Probability distributions with differentiable log-densities.

Every family evaluates ``log_prob`` on plain arrays or on tape :class:`Var`
values, and parameters may themselves be Vars. Reparameterisable families
split sampling into a parameter-free ``noise`` draw followed by a
deterministic ``rsample(noise)`` so that the noise can be held fixed while
parameters move.

Out-of-support points give ``-inf`` (for array inputs). Scale-type
parameters must be strictly positive; violations raise
:class:`~eigopt.errors.ParameterError`.
"""
import numpy as np
from scipy import special, stats

from . import autodiff as ad
from .errors import CapabilityError, ParameterError

LOG_2PI = float(np.log(2.0 * np.pi))

# Gauss-Hermite nodes for expectations under a standard normal
_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(64)
_GH_W = _GH_W / _GH_W.sum()


def _positive(name, x):
    v = ad.value_of(x)
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise ParameterError(f"{name} must be strictly positive and finite")
    return x


def _guard(x, inside, safe, fn):
    """Evaluate ``fn`` on ``x`` with out-of-support entries mapped to -inf.

    Taped inputs are masked the same way; their out-of-support entries get
    a zero gradient.
    """
    if ad.is_var(x):
        ok = inside(ad.value_of(x))
        if np.all(ok):
            return fn(x)
        return ad.select(ok, fn(ad.select(ok, x, safe)), -np.inf)
    x = np.asarray(x, dtype=np.float64)
    ok = inside(x)
    if np.all(ok):
        return fn(x)
    lp = fn(np.where(ok, x, safe))
    return ad.select(ok, lp, -np.inf) if ad.is_var(lp) else np.where(ok, lp, -np.inf)




def _shape_of(*xs):
    return np.broadcast_shapes(*(np.shape(ad.value_of(x)) for x in xs))


class Distribution:
    """Base class. Subclasses set ``param_names`` and implement the methods."""

    param_names = ()
    event_ndim = 0
    reparameterizable = False
    noise_kind = None

    @property
    def batch_shape(self):
        shape = _shape_of(*(getattr(self, n) for n in self.param_names))
        return shape[:len(shape) - self.event_ndim] if self.event_ndim else shape

    @property
    def event_shape(self):
        shape = _shape_of(*(getattr(self, n) for n in self.param_names))
        return shape[len(shape) - self.event_ndim:] if self.event_ndim else ()

    def params(self):
        return {n: getattr(self, n) for n in self.param_names}

    def with_params(self, **kw):
        p = self.params()
        p.update(kw)
        return type(self)(**p)

    def log_prob(self, x):
        raise NotImplementedError

    def sample(self, rng, shape=()):
        """Draw values (as plain arrays) of shape ``shape + batch + event``."""
        if self.reparameterizable:
            return ad.value_of(self.rsample(self.noise(rng, shape)))
        raise NotImplementedError

    def noise(self, rng, shape=()):
        """Standard noise consumed by :meth:`rsample`."""
        raise CapabilityError(f"{type(self).__name__} is not reparameterisable")

    def rsample(self, eps):
        raise CapabilityError(f"{type(self).__name__} is not reparameterisable")

    def entropy(self):
        raise CapabilityError(f"{type(self).__name__} has no entropy")

    def log_unnormalized(self, x):
        """Log-density up to the parameter-only normaliser."""
        return self.log_prob(x)

    def log_normalizer(self):
        return 0.0


def _shape_tuple(shape):
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(shape)


class Normal(Distribution):
    param_names = ("loc", "scale")
    reparameterizable = True
    noise_kind = "normal"

    def __init__(self, loc, scale):
        self.loc = loc
        self.scale = _positive("scale", scale)

    def log_prob(self, x):
        z = (x - self.loc) / self.scale
        return -0.5 * ad.square(z) - ad.log(self.scale) - 0.5 * LOG_2PI

    def log_unnormalized(self, x):
        return -0.5 * ad.square((x - self.loc) / self.scale)

    def log_normalizer(self):
        return -ad.log(self.scale) - 0.5 * LOG_2PI

    def noise(self, rng, shape=()):
        return rng.standard_normal(_shape_tuple(shape) + self.batch_shape)

    def rsample(self, eps):
        return self.loc + self.scale * eps

    def entropy(self):
        return 0.5 * (1.0 + LOG_2PI) + ad.log(self.scale)


class LogNormal(Distribution):
    param_names = ("loc", "scale")
    reparameterizable = True
    noise_kind = "normal"

    def __init__(self, loc, scale):
        self.loc = loc
        self.scale = _positive("scale", scale)

    def log_prob(self, x):
        def f(x):
            lx = ad.log(x)
            return Normal(self.loc, self.scale).log_prob(lx) - lx
        return _guard(x, lambda v: v > 0, 1.0, f)

    def noise(self, rng, shape=()):
        return rng.standard_normal(_shape_tuple(shape) + self.batch_shape)

    def rsample(self, eps):
        return ad.exp(self.loc + self.scale * eps)

    def entropy(self):
        return self.loc + 0.5 * (1.0 + LOG_2PI) + ad.log(self.scale)


class Exponential(Distribution):
    param_names = ("rate",)
    reparameterizable = True
    noise_kind = "uniform"

    def __init__(self, rate):
        self.rate = _positive("rate", rate)

    def log_prob(self, x):
        return _guard(x, lambda v: v >= 0, 0.0, lambda x: ad.log(self.rate) - self.rate * x)

    def noise(self, rng, shape=()):
        return rng.random(_shape_tuple(shape) + self.batch_shape)

    def rsample(self, u):
        return -ad.log1p(-np.asarray(u)) / self.rate

    def entropy(self):
        return 1.0 - ad.log(self.rate)


class Laplace(Distribution):
    param_names = ("loc", "scale")
    reparameterizable = True
    noise_kind = "uniform"

    def __init__(self, loc, scale):
        self.loc = loc
        self.scale = _positive("scale", scale)

    def log_prob(self, x):
        return -ad.abs(x - self.loc) / self.scale - ad.log(2.0 * self.scale)

    def log_unnormalized(self, x):
        return -ad.abs(x - self.loc) / self.scale

    def log_normalizer(self):
        return -ad.log(2.0 * self.scale)

    def noise(self, rng, shape=()):
        return rng.random(_shape_tuple(shape) + self.batch_shape)

    def rsample(self, u):
        c = np.asarray(u) - 0.5
        return self.loc - self.scale * (np.sign(c) * np.log1p(-2.0 * np.abs(c)))

    def entropy(self):
        return 1.0 + ad.log(2.0 * self.scale)


class Beta(Distribution):
    param_names = ("concentration1", "concentration0")

    def __init__(self, concentration1, concentration0):
        self.concentration1 = _positive("concentration1", concentration1)
        self.concentration0 = _positive("concentration0", concentration0)

    def _lbeta(self):
        a, b = self.concentration1, self.concentration0
        return ad.lgamma(a) + ad.lgamma(b) - ad.lgamma(a + b)

    def log_unnormalized(self, x):
        a, b = self.concentration1, self.concentration0

        def f(x):
            return ad.xlogy(a - 1.0, x) + ad.xlogy(b - 1.0, 1.0 - x)
        return _guard(x, lambda v: (v >= 0) & (v <= 1), 0.5, f)

    def log_normalizer(self):
        return -self._lbeta()

    def log_prob(self, x):
        return self.log_unnormalized(x) + self.log_normalizer()

    def sample(self, rng, shape=()):
        a = ad.value_of(self.concentration1)
        b = ad.value_of(self.concentration0)
        return rng.beta(a, b, size=_shape_tuple(shape) + self.batch_shape)

    def entropy(self):
        a, b = ad.value_of(self.concentration1), ad.value_of(self.concentration0)
        dg = special.digamma
        return (special.betaln(a, b) - (a - 1) * dg(a) - (b - 1) * dg(b)
                + (a + b - 2) * dg(a + b))


class Gamma(Distribution):
    param_names = ("concentration", "rate")

    def __init__(self, concentration, rate):
        self.concentration = _positive("concentration", concentration)
        self.rate = _positive("rate", rate)

    def log_unnormalized(self, x):
        a, r = self.concentration, self.rate
        return _guard(x, lambda v: v >= 0, 1.0, lambda x: ad.xlogy(a - 1.0, x) - r * x)

    def log_normalizer(self):
        a, r = self.concentration, self.rate
        return a * ad.log(r) - ad.lgamma(a)

    def log_prob(self, x):
        return self.log_unnormalized(x) + self.log_normalizer()

    def sample(self, rng, shape=()):
        a, r = ad.value_of(self.concentration), ad.value_of(self.rate)
        return rng.gamma(a, 1.0 / r, size=_shape_tuple(shape) + self.batch_shape)

    def entropy(self):
        a, r = ad.value_of(self.concentration), ad.value_of(self.rate)
        return a - np.log(r) + special.gammaln(a) + (1 - a) * special.digamma(a)


class Dirichlet(Distribution):
    param_names = ("concentration",)
    event_ndim = 1

    def __init__(self, concentration):
        self.concentration = _positive("concentration", concentration)

    def log_unnormalized(self, x):
        if ad.is_var(x):
            return ad.sum(ad.xlogy(self.concentration - 1.0, x), axis=-1)
        return self._masked_unnorm(x)

    def _masked_unnorm(self, x):
        a = self.concentration
        x = np.asarray(x, dtype=np.float64)
        ok = np.all(x >= 0, axis=-1) & (np.abs(x.sum(-1) - 1.0) <= 1e-8)
        k = x.shape[-1]
        xs = np.where(ok[..., None], x, 1.0 / k)
        lp = ad.sum(ad.xlogy(a - 1.0, xs), axis=-1)
        return ad.select(ok, lp, -np.inf) if ad.is_var(lp) else np.where(ok, lp, -np.inf)

    def log_normalizer(self):
        a = self.concentration
        return ad.lgamma(ad.sum(a, axis=-1)) - ad.sum(ad.lgamma(a), axis=-1)

    def log_prob(self, x):
        return self.log_unnormalized(x) + self.log_normalizer()

    def sample(self, rng, shape=()):
        a = ad.value_of(self.concentration)
        g = rng.gamma(np.broadcast_to(a, _shape_tuple(shape) + a.shape))
        return g / g.sum(-1, keepdims=True)

    def entropy(self):
        a = ad.value_of(self.concentration)
        a0 = a.sum(-1)
        k = a.shape[-1]
        lb = special.gammaln(a).sum(-1) - special.gammaln(a0)
        dg = special.digamma
        return lb + (a0 - k) * dg(a0) - ((a - 1) * dg(a)).sum(-1)


class Binomial(Distribution):
    """Binomial counts.

    ``probs_complement`` may be given alongside ``probs`` to supply 1 - p
    without cancellation when p is close to one.
    """

    param_names = ("total_count", "probs")
    fixed_params = ("total_count",)

    def __init__(self, total_count, probs, probs_complement=None):
        n = np.asarray(total_count, dtype=np.float64)
        if np.any(n < 0) or np.any(n != np.round(n)):
            raise ParameterError("total_count must be a non-negative integer")
        p = ad.value_of(probs)
        if np.any(~(p >= 0)) or np.any(p > 1):
            raise ParameterError("probs must lie in [0, 1]")
        self.total_count = n
        self.probs = probs
        self.probs_complement = probs_complement

    def _q(self):
        return self.probs_complement if self.probs_complement is not None else 1.0 - self.probs

    def log_prob(self, k):
        n = self.total_count
        k = np.asarray(ad.value_of(k), dtype=np.float64)
        ok = (k >= 0) & (k <= n) & (k == np.round(k))
        ks = np.where(ok, k, 0.0)
        logc = special.gammaln(n + 1) - special.gammaln(ks + 1) - special.gammaln(n - ks + 1)
        lp = logc + ad.xlogy(ks, self.probs) + ad.xlogy(n - ks, self._q())
        if np.all(ok):
            return lp
        return ad.select(ok, lp, -np.inf) if ad.is_var(lp) else np.where(ok, lp, -np.inf)

    def sample(self, rng, shape=()):
        """Inversion sampling: the k with F(k-1) < u <= F(k)."""
        n = self.total_count
        p = ad.value_of(self.probs)
        full = _shape_tuple(shape) + np.broadcast_shapes(n.shape, p.shape)
        u = rng.random(full)
        k = stats.binom.ppf(u, np.broadcast_to(n, full), np.broadcast_to(p, full))
        return np.nan_to_num(k, nan=0.0)

    def support(self):
        """All outcomes 0..n (requires a scalar ``total_count``)."""
        if self.total_count.ndim:
            raise CapabilityError("support enumeration needs a scalar total_count")
        return np.arange(int(self.total_count) + 1, dtype=np.float64)


class Bernoulli(Distribution):
    param_names = ("probs",)

    def __init__(self, probs):
        p = ad.value_of(probs)
        if np.any(~(p >= 0)) or np.any(p > 1):
            raise ParameterError("probs must lie in [0, 1]")
        self.probs = probs

    def log_prob(self, y):
        y = np.asarray(ad.value_of(y), dtype=np.float64)
        ok = (y == 0) | (y == 1)
        ys = np.where(ok, y, 0.0)
        lp = ad.xlogy(ys, self.probs) + ad.xlogy(1.0 - ys, 1.0 - self.probs)
        if np.all(ok):
            return lp
        return ad.select(ok, lp, -np.inf) if ad.is_var(lp) else np.where(ok, lp, -np.inf)

    def sample(self, rng, shape=()):
        p = ad.value_of(self.probs)
        return (rng.random(_shape_tuple(shape) + p.shape) < p).astype(np.float64)

    def support(self):
        return np.array([0.0, 1.0])

    def entropy(self):
        p = ad.value_of(self.probs)
        return -(special.xlogy(p, p) + special.xlogy(1 - p, 1 - p))


class MultivariateNormalTriL(Distribution):
    """Multivariate normal with covariance ``c^2 L L^T``.

    ``scale_tril`` is a single lower-triangular (d, d) factor shared by the
    whole batch; the optional ``scale_factor`` c broadcasts over the batch.
    """

    param_names = ("loc", "scale_tril", "scale_factor")
    event_ndim = 1
    reparameterizable = True
    noise_kind = "normal"

    def __init__(self, loc, scale_tril, scale_factor=1.0):
        lv = ad.value_of(scale_tril)
        if lv.ndim != 2 or lv.shape[0] != lv.shape[1]:
            raise ParameterError("scale_tril must be a square matrix")
        if np.any(np.diag(lv) <= 0) or np.any(np.triu(lv, 1) != 0):
            raise ParameterError("scale_tril must be lower triangular with positive diagonal")
        self.loc = loc
        self.scale_tril = scale_tril
        self.scale_factor = _positive("scale_factor", scale_factor)
        self.dim = lv.shape[0]

    @property
    def batch_shape(self):
        return np.broadcast_shapes(np.shape(ad.value_of(self.loc))[:-1],
                                   np.shape(ad.value_of(self.scale_factor)))

    @property
    def event_shape(self):
        return (self.dim,)

    def _diag(self):
        idx = np.arange(self.dim)
        return ad.getitem(self.scale_tril, (idx, idx))

    def _half_logdet(self):
        return ad.sum(ad.log(self._diag())) + self.dim * ad.log(self.scale_factor)

    def log_unnormalized(self, x):
        z = ad.triangular_solve(self.scale_tril, x - self.loc)
        return -0.5 * ad.sum(ad.square(z), axis=-1) / ad.square(self.scale_factor)

    def log_normalizer(self):
        return -self._half_logdet() - 0.5 * self.dim * LOG_2PI

    def log_prob(self, x):
        return self.log_unnormalized(x) + self.log_normalizer()

    def noise(self, rng, shape=()):
        return rng.standard_normal(_shape_tuple(shape) + self.batch_shape + (self.dim,))

    def rsample(self, eps):
        c = self.scale_factor
        if np.ndim(ad.value_of(c)):
            c = ad.expand_dims(c, -1)
        return self.loc + c * ad.matvec(self.scale_tril, eps)

    def entropy(self):
        return 0.5 * self.dim * (1.0 + LOG_2PI) + self._half_logdet()


class LogitNormal(Distribution):
    """``sigmoid(z)`` with ``z ~ Normal(loc, scale)``; support (0, 1)."""

    param_names = ("loc", "scale")
    reparameterizable = True
    noise_kind = "normal"

    def __init__(self, loc, scale):
        self.loc = loc
        self.scale = _positive("scale", scale)

    def log_prob(self, x):
        def f(x):
            lx, l1x = ad.log(x), ad.log(1.0 - x)
            return Normal(self.loc, self.scale).log_prob(lx - l1x) - lx - l1x
        return _guard(x, lambda v: (v > 0) & (v < 1), 0.5, f)

    def noise(self, rng, shape=()):
        return rng.standard_normal(_shape_tuple(shape) + self.batch_shape)

    def rsample(self, eps):
        return ad.sigmoid(self.loc + self.scale * eps)

    def entropy(self):
        # H[x] = H[z] + E[log x + log(1 - x)]
        mu, s = ad.value_of(self.loc), ad.value_of(self.scale)
        z = mu[..., None] + s[..., None] * _GH_X
        jac = (special.log_expit(z) + special.log_expit(-z)) @ _GH_W
        return 0.5 * (1.0 + LOG_2PI) + np.log(s) + jac

    def mean(self):
        mu, s = ad.value_of(self.loc), ad.value_of(self.scale)
        return special.expit(mu[..., None] + s[..., None] * _GH_X) @ _GH_W


class LogisticNormal(Distribution):
    """Additive logistic-normal on the K-simplex.

    ``x = softmax([z, 0])`` with ``z ~ Normal(loc, scale)`` of size K - 1.
    """

    param_names = ("loc", "scale")
    event_ndim = 1
    reparameterizable = True
    noise_kind = "normal"

    def __init__(self, loc, scale):
        self.loc = loc
        self.scale = _positive("scale", scale)

    def log_prob(self, x):
        def f(x):
            lx = ad.log(x)
            k = lx.shape[-1]
            z = ad.getitem(lx, (Ellipsis, slice(0, k - 1))) - ad.getitem(lx, (Ellipsis, slice(k - 1, k)))
            return ad.sum(Normal(self.loc, self.scale).log_prob(z), axis=-1) - ad.sum(lx, axis=-1)
        if ad.is_var(x):
            return f(x)
        x = np.asarray(x, dtype=np.float64)
        ok = np.all(x > 0, axis=-1) & (np.abs(x.sum(-1) - 1.0) <= 1e-8)
        if np.all(ok):
            return f(x)
        k = x.shape[-1]
        lp = f(np.where(ok[..., None], x, 1.0 / k))
        return ad.select(ok, lp, -np.inf) if ad.is_var(lp) else np.where(ok, lp, -np.inf)

    def noise(self, rng, shape=()):
        return rng.standard_normal(_shape_tuple(shape) + self.batch_shape + self.event_shape)

    def rsample(self, eps):
        z = self.loc + self.scale * eps
        zero = np.zeros(ad.value_of(z).shape[:-1] + (1,))
        za = ad.concat([z, zero], axis=-1)
        return ad.exp(za - ad.logsumexp(za, axis=-1, keepdims=True))

    def entropy(self):
        """Quadrature over the product Gauss-Hermite grid (K - 1 <= 3)."""
        mu, s = ad.value_of(self.loc), ad.value_of(self.scale)
        km1 = mu.shape[-1]
        if km1 > 3:
            raise CapabilityError("quadrature entropy implemented for K <= 4")
        nodes = np.stack(np.meshgrid(*([_GH_X] * km1), indexing="ij"), -1).reshape(-1, km1)
        w = np.prod(np.stack(np.meshgrid(*([_GH_W] * km1), indexing="ij"), -1).reshape(-1, km1), -1)
        z = mu[..., None, :] + s[..., None, :] * nodes
        za = np.concatenate([z, np.zeros(z.shape[:-1] + (1,))], -1)
        logx = za - special.logsumexp(za, axis=-1, keepdims=True)
        jac = logx.sum(-1) @ w
        return km1 * 0.5 * (1.0 + LOG_2PI) + np.log(s).sum(-1) + jac

    def mean(self):
        mu, s = ad.value_of(self.loc), ad.value_of(self.scale)
        km1 = mu.shape[-1]
        nodes = np.stack(np.meshgrid(*([_GH_X] * km1), indexing="ij"), -1).reshape(-1, km1)
        w = np.prod(np.stack(np.meshgrid(*([_GH_W] * km1), indexing="ij"), -1).reshape(-1, km1), -1)
        z = mu[..., None, :] + s[..., None, :] * nodes
        za = np.concatenate([z, np.zeros(z.shape[:-1] + (1,))], -1)
        x = np.exp(za - special.logsumexp(za, axis=-1, keepdims=True))
        return np.einsum("...nk,n->...k", x, w)


class CensoredSigmoidNormal(Distribution):
    """``clip(sigmoid(eta), eps, 1 - eps)`` with ``eta ~ Normal(loc, scale)``.

    Values clipped to either end carry point masses equal to the normal tail
    probabilities; interior values have the change-of-variables density.
    """

    param_names = ("loc", "scale")
    reparameterizable = True
    noise_kind = "normal"

    def __init__(self, loc, scale, eps=0.005):
        if not 0 < eps < 0.5:
            raise ParameterError("eps must lie in (0, 1/2)")
        self.loc = loc
        self.scale = _positive("scale", scale)
        self.eps = float(eps)
        self.lo = self.eps
        self.hi = 1.0 - self.eps
        self.logit_lo = float(special.logit(self.lo))
        self.logit_hi = float(special.logit(self.hi))

    def with_params(self, **kw):
        p = self.params()
        p.update(kw)
        return type(self)(eps=self.eps, **p)

    def log_prob(self, y):
        yv = np.asarray(ad.value_of(y), dtype=np.float64)
        at_lo = yv <= self.lo
        at_hi = yv >= self.hi
        outside = (yv < self.lo) | (yv > self.hi) | np.isnan(yv)
        interior = ~(at_lo | at_hi)
        mid = 0.5
        ys = ad.select(interior, y, mid) if ad.is_var(y) else np.where(interior, yv, mid)
        ly, l1y = ad.log(ys), ad.log(1.0 - ys)
        lp_in = Normal(self.loc, self.scale).log_prob(ly - l1y) - ly - l1y
        lp_lo = ad.log_ndtr((self.logit_lo - self.loc) / self.scale)
        lp_hi = ad.log_ndtr((self.loc - self.logit_hi) / self.scale)
        lp = ad.select(at_lo, lp_lo, ad.select(at_hi, lp_hi, lp_in))
        if np.any(outside):
            lp = ad.select(outside, -np.inf, lp)
        return lp

    def noise(self, rng, shape=()):
        return rng.standard_normal(_shape_tuple(shape) + self.batch_shape)

    def rsample(self, eps):
        eta = self.loc + self.scale * eps
        ev = ad.value_of(eta)
        inner = ad.sigmoid(eta)
        return ad.select(ev <= self.logit_lo, self.lo,
                         ad.select(ev >= self.logit_hi, self.hi, inner))


def score(dist, x, names=None):
    """Per-sample gradients of ``log_prob(x)`` w.r.t. distribution parameters.

    Each parameter is broadcast against the sample batch so that every sample
    gets its own copy; returns ``{name: array of shape batch + param event}``.
    """
    if names is None:
        names = tuple(n for n in dist.param_names if n not in getattr(dist, "fixed_params", ()))
    names = tuple(names)
    x = np.asarray(x, dtype=np.float64)
    nb = x.ndim - dist.event_ndim
    tape = ad.Tape()
    leaves = {}
    kw = {}
    for n, v in dist.params().items():
        v = ad.value_of(v)
        if n in names:
            if dist.event_ndim and v.ndim >= dist.event_ndim:
                shape = x.shape[:nb] + v.shape[v.ndim - dist.event_ndim:]
            else:
                shape = x.shape[:nb]
            leaves[n] = tape.leaf(np.broadcast_to(v, shape).copy())
            kw[n] = leaves[n]
        else:
            kw[n] = v
    d = dist.with_params(**kw)
    lp = d.log_prob(x)
    grads = ad.backward(ad.sum(lp))
    return {n: grads[leaf.index] for n, leaf in leaves.items()}
