"""Monte Carlo estimators of EIG bounds.

All contrastive bounds share one integrand::

    g = log p(y | theta_0) - logsumexp_l [log p(theta_l) + log p(y | theta_l) - log q(theta_l | y)] + log K

with ``theta_0`` drawn from the prior alongside ``y`` and ``theta_1..L`` drawn
from the guide. The variants differ only in which terms enter the
log-sum-exp:

========  =====================================  ==========
kind      terms in the denominator               log K
========  =====================================  ==========
``ace``   l = 0..L, guide contrasts              log(L + 1)
``vnmc``  l = 1..L, guide contrasts              log L
``pce``   l = 0..L, prior contrasts, likelihood  log(L + 1)
========  =====================================  ==========

Random inputs are gathered into a :class:`Draws` record first and the
integrand is a deterministic function of ``(xi, phi, draws)``. Re-using a
``Draws`` object therefore gives common-random-number comparisons, and the
same function runs on tape values for the gradient estimators.
"""
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import CapabilityError, ContractError, NumericalAbort

KINDS = ("ace", "vnmc", "pce", "ba", "ace_lf")


@dataclass
class BoundEstimate:
    """Value of a bound with its per-sample integrand."""

    value: float
    g: np.ndarray
    stderr: float
    n: int
    L: int
    kind: str = "ace"
    up_to_constant: bool = False

    @classmethod
    def from_samples(cls, g, L, kind, up_to_constant=False):
        g = np.asarray(g, dtype=np.float64).reshape(-1)
        n = g.size
        se = float(g.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        return cls(float(g.mean()), g, se, n, L, kind, up_to_constant)


@dataclass
class Draws:
    """Every random input of one bound evaluation.

    ``y`` holds observed outcomes (shape ``(N, *outcome)``) or, in summed
    mode, all enumerated outcomes with shape ``(Y, 1, *outcome)``.
    ``y_noise`` replaces ``y`` when outcomes are simulated pathwise.
    Contrasts are stored as guide noise when the guide is reparameterisable
    and as values otherwise.
    """

    theta0: dict
    L: int
    y: np.ndarray = None
    y_noise: np.ndarray = None
    contrast_noise: dict = None
    contrast_theta: dict = None
    summed: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return int(next(iter(self.theta0.values())).shape[0])


# ---------------------------------------------------------------- sampling
def sample_draws(model, xi, N, L, rng, guide=None, kind="ace", reparam=False, summed=False,
                 contrast_layout="per_outcome"):
    """Draw prior latents, outcomes and contrast noise for ``N`` outer samples.

    :param reparam: keep the outcome noise instead of the outcome, so ``y``
        can be recomputed pathwise at any design.
    :param summed: enumerate all outcomes instead of sampling them.
    :param contrast_layout: in summed mode, ``per_outcome`` shares each
        outcome's contrasts across the ``N`` prior draws; ``per_sample``
        draws separate contrasts for every (outcome, sample) pair.
    """
    xi = ad.value_of(xi)
    theta0 = model.sample_prior(rng, (N,))
    d = Draws(theta0=theta0, L=int(L), summed=summed)
    if summed:
        outs = model.enumerate_outcomes()
        if outs is None:
            raise CapabilityError(f"{model.name} does not enumerate its outcomes")
        y = outs.reshape((outs.shape[0], 1) + outs.shape[1:])
        d.y = y
    elif reparam:
        if not model.reparam_outcome:
            raise CapabilityError(f"{model.name} has no pathwise outcome simulator")
        d.y_noise = model.outcome_noise(rng, (N,))
        y = ad.value_of(model.simulate(theta0, xi, d.y_noise))
    else:
        y = model.sample_outcome(theta0, xi, rng)
        d.y = y
    if kind in ("ba",) or L == 0:
        return d
    if kind == "pce":
        if summed:
            d.contrast_theta = model.sample_prior(rng, (L, 1, N))
        else:
            d.contrast_theta = model.sample_prior(rng, (L, N))
        return d
    if guide is None:
        raise ContractError(f"{kind} needs a guide")
    if summed and contrast_layout == "per_sample":
        y = np.broadcast_to(y, (y.shape[0], N) + y.shape[2:])
    dists = guide.condition(y)
    if guide.reparameterizable:
        d.contrast_noise = guide.noise(dists, rng, (L,))
    else:
        d.contrast_theta = guide.sample(dists, rng, (L,))
    return d


def outcomes(model, xi, draws):
    """Observed outcomes for ``draws`` at design ``xi`` (pathwise when possible)."""
    if draws.y_noise is not None:
        return model.simulate(draws.theta0, xi, draws.y_noise)
    return draws.y


def _join(model, theta0, contrasts):
    """Stack ``theta0`` in front of the contrasts along a new leading axis."""
    out = {}
    for name, ev in model.latent_shapes.items():
        a = ad.expand_dims(theta0[name], 0)
        b = contrasts[name]
        sa, sb = ad.value_of(a).shape, ad.value_of(b).shape
        k = len(ev)
        batch = np.broadcast_shapes(sa[1:len(sa) - k], sb[1:len(sb) - k])
        a = ad.broadcast_to(a, (1,) + batch + tuple(ev)) if sa[1:len(sa) - k] != batch else a
        b = ad.broadcast_to(b, (sb[0],) + batch + tuple(ev)) if sb[1:len(sb) - k] != batch else b
        out[name] = ad.concat([a, b], axis=0)
    return out


def _prior_log_density(model, theta):
    return model.prior.log_density(theta)


def _up_to_constant(model, kind):
    if kind == "ba":
        try:
            model.prior.entropy()
            return False
        except CapabilityError:
            return True
    if kind == "pce":
        return False
    return not getattr(model.prior, "normalized", True)


@dataclass
class Terms:
    """Intermediate quantities of one integrand evaluation."""

    g: object                 # per-(outcome, sample) integrand
    loglik0: object = None    # log p(y | theta_0, xi)
    log_w: object = None      # (L+1, ...) log-weights, ace/vnmc only
    theta: dict = None
    dists: dict = None
    y: object = None


def integrand(model, xi, draws, kind="ace", guide=None, phi=None, critic=None, psi=None,
              loglik_xi=None):
    """Per-sample integrand ``g`` (before any outcome sum).

    :param loglik_xi: design used inside the likelihood terms of ``g``;
        defaults to ``xi``. Passing a detached copy removes the direct
        ``dg/dxi`` path while ``y`` still follows ``xi``.
    """
    if kind not in KINDS:
        raise ContractError(f"unknown bound kind {kind!r}")
    lxi = xi if loglik_xi is None else loglik_xi
    y = outcomes(model, xi, draws)
    theta0 = draws.theta0

    def loglik(th):
        if kind == "ace_lf":
            return critic.log_f(th, y, psi)
        return model.log_likelihood(y, th, lxi)

    if kind == "ba":
        dists = guide.condition(y, phi)
        g = guide.log_prob(dists, theta0)
        ll0 = model.log_likelihood(y, theta0, xi) if draws.summed else None
        return Terms(g=g, loglik0=ll0, dists=dists, y=y)

    L = draws.L
    if kind == "pce":
        if L == 0:
            ll0 = loglik(theta0)
            return Terms(g=ll0 * 0.0, loglik0=ll0, y=y)
        theta = _join(model, theta0, draws.contrast_theta)
        ll = loglik(theta)
        ll0 = ad.getitem(ll, 0)
        g = ll0 - ad.logsumexp(ll, axis=0) + np.log(L + 1)
        return Terms(g=g, loglik0=ll0, log_w=ll, theta=theta, y=y)

    if kind == "vnmc" and L < 1:
        raise ContractError("vnmc needs at least one contrast")
    dists = guide.condition(y, phi)
    if L == 0:
        theta = {k: ad.expand_dims(v, 0) for k, v in theta0.items()}
    else:
        if draws.contrast_noise is not None:
            contrasts = guide.rsample(dists, draws.contrast_noise)
        else:
            contrasts = draws.contrast_theta
        theta = _join(model, theta0, contrasts)
    ll = loglik(theta)
    log_w = _prior_log_density(model, theta) + ll - guide.log_prob(dists, theta)
    ll0 = ad.getitem(ll, 0)
    if kind == "vnmc":
        rest = ad.getitem(log_w, slice(1, None))
        g = ll0 - ad.logsumexp(rest, axis=0) + np.log(L)
    else:
        g = ll0 - ad.logsumexp(log_w, axis=0) + np.log(L + 1)
    if kind == "ace_lf" and draws.summed:
        ll0 = model.log_likelihood(y, theta0, xi)
    return Terms(g=g, loglik0=ll0, log_w=log_w, theta=theta, dists=dists, y=y)


def reduce_outcomes(terms, draws):
    """Per-sample values: identity, or ``sum_y p(y | theta_0) g(y)`` in summed mode."""
    if not draws.summed:
        return terms.g
    p = ad.exp(terms.loglik0)
    return ad.sum(p * terms.g, axis=0)


def _entropy_offset(model):
    try:
        return float(model.prior.entropy())
    except CapabilityError:
        return 0.0


def _check(g, kind):
    g = np.asarray(g)
    if np.any(np.isnan(g)) or np.any(g == -np.inf) or np.any(g == np.inf):
        bad = int(np.sum(~np.isfinite(g)))
        raise NumericalAbort(
            f"{kind}: {bad} non-finite integrand values (guide support mismatch?)",
            trace={"kind": kind, "nonfinite": bad})
    return g


def _chunk_size(model, N, L, chunk):
    if chunk is not None:
        return int(chunk)
    per = (L + 1) * max(1, int(np.prod(model.outcome_shape or (1,))))
    return int(max(1, min(N, 4_000_000 // per)))


def estimate(model, xi, N, L, rng, kind="ace", guide=None, critic=None, summed=False,
             chunk=None, contrast_layout="per_sample"):
    """Evaluate a bound with ``N`` outer samples in memory-bounded chunks.

    In summed mode the default draws fresh contrasts for every sample so the
    reported standard error is honest; ``per_outcome`` is cheaper but its
    samples share contrasts and its standard error is too small.
    """
    if N < 1:
        raise ContractError("N must be at least 1")
    if L < 0:
        raise ContractError("L must be non-negative")
    xi = ad.value_of(xi)
    step = _chunk_size(model, N, L, chunk)
    parts = []
    done = 0
    while done < N:
        n = min(step, N - done)
        d = sample_draws(model, xi, n, L, rng, guide=guide, kind=kind, summed=summed,
                         contrast_layout=contrast_layout)
        t = integrand(model, xi, d, kind=kind, guide=guide, critic=critic)
        parts.append(np.asarray(reduce_outcomes(t, d)).reshape(-1))
        done += n
    g = np.concatenate(parts)
    if kind == "ba":
        g = g + _entropy_offset(model)
    return BoundEstimate.from_samples(_check(g, kind), 0 if kind == "ba" else L, kind,
                                      _up_to_constant(model, kind))


def ba_value(model, guide, xi, N, rng, summed=False, chunk=None):
    """``E[log q(theta | y)] + H[p(theta)]``; a lower bound tight at the posterior."""
    return estimate(model, xi, N, 0, rng, "ba", guide=guide, summed=summed, chunk=chunk)


def ace_value(model, guide, xi, N, L, rng, summed=False, chunk=None):
    """Contrastive lower bound with ``theta_0`` in the denominator."""
    return estimate(model, xi, N, L, rng, "ace", guide=guide, summed=summed, chunk=chunk)


def pce_value(model, xi, N, L, rng, summed=False, chunk=None):
    """Contrastive lower bound with prior contrasts and no guide."""
    return estimate(model, xi, N, L, rng, "pce", summed=summed, chunk=chunk)


def vnmc_value(model, guide, xi, N, L, rng, summed=False, chunk=None):
    """Nested upper bound: ``theta_0`` left out of the denominator."""
    if L < 1:
        raise ContractError("vnmc needs L >= 1")
    return estimate(model, xi, N, L, rng, "vnmc", guide=guide, summed=summed, chunk=chunk)


def ace_lf_value(model, guide, critic, xi, N, L, rng, chunk=None):
    """Contrastive lower bound with a non-negative critic in place of the likelihood."""
    return estimate(model, xi, N, L, rng, "ace_lf", guide=guide, critic=critic, chunk=chunk)


# ---------------------------------------------------------------- critics
class Critic:
    """Unnormalised likelihood surrogate ``f(theta, y) = exp(net(features(theta, y)))``.

    With ``hidden=()`` the network is linear in the features.
    """

    def __init__(self, features, n_features, hidden=(), seed=0):
        self.features = features
        self.n_features = int(n_features)
        self.hidden = tuple(hidden)
        widths = (self.n_features,) + self.hidden + (1,)
        self.shapes = []
        for i in range(len(widths) - 1):
            self.shapes += [(widths[i + 1], widths[i]), (widths[i + 1],)]
        self.size = sum(int(np.prod(s)) for s in self.shapes)
        rng = np.random.default_rng(seed)
        parts = []
        for i, s in enumerate(self.shapes):
            if len(s) == 2 and i < len(self.shapes) - 2:
                parts.append(rng.standard_normal(s).reshape(-1) * np.sqrt(2.0 / s[1]))
            else:
                parts.append(np.zeros(int(np.prod(s))))
        self.psi = np.concatenate(parts)

    def log_f(self, theta, y, psi=None):
        psi = self.psi if psi is None else psi
        h = self.features(theta, y)
        i = 0
        layers = []
        for s in self.shapes:
            n = int(np.prod(s))
            layers.append(ad.reshape(ad.getitem(psi, slice(i, i + n)), s))
            i += n
        for k in range(0, len(layers), 2):
            h = ad.linear(h, layers[k]) + layers[k + 1]
            if k + 2 < len(layers):
                h = ad.relu(h)
        return ad.squeeze(h, -1)


class LikelihoodCritic:
    """The exact likelihood at a fixed design, scaled by ``exp(log_scale)``."""

    size = 0

    def __init__(self, model, xi, log_scale=0.0):
        self.model = model
        self.xi = ad.value_of(xi)
        self.log_scale = float(log_scale)
        self.psi = np.zeros(0)

    def log_f(self, theta, y, psi=None):
        return self.model.log_likelihood(y, theta, self.xi) + self.log_scale


# ---------------------------------------------------------------- exhaustive oracle
def exact_enumerate_ace(model, guide, xi, L):
    """Exact ACE, exact EIG and the expected-KL gap by full enumeration.

    Needs a model with ``latent_support()`` and ``enumerate_outcomes()``
    (at most 4 values each) and ``L <= 3``. Returns a dict with keys
    ``ace``, ``eig`` and ``kl_gap``.
    """
    thetas = np.asarray(model.latent_support(), dtype=np.float64)
    ys = model.enumerate_outcomes()
    if thetas.size > 4 or ys is None or len(ys) > 4 or L > 3:
        raise CapabilityError("exhaustive enumeration is limited to 4 latents, 4 outcomes and L <= 3")
    name = model.latent_names[0]
    xi = np.asarray(xi, dtype=np.float64)
    log_prior = np.asarray(model.prior.log_prob({name: thetas}))
    # lik[t, j] = p(y_j | theta_t)
    loglik = np.asarray(model.log_likelihood(ys[None, :], {name: thetas[:, None]}, xi))
    dists = guide.condition(ys)
    logq = np.asarray(guide.log_prob(dists, {name: thetas[:, None]}))  # [t, j]
    log_py = np.logaddexp.reduce(log_prior[:, None] + loglik, axis=0)
    log_post = log_prior[:, None] + loglik - log_py[None, :]
    eig = float(np.sum(np.exp(log_prior[:, None] + loglik) * (loglik - log_py[None, :])))

    K = thetas.size
    combos = np.array(np.meshgrid(*([np.arange(K)] * (L + 1)), indexing="ij")).reshape(L + 1, -1)
    ace = 0.0
    gap = 0.0
    for j in range(len(ys)):
        lw = log_prior[combos] + loglik[combos, j] - logq[combos, j]          # (L+1, C)
        g = loglik[combos[0], j] - np.logaddexp.reduce(lw, axis=0) + np.log(L + 1)
        # sampling law of (theta_0, ..., theta_L) given y_j
        log_law = log_post[combos[0], j] + logq[combos[1:], j].sum(0)
        ace += np.exp(log_py[j]) * np.sum(np.exp(log_law) * g)
        # mixture P over the L+1 positions of the posterior draw
        lq_all = logq[combos, j]                                                 # (L+1, C)
        terms = log_post[combos, j] + lq_all.sum(0)[None, :] - lq_all
        log_mix = np.logaddexp.reduce(terms, axis=0) - np.log(L + 1)
        log_prod = lq_all.sum(0)
        gap += np.exp(log_py[j]) * np.sum(np.exp(log_mix) * (log_mix - log_prod))
    return {"ace": float(ace), "eig": eig, "kl_gap": float(gap)}
