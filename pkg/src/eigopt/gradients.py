"""Gradient estimators for the bounds in :mod:`eigopt.bounds`.

Each estimator builds a *surrogate* scalar on a fresh tape whose gradient is
the desired estimate, then runs one backward pass:

``score``
    ``mean(g + stop(g - b) * log p(y | theta_0, xi))``, where ``y`` is a
    plain sample and ``b`` an optional batch-mean baseline.
``reparam``
    ``mean(g)`` with ``y = simulate(theta_0, xi, eps)`` recorded on the tape.
``rb``
    ``mean(sum_y p(y | theta_0, xi) g(y))`` over an enumerated outcome set.

Guide parameters get the plain pathwise gradient of the same surrogate, or
with ``phi_mode="dreg"`` a doubly reparameterised estimate computed on a
second tape. Design gradients are reported with respect to the
unconstrained parameters ``lam`` that the transform maps to ``xi``.
"""
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import bounds as bd
from .errors import CapabilityError, ContractError
from .transforms import ConstraintTransform

XI_MODES = ("score", "reparam", "rb", "none")
PHI_MODES = ("reparam", "dreg", "none")


@dataclass
class GradEstimate:
    """Gradient estimate plus the bound value from the same draws."""

    xi_grad: np.ndarray
    phi_grad: np.ndarray
    tag: str
    n: int
    L: int
    value: float
    psi_grad: np.ndarray = None


def _transform(transform, lam):
    return transform if transform is not None else ConstraintTransform(np.shape(lam))


def gradient(model, lam, N, L, rng, kind="ace", guide=None, transform=None, xi_mode="score",
             phi_mode="reparam", critic=None, drop_dg_dxi=False, baseline=False, draws=None,
             contrast_layout="per_outcome"):
    """Joint gradient estimate of a bound w.r.t. ``lam`` and the guide parameters.

    :param lam: unconstrained design parameters (``xi`` itself when
        ``transform`` is None).
    :param kind: ``ace``, ``pce``, ``ba`` or ``ace_lf``.
    :param xi_mode: ``score``, ``reparam``, ``rb`` or ``none``.
    :param phi_mode: ``reparam``, ``dreg`` or ``none``.
    :param drop_dg_dxi: evaluate the likelihood terms of ``g`` at a detached
        design so only the score term carries design dependence.
    :param baseline: subtract the batch mean of ``g`` in the score term.
    :param draws: pre-drawn random inputs (for common-random-number checks).
    """
    if kind not in ("ace", "pce", "ba", "ace_lf", "vnmc"):
        raise ContractError(f"no gradient estimator for bound {kind!r}")
    if xi_mode not in XI_MODES or phi_mode not in PHI_MODES:
        raise ContractError(f"unknown gradient modes {xi_mode!r}/{phi_mode!r}")
    if xi_mode == "reparam" and not model.reparam_outcome:
        raise CapabilityError(f"{model.name} has discrete outcomes; use rb or score")
    if xi_mode == "rb" and model.enumerate_outcomes() is None:
        raise CapabilityError(f"{model.name} outcomes cannot be enumerated")
    uses_guide = kind in ("ace", "ba", "ace_lf", "vnmc")
    if kind == "pce" or guide is None:
        phi_mode = "none"
    if phi_mode == "dreg" and (kind != "ace" or not guide.reparameterizable):
        raise CapabilityError("double reparameterisation needs ace with a reparameterisable guide")
    tr = _transform(transform, lam)
    lam = np.asarray(lam, dtype=np.float64)

    tape = ad.Tape()
    lam_v = tape.leaf(lam) if xi_mode != "none" else lam
    xi = tr.forward(lam_v)
    xi_val = ad.value_of(xi)
    phi_v = tape.leaf(guide.phi) if (uses_guide and phi_mode == "reparam") else None
    psi_v = tape.leaf(critic.psi) if (kind == "ace_lf" and critic is not None and critic.size) else None

    if draws is None:
        draws = bd.sample_draws(model, xi_val, N, L, rng, guide=guide, kind=kind,
                                reparam=(xi_mode == "reparam"), summed=(xi_mode == "rb"),
                                contrast_layout=contrast_layout)
    loglik_xi = xi_val if drop_dg_dxi else None
    terms = bd.integrand(model, xi, draws, kind=kind, guide=guide, phi=phi_v, critic=critic,
                         psi=psi_v, loglik_xi=loglik_xi)
    h = bd.reduce_outcomes(terms, draws)
    bd._check(ad.value_of(h), kind)
    n = int(np.size(ad.value_of(h)))
    surrogate = ad.sum(h) / n
    if xi_mode == "score":
        ll0 = model.log_likelihood(terms.y, draws.theta0, xi)
        coef = ad.value_of(terms.g)
        if baseline:
            coef = coef - coef.mean()
        surrogate = surrogate + ad.sum(coef * ll0) / n
    value = float(np.mean(ad.value_of(h)))
    if kind == "ba":
        value += bd._entropy_offset(model)

    xi_grad = phi_grad = psi_grad = None
    if ad.is_var(surrogate):
        grads = ad.backward(surrogate)
        if xi_mode != "none":
            xi_grad = grads[lam_v.index]
        if phi_v is not None:
            phi_grad = grads[phi_v.index]
        if psi_v is not None:
            psi_grad = grads[psi_v.index]
    else:
        if xi_mode != "none":
            xi_grad = np.zeros_like(lam)
        if phi_v is not None:
            phi_grad = np.zeros_like(guide.phi)
    if phi_mode == "dreg":
        phi_grad = dreg_phi_gradient(model, guide, xi_val, draws, terms)
    tag = f"{kind}/{xi_mode}/{phi_mode}" + ("/drop" if drop_dg_dxi else "") + ("/baseline" if baseline else "")
    return GradEstimate(xi_grad, phi_grad, tag, draws.n, L, value, psi_grad)


def dreg_phi_gradient(model, guide, xi, draws, terms=None):
    """Doubly reparameterised guide gradient of the ACE bound.

    Surrogate per outer sample::

        stop(w0~) log q_phi(theta_0 | y) - sum_{l>0} stop(wl~^2) log w_l(theta_l(phi))

    where ``w~`` are self-normalised weights and ``log w_l`` is evaluated
    with the guide parameters held fixed, so only the sampling path of
    ``theta_l`` carries the gradient.
    """
    if draws.contrast_noise is None and draws.L > 0:
        raise CapabilityError("double reparameterisation needs guide noise draws")
    y = ad.value_of(bd.outcomes(model, xi, draws))
    theta0 = draws.theta0
    if terms is None:
        terms = bd.integrand(model, xi, draws, kind="ace", guide=guide)
    log_w = ad.value_of(terms.log_w)
    wn = np.exp(log_w - ad.value_of(ad.logsumexp(log_w, axis=0))[None])

    tape = ad.Tape()
    phi_v = tape.leaf(guide.phi)
    dists = guide.condition(y, phi_v)
    s = wn[0] * guide.log_prob(dists, theta0)
    if draws.L > 0:
        contrasts = guide.rsample(dists, draws.contrast_noise)
        fixed = guide.condition(y, guide.phi)
        lw = (model.prior.log_density(contrasts) + model.log_likelihood(y, contrasts, xi)
              - guide.log_prob(fixed, contrasts))
        s = s - ad.sum(wn[1:] ** 2 * lw, axis=0)
    if draws.summed:
        p = np.exp(ad.value_of(terms.loglik0))
        s = ad.sum(p * s, axis=0)
    n = int(np.size(ad.value_of(s)))
    grads = ad.backward(ad.sum(s) / n)
    return grads[phi_v.index]


# ---------------------------------------------------------------- named estimators
def grad_ba(model, guide, lam, N, rng, mode="score", transform=None, baseline=False, draws=None):
    """BA gradients: guide score term for ``phi``; score, pathwise or summed for ``xi``."""
    return gradient(model, lam, N, 0, rng, kind="ba", guide=guide, transform=transform,
                    xi_mode=mode, baseline=baseline, draws=draws)


def grad_ace_score(model, guide, lam, N, L, rng, drop_dg_dxi=False, baseline=False,
                   transform=None, draws=None):
    return gradient(model, lam, N, L, rng, kind="ace", guide=guide, transform=transform,
                    xi_mode="score", drop_dg_dxi=drop_dg_dxi, baseline=baseline, draws=draws)


def grad_ace_reparam(model, guide, lam, N, L, rng, transform=None, phi_mode="reparam", draws=None):
    return gradient(model, lam, N, L, rng, kind="ace", guide=guide, transform=transform,
                    xi_mode="reparam", phi_mode=phi_mode, draws=draws)


def grad_rao_blackwell(model, guide, lam, N, L, rng, kind="ace", transform=None,
                       phi_mode="reparam", draws=None):
    return gradient(model, lam, N, L, rng, kind=kind, guide=guide, transform=transform,
                    xi_mode="rb", phi_mode=phi_mode, draws=draws)


def grad_phi_double_reparam(model, guide, xi, N, L, rng, draws=None):
    """Guide gradient only, by double reparameterisation, at a fixed design."""
    xi = np.asarray(xi, dtype=np.float64)
    if draws is None:
        draws = bd.sample_draws(model, xi, N, L, rng, guide=guide, kind="ace")
    terms = bd.integrand(model, xi, draws, kind="ace", guide=guide)
    g = dreg_phi_gradient(model, guide, xi, draws, terms)
    value = float(np.mean(ad.value_of(bd.reduce_outcomes(terms, draws))))
    return GradEstimate(None, g, "ace/none/dreg", draws.n, L, value)


def grad_pce(model, lam, N, L, rng, mode="score", transform=None, baseline=False, draws=None):
    return gradient(model, lam, N, L, rng, kind="pce", transform=transform, xi_mode=mode,
                    baseline=baseline, draws=draws)


def likelihood_scores(model, xi, N, rng):
    """Per-sample ``d/dxi log p(y | theta, xi)`` for ``(theta, y)`` drawn at ``xi``.

    Returns an array of shape ``(N, *design_shape)``.
    """
    xi = np.asarray(xi, dtype=np.float64)
    theta = model.sample_prior(rng, (N,))
    y = model.sample_outcome(theta, xi, rng)
    tape = ad.Tape()
    xb = tape.leaf(np.broadcast_to(xi, (N,) + xi.shape).copy())
    ll = model.log_likelihood(y, theta, xb)
    return ad.backward(ad.sum(ll))[xb.index]
