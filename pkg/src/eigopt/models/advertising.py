"""Budget allocation across correlated regions with a Gaussian prior.

``theta ~ N(0, Lambda0^{-1})`` with ``Lambda0 = (1 + 1/D) I - u u^T / D``, where
the first half of ``u`` equals ``alpha`` and the second half equals one.
Sales follow ``log y_i ~ N(theta_i xi_i, sigma^2 xi_i)`` and the design is a
non-negative budget vector summing to ``B = D / 2``.

The posterior precision is ``Lambda0 + diag(xi) / sigma^2``, so the EIG and
the optimal design are available in closed form.
"""
import numpy as np

from .. import autodiff as ad
from ..distributions import LogNormal, MultivariateNormalTriL
from ..errors import ContractError
from ..guides import Guide, Head
from ..transforms import BudgetSoftmax
from .base import ExperimentModel, IndependentPrior, Latent

VAR_FLOOR = 1e-12


def prior_precision(D, alpha):
    u = np.concatenate([np.full(D // 2, alpha), np.ones(D - D // 2)])
    return (1.0 + 1.0 / D) * np.eye(D) - np.outer(u, u) / D, u


def log_det_posterior_precision(xi, alpha, sigma=1.0):
    """``log det(Lambda0 + diag(xi) / sigma^2)`` via the rank-one determinant identity."""
    xi = np.asarray(xi, dtype=np.float64)
    D = xi.shape[-1]
    _, u = prior_precision(D, alpha)
    c = 1.0 + 1.0 / D + xi / sigma ** 2
    return np.log(c).sum(-1) + np.log1p(-(u * u / c).sum(-1) / D)


def advertising_eig(xi, alpha, sigma=1.0):
    xi = np.asarray(xi, dtype=np.float64)
    D = xi.shape[-1]
    lam0, _ = prior_precision(D, alpha)
    return 0.5 * (log_det_posterior_precision(xi, alpha, sigma) - np.linalg.slogdet(lam0)[1])


def advertising_optimal_design(D, alpha, sigma=1.0, budget=None, tol=1e-12):
    """Optimal budget split by bisection on the derivative of the block-constant EIG.

    Returns ``(xi_star, eig_star)``. The optimum puts ``t`` on each of the
    first ``D / 2`` regions and ``1 - t`` on the rest.
    """
    if D % 2:
        raise ContractError("the number of regions must be even")
    if budget is not None and not np.isclose(budget, D / 2):
        raise ContractError("the closed-form optimum assumes a budget of D / 2")
    lam0, _ = prior_precision(D, alpha)
    h = D // 2

    def design(t):
        return np.concatenate([np.full(h, t), np.full(h, 1.0 - t)])

    def slope(t):
        cov = np.linalg.inv(lam0 + np.diag(design(t)) / sigma ** 2)
        d = np.diag(cov)
        return d[:h].sum() - d[h:].sum()

    lo, hi = 0.0, 1.0
    if slope(lo) <= 0:
        t = lo
    elif slope(hi) >= 0:
        t = hi
    else:
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if slope(mid) > 0:
                lo = mid
            else:
                hi = mid
            if mid in (lo, hi) and hi - lo <= 4 * np.finfo(float).eps:
                break
        t = 0.5 * (lo + hi)
    xi = design(t)
    return xi, float(advertising_eig(xi, alpha, sigma))


class Advertising(ExperimentModel):
    name = "advertising"
    reparam_outcome = True

    def __init__(self, D=4, alpha=0.1, sigma=1.0, prior=None):
        if D % 2:
            raise ContractError("the number of regions must be even")
        self.D = int(D)
        self.alpha = float(alpha)
        self.sigma = float(sigma)
        self.budget = self.D / 2.0
        self.design_shape = (self.D,)
        self.outcome_shape = (self.D,)
        self.latent_shapes = {"theta": (self.D,)}
        self.precision, self.u = prior_precision(self.D, self.alpha)
        self.prior_tril = np.linalg.cholesky(np.linalg.inv(self.precision))
        super().__init__(prior or IndependentPrior([
            Latent("theta", MultivariateNormalTriL(np.zeros(self.D), self.prior_tril), (self.D,)),
        ]))

    def transform(self):
        return BudgetSoftmax(self.design_shape, self.budget)

    def _scale(self, xi):
        return self.sigma * ad.sqrt(ad.maximum(xi, VAR_FLOOR))

    def log_likelihood(self, y, theta, xi):
        return ad.sum(LogNormal(theta["theta"] * xi, self._scale(xi)).log_prob(y), axis=-1)

    def outcome_noise(self, rng, batch_shape):
        return rng.standard_normal(tuple(batch_shape) + (self.D,))

    def simulate(self, theta, xi, noise):
        return ad.exp(theta["theta"] * xi + self._scale(xi) * noise)

    def analytic_eig(self, xi):
        return advertising_eig(xi, self.alpha, self.sigma)

    def optimal_design(self):
        return advertising_optimal_design(self.D, self.alpha, self.sigma)[0]

    def uniform_design(self):
        return np.full(self.D, self.budget / self.D)

    def normalized_error(self, xi):
        """EIG shortfall scaled so the uniform budget scores one."""
        xs, es = advertising_optimal_design(self.D, self.alpha, self.sigma)
        z = es - self.analytic_eig(self.uniform_design())
        return float(abs(es - self.analytic_eig(xi)) / z)

    def features(self, y):
        return ad.log(y)

    def default_guide(self, seed=0, **kw):
        heads = [Head("theta", "mvn", (self.D,), 0.0, self.prior_tril)]
        return Guide(heads, "linear", features=self.features, n_features=self.D, seed=seed)

    def describe(self):
        return {"name": self.name, "D": self.D, "alpha": self.alpha, "sigma": self.sigma}
