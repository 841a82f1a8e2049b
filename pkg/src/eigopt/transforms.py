"""Maps from unconstrained parameters to feasible designs.

Optimisation runs on an unconstrained array ``lam``; ``forward(lam)`` yields
a design that satisfies the model's constraint exactly and is differentiable
when ``lam`` is a tape :class:`~eigopt.autodiff.Var`.
"""
import numpy as np
from scipy import special

from . import autodiff as ad
from .errors import ContractError


class ConstraintTransform:
    kind = "identity"

    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, lam):
        return lam

    def inverse(self, xi):
        return np.array(xi, dtype=np.float64)

    def satisfied(self, xi, tol=1e-10):
        return bool(np.all(np.isfinite(xi)))

    def initial(self, rng=None, jitter=0.0):
        """Starting point: ``lam = 0`` plus optional Gaussian jitter."""
        lam = np.zeros(self.shape)
        if jitter and rng is not None:
            lam = lam + jitter * rng.standard_normal(self.shape)
        return lam

    def describe(self):
        return {"kind": self.kind, "shape": list(self.shape)}


Identity = ConstraintTransform


class SoftplusPositive(ConstraintTransform):
    """``xi = softplus(lam)`` for designs on the positive half-line."""

    kind = "softplus"

    def forward(self, lam):
        return ad.softplus(lam)

    def inverse(self, xi):
        xi = np.asarray(xi, dtype=np.float64)
        if np.any(xi <= 0):
            raise ContractError("softplus inverse needs strictly positive values")
        return np.where(xi > 30, xi + np.log(-np.expm1(-xi)), np.log(np.expm1(np.minimum(xi, 30))))

    def satisfied(self, xi, tol=1e-10):
        return bool(np.all(np.asarray(xi) >= 0))


class IntervalSigmoid(ConstraintTransform):
    """``xi = lo + (hi - lo) * sigmoid(lam)`` for box constraints."""

    kind = "interval"

    def __init__(self, shape, lo, hi):
        super().__init__(shape)
        if not hi > lo:
            raise ContractError("interval needs hi > lo")
        self.lo = float(lo)
        self.hi = float(hi)

    def forward(self, lam):
        return self.lo + (self.hi - self.lo) * ad.sigmoid(lam)

    def inverse(self, xi):
        u = (np.asarray(xi, dtype=np.float64) - self.lo) / (self.hi - self.lo)
        if np.any(u <= 0) or np.any(u >= 1):
            raise ContractError("interval inverse needs points strictly inside the box")
        return special.logit(u)

    def satisfied(self, xi, tol=1e-10):
        xi = np.asarray(xi)
        return bool(np.all(xi >= self.lo - tol) and np.all(xi <= self.hi + tol))

    def describe(self):
        return {"kind": self.kind, "shape": list(self.shape), "lo": self.lo, "hi": self.hi}


class BudgetSoftmax(ConstraintTransform):
    """``xi = budget * softmax(lam)``: non-negative entries summing to the budget."""

    kind = "budget"

    def __init__(self, shape, budget):
        super().__init__(shape)
        if budget <= 0:
            raise ContractError("budget must be positive")
        self.budget = float(budget)

    def forward(self, lam):
        return self.budget * ad.exp(lam - ad.logsumexp(lam, axis=-1, keepdims=True))

    def inverse(self, xi):
        xi = np.asarray(xi, dtype=np.float64)
        if np.any(xi <= 0):
            raise ContractError("budget inverse needs strictly positive entries")
        lam = np.log(xi / self.budget)
        return lam - lam.mean(-1, keepdims=True)

    def satisfied(self, xi, tol=1e-10):
        xi = np.asarray(xi)
        return bool(np.all(xi >= 0) and np.all(np.abs(xi.sum(-1) - self.budget) <= tol * max(1.0, self.budget)))

    def describe(self):
        return {"kind": self.kind, "shape": list(self.shape), "budget": self.budget}


class RowL1Normalize(ConstraintTransform):
    """Rows scaled to unit L1 norm: ``xi_ij = lam_ij / sum_j |lam_ij|``.

    The zero vector is not a valid starting point here, so :meth:`initial`
    draws standard normal rows.
    """

    kind = "row_l1"

    def forward(self, lam):
        return lam / ad.sum(ad.abs(lam), axis=-1, keepdims=True)

    def inverse(self, xi):
        xi = np.asarray(xi, dtype=np.float64)
        if np.any(np.abs(xi).sum(-1) == 0):
            raise ContractError("rows of a unit-L1 design cannot be zero")
        return xi / np.abs(xi).sum(-1, keepdims=True)

    def satisfied(self, xi, tol=1e-10):
        return bool(np.all(np.abs(np.abs(np.asarray(xi)).sum(-1) - 1.0) <= tol))

    def initial(self, rng=None, jitter=0.0):
        rng = rng if rng is not None else np.random.default_rng(0)
        return rng.standard_normal(self.shape)


def from_description(desc):
    kind = desc["kind"]
    shape = desc["shape"]
    if kind == "identity":
        return ConstraintTransform(shape)
    if kind == "softplus":
        return SoftplusPositive(shape)
    if kind == "interval":
        return IntervalSigmoid(shape, desc["lo"], desc["hi"])
    if kind == "budget":
        return BudgetSoftmax(shape, desc["budget"])
    if kind == "row_l1":
        return RowL1Normalize(shape)
    raise ContractError(f"unknown transform kind {kind!r}")
