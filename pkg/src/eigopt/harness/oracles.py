"""Evaluation oracles: nested Monte Carlo, bound traps and design error."""
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .. import autodiff as ad
from .. import bounds as bd
from ..errors import CapabilityError, ContractError
from ..optim import LRSchedule, Objective, sga_run
from ..transforms import ConstraintTransform


@dataclass
class Estimate:
    value: float
    stderr: float
    n: int

    def to_dict(self):
        return {"value": self.value, "stderr": self.stderr, "n": self.n}


def nmc_eig(model, xi, N, L, rng, chunk=None):
    """Nested Monte Carlo EIG estimate with fresh inner draws per outer sample.

    ``log p(y | theta_0) - log (1/L) sum_l p(y | theta_l)``; biased upwards
    for finite ``L``.
    """
    if N < 1 or L < 1:
        raise ContractError("nmc needs N >= 1 and L >= 1")
    xi = np.asarray(xi, dtype=np.float64)
    chunk = chunk or max(1, min(N, int(4e6 // max(L, 1))))
    vals = []
    done = 0
    while done < N:
        n = min(chunk, N - done)
        theta0 = model.sample_prior(rng, (n,))
        y = model.sample_outcome(theta0, xi, rng)
        inner = model.sample_prior(rng, (L, n))
        ll0 = np.asarray(ad.value_of(model.log_likelihood(y, theta0, xi)))
        lli = np.asarray(ad.value_of(model.log_likelihood(y, inner, xi)))
        vals.append(ll0 - special.logsumexp(lli, axis=0) + np.log(L))
        done += n
    g = np.concatenate(vals)
    return Estimate(float(g.mean()), float(g.std(ddof=1) / np.sqrt(len(g))) if len(g) > 1 else np.nan, len(g))


@dataclass
class TrapResult:
    """ACE lower and VNMC upper estimates of the EIG at one fixed design."""

    lower: float
    lower_se: float
    upper: float
    upper_se: float
    design: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def inverted(self):
        """Lower above upper beyond two standard errors each (evaluation failure)."""
        return self.lower - 2 * self.lower_se > self.upper + 2 * self.upper_se

    def brackets(self, value, k=2.0):
        return self.lower - k * self.lower_se <= value <= self.upper + k * self.upper_se

    def to_dict(self):
        return {"lower": self.lower, "lower_se": self.lower_se, "upper": self.upper,
                "upper_se": self.upper_se, "design": np.asarray(self.design).tolist(),
                "inverted": bool(self.inverted), "meta": self.meta}


def beats(a, b):
    """Design of trap ``a`` is certainly better than that of ``b``: ``lower_a > upper_b``."""
    return a.lower > b.upper


@dataclass
class TrapSpec:
    """Guide training and evaluation sizes of a trap."""

    train_steps: int = 2000
    train_N: int = 10
    train_L: int = 10
    lr: float = 1e-3
    lr_final: float = None
    eval_N: int = 10000
    eval_L: int = 500
    summed: bool = False


def bound_trap(model, xi, spec=None, seed=0, guide=None):
    """Train a fresh guide at fixed ``xi`` on ACE, then evaluate ACE and VNMC.

    :param guide: starting guide (copied); default ``model.default_guide``.
    """
    spec = spec or TrapSpec()
    xi = np.asarray(xi, dtype=np.float64)
    ss = np.random.SeedSequence(seed)
    train_seed, eval_ss = ss.spawn(2)
    g = (guide or model.default_guide(seed=seed)).copy()
    trace = None
    if spec.train_steps > 0:
        obj = Objective("ace", "none", "reparam" if g.reparameterizable else "none",
                        spec.train_N, spec.train_L)
        trace = sga_run(model, obj, g, steps=spec.train_steps,
                        seed=int(train_seed.generate_state(1)[0]),
                        schedule=LRSchedule(spec.lr, spec.lr_final, spec.train_steps),
                        transform=ConstraintTransform(xi.shape), lam0=xi, fix_design=True,
                        design_every=0)
    rng = np.random.default_rng(eval_ss)
    lo = bd.ace_value(model, g, xi, spec.eval_N, spec.eval_L, rng, summed=spec.summed)
    hi = bd.vnmc_value(model, g, xi, spec.eval_N, spec.eval_L, rng, summed=spec.summed)
    meta = {"train_steps": spec.train_steps, "eval_N": spec.eval_N, "eval_L": spec.eval_L,
            "train_final_bound": float(trace.smoothed[-1]) if trace is not None else None}
    return TrapResult(lo.value, lo.stderr, hi.value, hi.stderr, xi, meta)


def design_error(xi, xi_star):
    """Euclidean distance between a design and the optimum in constrained space."""
    if xi_star is None:
        raise CapabilityError("no analytic optimum available")
    return float(np.linalg.norm(np.asarray(xi, dtype=np.float64) - np.asarray(xi_star, dtype=np.float64)))


def model_design_error(model, xi):
    return design_error(xi, model.optimal_design())
