"""Executable invariant checks: quick assertions over every module.

Each check is a zero-argument function that raises ``AssertionError`` on
failure. :func:`run_selftest` runs all of them and reports one line each.
"""
import os
import tempfile
import time

import numpy as np

from .. import autodiff as ad
from .. import bounds as bd
from .. import distributions as dist
from .. import gradients as gr
from ..models import Advertising, CES, DeathProcess, Docking, GaussianToy, Regression, TinyDiscrete
from ..models import advertising_optimal_design
from ..optim import AdamState, adam_step
from ..sequential import ExperimentHistory, family_dists, unnorm_posterior_density, vi_fit_posterior
from ..transforms import BudgetSoftmax, IntervalSigmoid, RowL1Normalize
from .oracles import design_error

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


def _close(a, b, tol, what=""):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    assert np.all(np.abs(a - b) <= tol), f"{what}: {a} vs {b} (tol {tol})"


# ---------------------------------------------------------------- autodiff
@check
def ad_forward_values():
    _close(ad.sigmoid(0.0), 0.5, 0, "sigmoid(0)")
    a = 1.7
    _close(ad.logsumexp(np.array([a, a])), a + np.log(2), 1e-15, "logsumexp(a, a)")
    v = np.array([1.0, -2.0, 3.0])
    _close(ad.matvec(np.eye(3), v), v, 0, "identity matvec")


@check
def ad_backward_values():
    t = ad.Tape()
    x = t.leaf(np.array(0.0))
    _close(ad.backward(ad.sigmoid(x))[x.index], 0.25, 1e-15, "sigmoid'(0)")
    t = ad.Tape()
    v = t.leaf(np.full(5, 0.3))
    _close(ad.backward(ad.logsumexp(v))[v.index], np.full(5, 0.2), 1e-15, "logsumexp grad")


@check
def ad_finite_difference():
    _close(ad.finite_difference(lambda x: float(x * x), np.array(3.0), 1e-4), 6.0, 1e-7, "d x^2")
    _close(ad.finite_difference(lambda x: float(np.exp(x)), np.array(0.0), 1e-4), 1.0, 1e-7, "d exp")


# ---------------------------------------------------------------- distributions
@check
def dist_log_prob_values():
    _close(dist.Binomial(10, 1.0).log_prob(10.0), 0.0, 1e-12, "Binomial(10, 1) at 10")
    for x in (0.5, 1.0, 2.0):
        _close(dist.LogNormal(0.0, 1.0).log_prob(x), dist.Normal(0.0, 1.0).log_prob(np.log(x)) - np.log(x),
               1e-12, "lognormal change of variables")


@check
def dist_samples():
    rng = np.random.default_rng(0)
    assert np.all(dist.Bernoulli(0.0).sample(rng, (100,)) == 0), "Bernoulli(0) draws"
    d = dist.Dirichlet(np.ones(3)).sample(rng, (1000,))
    assert np.all(d >= 0) and np.all(np.abs(d.sum(-1) - 1) <= 1e-12), "Dirichlet simplex"
    c = dist.CensoredSigmoidNormal(0.0, 10.0).sample(rng, (10000,))
    assert np.all(c >= 0.005) and np.all(c <= 0.995), "censored clamp"


@check
def dist_rsample_location():
    t = ad.Tape()
    mu = t.leaf(np.array(0.3))
    x = dist.Normal(mu, 2.0).rsample(np.array(0.7))
    _close(ad.value_of(x), 0.3 + 2.0 * 0.7, 1e-15, "rsample value")
    _close(ad.backward(x)[mu.index], 1.0, 0, "rsample d/dmu")


@check
def dist_entropies():
    _close(dist.Beta(1.0, 1.0).entropy(), 0.0, 1e-12, "Beta(1,1) entropy")
    _close(dist.Normal(0.0, 1.0).entropy(), 0.5 * np.log(2 * np.pi * np.e), 1e-12, "Normal entropy")
    _close(dist.Exponential(1.0).entropy(), 1.0, 1e-12, "Exponential entropy")


@check
def dist_scores():
    s = dist.score(dist.Normal(0.4, 1.0), np.array([1.5]), names=["loc"])
    _close(s["loc"], [1.1], 1e-12, "Normal score")
    s = dist.score(dist.Bernoulli(0.3), np.array([1.0]))
    _close(s["probs"], [1 / 0.3], 1e-12, "Bernoulli score")
    rng = np.random.default_rng(1)
    for d, names in ((dist.Normal(0.5, 2.0), None), (dist.Bernoulli(0.3), None),
                     (dist.Gamma(2.0, 1.5), None), (dist.Beta(2.0, 3.0), None)):
        x = d.sample(rng, (100000,))
        for name, g in dist.score(d, x, names).items():
            m, se = g.mean(0), g.std(0) / np.sqrt(len(g))
            assert np.all(np.abs(m) <= 4 * se), f"score identity {type(d).__name__}.{name}"


# ---------------------------------------------------------------- models
@check
def model_supports():
    rng = np.random.default_rng(0)
    assert np.all(DeathProcess().sample_prior(rng, (1000,))["theta"] > 0), "death theta > 0"
    th = CES().sample_prior(rng, (1000,))
    assert np.all((th["rho"] > 0) & (th["rho"] < 1)), "ces rho"
    assert np.all(np.abs(th["alpha"].sum(-1) - 1) <= 1e-12), "ces alpha simplex"


@check
def model_likelihood_values():
    m = Docking(n=1)
    th = {"top": np.array(0.3), "bottom": np.array(0.05), "ee50": np.array(-40.0), "slope": np.array(-0.1)}
    _close(ad.value_of(m.probs(th, np.array([-40.0]))), [0.05 + 0.25 / 2], 1e-12, "docking midpoint")
    d = DeathProcess()
    y = d.sample_outcome({"theta": np.array(1.3)}, np.zeros(2), np.random.default_rng(0))
    _close(y, [10, 0], 0, "death at xi = 0")
    r = Regression(n=3, p=2)
    th = r.sample_prior(np.random.default_rng(2), ())
    xi = np.array([[0.5, -0.5], [0.2, 0.8], [-1.0, 0.0]])
    y = np.array([0.1, -0.3, 2.0])
    direct = dist.Normal(xi @ th["w"], th["sigma"]).log_prob(y).sum()
    _close(r.log_likelihood(y, th, xi), direct, 1e-12, "regression composition")


@check
def model_unnormalised_prior():
    lat = CES().prior["rho"]
    _close(lat.log_unnormalized(np.array([0.2, 0.7])), [0.0, 0.0], 1e-12, "Beta(1,1) gamma")
    _close(lat.log_normalizer(), 0.0, 1e-12, "Beta(1,1) A")
    toy = GaussianToy()
    th = np.array([0.0, 1.5])
    _close(toy.prior.log_unnorm({"theta": th}), -0.5 * th ** 2, 1e-15, "toy gamma")
    _close(toy.prior.log_normalizer(), -0.5 * np.log(2 * np.pi), 1e-15, "toy log A")


@check
def model_analytic_eig():
    _close(GaussianToy().analytic_eig(0.0), 0.0, 0, "toy at 0")
    xs, _ = advertising_optimal_design(4, 1.0)
    _close(xs, np.full(4, 0.5), 1e-9, "symmetric advertising optimum")
    for D in (2, 4, 8):
        for alpha in (0.1, 0.5, 1.0):
            m = Advertising(D=D, alpha=alpha)
            assert m.analytic_eig(m.optimal_design()) >= m.analytic_eig(m.uniform_design()) - 1e-12


# ---------------------------------------------------------------- guides
@check
def guide_contracts():
    d = DeathProcess()
    g = d.default_guide(seed=3)
    g2 = d.default_guide(seed=3)
    assert np.array_equal(g.phi, g2.phi), "same-seed init"
    q = g.condition(d.enumerate_outcomes())["theta"]
    _close(ad.value_of(q.loc), 0.0, 1e-12, "initial tabular loc")
    _close(ad.value_of(q.scale), 1.0, 1e-12, "initial tabular scale")
    eps = np.array([0.3])
    _close(ad.value_of(q.rsample(eps))[:1], np.exp(0.0 + 1.0 * 0.3), 1e-12, "lognormal rsample")
    r = Regression(n=3, p=2)
    gr_ = r.default_guide(seed=0, hidden=(8,))
    parts = {k: np.array(ad.value_of(v)) for k, v in gr_.unpack(gr_.phi).items()}
    parts["W0"][:] = 0.0
    parts["Wout"][:] = 0.0
    gr_.phi = gr_.pack(parts)
    ys = np.random.default_rng(0).standard_normal((4, 3))
    raw = ad.value_of(gr_.raw(ys))
    _close(raw, np.broadcast_to(parts["bout"], raw.shape), 1e-12, "zero-weight mlp")
    th = r.sample_prior(np.random.default_rng(1), (4,))
    ds = gr_.condition(ys)
    _close(gr_.log_prob(ds, th), ds["w"].log_prob(th["w"]) + ds["sigma"].log_prob(th["sigma"]), 1e-12,
           "mean-field factorisation")


# ---------------------------------------------------------------- bounds
@check
def bound_trivial_values():
    toy = GaussianToy()
    rng = np.random.default_rng(0)
    prior_guide = toy.default_guide()          # zero weights: q = prior for every y
    ba = bd.ba_value(toy, prior_guide, 1.0, 20000, rng)
    assert abs(ba.value) <= 4 * ba.stderr + 1e-12, f"BA with prior guide {ba.value} +- {ba.stderr}"
    d = bd.sample_draws(toy, 1.0, 100, 0, rng, kind="pce")
    g = ad.value_of(bd.integrand(toy, 1.0, d, kind="pce").g)
    assert np.all(g == 0.0), "pce with L=0"
    crit = bd.LikelihoodCritic(toy, 1.0)
    d = bd.sample_draws(toy, 1.0, 200, 5, rng, guide=prior_guide)
    a = ad.value_of(bd.integrand(toy, 1.0, d, kind="ace", guide=prior_guide).g)
    b = ad.value_of(bd.integrand(toy, 1.0, d, kind="ace_lf", guide=prior_guide, critic=crit).g)
    assert np.array_equal(a, b), "critic = likelihood"
    tiny = TinyDiscrete()
    xi = np.log(4.0)
    for L in range(4):
        r = bd.exact_enumerate_ace(tiny, tiny.exact_guide(xi), xi, L)
        _close(r["ace"], r["eig"], 1e-12, f"exact posterior gap at L={L}")


# ---------------------------------------------------------------- gradients
@check
def gradient_trivial_values():
    toy = GaussianToy()
    g = toy.default_guide()
    for mode in ("score", "reparam"):
        est = gr.grad_pce(toy, np.array(1.0), 50, 0, np.random.default_rng(0), mode=mode)
        _close(est.xi_grad, 0.0, 0, f"pce L=0 {mode} gradient")
    rng = np.random.default_rng(4)
    draws = bd.sample_draws(toy, 1.0, 200, 0, rng, guide=g)
    a = gr.gradient(toy, np.array(1.0), 200, 0, rng, kind="ace", guide=g, xi_mode="none",
                    phi_mode="dreg", draws=draws).phi_grad
    b = gr.gradient(toy, np.array(1.0), 200, 0, rng, kind="ba", guide=g, xi_mode="none",
                    draws=draws).phi_grad
    _close(a, b, 1e-12, "dreg at L=0 equals BA guide gradient")
    vals = []
    for _ in range(200):
        vals.append(gr.grad_ba(toy, g, np.array(1.0), 50, rng).xi_grad)
    vals = np.array(vals)
    assert abs(vals.mean()) <= 4 * vals.std() / np.sqrt(len(vals)), "prior guide: zero design gradient"


# ---------------------------------------------------------------- optimizer / transforms
@check
def adam_trivial():
    st = AdamState({"x": (3,)})
    p, _ = adam_step(st, {"x": np.zeros(3)}, {"x": np.array([2.0, -0.5, 1e-3])}, 0.1)
    _close(p["x"], 0.1 * np.sign([2.0, -0.5, 1e-3]), 1e-4, "first Adam step")
    st = AdamState({"x": (2,)})
    p = {"x": np.array([1.0, 2.0])}
    for _ in range(50):
        p, _ = adam_step(st, p, {"x": np.zeros(2)}, 0.1)
    _close(p["x"], [1.0, 2.0], 0, "zero gradient")


@check
def transform_trivial():
    _close(BudgetSoftmax((4,), 2.0).forward(np.zeros(4)), np.full(4, 0.5), 1e-15, "budget midpoint")
    _close(IntervalSigmoid((), -75.0, 0.0).forward(np.array(0.0)), -37.5, 0, "interval midpoint")
    rng = np.random.default_rng(0)
    t = RowL1Normalize((5, 4))
    for _ in range(100):
        x = t.forward(rng.standard_normal((5, 4)))
        _close(np.abs(x).sum(-1), 1.0, 1e-12, "row l1")


# ---------------------------------------------------------------- sequential
@check
def sequential_trivial():
    toy = GaussianToy()
    fit = vi_fit_posterior(toy, ExperimentHistory(), steps=600, rng=np.random.default_rng(0))
    q = family_dists(fit.family)["theta"]
    _close(ad.value_of(q.loc), 0.0, 0.05, "empty-history mean")
    _close(ad.value_of(q.scale), 1.0, 0.05, "empty-history scale")
    th = {"theta": np.linspace(-2, 2, 5)}
    _close(unnorm_posterior_density(toy, ExperimentHistory(), th), toy.prior.log_prob(th), 0,
           "gamma at t = 0")
    sm = fit.smoothed
    assert sm[-1] >= sm[len(sm) // 10] - 0.05, "elbo trend"


# ---------------------------------------------------------------- harness
@check
def design_error_trivial():
    m = Advertising(D=4)
    xs = m.optimal_design()
    assert design_error(xs, xs) == 0.0
    block = np.array([0.3, 0.3, 0.7, 0.7])
    perm = block[[1, 0, 3, 2]]
    assert design_error(block, xs) == design_error(perm, xs)


@check
def cli_run_contract():
    from .cli import main
    with tempfile.TemporaryDirectory() as tmp:
        code = main(["run", "--preset", "advertising", "--dim", "4", "--bound", "ace", "--steps", "50",
                     "--seed", "0", "--out", tmp, "--quiet"])
        assert code == 0, f"exit code {code}"
        assert os.path.exists(os.path.join(tmp, "trace.csv")), "trace csv"
        assert os.path.exists(os.path.join(tmp, "design.json")), "design json"


def run_selftest(verbose=True, stream=None):
    """Run every check; returns the number of failures."""
    import sys
    stream = stream or sys.stdout
    failures = 0
    for fn in CHECKS:
        t0 = time.perf_counter()
        try:
            fn()
            status = "PASS"
            msg = ""
        except Exception as exc:  # report and continue
            failures += 1
            status = "FAIL"
            msg = f"  {type(exc).__name__}: {exc}"
        if verbose:
            stream.write(f"{status} {fn.__name__} ({time.perf_counter() - t0:.2f}s){msg}\n")
    return failures
