import numpy as np
import pytest
from scipy import optimize, stats

from eigopt import autodiff as ad
from eigopt.errors import ConfigError, ContractError
from eigopt.models import (CES, Advertising, DeathProcess, Docking, GaussianToy, Regression,
                           TinyDiscrete, advertising_eig, advertising_optimal_design, make_model)

RNG = lambda s=0: np.random.default_rng(s)
CONTINUOUS = [GaussianToy(), Advertising(D=4), Regression(n=4, p=3), CES()]
ALL = CONTINUOUS + [DeathProcess(), Docking(n=10), TinyDiscrete()]


def _design(model, rng):
    return model.transform().forward(rng.standard_normal(model.transform().shape))


@pytest.mark.parametrize("model", ALL, ids=lambda m: m.name)
def test_simulated_outcomes_have_finite_likelihood(model):
    rng = RNG(1)
    xi = _design(model, rng)
    th = model.sample_prior(rng, (200,))
    y = model.sample_outcome(th, xi, rng)
    ll = np.asarray(ad.value_of(model.log_likelihood(y, th, xi)))
    assert ll.shape == (200,) and np.all(np.isfinite(ll))
    lp = np.asarray(ad.value_of(model.prior.log_prob(th)))
    np.testing.assert_allclose(np.asarray(model.prior.log_unnorm(th)) + model.prior.log_normalizer(),
                               lp, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("model", CONTINUOUS, ids=lambda m: m.name)
def test_design_gradient_of_log_likelihood(model):
    rng = RNG(2)
    for _ in range(50):
        xi = _design(model, rng)
        if model.name == "ces":
            xi = rng.uniform(5, 95, 6)
        th = model.sample_prior(rng, ())
        y = model.sample_outcome(th, xi, rng)
        tape = ad.Tape()
        x = tape.leaf(xi)
        g = ad.backward(model.log_likelihood(y, th, x))[x.index]
        fd = ad.finite_difference(lambda z: float(ad.value_of(model.log_likelihood(y, th, z))), xi, 1e-5)
        np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("model", CONTINUOUS, ids=lambda m: m.name)
def test_simulate_is_pathwise(model):
    rng = RNG(3)
    xi = _design(model, rng)
    th = model.sample_prior(rng, (5,))
    eps = model.outcome_noise(rng, (5,))
    y = np.asarray(ad.value_of(model.simulate(th, xi, eps)))
    assert np.all(np.isfinite(ad.value_of(model.log_likelihood(y, th, xi))))


def test_toy_eig():
    m = GaussianToy()
    assert m.analytic_eig(0.0) == 0.0
    np.testing.assert_allclose(m.analytic_eig(1.0), 0.5 * np.log(2.0))


def test_death_process_values():
    m = DeathProcess()
    th = {"theta": np.array(1.0)}
    y = m.sample_outcome(th, np.zeros(2), RNG())
    assert tuple(y) == (10.0, 0.0)
    np.testing.assert_allclose(m.log_likelihood(np.array([10.0, 0.0]), th, np.ones(2)), -10.0, atol=1e-12)
    outs = m.enumerate_outcomes()
    assert len(outs) == 66
    for xi in (np.array([0.3, 1.2]), np.array([2.0, 0.1])):
        lik = np.exp(np.asarray(m.log_likelihood(outs, th, xi)))
        np.testing.assert_allclose(lik.sum(), 1.0, atol=1e-12)
    assert np.all(m.sample_prior(RNG(), (1000,))["theta"] > 0)


def test_docking_midpoint():
    m = Docking(n=3)
    th = {"top": np.array(0.3), "bottom": np.array(0.05), "ee50": np.array(-40.0), "slope": np.array(-0.2)}
    p = np.asarray(m.probs(th, np.full(3, -40.0)))
    np.testing.assert_allclose(p, 0.05 + 0.25 / 2, rtol=1e-14)


def test_regression_likelihood_is_sum_of_normals():
    m = Regression(n=4, p=3)
    rng = RNG(4)
    xi = _design(m, rng)
    th = m.sample_prior(rng, ())
    y = m.sample_outcome(th, xi, rng)
    want = stats.norm(xi @ th["w"], th["sigma"]).logpdf(y).sum()
    np.testing.assert_allclose(m.log_likelihood(y, th, xi), want, rtol=1e-12)


def test_ces_supports():
    th = CES().sample_prior(RNG(), (2000,))
    assert np.all((th["rho"] > 0) & (th["rho"] < 1))
    np.testing.assert_allclose(th["alpha"].sum(-1), 1.0, atol=1e-12)
    assert np.all(th["alpha"] > 0) and np.all(th["u"] > 0)


def test_ces_outcomes_in_range():
    m = CES()
    rng = RNG(5)
    th = m.sample_prior(rng, (5000,))
    y = m.sample_outcome(th, rng.uniform(0, 100, 6), rng)
    assert np.all((y >= m.tau) & (y <= 1 - m.tau))


@pytest.mark.parametrize("D,alpha", [(2, 0.1), (4, 0.1), (8, 0.1), (4, 0.5), (6, 0.3)])
def test_advertising_optimum_against_numerical(D, alpha):
    xs, es = advertising_optimal_design(D, alpha)
    assert abs(xs.sum() - D / 2) < 1e-12
    r = optimize.minimize_scalar(lambda t: -advertising_eig(np.r_[np.full(D // 2, t), np.full(D // 2, 1 - t)], alpha),
                                 bounds=(0, 1), method="bounded", options={"xatol": 1e-10})
    np.testing.assert_allclose(es, -r.fun, rtol=1e-9)
    assert es >= advertising_eig(np.full(D, 0.5), alpha)
    # no random budget split beats the optimum
    rng = RNG(D)
    for _ in range(200):
        x = rng.dirichlet(np.ones(D)) * D / 2
        assert advertising_eig(x, alpha) <= es + 1e-12


def test_advertising_symmetric_split():
    xs, _ = advertising_optimal_design(4, 1.0)
    np.testing.assert_allclose(xs, 0.5, atol=1e-9)


def test_advertising_eig_matches_log_det():
    m = Advertising(D=4)
    xi = np.array([0.3, 0.4, 0.6, 0.7])
    post = m.precision + np.diag(xi)
    want = 0.5 * (np.linalg.slogdet(post)[1] - np.linalg.slogdet(m.precision)[1])
    np.testing.assert_allclose(m.analytic_eig(xi), want, rtol=1e-12)
    assert m.normalized_error(m.optimal_design()) == 0.0
    np.testing.assert_allclose(m.normalized_error(m.uniform_design()), 1.0)


def test_advertising_nmc_agrees_with_formula():
    from eigopt.harness.oracles import nmc_eig
    m = Advertising(D=2)
    xi = np.array([0.7, 0.3])
    est = nmc_eig(m, xi, 20000, 2000, RNG(6))
    assert abs(est.value - m.analytic_eig(xi)) < 4 * est.stderr + 0.01


def test_advertising_odd_dimension_rejected():
    with pytest.raises(ContractError):
        Advertising(D=3)


def test_make_model():
    assert isinstance(make_model("death", n=5), DeathProcess)
    with pytest.raises(ConfigError):
        make_model("nope")


@pytest.mark.parametrize("model", ALL, ids=lambda m: m.name)
def test_models_are_not_mutated_by_sampling(model):
    before = model.describe()
    model.sample_prior(RNG(), (3,))
    assert model.describe() == before
