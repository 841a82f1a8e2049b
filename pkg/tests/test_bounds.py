import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eigopt import bounds as bd
from eigopt.errors import CapabilityError, ContractError, NumericalAbort
from eigopt.guides import softplus_inverse
from eigopt.models import DeathProcess, GaussianToy, TinyDiscrete

TOY = GaussianToy()


def toy_guide(a, t):
    g = TOY.default_guide()
    g.phi = g.pack({"W": np.array([[a], [0.0]]), "b": np.array([0.0, float(softplus_inverse(t))])})
    return g


def rng(s=0):
    return np.random.default_rng(s)


@pytest.mark.parametrize("kind", ["ace", "ba"])
def test_exact_guide_is_tight(kind):
    xi = 1.5
    g = TOY.exact_guide(xi)
    est = bd.estimate(TOY, xi, 20000, 5, rng(1), kind=kind, guide=g)
    assert abs(est.value - TOY.analytic_eig(xi)) < 4 * est.stderr


def test_vnmc_with_exact_guide_is_tight():
    xi = 2.0
    g = TOY.exact_guide(xi)
    d = bd.sample_draws(TOY, xi, 5000, 3, rng(2), guide=g)
    ace = np.asarray(bd.integrand(TOY, xi, d, "ace", guide=g).g)
    vnmc = np.asarray(bd.integrand(TOY, xi, d, "vnmc", guide=g).g)
    # every importance weight equals p(y), so both reduce to log p(y | theta_0) - log p(y)
    np.testing.assert_allclose(ace, vnmc, atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-1, 1), t=st.floats(0.3, 2.0), xi=st.floats(0.2, 3.0))
def test_lower_and_upper_sides(a, t, xi):
    g = toy_guide(a, t)
    eig = TOY.analytic_eig(xi)
    r = rng(3)
    d = bd.sample_draws(TOY, xi, 4000, 4, r, guide=g)
    ace = np.asarray(bd.integrand(TOY, xi, d, "ace", guide=g).g)
    vnmc = np.asarray(bd.integrand(TOY, xi, d, "vnmc", guide=g).g)
    se = lambda x: x.std(ddof=1) / np.sqrt(x.size)
    assert (vnmc - ace).mean() > -4 * se(vnmc - ace)
    assert ace.mean() <= eig + 4 * se(ace)
    assert vnmc.mean() >= eig - 4 * se(vnmc)
    ba = bd.ba_value(TOY, g, xi, 4000, r)
    assert ba.value <= eig + 4 * ba.stderr


def test_pce_grows_with_L_and_is_capped():
    xi = 3.0
    vals = [bd.pce_value(TOY, xi, 20000, L, rng(4)).value for L in (0, 1, 10, 100)]
    assert vals[0] == 0.0
    assert vals[1] < vals[2] < vals[3] <= TOY.analytic_eig(xi) + 0.01
    for L, v in zip((1, 10, 100), vals[1:]):
        assert v <= np.log(L + 1) + 1e-12


def test_ace_improves_with_L_for_poor_guide():
    g = toy_guide(0.0, 1.0)
    xi = 2.0
    v = [bd.ace_value(TOY, g, xi, 40000, L, rng(5)).value for L in (1, 8, 64)]
    assert v[0] < v[1] < v[2] < TOY.analytic_eig(xi)


@pytest.mark.parametrize("L", [0, 1, 2, 3])
def test_enumeration_gap_identity(L):
    m = TinyDiscrete()
    g = m.default_guide()
    g.phi = np.array([0.4, -0.9])
    r = bd.exact_enumerate_ace(m, g, np.log(4.0), L)
    np.testing.assert_allclose(r["ace"] + r["kl_gap"], r["eig"], atol=1e-12)
    assert r["kl_gap"] >= -1e-14


def test_enumeration_exact_guide_has_no_gap():
    m = TinyDiscrete()
    r = bd.exact_enumerate_ace(m, m.exact_guide(1.3), 1.3, 2)
    np.testing.assert_allclose(r["ace"], r["eig"], atol=1e-12)


def test_monte_carlo_agrees_with_enumeration():
    m = TinyDiscrete()
    g = m.default_guide()
    g.phi = np.array([0.4, -0.9])
    want = bd.exact_enumerate_ace(m, g, 1.0, 2)["ace"]
    est = bd.ace_value(m, g, 1.0, 200000, 2, rng(6))
    assert abs(est.value - want) < 4 * est.stderr


@pytest.mark.parametrize("kind", ["ace", "pce", "ba"])
def test_summed_matches_sampled_outcomes(kind):
    m = DeathProcess()
    g = m.default_guide()
    xi = np.array([0.8, 2.0])
    kw = {} if kind == "pce" else {"guide": g}
    s = bd.estimate(m, xi, 4000, 5, rng(7), kind=kind, summed=True, **kw)
    f = bd.estimate(m, xi, 40000, 5, rng(8), kind=kind, **kw)
    assert abs(s.value - f.value) < 4 * np.hypot(s.stderr, f.stderr)


@pytest.mark.parametrize("shift", [-700.0, -50.0, 0.0, 50.0, 700.0])
def test_scaled_likelihood_critic(shift):
    xi = 1.2
    g = toy_guide(0.3, 0.9)
    c = bd.LikelihoodCritic(TOY, xi, log_scale=shift)
    lf = bd.ace_lf_value(TOY, g, c, xi, 5000, 4, rng(9))
    ace = bd.ace_value(TOY, g, xi, 5000, 4, rng(9))
    assert np.isfinite(lf.value)
    np.testing.assert_allclose(lf.g, ace.g, atol=1e-9)
    assert lf.value <= TOY.analytic_eig(xi) + 4 * lf.stderr


def test_log_space_extremes():
    # at the largest design prior contrasts have log-likelihoods far below -700
    xi = TOY.xi_max
    d = bd.sample_draws(TOY, xi, 2000, 10, rng(10), kind="pce")
    t = bd.integrand(TOY, xi, d, "pce")
    assert np.min(t.log_w) < -700
    g = np.asarray(t.g)
    assert np.all(np.isfinite(g)) and np.all(g <= np.log(11) + 1e-12)
    with np.errstate(over="raise", under="ignore"):
        est = bd.ace_value(TOY, toy_guide(0.0, 3.0), xi, 2000, 10, rng(10))
    assert np.isfinite(est.value)


class ShiftedPrior:
    """The toy prior with its density shifted by a constant."""

    normalized = False

    def __init__(self, base, c):
        self.base, self.c = base, c

    def sample(self, rng, shape=()):
        return self.base.sample(rng, shape)

    def log_density(self, theta):
        return self.base.log_prob(theta) + self.c

    def log_prob(self, theta):
        raise CapabilityError("unnormalised")

    def entropy(self):
        return self.base.entropy()


def test_unnormalised_prior_shifts_ace_by_constant():
    c = 3.7
    m = TOY.with_prior(ShiftedPrior(TOY.prior, c))
    g = toy_guide(0.2, 0.8)
    a = bd.ace_value(TOY, g, 1.0, 3000, 4, rng(11))
    b = bd.ace_value(m, g, 1.0, 3000, 4, rng(11))
    np.testing.assert_allclose(b.g, a.g - c, atol=1e-10)
    assert b.up_to_constant and not a.up_to_constant


def test_learned_critic_is_lower_bound():
    feats = lambda th, y: np.stack(np.broadcast_arrays(th["theta"] * y, th["theta"] ** 2, y ** 2), -1)
    cr = bd.Critic(feats, 3, hidden=(8,), seed=1)
    cr.psi = cr.psi + rng(12).standard_normal(cr.size) * 0.3
    xi = 1.0
    est = bd.ace_lf_value(TOY, toy_guide(0.3, 1.0), cr, xi, 20000, 8, rng(13))
    assert est.value <= TOY.analytic_eig(xi) + 4 * est.stderr


def test_support_mismatch_aborts():
    # a positive-only guide cannot cover the negative half of a normal prior
    from eigopt.guides import Guide, Head
    g = Guide([Head("theta", "lognormal")], "linear", features=TOY.features, n_features=1)
    with pytest.raises(NumericalAbort):
        bd.ace_value(TOY, g, 1.0, 200, 5, rng(14))
    with pytest.raises(NumericalAbort):
        bd.ba_value(TOY, g, 1.0, 200, rng(14))


def test_argument_errors():
    g = TOY.default_guide()
    with pytest.raises(ContractError):
        bd.ace_value(TOY, g, 1.0, 0, 3, rng())
    with pytest.raises(ContractError):
        bd.ace_value(TOY, g, 1.0, 10, -1, rng())
    with pytest.raises(ContractError):
        bd.vnmc_value(TOY, g, 1.0, 10, 0, rng())
    with pytest.raises(ContractError):
        bd.estimate(TOY, 1.0, 10, 3, rng(), kind="nope", guide=g)
    with pytest.raises(ContractError):
        bd.estimate(TOY, 1.0, 10, 3, rng(), kind="ace")
    with pytest.raises(CapabilityError):
        bd.estimate(TOY, 1.0, 10, 3, rng(), kind="ace", guide=g, summed=True)


def test_chunking_does_not_change_result():
    g = toy_guide(0.1, 1.1)
    a = bd.ace_value(TOY, g, 0.7, 1000, 3, rng(15), chunk=1000)
    b = bd.ace_value(TOY, g, 0.7, 1000, 3, rng(15), chunk=1000)
    np.testing.assert_array_equal(a.g, b.g)
    c = bd.ace_value(TOY, g, 0.7, 1000, 3, rng(15), chunk=7)
    assert c.n == 1000 and abs(c.value - a.value) < 5 * a.stderr
