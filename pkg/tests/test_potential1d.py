import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import gamma as gamma_fn

from orlicz_kls import potential1d as p1
from orlicz_kls.errors import BelowMinimum, NonConvex, NonIntegrable

exponents = st.floats(min_value=1.0, max_value=5.0, allow_nan=False)


def quad_mean(raw, g, z):
    lo, hi = raw.window
    pts = [k for k in raw.breakpoints if lo < k < hi]
    val, _ = integrate.quad(lambda u: g(u) * math.exp(-float(raw.eval(np.array([u]))[0])), lo, hi,
                            points=pts or None, limit=400, epsabs=1e-13, epsrel=1e-12)
    return val / z


def test_normalizing_constants_match_closed_forms():
    z, _ = p1.normalize_1d(p1.gaussian())
    assert z == pytest.approx(math.sqrt(2 * math.pi), rel=1e-12)
    z, _ = p1.normalize_1d(p1.laplace())
    assert z == pytest.approx(2.0, rel=1e-12)
    for p in (1.5, 3.0):
        z, _ = p1.normalize_1d(p1.power_symmetric(p))
        assert z == pytest.approx(2 * gamma_fn(1 + 1 / p), rel=1e-10)
    z, _ = p1.normalize_1d(p1.power_asymmetric(2.0, 1.0))
    assert z == pytest.approx(gamma_fn(1.5) + 1.0, rel=1e-10)


def test_gaussian_moments_and_alpha():
    _, g = p1.normalize_1d(p1.gaussian())
    assert g.barycenter == pytest.approx(0.0, abs=1e-12)
    assert g.variance == pytest.approx(1.0, rel=1e-10)
    assert g.expected_potential == pytest.approx(0.5 + 0.5 * math.log(2 * math.pi), rel=1e-10)
    # ||y^2||_2 = sqrt(E y^4)
    assert p1.alpha2(g, 0.0) == pytest.approx(math.sqrt(3.0), rel=1e-10)
    assert p1.negative_part_sup(g, 0.0) == 0.0
    assert p1.alpha_inf2(g, 0.0) == pytest.approx(math.sqrt(3.0), rel=1e-10)


def test_laplace_alpha_is_sqrt2():
    _, c = p1.normalize_1d(p1.laplace())
    assert p1.alpha2(c, c.barycenter) == pytest.approx(math.sqrt(2.0), abs=1e-10)
    assert p1.alpha_inf2(c, c.barycenter) == pytest.approx(math.sqrt(2.0), abs=1e-10)


def test_asymmetric_moments_against_scipy_quad():
    raw = p1.power_asymmetric(1.0, 3.0)
    z, c = p1.normalize_1d(raw)
    b = quad_mean(raw, lambda u: u, z)
    assert c.barycenter == pytest.approx(b, abs=1e-10)
    var = quad_mean(raw, lambda u: (u - b) ** 2, z)
    assert c.variance == pytest.approx(var, rel=1e-9)
    a2 = math.sqrt(quad_mean(raw, lambda u: (float(raw.deriv(np.array([u]))[0]) * (u - b)) ** 2, z))
    assert p1.alpha2(c, b) == pytest.approx(a2, rel=1e-8)


def test_negative_part_oracle_for_laplace_off_center():
    # V'(y)(y - b) with V = |y|: negative only for y in (0, b) where it equals y - b
    _, c = p1.normalize_1d(p1.laplace())
    assert p1.negative_part_sup(c, 0.7) == pytest.approx(0.7, abs=1e-9)


def test_product_rescaling_gives_l1_potential():
    prod = p1.assemble_product([p1.laplace()] * 3)
    x = np.array([[0.1, -0.4, 2.0], [0.0, 0.0, 0.0]])
    np.testing.assert_allclose(prod.eval(x), 2 * np.abs(x).sum(axis=1), atol=1e-14)
    assert prod.E_V == pytest.approx(4.0, abs=1e-12)
    assert prod.M == pytest.approx(1.0)


def test_mixed_product_offsets_and_M():
    raws = [p1.gaussian(), p1.laplace()]
    prod = p1.assemble_product(raws)
    z = math.sqrt(math.sqrt(2 * math.pi) * 2.0)
    assert prod.z == pytest.approx(z, rel=1e-12)
    # m_i = log(z_i / z)
    np.testing.assert_allclose(prod.m, np.log(np.array([math.sqrt(2 * math.pi), 2.0]) / z), atol=1e-12)
    assert prod.m.sum() == pytest.approx(0.0, abs=1e-12)
    assert prod.M == pytest.approx(math.exp(prod.m.max()))


def test_piecewise_and_table_agree():
    pl = p1.piecewise_linear([-1.0, 0.0, 2.0], [-2.0, -0.5, 1.0, 3.0])
    tb = p1.table([[-2.0, 3.5], [-1.0, 1.5], [0.0, 1.0], [2.0, 3.0], [3.0, 6.0]])
    u = np.linspace(-4, 5, 101)
    np.testing.assert_allclose(pl.eval(u), tb.eval(u), atol=1e-12)
    assert pl.eval(np.array([0.0]))[0] == 0.0


@pytest.mark.parametrize("build", [
    lambda: p1.piecewise_linear([0.0, 1.0], [-1.0, 2.0, 1.0]),
    lambda: p1.table([[0.0, 0.0], [1.0, 2.0], [2.0, 2.5], [3.0, 5.0]]),
    lambda: p1.piecewise_linear([1.0, 0.0], [-1.0, 0.0, 1.0]),
    lambda: p1.make_raw("cosine"),
])
def test_nonconvex_inputs_raise(build):
    with pytest.raises(NonConvex):
        build()


def test_non_integrable_raises():
    with pytest.raises(NonIntegrable):
        p1.piecewise_linear([0.0], [0.5, 1.0])


def test_level_length_below_minimum_raises():
    _, c = p1.normalize_1d(p1.gaussian())
    with pytest.raises(BelowMinimum):
        p1.level_length(c, c.m - 1.0)


def test_steep_tail_flags_divergent_alpha():
    _, c = p1.normalize_1d(p1.steep_tail())
    assert math.isinf(p1.alpha2(c, c.barycenter))
    assert math.isinf(p1.alpha_inf2(c, c.barycenter))


def test_tilted_law_mean_is_expected_potential():
    _, c = p1.normalize_1d(p1.power_asymmetric(1.0, 2.5))
    law = p1.tilted_law(c, 0.005)
    assert law.total == pytest.approx(1.0, abs=1e-9)
    assert law.mean == pytest.approx(c.expected_potential, abs=2e-4)


@settings(max_examples=25, deadline=None)
@given(a=exponents, b=exponents)
def test_alpha2_at_least_sqrt2(a, b):
    _, c = p1.normalize_1d(p1.power_asymmetric(a, b))
    bmu = c.barycenter
    assert p1.alpha2(c, bmu) >= math.sqrt(2.0) - 1e-6
    assert p1.negative_part_sup(c, bmu) <= 1.0 + 1e-6


@settings(max_examples=25, deadline=None)
@given(a=exponents, b=exponents, s=st.floats(min_value=0.2, max_value=5.0))
def test_alpha2_invariant_under_rescaling(a, b, s):
    _, c = p1.normalize_1d(p1.power_asymmetric(a, b))
    r = p1.rescale(c, s)
    assert p1.alpha2(r, r.barycenter) == pytest.approx(p1.alpha2(c, c.barycenter), rel=1e-8)
    assert r.barycenter == pytest.approx(c.barycenter / s, rel=1e-9, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(a=exponents, b=exponents, t=st.floats(min_value=0.0, max_value=20.0))
def test_level_endpoints_solve_the_level_equation(a, b, t):
    _, c = p1.normalize_1d(p1.power_asymmetric(a, b))
    lo, hi = p1.level_length(c, c.m + t)
    assert lo <= c.minimizer <= hi
    np.testing.assert_allclose(c.eval(np.array([lo, hi])), c.m + t, atol=1e-9 * (1 + t))


@settings(max_examples=25, deadline=None)
@given(a=exponents, b=exponents, u=st.floats(min_value=0.001, max_value=0.999))
def test_quantile_inverts_cdf(a, b, u):
    _, c = p1.normalize_1d(p1.power_asymmetric(a, b))
    y = p1.sample_1d(c, np.array([u]))
    assert float(c.cdf(y)[0]) == pytest.approx(u, abs=1e-8)


def test_product_sampler_moments():
    prod = p1.assemble_product([p1.power_asymmetric(1.0, 3.0), p1.gaussian()])
    x = prod.sample(200_000, np.random.default_rng(5))
    se = np.sqrt(prod.variances / x.shape[0])
    assert np.all(np.abs(x.mean(axis=0) - prod.b_mu) < 4 * se)
    np.testing.assert_allclose(x.var(axis=0), prod.variances, rtol=0.02)
