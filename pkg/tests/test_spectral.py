import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orlicz_kls import geometry as geo
from orlicz_kls import potential1d as p1
from orlicz_kls import spectral as spec
from orlicz_kls.errors import DisconnectedDomain, EmptyDomain


def test_rectangle_eigenvalue_uses_longest_side():
    dom = spec.GridDomain.rectangle([0, 0], [2, 1], 16)
    gap = spec.neumann_gap(dom)
    assert gap.lam == pytest.approx(math.pi ** 2 / 4, rel=1e-4)
    assert gap.d_poin == pytest.approx(2 / math.pi, rel=1e-4)


def test_interval_and_cube():
    gap1 = spec.neumann_gap(spec.GridDomain.rectangle([0.0], [1.0], 64))
    assert gap1.lam == pytest.approx(math.pi ** 2, rel=1e-6)
    assert gap1.d_poin == pytest.approx(1 / math.pi, rel=1e-6)
    gap3 = spec.neumann_gap(spec.GridDomain.rectangle([0, 0, 0], [1, 1, 1], 6))
    assert gap3.lam == pytest.approx(math.pi ** 2, rel=1e-3)


def test_richardson_improves_disk():
    disk = lambda x: np.sum(np.asarray(x) ** 2, axis=-1) - 1.0
    exact = spec.BESSEL_J1P_ZERO ** 2
    dom = spec.voxelize_level_set(disk, ([-1, -1], [1, 1]), 0.2)
    plain = spec.neumann_gap(dom, extrapolate=False).lam
    extra = spec.neumann_gap(dom)
    assert abs(extra.lam - exact) < abs(plain - exact) / 5
    assert abs(extra.lam - exact) <= 3 * extra.error_estimate + 1e-4


def test_ball_eigenvalue_converges():
    # first nonzero Neumann eigenvalue of the unit ball: square of the first zero of j_1'
    ball = lambda x: np.sum(np.asarray(x) ** 2, axis=-1) - 1.0
    exact = 2.0815759778181 ** 2
    errs = [abs(spec.neumann_gap(spec.voxelize_level_set(ball, ([-1] * 3, [1] * 3), h),
                                 extrapolate=False).lam / exact - 1) for h in (0.2, 0.1)]
    assert errs[1] < 0.002
    assert errs[0] / errs[1] > 3


def test_diamond_area_and_eigenvalue():
    # l1 ball of radius r: area 2 r^2; it is a square of side r sqrt(2), lambda = pi^2 / (2 r^2)
    r = 1.5
    body = geo.OrliczBody(p1.assemble_product([p1.laplace()] * 2), 2 * r)
    dom = spec.voxelize(body, 0.1)
    assert dom.volume == pytest.approx(2 * r * r, rel=1e-4)
    assert spec.neumann_gap(dom).lam == pytest.approx(math.pi ** 2 / (2 * r * r), rel=1e-4)


def test_empty_and_disconnected_masks():
    with pytest.raises(EmptyDomain):
        spec.GridDomain.from_mask(np.zeros((4, 4), dtype=bool), 0.25)
    mask = np.zeros((6, 6), dtype=bool)
    mask[:2, :2] = True
    mask[4:, 4:] = True
    with pytest.raises(DisconnectedDomain):
        spec.GridDomain.from_mask(mask, 0.25)


def test_sturm_liouville_oracles():
    lams = [spec.sturm_liouville_gap(lambda y: 0.5 * y * y, -10.0, 10.0, c) for c in (400, 800)]
    assert lams[1] == pytest.approx(1.0, rel=3e-4)
    # second order: halving the cell size quarters the error
    assert abs(lams[0] - 1) / abs(lams[1] - 1) == pytest.approx(4.0, rel=0.05)
    _, lap = p1.normalize_1d(p1.laplace())
    res = spec.poincare_1d(lap)
    # exp(-|y|) / 2: the gap is 1/4 (bottom of the continuous spectrum), so D = 2
    assert res.d_poin == pytest.approx(2.0, rel=1e-3)
    assert res.bobkov_ratio == pytest.approx(2.0, rel=2e-3)
    _, g = p1.normalize_1d(p1.gaussian())
    res = spec.poincare_1d(g)
    assert res.bobkov_ratio == pytest.approx(1.0, rel=1e-4)
    assert res.sup_variance == pytest.approx(1 / (2 * math.pi), rel=1e-6)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(min_value=1.0, max_value=5.0), b=st.floats(min_value=1.0, max_value=5.0))
def test_one_dimensional_facts(a, b):
    _, c = p1.normalize_1d(p1.power_asymmetric(a, b))
    res = spec.poincare_1d(c, cells=1500)
    assert 1 - 1e-3 <= res.bobkov_ratio <= 12
    # 1/12 <= ||f||_inf^2 Var <= 1/2 for log-concave densities on the line
    assert 1 / 12 - 1e-9 <= res.sup_variance <= 0.5 + 1e-9


def test_product_poincare_is_largest_factor():
    prod = p1.assemble_product([p1.gaussian(), p1.laplace()])
    per = [spec.poincare_1d(c).d_poin for c in prod.components]
    assert spec.product_poincare(prod) == pytest.approx(max(per))


@pytest.fixture(scope="module")
def disk_batch():
    prod = p1.assemble_product([p1.gaussian()] * 2)
    body = geo.OrliczBody(prod, prod.E_V)
    return body, geo.sample_uniform(body, 40_000, seed=3)


def test_rayleigh_witness_brackets_exact_disk(disk_batch):
    body, batch = disk_batch
    R = float(body.box[1][0])
    exact = R / spec.BESSEL_J1P_ZERO
    ray = spec.rayleigh_lower_bound(batch, degree=3, body=body)
    assert ray.d_poin_lower <= exact + 3 * ray.se
    assert ray.d_poin_lower >= ray.d_lin - 3 * ray.se
    # linear functions: D_lin = R / 2 on the disk
    assert ray.d_lin == pytest.approx(R / 2, rel=0.02)


def test_cheeger_sweep_on_diamond():
    r = 1.0
    body = geo.OrliczBody(p1.assemble_product([p1.laplace()] * 2), 2 * r)
    batch = geo.sample_uniform(body, 40_000, seed=4)
    sweep = spec.cheeger_lin_sweep(batch, directions=64)
    # every marginal density at the median is at most 1/r (attained along the axes)
    assert sweep.d_che_lin <= 2 / r * 1.05
    lo, hi = sweep.band
    assert lo <= sweep.d_che_lin <= hi
    assert np.linalg.norm(sweep.direction) == pytest.approx(1.0)


def test_sweep_directions_are_unit_and_deterministic():
    a = spec.sweep_directions(3, 32, seed=1)
    b = spec.sweep_directions(3, 32, seed=1)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0)
    assert np.array_equal(a, b)


def test_spectral_estimate_hierarchy(disk_batch):
    body, batch = disk_batch
    lo, hi = body.box
    est = spec.spectral_estimate(body, batch, float(hi[0] - lo[0]) / 12, directions=64)
    assert est.consistent(3.0)
    R = float(hi[0])
    assert est.d_poin_grid == pytest.approx(R / spec.BESSEL_J1P_ZERO, rel=1e-3)
    row = spec.kls_ratio_report(body.prod, est, cells=1000)
    assert row["d_poin_source"] == "grid"
    assert row["ratio"] == pytest.approx(est.d_poin_grid / est.d_lin)
