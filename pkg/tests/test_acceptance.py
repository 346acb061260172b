"""Acceptance suite: one test (or one parametrized group) per criterion.

A summary line per criterion is printed at the end of the pytest run.
"""
import math
import time

import numpy as np
import pytest
from scipy.special import gammaln
from scipy.stats import gamma

from families import FAMILY_SEEDS, random_family
from orlicz_kls import concentration as conc
from orlicz_kls import geometry as geo
from orlicz_kls import level_profile as lp
from orlicz_kls import potential1d as p1
from orlicz_kls import spectral as spec
from orlicz_kls.cli import main as cli_main

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="module")
def mixed():
    """The 20 random mixed families with their profiles, built once."""
    t0 = time.perf_counter()
    out = []
    for s in FAMILY_SEEDS:
        prod = random_family(s)
        out.append((prod, lp.build_profile(prod)))
    return out, time.perf_counter() - t0


def _body(raws):
    prod = p1.assemble_product(raws)
    return geo.OrliczBody(prod, prod.E_V)


# ----------------------------------------------------------------------------
# level profile
# ----------------------------------------------------------------------------


@pytest.mark.criterion(1, "l1 equality case")
def test_c01_l1_equality_case(detail):
    t0 = time.perf_counter()
    worst = {"phi": 0.0, "E_V": 0.0, "t_g": 0.0, "M_g": 0.0}
    for n in (2, 4, 8, 16):
        prod = p1.assemble_product([p1.laplace()] * n)
        # the normalized product is exactly 2 * sum |x_i|
        x = np.random.default_rng(n).standard_normal((50, n))
        np.testing.assert_allclose(prod.eval(x), 2 * np.abs(x).sum(axis=1), rtol=1e-12)
        prof = lp.build_profile(prod)
        E = np.linspace(0.02, 6.0 * n + 30.0, 400)
        rel = np.abs(prof.phi(E) / gamma.pdf(E, n + 1) - 1.0).max()
        m_g = math.exp(n * math.log(n) - n - gammaln(n + 1))
        worst["phi"] = max(worst["phi"], rel)
        worst["E_V"] = max(worst["E_V"], abs(prod.E_V - (n + 1)))
        worst["t_g"] = max(worst["t_g"], abs(prof.t_g / n - 1))
        worst["M_g"] = max(worst["M_g"], abs(prof.M_g / m_g - 1))
    secs = time.perf_counter() - t0
    detail.append(", ".join(f"{k} err {v:.1e}" for k, v in worst.items()) + f", {secs:.2f}s")
    assert worst["phi"] <= 1e-6
    assert worst["E_V"] <= 1e-8
    assert worst["t_g"] <= 1e-6 and worst["M_g"] <= 1e-6
    assert secs < 5.0


@pytest.mark.criterion(2, "normalization of phi on 20 mixed families")
def test_c02_normalization(mixed, detail):
    fams, secs = mixed
    errs = [abs(prof.total_mass - 1.0) for _, prof in fams]
    dims = [prod.n for prod, _ in fams]
    detail.append(f"max |int phi - 1| = {max(errs):.1e}, n in [{min(dims)}, {max(dims)}], {secs:.1f}s")
    assert max(dims) <= 16
    assert max(errs) <= 1e-6
    assert secs < 30.0


@pytest.mark.criterion(3, "two routes to E_V")
def test_c03_two_route_ev(mixed, detail):
    fams, _ = mixed
    gaps = []
    for prod, prof in fams:
        a, b = lp.compute_ev(prod, prof)
        gaps.append(abs(a - b))
    detail.append(f"max |delta| = {max(gaps):.1e}")
    assert max(gaps) <= 1e-6


@pytest.mark.criterion(4, "level interval properties and t_g = n/p")
def test_c04_level_interval(mixed, detail):
    fams, _ = mixed
    failed = []
    for i, (prod, prof) in enumerate(fams):
        failed += [f"family {i}: {c.name}" for c in lp.check_level_properties(prod, prof, q=1.0) if not c.passed]
        lev = lp.level_interval_q(prof, 1.0)
        n = prod.n
        width_hi = math.e * lp.stirling_ratio(n)
        if not (lev.E_min <= n + 1e-9 and 1 - 1e-9 <= lev.width <= width_hi + 1e-9):
            failed.append(f"family {i}: interval {lev}")
    tg_err = 0.0
    for p in (1.0, 2.0, 4.0):
        for n in (4, 8):
            prof = lp.build_profile(p1.assemble_product([p1.power_symmetric(p)] * n))
            tg_err = max(tg_err, abs(prof.t_g - n / p))
    detail.append(f"{len(failed)} failed checks, max |t_g - n/p| = {tg_err:.1e}")
    assert not failed, failed
    assert tg_err <= 1e-6


@pytest.mark.criterion(5, "V(b_mu) <= E_V - 1 <= n")
def test_c05_barycenter_refinement(mixed, detail):
    fams, _ = mixed
    margins = []
    for prod, _ in fams:
        vb = float(prod.eval(prod.b_mu))
        margins.append(min(prod.E_V - 1 - vb, prod.n - (prod.E_V - 1)))
    detail.append(f"min margin = {min(margins):.3g}")
    assert min(margins) >= -1e-6


@pytest.mark.criterion(6, "alpha bounds at the barycenter")
def test_c06_alpha_bounds(mixed, detail):
    fams, _ = mixed
    a2, neg = [], []
    for prod, _ in fams:
        a2 += list(prod.alpha2s)
        neg += list(prod.neg_sups)
    extra = [p1.gaussian(), p1.log_square(), p1.power_asymmetric(1.0, 4.0), p1.power_symmetric(1.5),
             p1.piecewise_linear([-1.0, 0.5], [-2.0, 0.5, 3.0])]
    for raw in extra:
        _, c = p1.normalize_1d(raw)
        a2.append(p1.alpha2(c, c.barycenter))
        neg.append(p1.negative_part_sup(c, c.barycenter))
    _, lap = p1.normalize_1d(p1.laplace())
    lap_a2 = p1.alpha2(lap, lap.barycenter)
    detail.append(f"min alpha2 = {min(a2):.6f}, laplace alpha2 - sqrt2 = {lap_a2 - SQRT2:.1e}, "
                  f"max neg sup = {max(neg):.6f}")
    assert min(a2) >= SQRT2 - 1e-6
    assert abs(lap_a2 - SQRT2) <= 1e-4
    assert max(neg) <= 1 + 1e-6


# ----------------------------------------------------------------------------
# Monte-Carlo criteria
# ----------------------------------------------------------------------------


@pytest.mark.criterion(7, "Gamma radial law")
def test_c07_radial_law(detail):
    t0 = time.perf_counter()
    worst = 0.0
    for n in (4, 16):
        body = _body([p1.power_asymmetric(1.0, 3.0)] * n)
        rad = geo.sample_radial(body, 100_000, seed=7 + n)
        r = body.gauge(rad.points)
        m, m_se = rad.mean_se(r)
        v, v_se = rad.mean_se((r - r.mean()) ** 2)
        worst = max(worst, abs(m - 1) / m_se, abs(v - 1 / n) / v_se)
    c_fit = min(conc.fitted_gamma_constant(n) for n in (4, 16))
    secs = time.perf_counter() - t0
    detail.append(f"max deviation {worst:.2f} sigma, fitted c = {c_fit:.3f}, {secs:.1f}s")
    assert worst <= 3.0
    assert c_fit > 0.05
    for n in (4, 16):
        for w0 in np.linspace(0.1, 1.0, 10):
            assert geo.annulus_probability(n, w0 / math.sqrt(n)) >= c_fit * w0 * (1 - 1e-12)
    assert secs < 60.0


@pytest.mark.criterion(8, "one-sided Hoeffding and gradient tail")
@pytest.mark.parametrize("kind", ["laplace", "gaussian"])
@pytest.mark.parametrize("n", [4, 16])
def test_c08_tails(kind, n, detail):
    prod = p1.assemble_product([p1.make_raw(kind)] * n)
    hoef = conc.exp_sum_tail_check(n, 100_000, np.linspace(0.25, 3.0 * math.sqrt(n), 24), seed=n)
    grad = conc.grad_dot_tail_check(prod, 100_000, np.linspace(0.1, 4.0, 24), seed=n)
    # the per-coordinate Y_i are centered
    z = np.abs(grad.extras["mean_Y"]) / grad.extras["se_Y"]
    detail.append(f"{kind} n={n}: {hoef.max_violation_sigma:.1f}/{grad.max_violation_sigma:.1f} sigma")
    assert hoef.passed(3.0)
    assert grad.status == "OK" and grad.passed(3.0)
    assert np.all(grad.empirical <= grad.extras["hoeffding_bound"] + 3 * grad.sigma)
    assert z.max() < 5.0


ASYM_BODIES = {
    2: [(1.0, 2.0), (3.0, 1.5)],
    4: [(1.0, 3.0), (1.0, 3.0), (2.0, 4.0), (1.5, 1.0)],
}


@pytest.mark.criterion(9, "density-ratio moments")
@pytest.mark.parametrize("n", [2, 4])
def test_c09_density_ratio(n, detail):
    raws = {pm: p1.power_asymmetric(*pm) for pm in set(ASYM_BODIES[n])}
    prod = p1.assemble_product([raws[pm] for pm in ASYM_BODIES[n]])
    body = geo.OrliczBody(prod, prod.E_V)
    Z_E = conc.z_e_from_profile(lp.build_profile(prod), body.E)
    cone = geo.sample_cone(body, 40_000, seed=90 + n)
    bad = []
    worst = -math.inf
    for w0 in (0.1, 0.25, 0.5):
        ann = geo.sample_radial(body, cone.count, 90 + n, w=w0 / math.sqrt(n), cone=cone)
        one = conc.density_ratio_moment(body, Z_E, w0, 1.0, 100_000, seed=int(w0 * 100), annulus=ann)
        if abs(one.moment_annulus - 1) > 1e-3 or one.agree_sigma > 4:
            bad.append(f"p=1 w0={w0}: {one.moment_annulus:.5f} / {one.moment_mu:.4f}")
        for p in (1.5, 2.0, 3.0):
            rep = conc.density_ratio_moment(body, Z_E, w0, p, 100_000, seed=int(w0 * 100), annulus=ann)
            worst = max(worst, rep.moment_annulus / rep.lp_bound, rep.linf_empirical / rep.linf_bound)
            if not rep.passed(3.0):
                bad.append(f"p={p} w0={w0}")
    detail.append(f"n={n}: max moment/bound = {worst:.3g}")
    assert not bad, bad


COUPLING_BODIES = [("laplace", 2), ("laplace", 3), ("power3", 2), ("power3", 3)]


@pytest.mark.criterion(10, "W1 radial coupling and first-moment inequality")
@pytest.mark.parametrize("kind,n", COUPLING_BODIES)
def test_c10_coupling_hardy(kind, n, detail):
    raw = p1.laplace() if kind == "laplace" else p1.power_symmetric(3.0)
    body = _body([raw] * n)
    uni = geo.sample_uniform(body, 40_000, seed=10 + n)
    cone = geo.sample_cone(body, uni.count, seed=10 + n, uniform=uni)
    worst = -math.inf
    for w in (0.05, 0.2, 0.5):
        rep = conc.w1_radial_coupling(body, w, uni.count, seed=10 + n, uniform=uni)
        worst = max(worst, (rep.cost - rep.bound) / math.hypot(rep.cost_se, rep.bound_se))
        assert rep.passed(3.0), rep
    for f in conc.trial_family(n, seed=n):
        rep = conc.hardy_first_moment_check(body, f, uni, cone)
        worst = max(worst, (rep.lhs - rep.rhs) / math.hypot(rep.lhs_se, rep.rhs_se))
        assert rep.passed(3.0), rep
    detail.append(f"{kind} n={n}: worst {worst:.1f} SE")


# ----------------------------------------------------------------------------
# spectral criteria
# ----------------------------------------------------------------------------


@pytest.mark.criterion(11, "eigensolver validation")
def test_c11_eigensolvers(detail):
    t0 = time.perf_counter()
    # rectangle [0,1]^2: lambda_1 = pi^2
    rect = [spec.neumann_gap(spec.GridDomain.rectangle([0, 0], [1, 1], c), extrapolate=False).lam
            for c in (16, 32)]
    e_rect = [abs(l / math.pi ** 2 - 1) for l in rect]
    # unit disk: square of the first zero of J_1'
    disk_exact = spec.BESSEL_J1P_ZERO ** 2
    disk_fn = lambda x: np.sum(np.asarray(x) ** 2, axis=-1) - 1.0
    disk = [spec.neumann_gap(spec.voxelize_level_set(disk_fn, ([-1, -1], [1, 1]), h), extrapolate=False).lam
            for h in (0.1, 0.05)]
    e_disk = [abs(l / disk_exact - 1) for l in disk]
    # standard Gaussian on the line: gap 1
    gauss = [spec.sturm_liouville_gap(lambda y: 0.5 * y * y, -9.0, 9.0, c) for c in (200, 400)]
    e_gauss = [abs(l - 1) for l in gauss]
    secs = time.perf_counter() - t0
    detail.append(f"rel errors rect {e_rect[1]:.1e}, disk {e_disk[1]:.1e}, gauss {e_gauss[1]:.1e}; "
                  f"reductions {e_rect[0] / e_rect[1]:.1f}/{e_disk[0] / e_disk[1]:.1f}/"
                  f"{e_gauss[0] / e_gauss[1]:.1f}, {secs:.1f}s")
    assert e_rect[0] <= 0.01 and e_rect[1] <= 0.01
    assert e_disk[0] <= 0.02 and e_disk[1] <= 0.02
    assert e_gauss[0] <= 0.01 and e_gauss[1] <= 0.01
    for e in (e_rect, e_disk, e_gauss):
        assert e[0] / e[1] >= 3.0
    assert secs < 120.0


HIERARCHY_BODIES = [
    ("laplace", 2), ("power4", 2), ("gaussian", 2), ("asym13", 2), ("laplace", 3), ("asym13", 3),
]


def _raw(kind):
    return {"laplace": p1.laplace, "gaussian": p1.gaussian, "power4": lambda: p1.power_symmetric(4.0),
            "asym13": lambda: p1.power_asymmetric(1.0, 3.0)}[kind]()


@pytest.mark.criterion(12, "spectral hierarchy and Bobkov ratio")
@pytest.mark.parametrize("kind,n", HIERARCHY_BODIES)
def test_c12_hierarchy(kind, n, detail):
    body = _body([_raw(kind)] * n)
    batch = geo.sample_uniform(body, 40_000, seed=12 + n)
    lo, hi = body.box
    est = spec.spectral_estimate(body, batch, float((hi - lo).min()) / (12 if n == 2 else 8), seed=n)
    low, up = est.hierarchy_margins(3.0)
    detail.append(f"{kind} n={n}: lin {est.d_lin:.4f} <= ray {est.d_poin_lower:.4f} <= grid {est.d_poin_grid:.4f}")
    assert low >= 0 and up >= 0, (est, low, up)


@pytest.mark.criterion(12, "spectral hierarchy and Bobkov ratio")
def test_c12_bobkov_ratio(detail):
    raws = [p1.gaussian(), p1.laplace(), p1.power_symmetric(1.5), p1.power_symmetric(4.0),
            p1.power_asymmetric(1.0, 3.0), p1.power_asymmetric(2.0, 4.0), p1.log_square(),
            p1.piecewise_linear([-1.0, 0.5], [-2.0, 0.5, 3.0]), p1.steep_tail()]
    ratios = []
    for raw in raws:
        _, c = p1.normalize_1d(raw)
        ratios.append(spec.poincare_1d(c).bobkov_ratio)
    detail.append(f"Bobkov ratio in [{min(ratios):.4f}, {max(ratios):.4f}]")
    assert min(ratios) >= 1 - 1e-3
    assert max(ratios) <= 12


@pytest.mark.criterion(13, "criterion stability over a p-sweep")
def test_c13_p_sweep(detail):
    consts = []
    for p in (1.0, 1.5, 2.0, 4.0):
        for raws in ([p1.power_symmetric(p)] * 2, [p1.power_symmetric(p), p1.gaussian()]):
            body = _body(raws)
            batch = geo.sample_uniform(body, 20_000, seed=13)
            lo, hi = body.box
            est = spec.spectral_estimate(body, batch, float((hi - lo).min()) / 12, seed=13)
            row = spec.kls_ratio_report(body.prod, est)
            assert row["d_poin_source"] == "grid"
            consts.append(row["fitted_constant"])
    spread = max(consts) / min(consts)
    detail.append(f"fitted constants in [{min(consts):.3f}, {max(consts):.3f}], spread {spread:.3f}")
    assert spread < 10


@pytest.mark.criterion(14, "byte-identical CLI output")
def test_c14_determinism(tmp_path, monkeypatch, detail):
    cfg = tmp_path / "run.toml"
    cfg.write_text('schema_version = 1\nn = 2\nseed = 3\n[family]\nkind = "power_asymmetric"\n'
                   'p_plus = 1.0\np_minus = 3.0\n[sampler]\ncount = 4000\n[spectral]\ncells = 8\n')
    outputs = []
    for rep in ("a", "b"):
        d = tmp_path / rep
        monkeypatch.setenv("ORLICZ_KLS_OUTDIR", str(d))
        assert cli_main(["criterion", "--config", str(cfg)]) == 0
        assert cli_main(["verify", "--config", str(cfg)]) == 0
        assert cli_main(["profile", "--config", str(cfg)]) == 0
        assert cli_main(["sample", "--config", str(cfg), "--measure", "annulus", "--count", "500"]) == 0
        assert cli_main(["spectral", "--config", str(cfg)]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    detail.append(f"{len(outputs[0])} files compared")
    assert outputs[0].keys() == outputs[1].keys() and len(outputs[0]) == 5
    for name in outputs[0]:
        assert outputs[0][name] == outputs[1][name], name
