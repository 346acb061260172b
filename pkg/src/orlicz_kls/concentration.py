"""Concentration profiles and the measure-transfer estimates checked against samples.

Everything here takes :class:`~orlicz_kls.geometry.SampleBatch` values and
returns plain reports; nothing is asserted. Monte-Carlo errors are standard
errors of means (batch means over chains for correlated samplers).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import LipschitzViolation
from .geometry import (OrliczBody, SampleBatch, annulus_probability, sample_radial, sample_uniform)
from .potential1d import ProductPotential
from .level_profile import stirling_ratio

SQRT_2PI = math.sqrt(2.0 * math.pi)


# ----------------------------------------------------------------------------
# trial functions
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialFunction:
    """A 1-Lipschitz function (Euclidean metric) with its name."""

    name: str
    f: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.f(np.atleast_2d(x))


def trial_family(n: int, seed: int = 0, directions: int = 3, point=None) -> list[TrialFunction]:
    """Coordinates, random unit directions, the Euclidean norm and a distance function."""
    rng = np.random.default_rng([seed, 7])
    out = [TrialFunction(f"x{i}", lambda x, i=i: x[:, i]) for i in range(n)]
    for k in range(directions):
        theta = rng.standard_normal(n)
        theta /= np.linalg.norm(theta)
        out.append(TrialFunction(f"dir{k}", lambda x, t=theta: x @ t))
    out.append(TrialFunction("norm", lambda x: np.linalg.norm(x, axis=1)))
    p = 0.3 * rng.standard_normal(n) if point is None else np.asarray(point, dtype=float)
    out.append(TrialFunction("dist", lambda x, p=p: np.linalg.norm(x - p, axis=1)))
    return out


def check_lipschitz(f, points, pairs: int = 2000, seed: int = 0, tol: float = 1e-9) -> float:
    """Largest sampled difference quotient; raises if it exceeds ``1 + tol``."""
    rng = np.random.default_rng([seed, 11])
    points = np.atleast_2d(points)
    if len(points) < 2:
        return 0.0
    i = rng.integers(len(points), size=pairs)
    j = rng.integers(len(points), size=pairs)
    d = np.linalg.norm(points[i] - points[j], axis=1)
    ok = d > 0
    q = np.abs(f(points[i[ok]]) - f(points[j[ok]])) / d[ok]
    worst = float(q.max()) if q.size else 0.0
    if worst > 1.0 + tol:
        raise LipschitzViolation(f"difference quotient {worst:.6g} exceeds 1")
    return worst


def median_se(values, reps: int = 500, seed: int = 0) -> tuple[float, float]:
    """Sample median with a bootstrap standard error."""
    values = np.asarray(values, dtype=float)
    rng = np.random.default_rng([seed, 13])
    med = float(np.median(values))
    boots = np.median(values[rng.integers(values.size, size=(reps, values.size))], axis=1) \
        if values.size <= 20_000 else \
        np.array([np.median(values[rng.integers(values.size, size=values.size)]) for _ in range(reps)])
    return med, float(np.std(boots, ddof=1))


# ----------------------------------------------------------------------------
# profiles and transfer
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ConcentrationProfile:
    """``K(r) = nu{f > med f + r}`` for one fixed ``f``: a lower witness of the sup over ``f``."""

    r: np.ndarray
    K: np.ndarray
    se: np.ndarray
    label: str
    measure: str
    count: int
    median: float


def empirical_profile(batch: SampleBatch, f, r_grid, label: str = "f", check: bool = True) -> ConcentrationProfile:
    if check:
        check_lipschitz(f, batch.points)
    vals = f(batch.points)
    med = float(np.median(vals))
    r = np.asarray(r_grid, dtype=float)
    K = np.array([(vals > med + ri).mean() for ri in r])
    se = np.sqrt(K * (1 - K) / len(vals))
    return ConcentrationProfile(r, K, se, label, batch.measure, len(vals), med)


@dataclass(frozen=True)
class TransferBound:
    """``||d nu_2 / d nu_1||_{L^p(nu_1)} <= L``."""

    p: float
    L: float

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if self.L < 1 - 1e-12:
            raise ValueError("an L^p norm of a density ratio is at least 1")

    @property
    def q(self) -> float:
        return 1.0 if math.isinf(self.p) else self.p / (self.p - 1.0)


def transfer_profile(b: TransferBound, k1: Callable[[np.ndarray], np.ndarray]):
    """``r -> min(1/2, 2 L k1(r/2)^(1/q))``."""
    def bound(r):
        r = np.asarray(r, dtype=float)
        return np.minimum(0.5, 2.0 * b.L * np.asarray(k1(r / 2.0)) ** (1.0 / b.q))
    return bound


def hoeffding_bound(norms: Sequence[tuple[float, float]]):
    """``r -> exp(-r^2 / (2 sum(||Y_-||_inf^2 + ||Y||_2^2)))``; vacuous if a norm is infinite."""
    total = sum(a * a + b * b for a, b in norms)

    def bound(r):
        r = np.asarray(r, dtype=float)
        if not math.isfinite(total):
            return np.ones_like(r)
        return np.where(r > 0, np.exp(-0.5 * r * r / total), 1.0)
    return bound


@dataclass(frozen=True)
class TailReport:
    thresholds: np.ndarray
    empirical: np.ndarray
    bound: np.ndarray
    sigma: np.ndarray
    count: int
    status: str = "OK"
    extras: dict = field(default_factory=dict)

    @property
    def violation_sigma(self) -> np.ndarray:
        return (self.empirical - self.bound) / self.sigma

    @property
    def max_violation_sigma(self) -> float:
        return float(self.violation_sigma.max()) if self.status == "OK" else float("nan")

    def passed(self, k: float = 3.0) -> bool:
        return self.status != "OK" or self.max_violation_sigma <= k


def _tail_sigma(bound, count):
    # error of a frequency whose true value sits at the bound
    p = np.clip(bound, 1.0 / count, 1.0)
    return np.sqrt(p * (1 - p) / count) + 1.0 / count


def lower_tail_report(samples, r_grid, bound_fn) -> TailReport:
    samples = np.asarray(samples, dtype=float)
    r = np.asarray(r_grid, dtype=float)
    srt = np.sort(samples)
    emp = np.searchsorted(srt, -r, side="right") / samples.size
    bound = np.asarray(bound_fn(r), dtype=float)
    return TailReport(r, emp, bound, _tail_sigma(bound, samples.size), samples.size)


def exp_sum_tail_check(n: int, count: int, r_grid, seed: int = 0) -> TailReport:
    """Lower tail of ``sum(Exp(1) - 1)`` over ``n`` terms against ``exp(-r^2/(4n))``."""
    rng = np.random.default_rng([seed, 17])
    s = rng.gamma(n, 1.0, size=count) - n
    return lower_tail_report(s, r_grid, hoeffding_bound([(1.0, 1.0)] * n))


def grad_dot_tail_check(prod: ProductPotential, count: int, s_grid, seed: int = 0) -> TailReport:
    """``P(sum_i Y_i <= -sqrt(n) s)`` against ``exp(-s^2 / (4 A_inf^2))``.

    ``Y_i = V_i'(X_i)(X_i - b_i) - 1`` with ``b`` the barycenter of ``mu``; the
    report also carries the sample means of the ``Y_i`` (zero in expectation).
    """
    s = np.asarray(s_grid, dtype=float)
    a_inf = prod.AInf2
    if not math.isfinite(a_inf):
        nan = np.full(s.shape, np.nan)
        return TailReport(s, nan, np.ones_like(s), nan, 0, status="SKIPPED_INFINITE")
    rng = np.random.default_rng([seed, 19])
    n = prod.n
    x = prod.sample(count, rng)
    y = prod.grad(x) * (x - prod.b_mu) - 1.0
    total = y.sum(axis=1)
    rep = lower_tail_report(total, math.sqrt(n) * s, lambda r: np.exp(-0.25 * (r / math.sqrt(n)) ** 2 / a_inf ** 2))
    # the sharper per-coordinate form of the same inequality
    norms = [(1.0 + ns, math.sqrt(max(a2 * a2 - 1.0, 0.0))) for ns, a2 in zip(prod.neg_sups, prod.alpha2s)]
    hb = hoeffding_bound(norms)(math.sqrt(n) * s)
    means = y.mean(axis=0)
    ses = y.std(axis=0, ddof=1) / math.sqrt(count)
    extras = {"mean_Y": means, "se_Y": ses, "hoeffding_bound": hb, "A_inf": a_inf}
    return TailReport(s, rep.empirical, rep.bound, rep.sigma, count, extras=extras)


# ----------------------------------------------------------------------------
# density ratios between the annulus measure and mu
# ----------------------------------------------------------------------------


def fitted_gamma_constant(n: int, w0_grid=np.linspace(0.1, 1.0, 10)) -> float:
    """Largest ``c`` with ``Z_{E,w} >= c w0 Z_E`` on the ``w0`` grid (``w = w0/sqrt(n)``)."""
    w0 = np.asarray(w0_grid, dtype=float)
    ratios = np.array([annulus_probability(n, min(x / math.sqrt(n), 1.0)) for x in w0])
    return float((ratios / w0).min())


@dataclass(frozen=True)
class DensityRatioReport:
    p: float
    w0: float
    moment_mu: float
    moment_mu_se: float
    moment_annulus: float
    moment_annulus_se: float
    lp_bound: float
    lp_bound_conservative: float
    linf_empirical: float
    linf_bound: float
    c_fit: float
    Z_E: float

    @property
    def agree_sigma(self) -> float:
        den = math.hypot(self.moment_mu_se, self.moment_annulus_se)
        return abs(self.moment_mu - self.moment_annulus) / den if den > 0 else 0.0

    def passed(self, k: float = 3.0) -> bool:
        return (self.moment_annulus - k * self.moment_annulus_se <= self.lp_bound
                and self.linf_empirical <= self.linf_bound * (1 + 1e-9))


def _log_ratio(body: OrliczBody, x, gauge, Z_Ew):
    return body.V(x) - body.E - body.n * (gauge - 1.0) - math.log(Z_Ew)


def density_ratio_moment(body: OrliczBody, Z_E: float, w0: float, p: float, count: int, seed: int = 0,
                         c_fit: float | None = None, annulus: SampleBatch | None = None) -> DensityRatioReport:
    """``int (d mu_{K_E,w} / d mu)^p d mu`` two ways, with the bounds it should satisfy.

    Route one averages ``ratio^p`` over draws from ``mu``; route two averages
    ``ratio^(p-1)`` over draws from the annulus measure (exactly 1 for p = 1).
    """
    n = body.n
    prod = body.prod
    w = w0 / math.sqrt(n)
    Z_Ew = Z_E * annulus_probability(n, w)
    c = fitted_gamma_constant(n) if c_fit is None else c_fit
    a_inf = prod.AInf2

    rng = np.random.default_rng([seed, 23])
    x = prod.sample(count, rng)
    g = body.gauge(x)
    inside = (g >= 1.0 - w) & (g <= 1.0)
    vals = np.zeros(count)
    vals[inside] = np.exp(p * _log_ratio(body, x[inside], g[inside], Z_Ew))
    m1, s1 = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(count))

    annulus = annulus or sample_radial(body, count, seed, w=w)
    ga = body.gauge(annulus.points)
    lr = _log_ratio(body, annulus.points, ga, Z_Ew)
    m2, s2 = annulus.mean_se(np.exp((p - 1.0) * lr))

    def lp(cc):
        return (1 + SQRT_2PI) / Z_E ** p / (cc * w0) ** p * math.exp(8 * p * p * w0 * w0 * a_inf ** 2)

    return DensityRatioReport(
        p=p, w0=w0, moment_mu=m1, moment_mu_se=s1, moment_annulus=float(m2), moment_annulus_se=float(s2),
        lp_bound=lp(c) if math.isfinite(a_inf) else math.inf,
        lp_bound_conservative=lp(0.1) if math.isfinite(a_inf) else math.inf,
        linf_empirical=float(np.exp(lr.max())),
        linf_bound=math.exp(w0 * math.sqrt(n)) / (c * w0 * Z_E),
        c_fit=c, Z_E=Z_E)


# ----------------------------------------------------------------------------
# W1 coupling and the Hardy-type inequality
# ----------------------------------------------------------------------------


def euclidean(x):
    return np.linalg.norm(x, axis=-1)


@dataclass(frozen=True)
class CouplingReport:
    cost: float
    cost_se: float
    bound: float
    bound_se: float
    w: float

    def passed(self, k: float = 3.0) -> bool:
        return self.cost <= self.bound + k * math.hypot(self.cost_se, self.bound_se)


def w1_radial_coupling(body: OrliczBody, w: float, count: int, seed: int = 0, norm0=euclidean,
                       uniform: SampleBatch | None = None) -> CouplingReport:
    """Cost of the coupling ``x -> x / ||x||`` from the annulus onto the cone measure.

    The cost bounds the Wasserstein distance from above; the reference value is
    ``(n+1)/n * w * E_lambda ||x||_0``.
    """
    n = body.n
    uniform = uniform or sample_uniform(body, count, seed)
    ann = sample_radial(body, count, seed, w=w, uniform=uniform)
    g = body.gauge(ann.points)
    cost, cost_se = ann.mean_se(norm0(ann.points / g[:, None] - ann.points))
    m, m_se = uniform.mean_se(norm0(uniform.points))
    k = (n + 1) / n * w
    return CouplingReport(float(cost), float(cost_se), k * m, k * m_se, w)


@dataclass(frozen=True)
class HardyReport:
    name: str
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    def passed(self, k: float = 3.0) -> bool:
        return self.lhs <= self.rhs + k * math.hypot(self.lhs_se, self.rhs_se)


def first_moment_concentration(batch: SampleBatch, f) -> float:
    """``int |f - med f| d nu`` under the empirical measure."""
    v = f(batch.points)
    return float(np.abs(v - np.median(v)).mean())


def hardy_first_moment_check(body: OrliczBody, f: TrialFunction, uniform: SampleBatch, cone: SampleBatch,
                             norm0=euclidean) -> HardyReport:
    """``E_lambda |f - med| <= (1/n) E_lambda ||x||_0 + E_sigma |f - med_sigma|``."""
    n = body.n
    fu = f(uniform.points)
    fc = f(cone.points)
    lhs, lhs_se = uniform.mean_se(np.abs(fu - np.median(fu)))
    a, a_se = uniform.mean_se(norm0(uniform.points) / n)
    b, b_se = cone.mean_se(np.abs(fc - np.median(fc)))
    # the two sides come from the same chains; adding errors is conservative
    return HardyReport(f.name, float(lhs), float(lhs_se), float(a + b), float(a_se + b_se))


def z_e_from_profile(profile, E: float) -> float:
    return float(profile.Z(np.array([E]))[0])


def z_e_from_volume(n: int, E: float, volume: float) -> float:
    return stirling_ratio(n) * math.exp(-E) * volume
