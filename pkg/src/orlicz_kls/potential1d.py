"""One-dimensional convex potentials and the integrals taken against them.

A :class:`RawPotential` is a convex ``W: R -> [0, inf)`` with ``min W = 0``.
Normalizing it (``V = W + log z``) gives a probability density ``exp(-V)``;
rescaling ``V_i(y) = W_i(z y) + log z_i - log z`` with the geometric mean
``z`` of the ``z_i`` yields the components of a :class:`ProductPotential`
whose total potential has minimum zero.

All integrals are evaluated in raw coordinates ``u = s * y`` where the
density is ``exp(-W(u)) / z_raw``; the coefficients ``alpha`` are invariant
under that change of variables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats.sampling import NumericalInversePolynomial

from .errors import BelowMinimum, NonConvex, NonIntegrable, QuadratureFailure
from .quadrature import bracket_root, gauss_legendre, integrate

# exp(-TRUNC_LEVEL) = 1e-16: mass outside {W <= TRUNC_LEVEL} is negligible
TRUNC_LEVEL = 16.0 * math.log(10.0)
# wider window used to detect L2 integrals whose tails do not converge
TAIL_LEVEL = 60.0
QUAD_TOL = 1e-10
CDF_CELLS = 4096


# ----------------------------------------------------------------------------
# raw potentials
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class RawPotential:
    """A finite convex function with minimum 0, plus its derivative.

    ``deriv`` may take either one-sided value at a kink. ``minimizer`` is the
    leftmost point where the minimum is attained and ``minimizer_right`` the
    rightmost one (they differ only for flat bottoms).
    """

    eval: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    kinks: tuple = ()
    minimizer: float = 0.0
    minimizer_right: float | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    # the analytic object has a non-integrable L2 tail of W'(u) u that no
    # finite-precision window can exhibit
    l2_tail_divergent: bool = False
    validate: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kinks", tuple(sorted(float(k) for k in self.kinks)))
        if self.minimizer_right is None:
            object.__setattr__(self, "minimizer_right", float(self.minimizer))
        if self.validate:
            _validate_raw(self)

    def __call__(self, u):
        return self.eval(np.asarray(u, dtype=float))

    @cached_property
    def window(self) -> tuple[float, float]:
        return level_roots_raw(self, TRUNC_LEVEL)

    @cached_property
    def breakpoints(self) -> tuple:
        return tuple(sorted({*self.kinks, float(self.minimizer), float(self.minimizer_right)}))


def _expand_to_level(raw: RawPotential, level: float, side: int) -> float:
    start = raw.minimizer if side < 0 else raw.minimizer_right
    step = 1.0
    for _ in range(400):
        u = start + side * step
        val = float(raw.eval(np.array([u]))[0])
        if not np.isfinite(val):
            raise NonIntegrable(f"{raw.name}: non-finite value {val} at {u}")
        if val >= level:
            return u
        step *= 2.0
    raise NonIntegrable(f"{raw.name}: no growth to level {level} on side {side}")


def level_roots_raw(raw: RawPotential, level) -> tuple:
    """Endpoints of ``{raw <= level}`` (vectorized in ``level``)."""
    level = np.asarray(level, dtype=float)
    shape = level.shape
    flat = level.ravel()
    top = max(float(flat.max()) if flat.size else 0.0, 1e-300)
    out = []
    for side, start in ((-1, raw.minimizer), (+1, raw.minimizer_right)):
        far = _expand_to_level(raw, top, side)
        # geometric table of distances gives tight brackets near the minimizer too
        dist = np.abs(far - start) * np.concatenate([[0.0], np.geomspace(1e-14, 1.0, 600)])
        pts = start + side * dist
        ks = np.asarray([k for k in raw.kinks if side * (k - start) > 0 and abs(k - start) < abs(far - start)])
        if ks.size:
            pts = np.sort(np.concatenate([pts, ks]))[::side]
        vals = raw.eval(pts)
        vals[0] = 0.0
        vals = np.maximum.accumulate(vals)
        j = np.clip(np.searchsorted(vals, flat, side="left"), 1, pts.size - 1)
        a, b = pts[j - 1], pts[j]
        root = bracket_root(lambda u: raw.eval(u) - flat, a, b, ftol=1e-15 * np.maximum(flat, 1.0))
        out.append(root.reshape(shape))
    lo, hi = out
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def _validate_raw(raw: RawPotential):
    at_min = float(raw.eval(np.array([raw.minimizer]))[0])
    if not np.isfinite(at_min) or abs(at_min) > 1e-10:
        raise NonConvex(f"{raw.name}: value {at_min} at minimizer, expected 0")
    lo = _expand_to_level(raw, TRUNC_LEVEL, -1)
    hi = _expand_to_level(raw, TRUNC_LEVEL, +1)
    span = hi - lo
    grid = np.linspace(lo - 0.25 * span, hi + 0.25 * span, 4001)
    vals = raw.eval(grid)
    if not np.all(np.isfinite(vals)):
        raise NonIntegrable(f"{raw.name}: non-finite values on probe grid")
    if vals.min() < -1e-10:
        raise NonConvex(f"{raw.name}: negative value {vals.min()} (minimum must be 0)")
    second = vals[:-2] - 2.0 * vals[1:-1] + vals[2:]
    scale = 1e-9 * (np.abs(vals[:-2]) + np.abs(vals[2:]) + 1.0)
    if np.any(second < -scale):
        k = int(np.argmin(second + scale))
        raise NonConvex(f"{raw.name}: convexity probe fails near u={grid[k + 1]:.6g}")


def locate_minimizer(f, lo, hi, tol=1e-12):
    """Golden-section search for the leftmost minimizer of a convex ``f``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * max(1.0, abs(a), abs(b)):
        # ties move right endpoint left, keeping the leftmost minimizer
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


# ----------------------------------------------------------------------------
# families
# ----------------------------------------------------------------------------


def gaussian() -> RawPotential:
    return RawPotential(lambda u: 0.5 * u * u, lambda u: u, (), 0.0,
                        name="gaussian", params={})


def laplace() -> RawPotential:
    return RawPotential(np.abs, np.sign, (0.0,), 0.0, name="laplace", params={})


def power_asymmetric(p_plus: float, p_minus: float) -> RawPotential:
    """``u_+^p_plus + u_-^p_minus`` with both exponents at least 1."""
    if p_plus < 1 or p_minus < 1:
        raise NonConvex(f"exponents must be >= 1, got {p_plus}, {p_minus}")
    pp, pm = float(p_plus), float(p_minus)

    def f(u):
        u = np.asarray(u, dtype=float)
        return np.maximum(u, 0.0) ** pp + np.maximum(-u, 0.0) ** pm

    def df(u):
        u = np.asarray(u, dtype=float)
        return pp * np.maximum(u, 0.0) ** (pp - 1) * (u > 0) - pm * np.maximum(-u, 0.0) ** (pm - 1) * (u < 0)

    return RawPotential(f, df, (0.0,), 0.0, name="power_asymmetric",
                        params={"p_plus": pp, "p_minus": pm})


def power_symmetric(p: float) -> RawPotential:
    raw = power_asymmetric(p, p)
    return RawPotential(raw.eval, raw.deriv, raw.kinks, 0.0, name="power", params={"p": float(p)})


def piecewise_linear(knots: Sequence[float], slopes: Sequence[float]) -> RawPotential:
    """Convex piecewise-linear function from breakpoints and slopes.

    ``slopes`` has one more entry than ``knots``; the function is shifted so
    its minimum is zero.
    """
    knots = np.asarray(knots, dtype=float)
    slopes = np.asarray(slopes, dtype=float)
    if slopes.size != knots.size + 1 or knots.size == 0:
        raise NonConvex("need len(slopes) == len(knots) + 1 and at least one knot")
    if np.any(np.diff(knots) <= 0):
        raise NonConvex("knots must be strictly increasing")
    if np.any(np.diff(slopes) < 0):
        raise NonConvex("slopes must be nondecreasing for convexity")
    if not (slopes[0] < 0 < slopes[-1]):
        raise NonIntegrable("need a negative leftmost and positive rightmost slope")
    # values at knots, relative to the first knot
    vals = np.concatenate([[0.0], np.cumsum(slopes[1:-1] * np.diff(knots))])
    vmin = vals.min()
    vals = vals - vmin
    flat = np.flatnonzero(np.isclose(vals, 0.0, atol=1e-14))
    left, right = float(knots[flat[0]]), float(knots[flat[-1]])
    return _pl_from_values(knots, vals, slopes[0], slopes[-1], left, right,
                           "piecewise_linear", {"knots": knots.tolist(), "slopes": slopes.tolist()})


def table(points: Sequence[Sequence[float]]) -> RawPotential:
    """Convex interpolation of tabulated ``(u, W(u))`` points.

    Linear between points and extended with the end slopes.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise NonConvex("table needs at least three (u, value) points")
    order = np.argsort(pts[:, 0])
    x, v = pts[order, 0], pts[order, 1]
    if np.any(np.diff(x) <= 0):
        raise NonConvex("table abscissae must be distinct")
    slopes = np.diff(v) / np.diff(x)
    if np.any(np.diff(slopes) < -1e-12 * (1 + np.abs(slopes[1:]))):
        k = int(np.argmin(np.diff(slopes)))
        raise NonConvex(f"table is not convex near u={x[k + 1]:.6g}")
    if not (slopes[0] < 0 < slopes[-1]):
        raise NonIntegrable("table must decrease at the left end and increase at the right end")
    v = v - v.min()
    flat = np.flatnonzero(np.isclose(v, 0.0, atol=1e-14))
    return _pl_from_values(x, v, slopes[0], slopes[-1], float(x[flat[0]]), float(x[flat[-1]]),
                           "table", {"points": pts[order].tolist()})


def _pl_from_values(x, v, s_left, s_right, left, right, name, params):
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    inner = np.diff(v) / np.diff(x)
    all_slopes = np.concatenate([[s_left], inner, [s_right]])

    def f(u):
        u = np.asarray(u, dtype=float)
        out = np.interp(u, x, v)
        out = np.where(u < x[0], v[0] + s_left * (u - x[0]), out)
        return np.where(u > x[-1], v[-1] + s_right * (u - x[-1]), out)

    def df(u):
        u = np.asarray(u, dtype=float)
        return all_slopes[np.searchsorted(x, u, side="right")]

    return RawPotential(f, df, tuple(x.tolist()), left, right, name=name, params=params)


def shifted(raw: RawPotential, c: float) -> RawPotential:
    """``u -> raw(u - c)``."""
    c = float(c)
    return RawPotential(lambda u: raw.eval(np.asarray(u) - c), lambda u: raw.deriv(np.asarray(u) - c),
                        tuple(k + c for k in raw.kinks), raw.minimizer + c, raw.minimizer_right + c,
                        name=raw.name, params={**raw.params, "shift": c},
                        l2_tail_divergent=raw.l2_tail_divergent)


def from_function(f, df, kinks=(), bracket=(-50.0, 50.0), name="custom", params=None) -> RawPotential:
    """Wrap a convex function, locating its minimizer and shifting it to 0."""
    def scalar(u):
        return float(f(np.array([u]))[0])

    u0 = locate_minimizer(scalar, *bracket)
    fmin = scalar(u0)
    return RawPotential(lambda u: f(u) - fmin, df, kinks, u0, name=name, params=params or {})


def steep_tail() -> RawPotential:
    """Piecewise-linear potential whose slope jumps to ``exp(W)`` at each knot.

    Knots sit at u = 0, 1, 2, 3 with W(k+1) = W(k) + exp(W(k)). Continuing the
    construction forever makes ``||W'(u) u||_{L2}`` diverge (every piece adds
    about ``k**2``), which is flagged analytically since doubles cannot
    resolve pieces past the third.
    """
    levels = [0.0, 1.0]
    while len(levels) < 4:
        levels.append(levels[-1] + math.exp(levels[-1]))
    knots = np.arange(len(levels), dtype=float)
    slopes = [-1.0] + [math.exp(w) for w in levels[:-1]] + [math.exp(levels[-1])]
    raw = piecewise_linear(knots, slopes)
    return RawPotential(raw.eval, raw.deriv, raw.kinks, raw.minimizer, raw.minimizer_right,
                        name="steep_tail", params={}, l2_tail_divergent=True)


def log_square() -> RawPotential:
    """``u^2 log(1 + |u|)``: convex, between the quadratic and cubic growth rates."""
    def f(u):
        u = np.asarray(u, dtype=float)
        return u * u * np.log1p(np.abs(u))

    def df(u):
        u = np.asarray(u, dtype=float)
        a = np.abs(u)
        return 2.0 * u * np.log1p(a) + u * a / (1.0 + a)

    return RawPotential(f, df, (), 0.0, name="log_square", params={})


FAMILIES = {
    "gaussian": gaussian,
    "laplace": laplace,
    "power_asymmetric": power_asymmetric,
    "power": power_symmetric,
    "piecewise_linear": piecewise_linear,
    "table": table,
    "steep_tail": steep_tail,
    "log_square": log_square,
}


def make_raw(kind: str, **params) -> RawPotential:
    try:
        factory = FAMILIES[kind]
    except KeyError:
        raise NonConvex(f"unknown potential family {kind!r}") from None
    return factory(**params)


# ----------------------------------------------------------------------------
# normalized potentials
# ----------------------------------------------------------------------------


class NormalizedPotential:
    """``V(y) = W(scale * y) + offset`` with ``exp(-V)`` a probability density."""

    def __init__(self, raw: RawPotential, scale: float, offset: float, z_raw: float, quad_tol: float = QUAD_TOL):
        self.raw = raw
        self.scale = float(scale)
        self.offset = float(offset)
        self.z_raw = float(z_raw)
        self.quad_tol = quad_tol

    def __repr__(self):
        return f"NormalizedPotential({self.raw.name}, scale={self.scale:.6g}, m={self.m:.6g})"

    # -- pointwise ----------------------------------------------------------
    def eval(self, y):
        return self.raw.eval(self.scale * np.asarray(y, dtype=float)) + self.offset

    def deriv(self, y):
        return self.scale * self.raw.deriv(self.scale * np.asarray(y, dtype=float))

    __call__ = eval

    @property
    def kinks(self):
        return tuple(k / self.scale for k in self.raw.kinks)

    @property
    def minimizer(self):
        return self.raw.minimizer / self.scale

    @property
    def m(self) -> float:
        return self.offset

    @property
    def z(self) -> float:
        return self.z_raw

    @property
    def trunc(self) -> tuple[float, float]:
        lo, hi = self.raw.window
        return lo / self.scale, hi / self.scale

    def pdf(self, y):
        return np.exp(-self.eval(y))

    # -- raw-coordinate expectations -----------------------------------------
    def raw_mean(self, g, window=None):
        """``E[g(U)]`` for ``U`` with density ``exp(-W(u)) / z_raw``."""
        lo, hi = self.raw.window if window is None else window
        val, _ = integrate(lambda u: g(u) * np.exp(-self.raw.eval(u)), lo, hi,
                           self.raw.breakpoints, rtol=self.quad_tol)
        return val / self.z_raw

    @cached_property
    def _raw_first_moment(self):
        return self.raw_mean(lambda u: u)

    @cached_property
    def barycenter(self) -> float:
        return self._raw_first_moment / self.scale

    @cached_property
    def variance(self) -> float:
        c = self._raw_first_moment
        return self.raw_mean(lambda u: (u - c) ** 2) / self.scale ** 2

    @cached_property
    def expected_potential(self) -> float:
        return self.raw_mean(self.raw.eval) + self.offset

    @cached_property
    def potential_variance(self) -> float:
        """Variance of ``V(X)`` under ``mu``."""
        c = self.expected_potential - self.offset
        return self.raw_mean(lambda u: (self.raw.eval(u) - c) ** 2)

    # -- CDF table for level-set masses and sampling ---------------------------
    @cached_property
    def _cdf_table(self):
        lo, hi = self.raw.window
        nodes = np.union1d(np.linspace(lo, hi, CDF_CELLS + 1),
                           [b for b in self.raw.breakpoints if lo < b < hi])
        x, w = gauss_legendre(10)
        a, b = nodes[:-1], nodes[1:]
        half, mid = 0.5 * (b - a), 0.5 * (b + a)
        pts = mid[:, None] + half[:, None] * x[None, :]
        cell = (np.exp(-self.raw.eval(pts)) * w).sum(axis=1) * half / self.z_raw
        cum = np.concatenate([[0.0], np.cumsum(cell)])
        return nodes, cum

    def raw_cdf(self, u):
        """``P(U <= u)`` in raw coordinates."""
        nodes, cum = self._cdf_table
        u = np.clip(np.asarray(u, dtype=float), nodes[0], nodes[-1])
        j = np.clip(np.searchsorted(nodes, u, side="right") - 1, 0, nodes.size - 2)
        x, w = gauss_legendre(10)
        half = 0.5 * (u - nodes[j])
        mid = 0.5 * (u + nodes[j])
        pts = mid[..., None] + half[..., None] * x
        part = (np.exp(-self.raw.eval(pts)) * w).sum(axis=-1) * half / self.z_raw
        return cum[j] + part

    def cdf(self, y):
        return self.raw_cdf(self.scale * np.asarray(y, dtype=float))

    @cached_property
    def _inverter(self):
        pot = self

        class _Density:
            def pdf(self, y):
                return math.exp(-float(pot.eval(np.array([y]))[0]))

        lo, hi = self.trunc
        return NumericalInversePolynomial(_Density(), domain=(lo, hi), center=self.minimizer,
                                          u_resolution=1e-12)

    def raw_quantile(self, q):
        nodes, cum = self._cdf_table
        q = np.clip(np.asarray(q, dtype=float), 0.0, 1.0)
        j = np.clip(np.searchsorted(cum, q * cum[-1], side="right") - 1, 0, nodes.size - 2)
        a, b = nodes[j], nodes[j + 1]
        frac = np.where(cum[j + 1] > cum[j], (q * cum[-1] - cum[j]) / np.maximum(cum[j + 1] - cum[j], 1e-300), 0.5)
        x = a + np.clip(frac, 0.0, 1.0) * (b - a)
        for _ in range(6):
            dens = np.exp(-self.raw.eval(x)) / self.z_raw
            step = (self.raw_cdf(x) - q * cum[-1]) / np.maximum(dens, 1e-300)
            x = np.clip(x - step, a, b)
        return x


# ----------------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------------


def _raw_z(raw: RawPotential, quad_tol: float) -> float:
    lo, hi = raw.window
    z, err = integrate(lambda u: np.exp(-raw.eval(u)), lo, hi, raw.breakpoints, rtol=quad_tol)
    if not np.isfinite(z) or z <= 0:
        raise NonIntegrable(f"{raw.name}: normalization {z}")
    return z


def normalize_1d(raw: RawPotential, quad_tol: float = QUAD_TOL) -> tuple[float, NormalizedPotential]:
    """Return ``z = int exp(-W)`` and the probability potential ``W + log z``."""
    z = _raw_z(raw, quad_tol)
    return z, NormalizedPotential(raw, 1.0, math.log(z), z, quad_tol)


def rescale(p: NormalizedPotential, s: float) -> NormalizedPotential:
    """``y -> V(s y) - log s``, still a probability potential."""
    scale = p.scale * s
    return NormalizedPotential(p.raw, scale, math.log(p.z_raw) - math.log(scale), p.z_raw, p.quad_tol)


def barycenter_1d(p: NormalizedPotential) -> float:
    return p.barycenter


def expected_potential_1d(p: NormalizedPotential) -> float:
    return p.expected_potential


def alpha2(p: NormalizedPotential, b: float) -> float:
    """``|| V'(y) (y - b) ||_{L2(mu)}``; ``inf`` when the tail does not converge."""
    if p.raw.l2_tail_divergent:
        return math.inf
    sb = p.scale * float(b)

    def g(u):
        return (p.raw.deriv(u) * (u - sb)) ** 2

    core = p.raw_mean(g)
    lo, hi = p.raw.window
    wlo, whi = level_roots_raw(p.raw, TAIL_LEVEL)
    tail = p.raw_mean(g, (wlo, lo)) + p.raw_mean(g, (hi, whi))
    if not np.isfinite(core) or tail > 1e-6 * max(core, 1.0):
        return math.inf
    return math.sqrt(core + tail)


def negative_part_sup(p: NormalizedPotential, b: float) -> float:
    """Essential sup of ``(V'(y) (y - b))_-`` under ``mu``.

    The product is negative only between ``b`` and the minimizer, so the scan
    covers that interval; kinks contribute both one-sided slopes.
    """
    sb = p.scale * float(b)
    a, c = sorted((sb, p.raw.minimizer))
    if c - a <= 0:
        return 0.0

    def neg(u):
        return np.maximum(-(p.raw.deriv(u) * (u - sb)), 0.0)

    grid = np.linspace(a, c, 20001)
    best = float(neg(grid).max())
    for k in p.raw.kinks:
        if a <= k <= c:
            eps = 1e-12 * max(1.0, abs(k))
            best = max(best, float(neg(np.array([k - eps, k + eps])).max()))
    k = int(np.argmax(neg(grid)))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda u: -float(neg(np.array([u]))[0]), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-13})
        best = max(best, -float(res.fun))
    return best


def alpha_inf2(p: NormalizedPotential, b: float) -> float:
    a2 = alpha2(p, b)
    return max(1.0 + negative_part_sup(p, b), a2)


def level_length(p: NormalizedPotential, t):
    """Endpoints ``(a_-, a_+)`` of ``{V <= t}``; vectorized in ``t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < p.m - 1e-12):
        raise BelowMinimum(f"level {t.min()} below minimum {p.m}")
    lo, hi = level_roots_raw(p.raw, np.maximum(t - p.offset, 0.0))
    if np.ndim(lo) == 0:
        return lo / p.scale, hi / p.scale
    return lo / p.scale, hi / p.scale


def sample_1d(p: NormalizedPotential, u):
    """Inverse-CDF draw(s) from ``mu`` for uniform(s) ``u``.

    Uses a polynomial interpolant of the inverse CDF (u-error below 1e-12).
    """
    u = np.asarray(u, dtype=float)
    return np.asarray(p._inverter.ppf(u), dtype=float).reshape(u.shape)


# ----------------------------------------------------------------------------
# gridded laws
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class GriddedDensity:
    """Point masses at ``origin + j * spacing``.

    Each mass stands for the probability of the cell of width ``spacing``
    centred on its node.
    """

    origin: float
    spacing: float
    mass: np.ndarray

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        m = np.asarray(self.mass, dtype=float)
        if np.any(m < -1e-15):
            raise ValueError("masses must be nonnegative")
        object.__setattr__(self, "mass", np.maximum(m, 0.0))

    @property
    def nodes(self):
        return self.origin + self.spacing * np.arange(self.mass.size)

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    @property
    def mean(self) -> float:
        return float((self.nodes * self.mass).sum() / self.mass.sum())

    @property
    def density(self):
        return self.mass / self.spacing


def tilted_law(p: NormalizedPotential, spacing: float, upper: float | None = None, tol: float = 1e-12) -> GriddedDensity:
    """Law of ``V(X)`` for ``X ~ exp(-V)``, as cell masses on a uniform grid.

    The grid starts at the minimum ``m`` (first cell is the half-cell
    ``[m, m + h/2)``) and runs to ``upper`` (default: the truncation level).
    """
    m = p.m
    if upper is None:
        upper = m + TRUNC_LEVEL
    count = int(math.ceil((upper - m) / spacing)) + 1
    nodes = m + spacing * np.arange(count)
    edges = np.concatenate([[m], nodes[1:] - 0.5 * spacing, [nodes[-1] + 0.5 * spacing]])
    lo, hi = level_roots_raw(p.raw, edges - m)
    below = p.raw_cdf(hi) - p.raw_cdf(lo)
    below[0] = 0.0
    mass = np.diff(below)
    deficit = 1.0 - below[-1]
    if deficit > tol:
        raise QuadratureFailure(f"grid too coarse or short: tilted-law mass deficit {deficit:.3e}")
    return GriddedDensity(m, spacing, mass)


# ----------------------------------------------------------------------------
# product potentials
# ----------------------------------------------------------------------------


class ProductPotential:
    """``V(x) = sum_i V_i(x_i)`` assembled from raw potentials by rescaling.

    Holds ``z`` (geometric mean of the ``z_i``), ``M = max exp(m_i)``, the
    barycenter ``b_mu`` and the criterion quantities ``A2`` and ``AInf2``
    evaluated at ``b_mu``.
    """

    def __init__(self, components: Sequence[NormalizedPotential], raws: Sequence[RawPotential], z_i, z):
        self.components = tuple(components)
        self.raws = tuple(raws)
        self.z_i = np.asarray(z_i, dtype=float)
        self.z = float(z)

    @property
    def n(self) -> int:
        return len(self.components)

    @cached_property
    def m(self):
        return np.array([c.m for c in self.components])

    @cached_property
    def M(self) -> float:
        return float(np.exp(self.m).max())

    @cached_property
    def b_mu(self):
        return np.array([c.barycenter for c in self.components])

    @cached_property
    def variances(self):
        return np.array([c.variance for c in self.components])

    @cached_property
    def expected_potentials(self):
        return np.array([c.expected_potential for c in self.components])

    @cached_property
    def alpha2s(self):
        return np.array([alpha2(c, b) for c, b in zip(self.components, self.b_mu)])

    @cached_property
    def neg_sups(self):
        return np.array([negative_part_sup(c, b) for c, b in zip(self.components, self.b_mu)])

    @cached_property
    def alpha_inf2s(self):
        return np.maximum(1.0 + self.neg_sups, self.alpha2s)

    @cached_property
    def A2(self) -> float:
        return float(np.sqrt(np.mean(self.alpha2s ** 2)))

    @cached_property
    def AInf2(self) -> float:
        return float(np.sqrt(np.mean(self.alpha_inf2s ** 2)))

    @property
    def E_V(self) -> float:
        return 1.0 + float(self.expected_potentials.sum())

    @property
    def d_lin_mu(self) -> float:
        return float(np.sqrt(self.variances.max()))

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for i, c in enumerate(self.components):
            out = out + c.eval(x[..., i])
        return out

    __call__ = eval

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([c.deriv(x[..., i]) for i, c in enumerate(self.components)], axis=-1)

    def sample(self, count: int, rng: np.random.Generator):
        """``count`` independent draws from the product measure."""
        u = rng.random((count, self.n))
        return np.stack([sample_1d(c, u[:, i]) for i, c in enumerate(self.components)], axis=1)


def assemble_product(raws: Sequence[RawPotential], quad_tol: float = QUAD_TOL) -> ProductPotential:
    if len(raws) < 1:
        raise ValueError("need at least one coordinate")
    # identical raw objects share one normalization
    cache: dict[int, tuple[float, NormalizedPotential]] = {}
    normed = []
    for r in raws:
        if id(r) not in cache:
            cache[id(r)] = normalize_1d(r, quad_tol)
        normed.append(cache[id(r)])
    z_i = np.array([z for z, _ in normed])
    z = float(np.exp(np.mean(np.log(z_i))))
    comps = []
    shared: dict[int, NormalizedPotential] = {}
    for r, (_, p) in zip(raws, normed):
        if id(r) not in shared:
            shared[id(r)] = rescale(p, z)
        comps.append(shared[id(r)])
    return ProductPotential(comps, raws, z_i, z)
