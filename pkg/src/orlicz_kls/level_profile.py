"""The level-volume profile ``phi(E) = exp(-E) Vol(K_E)`` of a separable potential.

``phi`` is the density of ``sum_i V_i(X_i) + Exp(1)`` with independent
``X_i ~ mu_i``. It is computed through the nested volumes

    F_1(t) = |{W_1 <= t}| / s_1,
    F_k(t) = (1 / s_k) * int_{W_k(u) <= t} F_{k-1}(t - W_k(u)) du,

where ``W_k = V_k - m_k`` in raw coordinates, so that
``Vol(K_E) = F_n(E - sum_i m_i)``. Each ``log F_k`` is tabulated on a uniform
grid in ``v = log t`` and interpolated by a cubic spline; the inner integrals
use tanh-sinh rules split at the minimizer and kinks of ``W_k``.

A second engine convolves the gridded laws of ``V_i(X_i)`` directly and is
kept as an independent cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.signal import fftconvolve
from scipy.special import gammainc, gammaincinv, gammaln

from .errors import EmptyLevelSet, GridDeficit, RouteMismatch
from .potential1d import (GriddedDensity, NormalizedPotential, ProductPotential, TRUNC_LEVEL,
                          level_roots_raw, tilted_law)
from .quadrature import bracket_root, gauss_legendre, tanh_sinh


@dataclass(frozen=True)
class ProfileGrid:
    """Resolution of the profile engine.

    ``points`` nodes in ``v = log t`` span ``[log t_lo, log t_hi]``; ``t_hi``
    defaults to a level beyond which the mass of ``phi`` is below ``1e-16``.
    """

    points: int = 1400
    t_lo: float = 1e-8
    t_hi: float | None = None
    ts_step: float = 1.0 / 12.0
    chunk: int = 256


def _log_model_threshold(n: int, q: float) -> float:
    """``log(exp(-q) n^n exp(-n) / n!)``."""
    return -q + n * math.log(n) - n - float(gammaln(n + 1))


def c_n(n: int, q: float = 1.0) -> float:
    """``exp(-q/n) (n/e) / (n!)^(1/n)``."""
    return math.exp(-q / n + math.log(n) - 1.0 - float(gammaln(n + 1)) / n)


def stirling_ratio(n: int) -> float:
    """``n! e^n / n^n``."""
    return math.exp(float(gammaln(n + 1)) + n - n * math.log(n))


# ----------------------------------------------------------------------------
# nested volume engine
# ----------------------------------------------------------------------------


def _level_length(comp: NormalizedPotential, t):
    t = np.asarray(t, dtype=float)
    pos = np.maximum(t, 0.0)
    lo, hi = level_roots_raw(comp.raw, pos)
    return np.where(t > 0, (hi - lo) / comp.scale, 0.0)


def _kink_levels(comp: NormalizedPotential):
    """Values of ``W`` at kinks away from the minimum; ``F_1`` has kinks there."""
    raw = comp.raw
    if not raw.kinks:
        return np.empty(0)
    vals = raw.eval(np.asarray(raw.kinks))
    return np.unique(vals[vals > 1e-12])


class _SplineVolume:
    """``t -> F(t)`` from a spline of ``log F`` against ``log t``."""

    def __init__(self, v, logF):
        self.v = v
        self.logF = logF
        self.spline = CubicSpline(v, logF)
        d = self.spline(v[[0, -1]], 1)
        self.slope_lo, self.slope_hi = float(d[0]), float(d[1])

    def log(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = np.full(tau.shape, -np.inf)
        pos = tau > 0
        lv = np.log(tau[pos])
        val = self.spline(np.clip(lv, self.v[0], self.v[-1]))
        val = np.where(lv < self.v[0], self.logF[0] + self.slope_lo * (lv - self.v[0]), val)
        val = np.where(lv > self.v[-1], self.logF[-1] + self.slope_hi * (lv - self.v[-1]), val)
        out[pos] = val
        return out

    def __call__(self, tau):
        return np.exp(self.log(tau))


def _stage_volume(comp: NormalizedPotential, inner, t, extra_levels, ts_step, chunk):
    """``(1/s) int_{W(u) <= t} inner(t - W(u)) du`` for each entry of ``t``."""
    raw = comp.raw
    x, w, gap = tanh_sinh(ts_step)
    fixed = np.asarray(raw.breakpoints)
    out = np.empty(t.shape)
    for start in range(0, t.size, chunk):
        tc = t[start:start + chunk]
        lo, hi = level_roots_raw(raw, tc)
        cuts = [lo[:, None], np.clip(fixed[None, :], lo[:, None], hi[:, None]), hi[:, None]]
        for lev in extra_levels:
            a, b = level_roots_raw(raw, np.maximum(tc - lev, 0.0))
            cuts.append(a[:, None])
            cuts.append(b[:, None])
        cuts = np.sort(np.concatenate(cuts, axis=1), axis=1)
        left, right = cuts[:, :-1], cuts[:, 1:]
        half = 0.5 * (right - left)
        # nodes measured from the nearer endpoint keep full relative precision there
        u = np.where(x < 0, left[..., None] + half[..., None] * gap,
                     right[..., None] - half[..., None] * gap)
        tau = tc[:, None, None] - raw.eval(u)
        vals = inner(tau)
        out[start:start + chunk] = ((vals * w).sum(axis=2) * half).sum(axis=1)
    return out / comp.scale


def _auto_t_hi(components: Sequence[NormalizedPotential]) -> float:
    mean = sum(c.expected_potential - c.m for c in components) + 1.0
    var = sum(c.potential_variance for c in components) + 1.0
    return mean + 12.0 * math.sqrt(var) + 40.0


# ----------------------------------------------------------------------------
# profile object
# ----------------------------------------------------------------------------


class LevelProfile:
    """``phi(E) = exp(-E) Vol(K_E)`` with the quantities derived from it."""

    def __init__(self, n: int, offset: float, volume: _SplineVolume, q_default: float = 1.0):
        self.n = n
        self.offset = float(offset)
        self.volume = volume
        self.q_default = q_default

    # -- pointwise ----------------------------------------------------------
    @property
    def v(self):
        return self.volume.v

    def log_volume(self, E):
        return self.volume.log(np.asarray(E, dtype=float) - self.offset)

    def log_phi(self, E):
        E = np.asarray(E, dtype=float)
        return self.log_volume(E) - E

    def phi(self, E):
        return np.exp(self.log_phi(E))

    def g(self, E):
        """``Vol(K_E)^(1/n)``."""
        return np.exp(self.log_volume(E) / self.n)

    def log_Z(self, E):
        return self.log_phi(E) + math.log(stirling_ratio(self.n))

    def Z(self, E):
        return np.exp(self.log_Z(E))

    @property
    def support_start(self) -> float:
        return max(self.offset, 0.0)

    # -- cell integrals on the v-grid ----------------------------------------
    def _density_v(self, v):
        """Density of ``E`` with respect to ``v = log(E - offset)``."""
        t = np.exp(v)
        return np.exp(self.volume.log(t) - (self.offset + t) + v)

    @cached_property
    def _cells(self):
        v = self.v
        x, w = gauss_legendre(8)
        half = 0.5 * np.diff(v)
        mid = 0.5 * (v[1:] + v[:-1])
        pts = mid[:, None] + half[:, None] * x
        dens = self._density_v(pts)
        mass = (dens * w).sum(axis=1) * half
        first = ((self.offset + np.exp(pts)) * dens * w).sum(axis=1) * half
        # analytic tail below the grid, using the power-law extrapolation
        head = math.exp(self.volume.logF[0] - self.offset + v[0]) / (self.volume.slope_lo + 1.0)
        head_first = head * self.offset
        cum = np.concatenate([[head], head + np.cumsum(mass)])
        return cum, head_first + first.sum()

    @property
    def total_mass(self) -> float:
        return float(self._cells[0][-1])

    @property
    def mean(self) -> float:
        """Barycenter of ``phi``."""
        return float(self._cells[1] / self.total_mass)

    def cdf(self, E):
        E = np.asarray(E, dtype=float)
        cum, _ = self._cells
        t = np.maximum(E - self.offset, 1e-300)
        v = np.clip(np.log(t), self.v[0], self.v[-1])
        j = np.clip(np.searchsorted(self.v, v, side="right") - 1, 0, self.v.size - 2)
        x, w = gauss_legendre(8)
        half = 0.5 * (v - self.v[j])
        mid = 0.5 * (v + self.v[j])
        part = (self._density_v(mid[..., None] + half[..., None] * x) * w).sum(axis=-1) * half
        out = (cum[j] + part) / cum[-1]
        below = np.log(t) < self.v[0]
        out = np.where(below, cum[0] / cum[-1] * np.exp((self.volume.slope_lo + 1) * (np.log(t) - self.v[0])), out)
        return np.where(E <= self.offset, 0.0, out)

    def quantile(self, p):
        """Inverse of :meth:`cdf` (vectorized)."""
        p = np.asarray(p, dtype=float)
        cum, _ = self._cells
        target = p * cum[-1]
        j = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, self.v.size - 2)
        lo = self.offset + np.exp(self.v[j])
        hi = self.offset + np.exp(self.v[j + 1])
        return bracket_root(lambda e: self.cdf(e) - p, lo, hi, xtol=1e-12)

    # -- extremal quantities ----------------------------------------------------
    def _h(self, v):
        return self.volume.log(np.exp(v)) - self.offset - np.exp(v)

    @cached_property
    def _argmax(self):
        v = self.v
        h = self._h(v)
        j = int(np.argmax(h))
        if j == 0:
            return self.offset + math.exp(v[0]), float(h[0])
        dh = lambda s: float(self.volume.spline(s, 1)) - math.exp(s)
        a, b = v[j - 1], v[min(j + 1, v.size - 1)]
        if dh(a) * dh(b) > 0:
            return self.offset + math.exp(v[j]), float(h[j])
        s = brentq(dh, a, b, xtol=1e-14, rtol=1e-15)
        return self.offset + math.exp(s), float(self._h(np.array([s]))[0])

    @property
    def t_g(self) -> float:
        return self._argmax[0]

    @property
    def M_g(self) -> float:
        return math.exp(self._argmax[1])

    def table(self, spacing: float, e_max: float | None = None):
        """Uniform-``E`` table with columns E, phi, Vol^(1/n), Z_E."""
        e_max = self.offset + math.exp(self.v[-1]) if e_max is None else e_max
        E = np.arange(self.support_start, e_max + 0.5 * spacing, spacing)
        return {"E": E, "phi": self.phi(E), "vol_root": self.g(E), "Z_E": self.Z(E)}


def build_profile(prod: ProductPotential | Sequence[NormalizedPotential], grid: ProfileGrid | None = None) -> LevelProfile:
    """Tabulate ``phi`` for the sum of the given components.

    Raises :class:`GridDeficit` when the resulting density does not integrate
    to one within ``1e-6``.
    """
    grid = grid or ProfileGrid()
    comps = list(prod.components if isinstance(prod, ProductPotential) else prod)
    n = len(comps)
    # coordinates with kinks away from their minimum go first, where their
    # level-length kinks are resolved exactly
    comps.sort(key=lambda c: -len(_kink_levels(c)))
    offset = float(sum(c.m for c in comps))
    t_hi = grid.t_hi if grid.t_hi is not None else _auto_t_hi(comps)
    v = np.linspace(math.log(grid.t_lo), math.log(t_hi), grid.points)
    t = np.exp(v)

    first = comps[0]
    F = _level_length(first, t)
    extra = _kink_levels(first)
    if extra.size:
        inner = lambda tau, c=first: _level_length(c, tau)
    else:
        inner = _SplineVolume(v, np.log(F))
    for k in range(1, n):
        F = _stage_volume(comps[k], inner, t, extra, grid.ts_step, grid.chunk)
        sv = _SplineVolume(v, np.log(F))
        inner, extra = sv, ()
    volume = _SplineVolume(v, np.log(F))
    prof = LevelProfile(n, offset, volume)
    if abs(prof.total_mass - 1.0) > 1e-6:
        raise GridDeficit(f"profile mass {prof.total_mass:.9f} differs from 1")
    return prof


# ----------------------------------------------------------------------------
# level sets and E_V
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelInterval:
    q: float
    E_min: float
    E_max: float

    @property
    def width(self) -> float:
        return self.E_max - self.E_min

    def __contains__(self, E) -> bool:
        return self.E_min - 1e-9 <= E <= self.E_max + 1e-9


def level_interval_q(profile: LevelProfile, q: float | None = None) -> LevelInterval:
    """``{E >= 0 : phi(E) >= exp(-q) n^n exp(-n) / n!}``."""
    q = profile.q_default if q is None else q
    if q < 0:
        raise ValueError("q must be nonnegative")
    thr = _log_model_threshold(profile.n, q)
    tg = profile.t_g
    top = float(profile.log_phi(np.array([tg]))[0])
    if top < thr - 1e-9:
        raise EmptyLevelSet(f"maximum of phi below the threshold (q={q})")
    # equality cases put the maximum on the threshold; absorb the rounding
    thr = min(thr, top)

    def f(E):
        return float(profile.log_phi(np.array([E]))[0]) - thr

    start = profile.support_start
    lo_end = max(start, profile.offset + math.exp(profile.v[0]))
    if f(lo_end) >= 0:
        e_min = start if profile.offset <= 0 or lo_end - start < 1e-7 else lo_end
    else:
        e_min = brentq(f, lo_end, tg, xtol=1e-12, rtol=1e-15)
    hi_end = profile.offset + math.exp(profile.v[-1])
    e_max = hi_end if f(hi_end) >= 0 else brentq(f, tg, hi_end, xtol=1e-12, rtol=1e-15)
    return LevelInterval(q, float(e_min), float(e_max))


def compute_ev(prod: ProductPotential | Sequence[NormalizedPotential], profile: LevelProfile, tol: float = 1e-6):
    """``E_V`` as ``1 + sum E V_i`` and as the barycenter of ``phi``."""
    comps = prod.components if isinstance(prod, ProductPotential) else prod
    route_a = 1.0 + float(sum(c.expected_potential for c in comps))
    route_b = profile.mean
    if abs(route_a - route_b) > tol * max(1.0, abs(route_a)):
        raise RouteMismatch(f"E_V routes disagree: {route_a!r} vs {route_b!r}")
    return route_a, route_b


def argmax_profile(profile: LevelProfile):
    return profile.t_g, profile.M_g


# ----------------------------------------------------------------------------
# contraction map onto the model profile
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ContractionMap:
    """Monotone transport ``T`` from ``t^n e^{-t}/n!`` onto ``phi``, sampled at quantiles."""

    s: np.ndarray
    T: np.ndarray
    T_at_n: float

    @property
    def slopes(self):
        return np.diff(self.T) / np.diff(self.s)

    @property
    def max_slope(self) -> float:
        return float(self.slopes.max())

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.T) >= -1e-12))


def build_contraction_map(profile: LevelProfile, points: int = 2001, tail: float = 1e-6) -> ContractionMap:
    n = profile.n
    p = np.linspace(tail, 1.0 - tail, points)
    s = gammaincinv(n + 1, p)
    T = profile.quantile(p)
    # T(n) = F^{-1}(F_0(n))
    T_n = float(profile.quantile(np.array([gammainc(n + 1, n)]))[0])
    return ContractionMap(s, T, T_n)


# ----------------------------------------------------------------------------
# property checks
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    bound: float
    detail: str = ""


def check_level_properties(prod: ProductPotential, profile: LevelProfile, q: float = 1.0, tol: float = 1e-6):
    """Evaluate the level-set assertions; returns a list of :class:`Check`."""
    n = profile.n
    lev = level_interval_q(profile, q)
    cq = c_n(n, q)
    ratio = stirling_ratio(n)
    ev_a, ev_b = compute_ev(prod, profile)
    vb = float(prod.eval(prod.b_mu))
    vol_min = float(profile.g(np.array([lev.E_min]))[0])
    vol_max = float(profile.g(np.array([lev.E_max]))[0])
    max_upper = math.e * cq * math.exp(math.exp(q) * ratio / n)
    lev1 = level_interval_q(profile, 1.0)
    checks = [
        Check("E_min <= n", lev.E_min <= n + tol, lev.E_min, n),
        Check("width >= q", lev.width >= q - tol, lev.width, q),
        Check("width <= e^q n! e^n / n^n", lev.width <= math.exp(q) * ratio + tol, lev.width, math.exp(q) * ratio),
        Check("Vol(K_Emin)^(1/n) >= c_n", vol_min >= cq * (1 - tol), vol_min, cq),
        Check("Vol(K_Emin)^(1/n) <= max(1, e c_n)", vol_min <= max(1.0, math.e * cq) * (1 + tol), vol_min,
              max(1.0, math.e * cq)),
        Check("Vol(K_Emax)^(1/n) >= c_n", vol_max >= cq * (1 - tol), vol_max, cq),
        Check("Vol(K_Emax)^(1/n) <= e c_n exp(e^q n! e^n / n^(n+1))", vol_max <= max_upper * (1 + tol), vol_max,
              max_upper),
        Check("E_V in Level(1)", ev_a in lev1, ev_a, lev1.E_max),
        Check("E_V <= n + 1", ev_a <= n + 1 + tol, ev_a, n + 1),
        Check("V(b_mu) <= E_V - 1", vb <= ev_a - 1 + tol, vb, ev_a - 1),
        Check("E_V - 1 <= min(E_max - 1, n)", ev_a - 1 <= min(lev1.E_max - 1, n) + tol, ev_a - 1,
              min(lev1.E_max - 1, n)),
        Check("t_g <= n", profile.t_g <= n + tol, profile.t_g, n),
        Check("M_g >= n^n e^-n / n!", math.log(profile.M_g) >= _log_model_threshold(n, 0.0) - tol,
              profile.M_g, math.exp(_log_model_threshold(n, 0.0))),
    ]
    return checks


# ----------------------------------------------------------------------------
# gridded convolution (cross-check engine)
# ----------------------------------------------------------------------------


def _exp_cells(spacing: float, count: int):
    j = np.arange(count)
    lo = np.maximum((j - 0.5) * spacing, 0.0)
    hi = (j + 0.5) * spacing
    return np.exp(-lo) - np.exp(-hi)


def convolve_tilted_laws(comps: Sequence[NormalizedPotential], spacing: float, method: str = "auto",
                         tail: float = TRUNC_LEVEL, tol: float = 1e-9) -> GriddedDensity:
    """Cell masses of ``sum_i V_i(X_i) + Exp(1)`` by repeated discrete convolution.

    ``method`` is ``"direct"``, ``"fft"`` or ``"auto"`` (direct up to 32 factors).
    """
    comps = list(comps)
    if method == "auto":
        method = "direct" if len(comps) <= 32 else "fft"
    conv = np.convolve if method == "direct" else fftconvolve
    laws = [tilted_law(c, spacing, c.m + tail) for c in comps]
    count = int(math.ceil((tail + 10.0) / spacing)) + 1
    mass = _exp_cells(spacing, count)
    origin = 0.0
    for law in laws:
        mass = np.maximum(conv(mass, law.mass), 0.0)
        origin += law.origin
    total = mass.sum()
    if total < 1.0 - tol:
        raise GridDeficit(f"convolution mass {total:.12f} short of 1")
    return GriddedDensity(origin, spacing, mass)
