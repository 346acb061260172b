"""The level set ``K_E = {V <= E}`` as a computational body, and samplers on it.

Samplers:

* ``uniform``  -- hit-and-run chains for the uniform measure on ``K_E``;
* ``cone``     -- the push-forward of ``uniform`` under ``x -> x / ||x||``;
* ``radial``   -- density proportional to ``exp(-n ||x||)``: cone direction
  times a ``Gamma(n, rate n)`` radius;
* ``annulus``  -- the same with the radius truncated to ``[1 - w, 1]``.

Randomness comes from one master seed split with ``SeedSequence.spawn``;
chains run in fixed-size batches, each with its own stream, so results do not
depend on how batches are scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gammaincinv

from .errors import InsufficientSamples, NotInside
from .potential1d import ProductPotential, level_roots_raw
from .quadrature import bracket_root

MEASURES = ("product", "uniform", "cone", "radial", "annulus")
BATCH_CHAINS = 256


class OrliczBody:
    """``K_E`` for a separable potential with ``V(0) < E``."""

    def __init__(self, prod: ProductPotential, E: float, tol: float = 1e-10):
        self.prod = prod
        self.E = float(E)
        self.tol = tol
        self.V0 = float(prod.eval(np.zeros(prod.n)))
        if not self.V0 < self.E:
            raise NotInside(f"origin not interior: V(0) = {self.V0} >= E = {self.E}")

    @property
    def n(self) -> int:
        return self.prod.n

    def V(self, x):
        return self.prod.eval(x)

    @property
    def box(self):
        """Coordinate bounding box ``[lo_i, hi_i]`` of ``K_E``."""
        lo, hi = [], []
        total_m = float(self.prod.m.sum())
        for c in self.prod.components:
            level = self.E - (total_m - c.m) - c.m
            a, b = level_roots_raw(c.raw, max(level, 0.0))
            lo.append(a / c.scale)
            hi.append(b / c.scale)
        return np.array(lo), np.array(hi)

    @property
    def diameter_bound(self) -> float:
        lo, hi = self.box
        return float(np.linalg.norm(hi - lo)) * 1.01 + 1e-12

    def contains(self, x):
        return self.V(x) <= self.E + self.tol * (self.E - self.V0)

    def gauge(self, x):
        """``inf{t > 0 : V(x / t) <= E}``, vectorized over rows."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        norm = np.linalg.norm(x, axis=1)
        out = np.zeros(x.shape[0])
        nz = norm > 0
        if not nz.any():
            return out
        xs = x[nz]
        # s = 1/gauge solves V(s x) = E; s * |x| is at most the box diameter
        s_hi = self.diameter_bound / norm[nz]
        f = lambda s: self.V(s[:, None] * xs) - self.E
        s = bracket_root(f, np.zeros(xs.shape[0]), s_hi, ftol=1e-12 * (self.E - self.V0))
        out[nz] = 1.0 / s
        return out

    def chord(self, x, u):
        """Parameters ``(t_lo, t_hi)`` with ``x + t u`` in ``K_E`` iff ``t_lo <= t <= t_hi``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if not np.all(self.contains(x)):
            raise NotInside("chord start point outside K_E")
        t_lo, t_hi = self._chord(x, u)
        return t_lo, t_hi

    def _chord(self, x, u):
        m = x.shape[0]
        xx = np.concatenate([x, x])
        uu = np.concatenate([u, -u])
        t = self._exit_time(xx, uu)
        return -t[m:], t[:m]

    def _exit_time(self, x, u, maxiter: int = 200):
        """Largest ``t >= 0`` with ``V(x + t u) <= E``.

        Newton's method from a point outside the body: the restriction of a
        convex function to a line is convex, so the iterates decrease
        monotonically onto the crossing.
        """
        t = np.full(x.shape[0], self.diameter_bound)
        ftol = 1e-12 * (self.E - self.V0)
        active = np.ones(x.shape[0], dtype=bool)
        for _ in range(maxiter):
            y = x[active] + t[active, None] * u[active]
            f = self.V(y) - self.E
            df = np.einsum("ij,ij->i", self.prod.grad(y), u[active])
            step = np.where(df > 0, f / np.where(df > 0, df, 1.0), 0.0)
            t[active] = np.maximum(t[active] - step, 0.0)
            done = (f <= ftol) | (step <= 1e-15 * np.maximum(t[active], 1e-300))
            idx = np.flatnonzero(active)
            active[idx[done]] = False
            if not active.any():
                break
        return t


# ----------------------------------------------------------------------------
# sample batches
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleBatch:
    """Points from one of the measures in :data:`MEASURES`.

    ``chain`` labels the independent stream each point came from; standard
    errors are computed from per-chain means.
    """

    measure: str
    points: np.ndarray
    seed: int
    E: float | None = None
    w: float | None = None
    chain: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ValueError(f"unknown measure {self.measure!r}")
        if self.chain is None:
            object.__setattr__(self, "chain", np.arange(len(self.points)) % 64)

    @property
    def count(self) -> int:
        return len(self.points)

    def mean_se(self, values):
        """Mean of ``values`` (one per point) and its standard error."""
        return grouped_mean_se(values, self.chain)


def grouped_mean_se(values, groups):
    values = np.asarray(values, dtype=float)
    labels, inv = np.unique(groups, return_inverse=True)
    sums = np.bincount(inv, weights=values, minlength=labels.size)
    counts = np.bincount(inv, minlength=labels.size)
    means = sums / np.maximum(counts, 1)
    mean = float(values.mean())
    k = labels.size
    if k < 2:
        return mean, float(values.std(ddof=1) / math.sqrt(max(values.size, 1)))
    # weighted batch-means variance of the overall mean
    w = counts / counts.sum()
    var = float(np.sum(w ** 2 * (means - mean) ** 2) * k / (k - 1))
    return mean, math.sqrt(var)


def _batch_rngs(seed: int, total_chains: int, batch: int = BATCH_CHAINS):
    nb = -(-total_chains // batch)
    children = np.random.SeedSequence(seed).spawn(nb)
    return [np.random.default_rng(c) for c in children]


def sample_uniform(body: OrliczBody, count: int, seed: int = 0, burnin: int | None = None,
                   thin: int | None = None, chains: int | None = None, method: str = "auto") -> SampleBatch:
    """Uniform points on ``K_E``.

    ``method="hit_and_run"`` runs chains from the origin. ``method="rejection"``
    draws ``X ~ mu`` and keeps it with probability ``exp(V(X) - E)`` on
    ``{V <= E}``, which is exact; its acceptance rate is ``exp(-E) Vol(K_E)``.
    ``"auto"`` picks rejection when a pilot run accepts at least 0.5%.
    """
    if method not in ("auto", "rejection", "hit_and_run"):
        raise ValueError(f"unknown method {method!r}")
    if method != "hit_and_run":
        rate = _acceptance_rate(body, seed)
        if method == "rejection" or rate >= 0.005:
            return _sample_uniform_rejection(body, count, seed, rate)
    return _sample_uniform_hit_and_run(body, count, seed, burnin, thin, chains)


def _accept(body: OrliczBody, x, rng):
    v = body.V(x)
    return (v <= body.E) & (rng.random(len(x)) < np.exp(np.minimum(v - body.E, 0.0)))


def _acceptance_rate(body: OrliczBody, seed: int, pilot: int = 4000) -> float:
    rng = np.random.default_rng([seed, 2])
    x = body.prod.sample(pilot, rng)
    return float(_accept(body, x, rng).mean())


def _sample_uniform_rejection(body: OrliczBody, count: int, seed: int, rate: float) -> SampleBatch:
    rng = np.random.default_rng([seed, 3])
    block = int(min(max(1.3 * count / max(rate, 1e-3), 1000), 200_000))
    kept, total = [], 0
    draws = 0
    while total < count:
        x = body.prod.sample(block, rng)
        draws += block
        x = x[_accept(body, x, rng)]
        kept.append(x)
        total += len(x)
        if draws > 1e9:
            raise InsufficientSamples("rejection sampler acceptance too low")
    points = np.concatenate(kept)[:count]
    diag = {"method": "rejection", "draws": draws, "acceptance": total / draws}
    return SampleBatch("uniform", points, seed, body.E, None, np.arange(count) % 64, diag)


def _sample_uniform_hit_and_run(body: OrliczBody, count: int, seed: int, burnin: int | None,
                                thin: int | None, chains: int | None) -> SampleBatch:
    n = body.n
    burnin = 10 * n * n if burnin is None else burnin
    thin = n if thin is None else thin
    chains = min(BATCH_CHAINS, count) if chains is None else chains
    per_chain = -(-count // chains)
    rngs = _batch_rngs(seed, chains)
    pts, labels = [], []
    for b, rng in enumerate(rngs):
        size = min(BATCH_CHAINS, chains - b * BATCH_CHAINS)
        x = np.zeros((size, n))
        kept = []
        for step in range(burnin + per_chain * thin):
            u = rng.standard_normal((size, n))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            t_lo, t_hi = body._chord(x, u)
            t = t_lo + (t_hi - t_lo) * rng.random(size)
            x = x + t[:, None] * u
            if step >= burnin and (step - burnin) % thin == thin - 1:
                kept.append(x.copy())
        arr = np.stack(kept, axis=1)  # chain, draw, coord
        pts.append(arr.reshape(-1, n))
        labels.append(np.repeat(np.arange(size) + b * BATCH_CHAINS, arr.shape[1]))
    points = np.concatenate(pts)[:count]
    chain = np.concatenate(labels)[:count]
    diag = {"method": "hit_and_run", "burnin": burnin, "thin": thin, "chains": chains,
            "per_chain": per_chain}
    return SampleBatch("uniform", points, seed, body.E, None, chain, diag)


def sample_cone(body: OrliczBody, count: int, seed: int = 0, uniform: SampleBatch | None = None,
                **kwargs) -> SampleBatch:
    """Cone measure: uniform points pushed radially onto the boundary."""
    uniform = uniform or sample_uniform(body, count, seed, **kwargs)
    x = uniform.points
    gauge = body.gauge(x)
    return SampleBatch("cone", x / gauge[:, None], uniform.seed, body.E, None, uniform.chain,
                       dict(uniform.diagnostics))


def truncated_gamma_radius(n: int, u, w: float | None = None):
    """Inverse CDF of ``Gamma(n, rate n)``, optionally truncated to ``[1 - w, 1]``."""
    u = np.asarray(u, dtype=float)
    if w is None:
        return gammaincinv(n, u) / n
    if not 0 < w <= 1:
        raise ValueError("w must lie in (0, 1]")
    lo = gammainc(n, n * (1.0 - w))
    hi = gammainc(n, n * 1.0)
    return np.clip(gammaincinv(n, lo + u * (hi - lo)) / n, 1.0 - w, 1.0)


def annulus_probability(n: int, w: float) -> float:
    """``P(R in [1 - w, 1])`` for ``R ~ Gamma(n, rate n)``; equals ``Z_{E,w} / Z_E``."""
    return float(gammainc(n, n) - gammainc(n, n * (1.0 - w)))


def sample_radial(body: OrliczBody, count: int, seed: int = 0, w: float | None = None,
                  cone: SampleBatch | None = None, **kwargs) -> SampleBatch:
    """Density proportional to ``exp(-n ||x||)`` on ``R^n`` (``w=None``) or on the annulus."""
    cone = cone or sample_cone(body, count, seed, **kwargs)
    rng = np.random.default_rng([seed, 1])
    r = truncated_gamma_radius(body.n, rng.random(cone.count), w)
    measure = "radial" if w is None else "annulus"
    return SampleBatch(measure, r[:, None] * cone.points, cone.seed, body.E, w, cone.chain,
                       dict(cone.diagnostics))


def sample_product(prod: ProductPotential, count: int, seed: int = 0) -> SampleBatch:
    rng = np.random.default_rng(seed)
    return SampleBatch("product", prod.sample(count, rng), seed)


def rejection_volume(body: OrliczBody, count: int, seed: int = 0):
    """Monte-Carlo volume of ``K_E`` from uniform points in its bounding box."""
    lo, hi = body.box
    rng = np.random.default_rng(seed)
    x = lo + (hi - lo) * rng.random((count, body.n))
    inside = body.contains(x)
    box = float(np.prod(hi - lo))
    p = inside.mean()
    return box * p, box * math.sqrt(p * (1 - p) / count)


# ----------------------------------------------------------------------------
# statistics
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class BodyStats:
    b_E: np.ndarray
    cov: np.ndarray
    d_lin: float
    count: int
    b_se: np.ndarray
    d_lin_se: float


def power_iteration(A, iters: int = 500, tol: float = 1e-13) -> float:
    x = np.ones(A.shape[0]) / math.sqrt(A.shape[0])
    lam = 0.0
    for _ in range(iters):
        y = A @ x
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        x = y / nrm
        new = float(x @ A @ x)
        if abs(new - lam) <= tol * max(abs(new), 1e-300):
            return new
        lam = new
    return lam


def psd_clip(C):
    C = 0.5 * (C + C.T)
    vals, vecs = np.linalg.eigh(C)
    return (vecs * np.maximum(vals, 0.0)) @ vecs.T


def body_stats(batch: SampleBatch, min_count: int = 1000) -> BodyStats:
    """Barycenter, covariance and ``D_lin = sqrt(||Cov||_op)`` with batch-means errors."""
    x = batch.points
    if len(x) < min_count:
        raise InsufficientSamples(f"{len(x)} samples, need {min_count}")
    b = x.mean(axis=0)
    cov = psd_clip(np.atleast_2d(np.cov(x, rowvar=False)))
    d_lin = math.sqrt(power_iteration(cov))
    b_se = np.array([batch.mean_se(x[:, i])[1] for i in range(x.shape[1])])
    # D_lin error from 16 disjoint groups of chains
    groups = np.unique(batch.chain) % 16
    gid = groups[np.searchsorted(np.unique(batch.chain), batch.chain)]
    reps = []
    for g in range(16):
        sel = x[gid == g]
        if len(sel) > x.shape[1] + 1:
            reps.append(math.sqrt(power_iteration(psd_clip(np.atleast_2d(np.cov(sel, rowvar=False))))))
    d_se = float(np.std(reps, ddof=1) / math.sqrt(len(reps))) if len(reps) > 1 else float("nan")
    return BodyStats(b, cov, d_lin, len(x), b_se, d_se)


def compare_to_mu(stats: BodyStats, prod: ProductPotential) -> dict:
    """Barycenter and covariance of ``K_E`` relative to those of ``mu``."""
    n = prod.n
    L = math.log(1 + n)
    d_mu = prod.d_lin_mu
    cov_mu = prod.variances
    inv_sqrt = 1.0 / np.sqrt(cov_mu)
    rel = stats.cov * inv_sqrt[:, None] * inv_sqrt[None, :]
    return {
        "barycenter_distance": float(np.linalg.norm(stats.b_E - prod.b_mu)),
        "barycenter_ratio": float(np.linalg.norm(stats.b_E - prod.b_mu) / (L * d_mu)),
        "covariance_ratio": float(np.linalg.eigvalsh(0.5 * (rel + rel.T)).max() / L ** 2),
        "d_lin_mu": d_mu,
    }


def grunbaum_fraction(batch: SampleBatch, b, theta):
    """Fraction (and SE) of points in the halfspace ``<x - b, theta> >= 0``."""
    ind = ((batch.points - b) @ np.asarray(theta) >= 0).astype(float)
    return batch.mean_se(ind)


def geweke_z(batch: SampleBatch, values) -> float:
    """Difference of first- and second-half means over chains, in SE units."""
    values = np.asarray(values, dtype=float)
    first = np.zeros(len(values), dtype=bool)
    for c in np.unique(batch.chain):
        idx = np.flatnonzero(batch.chain == c)
        first[idx[: len(idx) // 2]] = True
    m1, s1 = grouped_mean_se(values[first], batch.chain[first])
    m2, s2 = grouped_mean_se(values[~first], batch.chain[~first])
    return abs(m1 - m2) / math.sqrt(s1 ** 2 + s2 ** 2)
