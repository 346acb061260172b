"""Spectral quantities of uniform measures on level sets and of 1D log-concave laws.

The Neumann gap on ``n <= 3`` domains is a Ritz computation with bilinear
(trilinear) elements on the cells of a uniform grid, each cell integrated over
its intersection with the domain. The intersection is resolved by recursive
subdivision of boundary cells, with a linear-ramp volume fraction at the
finest level, so curved boundaries are captured to second order rather than
as a staircase.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage
from scipy.linalg import eigh_tridiagonal
from scipy.stats import norm, qmc

from .errors import ConvergenceFailure, DisconnectedDomain, EmptyDomain
from .geometry import OrliczBody, SampleBatch, body_stats, grouped_mean_se
from .potential1d import NormalizedPotential, ProductPotential, level_roots_raw

BESSEL_J1P_ZERO = 1.8411837813406593  # first positive zero of J_1'
SL_LEVEL = 400.0
NODE_MASS_FLOOR = 1e-10


# ----------------------------------------------------------------------------
# domains
# ----------------------------------------------------------------------------


def _corner_offsets(n):
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)


@lru_cache(maxsize=None)
def _moment_maps(n):
    """Linear maps from box moments ``int xi^alpha`` (``alpha in {0,1,2}^n``) to Q1 element matrices.

    Products of two Q1 shape functions (or of their partial derivatives) are
    polynomials of degree at most two in each coordinate, so element matrices
    over any covered region are fixed linear combinations of these moments.
    """
    corners = _corner_offsets(n)
    m = len(corners)
    val = {0: np.array([1.0, -1.0]), 1: np.array([0.0, 1.0])}
    der = {0: np.array([-1.0]), 1: np.array([1.0])}

    def tensor(factors):
        out = np.ones(())
        for f in factors:
            f = np.pad(f, (0, 3 - f.size))
            out = np.multiply.outer(out, f)
        return out.ravel()

    LK = np.zeros((m * m, 3 ** n))
    LM = np.zeros((m * m, 3 ** n))
    for a in range(m):
        for b in range(m):
            ca, cb = corners[a], corners[b]
            LM[a * m + b] = tensor([np.polynomial.polynomial.polymul(val[ca[j]], val[cb[j]]) for j in range(n)])
            for j in range(n):
                LK[a * m + b] += tensor([
                    np.polynomial.polynomial.polymul(der[ca[k]], der[cb[k]]) if k == j
                    else np.polynomial.polynomial.polymul(val[ca[k]], val[cb[k]]) for k in range(n)])
    return LK, LM


def _box_moments(center, size, weight):
    """Moments ``int xi^alpha`` of boxes (side ``size``) scaled by ``weight``; shape ``(q, 3^n)``."""
    q, n = center.shape
    one = np.full((q, n), size)
    first = size * center
    second = size * (center ** 2 + size ** 2 / 12.0)
    per = np.stack([one, first, second], axis=2)  # (q, n, 3)
    out = weight[:, None]
    for j in range(n):
        out = (out[:, :, None] * per[:, j, None, :]).reshape(q, 3 ** (j + 1))
    return out


def _full_cell_matrices(n):
    LK, LM = _moment_maps(n)
    mom = _box_moments(np.full((1, n), 0.5), 1.0, np.ones(1))[0]
    m = 2 ** n
    return (LK @ mom).reshape(m, m), (LM @ mom).reshape(m, m)


@dataclass(frozen=True)
class GridDomain:
    """Cells of a uniform grid carrying the volume of their intersection with a domain.

    ``fraction`` is the covered share of each cell; ``mask`` is ``fraction > 0``.
    Cut cells carry their element stiffness and mass matrices in reference
    units (unit cell), integrated over the covered part only.
    """

    origin: np.ndarray
    h: float
    fraction: np.ndarray
    cut_cells: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    cut_K: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0)))
    cut_M: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0)))
    level_fn: Callable | None = None
    box: tuple | None = None

    def __post_init__(self):
        if self.n > 3:
            raise ValueError("grid domains are limited to n <= 3")
        if not self.mask.any():
            raise EmptyDomain("no grid cell meets the domain")
        labels, count = ndimage.label(self.mask, structure=np.ones((3,) * self.n))
        if count > 1:
            raise DisconnectedDomain(f"mask has {count} components")

    @property
    def n(self) -> int:
        return self.fraction.ndim

    @property
    def mask(self) -> np.ndarray:
        return self.fraction > 0

    @property
    def shape(self):
        return self.fraction.shape

    @property
    def volume(self) -> float:
        return float(self.fraction.sum()) * self.h ** self.n

    def centers(self):
        axes = [self.origin[j] + (np.arange(s) + 0.5) * self.h for j, s in enumerate(self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @classmethod
    def from_mask(cls, mask, h: float, origin=None):
        """Whole-cell domain from a boolean mask."""
        mask = np.asarray(mask, dtype=bool)
        origin = np.zeros(mask.ndim) if origin is None else np.asarray(origin, dtype=float)
        return cls(origin, float(h), mask.astype(float))

    @classmethod
    def rectangle(cls, lower, upper, cells: int):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        h = float((upper - lower).min()) / cells
        shape = tuple(int(round(s)) for s in (upper - lower) / h)
        if not np.allclose(np.array(shape) * h, upper - lower):
            raise ValueError("rectangle sides must be commensurate with the cell size")
        return cls.from_mask(np.ones(shape, dtype=bool), h, lower)

    def refined(self) -> "GridDomain":
        """The same domain at half the cell size."""
        if self.level_fn is None:
            fine = self.fraction.repeat(2, axis=0)
            for j in range(1, self.n):
                fine = fine.repeat(2, axis=j)
            return GridDomain.from_mask(fine > 0, self.h / 2, self.origin)
        return voxelize_level_set(self.level_fn, self.box, self.h / 2)


def _ramp_fraction(psi, grad, width):
    """Covered share of a cube of side ``width`` from the level function at its center."""
    g = np.linalg.norm(grad, axis=-1)
    g = np.where(g > 0, g, 1e-300)
    d = psi / g
    ramp = width * np.abs(grad).sum(axis=-1) / g
    ramp = np.maximum(ramp, 1e-300)
    return np.clip(0.5 - d / ramp, 0.0, 1.0)


def _gradient_fd(level_fn, x, step):
    n = x.shape[-1]
    g = np.empty_like(x)
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        g[..., j] = (level_fn(x + e) - level_fn(x - e)) / (2 * step)
    return g


def voxelize_level_set(level_fn, box, h: float, depth: int | None = None) -> GridDomain:
    """Cut-cell discretization of ``{x : level_fn(x) <= 0}`` inside ``box``.

    ``level_fn`` maps ``(..., n)`` arrays to values; it should behave like a
    distance up to a bounded factor near the boundary. Boundary cells are
    subdivided ``depth`` times (default: until the sub-cell size is about
    ``h^2``, capped for ``n = 3``).
    """
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    n = lo.size
    if n > 3:
        raise ValueError("grid domains are limited to n <= 3")
    pad = 1.5 * h
    cells = np.ceil((hi - lo + 2 * pad) / h).astype(int)
    origin = 0.5 * (lo + hi) - 0.5 * cells * h
    if depth is None:
        depth = max(2, int(math.ceil(math.log2(max(1.0 / h, 2.0)))))
        depth = min(depth, 7 if n == 2 else 10 if n == 1 else 3)

    axes = [origin[j] + (np.arange(c) + 0.5) * h for j, c in enumerate(cells)]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    psi = level_fn(centers)
    grad = _gradient_fd(level_fn, centers, 1e-3 * h)
    gn = np.maximum(np.linalg.norm(grad, axis=1), 1e-300)
    dist = psi / gn
    reach = math.sqrt(n) * h  # generous: the distance estimate is only first order
    frac = np.where(dist <= 0, 1.0, 0.0)
    cut = np.flatnonzero(np.abs(dist) <= reach)

    # recursive subdivision of boundary cells; sub-cells are tracked by owner and
    # reference-coordinate center
    owner = cut.copy()
    sub_center = np.full((cut.size, n), 0.5)
    size = 1.0
    kids = (_corner_offsets(n) - 0.5)
    out_owner, out_mom = [], []
    for level in range(depth + 1):
        idx = np.stack(np.unravel_index(owner, tuple(cells)), axis=1)
        x = origin + (idx + sub_center) * h
        psi_s = level_fn(x)
        g_s = _gradient_fd(level_fn, x, 1e-3 * h * size)
        gn_s = np.maximum(np.linalg.norm(g_s, axis=1), 1e-300)
        d_s = psi_s / gn_s
        half_diag = 0.5 * math.sqrt(n) * h * size
        inside = d_s <= -1.5 * half_diag
        crossing = ~inside & (d_s <= 1.5 * half_diag)
        out_owner.append(owner[inside])
        out_mom.append(_box_moments(sub_center[inside], size, np.ones(inside.sum())))
        if level == depth:
            f = _ramp_fraction(psi_s[crossing], g_s[crossing], h * size)
            keep = f > 0
            out_owner.append(owner[crossing][keep])
            out_mom.append(_box_moments(sub_center[crossing][keep], size, f[keep]))
            break
        owner = np.repeat(owner[crossing], len(kids))
        sub_center = (sub_center[crossing][:, None, :] + 0.5 * size * kids[None, :, :]).reshape(-1, n)
        size *= 0.5

    cut_owner = np.concatenate(out_owner)
    local = -np.ones(frac.size, dtype=np.int64)
    local[cut] = np.arange(cut.size)
    gather = sp.csr_matrix((np.ones(cut_owner.size), (local[cut_owner], np.arange(cut_owner.size))),
                           shape=(cut.size, cut_owner.size))
    mom = np.asarray(gather @ np.concatenate(out_mom))
    frac[cut] = mom[:, 0]
    # cells with a negligible share only pollute the conditioning
    live = mom[:, 0] >= 1e-10
    frac[cut[~live]] = 0.0
    cut_cells = cut[live]
    LK, LM = _moment_maps(n)
    m = 2 ** n
    Ke = (mom[live] @ LK.T).reshape(-1, m, m)
    Me = (mom[live] @ LM.T).reshape(-1, m, m)
    return GridDomain(origin, float(h), frac.reshape(tuple(cells)), cut_cells, Ke, Me, level_fn, (lo, hi))


def voxelize(body: OrliczBody, h: float, depth: int | None = None) -> GridDomain:
    """Cut-cell grid for ``K_E`` with level function ``V - E``."""
    if body.n > 3:
        raise ValueError("grid domains are limited to n <= 3")
    lo, hi = body.box
    n = body.n

    def level(x):
        x = np.asarray(x, dtype=float)
        return body.V(x.reshape(-1, n)).reshape(x.shape[:-1]) - body.E
    return voxelize_level_set(level, (lo, hi), h, depth)


# ----------------------------------------------------------------------------
# Neumann eigenvalue
# ----------------------------------------------------------------------------


def _assemble(dom: GridDomain):
    n = dom.n
    shape = np.array(dom.shape)
    nshape = tuple(shape + 1)
    corners = _corner_offsets(n)
    K0, M0 = _full_cell_matrices(n)
    h = dom.h
    frac = dom.fraction.ravel()
    is_cut = np.zeros(frac.size, dtype=bool)
    is_cut[dom.cut_cells] = True
    full = np.flatnonzero((frac > 0) & ~is_cut)
    all_cells = np.flatnonzero(frac > 0)

    def node_ids(cells):
        idx = np.stack(np.unravel_index(cells, tuple(shape)), axis=1)
        nodes = idx[:, None, :] + corners[None, :, :]
        return np.ravel_multi_index(tuple(nodes.transpose(2, 0, 1)), nshape)

    rows, cols, kv, mv = [], [], [], []
    ids = node_ids(full)
    a, b = np.meshgrid(np.arange(len(corners)), np.arange(len(corners)), indexing="ij")
    rows.append(ids[:, a.ravel()].ravel())
    cols.append(ids[:, b.ravel()].ravel())
    kv.append(np.tile(K0.ravel() * h ** (n - 2), full.size))
    mv.append(np.tile(M0.ravel() * h ** n, full.size))

    if dom.cut_cells.size:
        ids_c = node_ids(dom.cut_cells)
        rows.append(np.repeat(ids_c, len(corners), axis=1).ravel())
        cols.append(np.tile(ids_c, (1, len(corners))).ravel())
        kv.append(dom.cut_K.ravel() * h ** (n - 2))
        mv.append(dom.cut_M.ravel() * h ** n)

    r = np.concatenate(rows)
    c = np.concatenate(cols)
    used = np.unique(node_ids(all_cells))
    remap = -np.ones(int(np.prod(nshape)), dtype=np.int64)
    remap[used] = np.arange(used.size)
    size = used.size
    K = sp.coo_matrix((np.concatenate(kv), (remap[r], remap[c])), shape=(size, size)).tocsc()
    M = sp.coo_matrix((np.concatenate(mv), (remap[r], remap[c])), shape=(size, size)).tocsc()
    # nodes that barely touch the domain make M numerically singular; dropping
    # them restricts the trial space, so the Ritz values stay upper bounds
    keep = M.diagonal() > NODE_MASS_FLOOR * h ** n * M0[0, 0]
    if not keep.all():
        K = K[keep][:, keep]
        M = M[keep][:, keep]
    return K, M


@dataclass(frozen=True)
class GapResult:
    lam: float
    residual: float
    h: float
    dofs: int
    lam_coarse: float | None = None
    error_estimate: float | None = None

    @property
    def d_poin(self) -> float:
        return 1.0 / math.sqrt(self.lam)


def _gap_single(dom: GridDomain, tol: float = 1e-8) -> GapResult:
    K, M = _assemble(dom)
    size = K.shape[0]
    if size < 3:
        raise ConvergenceFailure("too few degrees of freedom")
    # the constant mode has eigenvalue 0; a negative shift keeps the factorization regular
    scale = float(K.diagonal().mean() / M.diagonal().mean())
    sigma = -1e-3 * scale
    # fixed start vector: ARPACK's default is random and changes the last digits
    v0 = np.random.default_rng(0).standard_normal(size)
    vals, vecs = spla.eigsh(K, k=3, M=M, sigma=sigma, which="LM", tol=1e-12, v0=v0)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    ones = np.ones(size)
    # pick the first mode that is M-orthogonal to the constants
    overlap = np.abs(vecs.T @ (M @ ones)) / math.sqrt(ones @ (M @ ones))
    j = int(np.argmax(overlap < 0.5))
    lam = float(vals[j])
    v = vecs[:, j]
    res = float(np.linalg.norm(K @ v - lam * (M @ v)) / max(np.linalg.norm(K @ v), 1e-300))
    if not (lam > 0 and res < tol):
        raise ConvergenceFailure(f"eigenpair not converged: lambda={lam:.6g}, residual={res:.3g}")
    return GapResult(lam, res, dom.h, size)


def neumann_gap(dom: GridDomain, extrapolate: bool = True, tol: float = 1e-8) -> GapResult:
    """First nonzero Neumann eigenvalue; with ``extrapolate`` also solves at ``h/2``.

    The extrapolated value assumes second-order convergence and the error
    estimate is its distance to the finer solve.
    """
    coarse = _gap_single(dom, tol)
    if not extrapolate:
        return coarse
    fine = _gap_single(dom.refined(), tol)
    lam = (4.0 * fine.lam - coarse.lam) / 3.0
    return GapResult(lam, max(coarse.residual, fine.residual), fine.h, fine.dofs, coarse.lam, abs(lam - fine.lam))


# ----------------------------------------------------------------------------
# one-dimensional Sturm-Liouville problems
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Poincare1D:
    lam: float
    d_poin: float
    d_lin: float
    density_sup: float
    cells: int

    @property
    def bobkov_ratio(self) -> float:
        """``D_Poin^2 / Var``."""
        return (self.d_poin / self.d_lin) ** 2

    @property
    def sup_variance(self) -> float:
        """``||f||_inf^2 Var`` for the density ``f``."""
        return self.density_sup ** 2 * self.d_lin ** 2


def sturm_liouville_gap(V, a: float, b: float, cells: int, kinks: Sequence[float] = ()) -> float:
    """First nonzero eigenvalue of ``-(e^-V f')' = lam e^-V f`` on ``[a, b]`` with Neumann ends.

    Piecewise-linear elements with Gauss-integrated weights in the stiffness
    and a lumped mass matrix; both are second order.
    """
    nodes = np.linspace(a, b, cells + 1)
    inner = [k for k in kinks if a < k < b]
    if inner:
        nodes = np.unique(np.concatenate([nodes, inner]))
    dx = np.diff(nodes)
    gx, gw = np.polynomial.legendre.leggauss(3)
    mid = 0.5 * (nodes[:-1] + nodes[1:])
    pts = mid[:, None] + 0.5 * dx[:, None] * gx[None, :]
    vmin = float(np.min(V(pts)))
    dens = np.exp(-(V(pts) - vmin))
    cell_mass = 0.5 * dx * (dens * gw).sum(axis=1)
    stiff = cell_mass / dx ** 2
    mass = np.zeros(nodes.size)
    mass[:-1] += 0.5 * cell_mass
    mass[1:] += 0.5 * cell_mass
    diag = np.zeros(nodes.size)
    diag[:-1] += stiff
    diag[1:] += stiff
    off = -stiff
    s = 1.0 / np.sqrt(mass)
    d = diag * s * s
    e = off * s[:-1] * s[1:]
    vals = eigh_tridiagonal(d, e, select="i", select_range=(0, 1), eigvals_only=True)
    return float(vals[1])


def poincare_1d(p: NormalizedPotential, cells: int = 4000, level: float = SL_LEVEL) -> Poincare1D:
    """``D_Poin`` of ``exp(-V)`` on the line.

    The Neumann window is where ``V - min V <= level``, far wider than the
    mass window: for linear tails the truncated gap exceeds the true one by
    about ``(pi / window)^2``. ``cells`` sets the resolution of the mass window.
    """
    lo, hi = p.trunc
    step = (hi - lo) / cells
    a, b = (np.array(level_roots_raw(p.raw, level)) / p.scale)
    total = int(math.ceil((b - a) / step))
    lam = sturm_liouville_gap(p.eval, a, b, total, p.kinks)
    if not lam > 0:
        raise ConvergenceFailure(f"nonpositive gap {lam}")
    return Poincare1D(lam, 1.0 / math.sqrt(lam), math.sqrt(p.variance), float(p.pdf(p.minimizer)), total)


def product_poincare(prod: ProductPotential, cells: int = 4000) -> float:
    """``D_Poin(mu)`` by tensorization: the largest 1D constant."""
    cache = {}
    out = 0.0
    for c in prod.components:
        key = (id(c.raw), c.scale)
        if key not in cache:
            cache[key] = poincare_1d(c, cells).d_poin
        out = max(out, cache[key])
    return out


# ----------------------------------------------------------------------------
# sample-based witnesses
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class RayleighWitness:
    d_poin_lower: float
    se: float
    d_lin: float
    degree: int
    basis_size: int
    coefficients: np.ndarray


def _poly_basis(x, degree):
    """Monomials of degree 1..``degree`` in centered coordinates, with gradients."""
    count, n = x.shape
    vals, grads = [], []
    for d in range(1, degree + 1):
        for idx in itertools.combinations_with_replacement(range(n), d):
            vals.append(np.prod(x[:, idx], axis=1))
            g = np.zeros((count, n))
            for k in range(d):
                rest = idx[:k] + idx[k + 1:]
                g[:, idx[k]] += np.prod(x[:, rest], axis=1) if rest else 1.0
            grads.append(g)
    return np.stack(vals, axis=1), np.stack(grads, axis=1)


def gauge_gradient(body: OrliczBody, x):
    """Gradient of the gauge: ``grad V(y) / <grad V(y), y>`` at ``y = x / ||x||``."""
    g = body.gauge(x)
    y = x / g[:, None]
    dv = body.prod.grad(y)
    return dv / np.einsum("ij,ij->i", dv, y)[:, None]


def _features(points, center, degree, body):
    F, G = _poly_basis(points - center, degree)
    if body is not None:
        F = np.column_stack([F, body.gauge(points)])
        G = np.concatenate([G, gauge_gradient(body, points)[:, None, :]], axis=1)
    return F, G


def rayleigh_lower_bound(batch: SampleBatch, degree: int = 3, body: OrliczBody | None = None) -> RayleighWitness:
    """Best ``||f - mean||_2 / ||grad f||_2`` over polynomials (and the gauge), with a standard error.

    Odd cubics matter: on symmetric bodies the first eigenfunction is odd, so
    quadratics alone never beat the linear witness.

    The optimal combination is the top generalized eigenvector of the basis
    covariance against the Gram matrix of gradients. It is fitted on the
    even-indexed points and its quotient evaluated on the odd-indexed ones,
    which removes the upward bias of optimizing and evaluating on the same
    sample.
    """
    pts = batch.points
    center = pts.mean(axis=0)
    fit, held = slice(0, None, 2), slice(1, None, 2)
    F, G = _features(pts[fit], center, degree, body)
    Fc = F - F.mean(axis=0)
    A = Fc.T @ Fc / len(F)
    B = np.einsum("qaj,qbj->ab", G, G) / len(F)
    s = 1.0 / np.sqrt(np.diag(B))  # scale for conditioning
    vals, vecs = scipy.linalg.eigh(A * s[:, None] * s[None, :], B * s[:, None] * s[None, :])
    coef = vecs[:, -1] * s

    F, G = _features(pts[held], center, degree, body)
    f = F @ coef
    grad2 = np.einsum("qaj,a->qj", G, coef)
    a = (f - f.mean()) ** 2
    b = (grad2 ** 2).sum(axis=1)
    ratio = a.mean() / b.mean()
    # delta method on the ratio of means, chain-aware
    _, se_lin = grouped_mean_se((a - ratio * b) / b.mean(), batch.chain[held])
    d = math.sqrt(ratio)
    stats = body_stats(batch, min_count=2)
    return RayleighWitness(d, se_lin / (2 * d), stats.d_lin, degree, F.shape[1], coef)


def silverman_bandwidth(y) -> float:
    y = np.asarray(y, dtype=float)
    sd = y.std(ddof=1)
    iqr = np.subtract(*np.percentile(y, [75, 25]))
    spread = min(sd, iqr / 1.349) if iqr > 0 else sd
    return 0.9 * spread * y.size ** (-0.2)


def kde_at(y, x0, bw) -> float:
    u = (np.asarray(y) - x0) / bw
    return float(np.exp(-0.5 * u * u).sum() / (y.size * bw * math.sqrt(2 * math.pi)))


@dataclass(frozen=True)
class CheegerSweep:
    d_che_lin: float
    band: tuple
    direction: np.ndarray
    directions: int


def sweep_directions(n: int, count: int = 256, seed: int = 0):
    """Quasi-random unit vectors (scrambled Sobol points through the normal quantile)."""
    if n == 1:
        return np.ones((1, 1))
    sob = qmc.Sobol(d=n, scramble=True, seed=seed).random(count)
    g = norm.ppf(np.clip(sob, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def cheeger_lin_sweep(batch: SampleBatch, directions: int = 256, seed: int = 0) -> CheegerSweep:
    """``2 min_theta`` of the marginal density at its median, by Gaussian KDE.

    The band repeats the sweep at half and double the Silverman bandwidth.
    """
    theta = sweep_directions(batch.points.shape[1], directions, seed)
    proj = batch.points @ theta.T
    vals = {0.5: [], 1.0: [], 2.0: []}
    for k in range(theta.shape[0]):
        y = proj[:, k]
        med = float(np.median(y))
        bw = silverman_bandwidth(y)
        for f in vals:
            vals[f].append(kde_at(y, med, f * bw))
    best = {f: 2.0 * min(v) for f, v in vals.items()}
    k = int(np.argmin(vals[1.0]))
    return CheegerSweep(best[1.0], (min(best.values()), max(best.values())), theta[k], theta.shape[0])


# ----------------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralEstimate:
    d_poin_grid: float | None
    d_poin_grid_err: float | None
    d_poin_lower: float
    d_poin_lower_se: float
    d_lin: float
    d_lin_se: float
    d_che_lin: float
    d_che_band: tuple
    h: float | None
    samples: int

    def hierarchy_margins(self, k: float = 3.0) -> tuple[float, float]:
        """Slack in ``d_lin <= rayleigh <= grid`` after ``k`` combined standard errors (>= 0 passes)."""
        lower = self.d_poin_lower - self.d_lin + k * math.hypot(self.d_poin_lower_se, self.d_lin_se)
        upper = math.inf
        if self.d_poin_grid is not None:
            upper = (self.d_poin_grid - self.d_poin_lower
                     + k * math.hypot(self.d_poin_lower_se, self.d_poin_grid_err or 0.0))
        return lower, upper

    def consistent(self, k: float = 3.0) -> bool:
        return min(self.hierarchy_margins(k)) >= 0


def spectral_estimate(body: OrliczBody, batch: SampleBatch, h: float | None = None,
                      directions: int = 256, seed: int = 0) -> SpectralEstimate:
    gap = None
    if body.n <= 3 and h is not None:
        gap = neumann_gap(voxelize(body, h))
    ray = rayleigh_lower_bound(batch, degree=3 if body.n <= 4 else 2, body=body)
    che = cheeger_lin_sweep(batch, directions, seed)
    return SpectralEstimate(
        d_poin_grid=gap.d_poin if gap else None,
        d_poin_grid_err=(0.5 * gap.error_estimate / gap.lam ** 1.5) if gap else None,
        d_poin_lower=ray.d_poin_lower, d_poin_lower_se=ray.se, d_lin=ray.d_lin,
        d_lin_se=body_stats(batch).d_lin_se, d_che_lin=che.d_che_lin, d_che_band=che.band,
        h=h, samples=batch.count)


def kls_ratio_report(prod: ProductPotential, est: SpectralEstimate, cells: int = 4000) -> dict:
    """KLS ratio with the two criterion right-hand sides (without their constants)."""
    d = est.d_poin_grid if est.d_poin_grid is not None else est.d_poin_lower
    M = prod.M
    a2 = prod.A2
    dmu = product_poincare(prod, cells)
    n = prod.n
    crit = M * math.log(math.e + a2 * M) if math.isfinite(a2) else math.inf
    ratio = d / est.d_lin
    return {
        "n": n,
        "d_poin": d,
        "d_poin_source": "grid" if est.d_poin_grid is not None else "rayleigh",
        "d_lin": est.d_lin,
        "ratio": ratio,
        "M": M,
        "A2": a2,
        "criterion": crit,
        "fitted_constant": ratio / crit if math.isfinite(crit) else 0.0,
        "d_poin_mu": dmu,
        "log_rhs": dmu * math.log(math.e + math.sqrt(n) * dmu),
        "log_rhs_ratio": d / (dmu * math.log(math.e + math.sqrt(n) * dmu)),
    }
