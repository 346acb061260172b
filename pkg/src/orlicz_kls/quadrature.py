"""Numerical kernels shared by the other modules.

Adaptive composite Gauss-Legendre integration with declared breakpoints,
tanh-sinh rules for batched integrals with endpoint singularities, and a
vectorized bracketing root finder.
"""
from functools import lru_cache

import numpy as np

from .errors import QuadratureFailure


@lru_cache(maxsize=None)
def gauss_legendre(order):
    x, w = np.polynomial.legendre.leggauss(order)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _gl_panels(f, lo, hi, order):
    x, w = gauss_legendre(order)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
    return (vals * w[None, :]).sum(axis=1) * half


def integrate(f, a, b, breakpoints=(), rtol=1e-10, atol=1e-300, order=15, max_panels=200_000):
    """Integrate a vectorized ``f`` over ``[a, b]``.

    The interval is first split at every breakpoint inside it, then panels
    are bisected until the 1-panel and 2-panel Gauss-Legendre estimates agree.
    Returns ``(value, error_estimate)``.
    """
    if not (np.isfinite(a) and np.isfinite(b)):
        raise QuadratureFailure("integration limits must be finite")
    if b < a:
        v, e = integrate(f, b, a, breakpoints, rtol, atol, order, max_panels)
        return -v, e
    if b == a:
        return 0.0, 0.0
    cuts = sorted({a, b, *[float(p) for p in breakpoints if a < p < b]})
    lo = np.array(cuts[:-1])
    hi = np.array(cuts[1:])
    total_width = b - a
    done_val = 0.0
    done_err = 0.0
    estimate = None
    evaluated = 0
    while lo.size:
        mid = 0.5 * (lo + hi)
        coarse = _gl_panels(f, lo, hi, order)
        fine = _gl_panels(f, lo, mid, order) + _gl_panels(f, mid, hi, order)
        err = np.abs(fine - coarse)
        if estimate is None:
            # magnitude scale that stays meaningful when the signed integral cancels
            estimate = np.abs(fine).sum()
        scale = max(abs(done_val + fine.sum()), abs(estimate))
        tol = np.maximum(atol, rtol * scale) * (hi - lo) / total_width
        ok = (err <= tol) | (hi - lo <= 1e-13 * max(1.0, abs(a), abs(b)))
        done_val += fine[ok].sum()
        done_err += err[ok].sum()
        evaluated += lo.size
        if evaluated > max_panels:
            raise QuadratureFailure(f"panel budget exhausted on [{a}, {b}]")
        keep = ~ok
        lo, hi, mid = lo[keep], hi[keep], mid[keep]
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
    return float(done_val), float(done_err)


@lru_cache(maxsize=None)
def tanh_sinh(step=1.0 / 12.0, tmax=3.4):
    """Nodes and weights of the tanh-sinh rule on (-1, 1).

    Also returns the distance of each node to its nearest endpoint, which is
    representable far below machine epsilon near the ends.
    """
    t = np.arange(-tmax, tmax + 0.5 * step, step)
    u = 0.5 * np.pi * np.sinh(t)
    x = np.tanh(u)
    w = step * 0.5 * np.pi * np.cosh(t) / np.cosh(u) ** 2
    gap = 1.0 / (np.exp(2.0 * np.abs(u)) + 1.0) * 2.0  # 1 - |x|
    keep = (w > 1e-300) & (gap > 0)
    for arr in (x, w, gap):
        arr.flags.writeable = False
    return x[keep], w[keep], gap[keep]


def bracket_root(fun, lo, hi, flo=None, fhi=None, xtol=1e-13, rtol=4e-16, ftol=0.0, maxiter=200):
    """Vectorized root of monotone ``fun`` on brackets ``[lo, hi]``.

    ``fun`` maps an array of abscissae (same shape as ``lo``) to values with
    opposite signs at the two ends. Uses the Illinois variant of regula falsi
    with a bisection step every third iteration, so the bracket always shrinks
    geometrically. Entries stop early once ``|fun| <= ftol``.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    flo = np.asarray(fun(lo) if flo is None else flo, dtype=float).copy()
    fhi = np.asarray(fun(hi) if fhi is None else fhi, dtype=float).copy()
    root = np.where(flo == 0, lo, np.where(fhi == 0, hi, np.nan))
    last = np.zeros(lo.shape, dtype=np.int8)
    for it in range(maxiter):
        width = np.abs(hi - lo)
        active = np.isnan(root) & (width > xtol + rtol * np.maximum(np.abs(lo), np.abs(hi)))
        if not active.any():
            break
        if it % 3 == 2:
            x = 0.5 * (lo + hi)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                x = hi - fhi * (hi - lo) / (fhi - flo)
            bad = ~np.isfinite(x) | (x <= np.minimum(lo, hi)) | (x >= np.maximum(lo, hi))
            x = np.where(bad, 0.5 * (lo + hi), x)
        x = np.where(active, x, lo)
        fx = np.asarray(fun(x), dtype=float)
        same_lo = np.sign(fx) == np.sign(flo)
        upd_lo = active & same_lo
        upd_hi = active & ~same_lo
        # Illinois: damp the endpoint that was kept twice in a row
        fhi = np.where(upd_lo & (last == 1), 0.5 * fhi, fhi)
        flo = np.where(upd_hi & (last == -1), 0.5 * flo, flo)
        lo = np.where(upd_lo, x, lo)
        flo = np.where(upd_lo, fx, flo)
        hi = np.where(upd_hi, x, hi)
        fhi = np.where(upd_hi, fx, fhi)
        last = np.where(upd_lo, 1, np.where(upd_hi, -1, last)).astype(np.int8)
        root = np.where(active & (np.abs(fx) <= ftol), x, root)
    # pick the endpoint with the smaller residual
    best = np.where(np.abs(flo) <= np.abs(fhi), lo, hi)
    return np.where(np.isnan(root), best, root)
