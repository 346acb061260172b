"""Numerical toolkit for level sets of separable convex potentials (generalized Orlicz balls).

Modules: :mod:`potential1d` (one-dimensional potentials and their norms),
:mod:`level_profile` (``exp(-E) Vol(K_E)`` and the level interval),
:mod:`geometry` (bodies and samplers), :mod:`concentration`,
:mod:`spectral`, and the orchestration in :mod:`config`, :mod:`report`
and :mod:`cli`.
"""
from .errors import *  # noqa: F401,F403
from .potential1d import assemble_product, make_raw, normalize_1d
from .level_profile import build_profile, level_interval_q
from .geometry import OrliczBody, sample_uniform

__all__ = ["assemble_product", "make_raw", "normalize_1d", "build_profile", "level_interval_q",
           "OrliczBody", "sample_uniform"]
__version__ = "0.1.0"
