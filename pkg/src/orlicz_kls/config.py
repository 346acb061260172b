"""Experiment configuration: a TOML document with an explicit schema version.

A minimal document::

    schema_version = 1
    n = 2
    [family]
    kind = "laplace"

Coordinates may instead be listed one by one under ``[[coordinates]]`` (with
an optional ``repeat``). Unknown keys are errors, not warnings.
"""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
import tomli

from .errors import ParseError, ValidationError
from .potential1d import FAMILIES, RawPotential, make_raw, shifted

SCHEMA_VERSION = 1
LEVEL_RULES = ("E_V", "E_min", "E_max")

FAMILY_PARAMS = {
    "gaussian": set(),
    "laplace": set(),
    "power_asymmetric": {"p_plus", "p_minus"},
    "power": {"p"},
    "piecewise_linear": {"knots", "slopes"},
    "table": {"points"},
    "steep_tail": set(),
    "log_square": set(),
}
assert set(FAMILY_PARAMS) == set(FAMILIES)


@dataclass(frozen=True)
class FamilySpec:
    kind: str
    params: tuple = ()
    shift: float = 0.0

    def build(self) -> RawPotential:
        raw = make_raw(self.kind, **dict(self.params))
        return shifted(raw, self.shift) if self.shift else raw

    def describe(self) -> dict:
        out = {"kind": self.kind, **{k: v for k, v in self.params}}
        if self.shift:
            out["shift"] = self.shift
        return out


@dataclass(frozen=True)
class SamplerConfig:
    count: int = 20_000
    method: str = "auto"
    burnin: int | None = None
    thin: int | None = None
    chains: int = 64


@dataclass(frozen=True)
class SuiteConfig:
    level: bool = True
    radial: bool = True
    tails: bool = True
    density_ratio: bool = True
    coupling: bool = True
    spectral: bool = True
    one_d: bool = True


@dataclass(frozen=True)
class SpectralConfig:
    cells: int = 12
    directions: int = 256
    sl_cells: int = 4000


@dataclass(frozen=True)
class OutputConfig:
    dir: str | None = None
    prefix: str = "run"


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    coordinates: tuple
    q: float = 1.0
    level: Any = "E_V"
    seed: int = 0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    suites: SuiteConfig = field(default_factory=SuiteConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    schema_version: int = SCHEMA_VERSION

    def raws(self) -> list[RawPotential]:
        # one raw object per distinct spec, so identical coordinates share normalization
        cache = {}
        return [cache.setdefault(c, c.build()) for c in self.coordinates]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coordinates"] = [c.describe() for c in self.coordinates]
        return d


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*\[*\s*{re.escape(key)}\b")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return i
    return None


def _check_keys(text, table: dict, allowed: set, where: str):
    for key in table:
        if key not in allowed:
            name = f"{where}.{key}" if where else key
            raise ParseError(f"unknown key {name!r}", _line_of(text, key), name)


def _section(text, doc, name, cls):
    raw = doc.get(name, {})
    if not isinstance(raw, dict):
        raise ParseError(f"[{name}] must be a table", _line_of(text, name), name)
    allowed = set(cls.__dataclass_fields__)
    _check_keys(text, raw, allowed, name)
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ParseError(str(exc), _line_of(text, name), name) from None


def _family(text, entry: dict, where: str) -> tuple[FamilySpec, int]:
    if "kind" not in entry:
        raise ParseError("missing 'kind'", _line_of(text, where.split(".")[0]), f"{where}.kind")
    kind = entry["kind"]
    if kind not in FAMILY_PARAMS:
        raise ValidationError(f"unknown family {kind!r}; known: {sorted(FAMILY_PARAMS)}")
    _check_keys(text, entry, {"kind", "repeat", "shift"} | FAMILY_PARAMS[kind], where)
    missing = FAMILY_PARAMS[kind] - set(entry)
    if missing:
        raise ValidationError(f"{where}: missing parameters {sorted(missing)} for {kind}")
    params = {k: entry[k] for k in sorted(FAMILY_PARAMS[kind])}
    for k in ("p", "p_plus", "p_minus"):
        if k in params and not (isinstance(params[k], (int, float)) and params[k] >= 1):
            raise ValidationError(f"{where}.{k} = {params[k]!r}: exponents must be >= 1 for convexity")
    frozen = tuple((k, tuple(map(tuple, v)) if k == "points" else tuple(v) if isinstance(v, list) else float(v))
                   for k, v in params.items())
    repeat = entry.get("repeat", 1)
    if not (isinstance(repeat, int) and repeat >= 1):
        raise ValidationError(f"{where}.repeat must be a positive integer")
    spec = FamilySpec(kind, frozen, float(entry.get("shift", 0.0)))
    spec.build()  # surfaces NonConvex / NonIntegrable from the family constructors
    return spec, repeat


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML experiment document."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ParseError(str(exc), int(m.group(1)) if m else None) from None

    top = {"schema_version", "n", "q", "level", "seed", "family", "coordinates",
           "sampler", "suites", "spectral", "output"}
    _check_keys(text, doc, top, "")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    if "n" not in doc:
        raise ParseError("missing required key 'n'", None, "n")
    n = doc["n"]
    if not (isinstance(n, int) and n >= 1):
        raise ValidationError(f"n must be a positive integer, got {n!r}")

    if ("family" in doc) == ("coordinates" in doc):
        raise ValidationError("give exactly one of [family] or [[coordinates]]")
    if "family" in doc:
        spec, repeat = _family(text, doc["family"], "family")
        if repeat != 1:
            raise ValidationError("family.repeat is only meaningful under [[coordinates]]")
        coords = (spec,) * n
    else:
        coords = []
        for i, entry in enumerate(doc["coordinates"]):
            spec, repeat = _family(text, entry, f"coordinates[{i}]")
            coords.extend([spec] * repeat)
        if len(coords) != n:
            raise ValidationError(f"[[coordinates]] describe {len(coords)} coordinates but n = {n}")
        coords = tuple(coords)

    q = doc.get("q", 1.0)
    if not (isinstance(q, (int, float)) and q >= 0):
        raise ValidationError(f"q must be a nonnegative number, got {q!r}")
    level = doc.get("level", "E_V")
    if isinstance(level, str):
        if level not in LEVEL_RULES:
            raise ValidationError(f"level must be one of {LEVEL_RULES} or a number, got {level!r}")
    elif isinstance(level, (int, float)) and not isinstance(level, bool) and math.isfinite(level):
        level = float(level)
    else:
        raise ValidationError(f"bad level {level!r}")
    seed = doc.get("seed", 0)
    if not (isinstance(seed, int) and seed >= 0):
        raise ValidationError("seed must be a nonnegative integer")

    sampler = _section(text, doc, "sampler", SamplerConfig)
    if sampler.count < 1:
        raise ValidationError("sampler.count must be positive")
    if sampler.method not in ("auto", "rejection", "hit_and_run"):
        raise ValidationError(f"unknown sampler.method {sampler.method!r}")
    cfg = ExperimentConfig(
        n=n, coordinates=coords, q=float(q), level=level, seed=seed, sampler=sampler,
        suites=_section(text, doc, "suites", SuiteConfig),
        spectral=_section(text, doc, "spectral", SpectralConfig),
        output=_section(text, doc, "output", OutputConfig),
        schema_version=version)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# ----------------------------------------------------------------------------
# generalized doubling
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class DoublingResult:
    passed: bool
    P_min: float
    witness: float
    eps_P: dict

    @property
    def best_eps_P(self) -> float:
        """Smallest ``P`` for which the finite-step form holds at some grid ``eps``."""
        return min(self.eps_P.values()) if self.eps_P else math.inf


def doubling_check(raw: RawPotential, P: float, eps_grid=(1e-3, 0.01, 0.1, 0.5), span: float = 20.0,
                   points: int = 20001) -> DoublingResult:
    """Check ``W'(x) x <= P W(x)`` on a dense grid.

    ``P_min`` is the largest observed ``W'(x) x / W(x)`` and ``witness`` the
    point attaining it. For each ``eps`` the report also gives the smallest
    ``P`` with ``W((1+eps)x) <= (1+eps P) W(x)`` on the grid; by convexity that
    value is at least ``P_min`` and tends to it as ``eps -> 0`` (for ``|x|^p``
    it is ``((1+eps)^p - 1)/eps``, never exactly ``p``).
    """
    if not raw.minimizer == 0.0 == float(raw.eval(np.array([0.0]))[0]):
        raise ValidationError("doubling needs min W = W(0) = 0")
    half = np.geomspace(1e-6, span, points // 2)
    x = np.concatenate([-half[::-1], half])
    w = raw.eval(x)
    ok = w > 0
    ratio = raw.deriv(x[ok]) * x[ok] / w[ok]
    k = int(np.argmax(ratio))
    eps_P = {}
    for e in eps_grid:
        q = (raw.eval((1 + e) * x[ok]) - w[ok]) / (e * w[ok])
        eps_P[float(e)] = float(q.max())
    p_min = float(ratio[k])
    return DoublingResult(p_min <= P * (1 + 1e-9), p_min, float(x[ok][k]), eps_P)
