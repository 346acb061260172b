"""Orchestration: the criterion report, the verification ledger and file emission."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from . import concentration as conc
from . import geometry as geo
from . import level_profile as lp
from . import spectral as spec
from .config import ExperimentConfig, doubling_check
from .errors import NotInside, ValidationError
from .potential1d import ProductPotential, assemble_product

REPORT_SCHEMA = 1
DENSITY_GRID = [(p, w0) for p in (1.5, 2.0, 3.0) for w0 in (0.1, 0.25, 0.5)]

PASS, FAIL, SKIPPED, SKIPPED_INFINITE, REPORT = "PASS", "FAIL", "SKIPPED", "SKIPPED_INFINITE", "REPORT"


# ----------------------------------------------------------------------------
# shared state for one run
# ----------------------------------------------------------------------------


class Run:
    """Lazily computed objects for one configuration; each is built once."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg

    @cached_property
    def prod(self) -> ProductPotential:
        return assemble_product(self.cfg.raws())

    @cached_property
    def profile(self) -> lp.LevelProfile:
        return lp.build_profile(self.prod)

    @cached_property
    def interval(self) -> lp.LevelInterval:
        return lp.level_interval_q(self.profile, self.cfg.q)

    @cached_property
    def E(self) -> float:
        rule = self.cfg.level
        if rule == "E_V":
            return self.prod.E_V
        if rule == "E_min":
            return self.interval.E_min
        if rule == "E_max":
            return self.interval.E_max
        return float(rule)

    @cached_property
    def body(self) -> geo.OrliczBody:
        try:
            return geo.OrliczBody(self.prod, self.E)
        except NotInside as exc:
            raise ValidationError(f"explicit level must exceed V(0): {exc}") from None

    def seed(self, k: int) -> int:
        return self.cfg.seed * 1000 + k

    @cached_property
    def uniform(self) -> geo.SampleBatch:
        s = self.cfg.sampler
        return geo.sample_uniform(self.body, s.count, self.seed(0), s.burnin, s.thin, s.chains, s.method)

    @cached_property
    def cone(self) -> geo.SampleBatch:
        return geo.sample_cone(self.body, self.uniform.count, self.seed(0), uniform=self.uniform)

    @cached_property
    def radial(self) -> geo.SampleBatch:
        return geo.sample_radial(self.body, self.uniform.count, self.seed(0), cone=self.cone)

    def annulus(self, w: float) -> geo.SampleBatch:
        return geo.sample_radial(self.body, self.uniform.count, self.seed(0), w=w, cone=self.cone)

    @cached_property
    def stats(self) -> geo.BodyStats:
        return geo.body_stats(self.uniform)

    @cached_property
    def Z_E(self) -> float:
        return conc.z_e_from_profile(self.profile, self.E)

    @cached_property
    def spectral(self) -> spec.SpectralEstimate | None:
        if not self.cfg.suites.spectral:
            return None
        h = None
        if self.prod.n <= 3:
            lo, hi = self.body.box
            h = float((hi - lo).min()) / self.cfg.spectral.cells
        return spec.spectral_estimate(self.body, self.uniform, h, self.cfg.spectral.directions, self.seed(5))


# ----------------------------------------------------------------------------
# criterion report
# ----------------------------------------------------------------------------


@dataclass
class CriterionReport:
    n: int
    family: list
    level_rule: str
    z: float
    z_i: list
    M: float
    A2: float
    A_inf2: float
    E_V: float
    E_min: float
    E_max: float
    q: float
    E: float
    vol_root: float
    vol_root_bounds: list
    b_mu: list
    b_E: list
    barycenter_inside: bool
    barycenter_term: float
    d_lin: float
    d_lin_se: float
    d_poin: float | None
    d_poin_source: str | None
    kls_ratio: float | None
    criterion_rhs: float
    criterion_rhs_n: float
    log_rhs: float | None
    samples: int
    seed: int
    ledger: list = field(default_factory=list)
    schema_version: int = REPORT_SCHEMA

    def to_dict(self) -> dict:
        return asdict(self)


def run_criterion(cfg: ExperimentConfig, run: Run | None = None, spectral: bool | None = None) -> CriterionReport:
    """Evaluate the explicit criterion and the sampled quantities it controls."""
    run = run or Run(cfg)
    prod = run.prod
    n = prod.n
    E = run.E
    run.body  # validates the level before any sampling
    c1 = lp.c_n(n, 1.0)
    vol_root = float(run.profile.g(np.array([E]))[0])
    vb = float(prod.eval(prod.b_mu))
    inside = vb < E
    st = run.stats
    term = float(np.linalg.norm(st.b_E - prod.b_mu) / math.sqrt(n))
    est = run.spectral if (spectral if spectral is not None else cfg.suites.spectral) else None
    a2, M = prod.A2, prod.M
    crit = M * math.log(math.e + a2 * M) if math.isfinite(a2) else math.inf
    crit_n = math.log(math.e + min(a2, n))
    row = spec.kls_ratio_report(prod, est, cfg.spectral.sl_cells) if est is not None else None
    return CriterionReport(
        n=n, family=[c.describe() for c in cfg.coordinates], level_rule=str(cfg.level),
        z=float(prod.z), z_i=[float(v) for v in prod.z_i], M=float(M), A2=float(a2), A_inf2=float(prod.AInf2),
        E_V=float(prod.E_V), E_min=run.interval.E_min, E_max=run.interval.E_max, q=cfg.q, E=float(E),
        vol_root=vol_root, vol_root_bounds=[c1, math.e * c1],
        b_mu=[float(v) for v in prod.b_mu], b_E=[float(v) for v in st.b_E],
        barycenter_inside=bool(inside), barycenter_term=term,
        d_lin=float(st.d_lin), d_lin_se=float(st.d_lin_se),
        d_poin=row["d_poin"] if row else None, d_poin_source=row["d_poin_source"] if row else None,
        kls_ratio=row["ratio"] if row else None, criterion_rhs=crit, criterion_rhs_n=crit_n,
        log_rhs=row["log_rhs"] if row else None, samples=st.count, seed=cfg.seed)


# ----------------------------------------------------------------------------
# verification ledger
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class LedgerRow:
    check: str
    anchor: str
    status: str
    value: float
    bound: float
    margin: float
    unit: str
    kind: str = "theorem"

    @classmethod
    def compare(cls, check, anchor, value, bound, upper=True, tol=0.0, sigma=None, kind="theorem"):
        """``value <= bound`` (``upper``) or ``value >= bound``, with absolute ``tol`` or ``3 sigma``."""
        gap = (bound - value) if upper else (value - bound)
        if sigma is not None:
            margin = gap / sigma if sigma > 0 else (math.inf if gap >= 0 else -math.inf)
            ok = margin >= -3.0
            unit = "sigma"
        else:
            margin = gap
            ok = gap >= -tol
            unit = "abs"
        return cls(check, anchor, PASS if ok else FAIL, float(value), float(bound), float(margin), unit, kind)

    @classmethod
    def skipped(cls, check, anchor, status=SKIPPED, kind="theorem"):
        return cls(check, anchor, status, math.nan, math.nan, math.nan, "", kind)

    @classmethod
    def report(cls, check, anchor, value, bound=math.nan):
        return cls(check, anchor, REPORT, float(value), float(bound), math.nan, "", "fitted")


def _level_rows(run: Run) -> list[LedgerRow]:
    prod, profile = run.prod, run.profile
    rows = []
    for c in lp.check_level_properties(prod, profile, run.cfg.q):
        upper = not (">=" in c.name)
        rows.append(LedgerRow(c.name, "level interval and good level", PASS if c.passed else FAIL,
                              c.value, c.bound, (c.bound - c.value) if upper else (c.value - c.bound), "abs"))
    rows.append(LedgerRow.compare("int phi = 1", "normalization of phi", abs(profile.total_mass - 1), 0.0, tol=1e-6))
    ev_a = prod.E_V
    rows.append(LedgerRow.compare("E_V two routes", "E_V as barycenter of phi", abs(ev_a - profile.mean), 0.0,
                                  tol=1e-6))
    for i, (a2, ns) in enumerate(zip(prod.alpha2s, prod.neg_sups)):
        rows.append(LedgerRow.compare(f"alpha2[{i}] >= sqrt2", "1D alpha lower bound", a2, math.sqrt(2),
                                      upper=False, tol=1e-6))
        rows.append(LedgerRow.compare(f"neg-part sup[{i}] <= 1", "1D alpha lower bound", ns, 1.0, tol=1e-6))
    return rows


def _radial_rows(run: Run) -> list[LedgerRow]:
    n = run.prod.n
    rad = run.radial
    g = run.body.gauge(rad.points)
    m, se = rad.mean_se(g)
    v, vse = rad.mean_se((g - 1.0) ** 2)
    rows = [
        LedgerRow.compare("radial E||x|| = 1", "Gamma radial law", abs(m - 1.0), 0.0, sigma=se),
        LedgerRow.compare("radial Var||x|| = 1/n", "Gamma radial law", abs(v - 1.0 / n), 0.0, sigma=vse),
    ]
    c = conc.fitted_gamma_constant(n)
    rows.append(LedgerRow.compare("fitted c > 0.05", "annulus mass lower bound", c, 0.05, upper=False))
    rows.append(LedgerRow.report("fitted c", "annulus mass lower bound", c))
    return rows


def _tail_rows(run: Run) -> list[LedgerRow]:
    cfg, prod = run.cfg, run.prod
    n = prod.n
    count = max(cfg.sampler.count, 20_000)
    r_grid = np.linspace(0.0, 4.0 * math.sqrt(n), 21)
    rows = []
    rep = conc.exp_sum_tail_check(n, count, r_grid, run.seed(1))
    rows.append(LedgerRow.compare("Hoeffding: sum(Exp-1)", "one-sided Hoeffding", rep.max_violation_sigma, 0.0,
                                  tol=3.0))
    rep = conc.grad_dot_tail_check(prod, count, np.linspace(0.0, 6.0, 25), run.seed(2))
    if rep.status != "OK":
        rows.append(LedgerRow.skipped("tail of <grad V, x> - n", "crucial tail bound", rep.status))
        rows.append(LedgerRow.skipped("E Y_i = 0", "crucial tail bound", rep.status))
        return rows
    rows.append(LedgerRow.compare("tail of <grad V, x> - n", "crucial tail bound", rep.max_violation_sigma, 0.0,
                                  tol=3.0))
    z = np.abs(rep.extras["mean_Y"]) / rep.extras["se_Y"]
    rows.append(LedgerRow.compare("E Y_i = 0", "crucial tail bound", float(z.max()), 0.0,
                                  tol=3.0 + math.sqrt(2 * math.log(max(n, 1)))))
    return rows


def _density_rows(run: Run) -> list[LedgerRow]:
    body, prod = run.body, run.prod
    n = prod.n
    rows = []
    c_fit = conc.fitted_gamma_constant(n)
    count = run.uniform.count
    rep = conc.density_ratio_moment(body, run.Z_E, 0.25, 1.0, count, run.seed(3), c_fit,
                                    annulus=run.annulus(0.25 / math.sqrt(n)))
    rows.append(LedgerRow.compare("ratio moment p=1 is 1", "density ratio moments",
                                  abs(rep.moment_annulus - 1.0), 0.0, tol=1e-3))
    for p, w0 in DENSITY_GRID:
        ann = run.annulus(w0 / math.sqrt(n))
        rep = conc.density_ratio_moment(body, run.Z_E, w0, p, count, run.seed(3), c_fit, annulus=ann)
        tag = f"p={p:g}, w0={w0:g}"
        if math.isfinite(rep.lp_bound):
            rows.append(LedgerRow.compare(f"L^p moment ({tag})", "L^p density-ratio bound", rep.moment_annulus,
                                          rep.lp_bound, sigma=rep.moment_annulus_se))
        else:
            rows.append(LedgerRow.skipped(f"L^p moment ({tag})", "L^p density-ratio bound", SKIPPED_INFINITE))
        rows.append(LedgerRow.compare(f"L^inf ratio ({tag})", "L^inf density-ratio bound", rep.linf_empirical,
                                      rep.linf_bound, tol=1e-9 * rep.linf_bound))
        rows.append(LedgerRow.report(f"moment routes agree ({tag}) [sigma]", "density ratio moments",
                                     rep.agree_sigma))
    return rows


def _transfer_rows(run: Run, funcs) -> list[LedgerRow]:
    """Per-function transfer from the product measure to the annulus measure (p = 2, w0 = 1/4)."""
    body, prod = run.body, run.prod
    n = prod.n
    p, w0 = 2.0, 0.25
    w = w0 / math.sqrt(n)
    ann = run.annulus(w)
    rep = conc.density_ratio_moment(body, run.Z_E, w0, p, run.uniform.count, run.seed(3), annulus=ann)
    L = max(1.0, math.sqrt(rep.moment_annulus + 3 * rep.moment_annulus_se))
    tb = conc.TransferBound(p, L)
    mu = geo.sample_product(prod, max(run.uniform.count, 20_000), run.seed(4))
    r = np.linspace(0.05, 3.0, 30)
    worst, name = -math.inf, ""
    for f in funcs:
        vals = f(mu.points)
        med = float(np.median(vals))
        srt = np.sort(vals)

        def k1(s, srt=srt, med=med):
            up = 1.0 - np.searchsorted(srt, med + s, side="right") / srt.size
            down = np.searchsorted(srt, med - s, side="left") / srt.size
            return np.maximum(up, down)

        bound = conc.transfer_profile(tb, k1)(r)
        prof = conc.empirical_profile(ann, f, r, f.name, check=False)
        z = (prof.K - bound) / np.maximum(prof.se, 1.0 / prof.count)
        if z.max() > worst:
            worst, name = float(z.max()), f.name
    return [LedgerRow.compare(f"transferred profile (worst: {name})", "concentration transfer", worst, 0.0,
                              tol=3.0)]


def _coupling_rows(run: Run, funcs) -> list[LedgerRow]:
    body = run.body
    n = body.n
    rows = []
    w = 0.5 / math.sqrt(n)
    rep = conc.w1_radial_coupling(body, w, run.uniform.count, run.seed(0), uniform=run.uniform)
    rows.append(LedgerRow.compare("W1 coupling cost", "radial coupling bound", rep.cost, rep.bound,
                                  sigma=math.hypot(rep.cost_se, rep.bound_se)))
    for f in funcs:
        h = conc.hardy_first_moment_check(body, f, run.uniform, run.cone)
        rows.append(LedgerRow.compare(f"Hardy first moment [{f.name}]", "Hardy inequality with boundary",
                                      h.lhs, h.rhs, sigma=math.hypot(h.lhs_se, h.rhs_se)))
    return rows


def _one_d_rows(run: Run) -> list[LedgerRow]:
    rows = []
    seen = {}
    for i, c in enumerate(run.prod.components):
        key = (id(c.raw), c.scale)
        if key in seen:
            continue
        seen[key] = i
        r = spec.poincare_1d(c, run.cfg.spectral.sl_cells)
        rows.append(LedgerRow.compare(f"Bobkov ratio >= 1 [{i}]", "1D KLS", r.bobkov_ratio, 1.0, upper=False,
                                      tol=1e-3))
        rows.append(LedgerRow.compare(f"Bobkov ratio <= 12 [{i}]", "1D KLS", r.bobkov_ratio, 12.0, tol=1e-3))
        rows.append(LedgerRow.report(f"||f||_inf^2 Var [{i}]", "1D density sup vs variance", r.sup_variance))
    return rows


def _spectral_rows(run: Run) -> list[LedgerRow]:
    est = run.spectral
    rows = []
    lower, upper = est.hierarchy_margins(3.0)
    rows.append(LedgerRow("rayleigh >= d_lin", "Poincare dominates its linear relaxation",
                          PASS if lower >= 0 else FAIL, est.d_poin_lower, est.d_lin, lower, "abs"))
    if est.d_poin_grid is not None:
        rows.append(LedgerRow("rayleigh <= grid D_Poin", "variational principle", PASS if upper >= 0 else FAIL,
                              est.d_poin_lower, est.d_poin_grid, upper, "abs"))
    else:
        rows.append(LedgerRow.skipped("rayleigh <= grid D_Poin", "variational principle"))
    row = spec.kls_ratio_report(run.prod, est, run.cfg.spectral.sl_cells)
    rows.append(LedgerRow.report("KLS ratio / M log(e + A2 M)", "product criterion", row["fitted_constant"]))
    rows.append(LedgerRow.report("KLS ratio / D_mu log(e + sqrt(n) D_mu)", "dimension-dependent criterion",
                                 row["log_rhs_ratio"]))
    return rows


def run_verify_suite(cfg: ExperimentConfig, run: Run | None = None) -> list[LedgerRow]:
    """Every enabled check as a ledger row; failures are recorded, never raised."""
    run = run or Run(cfg)
    s = cfg.suites
    rows: list[LedgerRow] = []
    funcs = conc.trial_family(run.prod.n, run.seed(6), directions=2)
    if s.level:
        rows += _level_rows(run)
    if s.radial:
        rows += _radial_rows(run)
    if s.tails:
        rows += _tail_rows(run)
    if s.density_ratio:
        rows += _density_rows(run)
        rows += _transfer_rows(run, funcs)
    if s.coupling:
        rows += _coupling_rows(run, funcs)
    if s.one_d:
        rows += _one_d_rows(run)
    if s.spectral:
        rows += _spectral_rows(run)
    for c in dict.fromkeys(cfg.coordinates):
        raw = c.build()
        if c.kind in ("power", "power_asymmetric", "log_square", "gaussian") and not c.shift:
            d = doubling_check(raw, math.inf)
            rows.append(LedgerRow.report(f"doubling P_min [{c.kind}]", "generalized doubling", d.P_min))
    return rows


def all_passed(rows) -> bool:
    return not any(r.status == FAIL and r.kind == "theorem" for r in rows)


# ----------------------------------------------------------------------------
# emission
# ----------------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def to_json(obj) -> str:
    """Deterministic JSON: sorted keys, non-finite floats as strings."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def rows_to_csv(header, rows, meta: dict | None = None) -> str:
    """CSV with a leading ``# rows=N`` comment (plus any ``meta`` pairs)."""
    buf = io.StringIO()
    items = {"rows": len(rows), **(meta or {})}
    buf.write("# " + ", ".join(f"{k}={v}" for k, v in items.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(text: str):
    """Inverse of :func:`rows_to_csv`: ``(meta, header, rows)`` with strings."""
    lines = text.splitlines()
    meta = dict(kv.split("=", 1) for kv in lines[0][2:].split(", "))
    reader = list(csv.reader(lines[1:]))
    return meta, reader[0], reader[1:]


def ledger_csv(rows) -> str:
    header = ["check", "anchor", "status", "value", "bound", "margin", "unit", "kind"]
    return rows_to_csv(header, [[getattr(r, h) for h in header] for r in rows])


def profile_csv(profile: lp.LevelProfile, spacing: float = 0.05, e_max: float | None = None) -> str:
    t = profile.table(spacing, e_max)
    cols = ["E", "phi", "vol_root", "Z_E"]
    rows = [list(r) for r in zip(*(t[c] for c in cols))]
    return rows_to_csv(cols, rows, {"spacing": spacing})


def samples_csv(batch: geo.SampleBatch) -> str:
    n = batch.points.shape[1]
    rows = [[int(c), *p] for c, p in zip(batch.chain, batch.points)]
    return rows_to_csv(["chain", *[f"x{i}" for i in range(n)]], rows,
                       {"measure": batch.measure, "seed": batch.seed})
