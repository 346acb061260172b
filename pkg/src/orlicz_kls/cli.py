"""Command line entry point ``orlicz-kls``.

Output files default to ``$ORLICZ_KLS_OUTDIR`` (or the config's
``[output] dir``, or the working directory). ``verify`` exits with status 1
when a theorem-backed check fails.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import geometry as geo
from . import report as rep
from .config import load_config
from .errors import OrliczError

ENV_OUTDIR = "ORLICZ_KLS_OUTDIR"


def _outdir(cfg) -> Path:
    d = os.environ.get(ENV_OUTDIR) or (cfg.output.dir if cfg is not None else None) or "."
    path = Path(d)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolve(path: str | None, cfg, default_name: str) -> Path:
    if path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p
    prefix = cfg.output.prefix if cfg is not None else "run"
    return _outdir(cfg) / f"{prefix}_{default_name}"


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def cmd_criterion(args) -> int:
    cfg = load_config(args.config)
    run = rep.Run(cfg)
    report = rep.run_criterion(cfg, run)
    _write(_resolve(args.out, cfg, "criterion.json"), rep.to_json(report))
    print(f"n={report.n} A2={report.A2:.6g} M={report.M:.6g} E_V={report.E_V:.6g} "
          f"Level=[{report.E_min:.6g}, {report.E_max:.6g}] Vol^(1/n)={report.vol_root:.6g} "
          f"D_lin={report.d_lin:.6g}")
    return 0


def cmd_profile(args) -> int:
    cfg = load_config(args.config)
    run = rep.Run(cfg)
    _write(_resolve(args.csv, cfg, "profile.csv"), rep.profile_csv(run.profile, args.spacing))
    return 0


def cmd_sample(args) -> int:
    cfg = load_config(args.config)
    run = rep.Run(cfg)
    body = run.body
    kwargs = dict(burnin=cfg.sampler.burnin, thin=cfg.sampler.thin, chains=cfg.sampler.chains,
                  method=cfg.sampler.method)
    if args.measure == "uniform":
        batch = geo.sample_uniform(body, args.count, args.seed, **kwargs)
    elif args.measure == "cone":
        batch = geo.sample_cone(body, args.count, args.seed, **kwargs)
    elif args.measure == "radial":
        batch = geo.sample_radial(body, args.count, args.seed, **kwargs)
    else:
        w = args.w0 / body.n ** 0.5
        batch = geo.sample_radial(body, args.count, args.seed, w=w, **kwargs)
    _write(_resolve(args.csv, cfg, f"{args.measure}_samples.csv"), rep.samples_csv(batch))
    return 0


def cmd_spectral(args) -> int:
    cfg = load_config(args.config)
    run = rep.Run(cfg)
    est = run.spectral
    if est is None:
        print("spectral suite disabled in the config", file=sys.stderr)
        return 2
    row = rep.spec.kls_ratio_report(run.prod, est, cfg.spectral.sl_cells)
    out = {"estimate": est.__dict__, "ratio": row}
    _write(_resolve(args.out, cfg, "spectral.json"), rep.to_json(out))
    return 0


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    run = rep.Run(cfg)
    rows = rep.run_verify_suite(cfg, run)
    _write(_resolve(args.ledger, cfg, "ledger.csv"), rep.ledger_csv(rows))
    if args.json:
        _write(Path(args.json), rep.to_json({"rows": [r.__dict__ for r in rows]}))
    fails = [r for r in rows if r.status == rep.FAIL and r.kind == "theorem"]
    for r in rows:
        print(f"{r.status:<16} {r.check}")
    print(f"{len(rows)} checks, {len(fails)} failed")
    return 0 if not fails else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orlicz-kls", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("criterion", help="compute the explicit criterion and sampled statistics")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="JSON output path")
    s.set_defaults(func=cmd_criterion)

    s = sub.add_parser("profile", help="tabulate exp(-E) Vol(K_E)")
    s.add_argument("--config", required=True)
    s.add_argument("--csv")
    s.add_argument("--spacing", type=float, default=0.05)
    s.set_defaults(func=cmd_profile)

    s = sub.add_parser("sample", help="draw points from one of the measures on K_E")
    s.add_argument("--config", required=True)
    s.add_argument("--measure", choices=["uniform", "cone", "radial", "annulus"], default="uniform")
    s.add_argument("--count", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--w0", type=float, default=0.5, help="annulus width times sqrt(n)")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("spectral", help="Poincare, linear and Cheeger estimates")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_spectral)

    s = sub.add_parser("verify", help="run the verification ledger")
    s.add_argument("--config", required=True)
    s.add_argument("--ledger", help="CSV ledger path")
    s.add_argument("--json", help="optional JSON copy of the ledger")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OrliczError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
