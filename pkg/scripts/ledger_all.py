"""Run the verification ledger on every config in ``configs/`` and summarise.

    python scripts/ledger_all.py            # all configs
    python scripts/ledger_all.py configs/l1_n2.toml --show-fail
"""
import argparse
import collections
import time
from pathlib import Path

from orlicz_kls import report as rep
from orlicz_kls.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*", type=Path)
    ap.add_argument("--show-fail", action="store_true", help="list failing rows")
    args = ap.parse_args(argv)
    paths = args.configs or sorted((ROOT / "configs").glob("*.toml"))
    bad = 0
    for path in paths:
        t0 = time.perf_counter()
        rows = rep.run_verify_suite(load_config(path))
        counts = collections.Counter(r.status for r in rows)
        ok = rep.all_passed(rows)
        bad += not ok
        summary = " ".join(f"{k}={v}" for k, v in sorted(counts.items()))
        print(f"{path.name:<24} {'ok ' if ok else 'BAD'} {summary}  [{time.perf_counter() - t0:.1f}s]")
        if args.show_fail:
            for r in rows:
                if r.status == rep.FAIL:
                    print(f"    {r.check}: value={r.value:.4g} bound={r.bound:.4g} margin={r.margin:.3g} {r.unit}")
    return 1 if bad else 0


if __name__ == "__main__":
    raise SystemExit(main())
