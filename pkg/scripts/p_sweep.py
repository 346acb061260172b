"""KLS ratio against the explicit criterion over a sweep of power exponents.

For ``V(x) = sum |x_i|^p`` (and asymmetric variants) in dimension ``n``, the
level set ``K_{E_V}`` is sampled, its Poincare constant computed on a grid, and
``(d_poin / d_lin) / (M log(e + A2 M))`` tabulated. A bounded spread of the
last column is what a universal constant in the criterion predicts.

    python scripts/p_sweep.py --n 2 --csv sweep.csv
"""
import argparse
import math
import time

from orlicz_kls import geometry as geo
from orlicz_kls import potential1d as p1
from orlicz_kls import spectral as spec
from orlicz_kls.report import rows_to_csv

def sweep_families(n):
    """Label and coordinate list for each row; the mixed rows have ``M > 1``."""
    out = []
    for p in (1.0, 1.5, 2.0, 4.0):
        out.append((f"power p={p:g}", [p1.power_symmetric(p)] * n))
    for a, b in ((1.0, 3.0), (1.0, 4.0)):
        out.append((f"asym p+={a:g} p-={b:g}", [p1.power_asymmetric(a, b)] * n))
    for p in (1.0, 4.0):
        out.append((f"power p={p:g} x gaussian", [p1.power_symmetric(p)] * (n - 1) + [p1.gaussian()]))
    return out


def sweep_row(raws, count=20_000, seed=0, cells=12):
    prod = p1.assemble_product(raws)
    body = geo.OrliczBody(prod, prod.E_V)
    batch = geo.sample_uniform(body, count, seed)
    lo, hi = body.box
    est = spec.spectral_estimate(body, batch, float((hi - lo).min()) / cells, seed=seed)
    return spec.kls_ratio_report(prod, est), est


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--count", type=int, default=20_000)
    ap.add_argument("--cells", type=int, default=12)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)

    header = ["family", "M", "A2", "d_lin", "d_poin", "ratio", "criterion", "fitted_constant"]
    rows = []
    for label, raws in sweep_families(args.n):
        t0 = time.perf_counter()
        row, _ = sweep_row(raws, args.count, args.seed, args.cells)
        rows.append([label, row["M"], row["A2"], row["d_lin"], row["d_poin"], row["ratio"], row["criterion"],
                     row["fitted_constant"]])
        print(f"{label:<28} M={row['M']:.4f} A2={row['A2']:.4f} ratio={row['ratio']:.4f} "
              f"C={row['fitted_constant']:.4f}  ({time.perf_counter() - t0:.1f}s)")
    consts = [r[7] for r in rows]
    print(f"spread max/min = {max(consts) / min(consts):.4f}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(rows_to_csv(header, rows, {"n": args.n, "seed": args.seed}))


if __name__ == "__main__":
    main()
