"""Quote and execution-price paths under positive drift, one CSV per N.

    python scripts/drift_paths.py --alpha 0.1 --N 20,50,100,200,500 --outdir out/paths
"""
import argparse
from pathlib import Path

from lob_lab.equilibrium import ModelParams
from lob_lab.sweep import path_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--N", default="20,50,100,200,500")
    ap.add_argument("--outdir", type=Path, default=Path("out/paths"))
    args = ap.parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)

    print(f"{'N':>5} {'degenerate_from':>16} {'t*':>8} {'min|la|':>10}")
    for N in (int(v) for v in args.N.split(",")):
        rep = path_report(ModelParams(args.alpha, args.sigma, args.T, N))
        p = rep.path
        (args.outdir / f"path_alpha{args.alpha:g}_N{N}.csv").write_text(rep.to_csv())
        t_star = "" if p.degenerate_from is None else f"{p.times[p.degenerate_from]:.3f}"
        deg = "-" if p.degenerate_from is None else p.degenerate_from
        print(f"{N:>5} {deg!s:>16} {t_star:>8} {p.min_abs_la:>10.3e}")


if __name__ == "__main__":
    main()
