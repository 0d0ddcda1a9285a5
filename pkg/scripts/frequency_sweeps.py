"""Time-zero spread at zero drift and the critical drift, both versus N.

    python scripts/frequency_sweeps.py --N 20,50,100,200,500 --outdir out/sweeps
"""
import argparse
import json
from pathlib import Path

from lob_lab.sweep import critical_alpha, spread_vs_frequency


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", default="20,50,100,200,500")
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--tol", type=float, default=1e-6)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--outdir", type=Path, default=Path("out/sweeps"))
    args = ap.parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)
    Ns = [int(v) for v in args.N.split(",")]

    table = spread_vs_frequency(0.0, args.sigma, args.T, Ns, threads=args.threads)
    (args.outdir / "spread_alpha0.csv").write_text(table.to_csv())
    stars = [critical_alpha(N, args.sigma, args.T, args.tol) for N in Ns]
    (args.outdir / "critical_alpha.json").write_text(json.dumps([s.as_dict() for s in stars], indent=2))

    print(f"{'N':>5} {'spread0':>10} {'max|la|':>10} {'alpha*':>10}")
    for row, s in zip(table.rows, stars):
        print(f"{row.n:>5} {row.spread0:>10.5f} {row.max_abs_la:>10.5f} {s.alpha_star:>10.6f}")


if __name__ == "__main__":
    main()
