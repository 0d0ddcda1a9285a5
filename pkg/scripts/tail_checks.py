"""Conditional-tail, conditional-mean and Gaussian-proximity checks.

Writes one JSON report per check. The default 10^6 paths take a couple of
minutes on one core; pass --paths 100000 for a quick look.
"""
import argparse
import json
from pathlib import Path

from lob_lab import ito_tails as it


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=1_000_000)
    ap.add_argument("--seeds", default="0,1")
    ap.add_argument("--eps", type=float, default=0.01)
    ap.add_argument("--c1", type=float, default=1.0)
    ap.add_argument("--outdir", type=Path, default=Path("out/tails"))
    args = ap.parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)
    s1, s2 = (int(v) for v in args.seeds.split(","))

    specs = [it.brownian_spec(), it.perturbed_spec(args.eps)]
    grid = it.tail_grid()
    first = it.simulate_common(specs, args.paths, s1)
    second = it.simulate_common(specs, args.paths, s2)
    for spec, a, b in zip(specs, first, second):
        est = it.conditional_tail(a.terminal, grid)
        fit = it.exponential_bound_check(est, args.c1, it.conditional_tail(b.terminal, grid))
        extra = {"running_max": it.running_max_check(a)}
        if spec.name == "brownian":
            extra["oracle_agreement"] = it.oracle_agreement(est, it.brownian_tail_oracle(grid))
        rep = it.tails_report(spec, est, fit, extra)
        (args.outdir / f"tail_{spec.name.split('(')[0]}.json").write_text(json.dumps(rep, indent=2))
        print(f"{spec.name:<22} C1={fit.C1:.4f} / {fit.C1_other:.4f} at {fit.argmax}  pass={fit.passed}")

    for spec in specs:
        gap = it.conditional_mean_gap(spec, [1e-2, 1e-3, 1e-4], min(args.paths, 500_000), s1)
        (args.outdir / f"mean_gap_{spec.name.split('(')[0]}.json").write_text(json.dumps(gap.as_dict(), indent=2))
        print(f"{spec.name:<22} C3={gap.common_bound:.4f} (limit {gap.bound_limit:.4f})")

    for model in (it.constant_vol_model(), it.stochastic_vol_model(0.1)):
        prox = it.gaussian_proximity(model, [1e-1, 1e-2, 1e-3], args.paths, s1)
        (args.outdir / f"proximity_{model.name.split('(')[0]}.json").write_text(json.dumps(prox.as_dict(), indent=2))
        rows = ", ".join(f"dt={r.dt:g}: {r.tail_gap:.4f}/{r.mean_gap:.4f}" for r in prox.rows)
        print(f"{model.name:<22} {rows}")


if __name__ == "__main__":
    main()
