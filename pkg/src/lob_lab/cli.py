"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence,
4 a verification check failed. Results go to ``--output`` (or stdout when
omitted); the one-line summary goes to stdout only when a file was written.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .equilibrium import ConvergenceError, ModelParams, solve_full
from .sweep import critical_alpha, path_report, read_path_csv, spread_vs_frequency

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_CHECK_FAILED = 0, 2, 3, 4

NATURAL_FORMAT = {"solve": "csv", "sweep-spread": "csv", "critical-alpha": "json",
                  "verify": "json", "tails": "json", "proximity": "json"}


class ValidationError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def read_config(path: str) -> dict[str, str]:
    """``key=value`` per line; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def write_atomic(path: str, text: str):
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent if str(target.parent) else ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _model_flags(p: argparse.ArgumentParser, N_list: bool = False):
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--T", type=float, default=1.0)
    if N_list:
        p.add_argument("--N", type=_ints, default="20,50,100,200,500", help="comma-separated step counts")
    else:
        p.add_argument("--N", type=int, default=100)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; explicit flags win")
    common.add_argument("--output", help="result file (default: stdout)")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--threads", type=int, default=os.environ.get("LOB_LAB_THREADS"))

    parser = argparse.ArgumentParser(prog="lob-lab", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="equilibrium path table (CSV)")
    _model_flags(p)

    p = sub.add_parser("sweep-spread", parents=[common], help="spread and execution prices versus N (CSV)")
    _model_flags(p, N_list=True)

    p = sub.add_parser("critical-alpha", parents=[common], help="critical drift per N (JSON)")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--N", type=_ints, default="200")
    p.add_argument("--tol", type=float, default=1e-6)

    p = sub.add_parser("verify", parents=[common], help="Monte-Carlo equilibrium checks (JSON)")
    _model_flags(p)
    p.add_argument("--path", help="path CSV written by solve; overrides the model flags")
    p.add_argument("--paths", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=50_000)
    p.add_argument("--offsets", type=_floats, default="0.1,0.5,1.0", help="deviation offsets in units of sigma sqrt(dt)")
    p.add_argument("--s0", type=float, default=1.0)
    p.add_argument("--s-list", type=_floats, default="1,-1,2,-2")

    p = sub.add_parser("tails", parents=[common], help="conditional tail or mean-gap check (JSON)")
    p.add_argument("--check", choices=["tail", "mean-gap"], default="tail")
    p.add_argument("--spec", choices=["brownian", "perturbed"], default="perturbed")
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--paths", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seed2", type=int, help="second seed for the stability check (default seed+1)")
    p.add_argument("--euler-steps", type=int, default=1000)
    p.add_argument("--dt-list", type=_floats, default="1e-2,1e-3,1e-4")

    p = sub.add_parser("proximity", parents=[common], help="Gaussian proximity of increments (JSON)")
    p.add_argument("--model", choices=["constant", "tanh-vol"], default="tanh-vol")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--sigma", type=float, default=1.0, help="volatility of the constant model")
    p.add_argument("--dt-list", type=_floats, default="1e-1,1e-2,1e-3")
    p.add_argument("--paths", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            raise ValidationError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)   # flags override the file
    fmt = NATURAL_FORMAT[args.command]
    if args.format and args.format != fmt:
        raise ValidationError(f"{args.command} writes {fmt}, not {args.format}")
    args.format = fmt
    if args.threads is not None:
        args.threads = int(args.threads)
    return args


def _params(args) -> ModelParams:
    return ModelParams(args.alpha, args.sigma, args.T, args.N)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, default=float) + "\n"


# each command returns (result text, summary, passed)

def cmd_solve(args):
    rep = path_report(_params(args))
    path = rep.path
    if path.degenerate_from is None:
        state = "non-degenerate on the whole horizon"
    else:
        state = f"degenerate from step {path.degenerate_from} ({path.reason})"
    return rep.to_csv(), f"solve N={args.N} alpha={args.alpha:g}: {state}", True


def cmd_sweep(args):
    table = spread_vs_frequency(args.alpha, args.sigma, args.T, args.N, threads=args.threads)
    errors = [r.n for r in table.rows if r.error]
    if errors and len(errors) == len(table.rows):
        raise ConvergenceError("no N in the sweep converged", (math.nan, math.nan), math.nan)
    deg = [r.n for r in table.rows if r.degenerate_from is not None]
    return table.to_csv(), f"sweep-spread: {len(table.rows)} rows, degenerate at N={deg}, failed N={errors}", True


def cmd_critical(args):
    results = [critical_alpha(N, args.sigma, args.T, args.tol).as_dict() for N in args.N]
    out = {"sigma": args.sigma, "T": args.T, "tol": args.tol, "results": results}
    if len(results) == 1:
        out.update(results[0])
    text = ", ".join(f"N={r['N']}: {r['alpha_star']:.6g}" for r in results)
    return _dump(out), f"critical-alpha {text}", True


def cmd_verify(args):
    from .exchange import SimConfig, verification_report

    if args.path:
        path = read_path_csv(Path(args.path).read_text())
    else:
        path = solve_full(_params(args))
    if path.degenerate_from is not None:
        raise ValidationError(f"path is degenerate from step {path.degenerate_from}; nothing to verify")
    scale = path.params.sigma * math.sqrt(path.params.dt)
    cfg = SimConfig(args.paths, args.seed, tuple(o * scale for o in args.offsets), args.batch)
    rep = verification_report(path, cfg, args.s_list, args.s0)
    vf_ok = all(c["pass"] for c in rep["value_function_checks"])
    summary = (f"verify: value function {'ok' if vf_ok else 'FAILED'}, max deviation gain "
               f"{rep['max_gain']:.3g} (se {rep['max_gain_stderr']:.3g})")
    return _dump(rep), summary, rep["pass"]


def cmd_tails(args):
    from . import ito_tails as it

    def make(steps):
        return it.brownian_spec(euler_steps=steps) if args.spec == "brownian" else it.perturbed_spec(args.eps, steps)

    if args.check == "mean-gap":
        rep = it.conditional_mean_gap(make(args.euler_steps), args.dt_list, args.paths, args.seed,
                                      substeps=min(args.euler_steps, 100))
        return _dump(rep.as_dict()), f"tails mean-gap: C3={rep.common_bound:.4g} limit={rep.bound_limit:.4g}", rep.passed

    spec = make(args.euler_steps)
    seed2 = args.seed + 1 if args.seed2 is None else args.seed2
    grid = it.tail_grid()
    a = it.simulate_terminal(spec, args.paths, args.seed)
    b = it.simulate_terminal(spec, args.paths, seed2)
    est = it.conditional_tail(a.terminal, grid)
    fit = it.exponential_bound_check(est, args.c1, it.conditional_tail(b.terminal, grid))
    extra = {"running_max": it.running_max_check(a)}
    if args.spec == "brownian":
        extra["oracle_agreement"] = it.oracle_agreement(est, it.brownian_tail_oracle(grid))
    rep = it.tails_report(spec, est, fit, extra)
    return _dump(rep), f"tails: C1={fit.C1:.4g} (other seed {fit.C1_other:.4g}) at {fit.argmax}", fit.passed


def cmd_proximity(args):
    from . import ito_tails as it

    model = it.constant_vol_model(args.sigma, args.alpha) if args.model == "constant" else \
        it.stochastic_vol_model(args.alpha)
    rep = it.gaussian_proximity(model, args.dt_list, args.paths, args.seed).as_dict()
    gaps = ", ".join(f"{e['dt']:g}: {e['tail_gap']:.3g}/{e['mean_gap']:.3g}" for e in rep["estimates"])
    return _dump(rep), f"proximity tail/mean gaps {gaps}", rep["pass"]


COMMANDS = {"solve": cmd_solve, "sweep-spread": cmd_sweep, "critical-alpha": cmd_critical,
            "verify": cmd_verify, "tails": cmd_tails, "proximity": cmd_proximity}


def run(args: argparse.Namespace) -> int:
    text, summary, passed = COMMANDS[args.command](args)
    if args.output:
        write_atomic(args.output, text)
        print(f"{summary}; wrote {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
        return run(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:   # argparse
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
