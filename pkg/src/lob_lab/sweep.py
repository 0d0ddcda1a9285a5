"""Frequency and drift sweeps over the equilibrium construction."""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .equilibrium import ConvergenceError, EquilibriumPath, ModelParams, solve_full

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SWEEP_COLUMNS = ("n", "alpha", "spread0", "spreadT", "max_abs_la", "max_abs_lb", "degenerate_from")
PATH_COLUMNS = ("n", "t", "pa", "pb", "la", "lb", "drift_to_horizon")


def fmt(value) -> str:
    """12 significant digits; NaN/None become an empty field."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if not math.isfinite(value):
        return ""
    return f"{value:.12g}"


def _parse(text: str, kind=float):
    return None if text == "" else kind(text)


def _num(text: str) -> float:
    return math.nan if text == "" else float(text)


@dataclass
class SweepRow:
    n: int
    alpha: float
    spread0: float
    spreadT: float
    max_abs_la: float
    max_abs_lb: float
    degenerate_from: int | None
    error: str | None = None

    @classmethod
    def from_path(cls, path: EquilibriumPath) -> "SweepRow":
        N = path.steps
        k = path.first_valid
        la, lb = path.la[k:], path.lb[k:]
        return cls(
            n=N,
            alpha=path.params.alpha,
            spread0=float(path.pa[0] - path.pb[0]),
            spreadT=float(path.pa[N] - path.pb[N]),
            max_abs_la=float(np.max(np.abs(la))) if la.size else math.nan,
            max_abs_lb=float(np.max(np.abs(lb))) if lb.size else math.nan,
            degenerate_from=path.degenerate_from,
        )

    def values(self) -> list[str]:
        return [fmt(self.n), fmt(self.alpha), fmt(self.spread0), fmt(self.spreadT),
                fmt(self.max_abs_la), fmt(self.max_abs_lb), fmt(self.degenerate_from)]


@dataclass
class SweepTable:
    rows: list[SweepRow] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.rows],
                        dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"schema={SCHEMA_VERSION}", *SWEEP_COLUMNS])
        for r in self.rows:
            w.writerow([SCHEMA_VERSION, *r.values()])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SweepTable":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != [f"schema={SCHEMA_VERSION}", *SWEEP_COLUMNS]:
            raise ValueError(f"unsupported sweep header {header}")
        rows = []
        for rec in reader:
            _, n, alpha, s0, sT, mla, mlb, deg = rec
            rows.append(SweepRow(int(n), float(alpha), _num(s0), _num(sT), _num(mla), _num(mlb),
                                 _parse(deg, int)))
        return cls(rows)


def _map(fn: Callable, items: Sequence, threads: int | None):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))  # preserves input order
    return [fn(x) for x in items]


def spread_vs_frequency(alpha: float, sigma: float, T: float, N_list: Iterable[int],
                        threads: int | None = None) -> SweepTable:
    N_list = list(N_list)
    if not N_list or min(N_list) < 2:
        raise ValueError("N_list must be nonempty with every N >= 2")

    def row(N: int) -> SweepRow:
        try:
            return SweepRow.from_path(solve_full(ModelParams(alpha, sigma, T, N)))
        except ConvergenceError as exc:
            log.warning("N=%d: %s", N, exc)
            return SweepRow(N, alpha, math.nan, math.nan, math.nan, math.nan, None, error=str(exc))

    return SweepTable(_map(row, N_list, threads))


class NonMonotoneDegeneracy(RuntimeError):
    def __init__(self, points: list[tuple[float, bool]]):
        super().__init__(f"degeneracy is not monotone in alpha on the scan grid: {points}")
        self.points = points


@dataclass(frozen=True)
class CriticalDriftResult:
    N: int
    alpha_star: float
    bracket_width: float
    scan_certificate: tuple[tuple[float, bool], ...]

    def as_dict(self) -> dict:
        return {"N": self.N, "alpha_star": self.alpha_star, "bracket_width": self.bracket_width,
                "bracket": [self.alpha_star - self.bracket_width / 2, self.alpha_star + self.bracket_width / 2],
                "scan_certificate": [list(p) for p in self.scan_certificate]}


def is_degenerate(alpha: float, N: int, sigma: float = 1.0, T: float = 1.0) -> bool:
    return solve_full(ModelParams(alpha, sigma, T, N)).degenerate_from is not None


def critical_alpha(N: int, sigma: float = 1.0, T: float = 1.0, tol: float = 1e-6,
                   alpha_hi: float = 0.05, scan_points: int = 41) -> CriticalDriftResult:
    """Largest drift with a non-degenerate construction on the whole horizon.

    The upper end is doubled until degenerate, a uniform scan certifies that
    the degeneracy indicator switches exactly once on [0, alpha_hi], and the
    switch is then bisected down to ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if is_degenerate(0.0, N, sigma, T):
        raise NonMonotoneDegeneracy([(0.0, True)])
    while not is_degenerate(alpha_hi, N, sigma, T):
        alpha_hi *= 2.0
        if alpha_hi > 1e6:
            raise RuntimeError(f"no degeneracy found for N={N} up to alpha={alpha_hi}")

    grid = np.linspace(0.0, alpha_hi, scan_points)
    flags = [is_degenerate(float(a), N, sigma, T) for a in grid]
    certificate = tuple((float(a), f) for a, f in zip(grid, flags))
    first = flags.index(True)
    if not all(flags[first:]):
        raise NonMonotoneDegeneracy(list(certificate))

    lo, hi = float(grid[first - 1]), float(grid[first])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_degenerate(mid, N, sigma, T):
            hi = mid
        else:
            lo = mid
    return CriticalDriftResult(N, 0.5 * (lo + hi), hi - lo, certificate)


@dataclass
class PathReport:
    path: EquilibriumPath

    def rows(self) -> list[tuple]:
        p = self.path.params
        t = self.path.times
        return [(n, t[n], self.path.pa[n], self.path.pb[n], self.path.la[n], self.path.lb[n],
                 p.alpha * (p.horizon - t[n])) for n in range(p.steps + 1)]

    def to_csv(self) -> str:
        p = self.path.params
        buf = io.StringIO()
        buf.write(f"# alpha={p.alpha!r} sigma={p.sigma!r} T={p.horizon!r} N={p.steps} "
                  f"degenerate_from={fmt(self.path.degenerate_from)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"schema={SCHEMA_VERSION}", *PATH_COLUMNS])
        for r in self.rows():
            w.writerow([SCHEMA_VERSION, *map(fmt, r)])
        return buf.getvalue()


def path_report(params: ModelParams) -> PathReport:
    return PathReport(solve_full(params))


def read_path_csv(text: str) -> EquilibriumPath:
    """Inverse of :meth:`PathReport.to_csv`."""
    lines = text.splitlines()
    meta = dict(kv.split("=", 1) for kv in lines[0].lstrip("# ").split())
    params = ModelParams(float(meta["alpha"]), float(meta["sigma"]), float(meta["T"]), int(meta["N"]))
    reader = csv.reader(lines[1:])
    header = next(reader)
    if header != [f"schema={SCHEMA_VERSION}", *PATH_COLUMNS]:
        raise ValueError(f"unsupported path header {header}")
    cols = {k: np.full(params.steps + 1, np.nan) for k in ("pa", "pb", "la", "lb")}
    for rec in reader:
        n = int(rec[1])
        for k, v in zip(("pa", "pb", "la", "lb"), rec[3:7]):
            if v != "":
                cols[k][n] = float(v)
    deg = _parse(meta.get("degenerate_from", ""), int)
    return EquilibriumPath(params, cols["pa"], cols["pb"], cols["la"], cols["lb"], deg)
