"""Backward construction of the two-atom LTC equilibrium.

All prices are relative to the fundamental price at the same step. Index
``n`` runs over 0..N; entry N is the terminal book, which by the LTC
property repeats the quotes of step N-1 shifted by the last fundamental
move.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .gaussian_kernel import (
    GaussianIncrement,
    NoFiniteMaximizer,
    buy_objective,
    buy_objective_maximizer,
    mills_ratio,
    sell_objective,
    sell_objective_maximizer,
)


@dataclass(frozen=True)
class ModelParams:
    """Drift ``alpha`` and volatility ``sigma`` of the fundamental price,
    horizon ``horizon`` split into ``steps`` trading periods."""

    alpha: float = 0.0
    sigma: float = 1.0
    horizon: float = 1.0
    steps: int = 100

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.sigma > 0 and self.horizon > 0):
            raise ValueError(f"invalid model parameters {self}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def increment(self) -> GaussianIncrement:
        return GaussianIncrement(self.alpha * self.dt, self.sigma * math.sqrt(self.dt))

    def with_alpha(self, alpha: float) -> "ModelParams":
        return ModelParams(alpha, self.sigma, self.horizon, self.steps)


class Quotes(NamedTuple):
    pa: float
    pb: float
    la: float
    lb: float


class Violation(str, Enum):
    """Inequalities that rule out market orders or arbitrage."""

    LONG_MARKET_ORDER = "long agents submit market orders"  # pb > la
    SHORT_MARKET_ORDER = "short agents submit market orders"  # lb > pa
    ROUND_TRIP = "scalable round-trip"  # pa < pb + |alpha| dt

    @property
    def side(self) -> str:
        return {"LONG_MARKET_ORDER": "ask", "SHORT_MARKET_ORDER": "bid"}.get(self.name, "arbitrage")


@dataclass(frozen=True)
class DegenerateTerminal:
    quotes: Quotes
    violations: tuple[Violation, ...]


@dataclass(frozen=True)
class DegeneracySignal:
    """Why the backward step could not produce a non-degenerate book.

    ``side`` is ``"ask"``/``"bid"`` when one side stops posting limit orders
    (the continuation value has the wrong sign), otherwise the violated
    no-market-order inequalities are listed.
    """

    side: str
    violations: tuple[Violation, ...] = ()

    @property
    def reason(self) -> str:
        if self.violations:
            return "; ".join(v.value for v in self.violations)
        return f"{self.side} side stops posting limit orders"


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last_iterate: tuple[float, float], residual: float):
        super().__init__(f"{message} (last iterate pa={last_iterate[0]!r}, pb={last_iterate[1]!r}, "
                         f"residual={residual:.3e})")
        self.last_iterate = last_iterate
        self.residual = residual


def check_no_market_order(pa: float, pb: float, la: float, lb: float,
                          params: ModelParams) -> list[Violation]:
    out = []
    if pb > la:
        out.append(Violation.LONG_MARKET_ORDER)
    if lb > pa:
        out.append(Violation.SHORT_MARKET_ORDER)
    if pa < pb + abs(params.alpha) * params.dt:
        out.append(Violation.ROUND_TRIP)
    return out


def _expected_execution(pa: float, pb: float, la_next: float, lb_next: float,
                        inc: GaussianIncrement) -> tuple[float, float]:
    la = la_next + inc.mean + sell_objective(pa, la_next, inc)
    lb = lb_next + inc.mean - buy_objective(pb, lb_next, inc)
    return la, lb


def solve_terminal_period(params: ModelParams, damping: float = 0.5, tol: float = 1e-12,
                          max_iters: int = 10_000) -> Quotes | DegenerateTerminal:
    """Quotes at step N-1 from the one-period fixed point.

    The ask must maximize the sell objective against continuation value pb,
    and the bid the buy objective against pa. Both first-order conditions
    are iterated in their inverted form,

        pa = s * Mills((m - pb) / s),    pb = -s * Mills((pa - m) / s),

    which has the same fixed points as the best-response maps but is a
    contraction (the best responses themselves have slope > 1 and repel).
    """
    inc = params.increment
    m, s = inc.mean, inc.std
    pa, pb = 0.75 * s, -0.75 * s
    step = math.inf
    for _ in range(max_iters):
        pa_new = (1 - damping) * pa + damping * s * float(mills_ratio((m - pb) / s))
        pb_new = (1 - damping) * pb - damping * s * float(mills_ratio((pa - m) / s))
        step = max(abs(pa_new - pa), abs(pb_new - pb))
        pa, pb = pa_new, pb_new
        if step < tol * s:
            break
    else:
        raise ConvergenceError("terminal fixed point did not converge", (pa, pb), step)

    # polish with the forward best responses and report the residual
    ask = sell_objective_maximizer(pb, inc)
    bid = buy_objective_maximizer(pa, inc)
    if isinstance(ask, NoFiniteMaximizer) or isinstance(bid, NoFiniteMaximizer):
        raise ConvergenceError("terminal fixed point left the interior region", (pa, pb), step)
    residual = max(abs(ask.price - pa), abs(bid.price - pb))
    if residual > 1e-9 * s:
        raise ConvergenceError("terminal fixed point residual too large", (pa, pb), residual)

    la, lb = _expected_execution(pa, pb, pb, pa, inc)
    quotes = Quotes(pa, pb, la, lb)
    violations = check_no_market_order(*quotes, params)
    if violations:
        return DegenerateTerminal(quotes, tuple(violations))
    return quotes


def backward_step(la_next: float, lb_next: float, params: ModelParams) -> Quotes | DegeneracySignal:
    if la_next >= 0:
        return DegeneracySignal("ask")
    if lb_next <= 0:
        return DegeneracySignal("bid")
    inc = params.increment
    ask = sell_objective_maximizer(la_next, inc)
    bid = buy_objective_maximizer(lb_next, inc)
    pa, pb = ask.price, bid.price
    la = la_next + inc.mean + ask.value
    lb = lb_next + inc.mean - bid.value
    violations = check_no_market_order(pa, pb, la, lb, params)
    if violations:
        return DegeneracySignal(violations[0].side, tuple(violations))
    return Quotes(pa, pb, la, lb)


@dataclass
class EquilibriumPath:
    params: ModelParams
    pa: np.ndarray
    pb: np.ndarray
    la: np.ndarray
    lb: np.ndarray
    degenerate_from: int | None = None
    reason: str | None = None
    min_abs_la: float = field(init=False)

    def __post_init__(self):
        ok = np.isfinite(self.la)
        self.min_abs_la = float(np.min(np.abs(self.la[ok]))) if ok.any() else math.nan

    @property
    def steps(self) -> int:
        return self.params.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.params.dt

    @property
    def first_valid(self) -> int:
        """Smallest step index with a constructed book."""
        return 0 if self.degenerate_from is None else self.degenerate_from + 1

    def quotes(self, n: int) -> Quotes:
        return Quotes(self.pa[n], self.pb[n], self.la[n], self.lb[n])


def solve_full(params: ModelParams) -> EquilibriumPath:
    """Terminal fixed point, then backward steps N-2, ..., 0.

    Stops at the first step where no non-degenerate book exists; entries at
    and before that step are left as NaN.
    """
    N = params.steps
    pa, pb, la, lb = (np.full(N + 1, np.nan) for _ in range(4))
    terminal = solve_terminal_period(params)
    if isinstance(terminal, DegenerateTerminal):
        reason = "; ".join(v.value for v in terminal.violations)
        return EquilibriumPath(params, pa, pb, la, lb, N - 1, reason)

    pa[N - 1], pb[N - 1], la[N - 1], lb[N - 1] = terminal
    pa[N], pb[N] = terminal.pa, terminal.pb
    la[N], lb[N] = terminal.pb, terminal.pa

    for n in range(N - 2, -1, -1):
        res = backward_step(la[n + 1], lb[n + 1], params)
        if isinstance(res, DegeneracySignal):
            return EquilibriumPath(params, pa, pb, la, lb, n, res.reason)
        pa[n], pb[n], la[n], lb[n] = res
    return EquilibriumPath(params, pa, pb, la, lb)
