"""Monte-Carlo exchange used to check that a solved path is an equilibrium.

The engine works in absolute prices with the fundamental started at 0. The
book at step n holds one sell atom at ``p0_n + pa[n]`` and one buy atom at
``p0_n + pb[n]``. Demand after the move is linear, ``D(p) = kappa (p0 - p)``.
A limit sell at P fills when positive demand at P exceeds the sell mass
strictly below P. The deviating agent is infinitesimal and never moves the
book.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator, Sequence, Union

import numpy as np
from scipy.stats import norm

from .equilibrium import EquilibriumPath

# ---------------------------------------------------------------- game objects


@dataclass(frozen=True)
class LOBState:
    sell_atoms: tuple[tuple[float, float], ...]
    buy_atoms: tuple[tuple[float, float], ...]
    fundamental: float = 0.0

    def __post_init__(self):
        for _, mass in (*self.sell_atoms, *self.buy_atoms):
            if not mass > 0:
                raise ValueError("atom masses must be positive")
        if self.sell_atoms and self.buy_atoms and not self.ask > self.bid:
            raise ValueError(f"crossed book: ask {self.ask} <= bid {self.bid}")

    @classmethod
    def two_atom(cls, fundamental: float, pa: float, pb: float,
                 ask_mass: float = 1.0, bid_mass: float = 1.0) -> "LOBState":
        return cls(((fundamental + pa, ask_mass),), ((fundamental + pb, bid_mass),), fundamental)

    @property
    def ask(self) -> float:
        return min((p for p, _ in self.sell_atoms), default=math.inf)

    @property
    def bid(self) -> float:
        return max((p for p, _ in self.buy_atoms), default=-math.inf)

    def sell_mass_below(self, price: float) -> float:
        return sum(m for p, m in self.sell_atoms if p < price)

    def buy_mass_above(self, price: float) -> float:
        return sum(m for p, m in self.buy_atoms if p > price)


@dataclass(frozen=True)
class AgentState:
    inventory: float


@dataclass(frozen=True)
class Wait:
    pass


@dataclass(frozen=True)
class LimitSell:
    price: float
    size: float

    def __post_init__(self):
        if not self.size > 0 or not math.isfinite(self.price):
            raise ValueError(f"invalid limit sell {self}")


@dataclass(frozen=True)
class LimitBuy:
    price: float
    size: float

    def __post_init__(self):
        if not self.size > 0 or not math.isfinite(self.price):
            raise ValueError(f"invalid limit buy {self}")


@dataclass(frozen=True)
class MarketOrder:
    """Signed size: positive sells at the bid, negative buys at the ask."""

    size: float


Control = Union[Wait, LimitSell, LimitBuy, MarketOrder]


@dataclass(frozen=True)
class DemandModel:
    """Linear demand with slope ``kappa`` and the resting masses of the book."""

    kappa: float = 1.0
    ask_mass: float = 1.0
    bid_mass: float = 1.0

    def __post_init__(self):
        if not (self.kappa > 0 and self.ask_mass > 0 and self.bid_mass > 0):
            raise ValueError(f"invalid demand model {self}")


@dataclass(frozen=True)
class SimConfig:
    paths: int = 200_000
    seed: int = 0
    deviation_grid: tuple[float, ...] = ()
    batch: int = 50_000

    def __post_init__(self):
        if int(self.paths) != self.paths or self.paths < 1:
            raise ValueError("paths must be a positive integer")
        if int(self.batch) != self.batch or self.batch < 1:
            raise ValueError("batch must be a positive integer")
        if any(not d > 0 for d in self.deviation_grid):
            raise ValueError("deviation offsets must be positive")
        object.__setattr__(self, "deviation_grid", tuple(float(d) for d in self.deviation_grid))


class ExecutionError(RuntimeError):
    """Market order against an empty side of the book."""


class StrategyError(ValueError):
    pass


def step_state(state: AgentState, control: Control, lob: LOBState, realized_increment: float,
               demand: DemandModel = DemandModel()) -> tuple[AgentState, float]:
    """Apply one control; returns the new state and the cash delta."""
    s = state.inventory
    new_fundamental = lob.fundamental + realized_increment
    if isinstance(control, Wait):
        return state, 0.0
    if isinstance(control, MarketOrder):
        q = control.size
        if q > 0:
            if not lob.buy_atoms:
                raise ExecutionError("market sell against an empty bid side")
            return AgentState(s - q), q * lob.bid
        if q < 0:
            if not lob.sell_atoms:
                raise ExecutionError("market buy against an empty ask side")
            return AgentState(s - q), q * lob.ask
        return state, 0.0
    if isinstance(control, LimitSell):
        p = control.price
        if demand.kappa * (new_fundamental - p) > lob.sell_mass_below(p):
            return AgentState(s - control.size), p * control.size
        return state, 0.0
    if isinstance(control, LimitBuy):
        p = control.price
        if demand.kappa * (p - new_fundamental) > lob.buy_mass_above(p):
            return AgentState(s + control.size), -p * control.size
        return state, 0.0
    raise StrategyError(f"unknown control {control!r}")


def terminal_marking(inventory: float, lob: LOBState) -> float:
    """Liquidation value: longs sell at the bid, shorts buy back at the ask."""
    return max(inventory, 0.0) * lob.bid - max(-inventory, 0.0) * lob.ask


# ------------------------------------------------------------ vectorized engine

WAIT, LIMIT_SELL, LIMIT_BUY, MARKET = 0, 1, 2, 3


@dataclass
class ControlBatch:
    """One control per path; ``price_rel`` is relative to the current fundamental."""

    kind: np.ndarray
    price_rel: np.ndarray
    size: np.ndarray

    @classmethod
    def wait(cls, n_paths: int) -> "ControlBatch":
        return cls(np.zeros(n_paths, np.int8), np.zeros(n_paths), np.zeros(n_paths))


Strategy = Callable[[int, np.ndarray], ControlBatch]


def equilibrium_strategy(path: EquilibriumPath) -> Strategy:
    """Post the whole position at the own-side quote every step."""

    def rule(n: int, inventory: np.ndarray) -> ControlBatch:
        kind = np.where(inventory > 0, LIMIT_SELL, np.where(inventory < 0, LIMIT_BUY, WAIT)).astype(np.int8)
        price = np.where(inventory > 0, path.pa[n], path.pb[n])
        return ControlBatch(kind, price, np.abs(inventory))

    return rule


def wait_strategy(n: int, inventory: np.ndarray) -> ControlBatch:
    return ControlBatch.wait(inventory.size)


@dataclass
class MCEstimate:
    mean: float
    stderr: float
    paths: int
    rule_mismatches: int = 0


class _Moments:
    """Chan-style mean/M2 accumulation; combining batches in a fixed order
    keeps results independent of how batches were scheduled."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, x: np.ndarray):
        k = x.shape[0]
        mean_b = x.mean(axis=0)
        m2_b = ((x - mean_b) ** 2).sum(axis=0)
        delta = mean_b - self.mean
        total = self.n + k
        self.mean = self.mean + delta * k / total
        self.m2 = self.m2 + m2_b + delta ** 2 * self.n * k / total
        self.n = total

    @property
    def stderr(self):
        if self.n < 2:
            return np.zeros_like(np.asarray(self.mean)) * np.nan
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


def increment_batches(path: EquilibriumPath, cfg: SimConfig) -> Iterator[np.ndarray]:
    """Fundamental increments, shape (batch, N); one Philox stream per batch."""
    inc = path.params.increment
    N = path.steps
    for b, start in enumerate(range(0, cfg.paths, cfg.batch)):
        size = min(cfg.batch, cfg.paths - start)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(b,))))
        yield inc.mean + inc.std * rng.standard_normal((size, N))


def _require_nondegenerate(path: EquilibriumPath):
    if path.degenerate_from is not None:
        raise ValueError(f"path is degenerate from step {path.degenerate_from}; nothing to simulate")


def _validate(ctrl: ControlBatch, inventory: np.ndarray, n: int):
    if not (ctrl.kind.shape == ctrl.price_rel.shape == ctrl.size.shape == inventory.shape):
        raise StrategyError(f"step {n}: control arrays have the wrong shape")
    if np.any((ctrl.kind < WAIT) | (ctrl.kind > MARKET)):
        raise StrategyError(f"step {n}: unknown control kind")
    limit = (ctrl.kind == LIMIT_SELL) | (ctrl.kind == LIMIT_BUY)
    if np.any(limit & ~(ctrl.size > 0)):
        raise StrategyError(f"step {n}: limit orders need a positive size")
    if np.any(limit & ~np.isfinite(ctrl.price_rel)):
        raise StrategyError(f"step {n}: limit orders need a finite price")


def _run_batch(strategy: Strategy, s0: float, path: EquilibriumPath, xi: np.ndarray,
               demand: DemandModel) -> tuple[np.ndarray, int]:
    n_paths, N = xi.shape
    p0 = np.zeros(n_paths)
    inv = np.full(n_paths, float(s0))
    cash = np.zeros(n_paths)
    mismatches = 0
    for n in range(N):
        ctrl = strategy(n, inv.copy())
        _validate(ctrl, inv, n)
        ask, bid = p0 + path.pa[n], p0 + path.pb[n]
        new_p0 = p0 + xi[:, n]
        price = p0 + ctrl.price_rel

        sell = ctrl.kind == LIMIT_SELL
        below = np.where(price > ask, demand.ask_mass, 0.0)
        fill = sell & (demand.kappa * (new_p0 - price) > below)
        # two-atom ansatz: an order at the ask fills iff the move clears it
        at_ask = sell & (ctrl.price_rel == path.pa[n])
        mismatches += int(np.count_nonzero(at_ask & (fill != (xi[:, n] > path.pa[n]))))
        inv -= np.where(fill, ctrl.size, 0.0)
        cash += np.where(fill, price * ctrl.size, 0.0)

        buy = ctrl.kind == LIMIT_BUY
        above = np.where(price < bid, demand.bid_mass, 0.0)
        fill = buy & (demand.kappa * (price - new_p0) > above)
        at_bid = buy & (ctrl.price_rel == path.pb[n])
        mismatches += int(np.count_nonzero(at_bid & (fill != (xi[:, n] < path.pb[n]))))
        inv += np.where(fill, ctrl.size, 0.0)
        cash -= np.where(fill, price * ctrl.size, 0.0)

        mkt = ctrl.kind == MARKET
        q = np.where(mkt, ctrl.size, 0.0)
        cash += np.where(q > 0, q * bid, q * ask)
        inv -= q
        p0 = new_p0

    N_ = path.steps
    marking = np.maximum(inv, 0) * (p0 + path.pb[N_]) - np.maximum(-inv, 0) * (p0 + path.pa[N_])
    return cash + marking, mismatches


def simulate_objective(strategy: Strategy, s0: float, eq_path: EquilibriumPath, cfg: SimConfig,
                       demand: DemandModel = DemandModel()) -> MCEstimate:
    """Expected cash plus terminal marking, started from inventory ``s0``."""
    _require_nondegenerate(eq_path)
    acc = _Moments()
    mismatches = 0
    for xi in increment_batches(eq_path, cfg):
        payoff, mm = _run_batch(strategy, s0, eq_path, xi, demand)
        acc.update(payoff)
        mismatches += mm
    return MCEstimate(float(acc.mean), float(acc.stderr), acc.n, mismatches)


def expected_value(path: EquilibriumPath, s: float, n: int = 0) -> float:
    """Piecewise-linear value: s+ la[n] - s- lb[n] (relative to p0_n)."""
    return max(s, 0.0) * path.la[n] - max(-s, 0.0) * path.lb[n]


def verify_value_function(eq_path: EquilibriumPath, s_list: Sequence[float], cfg: SimConfig,
                          demand: DemandModel = DemandModel()) -> dict:
    strategy = equilibrium_strategy(eq_path)
    checks = []
    by_s = {}
    for s in s_list:
        est = simulate_objective(strategy, s, eq_path, cfg, demand)
        target = expected_value(eq_path, s)
        gap = est.mean - target
        by_s[float(s)] = est
        checks.append({"s": float(s), "payoff": est.mean, "stderr": est.stderr, "expected": float(target),
                       "discrepancy": float(abs(gap)), "pass": bool(abs(gap) <= 3 * est.stderr),
                       "rule_mismatches": est.rule_mismatches})
    linearity = None
    if 1.0 in by_s and 2.0 in by_s:
        one, two = by_s[1.0], by_s[2.0]
        err = math.hypot(two.stderr, 2 * one.stderr)
        linearity = {"payoff_s1": one.mean, "payoff_s2": two.mean, "ratio": two.mean / one.mean,
                     "gap": two.mean - 2 * one.mean,
                     "pass": bool(abs(two.mean - 2 * one.mean) <= 3 * err + 1e-12 * abs(two.mean))}
    return {"checks": checks, "linearity": linearity,
            "pass": all(c["pass"] and c["rule_mismatches"] == 0 for c in checks)
            and (linearity is None or linearity["pass"])}


@dataclass
class DeviationReport:
    checks: list[dict] = field(default_factory=list)
    max_gain: float = -math.inf
    max_gain_stderr: float = 0.0
    argmax: dict | None = None
    familywise_z: float = math.inf

    @property
    def passed(self) -> bool:
        return not any(c["flagged"] for c in self.checks)

    @property
    def familywise_passed(self) -> bool:
        """Bonferroni version of :attr:`passed` at level 5% over all deviations."""
        return not any(c["gain"] > self.familywise_z * c["stderr"] for c in self.checks)


def deviation_test(eq_path: EquilibriumPath, s0: float, cfg: SimConfig,
                   demand: DemandModel = DemandModel()) -> DeviationReport:
    """One-shot deviations from the equilibrium strategy with common random numbers.

    For every step n the agent follows the equilibrium up to n, deviates once,
    then resumes. Deviations: post ``delta`` above or below the own quote,
    market order for the whole position, wait. The ``always_wait`` strategy
    is tested as well. Gains are per-path differences against the
    equilibrium payoff on the same draws.
    """
    _require_nondegenerate(eq_path)
    N = eq_path.steps
    if s0 == 0:
        return DeviationReport(max_gain=0.0)
    long = s0 > 0
    q = abs(s0)
    sign = 1.0 if long else -1.0
    own = eq_path.pa if long else eq_path.pb          # quote the agent posts at
    other = eq_path.pb if long else eq_path.pa        # where a market order trades
    mass = demand.ask_mass if long else demand.bid_mass

    labels: list[tuple[str, int | None, float | None]] = []
    for n in range(N):
        for d in cfg.deviation_grid:
            labels.append(("post_worse", n, d))
            labels.append(("post_better", n, d))
        labels.append(("market", n, None))
        labels.append(("wait", n, None))
    labels.append(("always_wait", None, None))
    acc = _Moments()

    for xi in increment_batches(eq_path, cfg):
        n_paths = xi.shape[0]
        p0 = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(xi, axis=1)], axis=1)

        def fills(n: int, rel: float) -> np.ndarray:
            # general rule: demand beyond the resting mass ahead of the order
            price = p0[:, n] + rel
            if long:
                ahead = mass if rel > own[n] else 0.0
                return demand.kappa * (p0[:, n + 1] - price) > ahead
            ahead = mass if rel < own[n] else 0.0
            return demand.kappa * (price - p0[:, n + 1]) > ahead

        # per-path equilibrium continuation from step k holding the position
        filled = np.stack([fills(k, own[k]) for k in range(N)], axis=1)
        cont = np.empty((n_paths, N + 1))
        cont[:, N] = sign * (p0[:, N] + other[N])
        for k in range(N - 1, -1, -1):
            cont[:, k] = np.where(filled[:, k], sign * (p0[:, k] + own[k]), cont[:, k + 1])
        held = np.ones((n_paths, N + 1), dtype=bool)
        held[:, 1:] = np.cumprod(~filled, axis=1).astype(bool)

        gains = np.empty((n_paths, len(labels)))
        for j, (kind, n, d) in enumerate(labels):
            if kind == "always_wait":
                gains[:, j] = cont[:, N] - cont[:, 0]
                continue
            if kind in ("post_worse", "post_better"):
                # "worse" is further from the fundamental (higher ask, lower bid)
                rel = own[n] + (d if kind == "post_worse" else -d) * sign
                dev = np.where(fills(n, rel), sign * (p0[:, n] + rel), cont[:, n + 1])
            elif kind == "market":
                dev = sign * (p0[:, n] + other[n])
            else:
                dev = cont[:, n + 1]
            gains[:, j] = np.where(held[:, n], dev - cont[:, n], 0.0)
        acc.update(q * gains)

    mean, se = np.atleast_1d(acc.mean), np.atleast_1d(acc.stderr)
    report = DeviationReport(familywise_z=float(norm.isf(0.05 / len(labels))))
    for (kind, n, d), g, e in zip(labels, mean, se):
        report.checks.append({"kind": kind, "step": n, "offset": d, "gain": float(g), "stderr": float(e),
                              "flagged": bool(g > 3 * e)})
    j = int(np.argmax(mean))
    report.max_gain, report.max_gain_stderr = float(mean[j]), float(se[j])
    report.argmax = report.checks[j]
    return report


def verification_report(eq_path: EquilibriumPath, cfg: SimConfig, s_list: Sequence[float] = (1, -1, 2, -2),
                        s0: float = 1.0, demand: DemandModel = DemandModel()) -> dict:
    """JSON-ready bundle of the value-function and deviation checks."""
    vf = verify_value_function(eq_path, s_list, cfg, demand)
    dev = deviation_test(eq_path, s0, cfg, demand)
    return {
        "params": asdict(eq_path.params),
        "config": {**asdict(cfg), "deviation_grid": list(cfg.deviation_grid), "s0": s0,
                   "demand": asdict(demand)},
        "value_function_checks": vf["checks"],
        "linearity": vf["linearity"],
        "deviation_checks": dev.checks,
        "max_gain": dev.max_gain,
        "max_gain_stderr": dev.max_gain_stderr,
        "max_gain_at": dev.argmax,
        "familywise_z": dev.familywise_z,
        "familywise_pass": dev.familywise_passed,
        "pass": bool(vf["pass"] and dev.passed),
    }
