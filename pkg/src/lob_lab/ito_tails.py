"""Monte-Carlo checks of tail, conditional-mean and Gaussian-proximity bounds
for Ito processes with bounded drift and near-constant diffusion.

Drift and diffusion are numba-jitted scalar functions of ``(t, x)``. Each
pair is compiled once into an Euler kernel that also records the extreme
coefficient values it met, so the coefficient bounds are checked on every
sampled point.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np
from scipy.stats import binomtest, norm

HALF_NORMAL_MEAN = math.sqrt(2.0 / math.pi)
MIN_COUNT = 200
DEFAULT_X = (0.0, 1.0, 2.0, 3.0)
DEFAULT_Z = tuple(0.25 * k for k in range(17))


class SpecificationError(ValueError):
    """A coefficient left its declared bounds on a simulated point."""


# ------------------------------------------------------------------ processes


@dataclass(frozen=True)
class ItoProcessSpec:
    """dX = drift(t, X) dt + diffusion(t, X) dB on [0, horizon], X_0 = 0.

    Declared bounds: ``|drift| <= sqrt(eps)`` and ``c <= diffusion <= C``.
    """

    drift_fn: Callable[[float, float], float]
    diffusion_fn: Callable[[float, float], float]
    c: float
    C: float
    eps: float
    euler_steps: int = 1000
    horizon: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if not 0 < self.c <= self.C:
            raise ValueError(f"need 0 < c <= C, got c={self.c}, C={self.C}")
        if self.eps < 0 or self.horizon <= 0 or self.euler_steps < 1:
            raise ValueError("eps >= 0, horizon > 0 and euler_steps >= 1 required")

    def describe(self) -> dict:
        return {"name": self.name, "c": self.c, "C": self.C, "eps": self.eps,
                "euler_steps": self.euler_steps, "horizon": self.horizon}


@numba.njit(cache=True)
def _zero(t, x):
    return 0.0


@numba.njit(cache=True)
def _one(t, x):
    return 1.0


def brownian_spec(sigma: float = 1.0, euler_steps: int = 1000) -> ItoProcessSpec:
    if sigma == 1.0:
        diffusion = _one
    else:
        @numba.njit
        def diffusion(t, x):
            return sigma
    return ItoProcessSpec(_zero, diffusion, sigma, sigma, 0.0, euler_steps, name="brownian")


@numba.njit(cache=True)
def _tanh(x):
    # exp form is markedly cheaper than libm tanh inside the Euler loop
    return 1.0 - 2.0 / (math.exp(2.0 * x) + 1.0)


@numba.njit(cache=True)
def _clipped_vol(t, x):
    return min(1.1, max(0.9, 1.0 + 0.1 * _tanh(x)))


def perturbed_spec(eps: float = 0.01, euler_steps: int = 1000) -> ItoProcessSpec:
    """drift sqrt(eps) sin(t x), diffusion 1 + 0.1 tanh(x) clipped to [0.9, 1.1]."""
    amp = math.sqrt(eps)

    @numba.njit
    def drift(t, x):
        return amp * math.sin(t * x)

    return ItoProcessSpec(drift, _clipped_vol, 0.9, 1.1, eps, euler_steps, name=f"perturbed(eps={eps:g})")


_KERNELS: dict = {}


def _euler_kernel(drift, diffusion):
    key = (drift, diffusion)
    if key not in _KERNELS:
        @numba.njit
        def kernel(z, h, x, mx, stats):
            # z is steps-major so consecutive paths are independent work
            steps, n = z.shape
            sq = math.sqrt(h)
            lo, hi, big = stats[0], stats[1], stats[2]
            for k in range(steps):
                t = k * h
                for i in range(n):
                    xi = x[i]
                    mu = drift(t, xi)
                    sg = diffusion(t, xi)
                    lo = min(lo, sg)
                    hi = max(hi, sg)
                    big = max(big, abs(mu))
                    xi += mu * h + sg * sq * z[k, i]
                    x[i] = xi
                    if xi > mx[i]:
                        mx[i] = xi
            stats[0], stats[1], stats[2] = lo, hi, big

        _KERNELS[key] = kernel
    return _KERNELS[key]


@dataclass
class TerminalSamples:
    terminal: np.ndarray
    running_max: np.ndarray


def _stream(seed: int, b: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(b,))))


def _check_bounds(spec: ItoProcessSpec, stats: np.ndarray):
    lo, hi, big = stats
    tol = 1e-12
    if lo < spec.c * (1 - tol) or hi > spec.C * (1 + tol):
        raise SpecificationError(f"{spec.name}: diffusion reached [{lo:.6g}, {hi:.6g}], "
                                 f"outside declared [{spec.c}, {spec.C}]")
    if big > math.sqrt(spec.eps) * (1 + tol) + tol:
        raise SpecificationError(f"{spec.name}: |drift| reached {big:.6g} > sqrt(eps)={math.sqrt(spec.eps):.6g}")


def simulate_common(specs: Sequence[ItoProcessSpec], paths: int, seed: int,
                    batch: int = 10_000) -> list[TerminalSamples]:
    """Euler samples of X at the horizon (and its running max) for several specs
    driven by the same Brownian increments."""
    steps = specs[0].euler_steps
    if any(s.euler_steps != steps or s.horizon != specs[0].horizon for s in specs):
        raise ValueError("specs sharing normals need the same time grid")
    if paths < 1:
        raise ValueError("paths must be positive")
    h = specs[0].horizon / steps
    kernels = [_euler_kernel(s.drift_fn, s.diffusion_fn) for s in specs]
    out = [TerminalSamples(np.empty(paths), np.empty(paths)) for _ in specs]
    stats = [np.array([math.inf, -math.inf, 0.0]) for _ in specs]
    for b, start in enumerate(range(0, paths, batch)):
        size = min(batch, paths - start)
        z = _stream(seed, b).standard_normal((steps, size))
        for kern, res, st in zip(kernels, out, stats):
            x = np.zeros(size)
            mx = np.zeros(size)
            kern(z, h, x, mx, st)
            res.terminal[start:start + size] = x
            res.running_max[start:start + size] = mx
    for spec, st in zip(specs, stats):
        _check_bounds(spec, st)
    return out


def simulate_terminal(spec: ItoProcessSpec, paths: int, seed: int, batch: int = 10_000) -> TerminalSamples:
    if spec.euler_steps < 100:
        raise ValueError("euler_steps >= 100 required for terminal tail checks")
    return simulate_common([spec], paths, seed, batch)[0]


# ------------------------------------------------------------ conditional tails


def tail_grid(xs: Sequence[float] = DEFAULT_X, zs: Sequence[float] = DEFAULT_Z) -> list[tuple[float, float]]:
    return [(float(x), float(z)) for x in xs for z in zs]


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(int(k), int(n)).proportion_ci(level, method="wilson")
    lo, hi = float(ci.low), float(ci.high)
    return (lo if k > 0 else 0.0), (hi if k < n else 1.0)


@dataclass
class TailEstimate:
    grid: list[tuple[float, float]]
    probabilities: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_conditioning: np.ndarray
    min_count: int = MIN_COUNT

    @property
    def ci_halfwidths(self) -> np.ndarray:
        return 0.5 * (self.ci_high - self.ci_low)

    @property
    def reliable(self) -> np.ndarray:
        return self.n_conditioning >= self.min_count

    def as_dict(self) -> dict:
        return {"grid": [list(g) for g in self.grid], "estimates": self.probabilities.tolist(),
                "ci": [[lo, hi] for lo, hi in zip(self.ci_low.tolist(), self.ci_high.tolist())],
                "n_conditioning": self.n_conditioning.tolist(), "reliable": self.reliable.tolist()}


def conditional_tail(samples: np.ndarray, grid: Sequence[tuple[float, float]],
                     min_count: int = MIN_COUNT) -> TailEstimate:
    """Ratio estimates of P(X > x + z | X > x) with Wilson 95% intervals."""
    if any(x < 0 or z < 0 for x, z in grid):
        raise ValueError("grid points need x, z >= 0")
    srt = np.sort(np.asarray(samples))
    n = srt.size

    def above(v):
        return n - int(np.searchsorted(srt, v, side="right"))

    probs, lo, hi, cond = [], [], [], []
    for x, z in grid:
        m = above(x)
        k = m if z == 0 else above(x + z)
        probs.append(k / m if m else math.nan)
        a, b = wilson_interval(k, m)
        lo.append(a)
        hi.append(b)
        cond.append(m)
    return TailEstimate(list(grid), np.array(probs), np.array(lo), np.array(hi), np.array(cond), min_count)


def brownian_tail_oracle(grid: Sequence[tuple[float, float]], sigma: float = 1.0) -> np.ndarray:
    return np.array([norm.sf((x + z) / sigma) / norm.sf(x / sigma) for x, z in grid])


def oracle_agreement(estimate: TailEstimate, oracle: np.ndarray) -> float:
    """Fraction of reliable cells whose interval covers the oracle value."""
    ok = estimate.reliable
    inside = (estimate.ci_low <= oracle) & (oracle <= estimate.ci_high)
    return float(inside[ok].mean())


@dataclass
class BoundFit:
    c1: float
    C1: float
    argmax: tuple[float, float] | None
    C1_other: float | None = None

    @property
    def ratio(self) -> float | None:
        if self.C1_other is None:
            return None
        return max(self.C1, self.C1_other) / min(self.C1, self.C1_other)

    @property
    def stable(self) -> bool:
        return self.ratio is not None and self.ratio <= 2.0

    @property
    def passed(self) -> bool:
        return math.isfinite(self.C1) and (self.C1_other is None or self.stable)

    def as_dict(self) -> dict:
        return {"c1": self.c1, "C1": self.C1, "argmax": self.argmax, "C1_other_seed": self.C1_other,
                "ratio": self.ratio, "pass": self.passed}


def _fit_C1(estimate: TailEstimate, c1: float) -> tuple[float, tuple[float, float] | None]:
    z = np.array([g[1] for g in estimate.grid])
    vals = np.where(estimate.reliable, estimate.ci_high * np.exp(c1 * z), -np.inf)
    if not np.isfinite(vals).any():
        return math.inf, None
    j = int(np.argmax(vals))
    return float(vals[j]), estimate.grid[j]


def exponential_bound_check(estimate: TailEstimate, c1: float,
                            other: TailEstimate | None = None) -> BoundFit:
    """Smallest C1 with upper CI <= C1 exp(-c1 z) on reliable cells; with a
    second estimate (independent seed) the two fits must agree within 2x."""
    if not c1 > 0:
        raise ValueError("c1 must be positive")
    C1, arg = _fit_C1(estimate, c1)
    C1_other = _fit_C1(other, c1)[0] if other is not None else None
    return BoundFit(c1, C1, arg, C1_other)


def running_max_check(samples: TerminalSamples, xs: Sequence[float] = (0.0, 1.0, 2.0),
                      delta: float = 0.1) -> list[dict]:
    """Empirical 2 P(X_1 > x) >= (1 - delta) P(sup X > x)."""
    out = []
    for x in xs:
        pt = float(np.mean(samples.terminal > x))
        ps = float(np.mean(samples.running_max > x))
        ratio = 2 * pt / ps if ps > 0 else math.inf
        out.append({"x": x, "p_terminal": pt, "p_sup": ps, "ratio": ratio,
                    "implied_delta": max(0.0, 1.0 - ratio), "pass": bool(ratio >= 1 - delta)})
    return out


def tails_report(spec: ItoProcessSpec, estimate: TailEstimate, fit: BoundFit,
                 extra: dict | None = None) -> dict:
    return {"spec": spec.describe(), **estimate.as_dict(), "fitted_constants": fit.as_dict(),
            **(extra or {}), "pass": fit.passed}


# ------------------------------------------------------------ conditional mean


@dataclass
class MeanGapRow:
    dt: float
    p_grid: np.ndarray
    gaps: np.ndarray          # |p - E[X | X < p]| / sqrt(dt)
    stderr: np.ndarray
    n_conditioning: np.ndarray
    min_count: int = MIN_COUNT

    @property
    def reliable(self) -> np.ndarray:
        return self.n_conditioning >= self.min_count

    @property
    def sup_gap(self) -> float:
        return float(np.max(self.gaps[self.reliable]))

    def as_dict(self) -> dict:
        return {"dt": self.dt, "p_grid": self.p_grid.tolist(), "gaps": self.gaps.tolist(),
                "stderr": self.stderr.tolist(), "n_conditioning": self.n_conditioning.tolist(),
                "sup_gap": self.sup_gap}


@dataclass
class MeanGapReport:
    spec: ItoProcessSpec
    rows: list[MeanGapRow]

    @property
    def common_bound(self) -> float:
        return max(r.sup_gap for r in self.rows)

    @property
    def bound_limit(self) -> float:
        return 1.5 * HALF_NORMAL_MEAN * self.spec.C

    @property
    def passed(self) -> bool:
        return math.isfinite(self.common_bound) and self.common_bound <= self.bound_limit

    def as_dict(self) -> dict:
        return {"spec": self.spec.describe(), "estimates": [r.as_dict() for r in self.rows],
                "fitted_constants": {"C3": self.common_bound, "limit": self.bound_limit},
                "pass": self.passed}


def conditional_mean_rows(samples: np.ndarray, p_grid: np.ndarray, dt: float,
                          min_count: int = MIN_COUNT) -> MeanGapRow:
    srt = np.sort(samples)
    csum = np.concatenate([[0.0], np.cumsum(srt)])
    csq = np.concatenate([[0.0], np.cumsum(srt * srt)])
    k = np.searchsorted(srt, p_grid, side="left")      # count of X < p
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = csum[k] / k
        var = np.maximum(csq[k] / k - mean ** 2, 0.0) * k / np.maximum(k - 1, 1)
        gaps = np.abs(p_grid - mean) / math.sqrt(dt)
        se = np.sqrt(var / k) / math.sqrt(dt)
    return MeanGapRow(dt, p_grid, gaps, se, k, min_count)


def conditional_mean_gap(spec: ItoProcessSpec, dt_list: Sequence[float], paths: int, seed: int,
                         substeps: int = 100, n_grid: int = 41, batch: int = 20_000) -> MeanGapReport:
    """Normalized gap sup_p |p - E[X_dt | X_dt < p]| / sqrt(dt) on p in [-5 sqrt(dt) C, 0]."""
    rows = []
    for j, dt in enumerate(dt_list):
        short = dataclasses.replace(spec, horizon=dt, euler_steps=substeps)
        x = simulate_common([short], paths, seed + j, batch)[0].terminal
        grid = np.linspace(-5 * math.sqrt(dt) * spec.C, 0.0, n_grid)
        rows.append(conditional_mean_rows(x, grid, dt))
    return MeanGapReport(spec, rows)


# --------------------------------------------------------- Gaussian proximity


@dataclass(frozen=True)
class ProximityModel:
    """dP = alpha dt + vol_fn(t, W_t) dW_t: the fundamental-price increment model."""

    alpha: float
    vol_fn: Callable[[float, float], float]
    euler_steps: int = 50
    name: str = "custom"

    @property
    def sigma0(self) -> float:
        return float(self.vol_fn(0.0, 0.0))

    def describe(self) -> dict:
        return {"name": self.name, "alpha": self.alpha, "sigma0": self.sigma0, "euler_steps": self.euler_steps}


def constant_vol_model(sigma: float = 1.0, alpha: float = 0.0) -> ProximityModel:
    @numba.njit
    def vol(t, w):
        return sigma
    return ProximityModel(alpha, vol, name=f"constant(sigma={sigma:g})")


@numba.njit(cache=True)
def _tanh_vol(t, w):
    return 1.0 + 0.1 * _tanh(w)


def stochastic_vol_model(alpha: float = 0.1) -> ProximityModel:
    """sigma_t = 1 + 0.1 tanh(W_t)."""
    return ProximityModel(alpha, _tanh_vol, name="tanh-vol")


_PROX_KERNELS: dict = {}


def _proximity_kernel(vol):
    if vol not in _PROX_KERNELS:
        @numba.njit
        def kernel(z, h, alpha, x):
            steps, n = z.shape
            sq = math.sqrt(h)
            for i in range(n):
                xi = 0.0
                w = 0.0
                for k in range(steps):
                    dw = sq * z[k, i]
                    xi += alpha * h + vol(k * h, w) * dw
                    w += dw
                x[i] = xi

        _PROX_KERNELS[vol] = kernel
    return _PROX_KERNELS[vol]


def simulate_increments(model: ProximityModel, dt: float, paths: int, seed: int,
                        batch: int = 50_000) -> np.ndarray:
    """Samples of the increment over [0, dt] started at W_0 = 0."""
    kern = _proximity_kernel(model.vol_fn)
    h = dt / model.euler_steps
    out = np.empty(paths)
    for b, start in enumerate(range(0, paths, batch)):
        size = min(batch, paths - start)
        z = _stream(seed, b).standard_normal((model.euler_steps, size))
        kern(z, h, model.alpha, out[start:start + size])
    return out


def dkw_bound(n: int, level: float = 0.05) -> float:
    return math.sqrt(math.log(2 / level) / (2 * n))


DEFAULT_P_GRID = tuple(np.linspace(-6.0, 6.0, 241))


@dataclass
class ProximityRow:
    dt: float
    tail_gap: float           # sup_p (|p| v 1) |P(xi > p) - P(eta > p)|
    mean_gap: float           # sup_p |E[xi 1{xi>p}] - E[eta 1{eta>p}]|
    mean_gap_at_6: float
    mean_gap_noise: float     # 3 x largest stderr of the truncated-mean estimator
    n: int

    @property
    def tail_noise(self) -> float:
        return 2 * dkw_bound(self.n)


def proximity_metrics(samples: np.ndarray, sigma0: float, dt: float,
                      p_grid: Sequence[float] = DEFAULT_P_GRID) -> ProximityRow:
    xi = np.sort(samples / math.sqrt(dt))
    n = xi.size
    p = np.asarray(p_grid)
    k = np.searchsorted(xi, p, side="right")
    emp_tail = (n - k) / n
    ref_tail = norm.sf(p / sigma0)
    tail_gap = float(np.max(np.maximum(np.abs(p), 1.0) * np.abs(emp_tail - ref_tail)))

    tail_sum = np.concatenate([np.cumsum(xi[::-1])[::-1], [0.0]])
    tail_sq = np.concatenate([np.cumsum((xi * xi)[::-1])[::-1], [0.0]])
    emp_mean = tail_sum[k] / n
    ref_mean = sigma0 * norm.pdf(p / sigma0)   # E[eta 1{eta > p}]
    gap = np.abs(emp_mean - ref_mean)
    se = np.sqrt(np.maximum(tail_sq[k] / n - emp_mean ** 2, 0.0) / n)
    j6 = int(np.argmin(np.abs(p - 6.0)))
    return ProximityRow(dt, tail_gap, float(gap.max()), float(gap[j6]), float(3 * se.max()), n)


@dataclass
class ProximityReport:
    model: ProximityModel
    rows: list[ProximityRow] = field(default_factory=list)

    @staticmethod
    def _decreasing(values, floors) -> bool:
        # each step must shrink, unless the new value already sits at the noise floor
        return all(b <= a or b <= f for a, b, f in zip(values, values[1:], floors[1:]))

    @property
    def tail_decreasing(self) -> bool:
        return self._decreasing([r.tail_gap for r in self.rows], [r.tail_noise for r in self.rows])

    @property
    def mean_decreasing(self) -> bool:
        return self._decreasing([r.mean_gap for r in self.rows], [r.mean_gap_noise for r in self.rows])

    def as_dict(self) -> dict:
        return {"spec": self.model.describe(),
                "grid": [r.dt for r in self.rows],
                "estimates": [dataclasses.asdict(r) | {"tail_noise": r.tail_noise} for r in self.rows],
                "fitted_constants": {"max_tail_gap": max(r.tail_gap for r in self.rows),
                                     "max_mean_gap": max(r.mean_gap for r in self.rows)},
                "pass": self.tail_decreasing and self.mean_decreasing}


def gaussian_proximity(model: ProximityModel, dt_list: Sequence[float], paths: int, seed: int,
                       p_grid: Sequence[float] = DEFAULT_P_GRID) -> ProximityReport:
    """Distance of the normalized increment from N(0, sigma0^2) for each dt."""
    if any(b >= a for a, b in zip(dt_list, dt_list[1:])):
        raise ValueError("dt_list must be strictly decreasing")
    rep = ProximityReport(model)
    for j, dt in enumerate(dt_list):
        x = simulate_increments(model, dt, paths, seed + j)
        rep.rows.append(proximity_metrics(x, model.sigma0, dt, p_grid))
    return rep
