"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar
from scipy.stats import norm

from lob_lab import ito_tails as it
from lob_lab.equilibrium import ModelParams, solve_full
from lob_lab.exchange import SimConfig, deviation_test, verify_value_function
from lob_lab.sweep import critical_alpha

N_ALL = [10, 20, 50, 100, 200, 500, 1000]
N_SWEEP = [20, 50, 100, 200, 500]

pytestmark = pytest.mark.slow


def test_c1_zero_drift_nondegenerate(criterion):
    t0 = time.perf_counter()
    deg = {N: solve_full(ModelParams(0.0, 1.0, 1.0, N)).degenerate_from for N in N_ALL}
    dt = time.perf_counter() - t0
    ok = all(v is None for v in deg.values()) and dt < 1.0
    assert criterion(1, ok, f"degenerate_from per N: {deg}", dt)


def oracle_pbar() -> float:
    """Fixed point of the standard-normal best response, from scratch:
    objective (q - x) P(xi > q) - phi(q), maximized numerically."""

    def best_response(x):
        res = minimize_scalar(lambda q: -((q - x) * norm.sf(q) - norm.pdf(q)),
                              bounds=(-5, 5), method="bounded", options={"xatol": 1e-12})
        return res.x

    return brentq(lambda p: best_response(-p) - p, 0.1, 2.0, xtol=1e-12)


def test_c2_terminal_sqrt_dt_scaling(criterion):
    t0 = time.perf_counter()
    pbar = oracle_pbar()
    ratios = {}
    for N in N_ALL:
        path = solve_full(ModelParams(0.0, 1.0, 1.0, N))
        ratios[N] = path.pa[N - 1] / math.sqrt(path.params.dt)
    err = max(abs(r - pbar) for r in ratios.values())
    ok = err <= 1e-6 and abs(pbar - 0.75179) < 1e-5
    assert criterion(2, ok, f"oracle p_bar={pbar:.10f}, max |pa/sqrt(dt) - p_bar| = {err:.2e}",
                     time.perf_counter() - t0)


def test_c3_execution_price_convergence(criterion):
    t0 = time.perf_counter()
    sup = [float(np.max(np.abs(solve_full(ModelParams(0.0, 1.0, 1.0, N)).la))) for N in N_SWEEP]
    ok = all(b < a for a, b in zip(sup, sup[1:])) and sup[-1] < 0.5 * sup[0]
    detail = ", ".join(f"N={N}: {v:.5f}" for N, v in zip(N_SWEEP, sup))
    assert criterion(3, ok, f"sup|la| {detail}", time.perf_counter() - t0)


def test_c4_drift_induced_degeneracy(criterion):
    t0 = time.perf_counter()
    path = solve_full(ModelParams(0.1, 1.0, 1.0, 100))
    n = path.degenerate_from
    interior = n is not None and 0 < n < 99
    crossing = interior and path.la[n + 1] >= 0 > path.la[n + 2]
    degenerate_N = [N for N in N_SWEEP if solve_full(ModelParams(0.1, 1.0, 1.0, N)).degenerate_from is not None]
    stars = [critical_alpha(N, tol=1e-6).alpha_star for N in N_SWEEP]
    decreasing = all(b < a for a, b in zip(stars, stars[1:]))
    dt = time.perf_counter() - t0
    ok = crossing and bool(degenerate_N) and all(s > 0 for s in stars) and decreasing and dt < 30
    detail = (f"N=100 degenerate from step {n} (la {path.la[n + 1]:.4f} -> {path.la[n + 2]:.4f}); "
              f"degenerate N at alpha=0.1: {degenerate_N}; alpha* = "
              + ", ".join(f"{s:.5f}" for s in stars))
    assert criterion(4, ok, detail, dt)


def test_c5_drift_accumulation(criterion):
    t0 = time.perf_counter()
    worst = {}
    for alpha in (0.01, 0.05, 0.1):
        path = solve_full(ModelParams(alpha, 1.0, 1.0, 100))
        k = path.first_valid
        steps = np.diff(path.la[k:])                  # la[n+1] - la[n]
        worst[alpha] = float(np.min(-steps - alpha * path.params.dt))
    ok = all(v >= -1e-12 for v in worst.values())
    detail = "min(la[n]-la[n+1]-alpha dt): " + ", ".join(f"alpha={a}: {v:.3e}" for a, v in worst.items())
    assert criterion(5, ok, detail, time.perf_counter() - t0)


@pytest.fixture(scope="module")
def path50():
    return solve_full(ModelParams(0.0, 1.0, 1.0, 50))


def test_c6_value_function(criterion, path50):
    t0 = time.perf_counter()
    rep = verify_value_function(path50, [1, -1, 2, -2], SimConfig(paths=200_000, seed=0))
    dt = time.perf_counter() - t0
    ok = rep["pass"] and dt < 60
    detail = "; ".join(f"s={c['s']:+g}: |gap|/se={c['discrepancy'] / c['stderr']:.2f}" for c in rep["checks"])
    assert criterion(6, ok, detail + f"; s2/s1 ratio={rep['linearity']['ratio']:.6f}", dt)


def test_c7_no_profitable_deviation(criterion, path50):
    t0 = time.perf_counter()
    scale = math.sqrt(path50.params.dt)
    cfg = SimConfig(paths=200_000, seed=0, deviation_grid=(0.1 * scale, 0.5 * scale, 1.0 * scale))
    rep = deviation_test(path50, 1.0, cfg)
    ok = rep.max_gain <= 3 * rep.max_gain_stderr
    at = rep.argmax
    detail = (f"max gain {rep.max_gain:.3e} = {rep.max_gain / rep.max_gain_stderr:.2f} se "
              f"({at['kind']} step {at['step']}); {len(rep.checks)} deviations; "
              f"Bonferroni z={rep.familywise_z:.2f}")
    assert criterion(7, ok, detail, time.perf_counter() - t0)


def test_c8_conditional_tail_bound(criterion):
    t0 = time.perf_counter()
    specs = [it.brownian_spec(), it.perturbed_spec(0.01)]
    grid = it.tail_grid()
    runs = [it.simulate_common(specs, 1_000_000, seed) for seed in (0, 1)]
    est = [[it.conditional_tail(s.terminal, grid) for s in run] for run in runs]
    fits = [it.exponential_bound_check(est[0][j], 1.0, est[1][j]) for j in range(2)]
    agreement = min(it.oracle_agreement(e[0], it.brownian_tail_oracle(grid)) for e in est)
    dt = time.perf_counter() - t0
    ok = all(f.passed for f in fits) and agreement >= 0.95 and dt < 120
    detail = "; ".join(f"{s.name}: C1={f.C1:.4f}/{f.C1_other:.4f}" for s, f in zip(specs, fits))
    assert criterion(8, ok, detail + f"; Brownian oracle coverage {agreement:.3f}", dt)


def test_c9_conditional_mean_gap(criterion):
    t0 = time.perf_counter()
    dts = [1e-2, 1e-3, 1e-4]
    bm = it.conditional_mean_gap(it.brownian_spec(), dts, 500_000, seed=0)
    pt = it.conditional_mean_gap(it.perturbed_spec(0.01), dts, 500_000, seed=0)
    z95 = norm.ppf(0.975)
    at_zero = [abs(r.gaps[-1] - it.HALF_NORMAL_MEAN) <= z95 * r.stderr[-1] for r in bm.rows]
    ok = bm.passed and pt.passed and all(at_zero)
    detail = (f"Brownian C3={bm.common_bound:.4f} (limit {bm.bound_limit:.4f}), p=0 cells "
              + ", ".join(f"{r.gaps[-1]:.4f}+-{z95 * r.stderr[-1]:.4f}" for r in bm.rows)
              + f"; perturbed C3={pt.common_bound:.4f} (limit {pt.bound_limit:.4f})")
    assert criterion(9, ok, detail, time.perf_counter() - t0)


def test_c10_gaussian_proximity(criterion):
    t0 = time.perf_counter()
    dts = [1e-1, 1e-2, 1e-3]
    const = it.gaussian_proximity(it.constant_vol_model(1.0, 0.0), dts, 1_000_000, seed=0)
    stoch = it.gaussian_proximity(it.stochastic_vol_model(0.1), dts, 1_000_000, seed=0)
    const_ok = all(r.tail_gap <= r.tail_noise for r in const.rows)
    ok = const_ok and stoch.tail_decreasing and stoch.mean_decreasing
    detail = (f"constant tail gaps {[round(r.tail_gap, 5) for r in const.rows]} vs 2*DKW "
              f"{const.rows[0].tail_noise:.5f}; tanh-vol tail {[round(r.tail_gap, 5) for r in stoch.rows]}, "
              f"mean {[round(r.mean_gap, 5) for r in stoch.rows]}")
    assert criterion(10, ok, detail, time.perf_counter() - t0)
