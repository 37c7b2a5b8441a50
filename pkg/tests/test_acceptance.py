"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary under "acceptance criteria".
"""

import math
import time

import numpy as np
import pytest

from cdma_ee import cli
from cdma_ee import receivers as rx
from cdma_ee.games import ALL_GAMES, EfficiencyFunction, GameKind, ScenarioModel, run_game
from cdma_ee.games import common_target_sinr, mf_target_sinr
from cdma_ee.montecarlo import SweepSpec, empirical_sinr, run_sweep, simulate_frames
from cdma_ee.receivers import FilterKind, ReceiveFilter
from cdma_ee.scenario import SystemConfig, data_covariance, draw_scenario

from conftest import moderate_powers
from test_games import nash_gap
from test_montecarlo import covariance_z_scores

SEED = 0
SWEEP_K = (2, 4, 6, 8, 10, 12)
SWEEP_TRIALS = 200
UTILITY_ORDER = (GameKind.SIC_MMSE, GameKind.SIC_CONSTRAINED, GameKind.LINEAR_MMSE,
                 GameKind.LINEAR_CONSTRAINED, GameKind.MF)
SIC_FILTERS = (FilterKind.CONSTRAINED_SIC, FilterKind.SIC_MMSE)


def _model(config, K, trial):
    return ScenarioModel.from_scenario(draw_scenario(config, K, trial), config)


def fixed_point_target(B, sweeps=10_000):
    x = 1.0
    for _ in range(sweeps):
        x = 2.0 * math.log1p(B * x / 2.0)
    return x


def test_criterion_01_target_solver(acceptance):
    config = SystemConfig(B=120)
    times = []
    for _ in range(20):
        t0 = time.perf_counter()
        text = cli.cmd_targets(config)
        times.append(time.perf_counter() - t0)
    g = float(text.split("common_target_linear=")[1].split()[0])
    exact = common_target_sinr(EfficiencyFunction(120))
    residual = abs(math.exp(exact / 2) - 1 - 60 * exact)
    oracle = fixed_point_target(120)
    runtime = min(times)
    # the quoted 13.38 is the root rounded to two decimals; the 1e-3 band is
    # applied against the independent fixed-point value
    ok = (residual <= 1e-10 and abs(g - oracle) <= 1e-3 and round(g, 2) == 13.38
          and abs(exact - oracle) <= 1e-9 and abs(g - exact) <= 1e-10 * exact and runtime < 1e-3)
    acceptance(1, ok, f"target={exact:.12g} oracle={oracle:.12g} residual={residual:.1e} "
                      f"runtime={runtime * 1e3:.3f} ms")


def test_criterion_02_mf_target_reduction(acceptance):
    gaps = {B: abs(mf_target_sinr(1.7, 0.0, EfficiencyFunction(B))
                   - common_target_sinr(EfficiencyFunction(B))) for B in (2, 60, 120)}
    acceptance(2, max(gaps.values()) <= 1e-9, f"max |difference| = {max(gaps.values()):.1e}")


def test_criterion_03_sinr_formulas_vs_simulation(acceptance):
    t0 = time.perf_counter()
    config = SystemConfig(seed=SEED)
    m = _model(config, 3, 0)
    p = moderate_powers(m)
    samples = simulate_frames(m.signatures, p, m.noise, 100_000, np.random.default_rng([SEED, 3]))
    worst = 0.0
    for kind in FilterKind:
        for k in range(m.K):
            filt = rx.build_filter(kind, k, m.signatures, p, m.noise)
            theory = rx.filter_sinr(filt, k, m.signatures, p, m.noise).sinr
            measured = empirical_sinr(filt, k, samples, m.signatures, p, cancel=kind in SIC_FILTERS)
            worst = max(worst, abs(measured / theory - 1))
    runtime = time.perf_counter() - t0
    acceptance(3, worst <= 0.05 and runtime < 120,
               f"worst relative error {worst:.4f} over 5 filters x 3 users, {runtime:.1f} s")


def _sinr(kind, k, d, m, p):
    filt = ReceiveFilter(kind, d)
    f = rx.sinr_sic if kind in SIC_FILTERS else rx.sinr_linear
    return f(filt, k, m.signatures, p, m.noise).sinr


def test_criterion_04_filter_optimality_and_dominance(acceptance):
    t0 = time.perf_counter()
    config = SystemConfig(seed=SEED)
    rng = np.random.default_rng([SEED, 4])
    K = 4
    worst_gain = -np.inf
    chain_violations = []
    max_tol = 0.0
    optimal = (FilterKind.LINEAR_MMSE, FilterKind.CONSTRAINED_LINEAR,
               FilterKind.CONSTRAINED_SIC, FilterKind.SIC_MMSE)
    for trial in range(100):
        m = _model(config, K, trial)
        p = config.Pmax * 10 ** rng.uniform(-3, 0, K)
        for kind in optimal:
            for k in range(K):
                filt = rx.build_filter(kind, k, m.signatures, p, m.noise)
                base = _sinr(kind, k, filt.full_vector, m, p)
                for _ in range(200 // K):
                    if filt.basis is not None:
                        x = filt.reduced_vector
                        v = rng.standard_normal(x.size)
                        d = filt.basis @ (x + 10 ** rng.uniform(-6, -1) * v / np.linalg.norm(v))
                    else:
                        v = rng.standard_normal(filt.full_vector.size)
                        d = filt.full_vector + 10 ** rng.uniform(-6, -1) * v / np.linalg.norm(v)
                    worst_gain = max(worst_gain, _sinr(kind, k, d, m, p) / base - 1)

        equal = np.full(K, config.Pmax)
        # SINRs at this dynamic range are resolved only to about eps * (received power / noise)
        dynamic = float(np.max(equal * m.signatures.norms ** 2) / m.noise.variance)
        tol = max(1e-9, 8 * np.finfo(float).eps * dynamic)
        max_tol = max(max_tol, tol)
        for k in range(K):
            s = {kind: _sinr(kind, k, rx.build_filter(kind, k, m.signatures, equal, m.noise).full_vector,
                             m, equal) for kind in FilterKind}
            links = [(FilterKind.MATCHED, FilterKind.CONSTRAINED_LINEAR),
                     (FilterKind.CONSTRAINED_LINEAR, FilterKind.LINEAR_MMSE),
                     (FilterKind.CONSTRAINED_SIC, FilterKind.SIC_MMSE),
                     (FilterKind.CONSTRAINED_LINEAR, FilterKind.CONSTRAINED_SIC),
                     (FilterKind.LINEAR_MMSE, FilterKind.SIC_MMSE)]
            for lo, hi in links:
                if s[lo] > s[hi] * (1 + tol):
                    chain_violations.append((trial, k, lo.value, hi.value, s[lo] / s[hi]))
    runtime = time.perf_counter() - t0
    ok = worst_gain <= 1e-9 and not chain_violations and runtime < 120
    detail = (f"best perturbation gain {worst_gain:.1e}; dominance violations "
              f"{len(chain_violations)} of {100 * K} users {chain_violations[:3]} "
              f"(largest rounding tolerance {max_tol:.1e}); {runtime:.1f} s")
    acceptance(4, ok, detail)


def test_criterion_05_nash_property(acceptance):
    t0 = time.perf_counter()
    config = SystemConfig(seed=SEED)
    worst = -np.inf
    failures = []
    for trial in range(50):
        m = _model(config, 5, trial)
        for kind in ALL_GAMES:
            eq = run_game(kind, m)
            gap = nash_gap(kind, m, eq)
            worst = max(worst, gap)
            if not eq.converged or gap > 1e-4:
                failures.append((trial, kind.value, eq.converged, gap))
    runtime = time.perf_counter() - t0
    acceptance(5, not failures and runtime < 300,
               f"worst deviation gain {worst:.2e}; failures {failures[:3]}; {runtime:.1f} s")


@pytest.fixture(scope="module")
def sweep():
    t0 = time.perf_counter()
    spec = SweepSpec(ALL_GAMES, SWEEP_K, SWEEP_TRIALS, SystemConfig(seed=SEED))
    summary = run_sweep(spec, workers=1)
    return spec, summary, time.perf_counter() - t0


def test_criterion_06_utility_ordering(sweep, acceptance):
    _, summary, runtime = sweep
    bad = []
    for K in SWEEP_K:
        u = [summary.row(g, K).mean_utility for g in UTILITY_ORDER]
        for g_hi, g_lo, a, b in zip(UTILITY_ORDER, UTILITY_ORDER[1:], u, u[1:]):
            if a < 0.95 * b:
                bad.append(f"K={K} {g_hi.value}/{g_lo.value}={a / b:.3f}")
    ratio = (summary.row(GameKind.SIC_MMSE, 10).mean_utility
             / summary.row(GameKind.LINEAR_MMSE, 10).mean_utility)
    ok = not bad and ratio >= 1.5 and runtime < 600
    acceptance(6, ok, f"ordering breaks {bad}; K=10 SicMMSE/LinearMMSE={ratio:.3f}; "
                      f"sweep {runtime:.0f} s")


def test_criterion_07_power_ordering(sweep, acceptance):
    _, summary, _ = sweep
    bad = []
    for K in SWEEP_K:
        p = [summary.row(g, K).mean_power_linear for g in UTILITY_ORDER]
        for g_lo, g_hi, a, b in zip(UTILITY_ORDER, UTILITY_ORDER[1:], p, p[1:]):
            if a > 1.05 * b:
                bad.append(f"K={K} {g_lo.value}/{g_hi.value}={a / b:.3f}")
    acceptance(7, not bad, f"ordering breaks {bad}")


def test_criterion_08_fraction_at_max(sweep, acceptance):
    _, summary, _ = sweep
    bad = []
    for g in ALL_GAMES:
        frac = [summary.row(g, K).frac_at_max for K in SWEEP_K]
        for K0, K1, a, b in zip(SWEEP_K, SWEEP_K[1:], frac, frac[1:]):
            if b < a - 0.01:
                bad.append(f"{g.value} K={K0}->{K1}: {a:.3f}->{b:.3f}")
    for K in SWEEP_K:
        if K < 6:
            continue
        mf = summary.row(GameKind.MF, K).frac_at_max
        if any(summary.row(g, K).frac_at_max >= mf for g in ALL_GAMES if g is not GameKind.MF):
            bad.append(f"MF not strictly largest at K={K}")
    acceptance(8, not bad, f"violations {bad}")


def test_criterion_09_determinism(sweep, acceptance):
    spec, summary, _ = sweep
    other = run_sweep(spec, workers=2)
    same = cli.format_sweep_csv(summary).encode() == cli.format_sweep_csv(other).encode()
    acceptance(9, same, "workers=1 vs workers=2 CSV " + ("identical" if same else "differ"))


def test_criterion_10_covariance_oracles(acceptance):
    t0 = time.perf_counter()
    config = SystemConfig(seed=SEED)
    m = _model(config, 3, 1)
    rng = np.random.default_rng([SEED, 10])
    noise_only = simulate_frames(m.signatures, np.zeros(3), m.noise, 100_000, rng)
    z_noise = covariance_z_scores(noise_only.y, m.noise.covariance).max()
    p = config.Pmax * 10 ** rng.uniform(-2, 0, 3)
    data = simulate_frames(m.signatures, p, m.noise, 100_000, rng)
    z_data = covariance_z_scores(data.y, data_covariance(m.signatures, p, m.noise)).max()
    runtime = time.perf_counter() - t0
    acceptance(10, z_noise < 5 and z_data < 5 and runtime < 60,
               f"max |z| noise={z_noise:.2f} data={z_data:.2f}; {runtime:.1f} s")
