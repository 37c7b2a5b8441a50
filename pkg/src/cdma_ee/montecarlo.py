"""Frame simulation and the paired Monte Carlo sweep over games and loads."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .games import ALL_GAMES, GameKind, ScenarioModel, run_game
from .receivers import ReceiveFilter, ZeroSignature
from .scenario import NoiseModel, SystemConfig, draw_scenario
from .waveforms import SignatureSet

MAX_REDRAWS = 100


@dataclass(frozen=True)
class FrameSamples:
    y: np.ndarray         # (frames, dim)
    symbols: np.ndarray   # (frames, K, 4), WINDOWS order
    noise: np.ndarray     # (frames, dim)


def noise_factor(noise: NoiseModel) -> np.ndarray:
    """Symmetric square root of the regularized noise covariance."""
    vals, vecs = np.linalg.eigh(noise.regularized)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def simulate_frames(signatures: SignatureSet, powers, noise: NoiseModel, frames: int,
                    rng: np.random.Generator) -> FrameSamples:
    """Draw ``frames`` independent windowed data vectors.

    Each window carries four fresh +-1 symbols per user (epochs ``p-2 .. p+1``)
    and Gaussian noise with the front-end covariance.
    """
    if frames < 1:
        raise ValueError("need at least one frame")
    p = np.asarray(powers, dtype=float)
    K, dim = signatures.K, signatures.dim
    symbols = rng.choice(np.array([-1.0, 1.0]), size=(frames, K, 4))
    n = rng.standard_normal((frames, dim)) @ noise_factor(noise)
    amp = symbols * np.sqrt(p)[None, :, None]
    y = np.einsum("fki,kim->fm", amp, signatures.h) + n
    return FrameSamples(y, symbols, n)


def genie_cancelled(samples: FrameSamples, k: int, signatures: SignatureSet, powers) -> np.ndarray:
    """Data with earlier-detected users' past and present symbols removed exactly."""
    p = np.asarray(powers, dtype=float)
    pos = int(np.flatnonzero(signatures.sic_order == k)[0])
    earlier = signatures.sic_order[:pos]
    if earlier.size == 0:
        return samples.y
    amp = samples.symbols[:, earlier, :3] * np.sqrt(p[earlier])[None, :, None]
    return samples.y - np.einsum("fki,kim->fm", amp, signatures.h[earlier, :3])


def empirical_sinr(filt: ReceiveFilter | np.ndarray, k: int, samples: FrameSamples,
                   signatures: SignatureSet, powers, cancel: bool = False) -> float:
    """SINR of the decision statistic ``d^T y`` measured from samples."""
    d = filt.full_vector if isinstance(filt, ReceiveFilter) else np.asarray(filt, float)
    y = genie_cancelled(samples, k, signatures, powers) if cancel else samples.y
    z = y @ d
    b = samples.symbols[:, k, 2]
    amp = float(np.mean(z * b))
    resid = z - amp * b
    return amp * amp / float(np.mean(resid * resid))


@dataclass(frozen=True)
class SweepSpec:
    games: tuple[GameKind, ...] = ALL_GAMES
    K_values: tuple[int, ...] = (2, 4, 6, 8, 10, 12)
    trials: int = 200
    config: SystemConfig = field(default_factory=SystemConfig)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.K_values or any(K < 1 for K in self.K_values):
            raise ValueError("user counts must be positive")
        if not self.games:
            raise ValueError("no games requested")


@dataclass(frozen=True)
class TrialOutcome:
    K: int
    trial: int
    # per game: (powers, utilities, at_max, converged)
    results: dict[GameKind, tuple[np.ndarray, np.ndarray, np.ndarray, bool]]


@dataclass(frozen=True)
class SummaryRow:
    game: GameKind
    K: int
    mean_utility: float
    mean_power_linear: float
    frac_at_max: float
    nonconverged: int
    trials: int

    @property
    def mean_power_db(self) -> float:
        return 10.0 * math.log10(self.mean_power_linear) if self.mean_power_linear > 0 else -math.inf


@dataclass(frozen=True)
class SweepSummary:
    rows: tuple[SummaryRow, ...]
    seed: int

    def row(self, game: GameKind, K: int) -> SummaryRow:
        for r in self.rows:
            if r.game is game and r.K == K:
                return r
        raise KeyError((game, K))


def run_trial(config: SystemConfig, games: tuple[GameKind, ...], K: int, trial: int) -> TrialOutcome:
    for attempt in range(MAX_REDRAWS):
        try:
            model = ScenarioModel.from_scenario(draw_scenario(config, K, trial, attempt), config)
            results = {}
            for kind in games:
                eq = run_game(kind, model)
                results[kind] = (eq.powers, eq.utilities, eq.at_max, eq.converged)
            return TrialOutcome(K, trial, results)
        except ZeroSignature:
            continue
    raise RuntimeError(f"no usable scenario for K={K}, trial={trial} after {MAX_REDRAWS} draws")


def _run_task(args) -> TrialOutcome:
    return run_trial(*args)


def summarize(outcomes: list[TrialOutcome], spec: SweepSpec) -> SweepSummary:
    """Pool users over converged trials, in canonical ``(K, trial, user)`` order."""
    by_key = {(o.K, o.trial): o for o in outcomes}
    rows = []
    for kind in spec.games:
        for K in spec.K_values:
            utils, powers, at_max = [], [], []
            bad = used = 0
            for trial in range(spec.trials):
                p, u, m, ok = by_key[(K, trial)].results[kind]
                if not ok:
                    bad += 1
                    continue
                used += 1
                utils.extend(u.tolist())
                powers.extend(p.tolist())
                at_max.extend(m.tolist())
            n = len(utils)
            rows.append(SummaryRow(
                game=kind, K=K,
                mean_utility=math.fsum(utils) / n if n else math.nan,
                mean_power_linear=math.fsum(powers) / n if n else math.nan,
                frac_at_max=sum(at_max) / n if n else math.nan,
                nonconverged=bad, trials=used,
            ))
    return SweepSummary(tuple(rows), spec.config.seed)


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepSummary:
    """Run every game on the same scenarios for each user count and trial.

    The result does not depend on ``workers``: trials are independent and
    the reduction always runs in canonical order.
    """
    tasks = [(spec.config, spec.games, K, t) for K in spec.K_values for t in range(spec.trials)]
    if workers <= 1:
        outcomes = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    return summarize(outcomes, spec)
