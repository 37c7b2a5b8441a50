"""System configuration, random network draws and the covariance model."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz

from . import waveforms
from .waveforms import PulseSpec, SignatureSet, SpreadingCode


@dataclass(frozen=True)
class SystemConfig:
    """Physical and algorithmic constants.

    Powers are linear, relative to a unit reference power; time is in chip
    intervals by default so ``Tb == N``.
    """
    N: int = 7
    B: int = 120
    Mos: int = 2
    rolloff: float = 0.22
    Tc: float = 1.0
    N0: float = 1e-9
    Pmax: float = 10 ** 2.5
    dist_min: float = 10.0
    dist_max: float = 500.0
    path_weights: tuple[float, ...] = (0.5, 0.3, 0.2)
    utility_scale: float = 1.0
    seed: int = 0
    # numerics
    root_abs: float = 1e-10
    residual_abs: float = 1e-10
    max_iter: int = 200
    # equilibrium iteration
    rel_tol: float = 1e-6
    max_sweeps: int = 500
    init_power_frac: float = 1e-3
    min_power_frac: float = 1e-9
    search_grid: int = 41
    noise_reg: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "path_weights", tuple(float(w) for w in self.path_weights))
        if self.N < 1 or self.Mos < 1:
            raise ValueError("N and Mos must be positive")
        if self.B < 2:
            raise ValueError(f"packet length B={self.B} must be at least 2")
        if self.Pmax <= 0 or self.N0 <= 0 or self.Tc <= 0:
            raise ValueError("Pmax, N0 and Tc must be positive")
        if not 0 < self.dist_min <= self.dist_max:
            raise ValueError("need 0 < dist_min <= dist_max")
        w = self.path_weights
        if not w or any(x <= 0 for x in w) or any(a < b for a, b in zip(w, w[1:])):
            raise ValueError("path weights must be positive and non-increasing")
        if self.utility_scale <= 0:
            raise ValueError("utility_scale must be positive")

    @property
    def Tb(self) -> float:
        return self.N * self.Tc

    @property
    def dim(self) -> int:
        return 2 * self.Mos * self.N

    @property
    def pulse(self) -> PulseSpec:
        return PulseSpec(rolloff=self.rolloff, chip_interval=self.Tc)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class UserScenario:
    distances: np.ndarray   # (K,)
    delays: np.ndarray      # (K, L) total path delays
    gains: np.ndarray       # (K, L) Rayleigh amplitudes
    codes: np.ndarray       # (K, N) chips

    @property
    def K(self) -> int:
        return self.distances.shape[0]

    def code(self, k: int) -> SpreadingCode:
        return SpreadingCode(self.codes[k])

    def paths(self, k: int) -> list[tuple[float, float]]:
        return list(zip(self.gains[k].tolist(), self.delays[k].tolist()))


@dataclass(frozen=True)
class NoiseModel:
    covariance: np.ndarray
    generator: np.ndarray
    reg: float = field(default=0.0)

    @property
    def variance(self) -> float:
        return float(self.generator[0])

    @property
    def regularized(self) -> np.ndarray:
        return self.covariance + self.reg * np.eye(self.covariance.shape[0])


def trial_rng(seed: int, K: int, trial: int, attempt: int = 0) -> np.random.Generator:
    """Independent stream per ``(seed, K, trial, attempt)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(K), int(trial), int(attempt)]))


def rayleigh_scale(mean: float | np.ndarray) -> float | np.ndarray:
    """Rayleigh scale parameter giving the requested mean."""
    return mean * math.sqrt(2.0 / math.pi)


def draw_scenario(config: SystemConfig, K: int, trial: int, attempt: int = 0) -> UserScenario:
    if K < 1:
        raise ValueError("need at least one user")
    rng = trial_rng(config.seed, K, trial, attempt)
    weights = np.asarray(config.path_weights)
    d = rng.uniform(config.dist_min, config.dist_max, size=K)
    delays = rng.uniform(0.0, config.Tb, size=(K, weights.size))
    gains = rng.rayleigh(rayleigh_scale(d[:, None] ** -2.0 * weights[None, :]))
    code_seed = int(rng.integers(0, 2**63 - 1))
    codes = np.stack([waveforms.make_code(code_seed, k, config.N).chips for k in range(K)])
    return UserScenario(d, delays, gains, codes)


def build_signatures(scenario: UserScenario, config: SystemConfig) -> SignatureSet:
    spec = config.pulse
    h = np.stack([
        waveforms.effective_signature(scenario.code(k), scenario.paths(k), spec, config.Tb, config.Mos)
        for k in range(scenario.K)
    ])
    return waveforms.make_signature_set(h)


def noise_covariance(config: SystemConfig) -> NoiseModel:
    """Toeplitz covariance ``(N0/2) rho((m-n) Tc/Mos)`` of the sampled front-end noise."""
    lags = np.arange(config.dim) * config.Tc / config.Mos
    gen = 0.5 * config.N0 * waveforms.rho_at(config.pulse, lags)
    return NoiseModel(toeplitz(gen), gen, reg=config.noise_reg * 0.5 * config.N0)


def outer_sums(signatures: SignatureSet) -> np.ndarray:
    """Per-user ``sum_i h_{k,i} h_{k,i}^T``, shape ``(K, dim, dim)``."""
    return np.einsum("kim,kin->kmn", signatures.h, signatures.h)


def data_covariance(signatures: SignatureSet, powers, noise: NoiseModel,
                    regularize: bool = False) -> np.ndarray:
    """Covariance of the windowed data vector at the given transmit powers."""
    p = np.asarray(powers, dtype=float)
    if np.any(p < 0):
        raise ValueError("powers must be non-negative")
    base = noise.regularized if regularize else noise.covariance
    return base + np.tensordot(p, outer_sums(signatures), axes=1)
