"""Energy-efficiency power-control games and their equilibrium iteration."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import ndtr

from . import receivers
from .numerics import (NoSignChange, ScalarBracket, Tolerances, bisect_root,
                       maximize_1d, spd_factor)
from .receivers import FilterKind, ReceiveFilter
from .scenario import (NoiseModel, SystemConfig, UserScenario, build_signatures,
                       noise_covariance, outer_sums)
from .waveforms import SignatureSet

log = logging.getLogger(__name__)

TARGET_TOL = Tolerances(root_abs=1e-14, residual_abs=1e-12, max_iter=200)


class ZeroPower(ValueError):
    pass


class GameKind(enum.Enum):
    MF = "MF"
    LINEAR_CONSTRAINED = "LinearConstrained"
    LINEAR_MMSE = "LinearMMSE"
    SIC_CONSTRAINED = "SicConstrained"
    SIC_MMSE = "SicMMSE"

    @property
    def filter_kind(self) -> FilterKind:
        return _FILTERS[self]

    @property
    def sic(self) -> bool:
        return self in (GameKind.SIC_CONSTRAINED, GameKind.SIC_MMSE)

    @property
    def constrained(self) -> bool:
        return self in (GameKind.LINEAR_CONSTRAINED, GameKind.SIC_CONSTRAINED)

    @property
    def unconstrained(self) -> bool:
        return self in (GameKind.LINEAR_MMSE, GameKind.SIC_MMSE)

    @classmethod
    def parse(cls, name: str) -> "GameKind":
        for kind in cls:
            if kind.value.lower() == name.strip().lower():
                return kind
        raise ValueError(f"unknown game {name!r}; choose from {[k.value for k in cls]}")


_FILTERS = {
    GameKind.MF: FilterKind.MATCHED,
    GameKind.LINEAR_CONSTRAINED: FilterKind.CONSTRAINED_LINEAR,
    GameKind.LINEAR_MMSE: FilterKind.LINEAR_MMSE,
    GameKind.SIC_CONSTRAINED: FilterKind.CONSTRAINED_SIC,
    GameKind.SIC_MMSE: FilterKind.SIC_MMSE,
}

ALL_GAMES = tuple(GameKind)


@dataclass(frozen=True)
class EfficiencyFunction:
    """``f(g) = (1 - exp(-g/2))**B``."""
    B: int

    def __post_init__(self):
        if self.B < 2:
            raise ValueError(f"B={self.B}: the efficiency function needs B >= 2")

    def __call__(self, g: float) -> float:
        return efficiency(self, g)

    def derivative(self, g: float) -> float:
        return efficiency_derivative(self, g)

    def log(self, g: float) -> float:
        if g <= 0:
            return -math.inf
        return self.B * math.log(-math.expm1(-0.5 * g))


def efficiency(f: EfficiencyFunction, g: float) -> float:
    if g < 0:
        raise ValueError("SINR must be non-negative")
    return (-math.expm1(-0.5 * g)) ** f.B


def efficiency_derivative(f: EfficiencyFunction, g: float) -> float:
    if g < 0:
        raise ValueError("SINR must be non-negative")
    return 0.5 * f.B * (-math.expm1(-0.5 * g)) ** (f.B - 1) * math.exp(-0.5 * g)


def packet_success(g: float, B: int) -> float:
    """Uncoded BPSK packet success probability ``(1 - Q(sqrt(2 g)))**B``."""
    if g < 0:
        raise ValueError("SINR must be non-negative")
    return float(ndtr(math.sqrt(2.0 * g))) ** B


def common_target_sinr(f: EfficiencyFunction, tol: Tolerances = TARGET_TOL) -> float:
    """Root of ``f(g) = g f'(g)``, i.e. ``exp(g/2) = 1 + B g / 2``."""
    half_b = 0.5 * f.B

    def g(x: float) -> float:
        return math.expm1(0.5 * x) - half_b * x

    root = bisect_root(g, ScalarBracket(1e-6, 200.0), tol)
    assert abs(g(root)) <= 1e-10
    return root


def mf_target_sinr(a: float, b: float, f: EfficiencyFunction,
                   tol: Tolerances = TARGET_TOL) -> float:
    """Matched-filter target: root of ``B/(2a) g (a - b g) = exp(g/2) - 1``.

    With self-ISI (``b > 0``) the root lies in ``(0, a/b)``.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    if b < 0:
        raise ValueError("b must be non-negative")
    if b == 0:
        return common_target_sinr(f, tol)
    r = b / a
    half_b = 0.5 * f.B

    def g(x: float) -> float:
        return half_b * x * (1.0 - r * x) - math.expm1(0.5 * x)

    hi = min(1.0 / r, 200.0)
    lo = 1e-6 * min(1.0, hi)
    if not g(lo) > 0 > g(hi):
        raise NoSignChange(f"no matched-filter target for a={a:.3g}, b={b:.3g}")
    return bisect_root(g, ScalarBracket(lo, hi), tol)


def utility(sinr: float, power: float, f: EfficiencyFunction, scale: float = 1.0) -> float:
    """Bits per Joule, up to ``scale = R L / B``."""
    if not power > 0:
        raise ZeroPower(f"utility undefined at power {power}")
    return scale * efficiency(f, sinr) / power


@dataclass
class ScenarioModel:
    """Everything the games need about one scenario, precomputed once."""
    config: SystemConfig
    signatures: SignatureSet
    noise: NoiseModel
    scenario: UserScenario | None = None

    def __post_init__(self):
        sig = self.signatures
        self.K = sig.K
        self.S = outer_sums(sig)
        nxt = sig.h[:, 3]
        self.T = np.einsum("km,kn->kmn", nxt, nxt)
        self.U = self.S - self.T
        self.R0 = self.noise.regularized
        self._bases: dict[int, np.ndarray] = {}
        self.position = np.empty(self.K, dtype=int)
        self.position[sig.sic_order] = np.arange(self.K)
        # matched-filter bookkeeping
        h0 = sig.h[:, 2]
        self.mf_cross = np.sum(np.einsum("km,ijm->kij", h0, sig.h) ** 2, axis=2)  # (k, i)
        self.mf_noise = np.einsum("km,mn,kn->k", h0, self.noise.covariance, h0)

    @classmethod
    def from_scenario(cls, scenario: UserScenario, config: SystemConfig) -> "ScenarioModel":
        return cls(config, build_signatures(scenario, config), noise_covariance(config), scenario)

    def basis(self, k: int) -> np.ndarray:
        if k not in self._bases:
            self._bases[k] = receivers.isi_nuller_basis(k, self.signatures)
        return self._bases[k]

    def interference(self, k: int, powers: np.ndarray, sic: bool) -> np.ndarray:
        """Noise plus everything user ``k`` cannot remove, excluding its own terms."""
        p = powers.copy()
        p[k] = 0.0
        if not sic:
            return self.R0 + np.tensordot(p, self.S, axes=1)
        later = self.position > self.position[k]
        return self.R0 + np.tensordot(p, self.T, axes=1) + np.tensordot(p * later, self.U, axes=1)


@dataclass
class SinrCurve:
    """Optimal unconstrained SINR of one user versus its own power.

    ``g(p) = p (s0 - sum_i w_i^2 p / (1 + p lam_i))`` with everything else
    frozen: ``s0 = h0^T Q^-1 h0``, and ``lam``, ``w`` diagonalize the own-ISI
    block ``H^T Q^-1 H`` and project ``H^T Q^-1 h0`` onto its eigenvectors.
    """
    s0: float
    w2: tuple[float, ...]
    lam: tuple[float, ...]

    def __call__(self, p: float) -> float:
        val = self.s0
        for w2, lam in zip(self.w2, self.lam):
            val -= w2 * p / (1.0 + p * lam)
        return max(p * val, 0.0)

    def derivative(self, p: float) -> float:
        val = self.s0
        for w2, lam in zip(self.w2, self.lam):
            val -= w2 * p * (2.0 + p * lam) / (1.0 + p * lam) ** 2
        return val


@dataclass
class BestResponse:
    power: float
    sinr: float
    residual: float = float("nan")


@dataclass
class EquilibriumResult:
    kind: GameKind
    powers: np.ndarray
    filters: list[ReceiveFilter]
    sinrs: np.ndarray
    utilities: np.ndarray
    at_max: np.ndarray
    iterations: int
    converged: bool
    targets: np.ndarray
    residuals: np.ndarray
    sweep_changes: list[float] = field(default_factory=list)
    monotone_tail: bool = True


class Game:
    """One game kind played on one scenario."""

    def __init__(self, kind: GameKind, model: ScenarioModel):
        self.kind = kind
        self.model = model
        cfg = model.config
        self.f = EfficiencyFunction(cfg.B)
        self.pmax = cfg.Pmax
        self.pmin = cfg.Pmax * cfg.min_power_frac
        self.tol = Tolerances(cfg.root_abs, cfg.residual_abs, cfg.max_iter)
        K = model.K
        if kind is GameKind.MF:
            ab = [receivers.mf_coefficients(k, model.signatures) for k in range(K)]
            self.a = np.array([x[0] for x in ab])
            self.b = np.array([x[1] for x in ab])
            if np.any(self.a <= 0):
                raise receivers.ZeroSignature("user with an all-zero signature")
            self.targets = np.array([mf_target_sinr(a, b, self.f) for a, b in ab])
        elif kind.constrained:
            self.targets = np.full(K, common_target_sinr(self.f))
        else:
            self.targets = np.full(K, np.nan)
        self.order = model.signatures.sic_order if kind.sic else np.arange(K)

    # --- per-user SINR as a function of the power profile ---------------

    def _mf_gain(self, k: int, powers: np.ndarray) -> tuple[float, float]:
        """``(c_k, a_k)`` with ``gamma = p a / (c + p b)``."""
        m = self.model
        other = powers @ m.mf_cross[k] - powers[k] * m.mf_cross[k, k]
        return m.mf_noise[k] + other, self.a[k]

    def _constrained_gain(self, k: int, powers: np.ndarray) -> float:
        m = self.model
        O = m.basis(k)
        Q = m.interference(k, powers, self.kind.sic)
        ht = O.T @ m.signatures.main(k)
        return float(ht @ linalg.cho_solve(spd_factor(O.T @ Q @ O), ht, check_finite=False))

    def sinr_curve(self, k: int, powers: np.ndarray) -> SinrCurve:
        m = self.model
        Q = m.interference(k, powers, self.kind.sic)
        h = m.signatures.h[k]
        cols = np.stack([h[2], h[0], h[1], h[3]], axis=1)
        W = linalg.cho_solve(spd_factor(Q), cols, check_finite=False)
        gram = cols.T @ W
        gram = 0.5 * (gram + gram.T)
        lam, vecs = np.linalg.eigh(gram[1:, 1:])
        w = vecs.T @ gram[1:, 0]
        lam = np.maximum(lam, 0.0)
        return SinrCurve(float(gram[0, 0]), tuple((w * w).tolist()), tuple(lam.tolist()))

    def sinr_at(self, k: int, p_k: float, powers: np.ndarray) -> float:
        """Own-filter-optimized SINR of user ``k`` at own power ``p_k``."""
        if self.kind is GameKind.MF:
            c, a = self._mf_gain(k, powers)
            return p_k * a / (c + p_k * self.b[k])
        if self.kind.constrained:
            return p_k * self._constrained_gain(k, powers)
        return self.sinr_curve(k, powers)(p_k)

    def utility_at(self, k: int, p_k: float, powers: np.ndarray) -> float:
        return utility(self.sinr_at(k, p_k, powers), p_k, self.f, self.model.config.utility_scale)

    # --- best responses -------------------------------------------------

    def best_response(self, k: int, powers: np.ndarray) -> BestResponse:
        powers = np.asarray(powers, dtype=float)
        if self.kind is GameKind.MF:
            c, a = self._mf_gain(k, powers)
            tgt = self.targets[k]
            p = min(tgt * c / (a - self.b[k] * tgt), self.pmax)
            return BestResponse(p, p * a / (c + p * self.b[k]))
        if self.kind.constrained:
            gain = self._constrained_gain(k, powers)
            p = min(self.targets[k] / gain, self.pmax)
            return BestResponse(p, p * gain)
        return self._unconstrained_response(self.sinr_curve(k, powers))

    def _unconstrained_response(self, curve: SinrCurve) -> BestResponse:
        f = self.f

        def log_u(p: float) -> float:
            return f.log(curve(p)) - math.log(p)

        p, _ = maximize_1d(log_u, self.pmin, self.pmax, self.tol,
                           log_scale=True, grid=self.model.config.search_grid)
        g = curve(p)
        fg = f(g)
        res = abs(fg - f.derivative(g) * curve.derivative(p) * p) / fg if fg > 0 else math.inf
        return BestResponse(p, g, res)

    # --- equilibrium ----------------------------------------------------

    def optimal_filter(self, k: int, powers: np.ndarray) -> ReceiveFilter:
        m = self.model
        fk = self.kind.filter_kind
        if fk is FilterKind.CONSTRAINED_LINEAR:
            return receivers.constrained_mmse_filter(k, m.signatures, powers, m.noise, m.basis(k))
        if fk is FilterKind.CONSTRAINED_SIC:
            return receivers.constrained_sic_filter(k, m.signatures, powers, m.noise, m.basis(k))
        return receivers.build_filter(fk, k, m.signatures, powers, m.noise)

    def run(self, init: np.ndarray | None = None) -> EquilibriumResult:
        cfg = self.model.config
        K = self.model.K
        p = np.full(K, cfg.Pmax * cfg.init_power_frac) if init is None else np.array(init, float)
        residuals = np.full(K, np.nan)
        changes: list[float] = []
        converged = False
        for _ in range(cfg.max_sweeps):
            worst = 0.0
            for k in self.order:
                br = self.best_response(k, p)
                worst = max(worst, abs(br.power - p[k]) / p[k])
                p[k] = br.power
                residuals[k] = br.residual
            changes.append(worst)
            if worst <= cfg.rel_tol:
                converged = True
                break
        if not converged:
            log.warning("%s did not converge in %d sweeps", self.kind.value, cfg.max_sweeps)
        tail = changes[-10:]
        monotone = all(b <= a for a, b in zip(tail, tail[1:]))
        if converged and not monotone:
            # a settled fixed point should contract steadily at the end
            log.warning("%s met the tolerance with a non-monotone tail", self.kind.value)
            converged = False

        m = self.model
        filters = [self.optimal_filter(k, p) for k in range(K)]
        sinrs = np.array([receivers.filter_sinr(filters[k], k, m.signatures, p, m.noise).sinr
                          for k in range(K)])
        utils = np.array([utility(sinrs[k], p[k], self.f, cfg.utility_scale) for k in range(K)])
        return EquilibriumResult(
            kind=self.kind, powers=p, filters=filters, sinrs=sinrs, utilities=utils,
            at_max=p >= cfg.Pmax, iterations=len(changes), converged=converged,
            targets=self.targets.copy(), residuals=residuals, sweep_changes=changes,
            monotone_tail=monotone,
        )


def best_response(kind: GameKind, k: int, powers, model: ScenarioModel) -> BestResponse:
    return Game(kind, model).best_response(k, np.asarray(powers, dtype=float))


def run_game(kind: GameKind, scenario: UserScenario | ScenarioModel,
             config: SystemConfig | None = None) -> EquilibriumResult:
    if isinstance(scenario, ScenarioModel):
        model = scenario
    else:
        if config is None:
            raise ValueError("config required when passing a raw scenario")
        model = ScenarioModel.from_scenario(scenario, config)
    return Game(kind, model).run()
