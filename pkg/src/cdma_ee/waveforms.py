"""Chip pulse, its autocorrelation, spreading codes and sampled signatures.

Time is measured in units of the chip interval unless ``PulseSpec.chip_interval``
says otherwise. The chip pulse is a square-root raised cosine truncated to
``[0, 4 Tc]`` and peaking at ``2 Tc``. The receive front-end is the same
pulse time-reversed and delayed by ``4 Tc`` to keep it causal, so one chip
seen after the front-end is ``rho(t - 4 Tc)``, supported on ``[0, 8 Tc]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

WINDOWS = (-2, -1, 0, 1)
"""Symbol offsets of the four windowed signature vectors, in storage order."""


def window_index(i: int) -> int:
    return WINDOWS.index(i)


class DelayOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class PulseSpec:
    rolloff: float = 0.22
    chip_interval: float = 1.0
    support_chips: int = 4
    fine_grid_per_chip: int = 64
    # quadrature runs on a grid this many times finer than the table
    quad_refine: int = 8

    def __post_init__(self):
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError(f"rolloff {self.rolloff} outside [0, 1]")
        if self.support_chips != 4:
            raise ValueError("only the 4-chip truncation is supported")
        if self.fine_grid_per_chip < 64:
            raise ValueError("need at least 64 grid points per chip")
        if self.chip_interval <= 0:
            raise ValueError("chip interval must be positive")

    @property
    def support(self) -> float:
        return self.support_chips * self.chip_interval

    @property
    def front_end_delay(self) -> float:
        return self.support


@dataclass(frozen=True)
class SpreadingCode:
    chips: np.ndarray

    @property
    def N(self) -> int:
        return self.chips.shape[0]


@dataclass(frozen=True)
class SignatureSet:
    """Windowed signature vectors for all users.

    ``h[k, window_index(i)]`` is the length ``2*Mos*N`` vector ``h_{k,i}``.
    """
    h: np.ndarray
    norms: np.ndarray
    sic_order: np.ndarray

    @property
    def K(self) -> int:
        return self.h.shape[0]

    @property
    def dim(self) -> int:
        return self.h.shape[2]

    def window(self, k: int, i: int) -> np.ndarray:
        return self.h[k, window_index(i)]

    def main(self, k: int) -> np.ndarray:
        return self.h[k, 2]

    def isi(self, k: int) -> np.ndarray:
        """Own-ISI vectors ``h_{k,-2}, h_{k,-1}, h_{k,+1}`` as rows."""
        return self.h[k, [0, 1, 3]]

    def scaled(self, k: int, c: float) -> "SignatureSet":
        h = self.h.copy()
        h[k] *= c
        return make_signature_set(h)


def _srrc_unscaled(x: np.ndarray, alpha: float) -> np.ndarray:
    # x is time from the pulse centre in chips; unit-energy untruncated form.
    # The pulse is even, so evaluate on |x| to keep the symmetry exact.
    x = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    at_zero = x < 1e-12
    out[at_zero] = 1.0 - alpha + 4.0 * alpha / math.pi
    near = (x >= 0.125 / alpha) if alpha > 0 else np.zeros_like(at_zero)
    rest = ~(at_zero | near)

    xr = x[rest]
    num = np.sin(math.pi * xr * (1 - alpha)) + 4 * alpha * xr * np.cos(math.pi * xr * (1 + alpha))
    out[rest] = num / (math.pi * xr * (1 - (4 * alpha * xr) ** 2))

    # Around x = 1/(4 alpha) numerator and (1 - 4 alpha x) both vanish; divide
    # them analytically so the removable singularity costs no precision.
    if alpha > 0:
        xn = x[near]
        u = xn - 1.0 / (4 * alpha)
        ratio = (-np.cos(math.pi * xn * (1 + alpha))
                 + 0.5 * math.pi * np.cos(math.pi * xn - 0.25 * math.pi) * np.sinc(alpha * u))
        out[near] = ratio / (math.pi * xn * (1 + 4 * alpha * xn))
    return out


def _truncated(spec: PulseSpec, t: np.ndarray) -> np.ndarray:
    tc = spec.chip_interval
    t = np.asarray(t, dtype=float)
    val = _srrc_unscaled((t - spec.support / 2) / tc, spec.rolloff)
    return np.where((t >= 0) & (t <= spec.support), val, 0.0)


@lru_cache(maxsize=16)
def _tables(spec: PulseSpec) -> tuple[float, np.ndarray, np.ndarray]:
    """Return (pulse scale, lag grid, autocorrelation samples on that grid)."""
    tc = spec.chip_interval
    step = tc / (spec.fine_grid_per_chip * spec.quad_refine)
    n = spec.support_chips * spec.fine_grid_per_chip * spec.quad_refine
    t = np.arange(n + 1) * step
    g = _truncated(spec, t)

    # trapezoid over the overlap [m*step, n*step] for every lag m >= 0
    full = np.correlate(g, g, mode="full")[n:]
    m = np.arange(n + 1)
    corr = step * (full - 0.5 * (g[m] * g[0] + g[n] * g[n - m]))

    energy = corr[0]
    corr = corr / energy
    corr = corr[:: spec.quad_refine]
    corr[-1] = 0.0
    lags = np.arange(corr.shape[0]) * step * spec.quad_refine
    lags = np.concatenate([-lags[:0:-1], lags])
    rho = np.concatenate([corr[:0:-1], corr])
    return 1.0 / math.sqrt(energy), lags, rho


def srrc_value(spec: PulseSpec, t) -> np.ndarray | float:
    """Unit-energy truncated SRRC chip pulse at time(s) ``t``; zero off ``[0, 4 Tc]``."""
    scale = _tables(spec)[0]
    out = scale * _truncated(spec, t)
    return float(out) if np.ndim(out) == 0 else out


def pulse_autocorrelation(spec: PulseSpec) -> tuple[np.ndarray, np.ndarray]:
    """Tabulated autocorrelation ``rho`` of the chip pulse.

    Returns ``(lags, rho)`` on the fine grid over ``[-4 Tc, 4 Tc]``, with
    ``rho(0) == 1`` and ``rho`` exactly even.
    """
    _, lags, rho = _tables(spec)
    return lags.copy(), rho.copy()


def rho_at(spec: PulseSpec, tau) -> np.ndarray:
    """Linear interpolation of the tabulated autocorrelation; zero for ``|tau| >= 4 Tc``."""
    _, lags, rho = _tables(spec)
    return np.interp(tau, lags, rho, left=0.0, right=0.0)


def make_code(seed: int, user: int, N: int) -> SpreadingCode:
    """Random +-1/sqrt(N) spreading code, reproducible from ``(seed, user)``."""
    if N < 1:
        raise ValueError("N must be positive")
    rng = np.random.default_rng([int(seed), int(user)])
    chips = rng.choice([-1.0, 1.0], size=N) / math.sqrt(N)
    return SpreadingCode(chips)


def signature_waveform(code: SpreadingCode, paths: Sequence[tuple[float, float]],
                       spec: PulseSpec, t) -> np.ndarray:
    """Effective signature ``h_k(t)`` after the front-end, at arbitrary times."""
    t = np.asarray(t, dtype=float)
    tc = spec.chip_interval
    out = np.zeros_like(t)
    n = np.arange(code.N)
    for gain, delay in paths:
        if gain == 0.0:
            continue
        tau = t[..., None] - delay - n * tc - spec.front_end_delay
        out += gain * (rho_at(spec, tau) @ code.chips)
    return out


def effective_signature(code: SpreadingCode, paths: Sequence[tuple[float, float]],
                        spec: PulseSpec, Tb: float, Mos: int) -> np.ndarray:
    """Sample the four windows ``h_{k,i}``, ``i = -2, -1, 0, +1``.

    Window ``i`` holds ``h_k(t_m - i*Tb)`` at ``t_m = m*Tc/Mos``,
    ``m = 0 .. 2*Mos*N - 1``.

    Returns:
        Array of shape ``(4, 2*Mos*N)`` in ``WINDOWS`` order.
    """
    for _, delay in paths:
        if not 0.0 <= delay < Tb:
            raise DelayOutOfRange(f"path delay {delay} outside [0, {Tb})")
    L = 2 * Mos * code.N
    t = np.arange(L) * spec.chip_interval / Mos
    grid = np.stack([t - i * Tb for i in WINDOWS])
    return signature_waveform(code, paths, spec, grid)


def make_signature_set(h: np.ndarray) -> SignatureSet:
    h = np.asarray(h, dtype=float)
    if h.ndim != 3 or h.shape[1] != 4:
        raise ValueError("expected an array of shape (K, 4, dim)")
    norms = np.linalg.norm(h[:, 2], axis=1)
    return sort_for_sic(SignatureSet(h, norms, np.arange(h.shape[0])))


def sort_for_sic(signatures: SignatureSet) -> SignatureSet:
    """Detection order by non-increasing ``||h_{k,0}||``; ties keep index order."""
    order = np.argsort(-signatures.norms, kind="stable")
    return SignatureSet(signatures.h, signatures.norms, order)
