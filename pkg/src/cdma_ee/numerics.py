"""Small scalar and dense linear-algebra helpers used across the package."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import linalg


class NumericsError(Exception):
    """Base class for solver failures."""


class NoSignChange(NumericsError):
    pass


class MaxIterations(NumericsError):
    pass


class NotPositiveDefinite(NumericsError):
    pass


@dataclass(frozen=True)
class ScalarBracket:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty bracket [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class Tolerances:
    root_abs: float = 1e-10
    residual_abs: float = 1e-10
    max_iter: int = 200

    def __post_init__(self):
        if self.root_abs <= 0 or self.residual_abs <= 0 or self.max_iter <= 0:
            raise ValueError("tolerances must be strictly positive")


DEFAULT_TOL = Tolerances()

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def bisect_root(g: Callable[[float], float], bracket: ScalarBracket,
                tol: Tolerances = DEFAULT_TOL) -> float:
    """Bisection root of ``g`` on ``bracket``.

    Stops as soon as ``|g(x)| <= tol.residual_abs`` or the bracket is no wider
    than ``tol.root_abs``. The returned point always lies inside the bracket.
    """
    lo, hi = float(bracket.lo), float(bracket.hi)
    g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    if g_lo * g_hi > 0:
        raise NoSignChange(f"g({lo})={g_lo:.3g} and g({hi})={g_hi:.3g} share a sign")

    for _ in range(tol.max_iter):
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if abs(g_mid) <= tol.residual_abs or (hi - lo) <= tol.root_abs:
            return mid
        if mid <= lo or mid >= hi:
            # bracket collapsed to adjacent floats
            return mid
        if (g_mid < 0) == (g_lo < 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    raise MaxIterations(f"bisection did not converge in {tol.max_iter} iterations")


def maximize_1d(u: Callable[[float], float], lo: float, hi: float,
                tol: Tolerances = DEFAULT_TOL, *, log_scale: bool = False,
                grid: int = 0) -> tuple[float, float]:
    """Golden-section maximization of a unimodal ``u`` on ``[lo, hi]``.

    Args:
        u: objective.
        lo, hi: search interval, ``lo < hi`` (both positive if ``log_scale``).
        tol: ``root_abs`` bounds the final interval width, measured in
            ``log(x)`` when ``log_scale`` is set.
        log_scale: search over ``log(x)``; suits arguments spanning decades.
        grid: if positive, scan this many evenly spaced points first and
            refine only around the best one.

    Returns:
        ``(argmax, max)``. Endpoints are always evaluated, so a boundary
        maximum is returned exactly.
    """
    if not lo < hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    if log_scale:
        if lo <= 0:
            raise ValueError("log_scale needs a positive lower edge")
        fwd, inv = math.log, math.exp
    else:
        fwd = inv = lambda z: z  # noqa: E731

    a, b = fwd(lo), fwd(hi)

    def obj(z: float) -> float:
        return u(inv(z))

    best_z, best_v = a, u(lo)
    v_hi = u(hi)
    if v_hi > best_v:
        best_z, best_v = b, v_hi

    if grid > 2:
        zs = np.linspace(a, b, grid)
        vals = [best_v if i == 0 else v_hi if i == grid - 1 else obj(z)
                for i, z in enumerate(zs)]
        # ties resolve to the smallest argument
        i_best = int(np.argmax(vals))
        if vals[i_best] > best_v:
            best_z, best_v = float(zs[i_best]), vals[i_best]
        a = float(zs[max(i_best - 1, 0)])
        b = float(zs[min(i_best + 1, grid - 1)])

    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = obj(c), obj(d)
    for _ in range(tol.max_iter):
        if b - a <= tol.root_abs:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = obj(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = obj(d)
    else:
        raise MaxIterations(f"golden section did not converge in {tol.max_iter} iterations")

    z_mid = c if fc >= fd else d
    v_mid = max(fc, fd)
    if v_mid > best_v:
        best_z, best_v = z_mid, v_mid
    x = inv(best_z)
    # exact endpoints, not exp(log(x))
    if best_z == fwd(lo):
        x = lo
    elif best_z == fwd(hi):
        x = hi
    return x, best_v


def orth_complement_basis(vectors: Sequence[np.ndarray], dim: int,
                          rel_tol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis of the complement of ``span(vectors)`` in R^dim.

    Gram-Schmidt with one re-orthogonalization pass: the inputs are
    orthonormalized first, then canonical vectors extend the set to R^dim
    and the extension is kept. Vectors whose residual falls below
    ``rel_tol`` times the largest input norm count as dependent.

    Returns:
        ``(dim, dim - rank)`` array with orthonormal columns.
    """
    vecs = [np.asarray(v, dtype=float).reshape(-1) for v in vectors]
    for v in vecs:
        if v.shape[0] != dim:
            raise ValueError(f"vector of length {v.shape[0]} in dimension {dim}")
    scale = max((float(np.linalg.norm(v)) for v in vecs), default=0.0)

    Q = np.zeros((dim, dim))
    n = 0

    def push(w: np.ndarray, floor: float) -> int:
        for _ in range(2):
            w = w - Q[:, :n] @ (Q[:, :n].T @ w)
        nw = np.linalg.norm(w)
        if nw > floor:
            Q[:, n] = w / nw
            return 1
        return 0

    if scale > 0:
        for v in vecs:
            n += push(v, rel_tol * scale)
    rank = n
    eye = np.eye(dim)
    for j in range(dim):
        if n == dim:
            break
        # unit-norm candidates; a residual this small means e_j is in the span
        n += push(eye[:, j], 1e-8)
    return Q[:, rank:n].copy()


def spd_factor(A: np.ndarray):
    """Cholesky factor of a symmetric positive-definite matrix (scipy ``cho_factor`` form)."""
    try:
        return linalg.cho_factor(A, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def spd_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive-definite ``A``."""
    return linalg.cho_solve(spd_factor(A), b, check_finite=False)
