"""Receive filters and SINR evaluation for linear and SIC detection.

User indices are always the original user labels. For SIC quantities the
detection position of a user comes from ``SignatureSet.sic_order``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .numerics import orth_complement_basis, spd_solve
from .scenario import NoiseModel, data_covariance
from .waveforms import SignatureSet


class ZeroFilter(ValueError):
    pass


class ZeroSignature(ValueError):
    pass


class FilterKind(enum.Enum):
    MATCHED = "MatchedFilter"
    CONSTRAINED_LINEAR = "ConstrainedLinear"
    LINEAR_MMSE = "LinearMMSE"
    CONSTRAINED_SIC = "ConstrainedSIC"
    SIC_MMSE = "SicMMSE"

    @property
    def constrained(self) -> bool:
        return self in (FilterKind.CONSTRAINED_LINEAR, FilterKind.CONSTRAINED_SIC)


@dataclass(frozen=True)
class ReceiveFilter:
    kind: FilterKind
    full_vector: np.ndarray
    reduced_vector: np.ndarray | None = None
    basis: np.ndarray | None = None


@dataclass(frozen=True)
class SinrBreakdown:
    signal: float
    noise: float
    mai: float
    self_isi: float

    @property
    def interference(self) -> float:
        return self.noise + self.mai + self.self_isi

    @property
    def sinr(self) -> float:
        return self.signal / self.interference


def _unit(kind: FilterKind, d: np.ndarray, x=None, basis=None) -> ReceiveFilter:
    n = np.linalg.norm(d)
    if not n > 0:
        raise ZeroFilter(f"{kind.value} filter vanished")
    return ReceiveFilter(kind, d / n, None if x is None else x / n, basis)


def _check_filter(filt: ReceiveFilter) -> np.ndarray:
    d = np.asarray(filt.full_vector, dtype=float)
    if not np.any(d):
        raise ZeroFilter("all-zero receive filter")
    return d


def sic_position(signatures: SignatureSet, k: int) -> int:
    return int(np.flatnonzero(signatures.sic_order == k)[0])


def sinr_linear(filt: ReceiveFilter, k: int, signatures: SignatureSet, powers,
                noise: NoiseModel) -> SinrBreakdown:
    d = _check_filter(filt)
    p = np.asarray(powers, dtype=float)
    proj2 = (signatures.h @ d) ** 2          # (K, 4)
    per_user = proj2.sum(axis=1)
    mai = float(p @ per_user - p[k] * per_user[k])
    self_isi = float(p[k] * (per_user[k] - proj2[k, 2]))
    return SinrBreakdown(
        signal=float(p[k] * proj2[k, 2]),
        noise=float(d @ noise.covariance @ d),
        mai=mai,
        self_isi=self_isi,
    )


def sinr_sic(filt: ReceiveFilter, k: int, signatures: SignatureSet, powers,
             noise: NoiseModel) -> SinrBreakdown:
    """SINR after cancelling earlier-detected users, assuming correct decisions.

    Cancelled users still leak through their next-symbol window ``h_{j,+1}``.
    """
    d = _check_filter(filt)
    p = np.asarray(powers, dtype=float)
    proj2 = (signatures.h @ d) ** 2
    pos = sic_position(signatures, k)
    earlier = signatures.sic_order[:pos]
    later = signatures.sic_order[pos + 1:]
    mai = float(p[earlier] @ proj2[earlier, 3] + p[later] @ proj2[later].sum(axis=1))
    return SinrBreakdown(
        signal=float(p[k] * proj2[k, 2]),
        noise=float(d @ noise.covariance @ d),
        mai=mai,
        self_isi=float(p[k] * (proj2[k].sum() - proj2[k, 2])),
    )


def matched_filter(k: int, signatures: SignatureSet) -> ReceiveFilter:
    h = signatures.main(k)
    if not np.any(h):
        raise ZeroSignature(f"user {k} has an all-zero signature")
    return _unit(FilterKind.MATCHED, h)


def mf_coefficients(k: int, signatures: SignatureSet) -> tuple[float, float]:
    """``a_k = ||h_{k,0}||^4`` and ``b_k = sum_{j != 0} (h_{k,0}^T h_{k,j})^2``."""
    h0 = signatures.main(k)
    a = float(h0 @ h0) ** 2
    b = float(np.sum((signatures.isi(k) @ h0) ** 2))
    return a, b


def isi_nuller_basis(k: int, signatures: SignatureSet) -> np.ndarray:
    return orth_complement_basis(list(signatures.isi(k)), signatures.dim)


def _constrained(kind: FilterKind, k: int, signatures: SignatureSet, R: np.ndarray,
                 basis: np.ndarray | None) -> ReceiveFilter:
    h0 = signatures.main(k)
    if not np.any(h0):
        raise ZeroSignature(f"user {k} has an all-zero signature")
    O = isi_nuller_basis(k, signatures) if basis is None else basis
    x = spd_solve(O.T @ R @ O, O.T @ h0)
    return _unit(kind, O @ x, x, O)


def constrained_mmse_filter(k: int, signatures: SignatureSet, powers, noise: NoiseModel,
                            basis: np.ndarray | None = None) -> ReceiveFilter:
    """ISI-free SINR-optimal filter ``O_k (O_k^T M_yy O_k)^{-1} O_k^T h_{k,0}``."""
    R = data_covariance(signatures, powers, noise, regularize=True)
    return _constrained(FilterKind.CONSTRAINED_LINEAR, k, signatures, R, basis)


def mmse_filter(k: int, signatures: SignatureSet, powers, noise: NoiseModel) -> ReceiveFilter:
    h0 = signatures.main(k)
    if not np.any(h0):
        raise ZeroSignature(f"user {k} has an all-zero signature")
    R = data_covariance(signatures, powers, noise, regularize=True)
    return _unit(FilterKind.LINEAR_MMSE, spd_solve(R, h0))


def mmse_sinr_closed_form(k: int, signatures: SignatureSet, powers, noise: NoiseModel) -> float:
    """``p s^2 / (s - p s^2)`` with ``s = h_{k,0}^T M_yy^{-1} h_{k,0}``."""
    p = float(np.asarray(powers, dtype=float)[k])
    h0 = signatures.main(k)
    R = data_covariance(signatures, powers, noise, regularize=True)
    s = float(h0 @ spd_solve(R, h0))
    return p * s * s / (s - p * s * s)


def sic_interference_matrix(k: int, signatures: SignatureSet, powers, noise: NoiseModel,
                            regularize: bool = False) -> np.ndarray:
    """``M_k = J_k J_k^T + M``.

    ``J_k`` stacks ``sqrt(p_i) h_{i,+1}`` for every user and
    ``sqrt(p_i) h_{i,j}``, ``j in {-2,-1,0}``, for users not detected before
    ``k``. The desired term ``p_k h_{k,0} h_{k,0}^T`` is included.
    """
    p = np.asarray(powers, dtype=float)
    h = signatures.h
    pos = sic_position(signatures, k)
    remaining = signatures.sic_order[pos:]
    base = noise.regularized if regularize else noise.covariance
    nxt = h[:, 3]
    M = base + (nxt.T * p) @ nxt
    cur = h[remaining, :3].reshape(-1, signatures.dim)
    w = np.repeat(p[remaining], 3)
    return M + (cur.T * w) @ cur


def constrained_sic_filter(k: int, signatures: SignatureSet, powers, noise: NoiseModel,
                           basis: np.ndarray | None = None) -> ReceiveFilter:
    R = sic_interference_matrix(k, signatures, powers, noise, regularize=True)
    return _constrained(FilterKind.CONSTRAINED_SIC, k, signatures, R, basis)


def sic_mmse_filter(k: int, signatures: SignatureSet, powers, noise: NoiseModel) -> ReceiveFilter:
    h0 = signatures.main(k)
    if not np.any(h0):
        raise ZeroSignature(f"user {k} has an all-zero signature")
    R = sic_interference_matrix(k, signatures, powers, noise, regularize=True)
    return _unit(FilterKind.SIC_MMSE, spd_solve(R, h0))


def build_filter(kind: FilterKind, k: int, signatures: SignatureSet, powers,
                 noise: NoiseModel) -> ReceiveFilter:
    if kind is FilterKind.MATCHED:
        return matched_filter(k, signatures)
    if kind is FilterKind.CONSTRAINED_LINEAR:
        return constrained_mmse_filter(k, signatures, powers, noise)
    if kind is FilterKind.LINEAR_MMSE:
        return mmse_filter(k, signatures, powers, noise)
    if kind is FilterKind.CONSTRAINED_SIC:
        return constrained_sic_filter(k, signatures, powers, noise)
    return sic_mmse_filter(k, signatures, powers, noise)


def filter_sinr(filt: ReceiveFilter, k: int, signatures: SignatureSet, powers,
                noise: NoiseModel) -> SinrBreakdown:
    """SINR under the detection rule that matches the filter's kind."""
    if filt.kind in (FilterKind.CONSTRAINED_SIC, FilterKind.SIC_MMSE):
        return sinr_sic(filt, k, signatures, powers, noise)
    return sinr_linear(filt, k, signatures, powers, noise)
