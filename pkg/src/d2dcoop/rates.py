"""Achievable rates for direct, relayed (decode-and-forward) and D2D links.

All rates are spectral efficiencies in bits/s/Hz over a frame of unit
length. The relayed CEU transmission uses two phases of length ``alpha``
each and the D2D pair keeps the remaining ``1 - 2*alpha``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidAllocationError(ValueError):
    """Allocation coefficient outside the open interval (0, 1/2)."""


@dataclass(frozen=True)
class LinkBudget:
    direct_rate: float  # CEU -> BS without help
    r1: float           # CEU -> DT hop
    r2: float           # CEU + DT -> BS combining hop
    r_c: float          # min(r1, r2), relayed rate per unit of alpha
    r_d: float          # DT -> DR rate


def direct_rate(p_c, h_ib, n0):
    """``log2(1 + p_c*h_ib/n0)``; broadcasts over arrays."""
    return np.log2(1.0 + p_c * np.asarray(h_ib, dtype=float) / n0)


def budget_arrays(gains, p_c: float, p_d: float, n0: float) -> dict[str, np.ndarray]:
    """Every pair's budget at once, as ``(M, N)`` arrays keyed like LinkBudget fields."""
    h_ib = gains.h_ib[:, None]
    snr_direct = p_c * h_ib / n0
    r1 = np.log2(1.0 + p_c * gains.h_ij / n0)
    r2 = np.log2(1.0 + snr_direct + p_d * gains.g_jb[None, :] / n0)
    shape = gains.h_ij.shape
    return {
        "direct_rate": np.broadcast_to(np.log2(1.0 + snr_direct), shape),
        "r1": r1,
        "r2": r2,
        "r_c": np.minimum(r1, r2),
        "r_d": np.broadcast_to(np.log2(1.0 + p_d * gains.g_j[None, :] / n0), shape),
    }


def pair_budget(i: int, j: int, gains, params) -> LinkBudget:
    """Link budget of CEU ``i`` relayed through D2D pair ``j``."""
    if not (0 <= i < gains.m and 0 <= j < gains.n):
        raise IndexError(f"pair ({i}, {j}) out of range for {gains.m}x{gains.n}")
    snr_direct = params.p_c * gains.h_ib[i] / params.n0
    r1 = float(np.log2(1.0 + params.p_c * gains.h_ij[i, j] / params.n0))
    r2 = float(np.log2(1.0 + snr_direct + params.p_d * gains.g_jb[j] / params.n0))
    return LinkBudget(
        direct_rate=float(np.log2(1.0 + snr_direct)),
        r1=r1,
        r2=r2,
        r_c=min(r1, r2),
        r_d=float(np.log2(1.0 + params.p_d * gains.g_j[j] / params.n0)),
    )


def cooperative_rates(budget: LinkBudget, alpha: float) -> tuple[float, float]:
    """(CEU rate, D2D rate) when the pair cooperates with allocation ``alpha``."""
    if not 0.0 < alpha < 0.5:
        raise InvalidAllocationError(f"alpha must lie in (0, 0.5), got {alpha!r}")
    return alpha * budget.r_c, (1.0 - 2.0 * alpha) * budget.r_d
