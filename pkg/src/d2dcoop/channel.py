"""Node placement and channel gain generation for a single-cell uplink.

Gains follow the distance-based pathloss model with exponential fast
fading, ``h = K * gamma * L**(-eta)``, with ``gamma ~ Exp(1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InvalidGeometryError(ValueError):
    """Raised for non-positive link distances or bad geometry parameters."""


class ConditioningError(RuntimeError):
    """Raised when outage conditioning of a CEU direct link does not converge."""

    def __init__(self, ceu: int, retries: int):
        super().__init__(f"CEU {ceu}: no outage realization of h_ib after {retries} draws")
        self.ceu = ceu
        self.retries = retries


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def distance(self, other: "Position") -> float:
        return float(np.hypot(self.x - other.x, self.y - other.y))

    @property
    def radius(self) -> float:
        return float(np.hypot(self.x, self.y))


@dataclass(frozen=True)
class ChannelParams:
    """Physical layer constants. Defaults describe a 500 m macro cell with edge CEUs."""

    K: float = 1e-2               # pathloss constant
    eta: float = 4.0              # pathloss exponent
    N0: float = dbm_to_watt(-114.0)  # noise power, W
    cell_radius: float = 500.0    # m
    edge_band: float = 50.0       # width of the CEU annulus, m
    d2d_separation: float = 20.0  # DT-DR distance, m
    relay_range: float = 300.0    # max CEU-DT distance for a usable pairing, m

    def __post_init__(self):
        if not self.K > 0 or not self.eta > 0 or not self.N0 > 0:
            raise InvalidGeometryError("K, eta and N0 must be positive")
        if not 0 <= self.edge_band < self.cell_radius:
            raise InvalidGeometryError("edge_band must lie in [0, cell_radius)")
        if not 0 < self.d2d_separation < 2 * self.cell_radius:
            raise InvalidGeometryError("d2d_separation must lie in (0, cell diameter)")
        if not self.relay_range > 0:
            raise InvalidGeometryError("relay_range must be positive")


@dataclass
class Topology:
    ceu_positions: list[Position] = field(default_factory=list)
    dt_positions: list[Position] = field(default_factory=list)
    dr_positions: list[Position] = field(default_factory=list)
    bs_position: Position = Position(0.0, 0.0)

    @property
    def m(self) -> int:
        return len(self.ceu_positions)

    @property
    def n(self) -> int:
        return len(self.dt_positions)

    def ceu_dt_distances(self) -> np.ndarray:
        """M x N matrix of CEU-to-DT distances."""
        ceu = _xy(self.ceu_positions)
        dt = _xy(self.dt_positions)
        return np.hypot(ceu[:, None, 0] - dt[None, :, 0], ceu[:, None, 1] - dt[None, :, 1])


def _xy(points: list[Position]) -> np.ndarray:
    return np.array([(p.x, p.y) for p in points], dtype=float).reshape(-1, 2)


@dataclass
class ChannelGains:
    h_ib: np.ndarray  # (M,) CEU -> BS
    h_ij: np.ndarray  # (M, N) CEU -> DT
    g_jb: np.ndarray  # (N,) DT -> BS
    g_j: np.ndarray   # (N,) DT -> DR

    def __post_init__(self):
        for name in ("h_ib", "h_ij", "g_jb", "g_j"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0)):
                raise ValueError(f"{name} must be finite and non-negative")
            setattr(self, name, arr)
        m, n = self.h_ib.shape[0], self.g_j.shape[0]
        self.h_ij = self.h_ij.reshape(m, n)
        if self.g_jb.shape != (n,):
            raise ValueError("g_jb and g_j must have the same length")

    @property
    def m(self) -> int:
        return self.h_ib.shape[0]

    @property
    def n(self) -> int:
        return self.g_j.shape[0]


def _uniform_in_annulus(rng: np.random.Generator, r_min: float, r_max: float) -> Position:
    # area-uniform radius: r^2 uniform on [r_min^2, r_max^2]
    r = np.sqrt(rng.uniform(r_min**2, r_max**2))
    theta = rng.uniform(0.0, 2 * np.pi)
    return Position(float(r * np.cos(theta)), float(r * np.sin(theta)))


def place_nodes(params: ChannelParams, m: int, n: int, rng: np.random.Generator) -> Topology:
    """Drop M CEUs on the cell-edge annulus and N D2D pairs inside the cell.

    CEUs are placed before D2D pairs and every node consumes its draws in
    order, so the first ``k`` pairs are identical for any ``n >= k`` under the
    same stream.
    """
    if m < 0 or n < 0:
        raise ValueError("node counts must be non-negative")
    R = params.cell_radius
    ceus = [_uniform_in_annulus(rng, R - params.edge_band, R) for _ in range(m)]
    dts, drs = [], []
    for _ in range(n):
        dt = _uniform_in_annulus(rng, 0.0, R)
        while True:
            theta = rng.uniform(0.0, 2 * np.pi)
            dr = Position(dt.x + params.d2d_separation * float(np.cos(theta)),
                          dt.y + params.d2d_separation * float(np.sin(theta)))
            if dr.radius <= R:
                break
        dts.append(dt)
        drs.append(dr)
    return Topology(ceus, dts, drs, Position(0.0, 0.0))


def pathloss_gain(distance, params: ChannelParams, fading=1.0):
    """Deterministic part of the gain, scaled by a given fading draw."""
    d = np.asarray(distance, dtype=float)
    if np.any(~(d > 0)):
        raise InvalidGeometryError(f"link distance must be positive, got {distance!r}")
    return params.K * np.asarray(fading, dtype=float) * d ** (-params.eta)


def channel_gain(distance: float, params: ChannelParams, rng: np.random.Generator) -> float:
    """One realization of ``K * gamma * distance**-eta`` with ``gamma ~ Exp(1)``."""
    if not distance > 0:
        raise InvalidGeometryError(f"link distance must be positive, got {distance!r}")
    return float(pathloss_gain(distance, params, rng.standard_exponential()))


def direct_outage(h_ib, p_c: float, n0: float, r_th: float):
    return np.log2(1.0 + p_c * np.asarray(h_ib) / n0) < r_th


def realize_gains(
    topology: Topology,
    params: ChannelParams,
    rng: np.random.Generator,
    condition_outage: bool = True,
    p_c: float = 0.1,
    r_th: float = float(np.log2(1 + db_to_linear(5.0))),
    max_retries: int = 10_000,
) -> ChannelGains:
    """Draw all link gains of a topology with i.i.d. unit-mean exponential fading.

    With ``condition_outage`` each CEU's direct gain is redrawn until the
    direct link is in outage. Draw order is: CEU direct links, then per D2D
    pair ``(g_j, g_jb, h_1j..h_Mj)``, so pair ``j``'s gains do not depend on how
    many pairs follow it.
    """
    m, n = topology.m, topology.n
    bs = topology.bs_position
    h_ib = np.empty(m)
    for i, ceu in enumerate(topology.ceu_positions):
        base = float(pathloss_gain(ceu.distance(bs), params))
        for _ in range(max_retries):
            h = base * rng.standard_exponential()
            if not condition_outage or direct_outage(h, p_c, params.N0, r_th):
                break
        else:
            raise ConditioningError(i, max_retries)
        h_ib[i] = h

    fading = rng.standard_exponential(size=(n, m + 2))
    dt_bs = np.array([dt.distance(bs) for dt in topology.dt_positions])
    dt_dr = np.array([dt.distance(dr) for dt, dr in zip(topology.dt_positions, topology.dr_positions)])
    g_j = pathloss_gain(dt_dr, params, fading[:, 0]) if n else np.empty(0)
    g_jb = pathloss_gain(dt_bs, params, fading[:, 1]) if n else np.empty(0)
    if m and n:
        h_ij = pathloss_gain(topology.ceu_dt_distances(), params, fading[:, 2:].T)
    else:
        h_ij = np.empty((m, n))
    return ChannelGains(h_ib=h_ib, h_ij=h_ij, g_jb=g_jb, g_j=g_j)
