"""Sinh-stretched axes mapping the unit interval onto each state direction.

    z(x) = K + alpha * sinh(c2 x + c1 (1 - x)),  x in [0, 1]

with c1 = asinh((z0 - K)/alpha) and c2 = asinh((z_inf - K)/alpha), so that
nodes cluster around K.  Jacobians are analytic.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "MetricParams",
    "Axis",
    "build_axis",
    "snap_upper_bound",
    "uniform_axis",
    "point_axis",
    "default_axes",
    "physical_to_computational",
    "write_axis_csv",
]


@dataclass(frozen=True)
class MetricParams:
    K: float
    alpha: float
    z0: float
    z_inf: float

    def __post_init__(self):
        if not self.z0 < self.z_inf:
            raise ValueError(f"metric needs z0 < z_inf, got z0={self.z0}, z_inf={self.z_inf}")
        if not self.alpha > 0:
            raise ValueError(f"metric stretching alpha must be > 0, got {self.alpha}")
        if not self.z0 <= self.K <= self.z_inf:
            raise ValueError(f"concentration point K={self.K} outside [{self.z0}, {self.z_inf}]")

    @property
    def c1(self) -> float:
        return float(np.arcsinh((self.z0 - self.K) / self.alpha))

    @property
    def c2(self) -> float:
        return float(np.arcsinh((self.z_inf - self.K) / self.alpha))

    def forward(self, x):
        c1, c2 = self.c1, self.c2
        return self.K + self.alpha * np.sinh(c2 * x + c1 * (1.0 - x))

    def inverse(self, z):
        return (np.arcsinh((np.asarray(z, dtype=float) - self.K) / self.alpha) - self.c1) / (self.c2 - self.c1)

    def jacobians(self, x):
        c1, c2 = self.c1, self.c2
        arg = c2 * x + c1 * (1.0 - x)
        span = c2 - c1
        return self.alpha * np.cosh(arg) * span, self.alpha * np.sinh(arg) * span**2


@dataclass(frozen=True)
class Axis:
    """One coordinate direction: computational nodes x, physical nodes z, Jacobians."""

    x: np.ndarray
    z: np.ndarray
    j1: np.ndarray
    j2: np.ndarray
    metric: Optional[MetricParams] = None

    @property
    def n(self) -> int:
        return len(self.z)

    @property
    def dx(self) -> float:
        return 1.0 / (self.n - 1) if self.n > 1 else 1.0

    @property
    def lo(self) -> float:
        return float(self.z[0])

    @property
    def hi(self) -> float:
        return float(self.z[-1])

    def to_computational(self, z):
        return physical_to_computational(self, z)


def build_axis(params: MetricParams, n: int, anchor: Optional[float] = None) -> Axis:
    """Sample the metric on n uniform computational nodes.

    With ``anchor`` set, the upper bound is moved (as little as possible)
    so that the anchor point falls exactly on a node.
    """
    if n < 3:
        raise ValueError(f"an axis needs at least 3 nodes, got {n}")
    if anchor is not None:
        snapped = snap_upper_bound(params, n, anchor)
        if not 0.25 * params.z_inf <= snapped.z_inf <= 4.0 * params.z_inf:
            raise ValueError(
                f"snapping {anchor} onto a node would move the far bound from {params.z_inf} "
                f"to {snapped.z_inf}; use more nodes or a wider stretching")
        params = snapped
    x = np.linspace(0.0, 1.0, n)
    z = params.forward(x)
    # pin the endpoints so boundary conditions sit exactly on the bounds
    z[0], z[-1] = params.z0, params.z_inf
    if anchor is not None:
        k = int(np.argmin(np.abs(z - anchor)))
        z[k] = anchor
    j1, j2 = params.jacobians(x)
    return Axis(x, z, j1, j2, params)


def snap_upper_bound(params: MetricParams, n: int, anchor: float) -> MetricParams:
    """Return params with z_inf adjusted so that ``anchor`` maps onto a node.

    Of the two nodes bracketing the anchor, the one needing the smaller
    relative change of z_inf is used.
    """
    if not params.z0 <= anchor < params.z_inf:
        raise ValueError(f"anchor {anchor} outside [{params.z0}, {params.z_inf})")
    if anchor == params.z0:
        return params
    pos = float(params.inverse(anchor)) * (n - 1)
    candidates = sorted({min(max(k, 1), n - 2) for k in (math.floor(pos), math.ceil(pos))})
    best = None
    for k in candidates:
        cand = _snap_to_index(params, n, anchor, k)
        if cand is None:
            continue
        cost = abs(math.log(cand.z_inf / params.z_inf))
        if best is None or cost < best[0]:
            best = (cost, cand)
    if best is None:
        raise ValueError(f"cannot place {anchor} on a node of this axis")
    return best[1]


def _snap_to_index(params: MetricParams, n: int, anchor: float, k: int) -> Optional[MetricParams]:
    target = k / (n - 1)
    if anchor == params.K:
        # x(K) = -c1 / (c2 - c1) has a closed-form solution for c2
        c1 = params.c1
        if c1 == 0.0:
            return params
        c2 = -c1 * (1.0 - target) / target
        return replace(params, z_inf=params.K + params.alpha * np.sinh(c2))

    def mismatch(z_inf):
        return float(replace(params, z_inf=z_inf).inverse(anchor)) - target

    lo = max(anchor, params.K) + 1e-9 * max(1.0, abs(anchor))
    if mismatch(lo) < 0:
        return None
    hi = params.z_inf
    while mismatch(hi) > 0:
        hi *= 2.0
        if hi > 1e12 * max(1.0, params.z_inf):
            return None
    return replace(params, z_inf=brentq(mismatch, lo, hi, xtol=1e-14, rtol=1e-15))


def uniform_axis(z0: float, z_inf: float, n: int) -> Axis:
    """Affine axis, z = z0 + (z_inf - z0) x (constant Jacobian, zero curvature)."""
    if n < 3:
        raise ValueError(f"an axis needs at least 3 nodes, got {n}")
    if not z0 < z_inf:
        raise ValueError("uniform axis needs z0 < z_inf")
    x = np.linspace(0.0, 1.0, n)
    span = z_inf - z0
    return Axis(x, z0 + span * x, np.full(n, span), np.zeros(n))


def point_axis(z: float) -> Axis:
    """Degenerate single-node axis, used when a direction is collapsed."""
    return Axis(np.zeros(1), np.array([float(z)]), np.ones(1), np.zeros(1))


def default_axes(strike: float, v_center: float = 0.5, *, r_inf: float = 250.0,
                 v_inf: float = 30.0, y_inf: float = 250.0, alpha_r: float = 0.05,
                 alpha_v: float = 0.5, alpha_y: float = 0.05):
    """Metric parameters for (r, v, y) in scaled units, clustered at the strike."""
    if not strike > 0:
        raise ValueError("strike must be positive in scaled units")
    return (
        MetricParams(K=strike, alpha=alpha_r, z0=0.0, z_inf=r_inf),
        MetricParams(K=v_center, alpha=alpha_v, z0=0.0, z_inf=v_inf),
        MetricParams(K=0.0, alpha=alpha_y, z0=0.0, z_inf=y_inf),
    )


def physical_to_computational(axis: Axis, z):
    """Invert the axis map.  Raises ValueError outside [z0, z_inf]."""
    z = np.asarray(z, dtype=float)
    lo, hi = axis.lo, axis.hi
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if np.any(z < lo - tol) or np.any(z > hi + tol):
        raise ValueError(f"point outside axis range [{lo}, {hi}]")
    if axis.n == 1:
        return np.zeros_like(z)
    if axis.metric is None:
        x = (z - lo) / (hi - lo)
    else:
        x = axis.metric.inverse(z)
    return np.clip(x, 0.0, 1.0)


def write_axis_csv(axis: Axis, fh: Optional[io.TextIOBase] = None) -> str:
    """Write (i, x, z, j1, j2) rows; returns the text when no handle is given."""
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "x", "z", "j1", "j2"])
    for i in range(axis.n):
        w.writerow([i, repr(float(axis.x[i])), repr(float(axis.z[i])),
                    repr(float(axis.j1[i])), repr(float(axis.j2[i]))])
    return buf.getvalue() if fh is None else ""
