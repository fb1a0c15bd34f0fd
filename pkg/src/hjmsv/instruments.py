"""Instrument drivers: zero coupon bonds and caplets on top of the ADI solver."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .curve import InitialCurve
from .discretization import Grid3, caplet_boundary_spec, zcb_boundary_spec
from .mesh import Axis, MetricParams, build_axis, physical_to_computational, point_axis
from .model import DEFAULT_RATE_SCALE, CapletSpec, ModelParams, StatePoint, zcb_closed_form
from .solver import Problem, SolveReport, SolverConfig, run

__all__ = [
    "MeshConfig",
    "PriceResult",
    "default_spot",
    "build_axes",
    "price_zcb",
    "price_caplet",
    "premium_ladder",
    "extract_greeks",
    "interpolate_at",
    "write_ladder_csv",
    "write_slice_csv",
]


@dataclass(frozen=True)
class MeshConfig:
    """Node counts and metric parameters per axis, in scaled units (r/r0, v, y/r0^2).

    ``k_r=None`` clusters r at the caplet strike (or at the spot for bonds).
    With ``snap_spot`` the far bounds move slightly so the spot is a node.
    """

    nr: int = 100
    nv: int = 40
    ny: int = 40
    r_inf: float = 25.0
    v_inf: float = 30.0
    y_inf: float = 25.0
    alpha_r: float = 0.5
    alpha_v: float = 0.5
    alpha_y: float = 2.0
    k_r: Optional[float] = None
    k_v: float = 0.5
    r0: float = DEFAULT_RATE_SCALE
    collapse_v: bool = False
    snap_spot: bool = True

    def __post_init__(self):
        for name in ("nr", "ny"):
            if getattr(self, name) < 3:
                raise ValueError(f"{name} must be >= 3")
        if not self.collapse_v and self.nv < 3:
            raise ValueError("nv must be >= 3 unless v is collapsed")
        if not self.r0 > 0:
            raise ValueError("rate scale r0 must be positive")

    @classmethod
    def caplet(cls, nr: int = 100, nv: int = 40, ny: int = 40, **kw) -> "MeshConfig":
        return cls(nr=nr, nv=nv, ny=ny, **kw)

    @classmethod
    def wide(cls, nr: int = 100, nv: int = 40, ny: int = 40, **kw) -> "MeshConfig":
        """Very wide box with tight clustering at the strike and at y = 0."""
        base = dict(r_inf=250.0, y_inf=250.0, alpha_r=0.05, alpha_y=0.05)
        base.update(kw)
        return cls(nr=nr, nv=nv, ny=ny, **base)

    @classmethod
    def zcb(cls, nr: int = 100, ny: int = 40, **kw) -> "MeshConfig":
        """Bond mesh: v collapsed, near-uniform r and y on a tighter box."""
        base = dict(r_inf=8.0, y_inf=25.0, alpha_r=5.0, alpha_y=25.0, collapse_v=True, nv=1)
        base.update(kw)
        return cls(nr=nr, ny=ny, **base)


@dataclass
class PriceResult:
    price: float
    rho_grid: np.ndarray
    vega_grid: np.ndarray
    report: SolveReport
    grid: Grid3
    spot: StatePoint
    reference: Optional[float] = None
    premium_by_strike: Optional[List[Tuple[float, float]]] = None

    @property
    def error(self) -> Optional[float]:
        return None if self.reference is None else self.price - self.reference

    @property
    def axes(self) -> Sequence[Axis]:
        return self.grid.axes


def default_spot(curve: InitialCurve) -> StatePoint:
    return StatePoint(r=float(curve.forward(0.0)), v=1.0, y=0.0, t=0.0)


def build_axes(mesh: MeshConfig, spot: StatePoint, k_r: float) -> Tuple[Axis, Axis, Axis]:
    """Axes in scaled units.  ``k_r`` is the r clustering point (scaled)."""
    r0 = mesh.r0
    r_spot, y_spot = spot.r / r0, spot.y / r0**2
    k_r = min(max(k_r, 0.0), mesh.r_inf)
    r_metric = MetricParams(K=k_r, alpha=mesh.alpha_r, z0=0.0, z_inf=mesh.r_inf)
    y_metric = MetricParams(K=0.0, alpha=mesh.alpha_y, z0=0.0, z_inf=mesh.y_inf)
    snap = mesh.snap_spot
    r_axis = build_axis(r_metric, mesh.nr, r_spot if snap and 0.0 < r_spot < mesh.r_inf else None)
    y_axis = build_axis(y_metric, mesh.ny, y_spot if snap and 0.0 < y_spot < mesh.y_inf else None)
    if mesh.collapse_v:
        v_axis = point_axis(spot.v)
    else:
        v_metric = MetricParams(K=mesh.k_v, alpha=mesh.alpha_v, z0=0.0, z_inf=mesh.v_inf)
        v_axis = build_axis(v_metric, mesh.nv, spot.v if snap and 0.0 < spot.v < mesh.v_inf else None)
    return r_axis, v_axis, y_axis


def _check_spot(spot: StatePoint, axes, r0: float):
    scaled = (spot.r / r0, spot.v, spot.y / r0**2)
    for name, ax, z in zip(("r", "v", "y"), axes, scaled):
        if ax.n == 1:
            if abs(z - ax.z[0]) > 1e-12:
                raise ValueError(f"spot {name}={z} differs from the collapsed node {ax.z[0]}")
        elif not ax.lo <= z <= ax.hi:
            raise ValueError(f"spot {name}={z} outside mesh bounds [{ax.lo}, {ax.hi}]")


def _finish(grid: Grid3, report: SolveReport, spot: StatePoint, r0: float, reference=None) -> PriceResult:
    price = interpolate_at(grid, grid.axes, spot.r / r0, spot.v, spot.y / r0**2)
    rho, vega = extract_greeks(grid, grid.axes, r_scale=r0)
    if not math.isfinite(price):
        raise FloatingPointError("non-finite spot price")
    return PriceResult(price, rho, vega, report, grid, spot, reference)


def price_zcb(T: float, curve: InitialCurve, params: ModelParams, mesh_cfg: Optional[MeshConfig] = None,
              solver_cfg: Optional[SolverConfig] = None, spot: Optional[StatePoint] = None) -> PriceResult:
    """Zero coupon bond paying 1 at T, valued at t = 0."""
    mesh = mesh_cfg or MeshConfig.zcb()
    solver = solver_cfg or SolverConfig()
    spot = spot or default_spot(curve)
    if T < 0:
        raise ValueError("maturity must be >= 0")
    r0 = mesh.r0
    axes = build_axes(mesh, spot, mesh.k_r if mesh.k_r is not None else spot.r / r0)
    _check_spot(spot, axes, r0)
    x_spot = spot.r - float(curve.forward(0.0))
    reference = float(zcb_closed_form(0.0, T, x_spot, spot.y, curve, params.kappa))
    if T == 0:
        shape = tuple(ax.n for ax in axes)
        grid = Grid3(np.ones(shape), axes, 0.0)
        return _finish(grid, SolveReport(), spot, r0, reference)

    problem = Problem(axes, params, curve, T, lambda R, V, Y: np.ones(np.broadcast(R, V, Y).shape),
                      zcb_boundary_spec(T, curve, params, r0), r0)
    grid, report = run(problem, solver)
    return _finish(grid, report, spot, r0, reference)


class _CapletPayoff:
    """Terminal caplet payoff on scaled coordinates (picklable)."""

    def __init__(self, spec: CapletSpec, curve: InitialCurve, params: ModelParams, r0: float):
        self.spec, self.curve, self.kappa, self.r0 = spec, curve, params.kappa, r0
        self.f_T = float(curve.forward(spec.T))

    def __call__(self, R, V, Y):
        x = self.r0 * R - self.f_T
        p = zcb_closed_form(self.spec.T, self.spec.T_M, x, self.r0**2 * Y, self.curve, self.kappa)
        out = np.maximum(1.0 - self.spec.delta_m * p, 0.0)
        return np.broadcast_to(out, np.broadcast(R, V, Y).shape)


def price_caplet(spec: CapletSpec, curve: InitialCurve, params: ModelParams, mesh_cfg: Optional[MeshConfig] = None,
                 solver_cfg: Optional[SolverConfig] = None, spot: Optional[StatePoint] = None) -> PriceResult:
    """Caplet fixing at T and paying at T_M, valued at t = 0."""
    mesh = mesh_cfg or MeshConfig.caplet()
    solver = solver_cfg or SolverConfig()
    spot = spot or default_spot(curve)
    r0 = mesh.r0
    axes = build_axes(mesh, spot, mesh.k_r if mesh.k_r is not None else spec.K / r0)
    _check_spot(spot, axes, r0)
    problem = Problem(axes, params, curve, spec.T, _CapletPayoff(spec, curve, params, r0),
                      caplet_boundary_spec(spec, curve, params, r0), r0)
    grid, report = run(problem, solver)
    return _finish(grid, report, spot, r0)


def premium_ladder(strikes: Sequence[float], T: float, T_M: float, curve: InitialCurve, params: ModelParams,
                   mesh_cfg: Optional[MeshConfig] = None, solver_cfg: Optional[SolverConfig] = None,
                   spot: Optional[StatePoint] = None, workers: int = 1) -> List[Tuple[float, float]]:
    """Caplet premiums across strikes on one fixed mesh.

    The r clustering point stays put (mean strike unless ``k_r`` is set)
    so the strike crosses mesh cells; strikes are independent jobs.
    """
    strikes = [float(k) for k in strikes]
    if not strikes:
        return []
    mesh = mesh_cfg or MeshConfig.caplet()
    if mesh.k_r is None:
        mesh = replace(mesh, k_r=float(np.mean(strikes)) / mesh.r0)

    def one(k):
        return price_caplet(CapletSpec(T, T_M, k), curve, params, mesh, solver_cfg, spot).price

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            prices = list(pool.map(one, strikes))
    else:
        prices = [one(k) for k in strikes]
    return list(zip(strikes, prices))


def extract_greeks(grid: Grid3, axes: Optional[Sequence[Axis]] = None, r_scale: float = 1.0):
    """(dC/dr, dC/dv) on the mesh.

    Differences are taken in computational coordinates and divided by the
    Jacobian; faces use one-sided second-order formulas.  ``r_scale``
    converts the scaled r axis back to rate units.
    """
    axes = grid.axes if axes is None else axes
    U = grid.data

    def derivative(a):
        ax = axes[a]
        if ax.n == 1:
            return np.zeros_like(U)
        d = np.gradient(U, ax.dx, axis=a, edge_order=2 if ax.n >= 3 else 1)
        shape = [1, 1, 1]
        shape[a] = ax.n
        return d / ax.j1.reshape(shape)

    return derivative(0) / r_scale, derivative(1)


def interpolate_at(grid: Grid3, axes: Optional[Sequence[Axis]], r: float, v: float, y: float) -> float:
    """Trilinear interpolation in computational coordinates (scaled inputs)."""
    axes = grid.axes if axes is None else axes
    weights = []
    for ax, z in zip(axes, (r, v, y)):
        if ax.n == 1:
            if abs(z - ax.z[0]) > 1e-12 * max(1.0, abs(ax.z[0])):
                raise ValueError(f"point {z} off the collapsed node {ax.z[0]}")
            weights.append(((0, 1.0),))
            continue
        xq = float(physical_to_computational(ax, z))
        # exact node hits avoid the tiny inverse-map round-off
        hit = np.flatnonzero(ax.z == z)
        if hit.size:
            weights.append(((int(hit[0]), 1.0),))
            continue
        pos = xq / ax.dx
        i = min(int(math.floor(pos)), ax.n - 2)
        w = pos - i
        weights.append(((i, 1.0 - w), (i + 1, w)))
    total = 0.0
    for i, wi in weights[0]:
        for j, wj in weights[1]:
            for k, wk in weights[2]:
                total += wi * wj * wk * grid.data[i, j, k]
    return float(total)


def write_ladder_csv(ladder: Sequence[Tuple[float, float]], fh=None) -> str:
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strike_rate", "premium"])
    for k, p in ladder:
        w.writerow([repr(float(k)), repr(float(p))])
    return buf.getvalue() if fh is None else ""


def write_slice_csv(field: np.ndarray, axes: Sequence[Axis], r0: float, name: str = "value",
                    y_index: int = 0, fh=None) -> str:
    """(r, v) slice of a grid field at one y node, rates in absolute units."""
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["short_rate", "variance_factor", name])
    ar, av = axes[0], axes[1]
    for i in range(ar.n):
        for j in range(av.n):
            w.writerow([repr(float(r0 * ar.z[i])), repr(float(av.z[j])), repr(float(field[i, j, y_index]))])
    return buf.getvalue() if fh is None else ""
