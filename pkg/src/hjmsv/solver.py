"""Crank-Nicholson / Douglas ADI time marching in reversed time tau = T - t."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .curve import InitialCurve
from .discretization import BoundarySpec, Grid3, SpatialOperator, build_operator, dirichlet_data
from .mesh import Axis
from .model import ModelParams
from .tridiag import SingularPivotError, solve_tridiagonal

__all__ = [
    "DivergenceError",
    "SingularPivotError",
    "SolverConfig",
    "SolveReport",
    "Problem",
    "thomas_solve",
    "douglas_step",
    "smooth_terminal",
    "run",
    "write_history_csv",
]

FieldFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


class DivergenceError(RuntimeError):
    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class SolverConfig:
    theta_cn: float = 0.5
    steps_per_year: int = 12
    n_steps: Optional[int] = None
    y_boundary_order: int = 2
    r_boundary_order: int = 2
    smoothing: bool = True
    smoothing_points: int = 3
    divergence_bound: float = 1e6
    explicit_level: str = "half"

    def __post_init__(self):
        if self.explicit_level not in ("half", "start"):
            raise ValueError("explicit_level must be 'half' or 'start'")
        if not 0.0 <= self.theta_cn <= 1.0:
            raise ValueError(f"theta_cn must lie in [0, 1], got {self.theta_cn}")
        if self.steps_per_year < 1:
            raise ValueError("steps_per_year must be >= 1")
        if self.n_steps is not None and self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.y_boundary_order not in (1, 2) or self.r_boundary_order not in (1, 2):
            raise ValueError("boundary orders must be 1 or 2")
        if self.smoothing_points < 1:
            raise ValueError("smoothing_points must be >= 1")

    def steps_for(self, horizon: float) -> int:
        if self.n_steps is not None:
            return self.n_steps
        if horizon <= 0:
            return 0
        return max(1, math.ceil(horizon * self.steps_per_year - 1e-9))


@dataclass
class SolveReport:
    wall_time: float = 0.0
    n_steps: int = 0
    max_delta: float = 0.0
    nan_guard: str = "ok"
    history: List[Tuple[int, float, float]] = field(default_factory=list)


@dataclass
class Problem:
    """A backward pricing problem in scaled coordinates.

    ``terminal`` and ``source`` take broadcastable scaled coordinate arrays
    (r/r0, v, y/r0**2); ``source`` additionally takes calendar time first.
    """

    axes: Sequence[Axis]
    params: ModelParams
    curve: InitialCurve
    maturity: float
    terminal: FieldFn
    boundary: BoundarySpec
    r0: float = 1e-2
    source: Optional[Callable] = None

    @property
    def shape(self):
        return tuple(ax.n for ax in self.axes)


def thomas_solve(line, rhs) -> np.ndarray:
    """Solve one assembled TriDiagLine system."""
    return solve_tridiagonal(line.lower, line.diag, line.upper, np.asarray(rhs, dtype=float))


def _coords(axes: Sequence[Axis]):
    return axes[0].z[:, None, None], axes[1].z[None, :, None], axes[2].z[None, None, :]


def douglas_step(U: np.ndarray, tau: float, dt: float, problem: Problem, config: SolverConfig,
                 op_explicit: Optional[SpatialOperator] = None,
                 op_implicit: Optional[SpatialOperator] = None) -> np.ndarray:
    """Advance U from tau to tau + dt.

    Implicit line factors I - theta dt L_a use coefficients at the half
    step.  The explicit stage (all operators, mixed term included) uses the
    half step as well, or the start of the step with
    ``explicit_level="start"``; the latter is only first order in time when
    coefficients move with t.
    """
    T = problem.maturity
    t_now, t_half, t_next = T - tau, T - tau - 0.5 * dt, T - tau - dt
    build = lambda t: build_operator(t, problem.axes, problem.params, problem.curve, problem.r0,  # noqa: E731
                                     config.y_boundary_order, config.r_boundary_order)
    op_h = op_implicit if op_implicit is not None else build(t_half)
    if op_explicit is not None:
        op_n = op_explicit
    else:
        op_n = build(t_now) if config.explicit_level == "start" else op_h

    Z = dt * op_n.apply(U)
    if problem.source is not None:
        R, V, Y = _coords(problem.axes)
        Z += dt * np.broadcast_to(problem.source(t_half, R, V, Y), U.shape)
    mask, values = dirichlet_data(problem.boundary, t_next, problem.axes)
    Z[mask] = values[mask] - U[mask]
    c = config.theta_cn * dt
    for op in op_h.implicit:
        Z = op.solve(Z, c, mask)
    out = U + Z
    out[mask] = values[mask]
    return out


def _cell_samples(axis: Axis, m: int) -> np.ndarray:
    z = axis.z
    n = axis.n
    if n == 1 or m == 1:
        return np.repeat(z[:, None], m if n > 1 else 1, axis=1)
    lo = np.empty(n)
    hi = np.empty(n)
    lo[1:] = 0.5 * (z[1:] + z[:-1])
    hi[:-1] = lo[1:]
    lo[0], hi[-1] = z[0], z[-1]
    frac = (np.arange(m) + 0.5) / m
    samples = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    samples[0] = z[0]
    samples[-1] = z[-1]
    return samples


def smooth_terminal(grid: Grid3, payoff_fn: FieldFn, m: int = 3) -> Grid3:
    """Replace interior nodal payoff values by cell averages.

    Cells span half the spacing to each neighbour; the average uses m
    midpoint samples per resolved direction.  Boundary nodes keep
    pointwise values.
    """
    axes = grid.axes
    samples = [_cell_samples(ax, m) for ax in axes]
    counts = [s.shape[1] for s in samples]
    R = samples[0].reshape(-1)[:, None, None]
    V = samples[1].reshape(-1)[None, :, None]
    Y = samples[2].reshape(-1)[None, None, :]
    vals = np.broadcast_to(payoff_fn(R, V, Y), (R.shape[0], V.shape[1], Y.shape[2]))
    nr, nv, ny = (ax.n for ax in axes)
    avg = vals.reshape(nr, counts[0], nv, counts[1], ny, counts[2]).mean(axis=(1, 3, 5))

    Rn, Vn, Yn = _coords(axes)
    point = np.broadcast_to(payoff_fn(Rn, Vn, Yn), avg.shape)
    boundary = np.zeros(avg.shape, dtype=bool)
    for a, ax in enumerate(axes):
        if ax.n > 1:
            sl = [slice(None)] * 3
            sl[a] = 0
            boundary[tuple(sl)] = True
            sl[a] = -1
            boundary[tuple(sl)] = True
    data = np.where(boundary, point, avg)
    return Grid3(np.array(data, dtype=float), axes, grid.time)


def run(problem: Problem, config: SolverConfig = SolverConfig()) -> Tuple[Grid3, SolveReport]:
    """March the terminal condition from tau = 0 (t = T) to tau = T (t = 0)."""
    start = time.perf_counter()
    axes = problem.axes
    T = problem.maturity
    R, V, Y = _coords(axes)
    U0 = np.array(np.broadcast_to(problem.terminal(R, V, Y), problem.shape), dtype=float)
    grid = Grid3(U0, axes, time=T)
    if config.smoothing and config.smoothing_points > 1:
        grid = smooth_terminal(grid, problem.terminal, config.smoothing_points)
    U = grid.data

    n_steps = config.steps_for(T)
    report = SolveReport(n_steps=n_steps)
    dt = T / n_steps if n_steps else 0.0
    build = lambda t: build_operator(t, axes, problem.params, problem.curve, problem.r0,  # noqa: E731
                                     config.y_boundary_order, config.r_boundary_order)
    for n in range(n_steps):
        tau = n * dt
        op_h = build(T - tau - 0.5 * dt)
        op_n = build(T - tau) if config.explicit_level == "start" else op_h
        try:
            new = douglas_step(U, tau, dt, problem, config, op_n, op_h)
        except SingularPivotError as exc:
            raise SingularPivotError(f"step {n}: {exc}") from exc
        if not np.all(np.isfinite(new)):
            report.nan_guard = "tripped"
            raise DivergenceError("non-finite values in solution", n)
        peak = float(np.max(np.abs(new)))
        if peak > config.divergence_bound:
            report.nan_guard = "tripped"
            raise DivergenceError(f"max|U| = {peak:.3g} exceeds bound {config.divergence_bound:g}", n)
        report.max_delta = float(np.max(np.abs(new - U)))
        report.history.append((n + 1, (n + 1) * dt, report.max_delta))
        U = new
    report.wall_time = time.perf_counter() - start
    return Grid3(U, axes, time=0.0), report


def write_history_csv(report: SolveReport, fh=None) -> str:
    """Per-step checkpoint rows (step, tau, max|dU|)."""
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "tau_years", "max_abs_delta"])
    for step, tau, delta in report.history:
        w.writerow([step, repr(float(tau)), repr(float(delta))])
    return buf.getvalue() if fh is None else ""
