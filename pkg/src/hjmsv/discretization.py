"""Spatial operators of the scaled pricing PDE on the computational unit cube.

Unknowns live on the tensor mesh (r, v, y).  In computational coordinates
the right-hand side of the backward equation is

    F(U) = g1 U_rr + g2 U_vv + g3 U_rv + g4 U_r + g5 U_v + g6 U_y - r0 r U

split into three tridiagonal line operators and one explicit mixed term:

    L_r = g1 d_rr + g4 d_r
    L_v = g2 d_vv + g5 d_v
    L_y = g6 d_y - r0 r          (the discount term lives here only)
    L_rv = g3 d_rv

Low faces (r=0, v=0, y=0) carry one-sided convection rows of the
degenerate equation; high faces are Dirichlet and handled through a mask.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .curve import InitialCurve
from .mesh import Axis
from .model import (
    CapletSpec,
    ModelParams,
    StatePoint,
    rescaled_coefficients,
    zcb_closed_form,
)
from .tridiag import solve_tridiagonal

__all__ = [
    "FACES",
    "TriDiagLine",
    "Grid3",
    "Coefficients",
    "LineOperator",
    "SpatialOperator",
    "BoundarySpec",
    "metric_coefficients",
    "line_operator",
    "assemble_line",
    "assemble_line_r",
    "assemble_line_v",
    "assemble_line_y",
    "apply_mixed",
    "build_operator",
    "dirichlet_data",
    "boundary_rows",
    "zcb_boundary_spec",
    "caplet_boundary_spec",
    "write_line_csv",
]

FACES = ("r0", "r_inf", "v0", "v_inf", "y0", "y_inf")
_FACE_AXIS = {"r0": (0, 0), "r_inf": (0, -1), "v0": (1, 0), "v_inf": (1, -1), "y0": (2, 0), "y_inf": (2, -1)}


@dataclass
class TriDiagLine:
    """One tridiagonal line system. ``lower[0]`` and ``upper[-1]`` are unused (0)."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rhs_adjust: np.ndarray

    def __post_init__(self):
        n = len(self.diag)
        if not (len(self.lower) == len(self.upper) == len(self.rhs_adjust) == n):
            raise ValueError("line arrays must share one length")

    @property
    def n(self) -> int:
        return len(self.diag)

    def matvec(self, u):
        u = np.asarray(u, dtype=float)
        out = self.diag * u
        out[1:] += self.lower[1:] * u[:-1]
        out[:-1] += self.upper[:-1] * u[1:]
        return out

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower[1:], -1) + np.diag(self.upper[:-1], 1)


@dataclass
class Grid3:
    """Solution values on the (nr, nv, ny) mesh at one time level."""

    data: np.ndarray
    axes: Sequence[Axis]
    time: float = 0.0

    def __post_init__(self):
        shape = tuple(ax.n for ax in self.axes)
        if self.data.shape != shape:
            raise ValueError(f"grid data shape {self.data.shape} does not match axes {shape}")
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError("grid holds non-finite values")

    @property
    def shape(self):
        return self.data.shape


@dataclass
class Coefficients:
    """Metric-corrected coefficients g1..g6 and the discount rate r0*r on the mesh."""

    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray
    g4: np.ndarray
    g5: np.ndarray
    g6: np.ndarray
    reaction: np.ndarray


def _mesh_arrays(axes: Sequence[Axis]):
    ar, av, ay = axes
    return (ar.z[:, None, None], av.z[None, :, None], ay.z[None, None, :])


def metric_coefficients(t: float, axes: Sequence[Axis], params: ModelParams, curve: InitialCurve,
                        r0: float) -> Coefficients:
    ar, av, ay = axes
    R, V, Y = _mesh_arrays(axes)
    shape = (ar.n, av.n, ay.n)
    h1, h2, h3, h4, h5, h6 = rescaled_coefficients(StatePoint(R, V, Y, t), params, curve, r0)
    jr, j2r = ar.j1[:, None, None], ar.j2[:, None, None]
    jv, j2v = av.j1[None, :, None], av.j2[None, :, None]
    jy = ay.j1[None, None, :]

    def full(a):
        return np.broadcast_to(np.asarray(a, dtype=float), shape).copy()

    return Coefficients(
        g1=full(h1 / jr**2),
        g2=full(h2 / jv**2),
        g3=full(h3 / (jr * jv)),
        g4=full(h4 / jr - h1 * j2r / jr**3),
        g5=full(h5 / jv - h2 * j2v / jv**3),
        g6=full(h6 / jy),
        reaction=full(r0 * R),
    )


@dataclass
class LineOperator:
    """Tridiagonal operator acting along one grid axis.

    Coefficient arrays are stored with the acting axis moved to the front.
    ``extra`` is the (row 0, column 2) entry of a second-order one-sided row.
    """

    axis: int
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    extra: np.ndarray

    def apply(self, U: np.ndarray) -> np.ndarray:
        W = np.moveaxis(U, self.axis, 0)
        out = self.diag * W
        out[1:] += self.lower[1:] * W[:-1]
        out[:-1] += self.upper[:-1] * W[1:]
        if W.shape[0] > 2:
            out[0] += self.extra * W[2]
        return np.moveaxis(out, 0, self.axis)

    def solve(self, rhs: np.ndarray, c: float, mask: Optional[np.ndarray] = None) -> np.ndarray:
        """Solve (I - c L) Z = rhs; rows flagged in ``mask`` become identity rows."""
        d = np.moveaxis(rhs, self.axis, 0).copy()
        a = -c * self.lower
        b = 1.0 - c * self.diag
        u = -c * self.upper
        e = -c * self.extra
        if mask is not None:
            m = np.moveaxis(mask, self.axis, 0)
            a = np.where(m, 0.0, a)
            b = np.where(m, 1.0, b)
            u = np.where(m, 0.0, u)
            e = np.where(m[0], 0.0, e)
        if d.shape[0] > 2 and np.any(e != 0):
            # eliminate the (0, 2) entry with row 1 so the system stays tridiagonal
            u1 = u[1]
            usable = u1 != 0
            factor = np.where(usable, e / np.where(usable, u1, 1.0), 0.0)
            b = b.copy()
            u = u.copy()
            b[0] = b[0] - factor * a[1]
            u[0] = u[0] - factor * b[1]
            d[0] = d[0] - factor * d[1]
            # degenerate row 1: lag the column-2 value from the right-hand side
            d[0] = d[0] - np.where(usable, 0.0, e) * d[2]
        z = solve_tridiagonal(a, b, u, d)
        return np.moveaxis(z, 0, self.axis)

    def line(self, index: tuple) -> "LineOperator":
        """Restrict to a single line; ``index`` addresses the remaining axes."""
        sl = (slice(None),) + tuple(index)
        return LineOperator(0, self.lower[sl], self.diag[sl], self.upper[sl], self.extra[tuple(index)])


def line_operator(diff, conv, dx: float, axis: int = 0, reaction=None, low_order: int = 1) -> LineOperator:
    """Centered line operator diff*d_xx + conv*d_x - reaction, one-sided at the low end.

    ``diff``, ``conv`` and ``reaction`` are arrays whose axis ``axis`` runs
    along the line.  The last row is left empty (Dirichlet face).
    """
    if low_order not in (1, 2):
        raise ValueError("low_order must be 1 or 2")
    D = np.moveaxis(np.asarray(diff, dtype=float), axis, 0)
    Cv = np.moveaxis(np.asarray(conv, dtype=float), axis, 0)
    Rx = 0.0 if reaction is None else np.moveaxis(np.asarray(reaction, dtype=float), axis, 0)
    D, Cv = np.broadcast_arrays(D, Cv)
    Rx = np.broadcast_to(Rx, D.shape)
    inv2 = 1.0 / dx**2
    half = 0.5 / dx
    lower = D * inv2 - Cv * half
    diag = -2.0 * D * inv2 - Rx
    upper = D * inv2 + Cv * half
    extra = np.zeros(D.shape[1:])
    # low face: degenerate equation, convection only
    if low_order == 1:
        diag[0] = -Cv[0] / dx - Rx[0]
        upper[0] = Cv[0] / dx
    else:
        diag[0] = -3.0 * Cv[0] * half - Rx[0]
        upper[0] = 4.0 * Cv[0] * half
        extra = -Cv[0] * half
    lower[0] = 0.0
    lower[-1] = diag[-1] = upper[-1] = 0.0
    return LineOperator(axis, lower, diag, upper, np.asarray(extra, dtype=float))


def assemble_line(diff, conv, dx: float, c: float, n: Optional[int] = None, reaction=None, low_order: int = 1,
                  dirichlet_low: bool = False, dirichlet_high: bool = True,
                  low_value: float = 0.0, high_value: float = 0.0) -> TriDiagLine:
    """Rows of I - c L for a single line (debug and test surface).

    Scalar coefficients need ``n``.  A second-order low row is shown after
    elimination of its (0, 2) entry.
    """
    if n is None:
        sizes = [np.size(a) for a in (diff, conv, reaction) if a is not None and np.ndim(a)]
        if not sizes:
            raise ValueError("line length n is required when all coefficients are scalars")
        n = sizes[0]
    if n < 3:
        raise ValueError("a line needs at least 3 nodes")
    diff = np.broadcast_to(np.asarray(diff, dtype=float), (n,))
    conv = np.broadcast_to(np.asarray(conv, dtype=float), (n,))
    react = None if reaction is None else np.broadcast_to(np.asarray(reaction, dtype=float), (n,))
    op = line_operator(diff, conv, dx, 0, react, low_order)
    lower = -c * op.lower
    diag = 1.0 - c * op.diag
    upper = -c * op.upper
    rhs = np.zeros(n)
    e = float(-c * op.extra)
    if e != 0.0 and not dirichlet_low and upper[1] != 0.0:
        m = e / upper[1]
        diag[0] -= m * lower[1]
        upper[0] -= m * diag[1]
    if dirichlet_low:
        lower[0], diag[0], upper[0], rhs[0] = 0.0, 1.0, 0.0, low_value
    if dirichlet_high:
        lower[-1], diag[-1], upper[-1], rhs[-1] = 0.0, 1.0, 0.0, high_value
    lower[0] = 0.0
    upper[-1] = 0.0
    return TriDiagLine(lower, diag, upper, rhs)


def apply_mixed(U: np.ndarray, g3: np.ndarray, axes: Sequence[Axis]) -> np.ndarray:
    """g3 * d_rv U with the four-corner stencil; zero on every face."""
    out = np.zeros_like(U)
    ar, av = axes[0], axes[1]
    if ar.n < 3 or av.n < 3:
        return out
    scale = 1.0 / (4.0 * ar.dx * av.dx)
    cross = U[2:, 2:] - U[2:, :-2] - U[:-2, 2:] + U[:-2, :-2]
    out[1:-1, 1:-1] = g3[1:-1, 1:-1] * cross * scale
    return out


@dataclass
class SpatialOperator:
    """All split operators at one time level."""

    axes: Sequence[Axis]
    coeffs: Coefficients
    Lr: Optional[LineOperator]
    Lv: Optional[LineOperator]
    Ly: Optional[LineOperator]

    @property
    def implicit(self):
        return [op for op in (self.Lr, self.Lv, self.Ly) if op is not None]

    def apply_mixed(self, U):
        return apply_mixed(U, self.coeffs.g3, self.axes)

    def apply(self, U: np.ndarray) -> np.ndarray:
        out = self.apply_mixed(U)
        for op in self.implicit:
            out += op.apply(U)
        return out


def build_operator(t: float, axes: Sequence[Axis], params: ModelParams, curve: InitialCurve,
                   r0: float, y_order: int = 2, r_order: int = 2) -> SpatialOperator:
    ar, av, ay = axes
    co = metric_coefficients(t, axes, params, curve, r0)
    Lr = line_operator(co.g1, co.g4, ar.dx, 0, None, r_order) if ar.n > 1 else None
    Lv = line_operator(co.g2, co.g5, av.dx, 1, None, 1) if av.n > 1 else None
    if ay.n > 1:
        Ly = line_operator(np.zeros_like(co.g6), co.g6, ay.dx, 2, co.reaction, y_order)
    else:
        Ly = None
    if Ly is None:
        raise ValueError("the y direction must be resolved (ny >= 3)")
    return SpatialOperator(axes, co, Lr, Lv, Ly)


DirichletFn = Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class BoundarySpec:
    """Face rules for one instrument.

    Faces listed in ``dirichlet`` take prescribed values (function of calendar
    time and scaled coordinates); every other face carries a one-sided row
    of the degenerate equation.
    """

    kind: str
    dirichlet: Dict[str, DirichletFn] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.dirichlet) - set(FACES)
        if unknown:
            raise ValueError(f"unsupported face(s): {sorted(unknown)}")

    def rule(self, face: str) -> str:
        if face not in FACES:
            raise ValueError(f"unsupported face {face!r}")
        return "dirichlet" if face in self.dirichlet else "one_sided"


def _face_slice(face: str):
    axis, pos = _FACE_AXIS[face]
    sl = [slice(None)] * 3
    sl[axis] = pos
    return tuple(sl)


def dirichlet_data(spec: BoundarySpec, t: float, axes: Sequence[Axis], out: Optional[np.ndarray] = None):
    """Mask of Dirichlet nodes and their prescribed values at calendar time t."""
    shape = tuple(ax.n for ax in axes)
    mask = np.zeros(shape, dtype=bool)
    values = np.zeros(shape) if out is None else out
    R, V, Y = (np.broadcast_to(a, shape) for a in _mesh_arrays(axes))
    order = ("r0", "v0", "y0", "r_inf", "y_inf", "v_inf")
    for face in order:
        fn = spec.dirichlet.get(face)
        if fn is None:
            continue
        axis, _ = _FACE_AXIS[face]
        if axes[axis].n == 1:
            continue
        sl = _face_slice(face)
        mask[sl] = True
        values[sl] = np.broadcast_to(fn(t, R[sl], V[sl], Y[sl]), R[sl].shape)
    return mask, values


def boundary_rows(spec: BoundarySpec, face: str, t: float, axes: Sequence[Axis],
                  y_order: int = 2, r_order: int = 2) -> dict:
    """Describe the rows used on one face.

    Dirichlet faces return ``{"rule": "dirichlet", "values": array}``;
    the others return the one-sided stencil weights in computational units.
    """
    rule = spec.rule(face)
    axis, _ = _FACE_AXIS[face]
    if rule == "dirichlet":
        shape = tuple(ax.n for ax in axes)
        R, V, Y = (np.broadcast_to(a, shape) for a in _mesh_arrays(axes))
        sl = _face_slice(face)
        return {"rule": "dirichlet", "values": np.broadcast_to(spec.dirichlet[face](t, R[sl], V[sl], Y[sl]), R[sl].shape)}
    if face.endswith("_inf"):
        raise ValueError(f"face {face!r} needs a Dirichlet rule")
    order = {0: r_order, 1: 1, 2: y_order}[axis]
    weights = (-1.0, 1.0, 0.0) if order == 1 else (-1.5, 2.0, -0.5)
    return {"rule": "one_sided", "order": order, "weights": weights, "dx": axes[axis].dx}


def zcb_boundary_spec(T: float, curve: InitialCurve, params: ModelParams, r0: float) -> BoundarySpec:
    """Zero coupon bond: closed-form values on the far faces."""

    def closed(t, R, V, Y):
        x = r0 * R - curve.forward(t)
        return zcb_closed_form(t, T, x, r0 * r0 * Y, curve, params.kappa)

    return BoundarySpec("zcb", {"r_inf": closed, "y_inf": closed, "v_inf": closed})


def caplet_boundary_spec(spec: CapletSpec, curve: InitialCurve, params: ModelParams, r0: float) -> BoundarySpec:
    def zero(t, R, V, Y):
        return np.zeros(np.shape(R))

    def v_far(t, R, V, Y):
        x = r0 * R - curve.forward(t)
        y = r0 * r0 * Y
        return (zcb_closed_form(t, spec.T, x, y, curve, params.kappa)
                - zcb_closed_form(t, spec.T_M, x, y, curve, params.kappa))

    return BoundarySpec("caplet", {"r_inf": zero, "y_inf": zero, "v_inf": v_far})


def _line_from(op: LineOperator, index: tuple, c: float, mask_line=None, values_line=None) -> TriDiagLine:
    sub = op.line(index)
    n = sub.diag.shape[0]
    lower = -c * sub.lower
    diag = 1.0 - c * sub.diag
    upper = -c * sub.upper
    e = float(-c * sub.extra)
    if e != 0.0 and n > 2 and upper[1] != 0.0 and not (mask_line is not None and mask_line[0]):
        m = e / upper[1]
        diag[0] -= m * lower[1]
        upper[0] -= m * diag[1]
    rhs = np.zeros(n)
    if mask_line is not None:
        lower = np.where(mask_line, 0.0, lower)
        diag = np.where(mask_line, 1.0, diag)
        upper = np.where(mask_line, 0.0, upper)
        if values_line is not None:
            rhs = np.where(mask_line, values_line, 0.0)
    lower[0] = 0.0
    upper[-1] = 0.0
    return TriDiagLine(lower, diag, upper, rhs)


def _assemble(op: SpatialOperator, attr: str, index: tuple, dt: float, theta_cn: float, axis: int,
              spec: Optional[BoundarySpec], t: float) -> TriDiagLine:
    line_op = getattr(op, attr)
    if line_op is None:
        raise ValueError(f"operator {attr} is absent on a collapsed axis")
    mask_line = values_line = None
    if spec is not None:
        mask, values = dirichlet_data(spec, t, op.axes)
        sl = list(index)
        sl.insert(axis, slice(None))
        mask_line, values_line = mask[tuple(sl)], values[tuple(sl)]
    return _line_from(line_op, index, theta_cn * dt, mask_line, values_line)


def assemble_line_r(t, j, k, op: SpatialOperator, dt, theta_cn=0.5, spec=None) -> TriDiagLine:
    """Rows of I - theta dt L_r on the line (:, j, k)."""
    return _assemble(op, "Lr", (j, k), dt, theta_cn, 0, spec, t)


def assemble_line_v(t, i, k, op: SpatialOperator, dt, theta_cn=0.5, spec=None) -> TriDiagLine:
    """Rows of I - theta dt L_v on the line (i, :, k)."""
    return _assemble(op, "Lv", (i, k), dt, theta_cn, 1, spec, t)


def assemble_line_y(t, i, j, op: SpatialOperator, dt, theta_cn=0.5, spec=None) -> TriDiagLine:
    """Rows of I - theta dt L_y on the line (i, j, :)."""
    return _assemble(op, "Ly", (i, j), dt, theta_cn, 2, spec, t)


def write_line_csv(line: TriDiagLine, fh=None) -> str:
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "lower", "diag", "upper", "rhs"])
    for i in range(line.n):
        w.writerow([i, repr(float(line.lower[i])), repr(float(line.diag[i])),
                    repr(float(line.upper[i])), repr(float(line.rhs_adjust[i]))])
    return buf.getvalue() if fh is None else ""
