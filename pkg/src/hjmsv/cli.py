"""Command line front end.

    hjmsv price        --config job.ini --out results/
    hjmsv convergence  --config job.ini --out results/
    hjmsv validate-mc  --config job.ini --seed 7 --threads 0
    hjmsv mesh-dump    --config job.ini
    hjmsv bench

Jobs are INI files; every section and key is optional and defaults to the
reference setup (flat 4% curve, caplet T=1, T_M=2 at the forward strike).
All artifacts are CSV files with a header row.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .curve import InitialCurve, load_curve
from .discretization import (
    assemble_line_r,
    assemble_line_v,
    assemble_line_y,
    build_operator,
    caplet_boundary_spec,
    write_line_csv,
    zcb_boundary_spec,
)
from .instruments import (
    MeshConfig,
    PriceResult,
    build_axes,
    default_spot,
    premium_ladder,
    price_caplet,
    price_zcb,
    write_ladder_csv,
    write_slice_csv,
)
from .mc import McConfig, characteristic_price, simulate_caplet, simulate_zcb
from .mesh import write_axis_csv
from .model import CapletSpec, ModelParams, StatePoint
from .solver import DivergenceError, SolverConfig, write_history_csv
from .tridiag import SingularPivotError

__all__ = ["JobConfig", "load_job", "main"]

_MODEL_KEYS = {"kappa": "kappa", "lambda": "lambda_fn", "gamma": "gamma_fn", "epsilon": "eps_fn",
               "theta": "theta", "rho": "rho"}


@dataclass
class JobConfig:
    instrument: str = "caplet"
    maturity: float = 1.0
    payment: float = 2.0
    strike: Optional[float] = None
    strikes: List[float] = field(default_factory=list)
    curve: InitialCurve = None
    curve_source: str = "flat 1.04"
    params: ModelParams = field(default_factory=ModelParams)
    mesh: MeshConfig = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    mc: McConfig = field(default_factory=McConfig)
    spot: Optional[StatePoint] = None
    mesh_sweep: List[tuple] = field(default_factory=list)
    step_sweep: List[int] = field(default_factory=lambda: [6, 12, 24])
    out_dir: Path = Path("hjmsv_out")

    def caplet_spec(self) -> CapletSpec:
        strike = self.strike if self.strike is not None else forward_strike(self.curve, self.maturity, self.payment)
        return CapletSpec(self.maturity, self.payment, strike)


def forward_strike(curve: InitialCurve, T: float, T_M: float) -> float:
    """Simple forward rate between T and T_M (the at-the-money strike)."""
    if not T_M > T:
        raise ValueError(f"payment date T_M must exceed expiry T (T_M={T_M}, T={T})")
    return float((curve.discount(T) / curve.discount(T_M) - 1.0) / (T_M - T))


def _floats(text: str) -> List[float]:
    return [float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()]


def _mesh_list(text: str) -> List[tuple]:
    out = []
    for tok in text.replace(";", ",").split(","):
        tok = tok.strip().lower()
        if tok:
            out.append(tuple(int(n) for n in tok.split("x")))
    return out


def _typed(section, cls, rename=None):
    """Build keyword arguments for dataclass ``cls`` from an INI section."""
    kinds = {f.name: f.type for f in fields(cls)}
    kw = {}
    for key, raw in section.items():
        name = (rename or {}).get(key, key)
        if name not in kinds:
            raise ValueError(f"unknown key {key!r} in section [{section.name}]")
        kind = str(kinds[name])
        if "bool" in kind:
            kw[name] = section.getboolean(key)
        elif "int" in kind and "float" not in kind:
            kw[name] = section.getint(key)
        elif "str" in kind:
            kw[name] = raw.strip()
        else:
            kw[name] = section.getfloat(key)
    return kw


def load_job(path: Optional[str] = None) -> JobConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    base = Path(".")
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        parser.read(p)
        base = p.parent
    known = {"instrument", "curve", "model", "mesh", "solver", "mc", "spot", "convergence", "output"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ValueError(f"unknown config section(s): {sorted(unknown)}")
    job = JobConfig()

    if parser.has_section("instrument"):
        sec = parser["instrument"]
        job.instrument = sec.get("type", job.instrument).strip().lower()
        job.maturity = sec.getfloat("maturity", job.maturity)
        job.payment = sec.getfloat("payment", job.payment)
        if "strike" in sec:
            job.strike = sec.getfloat("strike")
        if "strikes" in sec:
            job.strikes = _floats(sec["strikes"])
    if job.instrument not in ("zcb", "caplet"):
        raise ValueError(f"instrument type must be 'zcb' or 'caplet', got {job.instrument!r}")
    if job.instrument == "zcb" and not parser.has_option("instrument", "maturity"):
        job.maturity = 20.0

    job.curve = InitialCurve.flat()
    if parser.has_section("curve"):
        sec = parser["curve"]
        if "file" in sec:
            src = Path(sec["file"].strip())
            src = src if src.is_absolute() else base / src
            if not src.is_file():
                raise FileNotFoundError(f"curve file not found: {src}")
            job.curve, job.curve_source = load_curve(src), str(src)
        elif "flat_base" in sec:
            b = sec.getfloat("flat_base")
            job.curve, job.curve_source = InitialCurve.flat(b), f"flat {b}"

    if parser.has_section("model"):
        job.params = ModelParams(**_typed(parser["model"], _ModelFields, _MODEL_KEYS))

    mesh_kw = _typed(parser["mesh"], MeshConfig) if parser.has_section("mesh") else {}
    if job.instrument == "zcb":
        job.mesh = MeshConfig.zcb(**mesh_kw)
    else:
        job.mesh = MeshConfig.caplet(**mesh_kw)
    if parser.has_section("solver"):
        job.solver = SolverConfig(**_typed(parser["solver"], SolverConfig))
    if parser.has_section("mc"):
        job.mc = McConfig(**_typed(parser["mc"], McConfig))
    if parser.has_section("spot"):
        sec = parser["spot"]
        d = default_spot(job.curve)
        job.spot = StatePoint(sec.getfloat("r", d.r), sec.getfloat("v", d.v), sec.getfloat("y", d.y))
    if parser.has_section("convergence"):
        sec = parser["convergence"]
        if "meshes" in sec:
            job.mesh_sweep = _mesh_list(sec["meshes"])
        if "steps_per_year" in sec:
            job.step_sweep = [int(s) for s in _floats(sec["steps_per_year"])]
    if parser.has_section("output") and "dir" in parser["output"]:
        job.out_dir = Path(parser["output"]["dir"].strip())

    if job.instrument == "caplet":
        job.caplet_spec()
    elif job.maturity < 0:
        raise ValueError(f"bond maturity must be >= 0, got {job.maturity}")
    return job


@dataclass
class _ModelFields:
    kappa: float = 0.0
    lambda_fn: float = 0.0
    gamma_fn: float = 0.0
    eps_fn: float = 0.0
    theta: float = 0.0
    rho: float = 0.0


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _rows(header: Sequence[str], rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _price(job: JobConfig, mesh: Optional[MeshConfig] = None, solver: Optional[SolverConfig] = None) -> PriceResult:
    mesh = mesh or job.mesh
    solver = solver or job.solver
    if job.instrument == "zcb":
        return price_zcb(job.maturity, job.curve, job.params, mesh, solver, job.spot)
    return price_caplet(job.caplet_spec(), job.curve, job.params, mesh, solver, job.spot)


def cmd_price(job: JobConfig, threads: int) -> int:
    out = job.out_dir
    res = _price(job)
    r0 = job.mesh.r0
    header = ["instrument", "maturity_years", "strike_rate", "price", "closed_form", "error", "n_steps"]
    strike = "" if job.instrument == "zcb" else job.caplet_spec().K
    ref = "" if res.reference is None else res.reference
    err = "" if res.error is None else res.error
    _write(out / "price.csv", _rows(header, [[job.instrument, job.maturity, strike, res.price, ref, err,
                                               res.report.n_steps]]))
    axes = res.axes
    _write(out / "price_slice_y0.csv", write_slice_csv(res.grid.data, axes, r0, "price"))
    _write(out / "rho_slice_y0.csv", write_slice_csv(res.rho_grid, axes, r0, "rho"))
    _write(out / "vega_slice_y0.csv", write_slice_csv(res.vega_grid, axes, r0, "vega"))
    _write(out / "solve_report.csv", write_history_csv(res.report))
    if job.instrument == "caplet" and job.strikes:
        ladder = premium_ladder(job.strikes, job.maturity, job.payment, job.curve, job.params,
                                job.mesh, job.solver, job.spot, workers=threads)
        _write(out / "premium_by_strike.csv", write_ladder_csv(ladder))
    print(f"price {res.price:.12g}  wall time {res.report.wall_time:.3f} s")
    if res.error is not None:
        print(f"closed form {res.reference:.12g}  error {res.error:.3e}")
    return 0


def _observed_orders(errors: Sequence[Optional[float]]) -> List[str]:
    """log2 of successive error ratios (mesh or step count doubles each row)."""
    out = [""]
    for a, b in zip(errors[:-1], errors[1:]):
        ok = a is not None and b is not None and a != 0 and b != 0
        out.append(repr(math.log2(abs(a) / abs(b))) if ok else "")
    return out


def cmd_convergence(job: JobConfig, threads: int) -> int:
    zcb = job.instrument == "zcb"
    sweep = job.mesh_sweep or ([(50, 20), (100, 40), (200, 80)] if zcb else [(50, 40, 40), (100, 40, 40), (200, 40, 40)])
    rows = []

    def mesh_for(dims):
        if zcb:
            if len(dims) != 2:
                raise ValueError("bond sweeps take r x y meshes such as 100x40")
            return replace(job.mesh, nr=dims[0], ny=dims[1])
        if len(dims) != 3:
            raise ValueError("caplet sweeps take r x v x y meshes such as 100x40x40")
        return replace(job.mesh, nr=dims[0], nv=dims[1], ny=dims[2])

    def errors(prices):
        if zcb:
            return [p - ref for p in prices]
        return [None] + [q - p for p, q in zip(prices[:-1], prices[1:])]

    ref = price_zcb(job.maturity, job.curve, job.params, job.mesh, job.solver, job.spot).reference if zcb else None
    spy = job.solver.steps_per_year
    prices = [_price(job, mesh_for(d)).price for d in sweep]
    errs = errors(prices)
    for d, p, e, o in zip(sweep, prices, errs, _observed_orders(errs)):
        rows.append(["mesh", "x".join(map(str, d)), spy, p, "" if e is None else e, o])

    ref_mesh = job.mesh
    steps = sorted(job.step_sweep)
    sprices = [_price(job, ref_mesh, replace(job.solver, steps_per_year=s, n_steps=None)).price for s in steps]
    serrs = errors(sprices)
    dims = f"{ref_mesh.nr}x{ref_mesh.ny}" if zcb else f"{ref_mesh.nr}x{ref_mesh.nv}x{ref_mesh.ny}"
    for s_, p, e, o in zip(steps, sprices, serrs, _observed_orders(serrs)):
        rows.append(["steps", dims, s_, p, "" if e is None else e, o])
    label = "error_vs_closed_form" if zcb else "delta_vs_previous"
    _write(job.out_dir / "convergence.csv",
           _rows(["sweep", "mesh", "steps_per_year", "price", label, "observed_order"], rows))
    for row in rows:
        print(",".join(str(x) for x in row))
    return 0


def cmd_validate_mc(job: JobConfig, threads: int) -> int:
    mc = replace(job.mc, workers=max(1, threads))
    res = _price(job)
    spot = job.spot or default_spot(job.curve)
    if abs(spot.y) > 0 or abs(spot.v - mc.v0) > 0 or abs(spot.r - float(job.curve.forward(0.0))) > 0:
        raise ValueError("Monte Carlo validation starts from the default spot (r = f(0,0), v = v0, y = 0)")
    if job.instrument == "zcb":
        est = simulate_zcb(job.maturity, job.curve, job.params, mc)
    else:
        est = simulate_caplet(job.caplet_spec(), job.curve, job.params, mc)
    z = 0.0 if est.std_error == 0 and res.price == est.mean else (
        (res.price - est.mean) / est.std_error if est.std_error > 0 else math.inf)
    deterministic = bool(np.all(np.asarray(job.params.lam(np.linspace(0.0, job.maturity, 9))) == 0.0))
    ode = ""
    if deterministic:
        spec = None if job.instrument == "zcb" else job.caplet_spec()
        ode = characteristic_price(job.curve, job.params, job.maturity, spec)
        passed = abs(res.price - ode) <= 1e-6 and abs(est.mean - ode) <= 1e-6
    else:
        passed = abs(z) <= 3.0
    status = "PASS" if passed else "FAIL"
    _write(job.out_dir / "mc.csv", _rows(["n_paths", "mean", "std_error"], [[est.n_paths, est.mean, est.std_error]]))
    _write(job.out_dir / "validate_mc.csv",
           _rows(["pde_price", "mc_mean", "mc_std_error", "z_score", "ode_price", "status"],
                 [[res.price, est.mean, est.std_error, z, ode, status]]))
    print(f"pde {res.price:.10g}  mc {est.mean:.10g} +- {est.std_error:.3g}  z {z:.3f}  {status}")
    return 0 if passed else 2


def cmd_mesh_dump(job: JobConfig, threads: int) -> int:
    spot = job.spot or default_spot(job.curve)
    r0 = job.mesh.r0
    if job.instrument == "zcb":
        k_r = job.mesh.k_r if job.mesh.k_r is not None else spot.r / r0
        boundary = zcb_boundary_spec(job.maturity, job.curve, job.params, r0)
    else:
        spec = job.caplet_spec()
        k_r = job.mesh.k_r if job.mesh.k_r is not None else spec.K / r0
        boundary = caplet_boundary_spec(spec, job.curve, job.params, r0)
    axes = build_axes(job.mesh, spot, k_r)
    for name, ax in zip("rvy", axes):
        _write(job.out_dir / f"axis_{name}.csv", write_axis_csv(ax))
    n_steps = job.solver.steps_for(job.maturity)
    if n_steps == 0:
        return 0
    dt = job.maturity / n_steps
    t_half = job.maturity - 0.5 * dt
    op = build_operator(t_half, axes, job.params, job.curve, r0, job.solver.y_boundary_order,
                        job.solver.r_boundary_order)
    t_next = job.maturity - dt
    mid = [ax.n // 2 for ax in axes]
    theta = job.solver.theta_cn
    _write(job.out_dir / "line_y.csv",
           write_line_csv(assemble_line_y(t_next, mid[0], mid[1], op, dt, theta, boundary)))
    _write(job.out_dir / "line_r.csv",
           write_line_csv(assemble_line_r(t_next, mid[1], mid[2], op, dt, theta, boundary)))
    if axes[1].n > 1:
        _write(job.out_dir / "line_v.csv",
               write_line_csv(assemble_line_v(t_next, mid[0], mid[2], op, dt, theta, boundary)))
    print(f"wrote axes {tuple(ax.n for ax in axes)} to {job.out_dir}")
    return 0


def cmd_bench(job: JobConfig, threads: int, repeats: int = 3) -> int:
    spec = CapletSpec(1.0, 2.0, forward_strike(job.curve, 1.0, 2.0))
    mesh = replace(job.mesh, nr=100, nv=50, ny=50) if job.instrument == "caplet" else MeshConfig.caplet(100, 50, 50)
    solver = replace(job.solver, steps_per_year=12, n_steps=None)
    rows = []
    for k in range(repeats):
        start = time.perf_counter()
        res = price_caplet(spec, job.curve, job.params, mesh, solver)
        rows.append([k, "100x50x50", res.report.n_steps, time.perf_counter() - start, res.price])
    _write(job.out_dir / "bench.csv", _rows(["run", "mesh", "n_steps", "wall_time_s", "price"], rows))
    best = min(r[3] for r in rows)
    print(f"caplet T=1 T_M=2, 100x50x50, 12 steps: best of {repeats} {best:.3f} s")
    return 0


COMMANDS = {
    "price": cmd_price,
    "convergence": cmd_convergence,
    "validate-mc": cmd_validate_mc,
    "mesh-dump": cmd_mesh_dump,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjmsv", description="Finite difference HJM stochastic volatility pricer")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", metavar="PATH", help="INI job file (defaults to the reference setup)")
    ap.add_argument("--seed", type=int, help="Monte Carlo root seed")
    ap.add_argument("--out", metavar="DIR", help="output directory for CSV artifacts")
    ap.add_argument("--threads", type=int, default=1, metavar="N", help="worker count, 0 = all cores")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = load_job(args.config)
        if args.seed is not None:
            job.mc = replace(job.mc, seed=args.seed)
        if args.out is not None:
            job.out_dir = Path(args.out)
        if args.threads < 0:
            raise ValueError("--threads must be >= 0")
        threads = args.threads or (os.cpu_count() or 1)
        return COMMANDS[args.command](job, threads)
    except (ValueError, FileNotFoundError, ArithmeticError, DivergenceError, SingularPivotError,
            configparser.Error) as exc:
        print(f"hjmsv {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
