"""Monte Carlo pricer for the same SDE system, used as an independent check.

    dx = (-kappa x + y) dt + eta dW
    dy = (eta^2 - 2 kappa y) dt
    dv = theta (1 - v) dt + eps sqrt(v) dZ,   dW dZ = rho dt
    eta = sqrt(v) lambda(t) r^gamma(t),       r = x + f(0, t)

Variance uses full-truncation Euler, y the integrating-factor update.
Discounting integrates only x numerically; the curve part is exact.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .curve import InitialCurve
from .model import CapletSpec, ModelParams, zcb_closed_form

__all__ = [
    "McConfig",
    "McEstimate",
    "correlated_increments",
    "simulate_paths",
    "simulate_caplet",
    "simulate_zcb",
    "characteristic_price",
]


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 200_000
    steps_per_year: int = 96
    seed: int = 20070101
    full_truncation: bool = True
    batch_size: int = 50_000
    workers: int = 1
    v0: float = 1.0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.steps_per_year < 1:
            raise ValueError("steps_per_year must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int


def correlated_increments(rng: np.random.Generator, n: int, rho: float, sqrt_dt: float = 1.0):
    """Pair of Brownian increments (dW, dZ) with correlation rho."""
    w1 = rng.standard_normal(n)
    w2 = rng.standard_normal(n)
    dW = sqrt_dt * w1
    dZ = sqrt_dt * (rho * w1 + math.sqrt(1.0 - rho * rho) * w2)
    return dW, dZ


def simulate_paths(horizon: float, curve: InitialCurve, params: ModelParams, n: int,
                   rng: np.random.Generator, cfg: McConfig):
    """Simulate n paths to ``horizon``.

    Returns (x_T, y_T, v_T, discount) with discount = exp(-int_0^T r dt).
    """
    n_steps = max(1, math.ceil(horizon * cfg.steps_per_year - 1e-9))
    dt = horizon / n_steps
    sqrt_dt = math.sqrt(dt)
    kappa, theta, rho = params.kappa, params.theta, params.rho
    decay_y = math.exp(-2.0 * kappa * dt)
    weight_y = math.exp(-kappa * dt) * dt

    x = np.zeros(n)
    y = np.zeros(n)
    v = np.full(n, float(cfg.v0))
    x_integral = np.zeros(n)
    for k in range(n_steps):
        t = k * dt
        lam, gam, eps = params.lam(t), params.gamma(t), params.eps(t)
        v_pos = np.maximum(v, 0.0) if cfg.full_truncation else np.abs(v)
        r = np.maximum(x + curve.forward(t), 0.0)
        eta = np.sqrt(v_pos) * lam * r**gam
        dW, dZ = correlated_increments(rng, n, rho, sqrt_dt)
        x_new = x + (-kappa * x + y) * dt + eta * dW
        y = y * decay_y + eta * eta * weight_y
        v = v + theta * (1.0 - v_pos) * dt + eps * np.sqrt(v_pos) * dZ
        x_integral += 0.5 * (x + x_new) * dt
        x = x_new
    discount = curve.discount(horizon) * np.exp(-x_integral)
    return x, y, v, discount


def _run_batches(payoff: Callable[[np.random.Generator, int], np.ndarray], cfg: McConfig) -> McEstimate:
    n_batches = math.ceil(cfg.n_paths / cfg.batch_size)
    sizes = [cfg.batch_size] * (n_batches - 1) + [cfg.n_paths - cfg.batch_size * (n_batches - 1)]
    seeds = np.random.SeedSequence(cfg.seed).spawn(n_batches)

    def one(i):
        values = payoff(np.random.default_rng(seeds[i]), sizes[i])
        return values.size, float(values.sum()), float(np.sum((values - values.mean()) ** 2)), float(values.mean())

    if cfg.workers > 1 and n_batches > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(one, range(n_batches)))
    else:
        parts = [one(i) for i in range(n_batches)]

    # pairwise merge of (count, mean, M2) in batch order
    count, mean, m2 = 0, 0.0, 0.0
    for nb, _, m2b, meanb in parts:
        delta = meanb - mean
        total = count + nb
        mean += delta * nb / total
        m2 += m2b + delta * delta * count * nb / total
        count = total
    var = m2 / (count - 1) if count > 1 else 0.0
    return McEstimate(mean=mean, std_error=math.sqrt(max(var, 0.0) / count), n_paths=count)


def simulate_caplet(spec: CapletSpec, curve: InitialCurve, params: ModelParams,
                    cfg: Optional[McConfig] = None) -> McEstimate:
    cfg = cfg or McConfig()

    def payoff(rng, n):
        x, y, _, disc = simulate_paths(spec.T, curve, params, n, rng, cfg)
        p = zcb_closed_form(spec.T, spec.T_M, x, y, curve, params.kappa)
        return disc * np.maximum(1.0 - spec.delta_m * p, 0.0)

    return _run_batches(payoff, cfg)


def simulate_zcb(T: float, curve: InitialCurve, params: ModelParams, cfg: Optional[McConfig] = None) -> McEstimate:
    """Estimate E[exp(-int_0^T r dt)], which must reproduce p(0, T)."""
    cfg = cfg or McConfig()
    if T <= 0:
        return McEstimate(1.0, 0.0, cfg.n_paths)

    def payoff(rng, n):
        return simulate_paths(T, curve, params, n, rng, cfg)[3]

    return _run_batches(payoff, cfg)


def characteristic_price(curve: InitialCurve, params: ModelParams, maturity: float,
                         spec: Optional[CapletSpec] = None, x0: float = 0.0, y0: float = 0.0) -> float:
    """Price along the single characteristic of the zero-volatility model.

    With lambda = 0 the state moves deterministically,
    x' = -kappa x + y, y' = -2 kappa y, and the price is the discounted
    terminal payoff (1 for a bond, the caplet payoff when ``spec`` is given).
    """
    if np.any(np.asarray(params.lam(np.linspace(0.0, maturity, 9))) != 0.0):
        raise ValueError("characteristic pricing needs lambda == 0")
    if maturity <= 0:
        state = np.array([x0, y0, 0.0])
    else:
        kappa = params.kappa

        def rhs(t, s):
            x, y, _ = s
            return [-kappa * x + y, -2.0 * kappa * y, x]

        sol = solve_ivp(rhs, (0.0, maturity), [x0, y0, 0.0], method="DOP853", rtol=1e-12, atol=1e-14)
        state = sol.y[:, -1]
    x_T, y_T, x_int = state
    discount = float(curve.discount(maturity)) * math.exp(-x_int)
    if spec is None:
        return discount
    p = float(zcb_closed_form(spec.T, spec.T_M, x_T, y_T, curve, params.kappa))
    return discount * max(1.0 - spec.delta_m * p, 0.0)
