"""Single-factor HJM model with stochastic volatility.

State is (r, v, y): short rate, variance factor and the auxiliary convexity
state.  Volatility of the short rate is eta = sqrt(v) * lambda(t) * r**gamma(t).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .curve import InitialCurve

__all__ = [
    "DomainError",
    "ModelParams",
    "StatePoint",
    "CapletSpec",
    "g_factor",
    "zcb_closed_form",
    "reduced_zcb_solution",
    "pde_coefficients",
    "rescaled_coefficients",
    "caplet_payoff",
    "DEFAULT_RATE_SCALE",
]

DEFAULT_RATE_SCALE = 1e-2
_KAPPA_SERIES_CUTOFF = 1e-8

TimeFunction = Union[float, Callable[[np.ndarray], np.ndarray]]


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a model formula."""


class ConstantFunction:
    """Picklable constant function of time."""

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, t):
        return np.full(np.shape(t), self.value) if np.ndim(t) else self.value

    def __repr__(self):
        return f"ConstantFunction({self.value!r})"

    def __eq__(self, other):
        return isinstance(other, ConstantFunction) and other.value == self.value

    def __hash__(self):
        return hash(self.value)


def _as_time_fn(value: TimeFunction) -> Callable:
    return value if callable(value) else ConstantFunction(value)


@dataclass(frozen=True)
class ModelParams:
    """Model constants and deterministic functions of calendar time.

    ``lambda_fn``, ``gamma_fn`` and ``eps_fn`` accept either a float or a
    callable of time; floats are wrapped into constant functions.
    """

    kappa: float = 0.001
    lambda_fn: TimeFunction = 0.15
    gamma_fn: TimeFunction = 0.9
    eps_fn: TimeFunction = 1.5
    theta: float = 0.25
    rho: float = -0.75

    def __post_init__(self):
        for name in ("lambda_fn", "gamma_fn", "eps_fn"):
            object.__setattr__(self, name, _as_time_fn(getattr(self, name)))
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if self.theta < 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")

    @classmethod
    def reference(cls) -> "ModelParams":
        """Reference parameter set used for validation runs."""
        return cls()

    def lam(self, t):
        return self.lambda_fn(t)

    def gamma(self, t):
        g = self.gamma_fn(t)
        if np.any(np.asarray(g) <= 0) or np.any(np.asarray(g) > 1):
            raise ValueError("gamma(t) must lie in (0, 1]")
        return g

    def eps(self, t):
        return self.eps_fn(t)


@dataclass(frozen=True)
class StatePoint:
    """A point (or broadcastable arrays of points) of the state space."""

    r: float
    v: float = 1.0
    y: float = 0.0
    t: float = 0.0

    def x(self, curve: InitialCurve):
        """Deviation of the short rate from the initial forward, r - f(0,t)."""
        return np.asarray(self.r) - curve.forward(self.t)


@dataclass(frozen=True)
class CapletSpec:
    """Caplet paying max(1 - delta_m * p(T, T_M), 0) at expiry T."""

    T: float
    T_M: float
    K: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"caplet expiry T must be > 0, got {self.T}")
        if not self.T_M > self.T:
            raise ValueError(f"payment date T_M must exceed expiry T (T_M={self.T_M}, T={self.T})")
        if not self.K > 0:
            raise ValueError(f"strike K must be > 0, got {self.K}")

    @property
    def delta_m(self) -> float:
        return 1.0 + (self.T_M - self.T) * self.K


def g_factor(s, kappa: float):
    """G(s) = (1 - exp(-kappa s)) / kappa, with the limit s as kappa -> 0."""
    s = np.asarray(s, dtype=float)
    ks = kappa * s
    small = np.abs(ks) < _KAPPA_SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = -np.expm1(-ks) / kappa if kappa != 0 else s
    out = np.where(small, s * (1.0 - 0.5 * ks), direct)
    return out if out.ndim else float(out)


def _check_order(t, T):
    if np.any(np.asarray(T) < np.asarray(t)):
        raise DomainError("bond maturity T must not precede valuation time t")


def zcb_closed_form(t, T, x, y, curve: InitialCurve, kappa: float):
    """p(t,T) = p(0,T)/p(0,t) * exp(-G(T-t) x - G(T-t)^2 y / 2)."""
    _check_order(t, T)
    G = g_factor(np.asarray(T, dtype=float) - t, kappa)
    log_ratio = curve.log_discount(T) - curve.log_discount(t)
    return np.exp(log_ratio - G * x - 0.5 * G * G * y)


def reduced_zcb_solution(t, T, r, y, curve: InitialCurve):
    """Bond price of the kappa = 0 model written in terms of the short rate."""
    _check_order(t, T)
    tau = np.asarray(T, dtype=float) - t
    x = np.asarray(r) - curve.forward(t)
    return np.exp(-curve.integrated_forward(t, T) - tau * x - 0.5 * tau * tau * y)


def pde_coefficients(point: StatePoint, params: ModelParams, curve: InitialCurve):
    """Diffusion and drift coefficients of the pricing PDE in raw units.

    Returns (zeta_rr, zeta_vv, zeta_rv, mu_r, mu_v, mu_y).
    """
    t = point.t
    r = np.maximum(np.asarray(point.r, dtype=float), 0.0)
    v = np.asarray(point.v, dtype=float)
    y = np.asarray(point.y, dtype=float)
    lam, gam, eps = params.lam(t), params.gamma(t), params.eps(t)
    r_gam = r**gam
    zeta_rr = 0.5 * lam**2 * r_gam**2 * v
    zeta_vv = 0.5 * eps**2 * v
    zeta_rv = lam * r_gam * eps * params.rho * v
    f = curve.forward(t)
    mu_r = curve.forward_slope(t) - params.kappa * (r - f) + y
    mu_v = params.theta * (1.0 - v)
    mu_y = lam**2 * r_gam**2 * v - 2.0 * params.kappa * y
    return zeta_rr, zeta_vv, zeta_rv, mu_r, mu_v, mu_y


def rescaled_coefficients(point_scaled: StatePoint, params: ModelParams, curve: InitialCurve,
                          r0: float = DEFAULT_RATE_SCALE):
    """Coefficients h1..h6 of the PDE in scaled variables r/r0 and y/r0**2.

    ``point_scaled.t`` is calendar time in years.  With C_t the derivative in
    calendar time the scaled equation reads

        C_t + h1 C_rr + h2 C_vv + h3 C_rv + h4 C_r + h5 C_v + h6 C_y = r0 r C.
    """
    if r0 <= 0:
        raise ValueError("rate scale r0 must be positive")
    t = point_scaled.t
    rs = np.maximum(np.asarray(point_scaled.r, dtype=float), 0.0)
    v = np.asarray(point_scaled.v, dtype=float)
    ys = np.asarray(point_scaled.y, dtype=float)
    lam, gam, eps = params.lam(t), params.gamma(t), params.eps(t)
    r_gam = rs**gam
    scale = r0 ** (gam - 1.0)
    h1 = 0.5 * lam**2 * r_gam**2 * scale**2 * v
    h2 = 0.5 * eps**2 * v
    h3 = lam * r_gam * eps * params.rho * v * scale
    h4 = curve.forward_slope(t) / r0 - params.kappa * (rs - curve.forward(t) / r0) + r0 * ys
    h5 = params.theta * (1.0 - v)
    # the y-drift keeps the r0 power of the diffusion term; 2*h1 is lam^2 r^2gam v / r0^2
    h6 = 2.0 * h1 - 2.0 * params.kappa * ys
    return h1, h2, h3, h4, h5, h6


def caplet_payoff(point: StatePoint, spec: CapletSpec, curve: InitialCurve, params: ModelParams):
    """max(1 - delta_m p(T, T_M), 0) with p from the closed form at the state point."""
    x = np.asarray(point.r) - curve.forward(spec.T)
    p = zcb_closed_form(spec.T, spec.T_M, x, point.y, curve, params.kappa)
    return np.maximum(1.0 - spec.delta_m * p, 0.0)
