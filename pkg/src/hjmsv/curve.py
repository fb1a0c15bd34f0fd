"""Date-0 zero coupon curve: p(0,T), forward rate f(0,t) and its slope."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = ["InitialCurve", "load_curve"]


@dataclass(frozen=True)
class InitialCurve:
    """Natural cubic spline through ln p(0,T), flat forward beyond the last node.

    The spline second derivative vanishes at the last node, so the flat
    extrapolation keeps f(0,t) and df(0,t)/dt continuous.
    """

    maturities: np.ndarray
    discounts: np.ndarray
    spline: CubicSpline = field(repr=False)
    extrapolation_rate: float

    @classmethod
    def from_nodes(cls, maturities, discounts, check_forward: bool = True) -> "InitialCurve":
        T = np.asarray(maturities, dtype=float)
        p = np.asarray(discounts, dtype=float)
        if T.ndim != 1 or T.shape != p.shape:
            raise ValueError("maturities and discounts must be 1-d arrays of equal length")
        order = np.argsort(T)
        T, p = T[order], p[order]
        if T[0] < 0:
            raise ValueError("maturities must be nonnegative")
        if T[0] > 0:
            T = np.concatenate([[0.0], T])
            p = np.concatenate([[1.0], p])
        elif not math.isclose(p[0], 1.0, abs_tol=1e-14):
            raise ValueError("p(0,0) must equal 1")
        if len(T) < 3:
            raise ValueError("need at least two positive maturities")
        if np.any(np.diff(T) <= 0):
            raise ValueError("maturities must be distinct")
        if np.any(p <= 0) or np.any(p > 1):
            raise ValueError("discounts must lie in (0, 1]")
        if np.any(np.diff(p) >= 0):
            raise ValueError("discounts must be strictly decreasing in maturity")

        spline = CubicSpline(T, np.log(p), bc_type="natural")
        f_last = -float(spline(T[-1], 1))
        curve = cls(T, p, spline, f_last)
        if check_forward:
            probe = np.linspace(0.0, T[-1], 20 * len(T) + 1)
            if np.min(curve.forward(probe)) < -1e-12:
                raise ValueError("spline forward curve turns negative; quotes are not smooth enough")
        return curve

    @classmethod
    def flat(cls, base: float = 1.04, horizon: float = 60.0, n_nodes: int = 61) -> "InitialCurve":
        """Curve with p(0,T) = base**(-T), sampled on a uniform node set."""
        if base <= 1.0:
            raise ValueError("base must exceed 1 for a decreasing curve")
        T = np.linspace(0.0, horizon, n_nodes)
        return cls.from_nodes(T, base ** (-T))

    @property
    def t_max(self) -> float:
        return float(self.maturities[-1])

    def log_discount(self, T):
        T = np.asarray(T, dtype=float)
        t_last = self.maturities[-1]
        inside = np.clip(T, 0.0, t_last)
        out = self.spline(inside)
        tail = T > t_last
        return np.where(tail, float(self.spline(t_last)) - self.extrapolation_rate * (T - t_last), out)

    def discount(self, T):
        """p(0, T)."""
        return np.exp(self.log_discount(T))

    def forward(self, t):
        """Instantaneous forward f(0, t) = -d ln p(0,t) / dt."""
        t = np.asarray(t, dtype=float)
        t_last = self.maturities[-1]
        out = -self.spline(np.clip(t, 0.0, t_last), 1)
        return np.where(t > t_last, self.extrapolation_rate, out)

    def forward_slope(self, t):
        """df(0, t)/dt."""
        t = np.asarray(t, dtype=float)
        t_last = self.maturities[-1]
        out = -self.spline(np.clip(t, 0.0, t_last), 2)
        return np.where(t > t_last, 0.0, out)

    def integrated_forward(self, t, T):
        """Integral of f(0, s) over [t, T], i.e. ln p(0,t) - ln p(0,T)."""
        return self.log_discount(t) - self.log_discount(T)


def load_curve(path) -> InitialCurve:
    """Read a whitespace/comma separated table of (maturity_years, discount).

    Blank lines and anything after '#' are ignored.
    """
    maturities, discounts = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'maturity discount', got {raw!r}")
        maturities.append(float(parts[0]))
        discounts.append(float(parts[1]))
    if not maturities:
        raise ValueError(f"{path}: no curve quotes found")
    return InitialCurve.from_nodes(maturities, discounts)
