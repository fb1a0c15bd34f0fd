"""Batched Thomas algorithm."""

from __future__ import annotations

import numpy as np

__all__ = ["SingularPivotError", "solve_tridiagonal"]


class SingularPivotError(ArithmeticError):
    """Forward elimination hit a zero (or non-finite) pivot."""


def solve_tridiagonal(lower, diag, upper, rhs):
    """Solve tridiagonal systems along axis 0.

    All four arrays share the same shape ``(n, ...)``; trailing axes index
    independent systems.  ``lower[0]`` and ``upper[-1]`` are ignored.
    No pivoting: intended for diagonally dominant lines.
    """
    a = np.asarray(lower, dtype=float)
    b = np.asarray(diag, dtype=float)
    c = np.asarray(upper, dtype=float)
    d = np.asarray(rhs, dtype=float)
    n = b.shape[0]
    if not (a.shape == b.shape == c.shape == d.shape):
        raise ValueError("lower, diag, upper and rhs must share one shape")

    cp = np.empty_like(b)
    dp = np.empty_like(d)
    pivot = b[0]
    _check_pivot(pivot, 0)
    cp[0] = c[0] / pivot
    dp[0] = d[0] / pivot
    for i in range(1, n):
        pivot = b[i] - a[i] * cp[i - 1]
        _check_pivot(pivot, i)
        cp[i] = c[i] / pivot
        dp[i] = (d[i] - a[i] * dp[i - 1]) / pivot

    x = dp
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


def _check_pivot(pivot, row):
    bad = (pivot == 0) | ~np.isfinite(pivot)
    if np.any(bad):
        raise SingularPivotError(f"zero or non-finite pivot in row {row}")
