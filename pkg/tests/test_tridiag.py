import numpy as np
import pytest

from hjmsv.tridiag import SingularPivotError, solve_tridiagonal


def test_identity():
    n = 6
    d = np.arange(1.0, n + 1)
    x = solve_tridiagonal(np.zeros(n), np.ones(n), np.zeros(n), d.copy())
    assert np.array_equal(x, d)


def test_second_difference_round_trip():
    n = 9
    u = np.sin(np.linspace(0.0, 3.0, n))
    lower, diag, upper = -np.ones(n), 2.0 * np.ones(n), -np.ones(n)
    rhs = 2.0 * u
    rhs[1:] -= u[:-1]
    rhs[:-1] -= u[1:]
    assert np.max(np.abs(solve_tridiagonal(lower, diag, upper, rhs) - u)) < 1e-13


def test_matches_dense_solver():
    rng = np.random.default_rng(3)
    n = 50
    lower, upper = rng.normal(size=n), rng.normal(size=n)
    diag = np.abs(lower) + np.abs(upper) + 1.0 + rng.uniform(size=n)
    rhs = rng.normal(size=n)
    A = np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)
    x = solve_tridiagonal(lower, diag, upper, rhs)
    assert np.max(np.abs(x - np.linalg.solve(A, rhs))) < 1e-11


def test_batched_systems_are_independent():
    rng = np.random.default_rng(4)
    n, shape = 12, (4, 3)
    lower, upper = rng.normal(size=(n,) + shape), rng.normal(size=(n,) + shape)
    diag = np.abs(lower) + np.abs(upper) + 1.0
    rhs = rng.normal(size=(n,) + shape)
    x = solve_tridiagonal(lower, diag, upper, rhs)
    for i in range(shape[0]):
        for j in range(shape[1]):
            one = solve_tridiagonal(lower[:, i, j], diag[:, i, j], upper[:, i, j], rhs[:, i, j])
            assert np.array_equal(x[:, i, j], one)


def test_zero_pivot_raises():
    with pytest.raises(SingularPivotError):
        solve_tridiagonal(np.ones(3), np.array([1.0, 1.0, 1.0]), np.ones(3), np.ones(3))
    with pytest.raises(ArithmeticError):
        solve_tridiagonal(np.zeros(3), np.array([0.0, 1.0, 1.0]), np.zeros(3), np.ones(3))


def test_shape_mismatch():
    with pytest.raises(ValueError):
        solve_tridiagonal(np.ones(3), np.ones(4), np.ones(3), np.ones(3))
