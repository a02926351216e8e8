from fractions import Fraction

import numpy as np
import pytest

from rxate import Dataset


def exact_ols(X, y):
    """Solve the normal equations (A'A) b = A'y in exact rational arithmetic.

    Floats convert to Fractions exactly, so the only rounding is the final
    conversion back to float.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    A = [[Fraction(1)] + [Fraction(v) for v in row] for row in X]
    yv = [Fraction(v) for v in np.asarray(y, dtype=float)]
    k = len(A[0])
    M = [[sum(A[r][i] * A[r][j] for r in range(len(A))) for j in range(k)] for i in range(k)]
    rhs = [sum(A[r][i] * yv[r] for r in range(len(A))) for i in range(k)]
    for col in range(k):
        piv = next(r for r in range(col, k) if M[r][col] != 0)
        M[col], M[piv] = M[piv], M[col]
        rhs[col], rhs[piv] = rhs[piv], rhs[col]
        for r in range(k):
            if r != col and M[r][col] != 0:
                f = M[r][col] / M[col][col]
                M[r] = [a - f * b for a, b in zip(M[r], M[col])]
                rhs[r] -= f * rhs[col]
    return np.array([float(rhs[i] / M[i][i]) for i in range(k)])


def make_dataset(rng, n_t=12, n_c=15, p=2, shift=0.0):
    X = rng.normal(size=(n_t + n_c, p)) * rng.uniform(0.5, 3, size=p) + shift
    bt, bc = rng.normal(size=p), rng.normal(size=p)
    w = np.r_[np.ones(n_t, int), np.zeros(n_c, int)]
    y = np.where(w == 1, 1.0 + X @ bt, -0.5 + X @ bc) + rng.normal(size=n_t + n_c)
    return Dataset(y, w, X)


@pytest.fixture
def toy4():
    """Treated {(1,3),(2,5)}, control {(0,1),(1,1)}."""
    return Dataset([3.0, 5.0, 1.0, 1.0], [1, 1, 0, 0], [[1.0], [2.0], [0.0], [1.0]], ("x",))


@pytest.fixture
def six_unit():
    """Treated x=(0,1,2), y=(1,2,4); control x=(1,2,3), y=(2,2,5)."""
    return Dataset(
        [1.0, 2.0, 4.0, 2.0, 2.0, 5.0],
        [1, 1, 1, 0, 0, 0],
        [[0.0], [1.0], [2.0], [1.0], [2.0], [3.0]],
        ("x",),
    )


@pytest.fixture
def randomized_fixtures():
    rng = np.random.default_rng(314159)
    out = []
    for k in range(25):
        p = int(rng.integers(0, 4))
        n_t = int(rng.integers(p + 3, 30))
        n_c = int(rng.integers(p + 3, 30))
        out.append(make_dataset(rng, n_t, n_c, p, shift=rng.normal(scale=5)))
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
