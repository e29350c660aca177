"""Independent brute-force references used by the test suite.

Nothing here shares a numerical kernel with the production modules: the
matrix exponential is a self-contained Pade scaling-and-squaring routine,
time stepping is a plain classical Runge-Kutta loop, and the closed forms
are evaluated analytically.  Keep it that way — independence is the point.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, OracleDivergenceError

__all__ = [
    "dense_expm",
    "rk4_solve",
    "linear_relax",
    "logistic",
    "blow_up_square",
]

MAX_DENSE_DIM = 500

# Pade numerator coefficients and 1-norm switch points for degrees
# 3, 5, 7, 9, 13 (double precision).
_PADE_COEFFS = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0,
        8821612800.0,
        2075673600.0,
        302702400.0,
        30270240.0,
        2162160.0,
        110880.0,
        3960.0,
        90.0,
        1.0,
    ),
    13: (
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ),
}
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _pade_small(A: np.ndarray, degree: int) -> np.ndarray:
    n = A.shape[0]
    c = _PADE_COEFFS[degree]
    ident = np.eye(n)
    A2 = A @ A
    U = c[1] * ident
    V = c[0] * ident
    power = ident
    for k in range(1, degree // 2 + 1):
        power = power @ A2
        U = U + c[2 * k + 1] * power
        V = V + c[2 * k] * power
    U = A @ U
    return np.linalg.solve(V - U, V + U)


def _pade13(A: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    c = _PADE_COEFFS[13]
    ident = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = A @ (A6 @ (c[13] * A6 + c[11] * A4 + c[9] * A2) + c[7] * A6 + c[5] * A4 + c[3] * A2 + c[1] * ident)
    V = A6 @ (c[12] * A6 + c[10] * A4 + c[8] * A2) + c[6] * A6 + c[4] * A4 + c[2] * A2 + c[0] * ident
    return np.linalg.solve(V - U, V + U)


def dense_expm(A) -> np.ndarray:
    """Matrix exponential by Pade approximation with scaling and squaring.

    Accepts a dense square array (or anything with ``toarray``).  Refuses
    dimensions above 500: this is a reference for desk-scale checks, not a
    production kernel.
    """
    if hasattr(A, "toarray"):
        A = A.toarray()
    elif hasattr(A, "matrix"):  # GeneratorMatrix
        A = A.matrix.toarray()
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("dense_expm needs a square matrix")
    if A.shape[0] > MAX_DENSE_DIM:
        raise DomainError(f"dense_expm refused: dimension {A.shape[0]} > {MAX_DENSE_DIM}")
    norm1 = float(np.abs(A).sum(axis=0).max()) if A.size else 0.0
    for degree in (3, 5, 7, 9):
        if norm1 <= _THETA[degree]:
            return _pade_small(A, degree)
    squarings = max(0, int(np.ceil(np.log2(norm1 / _THETA[13]))) if norm1 > _THETA[13] else 0)
    F = _pade13(A / (2.0**squarings))
    for _ in range(squarings):
        F = F @ F
    return F


def rk4_solve(rhs, y0, step: float, horizon: float, t0: float = 0.0):
    """Classical fixed-step 4-stage explicit integration of y' = rhs(y, t).

    Returns ``(times, states)`` with states stacked row-wise, including the
    initial condition.  A final partial step lands exactly on the horizon.
    Raises :class:`OracleDivergenceError` as soon as a state goes
    non-finite.
    """
    if step <= 0:
        raise DomainError("step must be positive")
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    t = float(t0)
    end = t0 + horizon
    times = [t]
    states = [y.copy()]
    while t < end - 1e-14 * max(1.0, abs(end)):
        h = min(step, end - t)
        k1 = np.asarray(rhs(y, t))
        k2 = np.asarray(rhs(y + 0.5 * h * k1, t + 0.5 * h))
        k3 = np.asarray(rhs(y + 0.5 * h * k2, t + 0.5 * h))
        k4 = np.asarray(rhs(y + h * k3, t + h))
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        if not np.all(np.isfinite(y)):
            raise OracleDivergenceError(f"non-finite state at t = {t:.6g}")
        times.append(t)
        states.append(y.copy())
    return np.asarray(times), np.asarray(states)


def linear_relax(gamma: float, mu: float, y0: float, t):
    """Solution of y' = gamma - mu*y: gamma/mu + (y0 - gamma/mu) e^{-mu t}."""
    t = np.asarray(t, dtype=float)
    eq = gamma / mu
    return eq + (y0 - eq) * np.exp(-mu * t)


def logistic(r: float, K: float, y0: float, t):
    """Solution of y' = r*y*(1 - y/K) through y0 at t = 0."""
    t = np.asarray(t, dtype=float)
    if y0 == 0:
        return np.zeros_like(t)
    return K / (1.0 + (K / y0 - 1.0) * np.exp(-r * t))


def blow_up_square(y0: float, t):
    """Solution of y' = y^2: 1/(1/y0 - t); undefined at and past t = 1/y0."""
    t = np.asarray(t, dtype=float)
    if y0 <= 0:
        raise DomainError("blow_up_square needs y0 > 0")
    if np.any(t >= 1.0 / y0 - 0.0):
        raise DomainError("blow_up_square evaluated at or past the blow-up time")
    return 1.0 / (1.0 / y0 - t)
