"""Independent reference computations used by the tests.

Nothing here imports the package's numerical routines; each oracle
re-derives its quantity from first principles with a different method.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import bisect

# Frozen reference values for L = 3 (first ten positive eigenvalue parameters
# and the first two roots), computed once with the dense-scan oracle below
# and cross-checked against the finite-difference eigenvalue solver.
MU_L3 = np.array([
    4.08441783, 53.3544627, 203.608223, 510.044466, 1027.78324,
    1811.94652, 2917.65648, 4400.03533, 6314.20532, 8715.28871,
])
TAU_L3 = (0.90299449, 1.92658419)


def boundary_matrix(mu: float, L: float) -> np.ndarray:
    """Rows ``phi(0)``, ``phi(L)``, ``phi'(0) - phi'(L)`` on the exponential solutions.

    ``phi''' + phi' + i mu phi = 0`` has solutions ``exp(r x)`` with
    ``r^3 + r + i mu = 0``. Columns are scaled by ``exp(-max(Re r L, 0))`` so
    nothing overflows.
    """
    r = np.roots([1.0, 0.0, 1.0, 1j * mu])
    scale = np.exp(-np.maximum(r.real * L, 0.0))
    eL = np.exp(r * L) * scale
    e0 = scale.astype(complex)
    return np.array([e0, eL, r * e0 - r * eL])


def singularity(mu: float, L: float) -> float:
    """Smallest over largest singular value of :func:`boundary_matrix` (zero at an eigenvalue)."""
    s = np.linalg.svd(boundary_matrix(mu, L), compute_uv=False)
    return float(s[-1] / s[0])


def eigenfunction(mu: float, L: float, x: np.ndarray) -> np.ndarray:
    """Null vector of the boundary matrix evaluated on ``x`` (unnormalized)."""
    r = np.roots([1.0, 0.0, 1.0, 1j * mu])
    scale = np.exp(-np.maximum(r.real * L, 0.0))
    _, _, vh = np.linalg.svd(boundary_matrix(mu, L))
    a = vh[-1].conj() * scale
    return np.exp(np.outer(x, r)) @ a


def classical_residual(tau: float, L: float) -> float:
    """The unscaled characteristic function for ``tau > 1/2``.

    With ``p = sqrt(3 tau^2 - 1)`` it reads
    ``cos(2 tau L) - cosh(p L) cos(tau L) - 3 tau sin(tau L) sinh(p L)/p``;
    for ``3 tau^2 < 1`` the hyperbolic functions of the imaginary ``p`` become
    ``cos(s L)`` and ``sin(s L)/s`` with ``s = sqrt(1 - 3 tau^2)``.
    """
    q = 3.0 * tau * tau - 1.0
    if q > 0:
        p = math.sqrt(q)
        ch, sh = math.cosh(p * L), math.sinh(p * L) / p
    elif q < 0:
        s = math.sqrt(-q)
        ch, sh = math.cos(s * L), math.sin(s * L) / s
    else:
        ch, sh = 1.0, L
    return math.cos(2 * tau * L) - ch * math.cos(tau * L) - 3 * tau * math.sin(tau * L) * sh


def scan_roots(L: float, count: int, step: float = 1e-4, lo: float = 0.5 + 1e-9) -> list[float]:
    """Dense scan of the classical residual plus bisection to 1e-13.

    The residual is divided by ``cosh(pL)`` where ``p`` is real to keep it of
    order one; that positive factor does not move the roots.
    """

    def f(t):
        q = 3.0 * t * t - 1.0
        d = math.cosh(math.sqrt(q) * L) if q > 0 else 1.0
        return classical_residual(t, L) / d

    out = []
    t = lo
    ft = f(t)
    while len(out) < count:
        t2 = t + step
        f2 = f(t2)
        if ft == 0.0:
            out.append(t)
        elif ft * f2 < 0:
            out.append(bisect(f, t, t2, xtol=1e-13))
        t, ft = t2, f2
    return out


def critical_brute(limit: int) -> set[float]:
    return {
        round(2 * math.pi * math.sqrt((l * l + l * j + j * j) / 3.0), 12)
        for l in range(1, limit + 1)
        for j in range(1, limit + 1)
    }


def simpson(f: np.ndarray, h: float) -> float:
    """Composite Simpson written out with explicit 1-4-2-...-4-1 weights."""
    n = f.size - 1
    return h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:n:2].sum() + 2.0 * f[2:n - 1:2].sum())


# ---------------------------------------------------------------------------
# semi-discrete KdV right-hand side, written independently of the package core
# ---------------------------------------------------------------------------


def kdv_semidiscrete(nx: int, L: float, nonlinear: bool = True):
    """Return ``(rhs, lift)`` for the interior unknowns ``u_1..u_{n-2}``.

    Boundary closure: ``u_0 = u_n = 0`` and the homogeneous one-sided Neumann
    row ``u_{n-2} - 4 u_{n-1} = 0``.
    """
    h = L / nx

    def lift(y):
        u = np.zeros(nx + 1)
        u[1 : nx - 1] = y
        u[nx - 1] = u[nx - 2] / 4.0
        return u

    def rhs(t, y):
        u = lift(y)
        out = np.empty(nx - 2)
        for i in range(1, nx - 1):
            if i == 1:
                d3 = (-3 * u[0] + 10 * u[1] - 12 * u[2] + 6 * u[3] - u[4]) / (2 * h**3)
            else:
                d3 = (-u[i - 2] + 2 * u[i - 1] - 2 * u[i + 1] + u[i + 2]) / (2 * h**3)
            d1 = (u[i + 1] - u[i - 1]) / (2 * h)
            conv = (u[i] * (u[i + 1] - u[i - 1]) + u[i + 1] ** 2 - u[i - 1] ** 2) / (6 * h) if nonlinear else 0.0
            out[i - 1] = -(d3 + d1 + conv)
        return out

    return rhs, lift
