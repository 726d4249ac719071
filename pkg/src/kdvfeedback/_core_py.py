"""Pure-Python implementation of the numerical core.

Mirrors the compiled module ``_core`` function by function; it is selected
automatically when the extension is not built.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

NAME = "python"

KL = 2
KU = 3

STATUS_CONVERGED = 0
STATUS_MAXIT = 1
STATUS_DIVERGED = 2

# A gap that stops shrinking while already below STALL * max|u| is rounding
# noise of the banded solve, not a failure to contract.
STALL = 1e-9


def series_pairs(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise outer-product sum ``sum_j (A_j x B_j + A_-j x B_-j)``.

    Rows of ``A`` and ``B`` are ordered ``-N..-1, 1..N``; the pair for
    ``|j|`` is formed first and added to the accumulator in ascending
    ``|j|``.
    """
    n2 = A.shape[0]
    N = n2 // 2
    out = np.zeros((A.shape[1], B.shape[1]), dtype=complex)
    for p in range(N):
        jp, jm = N + p, N - 1 - p
        out += np.multiply.outer(A[jp], B[jp]) + np.multiply.outer(A[jm], B[jm])
    return out


def apply_D(u: np.ndarray, h: float) -> np.ndarray:
    """``(u_xxx + u_x)`` on rows ``1..n-2``; zero elsewhere.

    Row 1 uses the one-sided third-derivative stencil on nodes 0..4, rows
    ``2..n-2`` the centered five-point stencil.
    """
    n = u.size - 1
    out = np.zeros_like(u)
    h3 = 2.0 * h**3
    i = np.arange(2, n - 1)
    out[2 : n - 1] = (-u[i - 2] + 2 * u[i - 1] - 2 * u[i + 1] + u[i + 2]) / h3
    out[1] = (-3 * u[0] + 10 * u[1] - 12 * u[2] + 6 * u[3] - u[4]) / h3
    out[1 : n - 1] += (u[2:n] - u[0 : n - 2]) / (2.0 * h)
    return out


def convection(u: np.ndarray, h: float) -> np.ndarray:
    """Skew-symmetric discretization of ``u u_x`` on interior rows."""
    out = np.zeros_like(u)
    out[1:-1] = (u[1:-1] * (u[2:] - u[:-2]) + (u[2:] ** 2 - u[:-2] ** 2)) / (6.0 * h)
    return out


def explicit_rhs(u: np.ndarray, h: float, cdt: float, nonlinear: bool) -> np.ndarray:
    """Known part ``u - cdt (D u + N(u))`` of the theta step on rows ``1..n-2``."""
    n = u.size - 1
    r = np.zeros_like(u)
    if cdt != 0.0:
        du = apply_D(u, h)
        if nonlinear:
            du += convection(u, h)
        r[1 : n - 1] = u[1 : n - 1] - cdt * du[1 : n - 1]
    else:
        r[1 : n - 1] = u[1 : n - 1]
    return r


def step_matrix_band(n: int, h: float, tdt: float) -> np.ndarray:
    """LAPACK band storage of the implicit step matrix (``kl=2, ku=3``).

    Rows: ``u_0 = 0``; ``u_i + tdt (D u)_i`` for ``1 <= i <= n-2``; the
    one-sided Neumann row ``(u_{n-2} - 4 u_{n-1} + 3 u_n)/(2h)``; ``u_n = 0``.
    """
    ab = np.zeros((2 * KL + KU + 1, n + 1), order="F")

    def put(i, j, v):
        ab[KL + KU + i - j, j] += v

    put(0, 0, 1.0)
    put(n, n, 1.0)
    h3 = 2.0 * h**3
    for i in range(1, n - 1):
        put(i, i, 1.0)
        if i == 1:
            for off, c in zip(range(5), (-3.0, 10.0, -12.0, 6.0, -1.0)):
                put(1, off, tdt * c / h3)
        else:
            for off, c in zip((-2, -1, 1, 2), (-1.0, 2.0, -2.0, 1.0)):
                put(i, i + off, tdt * c / h3)
        put(i, i - 1, -tdt / (2.0 * h))
        put(i, i + 1, tdt / (2.0 * h))
    put(n - 1, n - 2, 1.0 / (2.0 * h))
    put(n - 1, n - 1, -4.0 / (2.0 * h))
    put(n - 1, n, 3.0 / (2.0 * h))
    return ab


def band_factor(ab: np.ndarray):
    """LU factorization; returns ``(lu, piv, info)`` with 0-based pivots."""
    lu, piv, info = lapack.dgbtrf(ab, KL, KU)
    return lu, piv, int(info)


def band_solve(lu: np.ndarray, piv: np.ndarray, b: np.ndarray) -> np.ndarray:
    x, info = lapack.dgbtrs(lu, KL, KU, b, piv)
    return x


def picard_step(
    lu: np.ndarray,
    piv: np.ndarray,
    rhs: np.ndarray,
    u_start: np.ndarray,
    gw: np.ndarray,
    neumann: float,
    cnl: float,
    h: float,
    tol: float,
    maxit: int,
    nonlinear: bool,
    gaps: np.ndarray,
):
    """Fixed-point solve of one implicit step.

    Each sweep freezes the convection term (weight ``cnl``) and the Neumann
    value ``neumann + gw . u`` at the current iterate, then does one banded
    solve. It stops when the sup-norm gap between iterates is at most
    ``tol * max|u|``, or when the gap stops shrinking while already below
    ``STALL * max|u|``.

    Returns
    -------
    u : numpy.ndarray
        Final iterate.
    iters : int
        Number of banded solves.
    status : int
        0 converged, 1 iteration cap reached, 2 gap grew three times in a row.
    """
    n = rhs.size - 1
    it = u_start.copy()
    grow = 0
    prev = np.inf
    for m in range(maxit):
        b = rhs.copy()
        if nonlinear:
            b[1 : n - 1] -= cnl * convection(it, h)[1 : n - 1]
        b[0] = 0.0
        b[n] = 0.0
        b[n - 1] = neumann + float(gw @ it)
        new = band_solve(lu, piv, b)
        gap = float(np.max(np.abs(new - it)))
        gaps[m] = gap
        it = new
        big = float(np.max(np.abs(new)))
        if gap <= tol * big or (gap >= prev and gap <= STALL * big):
            return it, m + 1, STATUS_CONVERGED
        grow = grow + 1 if gap > prev else 0
        prev = gap
        if grow >= 3:
            return it, m + 1, STATUS_DIVERGED
    return it, maxit, STATUS_MAXIT
