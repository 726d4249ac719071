"""Eigenvalues and eigenfunctions of the third-order operator ``A``.

``A = -d^3/dx^3 - d/dx`` acts on functions with ``phi(0) = phi(L) = 0`` and
``phi'(0) = phi'(L)``. It is skew-adjoint, so its eigenvalues are purely
imaginary, ``i*mu_j``. Every eigenvalue is parametrized by a real ``tau`` with
``mu = 2 tau (4 tau^2 - 1)``, and ``tau`` solves a transcendental
characteristic equation. This module locates those roots, builds normalized
eigenfunctions on a uniform grid and checks the usual invariants (boundary
conditions, orthonormality, conjugate pairing).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .errors import (
    CriticalLength,
    DegenerateMode,
    GramFailure,
    RangeInsufficient,
    RootCountMismatch,
    UsageError,
)

TOL_BC = 1e-8
TOL_NORM = 1e-10
TOL_GRAM = 1e-6
ROOT_XTOL = 1e-12

# tau values at which the parametrization degenerates: 3 tau^2 = 1 merges
# the exponential and trigonometric branches, 12 tau^2 = 1 is the double root
# of the tau -> mu cubic.
_DEGENERATE_TAUS = (1.0 / math.sqrt(3.0), 1.0 / (2.0 * math.sqrt(3.0)))


def simpson_weights(nx: int, L: float) -> np.ndarray:
    """Composite Simpson weights on ``nx + 1`` uniform nodes of ``[0, L]``.

    Parameters
    ----------
    nx : int
        Number of intervals; must be even.
    L : float
        Interval length.

    Returns
    -------
    numpy.ndarray
        Positive weights summing to ``L``.
    """
    if nx < 2 or nx % 2:
        raise UsageError(f"Simpson quadrature needs an even interval count, got {nx}")
    h = L / nx
    w = np.ones(nx + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[0, L]`` with Simpson quadrature weights."""

    L: float
    nx: int

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise UsageError(f"length must be positive and finite, got {self.L}")
        if int(self.nx) != self.nx or self.nx < 4 or self.nx % 2:
            raise UsageError(f"nx must be an even integer >= 4, got {self.nx}")

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.arange(self.nx + 1) * (self.L / self.nx)
        x[-1] = self.L
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        return simpson_weights(self.nx, self.L)

    @property
    def h(self) -> float:
        return self.L / self.nx

    @property
    def size(self) -> int:
        return self.nx + 1

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        """Quadrature inner product ``int u conj(v) dx``."""
        return np.sum(self.weights * u * np.conj(v))

    def norm(self, u: np.ndarray) -> float:
        """Quadrature L2 norm."""
        return float(np.sqrt(np.sum(self.weights * np.abs(u) ** 2)))


# ---------------------------------------------------------------------------
# critical lengths
# ---------------------------------------------------------------------------


def critical_lengths(l_max: int, j_max: int) -> list[float]:
    """Enumerate ``2 pi sqrt((l^2 + l j + j^2)/3)`` for ``1 <= l <= l_max``, ``1 <= j <= j_max``.

    Values closer than ``1e-12`` (relative) are merged. The result is sorted.
    """
    if l_max < 0 or j_max < 0:
        raise UsageError("index ranges must be nonnegative")
    vals = sorted(
        2.0 * math.pi * math.sqrt((l * l + l * j + j * j) / 3.0)
        for l in range(1, l_max + 1)
        for j in range(1, j_max + 1)
    )
    out: list[float] = []
    for v in vals:
        if not out or abs(v - out[-1]) > 1e-12 * max(1.0, v):
            out.append(v)
    return out


def _index_range_for(L: float) -> int:
    """Smallest symmetric index range whose boundary values all exceed ``L``."""
    m = 1
    while 2.0 * math.pi * math.sqrt((m * m + m + 1) / 3.0) <= L:
        m += 1
    return m


def is_noncritical(
    L: float, l_max: int | None = None, j_max: int | None = None, tol: float = 1e-9
) -> bool:
    """Return True when ``L`` is farther than ``tol`` from every critical length.

    Parameters
    ----------
    L : float
        Interval length.
    l_max, j_max : int, optional
        Index ranges for the enumeration. By default the smallest range that
        brackets ``L`` is used.
    tol : float
        Absolute distance threshold.

    Raises
    ------
    RangeInsufficient
        If some critical length outside the enumerated range could be ``<= L``.
    """
    if not L > 0:
        raise UsageError(f"length must be positive, got {L}")
    m = _index_range_for(L)
    l_max = m if l_max is None else l_max
    j_max = m if j_max is None else j_max
    if min(l_max, j_max) < 1:
        raise RangeInsufficient("empty index range cannot bracket any length")
    # smallest value with l = l_max + 1 or j = j_max + 1
    edge = min(l_max, j_max) + 1
    if 2.0 * math.pi * math.sqrt((edge * edge + edge + 1) / 3.0) <= L + tol:
        raise RangeInsufficient(
            f"index range ({l_max}, {j_max}) does not bracket L={L}; enlarge it"
        )
    crit = critical_lengths(l_max, j_max)
    return all(abs(L - c) > tol for c in crit)


def nearest_critical_length(L: float) -> float:
    m = _index_range_for(L) + 1
    return min(critical_lengths(m, m), key=lambda c: abs(c - L))


# ---------------------------------------------------------------------------
# characteristic equation
# ---------------------------------------------------------------------------


def mu_of_tau(tau):
    """Eigenvalue parameter ``mu = 2 tau (4 tau^2 - 1)``."""
    return 2.0 * tau * (4.0 * tau * tau - 1.0)


def char_residual(tau, L: float):
    """Scaled residual of the characteristic equation.

    For ``3 tau^2 > 1`` with ``p = sqrt(3 tau^2 - 1)`` this is::

        cos(2 tau L) sech(p L) - 3 tau sin(tau L) tanh(p L)/p - cos(tau L)

    i.e. the classical form divided by ``p cosh(p L)``, which is bounded for
    all ``tau`` and has no spurious zero at ``p = 0``. For ``3 tau^2 <= 1`` the
    trigonometric continuation with ``s = sqrt(1 - 3 tau^2)`` is used. Both
    branches agree (value ``cos 2 tau L - 3 tau L sin tau L - cos tau L``) at
    ``3 tau^2 = 1``.

    Parameters
    ----------
    tau : float or array_like
    L : float

    Returns
    -------
    float or numpy.ndarray
    """
    t = np.asarray(tau, dtype=float)
    q = 3.0 * t * t - 1.0
    pos = q > 0
    p = np.sqrt(np.where(pos, q, 0.0))
    s = np.sqrt(np.where(pos, 0.0, -q))
    pL = p * L
    sL = s * L
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        e2 = np.exp(-2.0 * pL)
        sech = 2.0 * np.exp(-pL) / (1.0 + e2)
        # tanh(pL)/p, continuous at p = 0 where it equals L
        tanh_p = np.where(pL > 1e-8, -np.expm1(-2.0 * pL) / (1.0 + e2) / np.where(p > 0, p, 1.0), L)
        r_pos = np.cos(2.0 * t * L) * sech - 3.0 * t * np.sin(t * L) * tanh_p - np.cos(t * L)
        sinc = np.where(sL > 1e-8, np.sin(sL) / np.where(s > 0, s, 1.0), L)
        r_neg = np.cos(2.0 * t * L) - 3.0 * t * np.sin(t * L) * sinc - np.cos(t * L) * np.cos(sL)
    out = np.where(pos, r_pos, r_neg)
    return float(out) if out.ndim == 0 else out


def locate_taus(L: float, N: int, step: float | None = None) -> np.ndarray:
    """Locate the ``N`` smallest roots ``tau > 1/2`` of :func:`char_residual`.

    Roots are bracketed by a uniform scan and refined with Brent's method.
    Each positive ``mu`` corresponds to exactly one ``tau > 1/2``, so the
    list is sorted by ``mu`` as well. Negative eigenvalues are obtained by
    conjugation, not located here.

    Parameters
    ----------
    L : float
        Interval length (must be noncritical).
    N : int
        Number of roots.
    step : float, optional
        Scan step; defaults to ``pi/(50 L)``.

    Returns
    -------
    numpy.ndarray
        Increasing roots, shape ``(N,)``.
    """
    if N < 1:
        raise UsageError("need at least one mode")
    if not is_noncritical(L):
        raise CriticalLength(
            f"L={L} lies in the critical set (nearest {nearest_critical_length(L):.15g})"
        )
    step = math.pi / (50.0 * L) if step is None else step
    f = lambda z: char_residual(z, L)  # noqa: E731
    roots: list[float] = []
    lo = 0.0
    hi = (N + 2) * math.pi / L
    limit = (2 * N + 10) * math.pi / L
    while True:
        t = np.arange(lo, hi + step, step)
        r = char_residual(t, L)
        exact = np.nonzero(r == 0.0)[0]
        roots.extend(float(t[i]) for i in exact)
        sgn = np.sign(r)
        for i in np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]:
            roots.append(brentq(f, t[i], t[i + 1], xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps))
        pos = sorted(z for z in roots if z > 0.5)
        uniq: list[float] = []
        for z in pos:
            m = mu_of_tau(z)
            if not uniq or abs(m - mu_of_tau(uniq[-1])) > 1e-9 * abs(m):
                uniq.append(z)
        if len(uniq) >= N or hi >= limit:
            break
        lo = t[-1]
        hi = hi + 4 * math.pi / L
    if len(uniq) < N:
        raise RootCountMismatch(f"found {len(uniq)} roots, expected {N}")
    out = np.array(uniq[:N])
    for i, z in enumerate(out):
        for d in _DEGENERATE_TAUS:
            if abs(z - d) < 1e-10:
                warnings.warn(f"root {z!r} sits on a degenerate parameter value; perturbed", RuntimeWarning)
                out[i] = d + math.copysign(2e-10, z - d if z != d else 1.0)
    return out


def bracket_index(tau, L: float):
    """Index ``m`` of the bracket ``[m pi/L, (m+1) pi/L)`` that contains ``tau``."""
    return np.floor(np.asarray(tau) * L / math.pi).astype(int)


def tau_envelope(taus: np.ndarray, L: float) -> np.ndarray:
    """``|tau - m pi/L - 5 pi/(6L)| * m`` with ``m`` the bracket index (0 for the first bracket)."""
    m = bracket_index(taus, L)
    return np.abs(taus - m * math.pi / L - 5.0 * math.pi / (6.0 * L)) * m


# ---------------------------------------------------------------------------
# eigenfunctions
# ---------------------------------------------------------------------------


def _mode_profile(tau: float, L: float, x: np.ndarray):
    """Unnormalized eigenfunction and derivative for a root ``tau``.

    The eigenfunction is written as ``exp(-i tau x) [A(x) + exp(3 i tau L) B(x)]
    - D exp(2 i tau x)``. For ``3 tau^2 > 1`` the hyperbolic ratios in ``A`` and
    ``B`` are expressed through decaying exponentials so nothing overflows.
    Returns ``(u, du, du0, duL)`` with analytic endpoint derivatives.
    """
    q = 3.0 * tau * tau - 1.0

    def parts(xx):
        if q > 0:
            p = math.sqrt(q)
            den = -math.expm1(-2.0 * p * L)
            ea = np.exp(-p * xx)
            eb = np.exp(-p * (L - xx))
            A = ea * (-np.expm1(-2.0 * p * (L - xx))) / den
            B = eb * (-np.expm1(-2.0 * p * xx)) / den
            dA = -p * ea * (1.0 + np.exp(-2.0 * p * (L - xx))) / den
            dB = p * eb * (1.0 + np.exp(-2.0 * p * xx)) / den
            D = 1.0
        else:
            s = math.sqrt(-q)
            D = math.sin(s * L)
            if abs(D) < 1e-300:
                raise DegenerateMode(f"tau={tau} gives a vanishing trigonometric denominator")
            sg = math.copysign(1.0, D)
            A = sg * np.sin(s * (L - xx))
            B = sg * np.sin(s * xx)
            dA = -sg * s * np.cos(s * (L - xx))
            dB = sg * s * np.cos(s * xx)
            D = abs(D)
        e3 = np.exp(3j * tau * L)
        em = np.exp(-1j * tau * xx)
        e2 = np.exp(2j * tau * xx)
        u = em * (A + e3 * B) - D * e2
        du = em * (-1j * tau * (A + e3 * B) + dA + e3 * dB) - 2j * tau * D * e2
        return u, du

    u, du = parts(x)
    ends = parts(np.array([0.0, L]))[1]
    return u, du, complex(ends[0]), complex(ends[1])


@dataclass(frozen=True)
class EigenMode:
    """One normalized eigenpair ``(i mu_j, phi_j)``.

    Attributes
    ----------
    j : int
        Nonzero signed index.
    tau, mu : float
        Root and eigenvalue parameter; the eigenvalue of ``A`` is ``i mu``.
    alpha : float
        Positive normalization constant.
    values : numpy.ndarray
        Complex samples on the grid nodes, exactly zero at both ends.
    dvalues : numpy.ndarray
        Analytic derivative samples.
    dphi0, dphiL : complex
        Analytic ``phi'(0)`` and ``phi'(L)``.
    """

    j: int
    tau: float
    mu: float
    alpha: float
    values: np.ndarray = field(repr=False)
    dvalues: np.ndarray = field(repr=False)
    dphi0: complex
    dphiL: complex

    def conjugate(self) -> "EigenMode":
        """Mode ``-j``: ``mu -> -mu`` and conjugated samples."""
        return EigenMode(
            j=-self.j,
            tau=self.tau,
            mu=-self.mu,
            alpha=self.alpha,
            values=np.conj(self.values),
            dvalues=np.conj(self.dvalues),
            dphi0=self.dphi0.conjugate(),
            dphiL=self.dphiL.conjugate(),
        )

    @property
    def bc_residual(self) -> float:
        """Relative mismatch ``|phi'(0) - phi'(L)| / (1 + |phi'(0)|)``."""
        return abs(self.dphi0 - self.dphiL) / (1.0 + abs(self.dphi0))


def build_mode(j: int, tau: float, grid: Grid) -> EigenMode:
    """Build and normalize the eigenfunction for root ``tau`` (``j > 0``).

    Parameters
    ----------
    j : int
        Positive mode index.
    tau : float
        Root of :func:`char_residual` for ``grid.L``.
    grid : Grid

    Returns
    -------
    EigenMode
    """
    if j <= 0:
        raise UsageError("build_mode expects a positive index; use EigenMode.conjugate for -j")
    u, du, d0, dL = _mode_profile(tau, grid.L, grid.nodes)
    nrm = grid.norm(u)
    if not nrm > 1e-150 or not math.isfinite(nrm):
        raise DegenerateMode(f"mode {j} has norm {nrm} before scaling")
    alpha = 1.0 / nrm
    vals = alpha * u
    vals[0] = 0.0
    vals[-1] = 0.0
    return EigenMode(
        j=j,
        tau=float(tau),
        mu=float(mu_of_tau(tau)),
        alpha=alpha,
        values=vals,
        dvalues=alpha * du,
        dphi0=alpha * d0,
        dphiL=alpha * dL,
    )


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------


def gram_tolerance(tau_max: float, grid: Grid, tol_gram: float = TOL_GRAM) -> float:
    """Gram tolerance allowing for the Simpson error on the fastest product.

    The product of two modes oscillates with wavenumber up to ``2 tau_max``,
    for which composite Simpson has relative error about ``(2 tau_max h)^4/180``.
    That is only the leading interior term; a factor of two covers the
    endpoint corrections, which matter when the top mode is low.
    """
    return max(tol_gram, 2.0 * (2.0 * tau_max * grid.h) ** 4 / 180.0)


@dataclass(frozen=True)
class SpectralBasis:
    """Conjugate-paired eigenbasis ``j = -N..-1, 1..N`` on a shared grid."""

    L: float
    lam: float
    grid: Grid
    modes: tuple[EigenMode, ...]

    @property
    def N(self) -> int:
        return len(self.modes) // 2

    @cached_property
    def indices(self) -> np.ndarray:
        return np.array([m.j for m in self.modes])

    @cached_property
    def mu(self) -> np.ndarray:
        return np.array([m.mu for m in self.modes])

    @cached_property
    def taus(self) -> np.ndarray:
        return np.array([m.tau for m in self.modes[self.N:]])

    @cached_property
    def values(self) -> np.ndarray:
        """Sample matrix, one row per mode."""
        return np.array([m.values for m in self.modes])

    @cached_property
    def dvalues(self) -> np.ndarray:
        return np.array([m.dvalues for m in self.modes])

    @cached_property
    def dphi0(self) -> np.ndarray:
        return np.array([m.dphi0 for m in self.modes])

    @cached_property
    def dphiL(self) -> np.ndarray:
        return np.array([m.dphiL for m in self.modes])

    def mode(self, j: int) -> EigenMode:
        if j == 0 or abs(j) > self.N:
            raise IndexError(f"mode index {j} outside +-1..{self.N}")
        return self.modes[self.N + j - 1] if j > 0 else self.modes[self.N + j]

    def gram(self) -> np.ndarray:
        """Quadrature Gram matrix ``G[a, b] = <phi_a, phi_b>``."""
        P = self.values
        return (P * self.grid.weights) @ P.conj().T

    def gram_error(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(2 * self.N))))


def build_basis(
    L: float,
    lam: float,
    N: int,
    grid: Grid,
    tol_bc: float = TOL_BC,
    tol_norm: float = TOL_NORM,
    tol_gram: float = TOL_GRAM,
) -> SpectralBasis:
    """Compute modes ``1..N`` and synthesize ``-1..-N`` by conjugation.

    Parameters
    ----------
    L : float
        Interval length, must be noncritical.
    lam : float
        Decay parameter carried along as context (must be positive).
    N : int
        Number of positive modes.
    grid : Grid
        Grid on ``[0, L]``.
    tol_bc, tol_norm, tol_gram : float
        Validation tolerances. The Gram tolerance is relaxed to the Simpson
        error bound when the grid under-resolves the top mode (see
        :func:`gram_tolerance`).

    Raises
    ------
    GramFailure
        If orthonormality or a boundary invariant fails.
    CriticalLength
        If ``L`` is critical or some ``phi'(0)`` vanishes.
    """
    if abs(grid.L - L) > 1e-14 * L:
        raise UsageError("grid length does not match L")
    if not lam > 0:
        raise UsageError(f"lambda must be positive, got {lam}")
    taus = locate_taus(L, N)
    pos = [build_mode(j + 1, t, grid) for j, t in enumerate(taus)]
    for m in pos:
        if m.bc_residual > tol_bc:
            raise GramFailure(f"mode {m.j} violates phi'(0)=phi'(L): {m.bc_residual:.3e}")
        if abs(grid.norm(m.values) - 1.0) > tol_norm:
            raise GramFailure(f"mode {m.j} normalization off by {abs(grid.norm(m.values) - 1):.3e}")
        if abs(m.dphi0) < 1e-12:
            raise CriticalLength(f"phi'_{m.j}(0) vanishes; L={L} behaves as critical")
    neg = [m.conjugate() for m in reversed(pos)]
    basis = SpectralBasis(L=float(L), lam=float(lam), grid=grid, modes=tuple(neg + pos))
    tol = gram_tolerance(taus[-1], grid, tol_gram)
    err = basis.gram_error()
    if err > tol:
        raise GramFailure(f"Gram error {err:.3e} exceeds {tol:.3e}")
    return basis


# ---------------------------------------------------------------------------
# validation diagnostics
# ---------------------------------------------------------------------------


def fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for derivatives ``0..m`` at ``z`` on nodes ``x``.

    Fornberg's recursion; returns an array of shape ``(len(x), m + 1)``.
    """
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def fd_matrix(nx: int, h: float, deriv: int, width: int) -> sp.csr_matrix:
    """Sparse differentiation matrix, centered where possible, one-sided near the ends."""
    rows, cols, vals = [], [], []
    half = width // 2
    for i in range(nx + 1):
        lo = min(max(i - half, 0), nx + 1 - width)
        idx = np.arange(lo, lo + width)
        wts = fd_weights(i * h, idx * h, deriv)[:, deriv]
        rows.extend([i] * width)
        cols.extend(idx)
        vals.extend(wts)
    return sp.csr_matrix((vals, (rows, cols)), shape=(nx + 1, nx + 1))


def eigen_residual(mode: EigenMode | np.ndarray, grid: Grid, mu: float | None = None) -> float:
    """Max interior residual of ``phi''' + phi' + i mu phi`` by fourth-order differences.

    Parameters
    ----------
    mode : EigenMode or array
        Mode, or raw samples (then ``mu`` must be given).
    grid : Grid
    mu : float, optional

    Returns
    -------
    float
        Maximum modulus over nodes ``3..nx-3`` where centered stencils fit.
    """
    if isinstance(mode, EigenMode):
        u, mu = mode.values, mode.mu
    else:
        u = np.asarray(mode)
    h = grid.h
    # centered 4th-order stencils
    c3 = np.array([1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0]) / (8.0 * h**3)
    c1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * h)
    n = len(u)
    d3 = sum(c3[k] * u[k : n - 6 + k] for k in range(7))
    d1 = sum(c1[k] * u[k + 1 : n - 5 + k] for k in range(5))
    r = d3 + d1 + 1j * mu * u[3:-3]
    return float(np.max(np.abs(r))) if r.size else 0.0


def fd_eigen_oracle(L: float, nx: int = 4096, k: int = 10) -> np.ndarray:
    """Positive eigenvalue parameters of a finite-difference discretization of ``A``.

    Independent of the characteristic equation: sixth-order interior stencils,
    boundary rows ``u_0 = u_n = 0`` and ``u'(0) - u'(L) = 0``, shift-invert
    Arnoldi around zero. Returns the ``k`` smallest positive ``mu``.
    """
    h = L / nx
    D3 = fd_matrix(nx, h, 3, 7)
    D1 = fd_matrix(nx, h, 1, 5)
    A = (-(D3 + D1)).tolil()
    B = sp.identity(nx + 1, format="lil")
    A[0, :] = 0
    A[0, 0] = 1
    B[0, 0] = 0
    A[nx, :] = 0
    A[nx, nx] = 1
    B[nx, nx] = 0
    r = (D1[0, :] - D1[nx, :]).toarray().ravel()
    A[1, :] = r
    B[1, 1] = 0
    A = A.tocsc()
    B = B.tocsc()
    lu = spla.splu(A)
    op = spla.LinearOperator(A.shape, matvec=lambda v: lu.solve(np.asarray(B @ v)), dtype=float)
    nev = 2 * k + 2
    vals = spla.eigs(op, k=nev, which="LM", return_eigenvectors=False, tol=1e-12, ncv=min(nx, 4 * nev))
    mu = np.sort((1.0 / vals).imag)
    return mu[mu > 0][:k]
