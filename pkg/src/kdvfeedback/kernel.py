"""Spectral synthesis of the transform kernel ``k(x, y)`` and the boundary gain.

The kernel is the truncated series::

    k(x, y) = sum_j [conj(phi_j(x)) - c_j varphi_j(x)] phi_j(y)

over ``|j| <= N``. Here ``varphi_j`` are perturbed modes built from the
eigenbasis, and ``c`` solves a Hermitian ``2N x 2N`` system. The feedback law
is ``F(v) = int g(y) v(y) dy`` with gain ``g(y) = k_x(L, y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from . import _backend
from .errors import (
    BoundaryViolation,
    DivideByZero,
    IllConditioned,
    InadmissibleTestFunction,
    RealnessViolation,
    SingularEntry,
    UsageError,
)
from .spectral import Grid, SpectralBasis

TOL_REAL = 1e-9
TOL_KY = 1e-3
COND_MAX = 1e12


@dataclass(frozen=True)
class GainCoefficients:
    """Solution ``c`` of the coupling system, ordered ``j = -N..-1, 1..N``."""

    lam: float
    N: int
    c: np.ndarray = field(repr=False)

    @property
    def indices(self) -> np.ndarray:
        return np.concatenate([np.arange(-self.N, 0), np.arange(1, self.N + 1)])

    def __getitem__(self, j: int) -> complex:
        if j == 0 or abs(j) > self.N:
            raise IndexError(j)
        return complex(self.c[self.N + j - 1] if j > 0 else self.c[self.N + j])


def coupling_matrix(basis: SpectralBasis, lam: float) -> np.ndarray:
    """Hermitian matrix ``M[j, k] = lam / (i mu_j - i mu_k + lam)``, ``M[j, j] = 1``.

    Parameters
    ----------
    basis : SpectralBasis
    lam : float
        Positive decay parameter.

    Returns
    -------
    numpy.ndarray
        Complex ``2N x 2N`` array in the basis ordering.
    """
    if not lam > 0:
        raise UsageError(f"lambda must be positive, got {lam}")
    mu = basis.mu
    den = 1j * (mu[:, None] - mu[None, :]) + lam
    if np.min(np.abs(den)) < 1e-14:
        raise SingularEntry("coupling denominator below 1e-14")
    M = lam / den
    np.fill_diagonal(M, 1.0)
    return M


def solve_gain_coefficients(M: np.ndarray, lam: float) -> GainCoefficients:
    """Solve ``M c = 1`` for the gain coefficients.

    The solve is a dense LU. The residual and the conjugate pairing
    ``c_{-j} = conj(c_j)`` are checked. The pair is then symmetrized so the
    downstream sums are exactly conjugation invariant.

    Raises
    ------
    IllConditioned
        If the 2-norm condition number exceeds ``1e12``, or the residual or
        pairing checks fail.
    """
    n = M.shape[0]
    if M.shape != (n, n) or n % 2:
        raise UsageError("coupling matrix must be square with even size")
    cond = np.linalg.cond(M)
    if not cond < COND_MAX:
        raise IllConditioned(f"coupling matrix condition number {cond:.3e}")
    ones = np.ones(n, dtype=complex)
    c = sla.solve(M, ones)
    scale = np.linalg.norm(c)
    res = np.linalg.norm(M @ c - ones)
    if res > 1e-10 * scale:
        raise IllConditioned(f"coefficient residual {res:.3e}")
    pair_gap = np.max(np.abs(c[::-1] - np.conj(c)))
    if pair_gap > 1e-10 * scale:
        raise IllConditioned(f"conjugate pairing broken by {pair_gap:.3e}")
    c = 0.5 * (c + np.conj(c[::-1]))
    return GainCoefficients(lam=float(lam), N=n // 2, c=c)


def _perturbation_matrix(basis: SpectralBasis, lam: float) -> np.ndarray:
    """``P[j, k] = lam phi'_k(0) / (phi'_j(0) (i mu_k - i mu_j + lam))``, ``P[j, j] = 1``."""
    d0 = basis.dphi0
    if np.min(np.abs(d0)) == 0.0:
        raise DivideByZero("some phi'_j(0) vanishes")
    mu = basis.mu
    P = lam * d0[None, :] / (d0[:, None] * (1j * (mu[None, :] - mu[:, None]) + lam))
    np.fill_diagonal(P, 1.0)
    return P


@dataclass(frozen=True)
class PerturbedModes:
    """Samples and analytic derivatives of ``varphi_j`` for all ``|j| <= N``."""

    values: np.ndarray = field(repr=False)
    dvalues: np.ndarray = field(repr=False)
    d0: np.ndarray
    dL: np.ndarray


def perturbed_modes(basis: SpectralBasis, coefficients: GainCoefficients) -> PerturbedModes:
    """All perturbed modes ``varphi_j``.

    Rows ``j > 0`` are computed from the series. Rows ``j < 0`` are their
    exact conjugates.
    """
    N = basis.N
    P = _perturbation_matrix(basis, coefficients.lam)[N:]
    Pv = P @ np.conj(basis.values)
    Pd = P @ np.conj(basis.dvalues)
    P0 = P @ np.conj(basis.dphi0)
    PL = P @ np.conj(basis.dphiL)
    Pv[:, 0] = 0.0
    Pv[:, -1] = 0.0

    def full(a):
        return np.concatenate([np.conj(a[::-1]), a], axis=0)

    return PerturbedModes(values=full(Pv), dvalues=full(Pd), d0=full(P0), dL=full(PL))


def perturbed_mode(basis: SpectralBasis, coefficients: GainCoefficients, j: int):
    """Samples of ``varphi_j`` with ``varphi_j'(0)`` and ``varphi_j'(L)``.

    Returns
    -------
    values : numpy.ndarray
    d0, dL : complex
    """
    pm = perturbed_modes(basis, coefficients)
    i = basis.N + j - 1 if j > 0 else basis.N + j
    return pm.values[i], complex(pm.d0[i]), complex(pm.dL[i])


@dataclass(frozen=True)
class KernelField:
    """Real kernel samples ``k(x_i, y_m)``, its gain trace and diagnostics.

    ``kx`` and ``ky`` hold the analytic partial derivatives when the field
    was assembled from a basis; they are ``None`` for fields loaded from a
    cache.
    """

    grid: Grid
    k: np.ndarray = field(repr=False)
    gain: np.ndarray = field(repr=False)
    coefficients: GainCoefficients
    L: float
    lam: float
    N: int
    kx: np.ndarray | None = field(default=None, repr=False)
    ky: np.ndarray | None = field(default=None, repr=False)
    max_imag: float = 0.0

    def __post_init__(self):
        for a in (self.k, self.gain, self.kx, self.ky):
            if a is not None:
                a.flags.writeable = False

    @property
    def nx(self) -> int:
        return self.grid.nx

    def fingerprint(self) -> int:
        """Cheap identity hash of the samples (used to detect stale factorizations)."""
        return hash((self.k.tobytes(), self.gain.tobytes()))

    def ky_edge_ratio(self) -> tuple[float, float]:
        """L2 norms of ``k_y(., 0)`` and ``k_y(., L)`` relative to ``||k_y||``."""
        if self.ky is None:
            raise UsageError("kernel field has no k_y samples")
        w = self.grid.weights
        total = math.sqrt(float(w @ (self.ky**2) @ w))
        e0 = math.sqrt(float(w @ self.ky[:, 0] ** 2))
        eL = math.sqrt(float(w @ self.ky[:, -1] ** 2))
        return e0 / total, eL / total


def _psi(basis: SpectralBasis, coefficients: GainCoefficients, pm: PerturbedModes):
    c = coefficients.c[:, None]
    psi = np.conj(basis.values) - c * pm.values
    dpsi = np.conj(basis.dvalues) - c * pm.dvalues
    return psi, dpsi


def _check_real(z: np.ndarray, what: str, tol: float) -> float:
    im = float(np.max(np.abs(z.imag)))
    re = float(np.max(np.abs(z.real)))
    if im > tol * (1.0 + re):
        raise RealnessViolation(f"{what}: max|Im| = {im:.3e} with max|Re| = {re:.3e}")
    return im


def feedback_gain(basis: SpectralBasis, coefficients: GainCoefficients, tol_real: float = TOL_REAL) -> np.ndarray:
    """Gain samples ``g(y) = k_x(L, y)`` from analytic endpoint derivatives."""
    pm = perturbed_modes(basis, coefficients)
    a = np.conj(basis.dphiL) - coefficients.c * pm.dL
    g = _backend.core.series_pairs(np.ascontiguousarray(a[:, None]), basis.values)[0]
    _check_real(g, "gain", tol_real)
    return np.ascontiguousarray(g.real)


def assemble_kernel(
    basis: SpectralBasis,
    coefficients: GainCoefficients,
    grid: Grid | None = None,
    tol_real: float = TOL_REAL,
    tol_ky: float = TOL_KY,
) -> KernelField:
    """Sum the truncated kernel series on the tensor grid.

    Parameters
    ----------
    basis : SpectralBasis
    coefficients : GainCoefficients
        Must be solved at the same ``N``.
    grid : Grid, optional
        Defaults to the basis grid (the only supported choice).
    tol_real : float
        Bound on ``max|Im k| / (1 + max|Re k|)``.
    tol_ky : float
        Bound on the relative L2 norms of ``k_y`` on the ``y = 0`` and
        ``y = L`` edges.

    Returns
    -------
    KernelField
    """
    grid = basis.grid if grid is None else grid
    if grid != basis.grid:
        raise UsageError("kernel must be assembled on the basis grid")
    if coefficients.N != basis.N:
        raise UsageError("coefficient and basis truncations differ")
    pm = perturbed_modes(basis, coefficients)
    psi, dpsi = _psi(basis, coefficients, pm)
    core = _backend.core
    kc = core.series_pairs(psi, basis.values)
    kxc = core.series_pairs(dpsi, basis.values)
    kyc = core.series_pairs(psi, basis.dvalues)
    im = _check_real(kc, "kernel", tol_real)
    _check_real(kxc, "k_x", tol_real)
    _check_real(kyc, "k_y", tol_real)
    k = np.ascontiguousarray(kc.real)
    edges = max(np.max(np.abs(k[0])), np.max(np.abs(k[-1])), np.max(np.abs(k[:, 0])), np.max(np.abs(k[:, -1])))
    if edges != 0.0:
        raise BoundaryViolation(f"kernel edge value {edges:.3e}")
    a = np.conj(basis.dphiL) - coefficients.c * pm.dL
    g = core.series_pairs(np.ascontiguousarray(a[:, None]), basis.values)[0]
    _check_real(g, "gain", tol_real)
    field_ = KernelField(
        grid=grid,
        k=k,
        gain=np.ascontiguousarray(g.real),
        coefficients=coefficients,
        L=basis.L,
        lam=coefficients.lam,
        N=basis.N,
        kx=np.ascontiguousarray(kxc.real),
        ky=np.ascontiguousarray(kyc.real),
        max_imag=im,
    )
    e0, eL = field_.ky_edge_ratio()
    if max(e0, eL) > tol_ky:
        raise BoundaryViolation(f"k_y edge norms {e0:.3e}, {eL:.3e} exceed {tol_ky:.1e}")
    return field_


def synthesize(L: float, lam: float, N: int, nx: int, **kw) -> tuple[SpectralBasis, KernelField]:
    """Convenience pipeline: basis, coefficients and kernel in one call."""
    from .spectral import build_basis

    grid = Grid(L, nx)
    basis = build_basis(L, lam, N, grid)
    coef = solve_gain_coefficients(coupling_matrix(basis, lam), lam)
    return basis, assemble_kernel(basis, coef, **kw)


def realness_defect(basis: SpectralBasis, lam: float) -> float:
    """``max|Im k| / max|Re k|`` for an assembly without any conjugate shortcut.

    :func:`assemble_kernel` builds negative-index perturbed modes and
    coefficients by exact conjugation, so its imaginary part vanishes
    identically. This diagnostic instead takes every row from the full
    perturbation matrix and the raw (unsymmetrized) solve, and sums the series
    with a plain matrix product. The size of its imaginary part measures how
    well the spectral data themselves respect the conjugate symmetry.
    """
    M = coupling_matrix(basis, lam)
    c = sla.solve(M, np.ones(M.shape[0], dtype=complex))
    P = _perturbation_matrix(basis, lam)
    varphi = P @ np.conj(basis.values)
    psi = np.conj(basis.values) - c[:, None] * varphi
    k = psi.T @ basis.values
    return float(np.max(np.abs(k.imag)) / np.max(np.abs(k.real)))


def c_hat_estimate(kernel: KernelField, inv_norm: float) -> float:
    """Computed bound for the cubic term of the nonlinear energy inequality.

    ``inv_norm**3 * [0.5 * sup_x ||k_x(x, .)|| + sup_y ||k_y(., y)|| (1 + ||k||)]``
    where the row and column norms are quadrature L2 norms.
    """
    if kernel.kx is None or kernel.ky is None:
        raise UsageError("derivative samples required")
    w = kernel.grid.weights
    kx_rows = np.sqrt((kernel.kx**2) @ w)
    ky_cols = np.sqrt(w @ (kernel.ky**2))
    k_norm = math.sqrt(float(w @ (kernel.k**2) @ w))
    return inv_norm**3 * (0.5 * float(kx_rows.max()) + float(ky_cols.max()) * (1.0 + k_norm))


# ---------------------------------------------------------------------------
# weak-form check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Factor:
    """One-dimensional factor with derivatives up to order three."""

    name: str
    derivs: tuple[Callable[[np.ndarray], np.ndarray], ...]

    def __call__(self, x, order: int = 0):
        return self.derivs[order](x)


def sin2_factor(n: int, L: float) -> Factor:
    """``sin^2(n pi x / L)``: vanishes with its derivative at both ends."""
    a = n * math.pi / L
    return Factor(
        f"sin^2({n}pi x/L)",
        (
            lambda x: np.sin(a * x) ** 2,
            lambda x: a * np.sin(2 * a * x),
            lambda x: 2 * a * a * np.cos(2 * a * x),
            lambda x: -4 * a**3 * np.sin(2 * a * x),
        ),
    )


def sin_factor(n: int, L: float) -> Factor:
    """``sin(n pi x / L)``: vanishes at both ends."""
    a = n * math.pi / L
    return Factor(
        f"sin({n}pi x/L)",
        (
            lambda x: np.sin(a * x),
            lambda x: a * np.cos(a * x),
            lambda x: -a * a * np.sin(a * x),
            lambda x: -a**3 * np.cos(a * x),
        ),
    )


@dataclass(frozen=True)
class SeparableTestFunction:
    """``rho(x, y) = X(x) Y(y)`` with analytic derivatives."""

    X: Factor
    Y: Factor

    @property
    def name(self) -> str:
        return f"{self.X.name}*{self.Y.name}"

    def values(self, x, y):
        return np.outer(self.X(x), self.Y(y))

    def operator(self, x, y, lam: float):
        """``rho_yyy + rho_y + rho_xxx + rho_x - lam rho`` on the tensor grid."""
        X0, X1, X3 = self.X(x), self.X(x, 1), self.X(x, 3)
        Y0, Y1, Y3 = self.Y(y), self.Y(y, 1), self.Y(y, 3)
        return np.outer(X0, Y3 + Y1) + np.outer(X3 + X1, Y0) - lam * np.outer(X0, Y0)

    def diagonal(self, x):
        return self.X(x) * self.Y(x)

    def edge_defect(self, L: float) -> float:
        """Largest violation of the test-class edge conditions."""
        e = np.array([0.0, L])
        s = np.linspace(0.0, L, 65)
        vals = [
            np.abs(self.X(e)).max() * np.abs(self.Y(s)).max(),
            np.abs(self.Y(e)).max() * np.abs(self.X(s)).max(),
            np.abs(self.X(e, 1)).max() * np.abs(self.Y(s)).max(),
        ]
        return float(max(vals))


def canned_test_functions(L: float) -> list[SeparableTestFunction]:
    """Three independent admissible test functions."""
    return [
        SeparableTestFunction(sin2_factor(1, L), sin2_factor(1, L)),
        SeparableTestFunction(sin2_factor(1, L), sin_factor(2, L)),
        SeparableTestFunction(sin2_factor(2, L), sin_factor(1, L)),
    ]


def transposition_residual(kernel: KernelField, rho: SeparableTestFunction, lam: float | None = None) -> float:
    """Weak-form defect ``|iint (L* rho) k dx dy + lam int rho(x, x) dx|``.

    Here ``L* rho = rho_yyy + rho_y + rho_xxx + rho_x - lam rho``.

    Raises
    ------
    InadmissibleTestFunction
        If ``rho`` or ``rho_x`` fails to vanish where the test class requires.
    """
    lam = kernel.lam if lam is None else lam
    if rho.edge_defect(kernel.L) > 1e-10:
        raise InadmissibleTestFunction(f"{rho.name} violates the edge conditions")
    x = kernel.grid.nodes
    w = kernel.grid.weights
    op = rho.operator(x, x, lam)
    bulk = float(w @ (op * kernel.k) @ w)
    diag = float(w @ rho.diagonal(x))
    return abs(bulk + lam * diag)
