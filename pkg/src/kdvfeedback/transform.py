"""Quadrature realization of the integral operator ``K`` and of ``I - K``.

``(K v)(x) = int k(x, y) v(y) dy`` is discretized with the grid's Simpson
weights as ``K_d = k diag(w)``. Operator norms refer to the weighted inner
product ``<u, v>_w = sum w_i u_i v_i``, which is the quadrature L2 product.
In that geometry ``I - K_d`` is similar to ``S = I - W^(1/2) k W^(1/2)``, so
norms and the condition number come from the singular values of ``S``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import FactorizationStale, GridMismatch
from .kernel import KernelField


@dataclass
class TransformOperator:
    """Dense ``K_d`` together with a cached LU factorization of ``I - K_d``."""

    kernel: KernelField
    matrix: np.ndarray = field(init=False, repr=False)
    _lu: tuple = field(init=False, repr=False)
    _stamp: int = field(init=False, repr=False)
    _kref: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.matrix = self.kernel.k * self.kernel.grid.weights[None, :]
        n = self.matrix.shape[0]
        self._lu = sla.lu_factor(np.eye(n) - self.matrix)
        self._stamp = self.kernel.fingerprint()
        self._kref = self.kernel.k

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def check_fresh(self) -> None:
        k = self.kernel.k
        if k is self._kref and not k.flags.writeable:
            return
        if k is not self._kref or self.kernel.fingerprint() != self._stamp:
            raise FactorizationStale("kernel samples changed after factorization")

    @cached_property
    def adjoint_matrix(self) -> np.ndarray:
        """``K_d*`` built from ``k*(x, y) = k(y, x)``."""
        return self.kernel.k.T * self.kernel.grid.weights[None, :]

    @cached_property
    def singular_values(self) -> np.ndarray:
        sw = np.sqrt(self.kernel.grid.weights)
        S = np.eye(self.size) - sw[:, None] * self.kernel.k * sw[None, :]
        return np.linalg.svd(S, compute_uv=False)

    @property
    def norm(self) -> float:
        """Weighted operator norm ``||I - K_d||``."""
        return float(self.singular_values[0])

    @property
    def inverse_norm(self) -> float:
        """Weighted operator norm ``||(I - K_d)^{-1}||``."""
        return float(1.0 / self.singular_values[-1])

    @property
    def cond(self) -> float:
        """Weighted 2-norm condition number of ``I - K_d``."""
        return self.norm * self.inverse_norm

    @property
    def norm_product(self) -> float:
        """``||I - K_d|| ||(I - K_d)^{-1}||``, the constant in ``|v| <= C |w|`` decay transfer."""
        return self.cond

    def _check(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.size:
            raise GridMismatch(f"vector has {v.shape[0]} samples, grid has {self.size}")
        return v


def apply_K(op: TransformOperator, v: np.ndarray) -> np.ndarray:
    """``(K v)_i = sum_m w_m k(x_i, y_m) v_m``."""
    return op.matrix @ op._check(v)


def apply_K_adjoint(op: TransformOperator, v: np.ndarray) -> np.ndarray:
    return op.adjoint_matrix @ op._check(v)


def forward_transform(op: TransformOperator, v: np.ndarray) -> np.ndarray:
    """``w = v - K v``."""
    v = op._check(v)
    op.check_fresh()
    return v - op.matrix @ v


def inverse_transform(op: TransformOperator, w: np.ndarray) -> np.ndarray:
    """Solve ``(I - K_d) v = w``."""
    w = op._check(w)
    op.check_fresh()
    return sla.lu_solve(op._lu, w)


def spectral_radius_estimate(op: TransformOperator, dense_limit: int = 2049, nev: int = 8) -> float:
    """Largest eigenvalue modulus of ``K_d``.

    Dense eigenvalues up to ``dense_limit`` nodes, otherwise implicitly
    restarted Arnoldi (ARPACK) for the ``nev`` largest-modulus eigenvalues.
    Plain power iteration is not used: the dominant eigenvalues of ``K_d``
    come as two conjugate pairs of almost equal modulus, and the iterate
    never settles.
    """
    K = op.matrix
    if not np.any(K):
        return 0.0
    n = K.shape[0]
    if n <= dense_limit or n <= nev + 2:
        return float(np.max(np.abs(np.linalg.eigvals(K))))
    vals = spla.eigs(K, k=nev, which="LM", return_eigenvectors=False, v0=np.ones(n), tol=1e-12)
    return float(np.max(np.abs(vals)))


def inverse_norm_power(op: TransformOperator, iters: int = 60, seed: int = 0) -> float:
    """``||(I - K_d)^{-1}||`` in the weighted norm by power iteration on the factorized solve.

    Independent cross-check of :attr:`TransformOperator.inverse_norm`. With
    ``B = W^(1/2) (I - K_d)^{-1} W^(-1/2)`` the iteration runs on ``B^T B``.
    """
    sw = np.sqrt(op.kernel.grid.weights)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.size)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(iters):
        y = sw * sla.lu_solve(op._lu, x / sw)
        z = sla.lu_solve(op._lu, y * sw, trans=1) / sw
        sigma = float(np.sqrt(np.linalg.norm(z)))
        x = z / np.linalg.norm(z)
    return sigma
