"""Brute-force steady state of the master equation on a truncated Fock basis.

The density matrix is vectorized row-major, ``vec(rho)[p*d + q] = rho[p, q]``,
so that ``vec(A rho B) = kron(A, B.T) vec(rho)``. The generator is

    L = -i (H x 1 - 1 x H^T) + sum_k r_k (2 C_k x C_k* - C_k^+ C_k x 1 - 1 x (C_k^+ C_k)^T)

with ``C = a`` at rate ``gamma/2`` and ``C = a^2`` at rate ``eta/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import DensityMatrix, annihilation
from .errors import ParameterError, SingularSolveError, TruncationError
from .params import SystemParams
from .semiclassical import max_density

__all__ = [
    "FockOperator",
    "Superoperator",
    "hamiltonian",
    "build_liouvillian",
    "default_n_max",
    "steady_state_numeric",
    "DEFAULT_MAX_DIM",
]

# Dense storage grows as dim^4: dim = 80 already needs ~650 MB per matrix.
DEFAULT_MAX_DIM = 80


@dataclass(frozen=True)
class FockOperator:
    elements: np.ndarray

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    @property
    def dagger(self) -> FockOperator:
        return FockOperator(self.elements.conj().T)

    def __matmul__(self, other: FockOperator) -> FockOperator:
        return FockOperator(self.elements @ other.elements)

    @classmethod
    def annihilation(cls, dim: int) -> FockOperator:
        return cls(annihilation(dim))


def hamiltonian(params: SystemParams, dim: int) -> FockOperator:
    """``-delta a^+a + u/2 a^+^2 a^2 + F a^+ + F* a + G/2 a^+^2 + G*/2 a^2`` truncated to ``dim``."""
    a = annihilation(dim)
    ad = a.conj().T
    h = (-params.delta * ad @ a + params.u / 2 * ad @ ad @ a @ a
         + params.f_amp * ad + params.f_amp.conjugate() * a
         + params.g_amp / 2 * ad @ ad + params.g_amp.conjugate() / 2 * a @ a)
    return FockOperator(h)


@dataclass(frozen=True)
class Superoperator:
    """Liouvillian acting on row-major vectorized density matrices."""

    matrix: np.ndarray
    dim: int

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return (self.matrix @ np.asarray(rho, complex).reshape(-1)).reshape(self.dim, self.dim)

    def trace_row(self) -> np.ndarray:
        return np.eye(self.dim).reshape(-1).astype(complex)


def build_liouvillian(params: SystemParams, n_max: int, *,
                      max_dim: int = DEFAULT_MAX_DIM) -> Superoperator:
    """Dense Liouvillian on Fock states ``0 .. n_max``.

    Raises
    ------
    TruncationError
        If ``n_max + 1`` exceeds ``max_dim``.
    """
    if n_max < 2:
        raise ParameterError("n_max must be at least 2")
    dim = n_max + 1
    if dim > max_dim:
        raise TruncationError(f"Fock dimension {dim} exceeds the dense cap {max_dim}")
    eye = np.eye(dim)
    h = hamiltonian(params, dim).elements
    liou = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    a = annihilation(dim)
    for rate, c in ((params.gamma / 2, a), (params.eta / 2, a @ a)):
        if rate == 0:
            continue
        cdc = c.conj().T @ c
        liou += rate * (2 * np.kron(c, c.conj()) - np.kron(cdc, eye) - np.kron(eye, cdc.T))
    return Superoperator(liou, dim)


def default_n_max(params: SystemParams) -> int:
    """``max(16, ceil(4 n_sc + 10))`` with ``n_sc`` the largest mean-field density."""
    return max(16, math.ceil(4 * max_density(params) + 10))


def _solve(liou: Superoperator) -> np.ndarray:
    m = liou.matrix.copy()
    m[0, :] = liou.trace_row()
    rhs = np.zeros(m.shape[0], complex)
    rhs[0] = 1.0
    try:
        vec = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSolveError(str(exc)) from exc
    if not np.all(np.isfinite(vec)):
        raise SingularSolveError("steady-state solve produced non-finite values")
    rho = vec.reshape(liou.dim, liou.dim)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def steady_state_numeric(params: SystemParams, n_max: int | None = None, tol: float = 1e-8, *,
                         max_dim: int = DEFAULT_MAX_DIM) -> DensityMatrix:
    """Steady state by a dense linear solve with the trace condition replacing one row.

    The truncation grows by half while either of the two highest Fock
    populations is at or above ``tol``.

    Raises
    ------
    TruncationError
        If the populations have not decayed below ``tol`` at ``max_dim``.
    SingularSolveError
        If the linear system is singular.
    """
    if n_max is None:
        n_max = default_n_max(params)
    n_max = min(max(n_max, 2), max_dim - 1)
    while True:
        rho = _solve(build_liouvillian(params, n_max, max_dim=max_dim))
        pops = rho.diagonal().real
        if pops[-2:].max() < tol:
            return DensityMatrix(rho)
        if n_max + 1 >= max_dim:
            raise TruncationError(
                f"top Fock populations {pops[-2:].max():.2e} >= {tol:g} at the cap n_max = {n_max}")
        n_max = min(max_dim - 1, math.ceil(1.5 * n_max))
