"""Fock-basis density matrices shared by the exact and brute-force solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = ["DensityMatrix", "annihilation"]


def annihilation(dim: int) -> np.ndarray:
    """Truncated annihilation operator, ``<n-1|a|n> = sqrt(n)``."""
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


@dataclass(frozen=True)
class DensityMatrix:
    elements: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.elements, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ParameterError(f"density matrix must be square, got shape {rho.shape}")
        rho = rho.copy()
        rho.setflags(write=False)
        object.__setattr__(self, "elements", rho)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    @property
    def populations(self) -> np.ndarray:
        return self.elements.diagonal().real.copy()

    def trace(self) -> complex:
        return complex(np.trace(self.elements))

    def hermiticity_error(self) -> float:
        """Largest ``|rho_pq - conj(rho_qp)|`` relative to the largest element."""
        rho = self.elements
        scale = np.abs(rho).max()
        if scale == 0:
            return 0.0
        return float(np.abs(rho - rho.conj().T).max() / scale)

    def expectation(self, op: np.ndarray) -> complex:
        return complex(np.trace(op @ self.elements))

    def moment(self, i: int, j: int) -> complex:
        """``Tr[a^+^i a^j rho]`` on the truncated space."""
        a = annihilation(self.dim)
        op = np.linalg.matrix_power(a.conj().T, i) @ np.linalg.matrix_power(a, j)
        return self.expectation(op)

    def mean_photon_number(self) -> float:
        return float(np.arange(self.dim) @ self.populations)

    def check(self, trace_tol: float = 1e-8, herm_tol: float = 1e-12, pop_floor: float = -1e-12):
        """Raise ``ValueError`` if trace, Hermiticity or positivity of populations fail."""
        if abs(self.trace() - 1) > trace_tol:
            raise ValueError(f"trace {self.trace()} differs from 1 by more than {trace_tol}")
        herm = self.hermiticity_error()
        if herm > herm_tol:
            raise ValueError(f"Hermiticity violated: {herm:.3e}")
        if self.populations.min() < pop_floor:
            raise ValueError(f"negative population {self.populations.min():.3e}")
        return self
