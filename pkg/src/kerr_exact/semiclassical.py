"""Fixed points of the mean-field equation and their linear stability.

The coherent amplitude obeys

    d alpha/dt = (i delta - gamma/2) alpha - i F - i G alpha* - (i u + eta) |alpha|^2 alpha.

Fixed points are found two ways: from the roots of a quintic in the density
``n = |alpha|^2`` and by multistart Newton iteration in the plane. The two
lists are merged, and a warning is emitted when they disagree.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NotAFixedPointError
from .params import SystemParams

__all__ = [
    "Stability",
    "FixedPoint",
    "IncompleteRootsWarning",
    "drift",
    "jacobian",
    "stability_of",
    "find_fixed_points",
    "max_density",
]

MARGINAL_BAND = 1e-9
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 200
DEDUP_RADIUS = 1e-6
GRID_POINTS = 25


class IncompleteRootsWarning(RuntimeWarning):
    """The algebraic and multistart searches returned different fixed points."""


class Stability(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


@dataclass(frozen=True)
class FixedPoint:
    alpha: complex
    density: float
    stability: Stability
    jacobian_eigs: tuple[complex, complex]

    @property
    def phase(self) -> float:
        return math.atan2(self.alpha.imag, self.alpha.real)


def _coefficients(params: SystemParams):
    a = complex(-params.gamma / 2, params.delta)
    b = complex(params.eta, params.u)
    return a, b, params.f_amp, params.g_amp


def drift(alpha, params: SystemParams):
    """Right-hand side of the mean-field equation (vectorized over ``alpha``)."""
    a, b, f, g = _coefficients(params)
    alpha = np.asarray(alpha, dtype=complex)
    return a * alpha - 1j * f - 1j * g * alpha.conj() - b * np.abs(alpha) ** 2 * alpha


def _wirtinger(alpha, params):
    a, b, _, g = _coefficients(params)
    h_a = a - 2 * b * np.abs(alpha) ** 2
    h_c = -1j * g - b * alpha ** 2
    return h_a, h_c


def jacobian(alpha: complex, params: SystemParams) -> np.ndarray:
    """2x2 real Jacobian of the flow in ``(Re alpha, Im alpha)``."""
    h_a, h_c = _wirtinger(complex(alpha), params)
    dx = h_a + h_c
    dy = 1j * (h_a - h_c)
    return np.array([[dx.real, dy.real], [dx.imag, dy.imag]])


def _residual_bound(alpha) -> float:
    return 1e-10 * (1 + abs(alpha) ** 3)


def _classify(eigs) -> Stability:
    top = max(e.real for e in eigs)
    if top > MARGINAL_BAND:
        return Stability.UNSTABLE
    if top < -MARGINAL_BAND:
        return Stability.STABLE
    return Stability.MARGINAL


def stability_of(alpha: complex, params: SystemParams) -> tuple[Stability, tuple[complex, complex]]:
    """Classify a fixed point by the eigenvalues of its Jacobian.

    Raises
    ------
    NotAFixedPointError
        If the drift at ``alpha`` exceeds ``1e-10 (1 + |alpha|^3)``.
    """
    alpha = complex(alpha)
    res = abs(complex(drift(alpha, params)))
    if not res < _residual_bound(alpha):
        raise NotAFixedPointError(f"|drift({alpha})| = {res:.3e} is not zero")
    eigs = np.linalg.eigvals(jacobian(alpha, params))
    eigs = tuple(sorted((complex(e) for e in eigs), key=lambda e: (e.real, e.imag)))
    return _classify(eigs), eigs


def _algebraic_candidates(params: SystemParams) -> list[complex]:
    """Fixed points from the density polynomial.

    Writing the equation as ``(A - B n) alpha - i G alpha* = i F`` and solving
    the 2x2 real-linear system gives ``alpha = u(n)/det(n)`` with
    ``u = i F (A* - B* n) + G F*`` and ``det = |A - B n|^2 - |G|^2``; taking
    the modulus yields ``n det^2 = |u|^2``.
    """
    a, b, f, g = _coefficients(params)
    p_det = np.poly1d([abs(b) ** 2, -2 * (a * b.conjugate()).real, abs(a) ** 2 - abs(g) ** 2])
    out = []
    if f == 0:
        out.append(0j)
        # det(n) = 0 roots carry a pair of phases fixed by exp(2i theta) = iG/(A - Bn)
        if g != 0:
            for n in np.atleast_1d(p_det.r):
                if abs(n.imag) > 1e-9 * max(1.0, abs(n)) or n.real <= 0:
                    continue
                n = n.real
                rot = 1j * g / (a - b * n)
                theta = 0.5 * math.atan2(rot.imag, rot.real)
                for shift in (0.0, math.pi):
                    out.append(math.sqrt(n) * complex(math.cos(theta + shift), math.sin(theta + shift)))
        return out
    u0 = 1j * f * a.conjugate() + g * f.conjugate()
    u1 = -1j * f * b.conjugate()
    p_u = np.poly1d([abs(u1) ** 2, 2 * (u0 * u1.conjugate()).real, abs(u0) ** 2])
    poly = np.poly1d([1.0, 0.0]) * p_det * p_det - p_u
    for n in np.atleast_1d(poly.r):
        if abs(n.imag) > 1e-7 * max(1.0, abs(n)) or n.real < 0:
            continue
        det = p_det(n.real)
        if det == 0:
            continue
        out.append((u0 + u1 * n.real) / det)
    return out


def _newton(z: np.ndarray, params: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Newton iteration on the real 2D system; returns roots and a success mask."""
    z = z.astype(complex).copy()
    active = np.ones(z.shape, bool)
    done = np.zeros(z.shape, bool)
    for _ in range(NEWTON_MAX_ITER):
        if not active.any():
            break
        za = z[active]
        r = drift(za, params)
        h_a, h_c = _wirtinger(za, params)
        # [h_a h_c; conj(h_c) conj(h_a)] [d; conj(d)] = -[r; conj(r)]
        det = np.abs(h_a) ** 2 - np.abs(h_c) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            step = -(h_a.conj() * r - h_c * r.conj()) / det
        bad = ~np.isfinite(step)
        step[bad] = 0
        za = za + step
        conv = (np.abs(step) <= NEWTON_TOL * (1 + np.abs(za))) & ~bad
        idx = np.flatnonzero(active)
        z[idx] = za
        done[idx[conv]] = True
        active[idx[conv | bad | (np.abs(za) > 1e8)]] = False
    return z, done


def _polish(z: complex, params: SystemParams) -> complex | None:
    roots, ok = _newton(np.array([z]), params)
    root = complex(roots[0])
    if ok[0] and abs(complex(drift(root, params))) < _residual_bound(root):
        return root
    if abs(complex(drift(z, params))) < _residual_bound(z):
        return complex(z)
    return None


def _dedup(points: list[complex]) -> list[complex]:
    kept: list[complex] = []
    for p in points:
        if all(abs(p - q) > DEDUP_RADIUS * (1 + abs(q)) for q in kept):
            kept.append(p)
    return kept


def _search_radius(params: SystemParams) -> float:
    scale = abs(complex(params.u, -params.eta))
    if scale == 0:
        scale = max(abs(complex(params.delta, params.gamma / 2)), 1.0)
    c = abs(complex(params.delta, params.gamma / 2)) / scale
    f = abs(params.f_amp) / scale
    g = abs(params.g_amp) / scale
    return 2 * (f ** (1 / 3) + g ** 0.5 + 1 + math.sqrt(c))


def _multistart(params: SystemParams) -> list[complex]:
    r = _search_radius(params)
    axis = np.linspace(-r, r, GRID_POINTS)
    grid = (axis[None, :] + 1j * axis[:, None]).ravel()
    grid = grid[np.abs(grid) <= r * (1 + 1e-12)]
    roots, ok = _newton(grid, params)
    found = [complex(z) for z in roots[ok] if abs(complex(drift(z, params))) < _residual_bound(z)]
    return _dedup(found)


def _sort_key(z: complex):
    return (round(abs(z), 9), math.atan2(z.imag, z.real))


def find_fixed_points(params: SystemParams) -> list[FixedPoint]:
    """All fixed points of the mean-field equation, sorted by ``|alpha|`` then phase.

    Warns with :class:`IncompleteRootsWarning` when the algebraic and
    multistart routes do not find the same set.
    """
    algebraic = _dedup([p for p in (_polish(z, params) for z in _algebraic_candidates(params))
                        if p is not None])
    numeric = _multistart(params)
    merged = _dedup(algebraic + numeric)
    if len(merged) != len(algebraic) or len(numeric) < len(merged):
        warnings.warn(
            f"fixed-point searches disagree: {len(algebraic)} algebraic, {len(numeric)} multistart",
            IncompleteRootsWarning, stacklevel=2)
    points = []
    for z in sorted(merged, key=_sort_key):
        stab, eigs = stability_of(z, params)
        points.append(FixedPoint(z, abs(z) ** 2, stab, eigs))
    return points


def max_density(params: SystemParams) -> float:
    """Largest mean-field density ``|alpha|^2`` over all fixed points."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IncompleteRootsWarning)
        return max((p.density for p in find_fixed_points(params)), default=0.0)
