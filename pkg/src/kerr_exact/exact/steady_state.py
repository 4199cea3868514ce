"""Steady-state observables from the kernel series.

All sums are accumulated in log space: the weights ``2^m/m! |F_m|^2`` leave
double range long before the series converge once ``|g|`` reaches a few
hundred.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.special import gammaln

from ..density import DensityMatrix
from ..errors import ConvergenceError, CutoffError, ParameterError, TruncationError
from ..params import ReducedParams, SystemParams, reduce
from ..special_functions import DEFAULT_CONTEXT, LogComplex, PrecisionContext
from .kernel import KernelSeries, converged_series

__all__ = [
    "normalization",
    "correlation",
    "partial_mean_photon_numbers",
    "cutoff_from_partials",
    "density_matrix_from_series",
    "wigner_from_series",
    "WignerGrid",
    "SteadyState",
    "select_cutoff",
    "mean_photon_number",
    "g2",
    "density_matrix",
    "wigner",
    "wigner_grid",
]

_LOG2 = math.log(2.0)
_CHUNK = 4096


def _log_weights(n: int, base: float = 2.0) -> np.ndarray:
    m = np.arange(n)
    return m * math.log(base) - gammaln(m + 1.0)


def _shifted_exp(log_terms: np.ndarray, phases: np.ndarray, axis=None):
    """Return ``exp(log_terms - shift) * exp(1j phases)`` and the shift."""
    finite = np.isfinite(log_terms)
    if not finite.any():
        return np.zeros(log_terms.shape, complex), -np.inf
    shift = log_terms[finite].max()
    with np.errstate(invalid="ignore"):
        mag = np.where(finite, np.exp(log_terms - shift), 0.0)
    return mag * np.exp(1j * phases), shift


def normalization(ks: KernelSeries) -> LogComplex:
    """``N = sum_m 2^m/m! |F_m|^2`` as a positive LogComplex."""
    if not ks.converged:
        raise ConvergenceError("normalization needs a converged kernel series")
    terms = ks.log_norm_terms()
    terms = terms[np.isfinite(terms)]
    if terms.size == 0:
        raise ParameterError("normalization vanishes")
    return LogComplex(float(np.logaddexp.reduce(terms)), 0.0)


def correlation(i: int, j: int, ks: KernelSeries, norm: LogComplex | None = None, *,
                rel_tol: float = 1e-6) -> complex:
    """Normally ordered moment ``<a^+^i a^j>``.

    Raises :class:`CutoffError` when the last two retained terms are not
    below ``rel_tol`` times the sum of magnitudes.
    """
    if i < 0 or j < 0:
        raise ParameterError("moment orders must be nonnegative")
    if norm is None:
        norm = normalization(ks)
    top = ks.cutoff - max(i, j)
    if top < 2:
        raise CutoffError(f"series of length {len(ks)} too short for <a+^{i} a^{j}>")
    lm, ph = ks.log_magnitude, ks.phase
    m = np.arange(top + 1)
    log_terms = _log_weights(top + 1) + lm[m + j] + lm[m + i] - norm.log_magnitude
    terms, shift = _shifted_exp(log_terms, ph[m + j] - ph[m + i])
    if shift == -np.inf:
        return 0j
    scale = np.abs(terms).sum()
    if np.abs(terms[-2:]).sum() > rel_tol * scale:
        raise CutoffError(f"tail of <a+^{i} a^{j}> not negligible at cutoff {ks.cutoff}")
    return complex(terms.sum() * math.exp(shift))


def partial_mean_photon_numbers(ks: KernelSeries) -> np.ndarray:
    """``<n>_M`` for M = 0 .. cutoff-1 with both sums truncated at M."""
    lm = ks.log_magnitude
    w = _log_weights(len(ks) - 1)
    with np.errstate(invalid="ignore"):
        num = np.logaddexp.accumulate(w + 2 * lm[1:])
        den = np.logaddexp.accumulate(w + 2 * lm[:-1])
        ratio = np.exp(num - den)
    return np.where(np.isneginf(num), 0.0, ratio)


def cutoff_from_partials(n_partial: np.ndarray, rel_tol: float = 1e-6) -> int:
    """Smallest M from which ``|<n>_M - <n>_{M-2}| <= rel_tol <n>_M`` holds for good.

    The condition is required at every later M as well, and the change from
    M to M + 10 must also stay within ``rel_tol``; a single early pass is not
    trusted because the weights may still be building up a high-density peak.
    """
    if rel_tol <= 0:
        raise ParameterError("rel_tol must be positive")
    n = np.asarray(n_partial)
    if len(n) < 13:
        raise CutoffError("partial sums too short to select a cutoff")
    M = np.arange(2, len(n))
    ok = np.abs(n[M] - n[M - 2]) <= rel_tol * n[M]
    bad = np.flatnonzero(~ok)
    start = int(M[bad[-1]] + 1) if bad.size else 2
    while start + 10 < len(n) and abs(n[start + 10] - n[start]) > rel_tol * n[start]:
        start += 1
    if start + 10 >= len(n):
        raise CutoffError("series too short for the cutoff stress test")
    return start


def density_matrix_from_series(ks: KernelSeries, p_max: int,
                               norm: LogComplex | None = None) -> DensityMatrix:
    """``<p|rho|q> = 1/(N sqrt(p! q!)) sum_m F_{m+p} F*_{m+q} / m!`` for p, q <= p_max.

    Written as ``A A^+ / N`` with ``A[p, m] = F_{m+p} / sqrt(p! m!)``, which is
    Hermitian and positive semidefinite by construction.
    """
    if norm is None:
        norm = normalization(ks)
    n_m = ks.cutoff - p_max + 1
    if p_max < 0 or n_m < 2:
        raise CutoffError(f"series of length {len(ks)} too short for p_max = {p_max}")
    p = np.arange(p_max + 1)[:, None]
    m = np.arange(n_m)[None, :]
    log_a = ks.log_magnitude[p + m] - 0.5 * (gammaln(p + 1.0) + gammaln(m + 1.0))
    a, shift = _shifted_exp(log_a, ks.phase[p + m])
    rho = (a @ a.conj().T) * math.exp(2 * shift - norm.log_magnitude)
    return DensityMatrix(0.5 * (rho + rho.conj().T))


def _wigner_chunk(z, lm, ph, log_norm, tail_rel):
    r = np.abs(z)[:, None]
    theta = np.angle(z)[:, None]
    m = np.arange(len(lm))[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_r = np.log(2 * r)
        log_terms = np.where(m == 0, 0.0, m * log_r) - gammaln(m + 1.0) + lm[None, :]
    finite = np.isfinite(log_terms)
    shift = np.where(finite, log_terms, -np.inf).max(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", over="ignore"):
        mag = np.where(finite, np.exp(log_terms - shift), 0.0)
    total = (mag * np.exp(1j * (ph[None, :] - m * theta))).sum(axis=1)
    # Odd terms vanish identically when f = 0, so test pairs.
    last = np.maximum(mag[:, -1], mag[:, -2])
    prev = np.maximum(mag[:, -3], mag[:, -4])
    tail_ok = (last <= tail_rel) & (last <= prev)
    with np.errstate(divide="ignore"):
        log_w = (math.log(2 / math.pi) - log_norm + 2 * (shift[:, 0] + np.log(np.abs(total)))
                 - 2 * np.abs(z) ** 2)
    return np.exp(log_w), tail_ok


def wigner_from_series(z, ks: KernelSeries, norm: LogComplex | None = None, *,
                       tail_rel: float = 1e-17) -> np.ndarray:
    """``W(z) = 2/(pi N) |sum_m (2 z*)^m F_m / m!|^2 exp(-2|z|^2)`` for an array of z.

    Raises :class:`CutoffError` if the z-dependent series has not decayed
    below ``tail_rel`` (relative to its largest term) by the end of ``ks``.
    """
    if norm is None:
        norm = normalization(ks)
    z = np.asarray(z, dtype=complex)
    flat = z.ravel()
    out = np.empty(flat.shape)
    lm, ph = ks.log_magnitude, ks.phase
    if len(lm) < 4:
        raise CutoffError("series too short for the Wigner function")
    step = max(1, _CHUNK * 64 // len(lm))
    for start in range(0, flat.size, step):
        w, ok = _wigner_chunk(flat[start:start + step], lm, ph, norm.log_magnitude, tail_rel)
        if not ok.all():
            bad = flat[start:start + step][~ok]
            raise CutoffError(f"Wigner series not converged at |z| = {np.abs(bad).max():.4g}")
        out[start:start + step] = w
    return out.reshape(z.shape)


@dataclass(frozen=True)
class WignerGrid:
    """Wigner function on a square grid; ``values[iy, ix]`` is W(x[ix] + 1j y[iy])."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def integral(self) -> float:
        return float(np.trapezoid(np.trapezoid(self.values, self.x, axis=1), self.y))

    def local_maxima(self, rel_height: float = 0.05) -> list[tuple[complex, float]]:
        """Strict 8-neighbour maxima above ``rel_height`` times the global maximum,
        sorted by decreasing height."""
        v = self.values
        peak = maximum_filter(v, size=3, mode="constant", cval=-np.inf)
        # strictness: the maximum must be unique in its neighbourhood
        count = sum(np.roll(np.roll(v, dy, 0), dx, 1) == v
                    for dy in (-1, 0, 1) for dx in (-1, 0, 1))
        mask = (v == peak) & (count == 1) & (v > rel_height * v.max())
        iy, ix = np.nonzero(mask)
        found = [(complex(self.x[i], self.y[j]), float(v[j, i])) for j, i in zip(iy, ix)]
        return sorted(found, key=lambda t: -t[1])


class SteadyState:
    """Exact steady state at one parameter point.

    Builds and caches the kernel series on first use. The cache only ever
    replaces one immutable :class:`KernelSeries` by a longer one.

    Parameters
    ----------
    params : SystemParams
    ctx : PrecisionContext
        Base precision; the kernel builder adds guard bits on top.
    rel_tol : float
        Relative tolerance of the cutoff criterion (default ``1e-6``).
    """

    def __init__(self, params: SystemParams, ctx: PrecisionContext = DEFAULT_CONTEXT, *,
                 rel_tol: float = 1e-6, max_cutoff: int = 200000):
        self.params = params
        self.reduced: ReducedParams = reduce(params)
        self.ctx = ctx
        self.rel_tol = rel_tol
        self.max_cutoff = max_cutoff
        self._series: KernelSeries | None = None
        self._base_cutoff: int | None = None
        self._norm: LogComplex | None = None
        self._cutoff: int | None = None

    def series(self, extra: int = 8) -> KernelSeries:
        """Converged kernel series with at least ``extra`` values past convergence."""
        if self._series is None:
            self._series = converged_series(self.reduced, self.ctx, extra=extra,
                                            max_cutoff=self.max_cutoff)
            self._base_cutoff = self._series.cutoff - extra
        elif self._series.cutoff < self._base_cutoff + extra:
            longer = converged_series(self.reduced, self.ctx, extra=extra,
                                      min_cutoff=self._base_cutoff, max_cutoff=self.max_cutoff)
            self._base_cutoff = longer.cutoff - extra
            self._series = longer
        return self._series

    @property
    def normalization(self) -> LogComplex:
        if self._norm is None:
            self._norm = normalization(self.series())
        return self._norm

    @property
    def cutoff(self) -> int:
        """Cutoff selected by the relative-change criterion on ``<n>_M``."""
        if self._cutoff is None:
            partial = partial_mean_photon_numbers(self.series())
            self._cutoff = cutoff_from_partials(partial, self.rel_tol)
        return self._cutoff

    @property
    def precision_bits(self) -> int:
        return int(self.series().precision_used.max())

    def metadata(self) -> dict:
        s = self.series()
        return {"cutoff": self.cutoff, "series_length": len(s),
                "precision_bits": self.precision_bits, "kernel_method": s.method}

    def correlation(self, i: int, j: int) -> complex:
        return correlation(i, j, self.series(max(8, i + 4, j + 4)), self.normalization,
                           rel_tol=self.rel_tol)

    def mean_photon_number(self) -> float:
        n = self.correlation(1, 1)
        if abs(n.imag) > 1e-10 * max(abs(n.real), 1e-300):
            raise ArithmeticError(f"<a+ a> has an imaginary part: {n}")
        return n.real

    def g2(self) -> float:
        n = self.mean_photon_number()
        if n <= 0:
            raise ParameterError("g2 undefined at zero photon density")
        return self.correlation(2, 2).real / n ** 2

    def populations(self, p_max: int) -> np.ndarray:
        """Fock populations ``<p|rho|p>`` for p = 0 .. p_max (log-space, no matrix)."""
        s = self.series(p_max + 8)
        lm = s.log_magnitude
        n_m = s.cutoff - p_max + 1
        m = np.arange(n_m)[None, :]
        p = np.arange(p_max + 1)[:, None]
        logs = 2 * lm[p + m] - gammaln(m + 1.0) - gammaln(p + 1.0)
        with np.errstate(invalid="ignore"):
            out = np.exp(np.logaddexp.reduce(logs, axis=1) - self.normalization.log_magnitude)
        return np.nan_to_num(out)

    def auto_p_max(self, tail_tol: float = 1e-12) -> int:
        """Smallest truncation beyond which every population stays below ``tail_tol``."""
        base = self.series().cutoff - 8
        pops = self.populations(base)
        above = np.flatnonzero(pops >= tail_tol)
        return int(min(base, (above[-1] if above.size else 0) + 2))

    def density_matrix(self, p_max: int | None = None, tail_tol: float = 1e-12) -> DensityMatrix:
        if p_max is None:
            p_max = self.auto_p_max(tail_tol)
        rho = density_matrix_from_series(self.series(p_max + 8), p_max, self.normalization)
        if rho.elements[p_max, p_max].real >= tail_tol:
            raise TruncationError(
                f"<p_max|rho|p_max> = {rho.elements[p_max, p_max].real:.3e} >= {tail_tol:g}")
        return rho

    def _wigner(self, z):
        extra = 8
        while True:
            try:
                return wigner_from_series(z, self.series(extra), self.normalization)
            except CutoffError:
                if extra > self.max_cutoff:
                    raise
                extra = int(extra * 1.5) + 16

    def wigner(self, z: complex) -> float:
        return float(self._wigner(np.array([z]))[0])

    def default_extent(self) -> float:
        return 1.5 * (math.sqrt(self.mean_photon_number()) + 2.0)

    def wigner_grid(self, extent: float | None = None, n_points: int = 201) -> WignerGrid:
        """Wigner function on ``[-extent, extent]^2`` with ``n_points`` per axis."""
        if extent is None:
            extent = self.default_extent()
        axis = np.linspace(-extent, extent, n_points)
        zz = axis[None, :] + 1j * axis[:, None]
        values = self._wigner(zz)
        return WignerGrid(axis, axis.copy(), values, {"extent": extent, "n_points": n_points})


def select_cutoff(params: SystemParams, rel_tol: float = 1e-6,
                  ctx: PrecisionContext = DEFAULT_CONTEXT) -> int:
    return SteadyState(params, ctx, rel_tol=rel_tol).cutoff


def mean_photon_number(params: SystemParams, ctx: PrecisionContext = DEFAULT_CONTEXT) -> float:
    return SteadyState(params, ctx).mean_photon_number()


def g2(params: SystemParams, ctx: PrecisionContext = DEFAULT_CONTEXT) -> float:
    return SteadyState(params, ctx).g2()


def density_matrix(params: SystemParams, p_max: int | None = None,
                   ctx: PrecisionContext = DEFAULT_CONTEXT) -> DensityMatrix:
    return SteadyState(params, ctx).density_matrix(p_max)


def wigner(z: complex, params: SystemParams, ctx: PrecisionContext = DEFAULT_CONTEXT) -> float:
    return SteadyState(params, ctx).wigner(z)


def wigner_grid(extent: float | None, n_points: int, params: SystemParams,
                ctx: PrecisionContext = DEFAULT_CONTEXT) -> WignerGrid:
    return SteadyState(params, ctx).wigner_grid(extent, n_points)
