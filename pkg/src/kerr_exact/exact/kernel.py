"""The kernel sequence ``F_m(f, g, c)`` behind every steady-state observable.

Normalization convention: the kernel is taken in regularized form,

    F_m = (i sqrt(g))^m 2F1(-m, -c - i f/sqrt(g); -2c; 2) / Gamma(-2c),

which tends to ``(-2f)^m / Gamma(m - 2c)`` as ``g -> 0`` and stays finite when
``-2c`` is a nonpositive integer. The m-independent factor cancels in every
physical quantity.

Series are generated with the three-term recurrence

    (n - 2c) F[n+1] = -2 f F[n] - n g F[n-1],

obtained by integrating ``d/d alpha [alpha^n (g + alpha^2) w(alpha)]`` around
the closed contour. It depends on ``g`` only, so it is manifestly independent
of the branch of ``sqrt(g)``. Values are spot-checked against the direct
hypergeometric sum and the precision is raised until they agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ..errors import ConvergenceError, ParameterError, PoleError, PrecisionCapError
from ..params import ReducedParams
from ..special_functions import (
    DEFAULT_CONTEXT,
    LogComplex,
    PrecisionContext,
    hyp2f1_terminating,
)

__all__ = [
    "g_switch",
    "kernel",
    "kernel_mp",
    "KernelSeries",
    "build_kernel_series",
    "converged_series",
    "structural_floor",
    "tail_is_negligible",
]

# Recurrence values must agree with the direct sum to this relative accuracy.
_CHECK_RTOL = 1e-14


def g_switch(rp: ReducedParams) -> float:
    """Below this ``|g|`` the kernel is evaluated in its ``g = 0`` form."""
    return 1e-8 * (1.0 + abs(rp.f))


def _branch(rp, branch):
    if branch == "auto":
        return "drummond_walls" if abs(rp.g) < g_switch(rp) else "hypergeometric"
    if branch not in ("drummond_walls", "hypergeometric"):
        raise ParameterError(f"unknown kernel branch {branch!r}")
    return branch


def kernel_mp(m: int, rp: ReducedParams, ctx: PrecisionContext = DEFAULT_CONTEXT,
              branch: str = "auto"):
    """``F_m`` as an mpmath complex, together with the precision it was computed at."""
    if m < 0 or int(m) != m:
        raise ParameterError(f"m must be a nonnegative integer, got {m!r}")
    m = int(m)
    branch = _branch(rp, branch)
    if branch == "drummond_walls":
        mp = ctx.mp
        f, c = mp.mpc(rp.f), mp.mpc(rp.c)
        return (-2 * f) ** m * mp.rgamma(m - 2 * c), ctx.bits
    if rp.g == 0:
        raise ParameterError("hypergeometric branch needs g != 0")
    if rp.f == 0 and m % 2:
        return ctx.mp.mpc(0), ctx.bits
    # Cancellation amplifies rounding in b as much as rounding in the sum, so b
    # is rebuilt at whatever precision the sum ends up needing.
    # The sum may only escalate to twice the precision b was built at; beyond
    # that b itself (which can hide a tiny f next to c) is rebuilt.
    bits = ctx.bits
    while True:
        work = ctx.with_bits(bits)
        mp = work.mp
        sg = _sqrt_branch(mp, rp)
        c, f = mp.mpc(rp.c), mp.mpc(rp.f)
        b = -c - 1j * f / sg
        budget = PrecisionContext(bits, ctx.guard_bits, min(2 * bits, ctx.max_bits))
        try:
            res = hyp2f1_terminating(m, b, -2 * c, 2, budget, regularized=True)
        except PrecisionCapError:
            if bits >= ctx.max_bits:
                raise
            bits = min(2 * bits, ctx.max_bits)
            continue
        if res.bits <= bits:
            return (1j * sg) ** m * res.value, bits
        bits = res.bits


def _sqrt_branch(mp, rp):
    """High-precision square root of g on the branch selected by ``rp.sqrt_g``."""
    sg = mp.sqrt(mp.mpc(rp.g))
    approx = complex(sg)
    if abs(approx + rp.sqrt_g) < abs(approx - rp.sqrt_g):
        sg = -sg
    return sg


def kernel(m: int, rp: ReducedParams, ctx: PrecisionContext = DEFAULT_CONTEXT, *,
           branch: str = "auto", regularized: bool = True) -> LogComplex:
    """Single kernel value ``F_m`` in log-polar form.

    ``branch`` may force ``"hypergeometric"`` or ``"drummond_walls"``; the
    default picks the latter when ``|g| < g_switch(rp)``. With
    ``regularized=False`` the value is multiplied by ``Gamma(-2c)``, which
    gives the plain ``2F1`` normalization (``F_0 = 1``).
    """
    value, bits = kernel_mp(m, rp, ctx, branch)
    if not regularized:
        if _is_pole(-2 * rp.c):
            raise PoleError(f"Gamma(-2c) has a pole at c = {rp.c}")
        mp = value.context
        value = value * mp.gamma(-2 * mp.mpc(rp.c))
    return LogComplex.from_complex(value)


def _is_pole(z) -> bool:
    return z.imag == 0 and z.real <= 0 and z.real == math.floor(z.real)


@dataclass(frozen=True)
class KernelSeries:
    """Kernel values ``F_0 ... F_M`` stored as log-magnitudes and phases.

    ``converged`` is set by the builder once the normalization series has a
    negligible tail at ``M``.
    """

    log_magnitude: np.ndarray
    phase: np.ndarray
    precision_used: np.ndarray
    converged: bool = False
    method: str = "recurrence"

    def __post_init__(self):
        for name in ("log_magnitude", "phase", "precision_used"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.log_magnitude.shape == self.phase.shape == self.precision_used.shape):
            raise ParameterError("kernel arrays must have equal length")

    @property
    def cutoff(self) -> int:
        return len(self.log_magnitude) - 1

    def __len__(self):
        return len(self.log_magnitude)

    @property
    def values(self) -> tuple[LogComplex, ...]:
        return tuple(LogComplex(lm, ph) for lm, ph in zip(self.log_magnitude, self.phase))

    def conjugate(self) -> KernelSeries:
        phase = np.where(np.isneginf(self.log_magnitude), 0.0, -self.phase)
        # keep the (-pi, pi] convention: -pi maps back to pi
        phase = np.where(phase == -np.pi, np.pi, phase)
        return KernelSeries(self.log_magnitude, phase, self.precision_used, self.converged, self.method)

    def truncated(self, cutoff: int) -> KernelSeries:
        return KernelSeries(self.log_magnitude[:cutoff + 1], self.phase[:cutoff + 1],
                            self.precision_used[:cutoff + 1], self.converged, self.method)

    def with_converged(self, flag: bool) -> KernelSeries:
        return KernelSeries(self.log_magnitude, self.phase, self.precision_used, flag, self.method)

    def log_norm_terms(self) -> np.ndarray:
        """``log(2^m / m! |F_m|^2)`` for every stored m."""
        m = np.arange(len(self))
        return m * math.log(2.0) - gammaln(m + 1.0) + 2.0 * self.log_magnitude


def _to_log_arrays(values):
    lm = np.empty(len(values))
    ph = np.empty(len(values))
    for k, v in enumerate(values):
        if v == 0:
            lm[k], ph[k] = -np.inf, 0.0
        else:
            lm[k] = float(v.context.log(abs(v)))
            ph[k] = float(v.context.arg(v))
    ph = np.where(ph <= -np.pi, np.pi, ph)
    return lm, ph


def _recurrence(rp, cutoff, mp, use_g):
    c, f = mp.mpc(rp.c), mp.mpc(rp.f)
    g = mp.mpc(rp.g) if use_g else mp.mpc(0)
    two_c, two_f = 2 * c, 2 * f
    values = [mp.rgamma(-two_c)]
    if values[0] == 0 and f == 0:
        # c = 0 and f = 0: the regularized kernel vanishes identically, but the
        # unregularized one (F_0 = 1, F_1 = 0) is finite and obeys the same recurrence.
        values = [mp.one]
    if cutoff >= 1:
        values.append(-two_f * mp.rgamma(1 - two_c))
    for n in range(1, cutoff):
        den = n - two_c
        if den == 0:
            # 2c = n: take F[n+1] from the regularized direct sum instead.
            raise ZeroDivisionError(n)
        values.append(-(two_f * values[n] + n * g * values[n - 1]) / den)
    return values


def build_kernel_series(rp: ReducedParams, cutoff: int, ctx: PrecisionContext = DEFAULT_CONTEXT,
                        *, verify: bool = True, converged: bool = False) -> KernelSeries:
    """Kernel values ``F_0 ... F_cutoff`` via the three-term recurrence.

    The recurrence runs at ``ctx.bits + ctx.guard_bits``. When both ``f`` and
    ``g`` are nonzero the two solutions of the recurrence grow at comparable
    rates, so the result is compared with the direct hypergeometric sum at
    the dominant index and at ``cutoff``; precision is raised until the two
    agree to ``1e-14``. For ``f = 0`` or ``g = 0`` each step is a single
    ratio and no check is needed.
    """
    if cutoff < 0:
        raise ParameterError("cutoff must be nonnegative")
    use_g = abs(rp.g) >= g_switch(rp)
    bits = min(ctx.bits + ctx.guard_bits, ctx.max_bits)
    while True:
        work = ctx.with_bits(bits)
        try:
            values = _recurrence(rp, cutoff, work.mp, use_g)
            method = "recurrence"
        except ZeroDivisionError:
            values = [kernel_mp(m, rp, work)[0] for m in range(cutoff + 1)]
            method = "direct"
        lm, ph = _to_log_arrays(values)
        if np.all(np.isneginf(lm)):
            raise ParameterError(f"kernel vanishes identically for {rp}")
        series = KernelSeries(lm, ph, np.full(cutoff + 1, bits), converged, method)
        if not (verify and method == "recurrence" and use_g and rp.f != 0 and cutoff >= 2):
            return series
        if _matches_direct(series, values, rp, work):
            return series
        if bits >= ctx.max_bits:
            raise PrecisionCapError("kernel recurrence could not be verified below the precision cap")
        bits = min(bits + max(ctx.guard_bits, bits // 2), ctx.max_bits)


def _matches_direct(series, values, rp, work):
    terms = series.log_norm_terms()
    checks = {int(np.argmax(terms)), series.cutoff}
    sg = abs(rp.sqrt_g)
    for m in sorted(checks):
        direct, _ = kernel_mp(m, rp, work, "hypergeometric")
        mp = direct.context
        rec = mp.mpc(values[m])
        scale = abs(direct)
        if m >= 1:
            scale = max(scale, abs(mp.mpc(values[m - 1])) * sg)
        if scale == 0:
            continue
        if abs(rec - direct) > _CHECK_RTOL * scale:
            return False
    return True


def tail_is_negligible(series: KernelSeries, rel: float = 1e-20, window: int = 8) -> bool:
    """True when the normalization terms decay monotonically and are negligible at the end."""
    terms = series.log_norm_terms()
    if len(terms) < 2 * window:
        return False
    # pairwise maxima absorb the exact zeros of the odd terms when f = 0
    pairs = np.maximum(terms[:-1], terms[1:])
    tail = np.where(np.isneginf(pairs[-window:]), -1e300, pairs[-window:])
    if not np.all(np.diff(tail) <= 1e-12):
        return False
    total = np.logaddexp.reduce(terms[np.isfinite(terms)])
    return bool(tail[-1] < total + math.log(rel))


def structural_floor(rp: ReducedParams) -> int:
    """Index past which no resonant growth of the kernel weights can occur."""
    return int(math.ceil(2 * max(rp.c.real, 0.0) + 4 * abs(rp.g) + 4 * abs(rp.f) ** (2 / 3) + 20))


def converged_series(rp: ReducedParams, ctx: PrecisionContext = DEFAULT_CONTEXT, *,
                     extra: int = 0, min_cutoff: int = 0, max_cutoff: int = 200000,
                     rel: float = 1e-20) -> KernelSeries:
    """Build a series long enough that the normalization tail is below ``rel``.

    ``extra`` kernel values are appended beyond the converged length so
    shifted sums (higher moments, density-matrix rows) can use them.
    """
    cutoff = max(structural_floor(rp), min_cutoff, 16)
    while cutoff <= max_cutoff:
        series = build_kernel_series(rp, cutoff + extra, ctx)
        if tail_is_negligible(series.truncated(cutoff), rel):
            return series.with_converged(True)
        cutoff = int(cutoff * 1.5) + 8
    raise ConvergenceError(f"kernel series did not converge below cutoff {max_cutoff}")
