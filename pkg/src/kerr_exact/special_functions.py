"""Complex special functions evaluated at a controlled binary precision.

All arithmetic runs inside private :class:`mpmath.MPContext` instances keyed by
precision and cached per thread, so nothing here touches the global
``mpmath.mp`` state and the functions are safe to call concurrently.
"""

from __future__ import annotations

import cmath
import math
import threading
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import mpmath

from .errors import ConvergenceError, ParameterError, PoleError, PrecisionCapError

__all__ = [
    "PrecisionContext",
    "DEFAULT_CONTEXT",
    "LogComplex",
    "wrap_phase",
    "ln_gamma_complex",
    "Hyp2F1Result",
    "hyp2f1_terminating",
    "hyp_pfq_regularized",
]

_TWO_PI = 2.0 * math.pi
# Escalate once fewer than this many significant bits survive a cancellation.
_SAFE_BITS = 50

_local = threading.local()


def _mp_context(bits: int) -> mpmath.MPContext:
    cache = getattr(_local, "contexts", None)
    if cache is None:
        cache = _local.contexts = {}
    mp = cache.get(bits)
    if mp is None:
        mp = mpmath.MPContext()
        mp.prec = bits
        cache[bits] = mp
    return mp


@dataclass(frozen=True)
class PrecisionContext:
    """Working precision policy.

    Parameters
    ----------
    bits : int
        Mantissa bits used for arithmetic (at least 53, i.e. IEEE double).
    guard_bits : int
        Minimum number of bits added on every escalation.
    max_bits : int
        Hard cap; escalating past it raises :class:`PrecisionCapError`.
    """

    bits: int = 53
    guard_bits: int = 64
    max_bits: int = 16384

    def __post_init__(self):
        if self.guard_bits < 1:
            raise ParameterError("guard_bits must be positive")
        if not 53 <= self.bits <= self.max_bits:
            raise ParameterError(
                f"need 53 <= bits <= max_bits, got bits={self.bits}, max_bits={self.max_bits}"
            )

    @property
    def mp(self) -> mpmath.MPContext:
        """Thread-local mpmath context running at ``self.bits``."""
        return _mp_context(self.bits)

    def escalated(self, min_bits: int | None = None) -> PrecisionContext:
        """Return a context with strictly more bits, capped at ``max_bits``."""
        if self.bits >= self.max_bits:
            raise PrecisionCapError(f"precision cap of {self.max_bits} bits exhausted")
        target = self.bits + self.guard_bits
        if min_bits is not None:
            target = max(target, min_bits)
        return PrecisionContext(min(target, self.max_bits), self.guard_bits, self.max_bits)

    def with_bits(self, bits: int) -> PrecisionContext:
        return PrecisionContext(bits, self.guard_bits, self.max_bits)


DEFAULT_CONTEXT = PrecisionContext()


def wrap_phase(phase: float) -> float:
    """Map an angle into the half-open interval (-pi, pi]."""
    wrapped = phase - _TWO_PI * math.ceil((phase - math.pi) / _TWO_PI)
    # ceil() can land on -pi itself through rounding.
    return math.pi if wrapped <= -math.pi else wrapped


@dataclass(frozen=True)
class LogComplex:
    """A complex number stored as ``exp(log_magnitude + 1j * phase)``.

    Zero is encoded as ``log_magnitude = -inf`` with ``phase = 0``.
    """

    log_magnitude: float
    phase: float = 0.0

    def __post_init__(self):
        lm = float(self.log_magnitude)
        if math.isnan(lm) or lm == math.inf:
            raise ParameterError(f"invalid log-magnitude {self.log_magnitude!r}")
        phase = 0.0 if lm == -math.inf else wrap_phase(float(self.phase))
        object.__setattr__(self, "log_magnitude", lm)
        object.__setattr__(self, "phase", phase)

    @classmethod
    def zero(cls) -> LogComplex:
        return cls(-math.inf, 0.0)

    @classmethod
    def from_complex(cls, value) -> LogComplex:
        """Convert a Python or mpmath number without overflowing."""
        if isinstance(value, (mpmath.mpc, mpmath.mpf)) or hasattr(value, "_mpc_") or hasattr(value, "_mpf_"):
            if value == 0:
                return cls.zero()
            return cls(float(mpmath.log(abs(value))), float(mpmath.arg(value)))
        value = complex(value)
        if value == 0:
            return cls.zero()
        return cls(math.log(abs(value)), cmath.phase(value))

    @property
    def is_zero(self) -> bool:
        return self.log_magnitude == -math.inf

    def to_complex(self) -> complex:
        if self.is_zero:
            return 0j
        if self.log_magnitude > 709.0:
            raise OverflowError(f"|z| = exp({self.log_magnitude}) exceeds double range")
        return cmath.rect(math.exp(self.log_magnitude), self.phase)

    def conjugate(self) -> LogComplex:
        return LogComplex(self.log_magnitude, -self.phase)

    def __mul__(self, other: LogComplex) -> LogComplex:
        if not isinstance(other, LogComplex):
            other = LogComplex.from_complex(other)
        if self.is_zero or other.is_zero:
            return LogComplex.zero()
        return LogComplex(self.log_magnitude + other.log_magnitude, self.phase + other.phase)

    __rmul__ = __mul__

    def __truediv__(self, other: LogComplex) -> LogComplex:
        if not isinstance(other, LogComplex):
            other = LogComplex.from_complex(other)
        if other.is_zero:
            raise ZeroDivisionError("division by LogComplex zero")
        if self.is_zero:
            return LogComplex.zero()
        return LogComplex(self.log_magnitude - other.log_magnitude, self.phase - other.phase)


def _is_nonpositive_integer(z) -> bool:
    z = complex(z)
    return z.imag == 0 and z.real <= 0 and z.real == math.floor(z.real)


def ln_gamma_complex(z, ctx: PrecisionContext = DEFAULT_CONTEXT):
    """Principal branch of ``log Gamma(z)`` as an mpmath complex at ``ctx.bits``.

    Raises
    ------
    PoleError
        If ``z`` is 0, -1, -2, ...
    """
    if _is_nonpositive_integer(z):
        raise PoleError(f"Gamma has a pole at z = {complex(z)}")
    mp = ctx.mp
    return mp.mpc(mp.loggamma(mp.mpc(z)))


class Hyp2F1Result(NamedTuple):
    value: object
    """The sum as an mpmath complex at precision ``bits``."""
    cancellation_bits: float
    """``log2(max_k |term_k| / |sum|)`` measured at the final precision."""
    bits: int
    """Precision the accepted value was computed at."""


def _rgamma_tracker(mp, c):
    """Yield ``1/Gamma(c + k)`` for k = 0, 1, ... without hitting poles."""
    if _is_nonpositive_integer(c):
        n0 = int(-complex(c).real)
        for _ in range(n0 + 1):
            yield mp.zero
        r = mp.one
        k = 1
        while True:
            yield r
            r = r / k
            k += 1
    r = mp.rgamma(c)
    k = 0
    while True:
        yield r
        r = r / (c + k)
        k += 1


def _terminating_terms(mp, m, b, c, z, regularized):
    b, c, z = mp.mpc(b), mp.mpc(c), mp.mpc(z)
    total = mp.mpc(0)
    biggest = mp.zero
    poch = mp.mpc(1)  # (-m)_k (b)_k z^k / k!
    if regularized:
        rg = _rgamma_tracker(mp, c)
    for k in range(m + 1):
        if regularized:
            term = poch * next(rg)
        else:
            term = poch
        total += term
        mag = abs(term)
        if mag > biggest:
            biggest = mag
        if k < m:
            poch = poch * ((k - m) * (b + k) * z / (k + 1))
            if not regularized:
                poch = poch / (c + k)
    return total, biggest


def _cancellation_bits(total, biggest) -> float:
    if biggest == 0:
        return 0.0
    if total == 0:
        return math.inf
    return float(mpmath.log(biggest / abs(total), 2))


def hyp2f1_terminating(m: int, b, c, z, ctx: PrecisionContext = DEFAULT_CONTEXT, *,
                       regularized: bool = False) -> Hyp2F1Result:
    """Terminating Gauss series ``2F1(-m, b; c; z)``.

    Terms follow the forward recurrence
    ``t[k+1] = t[k] (k - m)(b + k) z / ((c + k)(k + 1))``. The working
    precision is escalated until the measured cancellation leaves at least
    50 significant bits. With ``regularized=True`` the sum is divided by
    ``Gamma(c)`` term by term, which stays finite when ``c`` is a
    nonpositive integer.
    """
    if m < 0 or int(m) != m:
        raise ParameterError(f"m must be a nonnegative integer, got {m!r}")
    m = int(m)
    if not regularized and _is_nonpositive_integer(c) and -complex(c).real <= m - 1:
        raise PoleError(f"(c)_k vanishes for c = {complex(c).real:g} within k <= {m}")
    while True:
        mp = ctx.mp
        total, biggest = _terminating_terms(mp, m, b, c, z, regularized)
        cancel = _cancellation_bits(total, biggest)
        if cancel <= ctx.bits - _SAFE_BITS:
            return Hyp2F1Result(total, cancel, ctx.bits)
        needed = None if math.isinf(cancel) else math.ceil(cancel) + _SAFE_BITS + ctx.guard_bits
        ctx = ctx.escalated(needed)


def _pfq_sum(mp, a, b, z, tol, max_terms):
    a = [mp.mpc(x) for x in a]
    b = [mp.mpc(x) for x in b]
    z = mp.mpc(z)
    trackers = [_rgamma_tracker(mp, bm) for bm in b]
    # Terms may vanish identically (regularized poles) or grow before k ~ -Re(b).
    k_min = 1 + max([0] + [math.ceil(-complex(bm).real) for bm in b])
    poch = mp.mpc(1)
    total = mp.mpc(0)
    biggest = mp.zero
    quiet = 0
    for k in range(max_terms):
        term = poch
        for tr in trackers:
            term = term * next(tr)
        total += term
        mag = abs(term)
        if mag > biggest:
            biggest = mag
        ratio = abs(z) / (k + 1)
        for am in a:
            ratio *= abs(am + k)
        for bm in b:
            d = abs(bm + k)
            ratio = ratio / d if d else mp.inf
        if k >= k_min and ratio < 0.5 and mag <= tol * abs(total):
            quiet += 1
            if quiet >= 2:
                return total, biggest
        else:
            quiet = 0
        step = z / (k + 1)
        for am in a:
            step *= am + k
        poch = poch * step
        if poch == 0 and k >= k_min:
            return total, biggest
    raise ConvergenceError(f"pFq series not converged after {max_terms} terms")


def hyp_pfq_regularized(a: Sequence, b: Sequence, z, tol: float | None = None,
                        ctx: PrecisionContext = DEFAULT_CONTEXT, *, max_terms: int = 200000):
    """Regularized generalized hypergeometric function ``pFq(a; b; z) / prod Gamma(b)``.

    Summation stops once two consecutive terms are below ``tol`` relative to
    the partial sum, in the regime where terms are shrinking. ``tol``
    defaults to ``2**-ctx.bits``. Parameters ``b`` at nonpositive integers
    are allowed: the corresponding leading terms vanish.
    """
    p, q = len(a), len(b)
    if p > q + 1:
        raise ParameterError(f"p = {p} > q + 1 = {q + 1}: series diverges")
    if p == q + 1 and abs(complex(z)) >= 1:
        raise ConvergenceError("p = q + 1 requires |z| < 1")
    if tol is not None and not tol > 0:
        raise ParameterError("tol must be positive")
    while True:
        mp = ctx.mp
        eps = mp.mpf(2) ** (-ctx.bits) if tol is None else mp.mpf(tol)
        total, biggest = _pfq_sum(mp, a, b, z, eps, max_terms)
        if biggest == 0:
            return total
        cancel = _cancellation_bits(total, biggest)
        if cancel <= ctx.bits - _SAFE_BITS:
            return total
        needed = None if math.isinf(cancel) else math.ceil(cancel) + _SAFE_BITS + ctx.guard_bits
        ctx = ctx.escalated(needed)
