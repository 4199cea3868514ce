"""Closed forms of the steady state without one-photon drive (f = 0).

With f = 0 only even kernel indices survive and

    F_{2m} ~ (-g)^m Gamma(1/2 + m) / Gamma(1/2 + m - c),

so every series collapses to a generalized hypergeometric function. Moments
carry the argument ``|g|^2`` (weights ``2^m/m!``) while density-matrix
elements carry ``|g/2|^2`` (weights ``1/m!``); both follow from the duplication
formula applied to the even-index sums.
"""

from __future__ import annotations

import math

from ..errors import ParameterError
from ..params import ReducedParams
from ..special_functions import DEFAULT_CONTEXT, PrecisionContext, hyp_pfq_regularized

__all__ = ["closed_form_correlation_f0", "closed_form_rho_f0", "closed_form_wigner_f0"]


def _require_f0(rp: ReducedParams):
    if rp.f != 0:
        raise ParameterError(f"closed forms need f = 0, got f = {rp.f}")


def _denominator(mp, rp, ctx):
    c = mp.mpc(rp.c)
    return hyp_pfq_regularized([0.5], [0.5 - c, 0.5 - mp.conj(c)], abs(rp.g) ** 2, ctx=ctx)


def _even_odd_sum(mp, a, b, s, rp, x, ctx):
    """``Gamma(a) Gamma(b) 2F3~(a, b; s, a - c, b - c*; x)``."""
    c = mp.mpc(rp.c)
    return (mp.gamma(a) * mp.gamma(b)
            * hyp_pfq_regularized([a, b], [s, a - c, b - mp.conj(c)], x, ctx=ctx))


def _moment_like(i, j, rp, ctx, arg, p_weights):
    # i is the conjugated index (powers of g*), j the plain one (powers of g)
    _require_f0(rp)
    if i < 0 or j < 0:
        raise ParameterError("indices must be nonnegative")
    if (i + j) % 2:
        return 0j
    mp = ctx.mp
    g = mp.mpc(rp.g)
    odd = i % 2
    hi, hj = i // 2, j // 2
    s = mp.mpf(1.5) if odd else mp.mpf(0.5)
    a, b = s + hj, s + hi
    value = _even_odd_sum(mp, a, b, s, rp, arg, ctx) / mp.sqrt(mp.pi)
    value *= (-g) ** (hj + odd) * (-mp.conj(g)) ** (hi + odd)
    value *= p_weights(mp, odd)
    return complex(value / _denominator(mp, rp, ctx))


def closed_form_correlation_f0(i: int, j: int, rp: ReducedParams,
                               ctx: PrecisionContext = DEFAULT_CONTEXT) -> complex:
    """``<a^+^i a^j>`` for f = 0 from the 2F3 closed form (argument ``|g|^2``)."""
    return _moment_like(i, j, rp, ctx, abs(rp.g) ** 2, lambda mp, odd: 1)


def closed_form_rho_f0(p: int, q: int, rp: ReducedParams,
                       ctx: PrecisionContext = DEFAULT_CONTEXT) -> complex:
    """``<p|rho|q>`` for f = 0 from the 2F3 closed form (argument ``|g/2|^2``)."""
    return _rho(p, q, rp, ctx, abs(rp.g / 2) ** 2)


def _rho(p, q, rp, ctx, arg):
    def weights(mp, odd):
        w = 1 / mp.sqrt(mp.factorial(p) * mp.factorial(q))
        return w / 2 if odd else w
    # <p|rho|q> carries F_p F_q^*, so the ket index plays the role of j
    return _moment_like(q, p, rp, ctx, arg, weights)


def _rho_with_moment_argument(p, q, rp, ctx=DEFAULT_CONTEXT):
    """Density-matrix closed form with ``|g|^2`` in place of ``|g/2|^2``.

    Kept only so the tests can show that this variant does not reproduce the
    general series.
    """
    return _rho(p, q, rp, ctx, abs(rp.g) ** 2)


def closed_form_wigner_f0(z: complex, rp: ReducedParams,
                          ctx: PrecisionContext = DEFAULT_CONTEXT) -> float:
    """``W(z) = 2/pi |0F1(; 1/2 - c; -g z*^2)|^2 / 1F2(1/2; 1/2 - c, 1/2 - c*; |g|^2) e^{-2|z|^2}``.

    Evaluated with regularized functions: the Gamma factors cancel between
    numerator and denominator.
    """
    _require_f0(rp)
    mp = ctx.mp
    c = mp.mpc(rp.c)
    zc = mp.conj(mp.mpc(z))
    num = hyp_pfq_regularized([], [0.5 - c], -mp.mpc(rp.g) * zc ** 2, ctx=ctx)
    w = 2 / mp.pi * abs(num) ** 2 / _denominator(mp, rp, ctx).real
    return float(w * mp.exp(-2 * abs(mp.mpc(z)) ** 2))
