"""Physical parameters of the driven-dissipative Kerr resonator.

The rotating-frame Hamiltonian is::

    H = -delta a^+ a + (u/2) a^+ a^+ a a + F a^+ + F* a + (G/2) a^+ a^+ + (G*/2) a a

with one-photon loss ``gamma`` (jump operator ``a``) and two-photon loss
``eta`` (jump operator ``a^2``). Everything is in units with hbar = 1.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

from .errors import ParameterError

__all__ = ["SystemParams", "ReducedParams", "reduce"]


@dataclass(frozen=True)
class SystemParams:
    delta: float
    u: float = 1.0
    f_amp: complex = 0j
    g_amp: complex = 0j
    gamma: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        for name in ("delta", "u", "gamma", "eta"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        for name in ("f_amp", "g_amp"):
            value = complex(getattr(self, name))
            if not (math.isfinite(value.real) and math.isfinite(value.imag)):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.gamma < 0 or self.eta < 0:
            raise ParameterError("loss rates gamma and eta must be nonnegative")

    def replace(self, **changes) -> SystemParams:
        return replace(self, **changes)

    def conjugate(self) -> SystemParams:
        """Same model with complex-conjugated drive amplitudes."""
        return replace(self, f_amp=self.f_amp.conjugate(), g_amp=self.g_amp.conjugate())


@dataclass(frozen=True)
class ReducedParams:
    """Dimensionless parameters ``c``, ``f``, ``g`` and the branch ``sqrt_g``."""

    c: complex
    f: complex
    g: complex
    sqrt_g: complex

    def conjugate(self) -> ReducedParams:
        return ReducedParams(self.c.conjugate(), self.f.conjugate(), self.g.conjugate(),
                             self.sqrt_g.conjugate())


def reduce(params: SystemParams) -> ReducedParams:
    """``c = (delta + i gamma/2)/(u - i eta)``, ``f = F/(u - i eta)``, ``g = G/(u - i eta)``."""
    den = complex(params.u, -params.eta)
    if den == 0:
        raise ParameterError("u - i*eta vanishes: need u != 0 or eta > 0")
    c = complex(params.delta, params.gamma / 2) / den
    f = params.f_amp / den
    g = params.g_amp / den
    return ReducedParams(c=c, f=f, g=g, sqrt_g=cmath.sqrt(g))
