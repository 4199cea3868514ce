"""Run configuration: flat ``key=value`` text with dotted keys.

Example::

    mode=observables
    params.delta=0.5
    params.f_amp=1
    params.g_amp=(0.5+0.1j)
    params.gamma=0.03
    params.eta=0.03

Blank lines and lines starting with ``#`` are ignored. With the default
``units=U`` every energy and rate is in units of the Kerr strength, so
``params.u`` must stay 1; ``units=absolute`` lifts that restriction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError, ParameterError
from .params import SystemParams

__all__ = ["MODES", "RunConfig", "parse_lines", "load_config", "resolve"]

MODES = ("observables", "rho", "wigner", "semiclassical", "scan", "phase-transition", "benchmark")


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _complex(s: str) -> complex:
    return complex(s.replace(" ", ""))


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(_float(x) for x in s.split(",") if x.strip())


def _choice(*options: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        s = s.strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


def _positive(parse):
    def inner(s):
        v = parse(s)
        if v <= 0:
            raise ValueError("must be positive")
        return v
    return inner


# key -> (parser, default); None means "not set"
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "mode": (_choice(*MODES), "observables"),
    "units": (_choice("U", "absolute"), "U"),
    "out": (str, "."),
    "tol_series": (_positive(_float), 1e-6),
    "precision_bits": (int, 53),
    "precision_max_bits": (int, 16384),
    "jobs": (_positive(int), 1),
    "params.delta": (_float, 0.0),
    "params.u": (_float, 1.0),
    "params.f_amp": (_complex, 0j),
    "params.g_amp": (_complex, 0j),
    "params.gamma": (_float, 0.0),
    "params.eta": (_float, 0.0),
    "rho.p_max": (int, None),
    "wigner.extent": (_positive(_float), None),
    "wigner.n_points": (_positive(int), 201),
    "wigner.deltas": (_floats, None),
    "scan.axis": (_choice("delta", "F", "G"), "delta"),
    "scan.start": (_float, None),
    "scan.stop": (_float, None),
    "scan.num": (_positive(int), 41),
    "scan.gamma_factor": (_float, None),
    "scan.adaptive": (_bool, False),
    "scan.threshold": (_positive(_float), 0.05),
    "pt.kind": (_choice("coherent", "two_photon"), "coherent"),
    "pt.drives": (_floats, None),
    "pt.tau_min": (_float, None),
    "pt.tau_max": (_float, None),
    "pt.threshold": (_positive(_float), 0.01),
    "bench.start": (_float, -1.0),
    "bench.stop": (_float, 3.0),
    "bench.step": (_positive(_float), 0.05),
    "bench.n_max": (int, None),
}

_PARAM_FIELDS = ("delta", "u", "f_amp", "g_amp", "gamma", "eta")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, (float, complex)):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration.

    ``values`` maps every schema key to its typed value (``None`` when an
    optional key is unset).
    """

    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def mode(self) -> str:
        return self.values["mode"]

    @property
    def params(self) -> SystemParams:
        return SystemParams(**{k: self.values[f"params.{k}"] for k in _PARAM_FIELDS})

    def to_lines(self) -> list[str]:
        """Serialized form; ``parse_lines(cfg.to_lines())`` rebuilds ``cfg`` exactly."""
        return [f"{k}={_format(v)}" for k, v in sorted(self.values.items()) if v is not None]

    def to_dict(self) -> dict:
        """JSON-ready view (complex values as ``[re, im]``)."""
        out = {}
        for k, v in sorted(self.values.items()):
            if isinstance(v, complex):
                v = [v.real, v.imag]
            elif isinstance(v, tuple):
                v = list(v)
            out[k] = v
        return out


def parse_lines(lines) -> dict[str, str]:
    """Raw ``key -> text`` mapping from config lines."""
    raw = {}
    for num, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {num}", f"expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        raw[_canonical_key(key.strip())] = value.strip()
    return raw


def _canonical_key(key: str) -> str:
    if "." not in key:
        key = key.replace("-", "_")
    if key in _PARAM_FIELDS:
        key = f"params.{key}"
    if key not in SCHEMA:
        raise ConfigError(key, "unknown configuration key")
    return key


def load_config(path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    return parse_lines(text.splitlines())


def resolve(*layers: dict[str, str]) -> RunConfig:
    """Merge raw layers (later ones win), parse and validate every field."""
    raw: dict[str, str] = {}
    for layer in layers:
        for key, value in layer.items():
            raw[_canonical_key(key)] = value
    values = {}
    for key, (parse, default) in SCHEMA.items():
        if key in raw and raw[key] != "":
            try:
                values[key] = parse(raw[key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(key, f"invalid value {raw[key]!r}: {exc}") from None
        else:
            values[key] = default
    if values["units"] == "U" and values["params.u"] != 1.0:
        raise ConfigError("params.u", "must be 1 when units=U (set units=absolute to change it)")
    if not 53 <= values["precision_bits"] <= values["precision_max_bits"]:
        raise ConfigError("precision_bits", "need 53 <= precision_bits <= precision_max_bits")
    cfg = RunConfig(values)
    try:
        p = cfg.params
    except ParameterError as exc:
        raise ConfigError("params", str(exc)) from None
    if p.u == 0 and p.eta == 0:
        raise ConfigError("params.u", "u and eta cannot both vanish")
    return cfg
