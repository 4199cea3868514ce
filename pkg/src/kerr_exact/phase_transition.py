"""Parameter scans, thermodynamic-limit rescaling and critical-exponent fits.

Two rescalings are supported:

* coherent drive (G = 0): ``chi = <n> |f|^(-2/3)``, ``tau = sgn(delta) |c| |f|^(-2/3)``;
* two-photon drive (F = 0): ``chi = <n> / |g|``, ``tau = sgn(delta) |c| / |g|``.

At a first-order transition ``d chi/d tau`` peaks; the peak height and its
distance from the critical point follow power laws in the drive.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .errors import KerrExactError, NoInteriorMaximumError, ParameterError
from .exact.steady_state import SteadyState
from .params import SystemParams, reduce
from .special_functions import DEFAULT_CONTEXT, PrecisionContext

__all__ = [
    "ScanTable",
    "FitResult",
    "ScalingStudy",
    "scan",
    "adaptive_scan",
    "rescale_coherent",
    "rescale_two_photon",
    "derivative_peak",
    "power_law_fit",
    "fit_critical_point",
    "kink_sharpness",
    "scaling_params",
    "coherent_scaling_study",
    "two_photon_scaling_study",
]

AXES = ("delta", "F", "G")


@dataclass(frozen=True)
class ScanTable:
    """One row per axis value; failed points keep their row with NaN observables.

    ``tau`` and ``chi`` are ``None`` until a rescaling is applied.
    """

    axis_name: str
    axis_values: np.ndarray
    params: tuple[SystemParams, ...]
    mean_n: np.ndarray
    g2: np.ndarray
    cutoff: np.ndarray
    precision_bits: np.ndarray
    errors: tuple[str | None, ...]
    scaling: str | None = None
    tau: np.ndarray | None = None
    chi: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.axis_values, float)
        if v.size == 0 or np.any(np.diff(v) <= 0):
            raise ParameterError("axis values must be nonempty and strictly increasing")
        n = v.size
        for name in ("params", "mean_n", "g2", "cutoff", "precision_bits", "errors"):
            if len(getattr(self, name)) != n:
                raise ParameterError(f"column {name} has the wrong length")

    def __len__(self):
        return len(self.axis_values)

    @property
    def ok(self) -> np.ndarray:
        return np.array([e is None for e in self.errors])

    def raw(self) -> ScanTable:
        """The table without rescaled columns."""
        return replace(self, scaling=None, tau=None, chi=None)

    def merged(self, other: ScanTable) -> ScanTable:
        """Union of two scans along the same axis (rows of ``other`` win on ties)."""
        if other.axis_name != self.axis_name:
            raise ParameterError("cannot merge scans along different axes")
        rows = {float(x): (self, k) for k, x in enumerate(self.axis_values)}
        rows.update({float(x): (other, k) for k, x in enumerate(other.axis_values)})
        keys = sorted(rows)
        pick = [rows[x] for x in keys]
        return ScanTable(
            self.axis_name,
            np.array(keys),
            tuple(t.params[k] for t, k in pick),
            np.array([t.mean_n[k] for t, k in pick]),
            np.array([t.g2[k] for t, k in pick]),
            np.array([t.cutoff[k] for t, k in pick]),
            np.array([t.precision_bits[k] for t, k in pick]),
            tuple(t.errors[k] for t, k in pick),
        )

    def columns(self) -> dict[str, list]:
        cols = {
            self.axis_name: list(self.axis_values),
            "delta": [p.delta for p in self.params],
            "gamma": [p.gamma for p in self.params],
            "mean_n": list(self.mean_n),
            "g2": list(self.g2),
            "cutoff": [int(c) for c in self.cutoff],
            "precision_bits": [int(b) for b in self.precision_bits],
            "error": [e or "" for e in self.errors],
        }
        if self.scaling is not None:
            cols["tau"] = list(self.tau)
            cols["chi"] = list(self.chi)
        return cols


@dataclass(frozen=True)
class FitResult:
    exponent: float
    amplitude: float
    r_squared: float
    points_used: int
    residual_std_error: float


def _solve_point(params: SystemParams, rel_tol: float, ctx: PrecisionContext):
    try:
        s = SteadyState(params, ctx, rel_tol=rel_tol)
        n = s.mean_photon_number()
        g2 = s.g2() if n > 0 else math.nan
        meta = s.metadata()
        return n, g2, meta["cutoff"], meta["precision_bits"], None
    except (KerrExactError, ArithmeticError) as exc:
        return math.nan, math.nan, -1, -1, f"{type(exc).__name__}: {exc}"


def _point_params(template: SystemParams, axis: str, value: float,
                  gamma_of_delta: Callable[[float], float] | None) -> SystemParams:
    if axis == "delta":
        p = template.replace(delta=value)
    elif axis == "F":
        phase = template.f_amp / abs(template.f_amp) if template.f_amp else 1.0
        p = template.replace(f_amp=value * phase)
    elif axis == "G":
        phase = template.g_amp / abs(template.g_amp) if template.g_amp else 1.0
        p = template.replace(g_amp=value * phase)
    else:
        raise ParameterError(f"unknown scan axis {axis!r}; expected one of {AXES}")
    if gamma_of_delta is not None:
        p = p.replace(gamma=gamma_of_delta(p.delta))
    return p


def scan(template: SystemParams, axis: str, values: Sequence[float], *,
         gamma_of_delta: Callable[[float], float] | None = None, jobs: int = 1,
         rel_tol: float = 1e-6, ctx: PrecisionContext = DEFAULT_CONTEXT) -> ScanTable:
    """Exact observables at each axis value.

    ``gamma_of_delta`` sets the one-photon loss per point (for example
    ``lambda d: 0.1 * abs(d)``). Drive axes keep the phase of the template
    amplitude. With ``jobs > 1`` points run in worker processes; results are
    collected in axis order.
    """
    values = np.asarray(values, float)
    if values.size == 0 or np.any(np.diff(values) <= 0):
        raise ParameterError("scan values must be nonempty and strictly increasing")
    points = [_point_params(template, axis, float(v), gamma_of_delta) for v in values]
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_point, points, [rel_tol] * len(points),
                                    [ctx] * len(points)))
    else:
        results = [_solve_point(p, rel_tol, ctx) for p in points]
    n, g2, cut, bits, err = zip(*results)
    return ScanTable(axis, values, tuple(points), np.array(n), np.array(g2),
                     np.array(cut), np.array(bits), tuple(err))


def adaptive_scan(template: SystemParams, axis: str, lo: float, hi: float, n_initial: int = 41, *,
                  threshold: float = 0.05, min_step: float | None = None, max_rounds: int = 40,
                  gamma_of_delta: Callable[[float], float] | None = None, jobs: int = 1,
                  rel_tol: float = 1e-6, ctx: PrecisionContext = DEFAULT_CONTEXT) -> ScanTable:
    """Uniform scan refined by bisection.

    Every interval whose ``|delta <n>|`` exceeds ``threshold`` times the range
    of ``<n>`` is halved, until no such interval is wider than ``min_step``
    (default: ``(hi - lo) * 1e-6``).
    """
    if min_step is None:
        min_step = (hi - lo) * 1e-6
    kw = dict(gamma_of_delta=gamma_of_delta, jobs=jobs, rel_tol=rel_tol, ctx=ctx)
    table = scan(template, axis, np.linspace(lo, hi, n_initial), **kw)
    for _ in range(max_rounds):
        x, y = table.axis_values, table.mean_n
        good = np.isfinite(y)
        span = np.ptp(y[good]) if good.any() else 0.0
        jump = np.abs(np.diff(y))
        # failed points count as unresolved so their neighbourhood is retried
        split = (~np.isfinite(jump) | (jump > threshold * span)) & (np.diff(x) > 2 * min_step)
        if not split.any():
            break
        mids = 0.5 * (x[:-1] + x[1:])[split]
        table = table.merged(scan(template, axis, mids, **kw))
    return table


def _rescaled(table: ScanTable, mode: str, drive: Callable, power: float) -> ScanTable:
    tau = np.empty(len(table))
    chi = np.empty(len(table))
    for k, p in enumerate(table.params):
        rp = reduce(p)
        d = abs(drive(rp))
        if d == 0:
            raise ParameterError(f"{mode} rescaling needs a nonzero drive")
        scale = d ** power
        tau[k] = math.copysign(1.0, p.delta) * abs(rp.c) / scale if p.delta else 0.0
        chi[k] = table.mean_n[k] / scale
    return replace(table, scaling=mode, tau=tau, chi=chi)


def rescale_coherent(table: ScanTable) -> ScanTable:
    """Append ``tau = sgn(delta)|c||f|^(-2/3)`` and ``chi = <n>|f|^(-2/3)`` (G = 0 scans)."""
    if any(p.g_amp != 0 for p in table.params):
        raise ParameterError("coherent rescaling applies to G = 0 scans only")
    return _rescaled(table, "coherent", lambda rp: rp.f, 2 / 3)


def rescale_two_photon(table: ScanTable) -> ScanTable:
    """Append ``tau = sgn(delta)|c|/|g|`` and ``chi = <n>/|g|`` (F = 0 scans)."""
    if any(p.f_amp != 0 for p in table.params):
        raise ParameterError("two-photon rescaling applies to F = 0 scans only")
    return _rescaled(table, "two_photon", lambda rp: rp.g, 1.0)


def _sorted_finite(tau, chi):
    tau = np.asarray(tau, float)
    chi = np.asarray(chi, float)
    keep = np.isfinite(tau) & np.isfinite(chi)
    tau, chi = tau[keep], chi[keep]
    order = np.argsort(tau, kind="stable")
    tau, chi = tau[order], chi[order]
    if np.any(np.diff(tau) <= 0):
        raise ParameterError("tau values must be distinct")
    return tau, chi


def derivative_peak(tau, chi) -> tuple[float, float]:
    """Location and signed height of the extremum of ``d chi/d tau``.

    Uses second-order finite differences on the (possibly nonuniform) grid
    and refines the extremum of ``|d chi/d tau|`` with a parabola through
    the three points around it.

    Raises
    ------
    NoInteriorMaximumError
        If ``|d chi/d tau|`` has no strict interior maximum.
    """
    tau, chi = _sorted_finite(tau, chi)
    if len(tau) < 5:
        raise ParameterError("derivative_peak needs at least 5 points")
    d = np.gradient(chi, tau)
    mag = np.abs(d)
    k = int(np.argmax(mag))
    edge = max(mag[0], mag[-1])
    if k in (0, len(tau) - 1) or not mag[k] > edge * (1 + 1e-6) + 1e-300:
        raise NoInteriorMaximumError("|d chi/d tau| has no interior maximum")
    x = tau[k - 1:k + 2]
    y = mag[k - 1:k + 2]
    a, b, c = np.polyfit(x - x[1], y, 2)
    if a < 0:
        t = -b / (2 * a)
        # stay inside the bracketing interval
        t = min(max(t, x[0] - x[1]), x[2] - x[1])
        height = a * t * t + b * t + c
        location = x[1] + t
    else:
        location, height = x[1], y[1]
    return float(location), float(math.copysign(height, d[k]))


def power_law_fit(x, y, n_points: int = 4) -> FitResult:
    """Least squares of ``log y = log A + p log x`` over the last ``n_points`` points."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if n_points < 3 or n_points > len(x) or len(x) != len(y):
        raise ParameterError("need 3 <= n_points <= len(x) and equal-length inputs")
    x, y = x[-n_points:], y[-n_points:]
    if np.any(x <= 0) or np.any(y <= 0):
        raise ParameterError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    (slope, intercept), res, *_ = np.polyfit(lx, ly, 1, full=True)
    ss_res = float(res[0]) if res.size else 0.0
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(math.exp(intercept)), r2, n_points,
                     math.sqrt(ss_res / (n_points - 2)))


def fit_critical_point(drive, tau_max, exponent_guess: float = -2 / 3) -> tuple[float, float, float]:
    """Fit ``tau_max = tau_c + A drive^p``; returns ``(tau_c, A, p)``."""
    x = np.asarray(drive, float)
    y = np.asarray(tau_max, float)
    if len(x) < 3:
        raise ParameterError("need at least three drive values")

    def model(x, tau_c, amp, p):
        return tau_c + amp * x ** p

    guess_amp = (y[0] - y[-1]) / (x[0] ** exponent_guess - x[-1] ** exponent_guess)
    guess = (y[-1] - guess_amp * x[-1] ** exponent_guess, guess_amp, exponent_guess)
    with warnings.catch_warnings():
        # three points and three parameters: the covariance is undefined, not the fit
        warnings.simplefilter("ignore", OptimizeWarning)
        popt, _ = curve_fit(model, x, y, p0=guess, maxfev=20000)
    return float(popt[0]), float(popt[1]), float(popt[2])


def kink_sharpness(tau, chi, window: tuple[float, float]) -> float:
    """Largest ``|d^2 chi/d tau^2|`` inside ``window``."""
    tau, chi = _sorted_finite(tau, chi)
    d2 = np.gradient(np.gradient(chi, tau), tau)
    inside = (tau >= window[0]) & (tau <= window[1])
    if inside.sum() < 3:
        raise ParameterError("too few points inside the window")
    return float(np.abs(d2[inside]).max())


def scaling_params(mode: str, drive: float, *, u: float = 1.0, eta: float = 0.1) -> SystemParams:
    """Template with reduced drive magnitude ``drive`` (``|f|`` or ``|g|``) and real amplitude."""
    den = abs(complex(u, -eta))
    if mode == "coherent":
        return SystemParams(0.0, u, drive * den, 0j, 0.0, eta)
    if mode == "two_photon":
        return SystemParams(0.0, u, 0j, drive * den, 0.0, eta)
    raise ParameterError(f"unknown scaling mode {mode!r}")


@dataclass(frozen=True)
class ScalingStudy:
    mode: str
    drives: np.ndarray
    tau_max: np.ndarray
    peak_height: np.ndarray
    tau_c: float
    offset_exponent: float
    height_fit: FitResult
    offset_fit: FitResult
    tables: tuple[ScanTable, ...] = field(repr=False)


def _study(mode, drives, tau_lo, tau_hi, gamma_factor, eta, n_initial, threshold, jobs, ctx,
           exponent_guess, n_fit):
    drives = np.asarray(sorted(drives), float)
    power = 2 / 3 if mode == "coherent" else 1.0
    rescale = rescale_coherent if mode == "coherent" else rescale_two_photon
    den = abs(complex(1.0, -eta))
    tables, taus, heights = [], [], []
    for d in drives:
        template = scaling_params(mode, d, eta=eta)
        # tau ~ |delta| / (|u - i eta| d^power) up to the small gamma correction
        lo, hi = tau_lo * den * d ** power, tau_hi * den * d ** power
        table = rescale(adaptive_scan(template, "delta", lo, hi, n_initial, threshold=threshold,
                                      gamma_of_delta=lambda x: gamma_factor * abs(x),
                                      jobs=jobs, ctx=ctx))
        t, h = derivative_peak(table.tau[table.ok], table.chi[table.ok])
        tables.append(table)
        taus.append(t)
        heights.append(abs(h))
    taus = np.array(taus)
    heights = np.array(heights)
    tau_c, _, p = fit_critical_point(drives, taus, exponent_guess)
    n_fit = min(n_fit, len(drives))
    return ScalingStudy(mode, drives, taus, heights, tau_c, p,
                        power_law_fit(drives, heights, n_fit),
                        power_law_fit(drives, np.abs(taus - tau_c), n_fit), tuple(tables))


def coherent_scaling_study(drives=(10, 30, 100, 300), *, tau_window=(1.8, 3.0),
                           gamma_factor: float = 0.1, eta: float = 0.1, n_initial: int = 41,
                           threshold: float = 0.01, jobs: int = 1,
                           ctx: PrecisionContext = DEFAULT_CONTEXT) -> ScalingStudy:
    """First-order transition under coherent drive (G = 0), with ``gamma = gamma_factor |delta|``."""
    return _study("coherent", drives, *tau_window, gamma_factor, eta, n_initial, threshold,
                  jobs, ctx, -2 / 3, 4)


def two_photon_scaling_study(drives=(30, 100, 300), *, tau_window=(2.0, 3.2),
                             gamma_factor: float = 0.1, eta: float = 0.1, n_initial: int = 41,
                             threshold: float = 0.01, jobs: int = 1,
                             ctx: PrecisionContext = DEFAULT_CONTEXT) -> ScalingStudy:
    """First-order transition under two-photon drive (F = 0)."""
    return _study("two_photon", drives, *tau_window, gamma_factor, eta, n_initial, threshold,
                  jobs, ctx, -1.0, 4)
