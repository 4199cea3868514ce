"""Command-line front end.

Every artifact embeds the resolved configuration and the solver metadata.
Tables are written as CSV (with ``#`` header lines) and JSON; matrices and
grids as JSON only. Floats are printed with 17 significant digits and
complex numbers as ``[re, im]`` pairs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import MODES, RunConfig, load_config, resolve
from .errors import ConfigError, KerrExactError
from .exact.steady_state import SteadyState
from .liouvillian import steady_state_numeric
from .params import SystemParams
from .phase_transition import (
    adaptive_scan,
    coherent_scaling_study,
    rescale_coherent,
    rescale_two_photon,
    scan,
    two_photon_scaling_study,
)
from .semiclassical import find_fixed_points
from .special_functions import PrecisionContext

__all__ = ["main", "run", "build_parser"]

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        # shortest string that round-trips exactly
        text = repr(float(x))
        return text[:-2] if text.endswith(".0") else text
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [_jsonable(float(x.real)), _jsonable(float(x.imag))]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _split_complex(columns: dict[str, list]) -> dict[str, list]:
    out = {}
    for name, col in columns.items():
        if any(isinstance(v, complex) for v in col):
            out[f"{name}_re"] = [complex(v).real for v in col]
            out[f"{name}_im"] = [complex(v).imag for v in col]
        else:
            out[name] = col
    return out


class Writer:
    """Serializes artifacts into one output directory."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg["out"])
        self.written: list[Path] = []

    def _header(self, metadata) -> dict:
        return {"config": self.cfg.to_dict(), "metadata": _jsonable(metadata)}

    def table(self, name: str, columns: dict[str, list], metadata: dict):
        self.out.mkdir(parents=True, exist_ok=True)
        columns = _split_complex(columns)
        names = list(columns)
        rows = list(zip(*columns.values()))
        buf = io.StringIO()
        head = self._header(metadata)
        buf.write("# config: " + json.dumps(head["config"], sort_keys=True) + "\n")
        buf.write("# metadata: " + json.dumps(head["metadata"], sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([_num(v) for v in row])
        self._write(f"{name}.csv", buf.getvalue())
        self.json(name, {"columns": names, "rows": [list(r) for r in rows]}, metadata)

    def json(self, name: str, data, metadata: dict):
        self.out.mkdir(parents=True, exist_ok=True)
        doc = self._header(metadata)
        doc["data"] = _jsonable(data)
        self._write(f"{name}.json", json.dumps(doc, sort_keys=True, indent=1) + "\n")

    def _write(self, filename, text):
        path = self.out / filename
        path.write_text(text)
        self.written.append(path)


def _ctx(cfg: RunConfig) -> PrecisionContext:
    return PrecisionContext(cfg["precision_bits"], max_bits=cfg["precision_max_bits"])


def _state(cfg: RunConfig, params: SystemParams | None = None) -> SteadyState:
    return SteadyState(params or cfg.params, _ctx(cfg), rel_tol=cfg["tol_series"])


def _observables(cfg, w):
    s = _state(cfg)
    n = s.mean_photon_number()
    cols = {
        "mean_n": [n],
        "g2": [s.g2() if n > 0 else math.nan],
        "a": [s.correlation(0, 1)],
        "a2": [s.correlation(0, 2)],
    }
    w.table("observables", cols, s.metadata())


def _rho(cfg, w):
    s = _state(cfg)
    rho = s.density_matrix(cfg["rho.p_max"])
    meta = dict(s.metadata(), dim=rho.dim, trace=rho.trace().real)
    w.json("rho", {"dims": [rho.dim, rho.dim], "layout": "row-major",
                   "elements": rho.elements.ravel()}, meta)


def _wigner(cfg, w):
    deltas = cfg["wigner.deltas"] or (cfg.params.delta,)
    for d in deltas:
        s = _state(cfg, cfg.params.replace(delta=d))
        grid = s.wigner_grid(cfg["wigner.extent"], cfg["wigner.n_points"])
        meta = dict(s.metadata(), delta=d, integral=grid.integral(),
                    local_maxima=[[z, v] for z, v in grid.local_maxima()])
        w.json(f"wigner_delta_{_num(d)}", {"dims": list(grid.values.shape), "layout": "row-major",
                                           "x": grid.x, "y": grid.y,
                                           "values": grid.values.ravel()}, meta)


def _semiclassical(cfg, w):
    pts = find_fixed_points(cfg.params)
    cols = {
        "alpha": [p.alpha for p in pts],
        "density": [p.density for p in pts],
        "phase": [p.phase for p in pts],
        "stability": [p.stability.value for p in pts],
        "eig1": [p.jacobian_eigs[0] for p in pts],
        "eig2": [p.jacobian_eigs[1] for p in pts],
    }
    w.table("semiclassical", cols, {"count": len(pts)})


def _require(cfg, *keys):
    for k in keys:
        if cfg[k] is None:
            raise ConfigError(k, f"required for mode {cfg.mode}")


def _scan(cfg, w):
    _require(cfg, "scan.start", "scan.stop")
    if cfg["scan.stop"] <= cfg["scan.start"]:
        raise ConfigError("scan.stop", "must exceed scan.start")
    gf = cfg["scan.gamma_factor"]
    kw = dict(gamma_of_delta=(lambda d: gf * abs(d)) if gf is not None else None,
              jobs=cfg["jobs"], rel_tol=cfg["tol_series"], ctx=_ctx(cfg))
    if cfg["scan.adaptive"]:
        table = adaptive_scan(cfg.params, cfg["scan.axis"], cfg["scan.start"], cfg["scan.stop"],
                              cfg["scan.num"], threshold=cfg["scan.threshold"], **kw)
    else:
        values = np.linspace(cfg["scan.start"], cfg["scan.stop"], cfg["scan.num"])
        table = scan(cfg.params, cfg["scan.axis"], values, **kw)
    if cfg["scan.axis"] == "delta" and all(table.ok):
        p = cfg.params
        if p.g_amp == 0 and p.f_amp != 0:
            table = rescale_coherent(table)
        elif p.f_amp == 0 and p.g_amp != 0:
            table = rescale_two_photon(table)
    w.table("scan", table.columns(), {"points": len(table), "failures": int((~table.ok).sum())})


def _phase_transition(cfg, w):
    kind = cfg["pt.kind"]
    study_fn = coherent_scaling_study if kind == "coherent" else two_photon_scaling_study
    kw = dict(eta=cfg.params.eta, threshold=cfg["pt.threshold"], jobs=cfg["jobs"], ctx=_ctx(cfg))
    if cfg["pt.drives"]:
        kw["drives"] = cfg["pt.drives"]
    if cfg["pt.tau_min"] is not None or cfg["pt.tau_max"] is not None:
        _require(cfg, "pt.tau_min", "pt.tau_max")
        kw["tau_window"] = (cfg["pt.tau_min"], cfg["pt.tau_max"])
    st = study_fn(**kw)
    meta = {"tau_c": st.tau_c, "offset_exponent_3param": st.offset_exponent,
            "height_fit": vars(st.height_fit), "offset_fit": vars(st.offset_fit)}
    w.table("phase_transition_peaks",
            {"drive": list(st.drives), "tau_max": list(st.tau_max),
             "peak_height": list(st.peak_height)}, meta)
    for d, table in zip(st.drives, st.tables):
        w.table(f"phase_transition_scan_{_num(d)}", table.columns(), {"drive": d})


def _oracle_point(params, n_max):
    try:
        return steady_state_numeric(params, n_max).mean_photon_number(), None
    except (KerrExactError, ArithmeticError) as exc:
        return math.nan, f"{type(exc).__name__}: {exc}"


def _benchmark(cfg, w):
    start, stop, step = cfg["bench.start"], cfg["bench.stop"], cfg["bench.step"]
    count = int(round((stop - start) / step)) + 1
    deltas = start + step * np.arange(count)
    points = [cfg.params.replace(delta=float(d)) for d in deltas]
    exact = []
    for p in points:
        s = _state(cfg, p)
        exact.append((s.mean_photon_number(), s.cutoff))
    # the permit count bounds the number of dense oracle solves held in memory
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            oracle = list(pool.map(_oracle_point, points, [cfg["bench.n_max"]] * len(points)))
    else:
        oracle = [_oracle_point(p, cfg["bench.n_max"]) for p in points]
    n_ex = np.array([e[0] for e in exact])
    n_or = np.array([o[0] for o in oracle])
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(n_ex - n_or) / n_or
    finite = rel[np.isfinite(rel)]
    worst = float(finite.max()) if finite.size else math.nan
    cols = {"delta": list(deltas), "mean_n_exact": list(n_ex), "mean_n_oracle": list(n_or),
            "rel_dev": list(rel), "max_rel_dev": [worst] * count,
            "cutoff": [e[1] for e in exact], "oracle_error": [o[1] or "" for o in oracle]}
    w.table("benchmark", cols, {"max_rel_dev": worst, "points": count})


_HANDLERS = {
    "observables": _observables,
    "rho": _rho,
    "wigner": _wigner,
    "semiclassical": _semiclassical,
    "scan": _scan,
    "phase-transition": _phase_transition,
    "benchmark": _benchmark,
}


def run(cfg: RunConfig) -> tuple[int, list[Path]]:
    """Execute one configuration; returns the exit status and the files written."""
    w = Writer(cfg)
    try:
        _HANDLERS[cfg.mode](cfg, w)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, w.written
    except (KerrExactError, ArithmeticError) as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER, w.written
    return EXIT_OK, w.written


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kerr-exact",
                                description="Exact steady state of a driven-dissipative Kerr resonator.")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="set a configuration key, e.g. delta=0.5 or wigner.n_points=101 (repeatable)")
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--tol-series", help="relative tolerance of the series cutoff (default 1e-6)")
    p.add_argument("--precision-max-bits", help="hard cap on working precision")
    p.add_argument("--jobs", help="worker processes (default: $KERR_EXACT_JOBS or 1)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        layers = [{}]
        if os.environ.get("KERR_EXACT_JOBS"):
            layers[0]["jobs"] = os.environ["KERR_EXACT_JOBS"]
        if args.config:
            layers.append(load_config(args.config))
        flags = {}
        for item in args.param:
            if "=" not in item:
                raise ConfigError(item, "expected KEY=VALUE")
            k, v = item.split("=", 1)
            flags[k.strip()] = v.strip()
        for key in ("mode", "out", "tol_series", "precision_max_bits", "jobs"):
            value = getattr(args, key)
            if value is not None:
                flags[key] = value
        layers.append(flags)
        cfg = resolve(*layers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status, written = run(cfg)
    for path in written:
        print(path)
    return status


if __name__ == "__main__":
    sys.exit(main())
