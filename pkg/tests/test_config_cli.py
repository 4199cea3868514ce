import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kerr_exact.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from kerr_exact.config import load_config, parse_lines, resolve
from kerr_exact.errors import ConfigError


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config: ") and lines[1].startswith("# metadata: ")
    rows = list(csv.reader(lines[2:]))
    return rows[0], rows[1:]


class TestConfig:
    def test_defaults(self):
        cfg = resolve()
        assert cfg.mode == "observables" and cfg["tol_series"] == 1e-6 and cfg.params.u == 1.0

    def test_layering_and_aliases(self):
        cfg = resolve({"delta": "1.0", "tol-series": "1e-8"}, {"params.delta": "2.5"})
        assert cfg.params.delta == 2.5 and cfg["tol_series"] == 1e-8

    @pytest.mark.parametrize("layer,field", [
        ({"mode": "bogus"}, "mode"),
        ({"params.gamma": "abc"}, "params.gamma"),
        ({"params.u": "2"}, "params.u"),
        ({"params.gamma": "-1"}, "params"),
        ({"tol_series": "0"}, "tol_series"),
        ({"nonsense": "1"}, "nonsense"),
        ({"units": "absolute", "params.u": "0"}, "params.u"),
    ])
    def test_field_level_errors(self, layer, field):
        with pytest.raises(ConfigError) as info:
            resolve(layer)
        assert info.value.field == field

    def test_absolute_units(self):
        assert resolve({"units": "absolute", "params.u": "2", "params.eta": "0.1"}).params.u == 2.0

    @given(st.floats(-50, 50), st.complex_numbers(max_magnitude=20, allow_nan=False),
           st.floats(0, 5), st.booleans(), st.lists(st.floats(-5, 5), min_size=1, max_size=4))
    def test_round_trip(self, delta, g, gamma, adaptive, deltas):
        cfg = resolve({"params.delta": repr(delta), "params.g_amp": repr(complex(g)),
                       "params.gamma": repr(gamma), "scan.adaptive": str(adaptive),
                       "wigner.deltas": ",".join(repr(d) for d in deltas)})
        again = resolve(parse_lines(cfg.to_lines()))
        assert again == cfg

    def test_file_parsing(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\n\nmode=scan\nparams.f_amp=(1+2j)\n")
        assert resolve(load_config(path)).params.f_amp == 1 + 2j
        path.write_text("no equals sign\n")
        with pytest.raises(ConfigError):
            load_config(path)
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.cfg")


class TestCli:
    def test_observables_csv_and_json_agree(self, tmp_path, capsys):
        code = main(["--mode", "observables", "--out", str(tmp_path), "--param", "delta=0.5",
                     "--param", "g_amp=0.5", "--param", "gamma=0.03", "--param", "eta=0.03"])
        assert code == EXIT_OK
        header, rows = read_csv(tmp_path / "observables.csv")
        doc = json.loads((tmp_path / "observables.json").read_text())
        assert doc["data"]["columns"] == ["mean_n", "g2", "a_re", "a_im", "a2_re", "a2_im"]
        assert header == ["mean_n", "g2", "a_re", "a_im", "a2_re", "a2_im"]
        assert float(rows[0][0]) == doc["data"]["rows"][0][0]
        assert float(rows[0][0]) == pytest.approx(1.1659247408580662, rel=1e-9)
        assert doc["config"]["params.delta"] == 0.5
        assert "cutoff" in doc["metadata"]

    def test_rerun_is_byte_identical(self, tmp_path, monkeypatch):
        args = ["--mode", "semiclassical", "--param", "delta=20", "--param", "f_amp=1",
                "--param", "g_amp=10", "--param", "gamma=0.1", "--param", "eta=0.1", "--out", "."]
        for sub in ("a", "b"):
            (tmp_path / sub).mkdir()
            monkeypatch.chdir(tmp_path / sub)
            assert main(args) == EXIT_OK
        for name in ("semiclassical.csv", "semiclassical.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_rho_output(self, tmp_path):
        assert main(["--mode", "rho", "--out", str(tmp_path), "--param", "delta=1",
                     "--param", "f_amp=1", "--param", "gamma=0.3"]) == EXIT_OK
        doc = json.loads((tmp_path / "rho.json").read_text())
        d = doc["data"]["dims"][0]
        rho = np.array([complex(*e) for e in doc["data"]["elements"]]).reshape(d, d)
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
        assert np.abs(rho - rho.conj().T).max() < 1e-12

    def test_wigner_output(self, tmp_path):
        assert main(["--mode", "wigner", "--out", str(tmp_path), "--param", "delta=2",
                     "--param", "g_amp=2", "--param", "gamma=0.2", "--param", "eta=0.1",
                     "--param", "wigner.n_points=41", "--param", "wigner.deltas=1,2"]) == EXIT_OK
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["wigner_delta_1.json", "wigner_delta_2.json"]
        doc = json.loads((tmp_path / "wigner_delta_2.json").read_text())
        assert len(doc["data"]["values"]) == 41 * 41
        assert doc["metadata"]["integral"] == pytest.approx(1.0, abs=1e-3)

    def test_scan_with_rescaling(self, tmp_path):
        assert main(["--mode", "scan", "--out", str(tmp_path), "--param", "f_amp=2",
                     "--param", "eta=0.1", "--param", "scan.start=0.5", "--param", "scan.stop=3",
                     "--param", "scan.num=6", "--param", "scan.gamma_factor=0.1"]) == EXIT_OK
        header, rows = read_csv(tmp_path / "scan.csv")
        assert "tau" in header and "chi" in header and len(rows) == 6

    def test_benchmark(self, tmp_path):
        assert main(["--mode", "benchmark", "--out", str(tmp_path), "--param", "g_amp=0.5",
                     "--param", "gamma=0.03", "--param", "eta=0.03", "--param", "bench.start=0",
                     "--param", "bench.stop=1", "--param", "bench.step=0.5"]) == EXIT_OK
        header, rows = read_csv(tmp_path / "benchmark.csv")
        rel = [float(r[header.index("rel_dev")]) for r in rows]
        assert len(rows) == 3 and max(rel) < 1e-4

    def test_config_error_exit(self, tmp_path, capsys):
        assert main(["--mode", "observables", "--param", "gamma=-1", "--out", str(tmp_path)]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err
        assert main(["--mode", "scan", "--out", str(tmp_path)]) == EXIT_CONFIG
        assert main(["--param", "novalue"]) == EXIT_CONFIG
        assert not any(tmp_path.iterdir())

    def test_solver_error_exit(self, tmp_path, capsys):
        code = main(["--mode", "rho", "--out", str(tmp_path), "--param", "delta=8",
                     "--param", "g_amp=5", "--param", "gamma=0.1", "--param", "eta=0.1",
                     "--param", "rho.p_max=4"])
        assert code == EXIT_SOLVER
        assert "TruncationError" in capsys.readouterr().err

    def test_jobs_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("KERR_EXACT_JOBS", "2")
        args = ["--mode", "scan", "--param", "g_amp=2", "--param", "gamma=0.1", "--param", "eta=0.1",
                "--param", "scan.start=0", "--param", "scan.stop=2", "--param", "scan.num=3"]
        assert main(args + ["--out", str(tmp_path / "env")]) == EXIT_OK
        cfg = json.loads((tmp_path / "env" / "scan.json").read_text())["config"]
        assert cfg["jobs"] == 2
        assert main(args + ["--jobs", "1", "--out", str(tmp_path / "flag")]) == EXIT_OK
        serial = json.loads((tmp_path / "flag" / "scan.json").read_text())
        parallel = json.loads((tmp_path / "env" / "scan.json").read_text())
        assert serial["data"] == parallel["data"]
        monkeypatch.setenv("KERR_EXACT_JOBS", "zero")
        assert main(args + ["--out", str(tmp_path / "bad")]) == EXIT_CONFIG

    def test_nan_serializes_as_null(self, tmp_path):
        assert main(["--mode", "observables", "--out", str(tmp_path), "--param", "delta=1",
                     "--param", "gamma=0.1"]) == EXIT_OK
        doc = json.loads((tmp_path / "observables.json").read_text())
        assert doc["data"]["rows"][0][1] is None
        _, rows = read_csv(tmp_path / "observables.csv")
        assert math.isnan(float(rows[0][1]))
