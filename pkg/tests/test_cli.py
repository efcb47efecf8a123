import json

import numpy as np
import pytest

import spinfid as sf
from spinfid.cli import main
from spinfid.presets import PRESETS, dump_config, get_preset, parse_config

FIGURE_SYSTEMS = [
    "caf2-100", "caf2-110", "caf2-111",
    "chain12-s1/2", "chain12-s1", "chain9-s5/2",
    "square5-a", "square5-b",
]


class TestPresets:
    def test_registry_covers_all_plotted_systems(self):
        for name in FIGURE_SYSTEMS:
            assert name in PRESETS
        for name in ("chain12-s1/2", "chain12-s1", "chain9-s5/2", "square5-a", "square5-b"):
            assert name + "-classical" in PRESETS

    def test_classical_twin_couplings(self):
        twin = get_preset("chain12-s1/2-classical")
        assert twin.spin_kind == "classical"
        assert twin.jx == pytest.approx(-0.41, abs=1e-14)
        assert twin.jz == pytest.approx(0.82, abs=1e-14)

    def test_config_round_trip(self):
        for name in ("caf2-111", "chain12-s1/2", "square5-b-classical"):
            cfg = get_preset(name)
            back = parse_config(dump_config(cfg))
            assert dump_config(back) == dump_config(cfg)

    def test_caf2_builds_rescaled_classical_table(self):
        cfg = get_preset("caf2-100")
        cfg.dimensions = (3, 3, 3)
        table = cfg.build_table()
        assert table.classical
        q = sf.build_dipolar_couplings(sf.LatticeSpec((3, 3, 3)), sf.FieldDirection("100"))
        assert np.allclose(table.values, q.values * np.sqrt(0.75))


class TestDiagnose:
    def test_caf2_verdicts(self, capsys):
        assert main(["diagnose", "--preset", "caf2-100"]) == 0
        out = capsys.readouterr().out
        assert "n_eff = 4.9" in out
        assert "quantitative agreement (S=1/2): expected" in out
        assert "long-time constants: unreliable" in out

    def test_caf2_111_both_positive(self, capsys):
        assert main(["diagnose", "--preset", "caf2-111", "--lattice", "9"]) == 0
        out = capsys.readouterr().out
        assert "n_eff = 22.1" in out
        assert "long-time constants: reliable" in out

    def test_chain_not_expected(self, capsys):
        assert main(["diagnose", "--preset", "chain12-s1/2"]) == 0
        out = capsys.readouterr().out
        assert "n_eff = 2.00" in out
        assert "not expected" in out

    def test_spin1_chain_expected(self, capsys):
        assert main(["diagnose", "--preset", "chain12-s1"]) == 0
        out = capsys.readouterr().out
        assert "quantitative agreement (S=1): expected" in out


CLASSICAL_SMALL = """
[experiment]
name = tiny
[lattice]
dimensions = 6
[coupling]
kind = nearest
jx = -0.41
jy = -0.41
jz = 0.82
[spin]
kind = classical
two_s = 1
[run]
dt = 0.05
duration = 30
t_max = 10
realizations = 24
seed = 7
[analysis]
fit = false
[output]
out_dir = {out}
"""


class TestRun:
    def test_classical_run_writes_artifacts(self, tmp_path):
        cfg_file = tmp_path / "tiny.ini"
        cfg_file.write_text(CLASSICAL_SMALL.format(out=tmp_path / "out"))
        assert main(["run", "--config", str(cfg_file)]) == 0
        out = tmp_path / "out"
        for name in ("couplings.txt", "series.csv", "report.txt", "manifest.json"):
            assert (out / name).exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 7
        assert manifest["method"] == "classical"
        series = sf.load_csv(out / "series.csv")
        assert series.values[0] == 1.0
        table = sf.load_couplings(out / "couplings.txt")
        assert table.n_pairs == 6

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg_file = tmp_path / "tiny.ini"
        cfg_file.write_text(CLASSICAL_SMALL.format(out=tmp_path / "a"))
        assert main(["run", "--config", str(cfg_file)]) == 0
        cfg_file.write_text(CLASSICAL_SMALL.format(out=tmp_path / "b"))
        assert main(["run", "--config", str(cfg_file)]) == 0
        a = (tmp_path / "a" / "series.csv").read_bytes()
        b = (tmp_path / "b" / "series.csv").read_bytes()
        assert a == b

    def test_quantum_exact_run(self, tmp_path):
        out = tmp_path / "q"
        code = main(["run", "--preset", "chain12-s1/2", "--lattice", "6",
                     "--method", "exact", "--tmax", "12", "--out-dir", str(out)])
        assert code == 0
        series = sf.load_csv(out / "series.csv")
        assert series.meta["method"] == "exact"
        fit = json.loads((out / "fit.json").read_text())
        assert "coupling_units" in fit

    def test_exact_agrees_with_typicality(self, tmp_path):
        out_e = tmp_path / "e"
        out_t = tmp_path / "t"
        assert main(["run", "--preset", "chain12-s1/2", "--lattice", "6",
                     "--method", "exact", "--tmax", "12", "--out-dir", str(out_e)]) == 0
        assert main(["run", "--preset", "chain12-s1/2", "--lattice", "6",
                     "--method", "typicality", "--samples", "64", "--tmax", "12",
                     "--seed", "5", "--out-dir", str(out_t)]) == 0
        exact = sf.load_csv(out_e / "series.csv")
        typ = sf.load_csv(out_t / "series.csv")
        z = np.abs(typ.values - np.interp(typ.times, exact.times, exact.values))
        z = z / np.maximum(typ.stderr, 1e-12)
        assert z.max() < 4.0


class TestExitCodes:
    def test_unknown_preset_config_error(self, capsys):
        assert main(["diagnose", "--preset", "nope"]) == 2

    def test_both_sources_rejected(self, tmp_path):
        cfg_file = tmp_path / "c.ini"
        cfg_file.write_text(CLASSICAL_SMALL.format(out=tmp_path))
        assert main(["run", "--preset", "caf2-100", "--config", str(cfg_file)]) == 2

    def test_resource_cap_exit(self, tmp_path):
        # the exact oracle refuses D = 3^12
        assert main(["run", "--preset", "chain12-s1", "--method", "exact",
                     "--tmax", "2", "--out-dir", str(tmp_path / "x")]) == 3

    def test_fit_failure_exit(self, tmp_path):
        cfg = CLASSICAL_SMALL.replace("fit = false", "fit = true")
        cfg = cfg.replace("jx = -0.41", "jx = 0.0").replace("jy = -0.41", "jy = 0.0")
        cfg = cfg.replace("jz = 0.82", "jz = 0.0")
        cfg_file = tmp_path / "z.ini"
        cfg_file.write_text(cfg.format(out=tmp_path / "out"))
        assert main(["run", "--config", str(cfg_file)]) == 4

    def test_even_lattice_for_dipolar_rejected(self):
        assert main(["diagnose", "--preset", "caf2-100", "--lattice", "8"]) == 2


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in FIGURE_SYSTEMS:
        assert name in out
