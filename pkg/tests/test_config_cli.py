"""Configuration ingestion and the command-line surface."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from starkshaper.cli import main
from starkshaper.config import config_from_dict, load_config
from starkshaper.errors import ConfigError
from starkshaper.planner import load_schedule

BASE = {
    "pattern": {"kind": "annulus", "amplitude": 1.0},
    "decomposition": {"n_max": 18, "m_max": 0},
    "drive": {"u_hz": 1.0e4, "omega_hz": 1.8e5},
    "mode": "serial",
    "crystal": {"shells": 3, "spacing": 0.3},
}


def write_yaml(path, text):
    path.write_text(text)
    return str(path)


class TestConfigParsing:
    def test_hz_and_rad_s_spellings_agree(self):
        cfg_hz = config_from_dict(dict(BASE))
        payload = json.loads(json.dumps(BASE))
        payload["drive"] = {"u_rad_s": 2 * np.pi * 1.0e4, "omega_rad_s": 2 * np.pi * 1.8e5}
        cfg_rad = config_from_dict(payload)
        assert abs(cfg_hz.u_rad_s - cfg_rad.u_rad_s) < 1e-9
        assert abs(cfg_hz.omega_rad_s - cfg_rad.omega_rad_s) < 1e-9
        assert cfg_hz.u_rad_s == pytest.approx(2 * np.pi * 1e4, rel=1e-15)

    @pytest.mark.parametrize("drive", [
        {"u_hz": 1e4, "u_rad_s": 6e4, "omega_hz": 1.8e5},   # both u spellings
        {"omega_hz": 1.8e5},                                  # no u at all
        {"u_hz": 1e4},                                        # no omega
        {"u_hz": 1e4, "omega_hz": 1.8e5, "omega_rad_s": 1.0},
    ])
    def test_frequency_xor_enforced(self, drive):
        payload = json.loads(json.dumps(BASE))
        payload["drive"] = drive
        with pytest.raises(ConfigError, match="exactly one"):
            config_from_dict(payload)

    def test_schema_rejects_unknown_keys_and_kinds(self):
        payload = json.loads(json.dumps(BASE))
        payload["surprise"] = 1
        with pytest.raises(ConfigError, match="config invalid"):
            config_from_dict(payload)
        payload = json.loads(json.dumps(BASE))
        payload["pattern"]["kind"] = "heptagon"
        with pytest.raises(ConfigError, match="config invalid"):
            config_from_dict(payload)

    def test_invariants(self):
        payload = json.loads(json.dumps(BASE))
        payload["decomposition"] = {"n_max": 5, "m_max": 9}
        with pytest.raises(ConfigError, match="n_max >= m_max"):
            config_from_dict(payload)
        payload = json.loads(json.dumps(BASE))
        payload["simulation"] = {"tolerance": 1e-14}
        with pytest.raises(ConfigError, match="floor"):
            config_from_dict(payload)

    def test_rwa_section(self):
        payload = json.loads(json.dumps(BASE))
        payload["rwa_study"] = {"omega_hz": [43.8e3, 180e3], "sample_count": 100}
        cfg = config_from_dict(payload)
        assert cfg.rwa["omega_list"] == pytest.approx(
            [2 * np.pi * 43.8e3, 2 * np.pi * 180e3], rel=1e-15
        )
        assert cfg.rwa["sample_count"] == 100 and cfg.rwa["amplitude"] == 0.25
        payload["rwa_study"]["omega_rad_s"] = [1.0]
        with pytest.raises(ConfigError, match="exactly one"):
            config_from_dict(payload)

    def test_yaml_scientific_notation_without_sign(self, tmp_path):
        # YAML 1.1 would read 1.0e4 as a string; the loader must not
        path = write_yaml(tmp_path / "c.yaml", """
pattern: {kind: annulus, amplitude: 1.0}
decomposition: {n_max: 18, m_max: 0}
drive: {u_hz: 1.0e4, omega_hz: 1.8e5}
mode: serial
""")
        cfg = load_config(path)
        assert cfg.u_rad_s == pytest.approx(2 * np.pi * 1e4, rel=1e-15)

    def test_loader_failures(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "missing.yaml")
        bad = write_yaml(tmp_path / "bad.yaml", "pattern: [unclosed")
        with pytest.raises(ConfigError, match="not valid YAML"):
            load_config(bad)
        scalar = write_yaml(tmp_path / "scalar.yaml", "42\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(scalar)


SMALL_ANNULUS_YAML = """
pattern: {kind: annulus, amplitude: 1.0}
decomposition: {n_max: 18, m_max: 0}
drive: {u_hz: 1.0e4, omega_hz: 1.8e5}
mode: serial
crystal: {shells: 3, spacing: 0.3}
"""

ELLIPTICAL_SERIAL_YAML = """
pattern: {kind: elliptical_gaussian, amplitude: 0.5}
decomposition: {n_max: 26, m_max: 10}
drive: {u_hz: 1.0e4, omega_hz: 1.8e5}
mode: serial
crystal: {shells: 3, spacing: 0.3}
"""

DISPLACED_PARALLEL_YAML = """
pattern: {kind: displaced_gaussian, amplitude: 0.3}
decomposition: {n_max: 40, m_max: 9}
drive: {u_hz: 1.0e4, omega_hz: 1.8e5}
mode: parallel
crystal: {shells: 3, spacing: 0.3}
"""


@pytest.fixture
def runner():
    return CliRunner()


class TestCliPipeline:
    def test_decompose_plan_simulate(self, runner, tmp_path):
        cfg = write_yaml(tmp_path / "run.yaml", SMALL_ANNULUS_YAML)
        out = str(tmp_path / "art")

        res = runner.invoke(main, ["decompose", "--config", cfg, "--out", out])
        assert res.exit_code == 0, res.output
        expansion = json.loads((tmp_path / "art" / "expansion.json").read_text())
        assert all(entry["m"] == 0 for entry in expansion["coefficients"])
        assert (tmp_path / "art" / "error_map.csv").exists()

        res = runner.invoke(main, [
            "plan", "--config", cfg, "--expansion", f"{out}/expansion.json",
            "--out", out,
        ])
        assert res.exit_code == 0, res.output
        schedule = load_schedule(tmp_path / "art" / "schedule.json")
        assert len(schedule.segments) == 1
        validation = json.loads((tmp_path / "art" / "validation.json").read_text())
        assert validation["ok"] is True

        res = runner.invoke(main, [
            "simulate", "--config", cfg, "--schedule", f"{out}/schedule.json",
            "--out", out, "--threads", "2",
        ])
        assert res.exit_code == 0, res.output
        report = json.loads((tmp_path / "art" / "report.json").read_text())
        assert report["max_infidelity"] < 1e-2
        assert report["ion_count"] == 37
        assert (tmp_path / "art" / "evolution.csv").exists()
        assert (tmp_path / "art" / "histogram.csv").exists()

    def test_decompose_is_deterministic(self, runner, tmp_path):
        cfg = write_yaml(tmp_path / "run.yaml", SMALL_ANNULUS_YAML)
        for d in ("a", "b"):
            res = runner.invoke(main, ["decompose", "--config", cfg,
                                       "--out", str(tmp_path / d)])
            assert res.exit_code == 0, res.output
        for name in ("expansion.json", "error_map.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_plan_serial_elliptical_has_six_segments(self, runner, tmp_path):
        cfg = write_yaml(tmp_path / "run.yaml", ELLIPTICAL_SERIAL_YAML)
        out = str(tmp_path / "art")
        assert runner.invoke(main, ["decompose", "--config", cfg, "--out", out]).exit_code == 0
        res = runner.invoke(main, [
            "plan", "--config", cfg, "--expansion", f"{out}/expansion.json", "--out", out,
        ])
        assert res.exit_code == 0, res.output
        schedule = load_schedule(tmp_path / "art" / "schedule.json")
        assert len(schedule.segments) == 6

    def test_plan_parallel_displaced_comb(self, runner, tmp_path):
        cfg = write_yaml(tmp_path / "run.yaml", DISPLACED_PARALLEL_YAML)
        out = str(tmp_path / "art")
        assert runner.invoke(main, ["decompose", "--config", cfg, "--out", out]).exit_code == 0
        res = runner.invoke(main, [
            "plan", "--config", cfg, "--expansion", f"{out}/expansion.json", "--out", out,
        ])
        assert res.exit_code == 0, res.output
        schedule = load_schedule(tmp_path / "art" / "schedule.json")
        assert len(schedule.segments) == 1
        assert list(schedule.segments[0].beatnotes) == list(range(10))

    def test_rwa_study_outputs(self, runner, tmp_path):
        cfg = write_yaml(tmp_path / "run.yaml", SMALL_ANNULUS_YAML + """
rwa_study: {omega_hz: [180.0e3], sample_count: 60}
""")
        out = str(tmp_path / "rwa")
        res = runner.invoke(main, ["rwa-study", "--config", cfg, "--out", out])
        assert res.exit_code == 0, res.output
        assert (tmp_path / "rwa" / "rwa_series_180000hz.csv").exists()
        assert (tmp_path / "rwa" / "rwa_hist_180000hz.csv").exists()
        summary = json.loads((tmp_path / "rwa" / "rwa_summary.json").read_text())
        assert summary["series"][0]["max_commensurate_infidelity"] < 1e-9

    def test_rwa_study_requires_section(self, runner, tmp_path):
        cfg = write_yaml(tmp_path / "run.yaml", SMALL_ANNULUS_YAML)
        res = runner.invoke(main, ["rwa-study", "--config", cfg, "--out", str(tmp_path / "o")])
        assert res.exit_code != 0

    def test_reproduce_runs_a_figure(self, runner, tmp_path):
        res = runner.invoke(main, ["reproduce", "fig4", "--out", str(tmp_path),
                                   "--threads", "2"])
        assert res.exit_code == 0, res.output
        assert "pass" in res.output
        assert (tmp_path / "annulus_serial_0.01" / "report.json").exists()


class TestCliExitCodes:
    def test_config_error_is_exit_2(self, runner, tmp_path):
        cfg = write_yaml(tmp_path / "bad.yaml", """
pattern: {kind: annulus, amplitude: 1.0}
decomposition: {n_max: 5, m_max: 9}
drive: {u_hz: 1.0e4, omega_hz: 1.8e5}
mode: serial
""")
        res = runner.invoke(main, ["decompose", "--config", cfg, "--out", str(tmp_path / "o")])
        assert res.exit_code == 2

    def test_quadrature_error_is_exit_3(self, runner, tmp_path):
        cfg = write_yaml(tmp_path / "sharp.yaml", """
pattern:
  kind: annulus
  amplitude: 1.0
  params: {r1: 0.45, r2: 0.55, kappa: 200.0}
decomposition: {n_max: 18, m_max: 0}
drive: {u_hz: 1.0e4, omega_hz: 1.8e5}
mode: serial
""")
        res = runner.invoke(main, ["decompose", "--config", cfg, "--out", str(tmp_path / "o")])
        assert res.exit_code == 3

    def test_precompensation_error_is_exit_4(self, runner, tmp_path):
        cfg = write_yaml(tmp_path / "hot.yaml", """
pattern: {kind: annulus, amplitude: 3.0}
decomposition: {n_max: 18, m_max: 0}
drive: {u_hz: 1.0e4, omega_hz: 1.8e5}
mode: serial
""")
        out = str(tmp_path / "o")
        assert runner.invoke(main, ["decompose", "--config", cfg, "--out", out]).exit_code == 0
        res = runner.invoke(main, [
            "plan", "--config", cfg, "--expansion", f"{out}/expansion.json", "--out", out,
        ])
        assert res.exit_code == 4

    def test_unknown_figure_is_exit_2(self, runner, tmp_path):
        res = runner.invoke(main, ["reproduce", "fig99", "--out", str(tmp_path)])
        assert res.exit_code == 2
