#!/usr/bin/env python3
"""
Tests for config loading, run manifests and the command-line runner
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.analysis.calibration import synthetic_stark_dataset
from src.analysis.readout_stats import simulate_shots
from src.config.loader import DEVICE_CATALOG, load_config, parse_config
from src.core.composite_system import DeviceParams
from src.core.errors import ConfigError, ParameterError
from src.main import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, main
from src.utils.data_loaders import ResultLoader, list_run_directories
from src.utils.documentation_manager import DocumentationManager

REPO_CONFIG = DEVICE_CATALOG.parent


def write_json(path: Path, data) -> str:
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def stats_config(tmp_path: Path) -> str:
    return write_json(tmp_path / "stats.json", {
        "schema_version": 1,
        "stats": {"n_components": 2, "n_samples": 20, "sample_size": 2000, "seed": 4},
    })


def shots_file(tmp_path: Path, n_shots: int = 5000) -> str:
    centers = np.array([[-1.0, 0.0], [1.5, 0.2]])
    shots, _, _ = simulate_shots(centers, 0.4, np.array([[0.95, 0.1], [0.05, 0.9]]), n_shots, seed=9)
    return str(ResultLoader.save_shots(shots, tmp_path / "shots.csv"))


def branch_config(tmp_path: Path) -> str:
    return write_json(tmp_path / "branch.json", {
        "schema_version": 1,
        "scenarios": [{
            "name": "device_b_small",
            "device": {"row": "B"},
            "hilbert": {"n_flux": 4, "n_fock": 6, "n_sidebands": 1},
            "branch": {"n_levels_tracked": 3, "n_max": 3},
        }],
    })


def test_empty_sweep_writes_manifest(tmp_path):
    config = write_json(tmp_path / "empty.json", {"schema_version": 1, "scenarios": []})
    out = tmp_path / "run"
    assert main(["sweep", config, "--out", str(out)]) == EXIT_OK
    manifest = DocumentationManager.load_manifest(out / "manifest.json")
    assert manifest.command == "sweep"
    assert manifest.outputs == {}
    assert manifest.failures == []
    assert manifest.config["scenarios"] == []


def test_config_errors_name_fields(tmp_path, capsys):
    config = write_json(tmp_path / "bad.json", {
        "schema_version": 1,
        "scenarios": [{"device": {"row": "A", "kappa": -1.0}, "hilbert": {"n_sidebands": 4}}],
    })
    assert main(["sweep", config, "--out", str(tmp_path / "run")]) == EXIT_CONFIG
    printed = capsys.readouterr().out
    assert "scenarios[0].device.kappa" in printed
    assert "scenarios[0].hilbert.n_sidebands" in printed


def test_config_error_collects_every_problem():
    with pytest.raises(ConfigError) as excinfo:
        parse_config({
            "schema_version": 2,
            "scenarios": [{"device": "Z", "colour": "blue"}],
            "stats": {"n_components": 5},
        })
    problems = excinfo.value.problems
    assert any(p.startswith("schema_version") for p in problems)
    assert "scenarios[0].device.row: unknown catalog row 'Z'" in problems
    assert "scenarios[0].colour: unknown key" in problems
    assert any(p.startswith("stats.n_components") for p in problems)


def test_mistyped_branch_and_stats_fields_are_config_errors(tmp_path):
    """Wrong value types are reported per field and exit with the config code"""
    document = {
        "schema_version": 1,
        "scenarios": [{
            "device": {"row": "B"},
            "hilbert": {"n_flux": 4, "n_fock": 6, "n_sidebands": 1},
            "branch": {"n_levels_tracked": "six", "epsilon": [0.01]},
        }],
        "stats": {"n_samples": "1000", "error_correction": "yes"},
        "calibration": {"delta": "large"},
    }
    with pytest.raises(ConfigError) as excinfo:
        parse_config(document)
    problems = excinfo.value.problems
    assert any(p.startswith("scenarios[0].branch.") for p in problems)
    assert any(p.startswith("stats.n_samples") for p in problems)
    assert any(p.startswith("calibration.delta") for p in problems)

    config = write_json(tmp_path / "typed.json", document)
    assert main(["branch", config, "--out", str(tmp_path / "run")]) == EXIT_CONFIG
    assert main(["stats", shots_file(tmp_path), config, "--out", str(tmp_path / "run2")]) == EXIT_CONFIG


def test_invalid_json_is_a_config_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)
    assert main(["branch", str(path), "--out", str(tmp_path / "run")]) == EXIT_CONFIG


def test_missing_shots_file(tmp_path):
    assert main(["stats", str(tmp_path / "missing.csv"), stats_config(tmp_path)]) == EXIT_CONFIG


def test_too_few_shots_fails(tmp_path):
    assert main(["stats", shots_file(tmp_path, 300), stats_config(tmp_path),
                 "--out", str(tmp_path / "run")]) == EXIT_FAILED


def test_stats_end_to_end_and_rerun(tmp_path):
    """Synthetic shots go through fit, correction and bootstrap; a rerun reproduces the outputs"""
    out = tmp_path / "run"
    assert main(["stats", shots_file(tmp_path), stats_config(tmp_path), "--out", str(out)]) == EXIT_OK

    summary = ResultLoader.load_json(out / "stats" / "summary.json")
    assert summary["n_shots"] == 5000
    assert summary["bootstrap"]["n_samples"] == 20
    table = pd.read_csv(out / "stats" / "transition_probabilities.csv")
    assert list(table.columns) == ["initial", "final", "probability", "sd"]
    column_sums = table.groupby("initial")["probability"].sum()
    assert np.allclose(column_sums, 1.0)
    assert DocumentationManager.verify_manifest(out / "manifest.json") == []

    manifest = DocumentationManager.load_manifest(out / "manifest.json")
    assert manifest.seeds == {"bootstrap": 4, "mixture": 4}
    assert "shots_sha256" in manifest.inputs

    again = tmp_path / "rerun"
    assert main(["rerun", str(out / "manifest.json"), "--out", str(again)]) == EXIT_OK
    first = (out / "stats" / "transition_probabilities.csv").read_bytes()
    second = (again / "stats" / "transition_probabilities.csv").read_bytes()
    assert first == second


def test_manifest_detects_changed_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["branch", branch_config(tmp_path), "--out", str(out)]) == EXIT_OK
    assert DocumentationManager.verify_manifest(out / "manifest.json") == []
    table = out / "branches" / "device_b_small.csv"
    table.write_text(table.read_text(encoding="utf-8") + "\n", encoding="utf-8")
    assert DocumentationManager.verify_manifest(out / "manifest.json") == ["branches/device_b_small.csv: hash mismatch"]


def test_branch_rerun_is_identical(tmp_path):
    out = tmp_path / "run"
    assert main(["branch", branch_config(tmp_path), "--out", str(out)]) == EXIT_OK
    assert main(["rerun", str(out / "manifest.json"), "--out", str(tmp_path / "again")]) == EXIT_OK
    first = (out / "branches" / "device_b_small.csv").read_bytes()
    second = (tmp_path / "again" / "branches" / "device_b_small.csv").read_bytes()
    assert first == second
    runs = list_run_directories(str(tmp_path))
    assert {r["command"] for r in runs} == {"branch"}
    assert len(runs) == 2


def test_calibration_command(tmp_path):
    catalog = json.loads(DEVICE_CATALOG.read_text(encoding="utf-8"))
    device = DeviceParams.from_dict(catalog["devices"]["A"])
    data = synthetic_stark_dataset(device, alpha=1e-8, powers=np.linspace(1e-9, 1e-7, 8), omega_q0=0.4015)
    data_path = ResultLoader.save_stark_data(data, tmp_path / "stark.csv")
    config = write_json(tmp_path / "calibration.json", {
        "schema_version": 1,
        "calibration": {"device": "A", "powers": [1e-9, 1e-8]},
    })
    out = tmp_path / "run"
    assert main(["calibrate", config, "--data", str(data_path), "--out", str(out)]) == EXIT_OK
    fit = ResultLoader.load_json(out / "calibration" / "attenuation_fit.json")
    assert fit["alpha"] == pytest.approx(1e-8, rel=0.01)
    photons = pd.read_csv(out / "calibration" / "photons_from_power.csv")
    assert list(photons.columns) == ["p_rf_watts", "n_bar_g", "n_bar_e"]
    assert photons["n_bar_g"].iloc[1] == pytest.approx(10.0 * photons["n_bar_g"].iloc[0])


def test_calibration_without_data_path(tmp_path):
    config = write_json(tmp_path / "calibration.json", {"schema_version": 1, "calibration": {"device": "A"}})
    assert main(["calibrate", config, "--out", str(tmp_path / "run")]) == EXIT_CONFIG


def test_stark_file_columns(tmp_path):
    path = tmp_path / "stark.csv"
    pd.DataFrame({"power": [1.0], "frequency": [0.4]}).to_csv(path, index=False)
    with pytest.raises(ParameterError):
        ResultLoader.load_stark_data(path, DeviceParams.from_dict(
            json.loads(DEVICE_CATALOG.read_text(encoding="utf-8"))["devices"]["A"]))


@pytest.mark.parametrize("name", ["device_a_resonance.json", "device_a_full.json", "branch_a_052.json", "sim_row_grid.json",
                                  "stats.json", "calibration.json"])
def test_shipped_configs_round_trip(name):
    """Every shipped config parses, and its serialized form parses back to the same document"""
    config = load_config(REPO_CONFIG / name)
    document = config.to_dict()
    assert parse_config(document).to_dict() == document


def test_catalog_rows_override_fields():
    config = parse_config({
        "schema_version": 1,
        "scenarios": [{
            "device": {"row": "A", "phi_ext": 0.52},
            "tls": "A",
            "hilbert": {"n_flux": 6, "n_fock": 25, "n_sidebands": 7},
            "sweep": {"epsilon_grid": [0.001], "phi_ext_list": [0.5, 0.502]},
        }],
    })
    scenario = config.scenarios[0]
    assert scenario.device.fluxonium.phi_ext == 0.52
    assert scenario.device.name == "A"
    assert scenario.tls.delta_tls == 0.411
    assert scenario.hilbert.tls_present
    assert scenario.sweep.initial_states == ["g", "e"]
    variants = scenario.flux_variants()
    assert [v.device.fluxonium.phi_ext for v in variants] == [0.5, 0.502]
    assert variants[0].sweep.phi_ext_list == []
