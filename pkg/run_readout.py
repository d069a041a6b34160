#!/usr/bin/env python3
"""
Simple runner script for the Device A TLS resonance scenario
"""

import os
import sys

# Add repository root to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.config.settings import settings
from src.utils.data_loaders import ResultLoader, list_run_directories

# Reduced-size Device A sweep near half flux with the 411 MHz TLS
CUSTOM_SCENARIO_CONFIG = {
    "schema_version": 1,
    "scenarios": [
        {
            "name": "device_a_tls_411_desk",
            "device": {"row": "A", "phi_ext": 0.500196},
            "tls": {"row": "A", "temperature": 0.0},
            "hilbert": {"n_flux": 6, "n_fock": 25, "n_sidebands": 7},
            "solver": {
                "frame": "displaced",
                "k_kept": 200,
                "secular_bandwidth_ghz": 0.01,
                "duration_periods": 10,
            },
            "sweep": {
                "n_bar_targets": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 15, 20],
                "initial_states": ["g", "e"],
            },
        }
    ],
}

# Branch analysis of the same device at phi_ext = 0.52
CUSTOM_BRANCH_CONFIG = {
    "schema_version": 1,
    "scenarios": [
        {
            "name": "device_a_branches_phi052",
            "device": {"row": "A", "phi_ext": 0.52},
            "hilbert": {"n_flux": 10, "n_fock": 30, "n_sidebands": 1},
            "branch": {"epsilon": 0.0, "n_levels_tracked": 6, "n_max": 25},
        }
    ],
}


def main():
    print("🎭 Fluxonium Readout Runner - Device A Edition")
    print("=" * 50)

    previous = list_run_directories(settings.OUTPUT_DIR)
    if previous:
        print(f"\n📂 Found {len(previous)} previous runs:")
        for i, run in enumerate(previous[:5], 1):
            print(f"  {i}. {run['run_id']} ({run['command']}, {run['n_outputs']} outputs)")

    from src.main import EXIT_OK, run_branch_report, run_qnd_sweep, setup_logging

    setup_logging()
    config_dir = os.path.join(settings.OUTPUT_DIR, "runner_configs")
    sweep_config = ResultLoader.save_json(CUSTOM_SCENARIO_CONFIG, os.path.join(config_dir, "device_a_sweep.json"))
    branch_config = ResultLoader.save_json(CUSTOM_BRANCH_CONFIG, os.path.join(config_dir, "device_a_branch.json"))

    try:
        branch = run_branch_report(branch_config)
        sweep = run_qnd_sweep(sweep_config, threads=settings.DEFAULT_THREADS)
    except KeyboardInterrupt:
        print("\n⏹️  Run interrupted by user")
        return 1

    print(f"\n🌟 Branch report: {branch.manifest_path}")
    print(f"🌟 QND sweep: {sweep.manifest_path}")
    if sweep.exit_code != EXIT_OK:
        print(f"⚠️ {sweep.n_failures} sweep point(s) failed; see the manifest for details")
    return sweep.exit_code


if __name__ == "__main__":
    sys.exit(main())
