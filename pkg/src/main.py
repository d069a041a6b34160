#!/usr/bin/env python3
"""
Fluxonium Readout Leakage Simulator

Command-line entry point: QND sweeps, branch reports, readout statistics,
Stark calibration and reruns from a stored manifest.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

# Add the repository root to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.analysis.calibration import fit_attenuation_scale, photons_from_power
from src.analysis.readout_stats import (
    ErrorMatrix,
    bootstrap_probabilities,
    error_matrix_from_rates,
    fit_readout_gaussians,
    threshold_error_matrix,
)
from src.config.loader import RunConfig, Scenario, load_config, load_device_catalog, parse_config
from src.config.settings import settings
from src.core.branch_analysis import branch_summary, compute_branches, transfer_onset
from src.core.errors import ConfigError, ReadoutSimError
from src.core.simulation_engine import QndCurve, SimulationEngine, epsilon_for_photons, invert_photon_map
from src.utils.data_loaders import ResultLoader
from src.utils.documentation_manager import DocumentationManager

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_PARTIAL = 3

# measured n̄ may miss an n̄ target by this fraction before ε is refined
PHOTON_TARGET_TOLERANCE = 0.05


@dataclass
class RunResult:
    manifest_path: Path
    outputs: List[Path] = field(default_factory=list)
    n_failures: int = 0

    @property
    def exit_code(self) -> int:
        return EXIT_PARTIAL if self.n_failures else EXIT_OK


def setup_logging(verbose: bool = False):
    """Configure the root logger once from settings"""
    root = logging.getLogger()
    if root.handlers:
        return
    level = logging.DEBUG if verbose else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    root.setLevel(level)
    formatter = logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
    stream = logging.StreamHandler()
    stream.setFormatter(formatter)
    root.addHandler(stream)
    if settings.LOG_FILE:
        os.makedirs(os.path.dirname(settings.LOG_FILE) or ".", exist_ok=True)
        handler = logging.FileHandler(settings.LOG_FILE, encoding="utf-8")
        handler.setFormatter(formatter)
        root.addHandler(handler)


def _documentation(command: str, config: RunConfig, out: Optional[str]) -> DocumentationManager:
    source = Path(config.source).stem if config.source else "config"
    docs = DocumentationManager(run_name=f"{command}_{source}", base_directory=out)
    docs.start(command, config.to_dict())
    return docs


def _needs_refinement(curve: QndCurve, targets: Sequence[float]) -> bool:
    if not curve.points:
        return False
    measured = curve.n_bar[np.argsort([p.epsilon for p in curve.points])]
    targets = np.sort(np.asarray(targets, dtype=float))[:measured.size]
    scale = np.maximum(targets, 1.0)
    return bool(np.any(np.abs(measured - targets) > PHOTON_TARGET_TOLERANCE * scale))


def _curves_for_targets(engine: SimulationEngine, targets: Sequence[float], states: Sequence[str],
                        threads: int) -> List[QndCurve]:
    """Sweep at the linear estimate ε = κ√n̄, then re-run states whose n̄ misses the targets."""
    linear = epsilon_for_photons(targets, engine.device.kappa)
    curves = engine.sweep(linear, states, threads)
    refined = []
    for curve in curves:
        if not _needs_refinement(curve, targets):
            refined.append(curve)
            continue
        try:
            eps = invert_photon_map(curve, targets)
        except ReadoutSimError as exc:
            logger.warning("keeping linear drive estimate for %s: %s", curve.initial_state, exc)
            refined.append(curve)
            continue
        eps = eps[np.isfinite(eps)]
        if eps.size == 0:
            refined.append(curve)
            continue
        logger.info("refining %d drive amplitudes for initial state %s", eps.size, curve.initial_state)
        second = engine.sweep(eps, [curve.initial_state], threads)[0]
        second.failures = curve.failures + second.failures
        refined.append(second)
    return refined


def run_qnd_sweep(config_path, out: Optional[str] = None, threads: Optional[int] = None,
                  verbose: bool = True) -> RunResult:
    """
    Run every configured QND sweep and write one CSV per initial state

    Args:
        config_path: Scenario config (JSON)
        out: Output directory; defaults to a run directory under settings.OUTPUT_DIR
        threads: Worker pool size
        verbose: Whether to print progress information

    Returns:
        RunResult with the manifest path and the number of failed points
    """
    config = load_config(config_path)
    threads = threads or settings.DEFAULT_THREADS
    docs = _documentation("sweep", config, out)
    docs.manifest.solver = {s.name: s.solver.to_dict() for s in config.scenarios}
    result = RunResult(manifest_path=docs.base_directory)

    if verbose:
        print(f"🎬 Running {len(config.scenarios)} sweep scenario(s) with {threads} worker(s)")

    for scenario in config.scenarios:
        for variant in scenario.flux_variants():
            result.outputs.extend(_run_scenario(variant, docs, threads, verbose))

    result.n_failures = len(docs.manifest.failures)
    result.manifest_path = docs.save_manifest()
    if verbose:
        status = "✅ Sweep completed" if not result.n_failures else f"⚠️ Sweep completed with {result.n_failures} failed point(s)"
        print(status)
    return result


def _run_scenario(scenario: Scenario, docs: DocumentationManager, threads: int, verbose: bool) -> List[Path]:
    sweep = scenario.sweep
    engine = SimulationEngine(scenario.device, scenario.hilbert, scenario.tls, scenario.solver,
                              scenario.drive.omega_d)
    if sweep.epsilon_grid:
        eps_grid = sweep.epsilon_grid
    elif sweep.n_bar_targets:
        eps_grid = list(epsilon_for_photons(sweep.n_bar_targets, scenario.device.kappa))
    else:
        logger.warning("scenario %s has no drive grid; skipped", scenario.name)
        return []
    if verbose:
        print(f"🔄 Scenario {scenario.name}: {len(eps_grid)} drive point(s), states {sweep.initial_states}")

    outputs = []
    if sweep.omega_r_grid:
        grid, failures = engine.sweep_resonator_grid(sweep.omega_r_grid, eps_grid, sweep.initial_states, threads)
        docs.manifest.failures.extend(dict(f.to_dict(), scenario=scenario.name) for f in failures)
        outputs.append(docs.save_table(grid, "curves", f"{scenario.name}_chi_grid"))
        return outputs

    if sweep.epsilon_grid:
        curves = engine.sweep(eps_grid, sweep.initial_states, threads)
    else:
        curves = _curves_for_targets(engine, sweep.n_bar_targets, sweep.initial_states, threads)

    for curve in curves:
        docs.manifest.failures.extend(dict(f.to_dict(), scenario=scenario.name) for f in curve.failures)
        docs.manifest.wall_times.extend(
            {"scenario": scenario.name, "initial_state": curve.initial_state, "epsilon": p.epsilon,
             "wall_time_s": p.wall_time, "k_kept": p.k_kept}
            for p in curve.points
        )
        outputs.append(docs.save_table(curve.to_frame(), "curves", f"{scenario.name}_{curve.initial_state}"))
    return outputs


def run_branch_report(config_path, out: Optional[str] = None, verbose: bool = True) -> RunResult:
    """Branch CSV (and onset summary) for every configured scenario"""
    config = load_config(config_path)
    docs = _documentation("branch", config, out)
    result = RunResult(manifest_path=docs.base_directory)

    for scenario in config.scenarios:
        for variant in scenario.flux_variants():
            options = variant.branch
            if verbose:
                print(f"🔄 Branch analysis for {variant.name} at epsilon={options.epsilon:g} GHz")
            report = compute_branches(variant.device, variant.hilbert, options.epsilon,
                                      options.n_levels_tracked, options.n_max, options.omega_d)
            result.outputs.append(docs.save_table(report.to_frame(), "branches", variant.name))
            summary = {
                "scenario": variant.name,
                "epsilon": options.epsilon,
                "mean_flux_index": branch_summary(report),
                "crossings": [c.__dict__ for c in report.crossings],
            }
            if options.n_levels_tracked > 1 and variant.hilbert.n_flux > 4:
                summary["e_to_i_onset_photons"] = transfer_onset(report.branch("e"), 4)
            result.outputs.append(docs.save_document(summary, "branches", f"{variant.name}_summary"))

    result.manifest_path = docs.save_manifest()
    if verbose:
        print("✅ Branch report completed")
    return result


def _readout_error_matrices(config: RunConfig, initial_fit, final_fit) -> Dict[str, ErrorMatrix]:
    n_final = len(final_fit.centers)
    row = config.stats.readout_errors
    if row is None:
        return {"initial": threshold_error_matrix(initial_fit, 2),
                "final": threshold_error_matrix(final_fit, n_final)}
    rates = load_device_catalog().get("readout_errors", {}).get(row)
    if rates is None:
        raise ConfigError([f"stats.readout_errors: unknown catalog row {row!r}"])
    final = error_matrix_from_rates(**rates["final"])
    if final.dimension != n_final:
        raise ConfigError([f"stats.readout_errors: row {row!r} has {final.dimension} final states, "
                           f"the fit has {n_final}"])
    return {"initial": error_matrix_from_rates(**rates["initial"]), "final": final}


def run_stats(shots_path, config_path, out: Optional[str] = None, verbose: bool = True) -> RunResult:
    """
    Fit, assign, error-correct and bootstrap paired single-shot data

    Returns:
        RunResult with the manifest path; outputs are a JSON summary and a CSV of P(f|i) with sd
    """
    config = load_config(config_path)
    stats = config.stats
    shots = ResultLoader.load_shots(shots_path)
    docs = _documentation("stats", config, out)
    docs.record_input("shots", shots_path)
    docs.manifest.seeds = {"bootstrap": stats.seed, "mixture": stats.seed}
    result = RunResult(manifest_path=docs.base_directory)

    if verbose:
        print(f"🎬 Fitting {shots.n_shots} shot pairs")
    initial_fit = fit_readout_gaussians(shots, 2, stats.covariance_type, measurement="initial", seed=stats.seed)
    final_fit = fit_readout_gaussians(shots, stats.n_components, stats.covariance_type,
                                      measurement="final", seed=stats.seed)
    if initial_fit.degenerate or final_fit.degenerate:
        print("⚠️ Degenerate Gaussian fit; assignment errors are unreliable")

    pairs = np.column_stack([initial_fit.assign(shots.initial), final_fit.assign(shots.final)])
    matrices = _readout_error_matrices(config, initial_fit, final_fit) if stats.error_correction else None
    sample_size = min(stats.sample_size, shots.n_shots)
    if sample_size < stats.sample_size:
        logger.warning("sample_size reduced to the %d available shots", sample_size)
    boot = bootstrap_probabilities(
        pairs, stats.n_samples, sample_size,
        (matrices["initial"], matrices["final"]) if matrices else None,
        seed=stats.seed, n_initial=2, n_final=len(final_fit.centers),
    )

    summary = {
        "n_shots": shots.n_shots,
        "initial_fit": initial_fit.to_dict(),
        "final_fit": final_fit.to_dict(),
        "error_matrices": {k: m.matrix.tolist() for k, m in matrices.items()} if matrices else None,
        "bootstrap": boot.to_dict(),
    }
    result.outputs.append(docs.save_document(summary, "stats", "summary"))
    result.outputs.append(docs.save_table(boot.to_frame(), "stats", "transition_probabilities"))
    result.manifest_path = docs.save_manifest()
    if verbose:
        print("✅ Statistics completed")
    return result


def run_calibration(config_path, out: Optional[str] = None, data_path: Optional[str] = None,
                    verbose: bool = True) -> RunResult:
    """Fit the line attenuation from Stark data and convert the configured powers to photons"""
    config = load_config(config_path)
    cal = config.calibration
    if cal.device is None:
        raise ConfigError(["calibration.device: is required"])
    data_path = data_path or cal.data_path
    if data_path is None:
        raise ConfigError(["calibration.data_path: is required"])
    data = ResultLoader.load_stark_data(data_path, cal.device, cal.delta)
    docs = _documentation("calibrate", config, out)
    docs.record_input("stark_data", data_path)
    result = RunResult(manifest_path=docs.base_directory)

    fit = fit_attenuation_scale(data)
    if fit.suspect:
        print("⚠️ Attenuation fit is not trustworthy; see residuals in the summary")
    result.outputs.append(docs.save_document(fit.to_dict(), "calibration", "attenuation_fit"))

    if cal.powers and fit.alpha > 0:
        rows = []
        for p in cal.powers:
            row = {"p_rf_watts": p}
            for label, sign in (("g", 1), ("e", -1)):
                row[f"n_bar_{label}"] = photons_from_power(p, fit.alpha, cal.device, cal.delta,
                                                           cal.kerr or 0.0, sign, fit.chi)
            rows.append(row)
        result.outputs.append(docs.save_table(pd.DataFrame(rows), "calibration", "photons_from_power"))

    result.manifest_path = docs.save_manifest()
    if verbose:
        print(f"✅ Calibration completed: alpha = {fit.alpha:.4e}")
    return result


def run_from_manifest(manifest_path, out: Optional[str] = None, threads: Optional[int] = None,
                      verbose: bool = True) -> RunResult:
    """Rerun the command stored in a manifest from its config snapshot and inputs"""
    manifest = DocumentationManager.load_manifest(manifest_path)
    parse_config(manifest.config)
    out_dir = Path(out) if out else Path(settings.OUTPUT_DIR) / f"rerun_{Path(manifest_path).parent.name}"
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = ResultLoader.save_json(manifest.config, out_dir / "config_snapshot.json")
    if verbose:
        print(f"📂 Rerunning '{manifest.command}' from {manifest_path}")

    if manifest.command == "sweep":
        return run_qnd_sweep(snapshot, out_dir, threads, verbose)
    if manifest.command == "branch":
        return run_branch_report(snapshot, out_dir, verbose)
    if manifest.command == "stats":
        return run_stats(manifest.inputs["shots"], snapshot, out_dir, verbose)
    if manifest.command == "calibrate":
        return run_calibration(snapshot, out_dir, manifest.inputs.get("stark_data"), verbose)
    raise ConfigError([f"command: unknown manifest command {manifest.command!r}"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Fluxonium readout leakage simulator")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory (default: a run directory under OUTPUT_DIR)")
    common.add_argument("--threads", type=int, default=None, help="worker pool size")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    sub = parser.add_subparsers(dest="command", required=True)
    sweep = sub.add_parser("sweep", parents=[common], help="QND probability sweeps")
    sweep.add_argument("config")
    branch = sub.add_parser("branch", parents=[common], help="branch analysis report")
    branch.add_argument("config")
    stats = sub.add_parser("stats", parents=[common], help="single-shot statistics")
    stats.add_argument("shots")
    stats.add_argument("config")
    calibrate = sub.add_parser("calibrate", parents=[common], help="ac-Stark attenuation calibration")
    calibrate.add_argument("config")
    calibrate.add_argument("--data", default=None, help="Stark CSV overriding calibration.data_path")
    rerun = sub.add_parser("rerun", parents=[common], help="rerun from a manifest")
    rerun.add_argument("manifest")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        if args.command == "sweep":
            result = run_qnd_sweep(args.config, args.out, args.threads)
        elif args.command == "branch":
            result = run_branch_report(args.config, args.out)
        elif args.command == "stats":
            result = run_stats(args.shots, args.config, args.out)
        elif args.command == "calibrate":
            result = run_calibration(args.config, args.out, args.data)
        else:
            result = run_from_manifest(args.manifest, args.out, args.threads)
    except ConfigError as e:
        for problem in e.problems:
            print(f"❌ {problem}")
        return EXIT_CONFIG
    except OSError as e:
        print(f"❌ {e}")
        return EXIT_CONFIG
    except ReadoutSimError as e:
        print(f"❌ {type(e).__name__}: {e}")
        return EXIT_FAILED
    except KeyboardInterrupt:
        print("\n⏹️  Run interrupted by user")
        return EXIT_FAILED
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
