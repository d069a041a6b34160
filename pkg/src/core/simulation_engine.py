"""
Simulation Engine - runs the Floquet-Lindblad readout pipeline over drive sweeps
"""

import logging
import math
import time
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.interpolate import PchipInterpolator
from scipy.sparse.linalg import ArpackError

from src.core.composite_system import (
    DeviceParams,
    DriveParams,
    HilbertSpec,
    TlsParams,
    dispersive_shift,
    dressed_resonator_frequency,
    tls_thermal_population,
)
from src.core.errors import ReadoutSimError
from src.core.floquet import SolverOptions, build_floquet_hamiltonian, initial_state, select_quasi_eigenbasis
from src.core.fluxonium import level_index, level_label
from src.core.lindblad import evolve_to_fixed_point

logger = logging.getLogger(__name__)

REPORTED_LEVELS = ("g", "e", "f", "h", "i")


@dataclass
class QndPoint:
    epsilon: float
    n_bar: float
    probabilities: np.ndarray
    p_other: float
    converged: bool
    omega_d: float = 0.0
    k_kept: int = 0
    wall_time: float = 0.0
    diagnostics: Dict = field(default_factory=dict)


@dataclass
class PointFailure:
    initial_state: str
    epsilon: float
    kind: str
    message: str

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class QndCurve:
    initial_state: str
    points: List[QndPoint] = field(default_factory=list)
    failures: List[PointFailure] = field(default_factory=list)

    @property
    def n_bar(self) -> np.ndarray:
        return np.array([p.n_bar for p in self.points])

    def survival(self) -> np.ndarray:
        """P(i₀|i₀) along the curve."""
        idx = level_index(self.initial_state)
        return np.array([p.probabilities[idx] for p in self.points])

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for p in self.points:
            row = {"epsilon_ghz": p.epsilon, "n_bar": p.n_bar}
            for i, name in enumerate(REPORTED_LEVELS):
                row[f"p_{name}"] = float(p.probabilities[i]) if i < len(p.probabilities) else 0.0
            row["p_other"] = p.p_other
            row["converged_flag"] = int(p.converged)
            rows.append(row)
        columns = ["epsilon_ghz", "n_bar"] + [f"p_{n}" for n in REPORTED_LEVELS] + ["p_other", "converged_flag"]
        return pd.DataFrame(rows, columns=columns)


class SimulationEngine:
    """Runs QND sweeps for one device/TLS scenario."""

    def __init__(self, device: DeviceParams, spec: HilbertSpec, tls: Optional[TlsParams] = None,
                 options: Optional[SolverOptions] = None, omega_d: float = 0.0):
        self.device = device
        self.spec = spec
        self.tls = tls
        self.options = options or SolverOptions()
        # 0 selects per-initial-state automatic drive frequency
        self.omega_d = omega_d
        self._dressed: Dict[int, float] = {}

    def dressed_frequency(self, level: int) -> float:
        if level not in self._dressed:
            self._dressed[level] = dressed_resonator_frequency(self.device, self.spec, level)
        return self._dressed[level]

    def drive_frequency(self, level: int) -> float:
        if self.omega_d > 0:
            return self.omega_d
        if self.options.drive_frequency == "bare":
            return self.device.omega_r
        return self.dressed_frequency(level)

    def run_point(self, epsilon: float, initial) -> QndPoint:
        """Full pipeline for one drive strength and one initial fluxonium level."""
        started = time.perf_counter()
        level = level_index(initial)
        omega_d = self.drive_frequency(level)
        delta_tilde = self.dressed_frequency(level) - omega_d if self.options.frame == "displaced" else 0.0

        f = build_floquet_hamiltonian(self.device, DriveParams(epsilon, omega_d), self.tls, self.spec,
                                      frame=self.options.frame, delta_tilde=delta_tilde)
        excited = tls_thermal_population(self.tls, omega_d) if self.tls is not None else 0.0
        rho_0 = initial_state(f, level, excited)
        basis = select_quasi_eigenbasis(f, rho_0, self.options.k_kept, self.options)
        result = evolve_to_fixed_point(basis, rho_0, self.device.kappa, options=self.options)

        point = QndPoint(
            epsilon=float(epsilon),
            n_bar=result.n_bar,
            probabilities=result.populations,
            p_other=result.p_other,
            converged=result.converged,
            omega_d=omega_d,
            k_kept=basis.k_kept,
            wall_time=time.perf_counter() - started,
            diagnostics=result.diagnostics.to_dict(),
        )
        logger.info("eps=%.5g %s: n_bar=%.3f P(%s|%s)=%.4f (k=%d, %.1fs)", epsilon, level_label(level),
                    point.n_bar, level_label(level), level_label(level), point.probabilities[level],
                    basis.k_kept, point.wall_time)
        return point

    def sweep(self, epsilon_grid: Sequence[float], initial_states: Sequence, threads: int = 1) -> List[QndCurve]:
        """One curve per initial state; failed points are recorded and skipped."""
        labels = [level_label(level_index(s)) for s in initial_states]
        tasks = [(self, label, float(eps)) for label in labels for eps in epsilon_grid]
        if threads > 1 and len(tasks) > 1:
            with Pool(processes=threads) as pool:
                outcomes = pool.map(_run_task, tasks)
        else:
            outcomes = [_run_task(task) for task in tasks]

        curves = {label: QndCurve(label) for label in labels}
        for (_, label, _), outcome in zip(tasks, outcomes):
            if isinstance(outcome, PointFailure):
                curves[label].failures.append(outcome)
            else:
                curves[label].points.append(outcome)
        return [curves[label] for label in labels]

    def sweep_resonator_grid(self, omega_r_grid: Sequence[float], epsilon_grid: Sequence[float],
                             initial_states: Sequence, threads: int = 1) -> Tuple[pd.DataFrame, List[PointFailure]]:
        """P(i₀|i₀) on a (χ, n̄) grid obtained by stepping the resonator frequency."""
        frames, failures = [], []
        for omega_r in omega_r_grid:
            device = self.device.replace(omega_r=float(omega_r), chi=None)
            engine = SimulationEngine(device, self.spec, self.tls, self.options, self.omega_d)
            chi = dispersive_shift(device, self.spec)
            for curve in engine.sweep(epsilon_grid, initial_states, threads):
                failures.extend(curve.failures)
                frame = curve.to_frame()
                frame.insert(0, "initial_state", curve.initial_state)
                frame.insert(0, "chi_ghz", chi)
                frame.insert(0, "omega_r_ghz", float(omega_r))
                frame["p_survival"] = curve.survival() if curve.points else []
                frames.append(frame)
        grid = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
        return grid, failures

    def to_dict(self) -> Dict:
        return {
            "device": self.device.to_dict(),
            "hilbert": self.spec.to_dict(),
            "tls": self.tls.to_dict() if self.tls else None,
            "solver": self.options.to_dict(),
            "omega_d": self.omega_d,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "SimulationEngine":
        return cls(
            DeviceParams.from_dict(data["device"]),
            HilbertSpec(**data["hilbert"]),
            TlsParams.from_dict(data["tls"]) if data.get("tls") else None,
            SolverOptions(**data.get("solver", {})),
            data.get("omega_d", 0.0),
        )


def _run_task(task) -> object:
    engine, label, epsilon = task
    try:
        return engine.run_point(epsilon, label)
    except (ReadoutSimError, np.linalg.LinAlgError, ArpackError) as exc:
        logger.error("point eps=%.5g initial=%s failed: %s", epsilon, label, exc)
        return PointFailure(label, epsilon, type(exc).__name__, str(exc))


def sweep_qnd_curves(dev: DeviceParams, tls: Optional[TlsParams], spec: HilbertSpec,
                     epsilon_grid: Sequence[float], initial_states: Sequence,
                     options: Optional[SolverOptions] = None, threads: int = 1,
                     omega_d: float = 0.0) -> List[QndCurve]:
    if len(epsilon_grid) == 0:
        raise ReadoutSimError("epsilon grid is empty")
    return SimulationEngine(dev, spec, tls, options, omega_d).sweep(epsilon_grid, initial_states, threads)


def epsilon_for_photons(n_bar, kappa: float):
    """Linear-resonator drive giving n̄ photons on resonance, ε = κ√n̄."""
    return kappa * np.sqrt(np.asarray(n_bar, dtype=float))


def monotone_prefix(curve: QndCurve) -> Tuple[np.ndarray, np.ndarray]:
    """(ε, n̄) up to the first point where n̄ stops increasing."""
    eps = np.array([p.epsilon for p in curve.points])
    n_bar = curve.n_bar
    order = np.argsort(eps, kind="stable")
    eps, n_bar = eps[order], n_bar[order]
    stop = len(n_bar)
    for i in range(1, len(n_bar)):
        if n_bar[i] <= n_bar[i - 1]:
            stop = i
            break
    return eps[:stop], n_bar[:stop]


def invert_photon_map(curve: QndCurve, n_targets: Sequence[float]) -> np.ndarray:
    """ε for each target n̄ by monotone interpolation of the measured ε ↦ n̄ map.

    Targets outside the monotone range map to NaN.
    """
    eps, n_bar = monotone_prefix(curve)
    if len(eps) < 2:
        raise ReadoutSimError("need at least two monotone points to invert the photon map")
    interpolant = PchipInterpolator(n_bar, eps, extrapolate=False)
    return interpolant(np.asarray(n_targets, dtype=float))


def offset_survival_probability(curve: QndCurve, offset: float) -> np.ndarray:
    """Simulated P(i₀|i₀) lowered by a constant offset, for comparison with data."""
    return np.clip(curve.survival() - offset, 0.0, 1.0)


def drop_onset(curve: QndCurve, threshold: float = 0.1) -> Optional[float]:
    """First n̄ at which P(i₀|i₀) has fallen by ``threshold`` from its first value."""
    if not curve.points:
        return None
    order = np.argsort(curve.n_bar, kind="stable")
    survival = curve.survival()[order]
    n_bar = curve.n_bar[order]
    below = np.flatnonzero(survival <= survival[0] - threshold)
    return float(n_bar[below[0]]) if below.size else None


def survival_minimum(curve: QndCurve) -> Tuple[float, float]:
    """(n̄, P) at the interior local minimum of P(i₀|i₀) with the lowest value."""
    order = np.argsort(curve.n_bar, kind="stable")
    n_bar, survival = curve.n_bar[order], curve.survival()[order]
    interior = [i for i in range(1, len(survival) - 1)
                if survival[i] <= survival[i - 1] and survival[i] <= survival[i + 1]]
    if not interior:
        i = int(np.argmin(survival))
        return float(n_bar[i]), float(survival[i])
    i = min(interior, key=lambda j: survival[j])
    return float(n_bar[i]), float(survival[i])


def duration_cap(kappa: float, periods: float = 10.0) -> float:
    """``periods``·2π/κ in ns for κ given as a linear frequency in GHz."""
    return periods / kappa if kappa > 0 else math.inf
