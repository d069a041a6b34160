"""
ac-Stark photon-number calibration.

Frequencies are GHz (linear) throughout the package; the watts → photons
conversion is done in SI angular units inside ``_si``-prefixed helpers only.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import scipy.constants
from scipy.optimize import brentq, curve_fit

from src.core.composite_system import DeviceParams, HilbertSpec, dispersive_shift, dressed_energies
from src.core.errors import CalibrationError, ParameterError
from src.core.fluxonium import level_index

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 200
DAMPING = 0.5
ROOT_SCAN_POINTS = 4001


def _si_angular(f_ghz: float) -> float:
    return 2.0 * math.pi * f_ghz * 1e9


def _sign_level(qubit_state_sign: int) -> int:
    if qubit_state_sign not in (1, -1):
        raise ParameterError("qubit_state_sign must be +1 (g) or -1 (e)", field="qubit_state_sign")
    return 0 if qubit_state_sign > 0 else 1


@dataclass
class StarkDataset:
    p_rf: np.ndarray
    f_q: np.ndarray
    device: DeviceParams
    delta: float = 0.0

    def __post_init__(self):
        self.p_rf = np.asarray(self.p_rf, dtype=float)
        self.f_q = np.asarray(self.f_q, dtype=float)
        if self.p_rf.shape != self.f_q.shape:
            raise ParameterError("p_rf and f_q must have the same length", field="p_rf")
        if np.any(self.p_rf <= 0):
            raise ParameterError("p_rf must be > 0", field="p_rf")
        if not (np.all(np.isfinite(self.p_rf)) and np.all(np.isfinite(self.f_q))):
            raise ParameterError("Stark data must be finite", field="f_q")


@dataclass
class CalibrationFit:
    alpha: float
    alpha_stderr: float
    omega_q0: float
    chi: float
    residuals: np.ndarray = field(repr=False)
    suspect: bool = False

    @property
    def alpha_db(self) -> Optional[float]:
        return 10.0 * math.log10(self.alpha) if self.alpha > 0 else None

    @property
    def rms_residual(self) -> float:
        return float(np.sqrt(np.mean(self.residuals ** 2))) if self.residuals.size else 0.0

    def to_dict(self) -> Dict:
        return {
            "alpha": self.alpha,
            "alpha_db": self.alpha_db,
            "alpha_stderr": self.alpha_stderr,
            "omega_q0_ghz": self.omega_q0,
            "chi_ghz": self.chi,
            "rms_residual_ghz": self.rms_residual,
            "residuals_ghz": self.residuals.tolist(),
            "suspect": self.suspect,
        }


def kerr_coefficient(dev: DeviceParams, spec: HilbertSpec, qubit_state_sign: int = 1) -> float:
    """K = E(q,2) − 2E(q,1) + E(q,0); sign +1 selects |g⟩, −1 selects |e⟩."""
    level = _sign_level(qubit_state_sign)
    if dev.g == 0.0:
        return 0.0
    levels = dressed_energies(dev, spec, [(level, 0), (level, 1), (level, 2)]).energies
    return (levels[(level, 2)] - levels[(level, 1)]) - (levels[(level, 1)] - levels[(level, 0)])


def _resolve_chi(dev: DeviceParams, chi: Optional[float], spec: Optional[HilbertSpec]) -> float:
    if chi is not None:
        return chi
    if dev.chi is not None:
        return dev.chi
    return dispersive_shift(dev, spec or HilbertSpec())


def stark_constants(dev: DeviceParams, delta: float, chi: float):
    """C± = (κ/2)/(ħω_rf[(κ/2)² + (Δ ± χ)²]) in photons per watt."""
    half_kappa = 0.5 * _si_angular(dev.kappa)
    omega_rf = _si_angular(dev.omega_r + delta)
    out = []
    for sign in (1, -1):
        detuning = _si_angular(delta + sign * chi)
        out.append(half_kappa / (scipy.constants.hbar * omega_rf * (half_kappa ** 2 + detuning ** 2)))
    return tuple(out)


def photons_from_power(p_rf: float, alpha: float, dev: DeviceParams, delta: float, kerr: float = 0.0,
                       qubit_state_sign: int = 1, chi: Optional[float] = None,
                       spec: Optional[HilbertSpec] = None) -> float:
    """Self-consistent n̄± = α(κ/2)P/(ħω_rf[(κ/2)² + (Δ ± χ ± K·n̄±)²]).

    The admissible range [0, α(κ/2)P/(ħω_rf(κ/2)²)] is scanned first; more
    than one solution there is a bistable drive and raises CalibrationError.
    Otherwise a damped fixed-point iteration is used, falling back to a
    bracketed root search when it does not settle.
    """
    if not alpha > 0:
        raise ParameterError("alpha must be > 0", field="alpha")
    if p_rf < 0:
        raise ParameterError("p_rf must be >= 0", field="p_rf")
    _sign_level(qubit_state_sign)
    chi = _resolve_chi(dev, chi, spec)
    s = float(qubit_state_sign)

    half_kappa = 0.5 * _si_angular(dev.kappa)
    drive = alpha * half_kappa * p_rf / (scipy.constants.hbar * _si_angular(dev.omega_r + delta))

    def response(n):
        return drive / (half_kappa ** 2 + _si_angular(delta + s * chi + s * kerr * n) ** 2)

    if kerr == 0.0 or p_rf == 0.0:
        return float(response(0.0))

    upper = drive / half_kappa ** 2
    grid = np.linspace(0.0, upper, ROOT_SCAN_POINTS)
    values = grid - response(grid)
    changes = np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)
    if changes.size > 1:
        roots = [float(grid[i]) for i in changes]
        raise CalibrationError(f"bistable Kerr response: {changes.size} photon-number solutions near {roots}")

    n = float(response(0.0))
    for _ in range(MAX_ITERATIONS):
        update = (1.0 - DAMPING) * n + DAMPING * float(response(n))
        if abs(update - n) <= 1e-14 * max(1.0, abs(n)):
            return update
        n = update

    logger.debug("fixed point did not settle in %d iterations; using bracketed root", MAX_ITERATIONS)
    return brentq(lambda x: x - response(x), 0.0, upper, xtol=1e-15 * max(upper, 1.0), rtol=4 * np.finfo(float).eps)


def photons_for_initial_state(p_rf: float, alpha: float, dev: DeviceParams, delta: float,
                              kerr: float = 0.0, initial_state="g", chi: Optional[float] = None) -> float:
    """n̄ = n̄₊ + n̄₋ where only the term of the prepared qubit state is nonzero."""
    sign = 1 if level_index(initial_state) == 0 else -1
    return photons_from_power(p_rf, alpha, dev, delta, kerr, sign, chi)


def fit_attenuation_scale(data: StarkDataset, chi: Optional[float] = None,
                          spec: Optional[HilbertSpec] = None) -> CalibrationFit:
    """Least-squares fit of ω_q(P) = ω_q(0) + 2χα(C₊ + C₋)P for α."""
    if data.p_rf.size < 3:
        raise CalibrationError("at least 3 Stark points are needed for the attenuation fit")
    chi = _resolve_chi(data.device, chi, spec)
    c_plus, c_minus = stark_constants(data.device, data.delta, chi)
    x = 2.0 * chi * (c_plus + c_minus) * data.p_rf
    if np.ptp(x) == 0.0:
        raise CalibrationError("rank-deficient Stark data: all powers are equal")

    scale = float(np.max(np.abs(x)))
    xs = x / scale

    def model(values, omega_q0, slope):
        return omega_q0 + slope * values

    popt, pcov = curve_fit(model, xs, data.f_q, p0=[float(np.mean(data.f_q)), 0.0])
    omega_q0, slope = (float(v) for v in popt)
    stderr = float(np.sqrt(pcov[1, 1])) / scale if np.all(np.isfinite(pcov)) else math.inf
    residuals = data.f_q - model(xs, omega_q0, slope)

    unresolved = abs(slope) <= 1e-12 * max(1.0, abs(omega_q0))
    alpha = 0.0 if unresolved else slope / scale
    suspect = unresolved or alpha <= 0 or stderr >= abs(alpha)
    if suspect:
        logger.warning("attenuation fit is not trustworthy (alpha=%.3e, stderr=%.3e)", alpha, stderr)
    return CalibrationFit(alpha, stderr, omega_q0, chi, residuals, suspect)


def synthetic_stark_dataset(dev: DeviceParams, alpha: float, powers, delta: float = 0.0,
                            omega_q0: float = 0.4, chi: Optional[float] = None,
                            noise_ghz: float = 0.0, seed: int = 0) -> StarkDataset:
    """Stark data obeying the linear model exactly, with optional Gaussian noise."""
    chi = _resolve_chi(dev, chi, None)
    c_plus, c_minus = stark_constants(dev, delta, chi)
    powers = np.asarray(powers, dtype=float)
    f_q = omega_q0 + 2.0 * chi * alpha * (c_plus + c_minus) * powers
    if noise_ghz > 0:
        f_q = f_q + np.random.default_rng(seed).normal(0.0, noise_ghz, size=powers.size)
    return StarkDataset(powers, f_q, dev, delta)
