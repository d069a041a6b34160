#!/usr/bin/env python3
"""
Tests for the ac-Stark photon-number calibration
"""

import numpy as np
import pytest
from scipy.optimize import brentq

from src.analysis.calibration import (
    StarkDataset,
    fit_attenuation_scale,
    kerr_coefficient,
    photons_for_initial_state,
    photons_from_power,
    stark_constants,
    synthetic_stark_dataset,
)
from src.config.loader import load_device_catalog
from src.core.composite_system import DeviceParams, HilbertSpec, dispersive_shift
from src.core.errors import CalibrationError, ParameterError

CATALOG = load_device_catalog()
DEVICE_A = DeviceParams.from_dict(dict(CATALOG["devices"]["A"], name="A"))
POWERS = np.linspace(1e-9, 1e-7, 12)


def test_attenuation_round_trip():
    """A noiseless synthetic dataset gives back its attenuation"""
    data = synthetic_stark_dataset(DEVICE_A, alpha=1e-8, powers=POWERS, omega_q0=0.4015)
    fit = fit_attenuation_scale(data)
    assert fit.alpha == pytest.approx(1e-8, rel=0.01)
    assert fit.omega_q0 == pytest.approx(0.4015, abs=1e-9)
    assert fit.chi == DEVICE_A.chi
    assert not fit.suspect
    assert fit.alpha_db == pytest.approx(-80.0, abs=0.05)
    assert fit.rms_residual < 1e-9


def test_noisy_round_trip():
    data = synthetic_stark_dataset(DEVICE_A, alpha=1e-8, powers=POWERS, omega_q0=0.4015,
                                   noise_ghz=1e-6, seed=7)
    fit = fit_attenuation_scale(data)
    assert fit.alpha == pytest.approx(1e-8, rel=0.05)
    assert fit.alpha_stderr < 0.05 * fit.alpha


def test_too_few_points():
    data = StarkDataset([1e-9, 2e-9], [0.4, 0.39], DEVICE_A)
    with pytest.raises(CalibrationError):
        fit_attenuation_scale(data)


def test_equal_powers_are_rank_deficient():
    data = StarkDataset([1e-9] * 4, [0.4, 0.4, 0.4, 0.4], DEVICE_A)
    with pytest.raises(CalibrationError):
        fit_attenuation_scale(data)


def test_flat_response_is_suspect():
    data = StarkDataset(POWERS, np.full(POWERS.size, 0.4015), DEVICE_A)
    fit = fit_attenuation_scale(data)
    assert fit.suspect
    assert fit.alpha == 0.0
    assert fit.alpha_db is None


def test_stark_data_validation():
    with pytest.raises(ParameterError):
        StarkDataset([0.0, 1e-9, 2e-9], [0.4, 0.4, 0.4], DEVICE_A)
    with pytest.raises(ParameterError):
        StarkDataset([1e-9, 2e-9], [0.4], DEVICE_A)


def test_linear_photon_number():
    """Without Kerr n̄₊ = α·C₊·P exactly, and doubles with the power"""
    c_plus, c_minus = stark_constants(DEVICE_A, 0.0, DEVICE_A.chi)
    n = photons_from_power(1e-8, 1e-8, DEVICE_A, 0.0)
    assert n == pytest.approx(1e-8 * c_plus * 1e-8, rel=1e-12)
    assert photons_from_power(2e-8, 1e-8, DEVICE_A, 0.0) == pytest.approx(2.0 * n, rel=1e-12)
    assert photons_from_power(1e-8, 1e-8, DEVICE_A, 0.0, qubit_state_sign=-1) == pytest.approx(1e-8 * c_minus * 1e-8)
    assert photons_from_power(0.0, 1e-8, DEVICE_A, 0.0, kerr=-1e-6) == 0.0


def test_initial_state_selects_sign():
    assert photons_for_initial_state(1e-8, 1e-8, DEVICE_A, 0.001, initial_state="e") == \
        photons_from_power(1e-8, 1e-8, DEVICE_A, 0.001, qubit_state_sign=-1)
    with pytest.raises(ParameterError):
        photons_from_power(1e-8, 1e-8, DEVICE_A, 0.0, qubit_state_sign=0)
    with pytest.raises(ParameterError):
        photons_from_power(1e-8, 0.0, DEVICE_A, 0.0)


def test_kerr_root_against_bracketed_solver():
    """The Kerr-corrected n̄ solves its own Lorentzian to 1e-10"""
    alpha, power, kerr = 1e-8, 1e-7, -2e-6
    c_plus, _ = stark_constants(DEVICE_A, 0.0, DEVICE_A.chi)
    drive = alpha * power * c_plus * (1.0 + (DEVICE_A.chi / (0.5 * DEVICE_A.kappa)) ** 2)

    def residual(x):
        return x - drive / (1.0 + ((DEVICE_A.chi + kerr * x) / (0.5 * DEVICE_A.kappa)) ** 2)

    reference = brentq(residual, 0.0, drive, xtol=1e-14, rtol=1e-15)
    n = photons_from_power(power, alpha, DEVICE_A, 0.0, kerr=kerr)
    assert abs(n - reference) <= 1e-10 * max(1.0, reference)


def test_bistable_drive_raises():
    """Three photon-number solutions under one drive are reported, not resolved silently"""
    chi = DEVICE_A.chi
    delta = -chi - 0.003
    unit_peak = photons_from_power(1e-9, 1.0, DEVICE_A, -chi)
    alpha = 600.0 / unit_peak
    with pytest.raises(CalibrationError) as excinfo:
        photons_from_power(1e-9, alpha, DEVICE_A, delta, kerr=1e-5)
    assert "bistable" in str(excinfo.value)
    # the same drive without Kerr is an ordinary detuned Lorentzian
    assert photons_from_power(1e-9, alpha, DEVICE_A, delta) == pytest.approx(600.0 / 101.0, rel=1e-3)


def test_stark_shift_per_photon():
    """Qubit frequency moves by 2χ per photon in the fitted model"""
    data = synthetic_stark_dataset(DEVICE_A, alpha=1e-8, powers=POWERS, omega_q0=0.4015)
    c_plus, c_minus = stark_constants(DEVICE_A, 0.0, DEVICE_A.chi)
    photons = 1e-8 * (c_plus + c_minus) * POWERS
    assert np.allclose(np.diff(data.f_q) / np.diff(photons), 2.0 * DEVICE_A.chi)


def test_kerr_coefficient():
    spec = HilbertSpec(n_flux=10, n_fock=6, n_sidebands=1)
    assert kerr_coefficient(DEVICE_A.replace(g=0.0), spec) == 0.0
    kerr = kerr_coefficient(DEVICE_A, spec)
    assert kerr != 0.0
    assert abs(kerr) < abs(dispersive_shift(DEVICE_A, spec))


def test_kerr_signs_at_half_flux():
    """Both dressed second differences are negative; the signed corrections ±K± point opposite ways"""
    spec = HilbertSpec(n_flux=10, n_fock=6, n_sidebands=1)
    dev = DEVICE_A.replace(phi_ext=0.5)
    k_plus = kerr_coefficient(dev, spec, 1)
    k_minus = kerr_coefficient(dev, spec, -1)
    assert k_plus < 0.0 and k_minus < 0.0
    assert abs(k_minus) > abs(k_plus)
    assert np.sign(+1 * k_plus) == -np.sign(-1 * k_minus)
