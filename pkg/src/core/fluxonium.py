"""
Bare fluxonium Hamiltonian, its eigenbasis and derived spectra.

Energies are linear frequencies in GHz (h = 1). The construction basis is the
harmonic-oscillator basis of the linearized E_L/E_C circuit.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional

import numpy as np
import scipy.linalg

from src.core.errors import ParameterError, TruncationError
from src.utils.operators import ComposedOperator, destroy

logger = logging.getLogger(__name__)

DEFAULT_BASIS_SIZE = 60
MIN_BASIS_SIZE = 20
CONVERGENCE_TOL_GHZ = 1e-6  # 1 kHz

STATE_LABELS = ("g", "e", "f", "h", "i")


def level_label(index: int) -> str:
    """g, e, f, h, i for the five lowest levels, then ``l<index>``."""
    return STATE_LABELS[index] if index < len(STATE_LABELS) else f"l{index}"


def level_index(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label)
    if label in STATE_LABELS:
        return STATE_LABELS.index(label)
    if isinstance(label, str) and label.startswith("l") and label[1:].isdigit():
        return int(label[1:])
    raise ParameterError(f"unknown fluxonium level label {label!r}", field="initial_states")


@dataclass(frozen=True)
class FluxoniumParams:
    e_j: float
    e_c: float
    e_l: float
    phi_ext: float = 0.5

    def __post_init__(self):
        # e_j = 0 is the harmonic limit and stays admissible
        if not self.e_j >= 0:
            raise ParameterError("e_j must be >= 0", field="e_j")
        for name in ("e_c", "e_l"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0", field=name)
        if not math.isfinite(self.phi_ext):
            raise ParameterError("phi_ext must be finite", field="phi_ext")

    @property
    def plasma_frequency(self) -> float:
        return math.sqrt(8.0 * self.e_l * self.e_c)

    @property
    def phi_zpf(self) -> float:
        return (2.0 * self.e_c / self.e_l) ** 0.25

    @property
    def n_zpf(self) -> float:
        return 1.0 / (2.0 * self.phi_zpf)

    def to_dict(self) -> Dict:
        return {"e_j": self.e_j, "e_c": self.e_c, "e_l": self.e_l, "phi_ext": self.phi_ext}


@dataclass(frozen=True)
class FluxoniumEigenbasis:
    """Lowest eigenpairs of the fluxonium Hamiltonian.

    ``states`` are columns in the construction basis with the phase fixed so
    that the largest component is real and positive. ``charge_elements`` is
    ⟨i|n̂|j⟩, purely imaginary for the real Hamiltonian built here.
    """

    energies: np.ndarray
    states: np.ndarray
    n_levels_kept: int
    charge_elements: np.ndarray
    phase_elements: Optional[np.ndarray] = None
    basis_size: int = 0
    params: Optional[FluxoniumParams] = field(default=None, compare=False)

    def transition(self, i: int, j: int) -> float:
        return float(self.energies[j] - self.energies[i])

    def label(self, index: int) -> str:
        return level_label(index)


def ladder_operators(params: FluxoniumParams, basis_size: int):
    """φ̂ and n̂ in the oscillator basis."""
    a = destroy(basis_size).toarray()
    phi = params.phi_zpf * (a + a.T)
    n_op = 1j * params.n_zpf * (a.T - a)
    return phi, n_op


def build_fluxonium_hamiltonian(params: FluxoniumParams, basis_size: int = DEFAULT_BASIS_SIZE) -> ComposedOperator:
    """4E_C n̂² + ½E_L φ̂² − E_J cos(φ̂ − 2πφ_ext) in the oscillator basis.

    The quadratic part is the exact oscillator diagonal ω_p(k + ½); the cosine
    is the average of the unitary pair exp(±i(φ̂ − 2πφ_ext)).
    """
    if basis_size < MIN_BASIS_SIZE:
        raise TruncationError(f"basis_size {basis_size} below minimum {MIN_BASIS_SIZE}")

    phi, n_op = ladder_operators(params, basis_size)
    theta = 2.0 * np.pi * params.phi_ext
    forward = scipy.linalg.expm(1j * phi)
    cos_term = 0.5 * (np.exp(-1j * theta) * forward + np.exp(1j * theta) * forward.conj())
    cos_term = np.real(0.5 * (cos_term + cos_term.conj().T))

    h = np.diag(params.plasma_frequency * (np.arange(basis_size) + 0.5)) - params.e_j * cos_term
    h = 0.5 * (h + h.T)
    return ComposedOperator(
        h, (basis_size,), ("fluxonium",),
        {"params": params, "charge_operator": n_op, "phase_operator": phi},
    )


def diagonalize_fluxonium(h: ComposedOperator, n_levels: int) -> FluxoniumEigenbasis:
    """Lowest ``n_levels`` eigenpairs of ``h`` with matrix elements of n̂ and φ̂.

    Inputs without a recorded charge operator (plain matrices) use the
    dimensionless oscillator charge i(a† − a)/√2.
    """
    size = h.dim
    if n_levels < 1 or n_levels > size:
        raise ParameterError(f"n_levels={n_levels} must lie in [1, {size}]", field="n_levels")

    matrix = h.toarray()
    energies, vectors = scipy.linalg.eigh(matrix, subset_by_index=[0, n_levels - 1])

    pivots = np.argmax(np.abs(vectors), axis=0)
    phases = vectors[pivots, np.arange(n_levels)]
    vectors = vectors * (np.abs(phases) / phases)[np.newaxis, :].conj()
    if np.isrealobj(matrix):
        vectors = np.real(vectors)

    n_op = h.aux.get("charge_operator")
    if n_op is None:
        a = destroy(size).toarray()
        n_op = 1j * (a.T - a) / np.sqrt(2.0)
    charge = vectors.conj().T @ n_op @ vectors
    charge = 0.5 * (charge + charge.conj().T)

    phi_op = h.aux.get("phase_operator")
    phase = None
    if phi_op is not None:
        phase = vectors.conj().T @ phi_op @ vectors
        phase = 0.5 * (phase + phase.conj().T)

    for arr in (energies, vectors, charge):
        arr.setflags(write=False)
    return FluxoniumEigenbasis(
        energies=energies,
        states=vectors,
        n_levels_kept=n_levels,
        charge_elements=charge,
        phase_elements=phase,
        basis_size=size,
        params=h.aux.get("params"),
    )


@lru_cache(maxsize=256)
def fluxonium_eigenbasis(params: FluxoniumParams, basis_size: int = DEFAULT_BASIS_SIZE,
                         n_levels: int = 10) -> FluxoniumEigenbasis:
    """Cached eigenbasis; results are read-only and shared between callers."""
    return diagonalize_fluxonium(build_fluxonium_hamiltonian(params, basis_size), n_levels)


def check_convergence(params: FluxoniumParams, basis_size: int = DEFAULT_BASIS_SIZE,
                      n_levels: int = 10, tol: float = CONVERGENCE_TOL_GHZ) -> float:
    """Largest eigenvalue change when the basis grows by 50%; raises TruncationError above ``tol``."""
    small = fluxonium_eigenbasis(params, basis_size, n_levels)
    large = fluxonium_eigenbasis(params, int(math.ceil(1.5 * basis_size)), n_levels)
    drift = float(np.max(np.abs(small.energies - large.energies)))
    if drift >= tol:
        raise TruncationError(
            f"lowest {n_levels} levels move by {drift * 1e6:.2f} kHz when basis grows from "
            f"{basis_size}; increase basis_size"
        )
    logger.debug("fluxonium basis %d converged (drift %.3e GHz)", basis_size, drift)
    return drift


def qubit_frequency(params: FluxoniumParams, basis_size: int = DEFAULT_BASIS_SIZE,
                    check: bool = True) -> float:
    """E₁ − E₀ of the converged spectrum in GHz."""
    if check:
        check_convergence(params, basis_size, n_levels=2)
    return fluxonium_eigenbasis(params, basis_size, 2).transition(0, 1)


def flux_spectrum(params: FluxoniumParams, phi_ext_grid, n_levels: int = 6,
                  basis_size: int = DEFAULT_BASIS_SIZE) -> np.ndarray:
    """Transition energies E_i − E_0 versus external flux, shape (len(grid), n_levels)."""
    rows = []
    for phi_ext in np.atleast_1d(phi_ext_grid):
        shifted = FluxoniumParams(params.e_j, params.e_c, params.e_l, float(phi_ext))
        energies = fluxonium_eigenbasis(shifted, basis_size, n_levels).energies
        rows.append(energies - energies[0])
    return np.array(rows)


def parity_operator(basis_size: int) -> np.ndarray:
    """Oscillator parity (−1)^k, which maps φ̂ → −φ̂ and n̂ → −n̂."""
    return np.diag((-1.0) ** np.arange(basis_size))
