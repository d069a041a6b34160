"""
Fluxonium–resonator(–TLS) Hamiltonians and the dressed quantities derived from them.

The fluxonium factor is represented in its own eigenbasis (``n_flux`` levels),
the resonator in a truncated Fock basis. The TLS, when present, uses
Ẑ = ½·diag(−1, +1) and X̂ = σ_x so that its level splitting equals Δ_TLS.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.constants
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment
from scipy.special import expit

from src.core.errors import LabelingError, ParameterError
from src.core.fluxonium import (
    DEFAULT_BASIS_SIZE,
    FluxoniumEigenbasis,
    FluxoniumParams,
    fluxonium_eigenbasis,
    qubit_frequency,
)
from src.utils.operators import ComposedOperator, check_dimension, destroy, embed, embed_many, number, two_level_operators

logger = logging.getLogger(__name__)

TLS_Z, TLS_X = two_level_operators()

LABEL_OVERLAP_MIN = 0.5


@dataclass(frozen=True)
class DeviceParams:
    fluxonium: FluxoniumParams
    g: float
    omega_r: float
    kappa: float
    # measured dispersive shift; used for Stark-shift bookkeeping when given
    chi: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if not self.g >= 0:
            raise ParameterError("g must be >= 0", field="g")
        for key in ("omega_r", "kappa"):
            if not getattr(self, key) > 0:
                raise ParameterError(f"{key} must be > 0", field=key)

    def replace(self, **changes) -> "DeviceParams":
        flux_keys = {"e_j", "e_c", "e_l", "phi_ext"}
        flux = self.fluxonium.to_dict()
        flux.update({k: v for k, v in changes.items() if k in flux_keys})
        own = {k: v for k, v in changes.items() if k not in flux_keys}
        data = {"g": self.g, "omega_r": self.omega_r, "kappa": self.kappa, "chi": self.chi, "name": self.name}
        data.update(own)
        return DeviceParams(FluxoniumParams(**flux), **data)

    def to_dict(self) -> Dict:
        data = self.fluxonium.to_dict()
        data.update({"g": self.g, "omega_r": self.omega_r, "kappa": self.kappa})
        if self.chi is not None:
            data["chi"] = self.chi
        if self.name:
            data["name"] = self.name
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "DeviceParams":
        return cls(
            FluxoniumParams(data["e_j"], data["e_c"], data["e_l"], data.get("phi_ext", 0.5)),
            g=data["g"],
            omega_r=data["omega_r"],
            kappa=data["kappa"],
            chi=data.get("chi"),
            name=data.get("name", ""),
        )


@dataclass(frozen=True)
class TlsParams:
    delta_tls: float
    g_tls: float
    temperature: float = 0.0
    photon_order: int = 0

    def __post_init__(self):
        if not self.delta_tls > 0:
            raise ParameterError("delta_tls must be > 0", field="delta_tls")
        if not self.g_tls >= 0:
            raise ParameterError("g_tls must be >= 0", field="g_tls")
        if not self.temperature >= 0:
            raise ParameterError("temperature must be >= 0", field="temperature")
        if int(self.photon_order) != self.photon_order or self.photon_order < 0:
            raise ParameterError("photon_order must be a nonnegative integer", field="photon_order")

    def to_dict(self) -> Dict:
        return {"delta_tls": self.delta_tls, "g_tls": self.g_tls,
                "temperature": self.temperature, "photon_order": int(self.photon_order)}

    @classmethod
    def from_dict(cls, data: Dict) -> "TlsParams":
        return cls(data["delta_tls"], data["g_tls"], data.get("temperature", 0.0), int(data.get("photon_order", 0)))


@dataclass(frozen=True)
class DriveParams:
    epsilon: float = 0.0
    # 0 selects the dressed resonator frequency of the initial state
    omega_d: float = 0.0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ParameterError("epsilon must be >= 0", field="epsilon")
        if not self.omega_d >= 0:
            raise ParameterError("omega_d must be >= 0", field="omega_d")

    def to_dict(self) -> Dict:
        return {"epsilon": self.epsilon, "omega_d": self.omega_d}


@dataclass(frozen=True)
class HilbertSpec:
    n_flux: int = 10
    n_fock: int = 65
    tls_present: bool = False
    n_sidebands: int = 13
    basis_size: int = DEFAULT_BASIS_SIZE

    def __post_init__(self):
        if self.n_flux < 2:
            raise ParameterError("n_flux must be >= 2", field="n_flux")
        if self.n_fock < 2:
            raise ParameterError("n_fock must be >= 2", field="n_fock")
        if self.n_sidebands < 1 or self.n_sidebands % 2 == 0:
            raise ParameterError("n_sidebands must be a positive odd integer", field="n_sidebands")
        if self.basis_size < self.n_flux:
            raise ParameterError("basis_size must be >= n_flux", field="basis_size")

    @property
    def static_dims(self) -> Tuple[int, ...]:
        return (self.n_flux, self.n_fock) + ((2,) if self.tls_present else ())

    def to_dict(self) -> Dict:
        return {"n_flux": self.n_flux, "n_fock": self.n_fock, "tls_present": self.tls_present,
                "n_sidebands": self.n_sidebands, "basis_size": self.basis_size}


@dataclass
class DressedLevels:
    """Dressed energies adiabatically connected to bare (level, photon) labels."""

    energies: Dict[Tuple[int, int], float]
    vectors: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)
    min_overlap: float = 1.0


def fluxonium_factor(dev: DeviceParams, spec: HilbertSpec) -> FluxoniumEigenbasis:
    return fluxonium_eigenbasis(dev.fluxonium, spec.basis_size, spec.n_flux)


def _coupling_operator(flux: FluxoniumEigenbasis, n_fock: int) -> sp.csr_matrix:
    """−i·n̂ ⊗ (â − â†) for unit coupling."""
    a = destroy(n_fock)
    return sp.kron(sp.csr_matrix(-1j * flux.charge_elements), a - a.T, format="csr")


def _realify(matrix: sp.csr_matrix) -> sp.csr_matrix:
    if matrix.nnz and np.max(np.abs(matrix.data.imag)) == 0.0:
        return matrix.real.tocsr()
    return matrix


def build_static_hamiltonian(dev: DeviceParams, spec: HilbertSpec) -> ComposedOperator:
    """Ĥ_f ⊗ 𝟙 + ω_r â†â − i·g·n̂(â − â†) on fluxonium-eigenbasis ⊗ Fock."""
    dims = (spec.n_flux, spec.n_fock)
    check_dimension(dims)
    flux = fluxonium_factor(dev, spec)
    bare = sp.kron(sp.diags(flux.energies), sp.identity(spec.n_fock), format="csr") \
        + dev.omega_r * embed(number(spec.n_fock), 1, dims)
    matrix = _realify((bare + dev.g * _coupling_operator(flux, spec.n_fock)).tocsr())
    return ComposedOperator(matrix, dims, ("fluxonium", "resonator"),
                            {"fluxonium": flux, "charge_elements": flux.charge_elements})


def build_driven_hamiltonian(dev: DeviceParams, drive: DriveParams, spec: HilbertSpec, t: float) -> ComposedOperator:
    """Static Hamiltonian plus −i·ε·cos(2πΩt)(â − â†), t in ns."""
    static = build_static_hamiltonian(dev, spec)
    if drive.epsilon == 0.0:
        return static
    a = embed(destroy(spec.n_fock), 1, static.dims)
    amplitude = drive.epsilon * math.cos(2.0 * math.pi * drive.omega_d * t)
    return static.with_matrix((static.matrix - 1j * amplitude * (a - a.T)).tocsr())


def extend_with_tls(h: ComposedOperator, tls: TlsParams, spec: HilbertSpec) -> ComposedOperator:
    """Add Δ_TLS·Ẑ + g_TLS·X̂·n̂ on the space enlarged by one TLS factor."""
    if not spec.tls_present:
        raise ParameterError("extend_with_tls requires tls_present in the Hilbert spec", field="tls_present")
    charge = h.aux.get("charge_elements")
    if charge is None:
        raise ParameterError("operator carries no fluxonium charge elements")
    dims = h.dims + (2,)
    check_dimension(dims)
    position = len(dims) - 1
    matrix = sp.kron(sp.csr_matrix(h.matrix), sp.identity(2), format="csr") \
        + tls.delta_tls * embed(TLS_Z, position, dims) \
        + tls.g_tls * embed_many({0: charge, position: TLS_X}, dims)
    return ComposedOperator(matrix.tocsr(), dims, h.labels + ("tls",), dict(h.aux, tls=tls))


def dressed_energies(dev: DeviceParams, spec: HilbertSpec, labels: Iterable[Tuple[int, int]],
                     n_steps: int = 8) -> DressedLevels:
    """Track bare |level, photon⟩ states while ramping g from 0 to its device value.

    Each step diagonalizes the static Hamiltonian and assigns tracked states to
    eigenvectors by maximum squared overlap (Hungarian assignment). A best
    overlap below 0.5 raises LabelingError with the candidate overlaps.
    """
    labels = [tuple(int(x) for x in label) for label in labels]
    for q, n in labels:
        if q >= spec.n_flux or n >= spec.n_fock:
            raise ParameterError(f"label {(q, n)} outside Hilbert spec", field="labels")

    flux = fluxonium_factor(dev, spec)
    bare = {label: float(flux.energies[label[0]] + label[1] * dev.omega_r) for label in labels}
    if dev.g == 0.0:
        return DressedLevels(bare)

    dims = (spec.n_flux, spec.n_fock)
    check_dimension(dims)
    h0 = (sp.kron(sp.diags(flux.energies), sp.identity(spec.n_fock))
          + dev.omega_r * embed(number(spec.n_fock), 1, dims)).toarray()
    coupling = _coupling_operator(flux, spec.n_fock).toarray()
    if np.max(np.abs(coupling.imag)) == 0.0:
        coupling = coupling.real

    indices = [np.ravel_multi_index(label, dims) for label in labels]
    tracked = np.zeros((h0.shape[0], len(labels)), dtype=coupling.dtype)
    tracked[indices, np.arange(len(labels))] = 1.0

    min_overlap = 1.0
    energies = vectors = cols = None
    for step in range(1, n_steps + 1):
        g_step = dev.g * step / n_steps
        energies, vectors = scipy.linalg.eigh(h0 + g_step * coupling)
        overlaps = np.abs(tracked.conj().T @ vectors) ** 2
        rows, cols = linear_sum_assignment(-overlaps)
        chosen = overlaps[rows, cols]
        if chosen.min() < LABEL_OVERLAP_MIN:
            worst = int(np.argmin(chosen))
            top = np.argsort(overlaps[worst])[::-1][:3]
            raise LabelingError(
                f"ambiguous dressed state for bare label {labels[worst]} at g={g_step:.4g} GHz",
                {"label": labels[worst], "g": g_step,
                 "candidates": [(int(j), float(energies[j]), float(overlaps[worst, j])) for j in top]},
            )
        min_overlap = min(min_overlap, float(chosen.min()))
        tracked = vectors[:, cols]

    return DressedLevels(
        {label: float(energies[c]) for label, c in zip(labels, cols)},
        {label: vectors[:, c] for label, c in zip(labels, cols)},
        min_overlap,
    )


def dispersive_shift(dev: DeviceParams, spec: HilbertSpec) -> float:
    """χ = ½[(E(e,1) − E(e,0)) − (E(g,1) − E(g,0))] in GHz."""
    if dev.g == 0.0:
        return 0.0
    levels = dressed_energies(dev, spec, [(0, 0), (0, 1), (1, 0), (1, 1)]).energies
    return 0.5 * ((levels[(1, 1)] - levels[(1, 0)]) - (levels[(0, 1)] - levels[(0, 0)]))


def dressed_resonator_frequency(dev: DeviceParams, spec: HilbertSpec, qubit_level: int = 0) -> float:
    """E(q,1) − E(q,0): the resonator frequency seen with the fluxonium in ``qubit_level``."""
    if dev.g == 0.0:
        return dev.omega_r
    levels = dressed_energies(dev, spec, [(qubit_level, 0), (qubit_level, 1)]).energies
    return levels[(qubit_level, 1)] - levels[(qubit_level, 0)]


def stark_shifted_qubit_frequency(dev: DeviceParams, n_bar: float, chi: Optional[float] = None,
                                  spec: Optional[HilbertSpec] = None) -> float:
    """ω_q(n̄) = ω_q(0) + 2χn̄ with the bare fluxonium ω_q(0).

    χ defaults to the device's measured value and falls back to the dressed
    computation when the device carries none.
    """
    if n_bar < 0:
        raise ParameterError("n_bar must be >= 0", field="n_bar")
    if chi is None:
        chi = dev.chi if dev.chi is not None else dispersive_shift(dev, spec or HilbertSpec())
    return qubit_frequency(dev.fluxonium) + 2.0 * chi * n_bar


def resonance_shift_prediction(delta_omega_ge: float, chi: float) -> float:
    """Photon-number shift δn̄* = −δω_ge/(2χ) of a resonance when ω_ge moves by δω_ge."""
    if chi == 0:
        raise ParameterError("chi must be nonzero", field="chi")
    return -delta_omega_ge / (2.0 * chi)


def thermal_population(delta_tls: float, temperature: float, photon_number: int = 0,
                       omega_d: float = 0.0) -> float:
    """Excited-state Boltzmann weight 1/(1 + e^{βΔ₀ + kβΩ}); frequencies in GHz, T in kelvin."""
    if temperature < 0:
        raise ParameterError("temperature must be >= 0", field="temperature")
    if temperature == 0:
        return 0.0
    x = scipy.constants.h * (delta_tls + photon_number * omega_d) * 1e9 / (scipy.constants.k * temperature)
    return float(expit(-x))


def tls_thermal_population(tls: TlsParams, omega_d: float = 0.0) -> float:
    """Initial TLS excitation; a 2m-photon mode carries k = 2m drive quanta."""
    return thermal_population(tls.delta_tls, tls.temperature, 2 * int(tls.photon_order), omega_d)


def multiphoton_tls_frequency(delta_0: float, omega_d: float, photon_order: int) -> float:
    """Δ_TLS placed near Δ₀ + 2mΩ for the 2m-photon spurious-mode variant."""
    return delta_0 + 2 * photon_order * omega_d


def tls_splitting_scan(dev: DeviceParams, tls: TlsParams, spec: HilbertSpec,
                       delta_grid: Sequence[float]) -> Tuple[float, float]:
    """Minimum |e,0_TLS⟩/|g,1_TLS⟩ splitting while sweeping Δ_TLS across ω_q.

    Sweeping Δ_TLS at fixed ω_q stands in for the Stark shift of ω_q at fixed
    Δ_TLS. Returns (Δ_TLS at the minimum, minimum splitting).
    """
    flux = fluxonium_factor(dev, spec)
    dims = (spec.n_flux, 2)
    base = np.kron(np.diag(flux.energies), np.eye(2))
    coupling = tls.g_tls * np.kron(flux.charge_elements, TLS_X)
    pair = [np.ravel_multi_index((1, 0), dims), np.ravel_multi_index((0, 1), dims)]

    best = (float("nan"), float("inf"))
    for delta in delta_grid:
        energies, vectors = scipy.linalg.eigh(base + delta * np.kron(np.eye(spec.n_flux), TLS_Z) + coupling)
        weight = np.sum(np.abs(vectors[pair, :]) ** 2, axis=0)
        a, b = np.argsort(weight)[::-1][:2]
        gap = abs(energies[a] - energies[b])
        if gap < best[1]:
            best = (float(delta), float(gap))
    return best


def chi_over_resonator_grid(dev: DeviceParams, spec: HilbertSpec, omega_r_grid: Sequence[float]) -> List[float]:
    """Computed χ for each resonator frequency of a grid (the simulation-row sweep)."""
    return [dispersive_shift(dev.replace(omega_r=float(w), chi=None), spec) for w in omega_r_grid]
