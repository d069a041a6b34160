"""
Floquet frequency lattice, Floquet Hamiltonian, Lindbladian and the quasi-eigenbasis.

Two frames are available:

``lab``
    Diagonal blocks H_static + kΩ, adjacent sidebands coupled by the drive
    −i(ε/2)(â − â†), jump operator â ⊗ b̂†. Resonator photons and sideband
    index trade one for one, so n̄ photons need about 2n̄ sidebands.

``displaced``
    Frame rotating at Ω with the resonator displaced by its coherent amplitude
    α = (ε/2)/(κ/2 + iδ̃), ĉ = â − α. Diagonal blocks
    H_f + δĉ†ĉ + (δ − δ̃)(α*ĉ + αĉ†) + kΩ with δ = ω_r − Ω; sidebands are
    coupled by the qubit–resonator term −ig·n̂(ĉ + α)⊗b̂ + h.c.; jump ĉ.
    Photon number is ⟨ĉ†ĉ⟩ + 2Re(α*⟨ĉ⟩) + |α|².

The e^{−iΩt} Fourier component multiplies the lattice lowering operator b̂.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from src.core.composite_system import (
    DeviceParams,
    DriveParams,
    HilbertSpec,
    TLS_X,
    TLS_Z,
    TlsParams,
    build_static_hamiltonian,
    extend_with_tls,
    fluxonium_factor,
)
from src.core.errors import BasisError, ParameterError
from src.utils.operators import ComposedOperator, basis_vector, check_dimension, destroy, embed, embed_many, shift_right

logger = logging.getLogger(__name__)

FRAMES = ("lab", "displaced")


@dataclass(frozen=True)
class SolverOptions:
    frame: str = "displaced"
    k_kept: int = 200
    k_max: int = 3200
    capture_threshold: float = 0.999
    atol: float = 1e-9
    rtol: float = 1e-7
    fixed_point_tol: float = 1e-7
    # evolution cap in units of 2π/κ
    duration_periods: float = 10.0
    # None evolves the exact projected generator
    secular_bandwidth_ghz: Optional[float] = 0.01
    n_chunks: int = 40
    edge_tolerance: float = 1e-4
    # checked on every chunk before renormalizing
    trace_tolerance: float = 1e-9
    positivity_tolerance: float = 1e-7
    drive_frequency: str = "dressed"
    dense_cutoff: int = 2500
    sigma_offset: float = 1e-7

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ParameterError(f"frame must be one of {FRAMES}", field="frame")
        if self.drive_frequency not in ("dressed", "bare"):
            raise ParameterError("drive_frequency must be 'dressed' or 'bare'", field="drive_frequency")
        if self.k_kept < 1:
            raise ParameterError("k_kept must be >= 1", field="k_kept")
        if not 0 < self.capture_threshold <= 1:
            raise ParameterError("capture_threshold must lie in (0, 1]", field="capture_threshold")
        if self.trace_tolerance <= 0 or self.positivity_tolerance < 0:
            raise ParameterError("trace and positivity tolerances must be positive", field="trace_tolerance")
        if self.secular_bandwidth_ghz is not None and self.secular_bandwidth_ghz <= 0:
            raise ParameterError("secular_bandwidth_ghz must be > 0 or null", field="secular_bandwidth_ghz")

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class FloquetLattice:
    n_sidebands: int
    omega_d: float

    def __post_init__(self):
        if self.n_sidebands < 1 or self.n_sidebands % 2 == 0:
            raise ParameterError("n_sidebands must be a positive odd integer", field="n_sidebands")

    @property
    def center(self) -> int:
        return self.n_sidebands // 2

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.n_sidebands) - self.center

    @property
    def translation(self) -> sp.csr_matrix:
        """b̂†, the right shift on sideband index."""
        return shift_right(self.n_sidebands)

    @property
    def lowering(self) -> sp.csr_matrix:
        return self.translation.T.tocsr()

    def energies(self) -> sp.csr_matrix:
        return sp.diags(self.indices * self.omega_d, format="csr")


@dataclass
class InitialState:
    """Ensemble Σ w|ψ⟩⟨ψ| on the Floquet space; the full ρ₀ is never formed."""

    members: List[Tuple[float, np.ndarray]]
    label: str = ""

    def __post_init__(self):
        total = sum(w for w, _ in self.members)
        if not np.isclose(total, 1.0, atol=1e-12):
            raise ParameterError(f"initial-state weights sum to {total}, expected 1")

    def energy(self, f: ComposedOperator) -> float:
        return float(sum(w * np.real(np.vdot(v, f.matrix @ v)) for w, v in self.members))


@dataclass
class QuasiEigenbasis:
    center_energy: float
    quasi_energies: np.ndarray
    states: np.ndarray
    k_kept: int
    captured: float = 1.0
    max_residual: float = 0.0
    operator: Optional[ComposedOperator] = field(default=None, repr=False, compare=False)


def coherent_amplitude(epsilon: float, kappa: float, detuning: float = 0.0) -> complex:
    """Steady linear amplitude α = (ε/2)/(κ/2 + iδ̃) of a driven damped resonator."""
    return (0.5 * epsilon) / (0.5 * kappa + 1j * detuning)


def _static_block(dev: DeviceParams, tls: Optional[TlsParams], spec: HilbertSpec) -> ComposedOperator:
    static = build_static_hamiltonian(dev, spec)
    if tls is None:
        return static
    return extend_with_tls(static, tls, HilbertSpec(spec.n_flux, spec.n_fock, True, spec.n_sidebands, spec.basis_size))


def build_floquet_hamiltonian(dev: DeviceParams, drive: DriveParams, tls: Optional[TlsParams],
                              spec: HilbertSpec, frame: str = "lab",
                              delta_tilde: float = 0.0) -> ComposedOperator:
    """Floquet Hamiltonian F on fluxonium ⊗ resonator (⊗ TLS) ⊗ sideband.

    ``delta_tilde`` is the detuning of the drive from the dressed resonator
    frequency and only enters the displaced frame.
    """
    if frame not in FRAMES:
        raise ParameterError(f"frame must be one of {FRAMES}", field="frame")
    lattice = FloquetLattice(spec.n_sidebands, drive.omega_d)
    if drive.omega_d <= 0 and (spec.n_sidebands > 1 or frame == "displaced"):
        raise ParameterError("omega_d must be resolved to a positive frequency", field="omega_d")

    base_dims = (spec.n_flux, spec.n_fock) + ((2,) if tls is not None else ())
    dims = base_dims + (spec.n_sidebands,)
    check_dimension(dims)
    labels = ("fluxonium", "resonator") + (("tls",) if tls is not None else ()) + ("sideband",)
    a = embed(destroy(spec.n_fock), 1, base_dims)
    identity_sb = sp.identity(spec.n_sidebands, format="csr")
    identity_base = sp.identity(int(np.prod(base_dims)), format="csr")
    flux = fluxonium_factor(dev, spec)

    if frame == "lab":
        static = _static_block(dev, tls, spec)
        drive_op = -0.5j * drive.epsilon * (a - a.T)
        matrix = sp.kron(static.matrix, identity_sb) + sp.kron(identity_base, lattice.energies()) \
            + sp.kron(drive_op, lattice.lowering + lattice.translation)
        jump = sp.kron(a, lattice.translation, format="csr")
        photon = sp.kron(a.T @ a, identity_sb, format="csr")
        alpha = 0j
    else:
        if spec.n_sidebands < 3:
            raise ParameterError("the displaced frame needs n_sidebands >= 3", field="n_sidebands")
        alpha = coherent_amplitude(drive.epsilon, dev.kappa, delta_tilde)
        delta = dev.omega_r - drive.omega_d
        block = sp.kron(sp.diags(flux.energies), sp.identity(spec.n_fock * (2 if tls is not None else 1))) \
            + delta * (a.T @ a) + (delta - delta_tilde) * (np.conj(alpha) * a + alpha * a.T)
        if tls is not None:
            position = len(base_dims) - 1
            block = block + tls.delta_tls * embed(TLS_Z, position, base_dims) \
                + tls.g_tls * embed_many({0: flux.charge_elements, position: TLS_X}, base_dims)
        charge = embed(flux.charge_elements, 0, base_dims)
        lowering_part = -1j * dev.g * (charge @ (a + alpha * identity_base))
        matrix = sp.kron(block, identity_sb) + sp.kron(identity_base, lattice.energies()) \
            + sp.kron(lowering_part, lattice.lowering) + sp.kron(lowering_part.conj().T, lattice.translation)
        jump = sp.kron(a, identity_sb, format="csr")
        photon = sp.kron(a.T @ a + np.conj(alpha) * a + alpha * a.T, identity_sb, format="csr")

    matrix = matrix.tocsr()
    matrix = 0.5 * (matrix + matrix.conj().T)
    logger.debug("built %s-frame Floquet operator, dims=%s", frame, dims)
    return ComposedOperator(matrix.tocsr(), dims, labels, {
        "frame": frame,
        "lattice": lattice,
        "jump": jump,
        "photon_number": photon,
        "photon_offset": float(abs(alpha) ** 2),
        "alpha": alpha,
        "fluxonium": flux,
        "tls": tls,
    })


@dataclass
class LindbladGenerator:
    """𝓚ρ = −i[F, ρ] + κ·D[L]ρ with D[L]ρ = LρL† − ½{L†L, ρ}.

    Frequencies are GHz, so both terms carry 2π and time is in ns. ``apply``
    acts on dense ρ and is meant for small spaces and checks; production
    evolution happens in the reduced quasi-eigenbasis.
    """

    hamiltonian: sp.csr_matrix
    jump: sp.csr_matrix
    kappa: float

    @property
    def rate(self) -> float:
        return 2.0 * np.pi * self.kappa

    def apply(self, rho: np.ndarray) -> np.ndarray:
        commutator = self.hamiltonian @ rho - (self.hamiltonian.T @ rho.T).T
        l_rho = self.jump @ rho
        jump_term = (self.jump.conj() @ (l_rho.T)).T
        ldl = self.jump.conj().T @ self.jump
        anticommutator = ldl @ rho + (ldl.T @ rho.T).T
        return -2j * np.pi * commutator + self.rate * (jump_term - 0.5 * anticommutator)


def build_lindbladian(f: ComposedOperator, kappa: float, lattice: Optional[FloquetLattice] = None) -> LindbladGenerator:
    """Generator for F with the frame's jump operator (â ⊗ b̂† when F carries none)."""
    if not f.is_hermitian(1e-10):
        raise ParameterError("Floquet operator is not Hermitian")
    jump = f.aux.get("jump")
    if jump is None:
        lattice = lattice or f.aux.get("lattice") or FloquetLattice(f.dims[-1], 0.0)
        res = f.factor_index("resonator")
        jump = sp.kron(embed(destroy(f.dims[res]), res, f.dims[:-1]), lattice.translation, format="csr")
    return LindbladGenerator(f.tocsr(), sp.csr_matrix(jump), kappa)


def product_state(f: ComposedOperator, flux_level: int, tls_excited: bool = False) -> np.ndarray:
    """|level, 0 photons(, TLS), central sideband⟩."""
    indices = [flux_level, 0]
    if "tls" in f.labels:
        indices.append(1 if tls_excited else 0)
    if "sideband" in f.labels:
        indices.append(f.dims[-1] // 2)
    return basis_vector(f.dims, indices)


def initial_state(f: ComposedOperator, flux_level: int, tls_excited_population: float = 0.0) -> InitialState:
    """Fluxonium level with empty resonator; the TLS is thermal when a population is given."""
    if flux_level >= f.dims[0]:
        raise ParameterError(f"initial level {flux_level} outside n_flux={f.dims[0]}", field="initial_states")
    members = [(1.0 - tls_excited_population, product_state(f, flux_level, False))]
    if tls_excited_population > 0.0:
        if "tls" not in f.labels:
            raise ParameterError("thermal TLS population requires a TLS factor")
        members.append((tls_excited_population, product_state(f, flux_level, True)))
    return InitialState(members, label=str(flux_level))


def _nearest_dense(matrix: np.ndarray, center: float, k: int) -> Tuple[np.ndarray, np.ndarray]:
    energies, vectors = scipy.linalg.eigh(matrix)
    order = np.argsort(np.abs(energies - center), kind="stable")[:k]
    order = np.sort(order)
    return energies[order], vectors[:, order]


def _shift_invert(matrix: sp.csr_matrix, center: float, k: int, offset: float) -> Tuple[np.ndarray, np.ndarray]:
    last_error = None
    for attempt in range(4):
        sigma = center + offset * (10.0 ** attempt)
        try:
            return scipy.sparse.linalg.eigsh(matrix.tocsc(), k=k, sigma=sigma, which="LM")
        except (RuntimeError, scipy.sparse.linalg.ArpackError) as exc:
            # exactly singular factorization at sigma; move the shift
            last_error = exc
            logger.warning("shift-invert failed at sigma=%.12g (%s); retrying", sigma, exc)
    raise BasisError(f"shift-invert eigensolver failed near E0={center:.9g}: {last_error}")


def _rayleigh_ritz(matrix, vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    q, _ = np.linalg.qr(vectors)
    projected = q.conj().T @ (matrix @ q)
    energies, rotation = scipy.linalg.eigh(0.5 * (projected + projected.conj().T))
    return energies, q @ rotation


def select_quasi_eigenbasis(f: ComposedOperator, rho_0: InitialState, k_kept: int = 200,
                            options: Optional[SolverOptions] = None) -> QuasiEigenbasis:
    """Quasi-eigenpairs of F nearest E₀ = tr(Fρ₀), grown until ρ₀ is captured.

    k doubles until the captured weight Σ w‖V†ψ‖² reaches the threshold or
    ``k_max``/the full dimension is hit, in which case BasisError carries the
    overlap report.
    """
    options = options or SolverOptions()
    dim = f.dim
    center = rho_0.energy(f)
    matrix = f.tocsr()
    k = min(int(k_kept), dim)
    while True:
        if dim <= options.dense_cutoff or k >= dim - 1 or k > 0.4 * dim:
            energies, vectors = _nearest_dense(f.toarray(), center, k)
        else:
            _, raw = _shift_invert(matrix, center, k, options.sigma_offset)
            energies, vectors = _rayleigh_ritz(matrix, raw)

        member_capture = [float(np.sum(np.abs(vectors.conj().T @ v) ** 2)) for _, v in rho_0.members]
        captured = float(sum(w * c for (w, _), c in zip(rho_0.members, member_capture)))
        if captured >= options.capture_threshold:
            break
        if k >= min(options.k_max, dim):
            raise BasisError(
                f"quasi-eigenbasis of {k} states captures {captured:.6f} of the initial state "
                f"(threshold {options.capture_threshold})",
                {"k_kept": k, "captured": captured, "member_capture": member_capture, "center_energy": center},
            )
        logger.info("captured %.6f with k=%d; doubling", captured, k)
        k = min(2 * k, options.k_max, dim)

    residual = np.linalg.norm(matrix @ vectors - vectors * energies[np.newaxis, :], axis=0)
    return QuasiEigenbasis(
        center_energy=center,
        quasi_energies=energies,
        states=vectors,
        k_kept=k,
        captured=captured,
        max_residual=float(residual.max()) if residual.size else 0.0,
        operator=f,
    )
