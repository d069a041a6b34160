"""
Lindblad evolution projected onto a quasi-eigenbasis.

The reduced density matrix is integrated in the interaction picture of F,
where the Hamiltonian part vanishes and only the dissipator remains, with
time-dependent jump elements L̃_ij(t) = L_ij·e^{i2π(λ_i − λ_j)t}. Entries of L
are clustered by Bohr frequency: sorted frequencies closer than the bandwidth
to their neighbour share a cluster, so a cluster ends only at a gap wider than
the bandwidth. Cross terms between clusters oscillate at least that fast and
are dropped; each cluster acts as its own jump operator and the generator
stays in Lindblad form.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from src.core.errors import IntegrationError
from src.core.floquet import InitialState, QuasiEigenbasis, SolverOptions, build_lindbladian
from src.utils.operators import factor_projector_block

logger = logging.getLogger(__name__)

SMALL_BIN = 32


def bohr_bins(frequencies: np.ndarray, bandwidth: Optional[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Single-linkage clustering of Bohr frequencies on the gaps between sorted values.

    Returns (bin index per frequency, bin centers). A near-degenerate group is
    never split however wide it is in total. ``bandwidth=None`` puts
    everything in one bin centered at zero.
    """
    if frequencies.size == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    if bandwidth is None:
        return np.zeros(frequencies.size, dtype=int), np.zeros(1)
    order = np.argsort(frequencies, kind="stable")
    ordered = frequencies[order]
    starts = np.concatenate(([0], np.cumsum(np.diff(ordered) > bandwidth)))
    assignment = np.empty(frequencies.size, dtype=int)
    assignment[order] = starts
    counts = np.bincount(starts)
    centers = np.bincount(starts, weights=ordered) / counts
    return assignment, centers


def secular_mask(energies: np.ndarray, bandwidth: Optional[float]) -> np.ndarray:
    """Coherences ρ_ij whose Bohr frequency falls in the cluster around zero."""
    omega = energies[:, np.newaxis] - energies[np.newaxis, :]
    if bandwidth is None:
        return np.ones(omega.shape, dtype=bool)
    assignment, _ = bohr_bins(omega.ravel(), bandwidth)
    return (assignment == assignment[0]).reshape(omega.shape)


class SecularDissipator:
    """Right-hand side γ(Σ_b L̃_b ρ̃ L̃_b† − ½{M(t), ρ̃}) with M = Σ_b L̃_b†L̃_b.

    Small bins are evaluated as vectorized element pairs, large bins as sparse
    products whose values are refreshed in place every call.
    """

    def __init__(self, jump: np.ndarray, energies: np.ndarray, rate: float,
                 bandwidth: Optional[float], drop_tol: float = 1e-12):
        self.k = jump.shape[0]
        self.rate = rate
        scale = np.max(np.abs(jump)) if jump.size else 0.0
        rows, cols = np.nonzero(np.abs(jump) > drop_tol * max(scale, 1e-300))
        values = jump[rows, cols]
        omega = energies[rows] - energies[cols]
        assignment, centers = bohr_bins(omega, bandwidth)
        residual = omega - centers[assignment] if omega.size else omega
        self.n_bins = len(centers)
        self.n_entries = rows.size

        pair_parts = {key: [] for key in ("out", "src", "coef", "freq")}
        m_parts = {key: [] for key in ("idx", "coef", "freq")}
        self.large: List[Tuple[sp.csr_matrix, np.ndarray, np.ndarray, np.ndarray]] = []

        k = self.k
        for b in range(self.n_bins):
            members = np.flatnonzero(assignment == b)
            if members.size == 0:
                continue
            if members.size <= SMALL_BIN:
                p, q = np.meshgrid(members, members, indexing="ij")
                p, q = p.ravel(), q.ravel()
                pair_parts["out"].append(rows[p] * k + rows[q])
                pair_parts["src"].append(cols[p] * k + cols[q])
                pair_parts["coef"].append(values[p] * np.conj(values[q]))
                pair_parts["freq"].append(residual[p] - residual[q])
                same = rows[p] == rows[q]
                m_parts["idx"].append(cols[p][same] * k + cols[q][same])
                m_parts["coef"].append(np.conj(values[p][same]) * values[q][same])
                m_parts["freq"].append(-(residual[p][same] - residual[q][same]))
            else:
                template = sp.csr_matrix(
                    (np.arange(1, members.size + 1, dtype=float), (rows[members], cols[members])), shape=(k, k)
                )
                perm = template.data.astype(int) - 1
                template = template.astype(complex)
                self.large.append((template, values[members][perm], residual[members][perm], perm))

        def _cat(parts, dtype):
            return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)

        self.pair_out = _cat(pair_parts["out"], int)
        self.pair_src = _cat(pair_parts["src"], int)
        self.pair_coef = _cat(pair_parts["coef"], complex)
        self.pair_freq = _cat(pair_parts["freq"], float)
        self.m_idx = _cat(m_parts["idx"], int)
        self.m_coef = _cat(m_parts["coef"], complex)
        self.m_freq = _cat(m_parts["freq"], float)

    @staticmethod
    def _accumulate(index: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
        return np.bincount(index, values.real, size) + 1j * np.bincount(index, values.imag, size)

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        k = self.k
        flat = rho.ravel()
        jump_term = np.zeros((k, k), dtype=complex)
        m_rho = np.zeros((k, k), dtype=complex)

        if self.pair_out.size:
            phases = np.exp(2j * np.pi * self.pair_freq * t)
            jump_term += self._accumulate(self.pair_out, self.pair_coef * phases * flat[self.pair_src], k * k).reshape(k, k)
        if self.m_idx.size:
            m_values = self.m_coef * np.exp(2j * np.pi * self.m_freq * t)
            m_matrix = sp.csr_matrix((m_values, (self.m_idx // k, self.m_idx % k)), shape=(k, k))
            m_rho += m_matrix @ rho

        for template, values, residual, _ in self.large:
            template.data = values * np.exp(2j * np.pi * residual * t)
            y = template @ rho
            jump_term += (template @ y.conj().T).conj().T
            m_rho += np.conj(template.T @ np.conj(y))

        return self.rate * (jump_term - 0.5 * (m_rho + m_rho.conj().T))


@dataclass
class EvolutionDiagnostics:
    converged: bool = False
    time_reached: float = 0.0
    residual: float = float("inf")
    max_trace_error: float = 0.0
    min_eigenvalue: float = 0.0
    edge_population: float = 0.0
    edge_warning: bool = False
    energy_drift: float = 0.0
    n_bins: int = 0
    captured: float = 1.0
    history: List[Tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> Dict:
        data = dict(self.__dict__)
        data.pop("history")
        return data


@dataclass
class FixedPointResult:
    rho: np.ndarray
    n_bar: float
    populations: np.ndarray
    p_other: float
    diagnostics: EvolutionDiagnostics

    @property
    def converged(self) -> bool:
        return self.diagnostics.converged


class ReducedObservables:
    """Quasi-eigenbasis matrices of the photon number, fluxonium and edge projectors."""

    def __init__(self, basis: QuasiEigenbasis):
        f = basis.operator
        v = basis.states
        self.dims = f.dims
        self.energies = basis.quasi_energies
        self._masks: Dict[float, np.ndarray] = {}
        self.photon = v.conj().T @ (f.aux["photon_number"] @ v)
        self.photon_offset = f.aux.get("photon_offset", 0.0)
        self.flux = [factor_projector_block(v, f.dims, 0, level) for level in range(f.dims[0])]
        self.edge = None
        if "sideband" in f.labels and f.dims[-1] > 1:
            pos = len(f.dims) - 1
            self.edge = factor_projector_block(v, f.dims, pos, 0) + factor_projector_block(v, f.dims, pos, f.dims[-1] - 1)

    @staticmethod
    def expect(op: np.ndarray, rho: np.ndarray) -> float:
        return float(np.real(np.sum(op.T * rho)))

    def schrodinger(self, rho_tilde: np.ndarray, t: float, bandwidth: Optional[float]) -> np.ndarray:
        """Rotate back to the Schrödinger picture; the secular mode drops coherences outside the zero cluster."""
        omega = self.energies[:, np.newaxis] - self.energies[np.newaxis, :]
        rho = rho_tilde * np.exp(-2j * np.pi * omega * t)
        if bandwidth is not None:
            if bandwidth not in self._masks:
                self._masks[bandwidth] = secular_mask(self.energies, bandwidth)
            rho = np.where(self._masks[bandwidth], rho, 0.0)
        return rho

    def measure(self, rho: np.ndarray) -> Tuple[float, np.ndarray]:
        n_bar = self.expect(self.photon, rho) + self.photon_offset * float(np.real(np.trace(rho)))
        populations = np.array([self.expect(p, rho) for p in self.flux])
        return n_bar, populations


def reduced_initial_state(basis: QuasiEigenbasis, rho_0: InitialState) -> np.ndarray:
    rho = np.zeros((basis.k_kept, basis.k_kept), dtype=complex)
    for weight, vec in rho_0.members:
        amp = basis.states.conj().T @ vec
        rho += weight * np.outer(amp, amp.conj())
    return rho / np.real(np.trace(rho))


def evolve_to_fixed_point(basis: QuasiEigenbasis, rho_0: InitialState, kappa: float,
                          duration: Optional[float] = None,
                          options: Optional[SolverOptions] = None) -> FixedPointResult:
    """Evolve ρ₀ under the projected Lindbladian until its fixed point or the duration cap.

    ``duration`` is in ns and defaults to ``duration_periods``·2π/κ. Reaching
    the cap without ‖dρ/dt‖ < tol·‖ρ‖ is reported in the diagnostics, not raised.
    """
    options = options or SolverOptions()
    f = basis.operator
    duration = options.duration_periods / kappa if duration is None else float(duration)
    bandwidth = options.secular_bandwidth_ghz

    jump = build_lindbladian(f, kappa).jump
    v = basis.states
    jump_red = v.conj().T @ (jump @ v)
    rhs_core = SecularDissipator(jump_red, basis.quasi_energies, 2.0 * np.pi * kappa, bandwidth)
    observables = ReducedObservables(basis)
    k = basis.k_kept

    def rhs(t, y):
        return rhs_core(t, y.reshape(k, k)).ravel()

    rho = reduced_initial_state(basis, rho_0)
    energy_start = float(np.real(np.sum(basis.quasi_energies * np.diag(rho))))
    diagnostics = EvolutionDiagnostics(n_bins=rhs_core.n_bins, captured=basis.captured)
    t = 0.0
    edges = np.linspace(0.0, duration, max(int(options.n_chunks), 1) + 1)
    for t_next in edges[1:]:
        sol = solve_ivp(rhs, (t, t_next), rho.ravel(), method="RK45", atol=options.atol, rtol=options.rtol)
        if not sol.success:
            logger.warning("integrator stopped at t=%.3f ns: %s", t, sol.message)
            break
        t = float(t_next)
        rho = sol.y[:, -1].reshape(k, k)
        rho = 0.5 * (rho + rho.conj().T)
        trace = float(np.real(np.trace(rho)))
        trace_error = abs(trace - 1.0)
        diagnostics.max_trace_error = max(diagnostics.max_trace_error, trace_error)
        if trace_error > options.trace_tolerance:
            raise IntegrationError(
                f"trace drifted to {trace:.12f} at t={t:.3f} ns (tolerance {options.trace_tolerance:.0e})", t
            )
        rho = rho / trace
        lowest = float(np.linalg.eigvalsh(rho)[0])
        diagnostics.min_eigenvalue = min(diagnostics.min_eigenvalue, lowest)
        if lowest < -options.positivity_tolerance:
            raise IntegrationError(f"density matrix eigenvalue {lowest:.2e} at t={t:.3f} ns", t)

        n_bar, _ = observables.measure(observables.schrodinger(rho, t, bandwidth))
        diagnostics.history.append((t, n_bar))
        diagnostics.residual = float(np.linalg.norm(rhs_core(t, rho)) / np.linalg.norm(rho))
        diagnostics.time_reached = t
        if diagnostics.residual < options.fixed_point_tol:
            diagnostics.converged = True
            break

    rho_s = observables.schrodinger(rho, t, bandwidth)
    n_bar, populations = observables.measure(rho_s)
    energy_end = float(np.real(np.sum(basis.quasi_energies * np.diag(rho))))
    scale = float(np.max(np.abs(basis.quasi_energies))) or 1.0
    diagnostics.energy_drift = abs(energy_end - energy_start) / scale
    if observables.edge is not None:
        diagnostics.edge_population = observables.expect(observables.edge, rho_s)
        if diagnostics.edge_population > options.edge_tolerance:
            diagnostics.edge_warning = True
            logger.warning("outermost sidebands hold %.2e of the population; add sidebands",
                           diagnostics.edge_population)

    return FixedPointResult(
        rho=rho_s,
        n_bar=n_bar,
        populations=populations,
        p_other=float(np.sum(populations[2:])),
        diagnostics=diagnostics,
    )
