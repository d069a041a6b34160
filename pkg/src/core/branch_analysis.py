"""
Branch analysis of the (Floquet) fluxonium–resonator spectrum and Landau-Zener estimates.

A branch B_φ starts at the eigenstate closest to |φ, 0⟩ and is continued one
photon at a time by picking the unassigned eigenstate with the largest overlap
with â†|ψ_{n−1}⟩ (normalized). Branches are grown in lockstep so that every
eigenstate ends up in at most one branch.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import scipy.linalg

from src.core.composite_system import DeviceParams, DriveParams, HilbertSpec, build_static_hamiltonian, dressed_resonator_frequency
from src.core.errors import ParameterError
from src.core.floquet import build_floquet_hamiltonian
from src.core.fluxonium import level_label
from src.utils.operators import basis_vector, destroy, embed, factor_probabilities

logger = logging.getLogger(__name__)

CROSSING_MARGIN = 0.05
# one MHz/µs in GHz/ns
MHZ_PER_US = 1e-6
VELOCITY_MODELS = ("ring_up", "stark")


@dataclass
class BranchMember:
    n: int
    energy: float
    state: np.ndarray = field(repr=False)
    flux_probabilities: np.ndarray
    photon_number: float

    @property
    def mean_flux_index(self) -> float:
        return float(np.dot(np.arange(self.flux_probabilities.size), self.flux_probabilities))


@dataclass
class Branch:
    label: str
    members: List[BranchMember] = field(default_factory=list)

    def population(self, level: int) -> np.ndarray:
        return np.array([m.flux_probabilities[level] for m in self.members])

    def mean_flux_index(self) -> np.ndarray:
        return np.array([m.mean_flux_index for m in self.members])


@dataclass
class CrossingEvent:
    branch: str
    n: int
    candidates: List[int]
    overlaps: List[float]


@dataclass
class BranchReport:
    branches: List[Branch]
    crossings: List[CrossingEvent]
    epsilon: float = 0.0
    n_flux: int = 0

    def branch(self, label: str) -> Branch:
        return next(b for b in self.branches if b.label == label)

    def to_frame(self, n_columns: int = 5) -> pd.DataFrame:
        rows = []
        for b in self.branches:
            for m in b.members:
                row = {"branch": b.label, "n": m.n, "photon_number": m.photon_number, "energy_ghz": m.energy}
                for level in range(min(n_columns, m.flux_probabilities.size)):
                    row[f"p_{level_label(level)}"] = float(m.flux_probabilities[level])
                row["mean_flux_index"] = m.mean_flux_index
                rows.append(row)
        return pd.DataFrame(rows)


def compute_branches(dev: DeviceParams, spec: HilbertSpec, epsilon: float = 0.0,
                     n_levels_tracked: int = 6, n_max: Optional[int] = None,
                     omega_d: float = 0.0) -> BranchReport:
    """Branches of the static (ε = 0) or lab-frame Floquet (ε > 0) Hamiltonian.

    The photon index n of a member is the resonator excitation count of its
    continuation step; ``photon_number`` is the measured ⟨â†â⟩.
    """
    if n_levels_tracked > spec.n_flux:
        raise ParameterError("n_levels_tracked exceeds n_flux", field="n_levels_tracked")
    if epsilon < 0:
        raise ParameterError("epsilon must be >= 0", field="epsilon")

    if epsilon == 0.0:
        h = build_static_hamiltonian(dev, spec)
        dims = h.dims
        raise_op = embed(destroy(spec.n_fock).T, 1, dims)
        start = [basis_vector(dims, (level, 0)) for level in range(n_levels_tracked)]
    else:
        omega = omega_d or dressed_resonator_frequency(dev, spec, 0)
        h = build_floquet_hamiltonian(dev, DriveParams(epsilon, omega), None, spec, frame="lab")
        dims = h.dims
        raise_op = embed(destroy(spec.n_fock).T, 1, dims)
        start = [basis_vector(dims, (level, 0, spec.n_sidebands // 2)) for level in range(n_levels_tracked)]

    energies, vectors = scipy.linalg.eigh(h.toarray())
    photon_op = raise_op @ raise_op.T
    n_max = spec.n_fock - 2 if n_max is None else min(int(n_max), spec.n_fock - 2)

    assigned = np.zeros(vectors.shape[1], dtype=bool)
    branches = [Branch(level_label(level)) for level in range(n_levels_tracked)]
    crossings: List[CrossingEvent] = []
    candidates = list(start)
    alive = [True] * n_levels_tracked

    for n in range(n_max + 1):
        for level, branch in enumerate(branches):
            if not alive[level]:
                continue
            target = candidates[level]
            norm = np.linalg.norm(target)
            if norm < 1e-12:
                alive[level] = False
                continue
            overlaps = np.abs(vectors.conj().T @ (target / norm)) ** 2
            overlaps[assigned] = -1.0
            best = float(overlaps.max())
            close = np.flatnonzero(overlaps >= best - CROSSING_MARGIN)
            choice = int(close.min())
            if close.size > 1:
                crossings.append(CrossingEvent(branch.label, n, close.tolist(), overlaps[close].tolist()))
                logger.debug("branch %s crossing at n=%d among %s", branch.label, n, close.tolist())
            assigned[choice] = True
            state = vectors[:, choice]
            branch.members.append(BranchMember(
                n=n,
                energy=float(energies[choice]),
                state=state,
                flux_probabilities=factor_probabilities(state, dims, 0),
                photon_number=float(np.real(np.vdot(state, photon_op @ state))),
            ))
            candidates[level] = raise_op @ state

    return BranchReport(branches, crossings, epsilon, spec.n_flux)


def transfer_onset(branch: Branch, level: int, threshold: float = 0.1) -> Optional[float]:
    """First photon index at which ``level`` holds at least ``threshold`` of the branch."""
    for member in branch.members:
        if member.flux_probabilities[level] >= threshold:
            return float(member.n)
    return None


def landau_zener_probability(gap: float, velocity: float) -> float:
    """Diabatic passage probability e^{−πΔ²/(2v)}.

    ``gap`` is the avoided-crossing splitting in GHz and ``velocity`` the sweep
    rate of the bare energy difference in GHz/ns; both are converted to angular
    units (Δ → 2π·gap rad/ns, v → 2π·velocity rad/ns²) before use.
    """
    if gap < 0:
        raise ParameterError("gap must be >= 0", field="gap")
    if not velocity > 0:
        raise ParameterError("velocity must be > 0", field="velocity")
    delta = 2.0 * math.pi * gap
    rate = 2.0 * math.pi * velocity
    return math.exp(-math.pi * delta ** 2 / (2.0 * rate))


def sweep_velocity(n_bar: float, kappa: float, chi: Optional[float] = None, model: str = "ring_up") -> float:
    """Rate at which a photon-number avoided crossing is traversed, in GHz/ns.

    ``ring_up`` is v = n̄κ for an unshaped pulse, with κ/2π in MHz and v in
    MHz/µs. ``stark`` follows the qubit frequency instead: 2χ·n̄ per ring-up
    time 1/(2πκ), and needs ``chi``.
    """
    if model not in VELOCITY_MODELS:
        raise ParameterError(f"velocity model must be one of {VELOCITY_MODELS}", field="model")
    if not kappa > 0 or n_bar < 0:
        raise ParameterError("need kappa > 0 and n_bar >= 0", field="kappa")
    if model == "ring_up":
        return n_bar * (kappa * 1e3) * MHZ_PER_US
    if chi is None:
        raise ParameterError("the stark velocity model needs chi", field="chi")
    return abs(2.0 * chi * n_bar) * 2.0 * math.pi * kappa


def branch_summary(report: BranchReport) -> Dict[str, Dict[str, float]]:
    """Per-branch mean fluxonium index at the first and last member."""
    summary = {}
    for b in report.branches:
        if b.members:
            values = b.mean_flux_index()
            summary[b.label] = {"first": float(values[0]), "last": float(values[-1]), "members": len(b.members)}
    return summary
