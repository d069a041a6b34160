"""
Operators on labeled tensor-product spaces.

Factor order everywhere in the package is fluxonium ⊗ resonator ⊗ TLS ⊗ sideband;
absent factors are simply left out of ``dims``.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Sequence, Tuple, Union

import numpy as np
import qutip
import scipy.sparse as sp

from src.config.settings import settings
from src.core.errors import ResourceError

MatrixLike = Union[np.ndarray, sp.spmatrix]


@dataclass(frozen=True)
class ComposedOperator:
    """A complex matrix together with the factor structure it acts on.

    ``aux`` carries construction by-products that later stages need (the
    fluxonium eigenbasis, the jump operator of a Floquet operator, ...). It is
    ignored by equality.
    """

    matrix: MatrixLike
    dims: Tuple[int, ...]
    labels: Tuple[str, ...]
    aux: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.dims) != len(self.labels):
            raise ValueError("dims and labels must have the same length")
        if self.matrix.shape != (self.dim, self.dim):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match dims {self.dims}")

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def tocsr(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.matrix)

    def factor_index(self, label: str) -> int:
        return self.labels.index(label)

    def hermiticity_error(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        if sp.issparse(diff):
            return float(abs(diff).max()) if diff.nnz else 0.0
        return float(np.max(np.abs(diff))) if diff.size else 0.0

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return self.hermiticity_error() < tol

    def with_matrix(self, matrix: MatrixLike, **aux) -> "ComposedOperator":
        merged = dict(self.aux)
        merged.update(aux)
        return ComposedOperator(matrix, self.dims, self.labels, merged)


def check_dimension(dims: Sequence[int], cap: int = None) -> int:
    """Product dimension of ``dims``; raises ResourceError above the cap."""
    cap = settings.MAX_HILBERT_DIM if cap is None else cap
    total = int(np.prod([int(d) for d in dims]))
    if total > cap:
        raise ResourceError(f"composed dimension {total} exceeds cap {cap} (dims={tuple(dims)})")
    return total


def as_sparse(op: qutip.Qobj) -> sp.csr_matrix:
    """CSR copy of a single-factor Qobj, real-valued when its entries are."""
    return sp.csr_matrix(np.real_if_close(op.full()))


def destroy(n: int) -> sp.csr_matrix:
    """Truncated annihilation operator on n Fock levels."""
    return as_sparse(qutip.destroy(n))


def number(n: int) -> sp.csr_matrix:
    return as_sparse(qutip.num(n))


def two_level_operators() -> Tuple[np.ndarray, np.ndarray]:
    """(Ẑ/2, X̂) on a two-level factor whose level 0 is the lower one."""
    return -0.5 * np.real(qutip.sigmaz().full()), np.real(qutip.sigmax().full())


def shift_right(n: int) -> sp.csr_matrix:
    """Right translation b† on an n-site lattice: |k⟩ → |k+1⟩, zero past the edge."""
    return sp.diags(np.ones(n - 1), -1, shape=(n, n), format="csr")


def kron_all(factors: Iterable[MatrixLike]) -> sp.csr_matrix:
    out = None
    for factor in factors:
        factor = sp.csr_matrix(factor)
        out = factor if out is None else sp.kron(out, factor, format="csr")
    return out


def embed(op: MatrixLike, position: int, dims: Sequence[int]) -> sp.csr_matrix:
    """Lift a single-factor operator into the product space."""
    factors = [sp.identity(d, format="csr") for d in dims]
    factors[position] = op
    return kron_all(factors)


def embed_many(ops: Dict[int, MatrixLike], dims: Sequence[int]) -> sp.csr_matrix:
    """Product of operators acting on distinct factors."""
    factors = [sp.identity(d, format="csr") for d in dims]
    for position, op in ops.items():
        factors[position] = op
    return kron_all(factors)


def basis_vector(dims: Sequence[int], indices: Sequence[int]) -> np.ndarray:
    vec = np.zeros(int(np.prod(dims)), dtype=complex)
    vec[np.ravel_multi_index(tuple(indices), tuple(dims))] = 1.0
    return vec


def factor_probabilities(vec: np.ndarray, dims: Sequence[int], position: int) -> np.ndarray:
    """Diagonal of the reduced density matrix of a pure state on one factor."""
    amplitudes = np.abs(np.reshape(vec, tuple(dims))) ** 2
    other_axes = tuple(i for i in range(len(dims)) if i != position)
    return amplitudes.sum(axis=other_axes)


def factor_projector_block(states: np.ndarray, dims: Sequence[int], position: int, index: int) -> np.ndarray:
    """V†(Π_index ⊗ 𝟙)V for column states V, Π projecting one factor onto one level."""
    k = states.shape[1]
    moved = np.moveaxis(np.reshape(states, tuple(dims) + (k,)), position, 0)
    rows = moved[index].reshape(-1, k)
    return rows.conj().T @ rows
