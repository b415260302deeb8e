"""Truncated two-mode Fock bases, charge sectors and ladder operators.

Basis states are occupation pairs ``(N_A, N_B)``. A :class:`TwoModeSpace` is the
full rectangle ``0 <= N_A <= cutoff_a``, ``0 <= N_B <= cutoff_b`` in row-major order;
a :class:`ChargeSector` is the set of states with ``n * N_A + N_B = Q``, sorted by
descending ``N_A`` so that the charger-full state comes first.
"""

import math
from dataclasses import dataclass
from functools import cached_property, reduce
from typing import Literal

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .exceptions import BasisError, DomainError

Occupation = tuple[int, int]
Mode = Literal["a", "b"]


@dataclass(frozen=True)
class TwoModeSpace:
    """Truncated product basis of two bosonic modes.

    Attributes:
        cutoff_a: Highest A-mode (charger) occupation kept
        cutoff_b: Highest B-mode (battery) occupation kept
    """

    cutoff_a: int
    cutoff_b: int

    def __post_init__(self) -> None:
        """Validate cutoffs."""
        if self.cutoff_a < 0 or self.cutoff_b < 0:
            raise DomainError(
                f"Cutoffs must be non-negative, got ({self.cutoff_a}, {self.cutoff_b})"
            )

    @property
    def dim(self) -> int:
        """Number of basis states."""
        return (self.cutoff_a + 1) * (self.cutoff_b + 1)

    def contains(self, n_a: int, n_b: int) -> bool:
        """Whether ``(n_a, n_b)`` lies inside the truncation."""
        return 0 <= n_a <= self.cutoff_a and 0 <= n_b <= self.cutoff_b

    def index_of(self, n_a: int, n_b: int) -> int:
        """Flat index of an occupation pair.

        Raises:
            BasisError: If the pair lies outside the truncation
        """
        if not self.contains(n_a, n_b):
            raise BasisError(
                f"Occupation ({n_a}, {n_b}) outside cutoffs "
                f"({self.cutoff_a}, {self.cutoff_b})"
            )
        return n_a * (self.cutoff_b + 1) + n_b

    def occupations(self, index: int) -> Occupation:
        """Occupation pair stored at a flat index."""
        if not 0 <= index < self.dim:
            raise BasisError(f"Index {index} outside [0, {self.dim})")
        n_a, n_b = divmod(index, self.cutoff_b + 1)
        return n_a, n_b

    @cached_property
    def states(self) -> tuple[Occupation, ...]:
        """All occupation pairs in flat-index order."""
        return tuple(
            (n_a, n_b) for n_a in range(self.cutoff_a + 1) for n_b in range(self.cutoff_b + 1)
        )

    @cached_property
    def occupation_arrays(self) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
        """Per-index ``N_A`` and ``N_B`` as integer arrays."""
        n_a, n_b = np.divmod(np.arange(self.dim, dtype=np.int64), self.cutoff_b + 1)
        return n_a, n_b


@dataclass(frozen=True)
class ChargeSector:
    """States with fixed conserved charge ``Q = n * N_A + N_B``.

    Attributes:
        n: Nonlinearity order of the conversion term
        Q: Charge value
        states: Occupation pairs, descending ``N_A``
    """

    n: int
    Q: int
    states: tuple[Occupation, ...]

    @property
    def dim(self) -> int:
        """Number of basis states."""
        return len(self.states)

    @cached_property
    def _lookup(self) -> dict[Occupation, int]:
        return {state: i for i, state in enumerate(self.states)}

    def contains(self, n_a: int, n_b: int) -> bool:
        """Whether ``(n_a, n_b)`` belongs to the sector."""
        return (n_a, n_b) in self._lookup

    def index_of(self, n_a: int, n_b: int) -> int:
        """Position of an occupation pair in the sector.

        Raises:
            BasisError: If the pair does not carry this sector's charge
        """
        try:
            return self._lookup[(n_a, n_b)]
        except KeyError:
            raise BasisError(
                f"Occupation ({n_a}, {n_b}) not in charge sector n={self.n}, Q={self.Q}"
            ) from None

    @cached_property
    def occupation_arrays(self) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
        """Per-index ``N_A`` and ``N_B`` as integer arrays."""
        pairs = np.array(self.states, dtype=np.int64).reshape(-1, 2)
        return pairs[:, 0], pairs[:, 1]


Basis = TwoModeSpace | ChargeSector


def enumerate_sector(n: int, Q: int) -> ChargeSector:
    """List every state with ``n * N_A + N_B = Q``.

    Args:
        n: Nonlinearity order (>= 1)
        Q: Charge (>= 0)

    Returns:
        ChargeSector with ``Q // n + 1`` states, charger-full state first

    Raises:
        DomainError: If ``n < 1`` or ``Q < 0``
    """
    if n < 1 or Q < 0:
        raise DomainError(f"Charge sector needs n >= 1 and Q >= 0, got n={n}, Q={Q}")
    states = tuple((n_a, Q - n * n_a) for n_a in range(Q // n, -1, -1))
    return ChargeSector(n=n, Q=Q, states=states)


def sectors_of(space: TwoModeSpace, n: int) -> list[ChargeSector]:
    """Partition a truncated space into (possibly clipped) charge sectors.

    Sectors whose states do not all fit the cutoffs keep only the states that do,
    so the returned dimensions always sum to ``space.dim``.
    """
    top = n * space.cutoff_a + space.cutoff_b
    clipped = []
    for Q in range(top + 1):
        full = enumerate_sector(n, Q)
        kept = tuple(s for s in full.states if space.contains(*s))
        if kept:
            clipped.append(ChargeSector(n=n, Q=Q, states=kept))
    return clipped


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Sparse complex operator expressed in a basis.

    ``hermitian`` records how the matrix was built (symmetrically from real or
    conjugate-paired entries); it is never inferred from a tolerance check.
    """

    basis: Basis
    matrix: sp.csr_array
    hermitian: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        """Check the matrix shape against the basis."""
        expected = (self.basis.dim, self.basis.dim)
        if self.matrix.shape != expected:
            raise BasisError(
                f"Operator '{self.label}' has shape {self.matrix.shape}, basis needs {expected}"
            )

    def apply(self, vector: NDArray[np.complex128]) -> NDArray[np.complex128]:
        """Return ``M @ vector``."""
        return np.asarray(self.matrix @ vector, dtype=np.complex128)

    def adjoint(self) -> "OperatorMatrix":
        """Conjugate transpose."""
        return OperatorMatrix(
            self.basis,
            sp.csr_array(self.matrix.conj().T),
            hermitian=self.hermitian,
            label=f"({self.label})^dag",
        )

    def scaled(self, factor: complex) -> "OperatorMatrix":
        """Multiply by a scalar; real factors keep the Hermitian flag."""
        real = complex(factor).imag == 0.0
        return OperatorMatrix(
            self.basis,
            sp.csr_array(self.matrix * factor),
            hermitian=self.hermitian and real,
            label=f"{factor}*{self.label}",
        )

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        """Sum of two operators on the same basis."""
        self._check_basis(other)
        return OperatorMatrix(
            self.basis,
            sp.csr_array(self.matrix + other.matrix),
            hermitian=self.hermitian and other.hermitian,
            label=f"{self.label}+{other.label}",
        )

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        """Difference of two operators on the same basis."""
        return self + other.scaled(-1.0)

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        """Operator product (never flagged Hermitian)."""
        self._check_basis(other)
        return OperatorMatrix(
            self.basis,
            sp.csr_array(self.matrix @ other.matrix),
            label=f"{self.label}{other.label}",
        )

    def commutator(self, other: "OperatorMatrix") -> "OperatorMatrix":
        """``[self, other]``."""
        return (self @ other) - (other @ self)

    def to_dense(self) -> NDArray[np.complex128]:
        """Dense copy of the matrix."""
        return np.asarray(self.matrix.toarray(), dtype=np.complex128)

    def max_abs(self) -> float:
        """Largest entry magnitude (0 for the zero operator)."""
        data = self.matrix.data
        return float(np.max(np.abs(data))) if data.size else 0.0

    def _check_basis(self, other: "OperatorMatrix") -> None:
        if self.basis != other.basis:
            raise BasisError(f"Operators '{self.label}' and '{other.label}' use different bases")


@dataclass(frozen=True)
class LadderOps:
    """Mode operators of a :class:`TwoModeSpace`."""

    a: OperatorMatrix
    a_dag: OperatorMatrix
    b: OperatorMatrix
    b_dag: OperatorMatrix
    n_a: OperatorMatrix
    n_b: OperatorMatrix


def single_mode_annihilation(cutoff: int) -> sp.csr_array:
    """Annihilation matrix on ``|0>, ..., |cutoff>``."""
    return sp.csr_array(
        sp.diags_array(np.sqrt(np.arange(1, cutoff + 1, dtype=np.float64)), offsets=1),
        dtype=np.complex128,
    )


def ladder_ops(space: TwoModeSpace) -> LadderOps:
    """Build ladder and number operators of both modes.

    Raising past a cutoff maps to zero amplitude.

    Args:
        space: Truncated two-mode space

    Returns:
        LadderOps bundle
    """
    eye_a = sp.eye_array(space.cutoff_a + 1, dtype=np.complex128, format="csr")
    eye_b = sp.eye_array(space.cutoff_b + 1, dtype=np.complex128, format="csr")
    a = sp.csr_array(sp.kron(single_mode_annihilation(space.cutoff_a), eye_b))
    b = sp.csr_array(sp.kron(eye_a, single_mode_annihilation(space.cutoff_b)))
    return LadderOps(
        a=OperatorMatrix(space, a, label="a"),
        a_dag=OperatorMatrix(space, sp.csr_array(a.T), label="a^dag"),
        b=OperatorMatrix(space, b, label="b"),
        b_dag=OperatorMatrix(space, sp.csr_array(b.T), label="b^dag"),
        n_a=number_operator(space, "a"),
        n_b=number_operator(space, "b"),
    )


def diagonal_operator(basis: Basis, values: NDArray[np.float64], label: str) -> OperatorMatrix:
    """Real diagonal operator (Hermitian by construction)."""
    matrix = sp.csr_array(sp.diags_array(np.asarray(values, dtype=np.complex128)))
    return OperatorMatrix(basis, matrix, hermitian=True, label=label)


def number_operator(basis: Basis, mode: Mode) -> OperatorMatrix:
    """Occupation-number operator of one mode, valid on any basis."""
    n_a, n_b = basis.occupation_arrays
    values = n_a if mode == "a" else n_b
    return diagonal_operator(basis, values.astype(np.float64), label=f"n_{mode}")


def operator_power(op: OperatorMatrix, power: int) -> OperatorMatrix:
    """``op`` raised to a non-negative integer power."""
    if power < 0:
        raise DomainError(f"Operator power must be >= 0, got {power}")
    identity = diagonal_operator(op.basis, np.ones(op.basis.dim), label="1")
    if power == 0:
        return identity
    return reduce(lambda acc, _: acc @ op, range(power - 1), op)


def _falling(top: int, count: int) -> int:
    """``top! / (top - count)!`` in exact integer arithmetic."""
    return math.prod(range(top - count + 1, top + 1))


def conversion_operator(basis: Basis, n: int) -> OperatorMatrix:
    """``a^dag b^n + a (b^dag)^n`` restricted to a basis.

    On a :class:`TwoModeSpace` this is assembled from the ladder matrices; on a
    :class:`ChargeSector` the (closed) matrix elements
    ``sqrt(N_A + 1) * sqrt(N_B! / (N_B - n)!)`` are placed directly. Either way the
    result is real and built as ``M + M^T``, so it is exactly symmetric.
    """
    if n < 1:
        raise DomainError(f"Nonlinearity order must be >= 1, got {n}")
    if isinstance(basis, TwoModeSpace):
        ops = ladder_ops(basis)
        forward = (ops.a_dag @ operator_power(ops.b, n)).matrix
    else:
        rows, cols, values = [], [], []
        for col, (n_a, n_b) in enumerate(basis.states):
            if n_b >= n and basis.contains(n_a + 1, n_b - n):
                rows.append(basis.index_of(n_a + 1, n_b - n))
                cols.append(col)
                values.append(math.sqrt(n_a + 1) * math.sqrt(_falling(n_b, n)))
        forward = sp.csr_array(
            (
                np.asarray(values, dtype=np.complex128),
                (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)),
            ),
            shape=(basis.dim, basis.dim),
        )
    return OperatorMatrix(
        basis, sp.csr_array(forward + forward.T), hermitian=True, label=f"a^dag b^{n} + h.c."
    )
