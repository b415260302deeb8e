"""Exact evolution of pure states under piecewise-constant Hamiltonians.

Every Hamiltonian of the battery model conserves ``Q = n a^dag a + b^dag b``, so its
matrix splits into independent blocks. :class:`Propagator` finds those blocks as
connected components of the sparsity graph, diagonalizes each one once, and then
evolves any number of states to any number of times as ``U exp(-i L t) U^dag psi``.
"""

import logging
import math
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import norm as sparse_norm
from scipy.stats import poisson

from .exceptions import BasisError, NumericalContractError, OperatorError, TruncationError
from .fockspace import Basis, ChargeSector, OperatorMatrix, TwoModeSpace
from .model import ScheduleSegment

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-12
LEAKAGE_THRESHOLD = 1e-8
TAIL_MASS_LIMIT = 1e-10
TAIL_RULE = 1e-12
CUTOFF_HEADROOM = 0.25
RECONSTRUCTION_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class QState:
    """Normalized pure state over a two-mode basis.

    Attributes:
        basis: TwoModeSpace or ChargeSector the amplitudes refer to
        amplitudes: Complex amplitude vector (read-only)
        tail_mass: Probability discarded by truncation when the state was built
        boundary_population: Occupation of the top cutoff level of either mode
        truncation_flag: Whether ``boundary_population`` exceeded the leakage threshold
    """

    basis: Basis
    amplitudes: NDArray[np.complex128]
    tail_mass: float = 0.0
    boundary_population: float = 0.0
    truncation_flag: bool = False

    def __post_init__(self) -> None:
        """Freeze a private copy of the amplitudes and check the shape."""
        amplitudes = np.array(self.amplitudes, dtype=np.complex128)
        if amplitudes.shape != (self.basis.dim,):
            raise BasisError(
                f"Amplitude vector of shape {amplitudes.shape} does not fit basis "
                f"of dimension {self.basis.dim}"
            )
        amplitudes.setflags(write=False)
        object.__setattr__(self, "amplitudes", amplitudes)

    @classmethod
    def normalized(
        cls, basis: Basis, amplitudes: ArrayLike, tail_mass: float = 0.0
    ) -> "QState":
        """Build a state after rescaling the amplitudes to unit norm."""
        vector = np.asarray(amplitudes, dtype=np.complex128)
        norm = float(np.linalg.norm(vector))
        if norm == 0.0:
            raise NumericalContractError("Cannot normalize the zero vector")
        return cls(basis, vector / norm, tail_mass=tail_mass)

    def norm(self) -> float:
        """Euclidean norm of the amplitudes."""
        return float(np.linalg.norm(self.amplitudes))

    def probability(self, n_a: int, n_b: int) -> float:
        """Population of one basis state."""
        return float(abs(self.amplitudes[self.basis.index_of(n_a, n_b)]) ** 2)

    def overlap(self, other: "QState") -> complex:
        """``<self|other>``."""
        _check_same_basis(self.basis, other.basis)
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def _check_same_basis(left: Basis, right: Basis) -> None:
    if left != right:
        raise BasisError("State and operator are expressed in different bases")


def fock_state(n_a: int, n_b: int, basis: Basis) -> QState:
    """Single occupation-number state.

    Raises:
        BasisError: If ``(n_a, n_b)`` is not part of the basis
    """
    amplitudes = np.zeros(basis.dim, dtype=np.complex128)
    amplitudes[basis.index_of(n_a, n_b)] = 1.0
    return QState(basis, amplitudes)


def tail_cutoff(mean: float) -> int:
    """Smallest ``M`` with Poisson(mean) probability beyond ``M`` below 1e-12."""
    if mean <= 0:
        return 0
    cutoff = max(int(poisson.isf(TAIL_RULE, mean)), 0)
    while poisson.sf(cutoff, mean) >= TAIL_RULE:
        cutoff += 1
    return cutoff


def coherent_cutoffs(alpha: complex, beta: complex, n: int | None = None) -> tuple[int, int]:
    """Cutoffs for a product coherent state.

    Each mode gets its Poisson tail cutoff plus 25% headroom. With a charge order
    ``n`` the cutoffs are raised further so that every sector up to
    ``Q_max = n * M_a + M_b`` (raw tail cutoffs) is complete in the truncated space,
    which keeps the evolution of all non-negligible sectors exact.
    """
    m_a = tail_cutoff(abs(alpha) ** 2)
    m_b = tail_cutoff(abs(beta) ** 2)
    cutoff_a = math.ceil(m_a * (1 + CUTOFF_HEADROOM))
    cutoff_b = math.ceil(m_b * (1 + CUTOFF_HEADROOM))
    if n is not None:
        q_max = n * m_a + m_b
        cutoff_a = max(cutoff_a, q_max // n)
        cutoff_b = max(cutoff_b, q_max)
    return cutoff_a, cutoff_b


def _mode_amplitudes(mu: complex, cutoff: int) -> NDArray[np.complex128]:
    occupations = np.arange(cutoff + 1)
    mean = abs(mu) ** 2
    if mean == 0:
        return (occupations == 0).astype(np.complex128)
    magnitude = np.sqrt(poisson.pmf(occupations, mean))
    return magnitude * np.exp(1j * np.angle(mu) * occupations)


def coherent_state(
    alpha: complex,
    beta: complex,
    space: TwoModeSpace | None = None,
    n: int | None = None,
) -> QState:
    """Product coherent state ``|alpha>_A |beta>_B`` in a truncated space.

    Args:
        alpha: Charger-mode amplitude
        beta: Battery-mode amplitude
        space: Truncated space; derived with :func:`coherent_cutoffs` when omitted
        n: Charge order used to size the derived space

    Returns:
        Renormalized state recording the discarded tail mass

    Raises:
        TruncationError: If the cutoffs discard more than 1e-10 probability
    """
    if space is None:
        space = TwoModeSpace(*coherent_cutoffs(alpha, beta, n))
    sf_a = float(poisson.sf(space.cutoff_a, abs(alpha) ** 2)) if alpha else 0.0
    sf_b = float(poisson.sf(space.cutoff_b, abs(beta) ** 2)) if beta else 0.0
    tail = sf_a + sf_b - sf_a * sf_b
    if tail > TAIL_MASS_LIMIT:
        need_a, need_b = coherent_cutoffs(alpha, beta)
        raise TruncationError(
            f"Coherent state loses probability {tail:.3g} to truncation; raise cutoff_a to "
            f"at least {need_a} and cutoff_b to at least {need_b}"
        )
    amplitudes = np.outer(
        _mode_amplitudes(alpha, space.cutoff_a), _mode_amplitudes(beta, space.cutoff_b)
    ).ravel()
    return QState.normalized(space, amplitudes, tail_mass=tail)


def boundary_population(basis: Basis, amplitudes: NDArray[np.complex128]) -> float:
    """Probability sitting on the top cutoff level of either mode.

    Charge sectors are closed under the dynamics and have no boundary.
    """
    if isinstance(basis, ChargeSector):
        return 0.0
    n_a, n_b = basis.occupation_arrays
    edge = (n_a == basis.cutoff_a) | (n_b == basis.cutoff_b)
    return float(np.sum(np.abs(amplitudes[edge]) ** 2))


@dataclass(frozen=True, eq=False)
class Propagator:
    """Block-wise Hermitian eigendecomposition of a Hamiltonian.

    ``order`` lists basis indices block by block; ``eigenvectors`` is block-diagonal
    in that order and ``eigenvalues`` follow the same order.
    """

    basis: Basis
    order: NDArray[np.int64]
    eigenvalues: NDArray[np.float64]
    eigenvectors: sp.csr_array
    eigenvectors_dag: sp.csr_array
    block_sizes: tuple[int, ...] = field(repr=False)
    source_label: str = ""

    @classmethod
    def from_hamiltonian(cls, H: OperatorMatrix) -> "Propagator":
        """Diagonalize ``H`` block by block.

        Raises:
            OperatorError: If ``H`` is not flagged Hermitian
        """
        if not H.hermitian:
            raise OperatorError(f"Propagator needs a Hermitian generator, got '{H.label}'")
        pattern = sp.csr_matrix(abs(H.matrix))
        _, labels = connected_components(pattern, directed=False)
        order = np.argsort(labels, kind="stable").astype(np.int64)
        sizes = np.bincount(labels)
        permuted = sp.csr_array(H.matrix[order][:, order])

        eigenvalues = np.real(permuted.diagonal()).astype(np.float64)
        rows, cols, data = [], [], []
        start = 0
        for size in sizes:
            stop = start + int(size)
            if size == 1:
                rows.append(np.array([start]))
                cols.append(np.array([start]))
                data.append(np.array([1.0 + 0j]))
            else:
                w, v = scipy.linalg.eigh(permuted[start:stop, start:stop].toarray())
                eigenvalues[start:stop] = w
                r, c = np.indices((stop - start, stop - start))
                rows.append(r.ravel() + start)
                cols.append(c.ravel() + start)
                data.append(v.ravel())
            start = stop

        dim = H.basis.dim
        vectors = sp.csr_array(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dim, dim),
        )
        logger.debug(
            "Diagonalized '%s': dim=%d, %d blocks, largest %d",
            H.label,
            dim,
            len(sizes),
            int(sizes.max()) if len(sizes) else 0,
        )
        eigenvalues.setflags(write=False)
        order.setflags(write=False)
        return cls(
            basis=H.basis,
            order=order,
            eigenvalues=eigenvalues,
            eigenvectors=vectors,
            eigenvectors_dag=sp.csr_array(vectors.conj().T),
            block_sizes=tuple(int(s) for s in sizes),
            source_label=H.label,
        )

    def reconstruction_error(self, H: OperatorMatrix) -> float:
        """Relative Frobenius distance between ``U L U^dag`` and ``H``."""
        permuted = sp.csr_array(H.matrix[self.order][:, self.order])
        rebuilt = self.eigenvectors @ sp.diags_array(self.eigenvalues) @ self.eigenvectors_dag
        scale = sparse_norm(permuted) or 1.0
        return float(sparse_norm(rebuilt - permuted) / scale)

    def project(self, amplitudes: NDArray[np.complex128]) -> NDArray[np.complex128]:
        """Coefficients of a state in the eigenbasis."""
        return np.asarray(self.eigenvectors_dag @ amplitudes[self.order], dtype=np.complex128)

    def amplitudes_at(
        self, coefficients: NDArray[np.complex128], t: float
    ) -> NDArray[np.complex128]:
        """Amplitudes in the original basis order after time ``t``."""
        evolved = self.eigenvectors @ (np.exp(-1j * self.eigenvalues * t) * coefficients)
        result = np.empty_like(evolved)
        result[self.order] = evolved
        return result


@lru_cache(maxsize=16)
def propagator_for(H: OperatorMatrix) -> Propagator:
    """Cached propagator, keyed on the operator instance."""
    return Propagator.from_hamiltonian(H)


def _evolved_state(basis: Basis, amplitudes: NDArray[np.complex128], tail: float) -> QState:
    edge = boundary_population(basis, amplitudes)
    return QState(
        basis,
        amplitudes,
        tail_mass=tail,
        boundary_population=edge,
        truncation_flag=edge > LEAKAGE_THRESHOLD,
    )


def evolve_iter(state: QState, H: OperatorMatrix, times: Sequence[float]) -> Iterator[QState]:
    """Lazily evolve one state along a time grid with a shared propagator.

    Raises:
        BasisError: If state and Hamiltonian use different bases
        OperatorError: If ``H`` is not Hermitian
    """
    _check_same_basis(state.basis, H.basis)
    propagator = propagator_for(H)
    coefficients = propagator.project(np.asarray(state.amplitudes))
    for t in times:
        yield _evolved_state(
            state.basis, propagator.amplitudes_at(coefficients, float(t)), state.tail_mass
        )


def evolve_many(state: QState, H: OperatorMatrix, times: Sequence[float]) -> list[QState]:
    """Evolve one state to every time on a grid with a shared propagator.

    Each result carries the leakage monitor's boundary population and flag.

    Raises:
        BasisError: If state and Hamiltonian use different bases
        OperatorError: If ``H`` is not Hermitian
    """
    states = list(evolve_iter(state, H, times))
    flagged = sum(s.truncation_flag for s in states)
    if flagged:
        logger.warning(
            "Truncation contamination: %d of %d states exceed boundary population %g",
            flagged,
            len(states),
            LEAKAGE_THRESHOLD,
        )
    return states


def evolve(state: QState, H: OperatorMatrix, t: float) -> QState:
    """Evolve a state for time ``t`` under a time-independent Hamiltonian."""
    return evolve_many(state, H, [t])[0]


def evolve_schedule(
    state: QState,
    schedule: Sequence[ScheduleSegment],
    generator: Callable[[ScheduleSegment], OperatorMatrix],
) -> list[QState]:
    """Run a contiguous schedule, returning the state after each segment."""
    trace = []
    current = state
    for segment in schedule:
        current = evolve(current, generator(segment), segment.duration)
        trace.append(current)
    return trace


def expectation(op: OperatorMatrix, state: QState) -> complex:
    """``<psi|O|psi>``.

    Raises:
        BasisError: If state and operator use different bases
    """
    _check_same_basis(state.basis, op.basis)
    return complex(np.vdot(state.amplitudes, op.apply(np.asarray(state.amplitudes))))


def variance(op: OperatorMatrix, state: QState) -> float:
    """``<O^dag O> - |<O>|^2``, which is ``<O^2> - <O>^2`` for Hermitian ``O``.

    Raises:
        BasisError: If state and operator use different bases
    """
    _check_same_basis(state.basis, op.basis)
    psi = np.asarray(state.amplitudes)
    image = op.apply(psi)
    mean = np.vdot(psi, image)
    second = np.vdot(image, image).real
    return max(float(second - abs(mean) ** 2), 0.0)


def embed(state: QState, space: TwoModeSpace) -> QState:
    """Lift a state into a truncated two-mode space.

    Raises:
        BasisError: If a populated basis state lies outside the space
    """
    amplitudes = np.zeros(space.dim, dtype=np.complex128)
    for index, (n_a, n_b) in enumerate(state.basis.states):
        amplitudes[space.index_of(n_a, n_b)] = state.amplitudes[index]
    return QState(space, amplitudes, tail_mass=state.tail_mass)
