"""Quantum Fisher information, two-mode quadratures and short-time oracles.

QFI follows the variance convention ``F_Q(O) = <O^2> - <O>^2``; the conventional
value (four times larger) is reported separately as ``conventional_qfi``.
Quadratures use ``x = (m + m^dag) / 2`` so that every vacuum quadrature variance is 1/4.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .exceptions import BasisError, OperatorError
from .fockspace import Basis, OperatorMatrix, TwoModeSpace, ladder_ops, number_operator
from .model import BatteryModelParams, build_hamiltonian
from .propagate import QState, evolve_many, expectation, variance

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
VACUUM_VARIANCE = 0.25
ANGLE_TOLERANCE = 1e-12
# Phases this close to a wrap point fold back; matches the optimizer resolution.
WRAP_TOLERANCE = 1e-8

QuadratureKind = Literal["x", "p"]
QUADRATURE_ORDER = ("x_a", "x_b", "p_a", "p_b")
_QUADRATURE_PARTS: tuple[tuple[Literal["a", "b"], QuadratureKind], ...] = (
    ("a", "x"),
    ("b", "x"),
    ("a", "p"),
    ("b", "p"),
)


@dataclass(frozen=True)
class QuadratureAngles:
    """Angles of ``X = [e^{i phi_q}(cos(theta) a + e^{i eta} sin(theta) b) + h.c.] / 2``.

    Attributes:
        theta: Mode mixing angle in [0, pi/2]
        phi_q: Quadrature phase (distinct from the sensed frequency shift)
        eta: Relative phase of the B mode
    """

    theta: float
    phi_q: float
    eta: float

    def coefficients(self) -> tuple[complex, complex]:
        """Complex weights ``(u_a, u_b)`` of the annihilation operators."""
        u_a = math.cos(self.theta) * complex(math.cos(self.phi_q), math.sin(self.phi_q))
        phase_b = self.phi_q + self.eta
        u_b = math.sin(self.theta) * complex(math.cos(phase_b), math.sin(phase_b))
        return u_a, u_b

    def direction(self) -> NDArray[np.float64]:
        """Unit vector ``r`` with ``X = r . (x_a, x_b, p_a, p_b)``."""
        u_a, u_b = self.coefficients()
        return np.array([u_a.real, u_b.real, -u_a.imag, -u_b.imag])

    @classmethod
    def from_direction(cls, r: NDArray[np.float64]) -> "QuadratureAngles":
        """Canonical angles of the quadrature along ``r`` (normalized first)."""
        r = np.asarray(r, dtype=np.float64)
        r = r / np.linalg.norm(r)
        return cls.from_coefficients(complex(r[0], -r[2]), complex(r[1], -r[3]))

    @classmethod
    def from_coefficients(cls, u_a: complex, u_b: complex) -> "QuadratureAngles":
        """Canonical angles for mode weights ``(u_a, u_b)``.

        ``X`` and ``-X`` share a variance, so the overall sign is fixed by
        requiring ``phi_q`` in [0, pi). When the A weight vanishes only
        ``phi_q + eta`` is defined; ``phi_q`` is then set to 0.
        """
        theta = math.atan2(abs(u_b), abs(u_a))
        if abs(u_a) > ANGLE_TOLERANCE:
            phase_a = math.atan2(u_a.imag, u_a.real) % TWO_PI
        else:
            phase_a = 0.0
            if abs(u_b) > ANGLE_TOLERANCE and math.atan2(u_b.imag, u_b.real) % TWO_PI >= math.pi:
                u_b = -u_b
        if phase_a >= math.pi - WRAP_TOLERANCE:
            phase_a -= math.pi
            u_b = -u_b
        phase_a = max(phase_a, 0.0)
        if abs(u_b) > ANGLE_TOLERANCE:
            eta = (math.atan2(u_b.imag, u_b.real) - phase_a) % TWO_PI
            if eta >= TWO_PI - WRAP_TOLERANCE:
                eta = 0.0
        else:
            eta = 0.0
        return cls(theta=theta, phi_q=phase_a, eta=eta)

    def canonical(self) -> "QuadratureAngles":
        """Equivalent angles in the canonical ranges."""
        return QuadratureAngles.from_coefficients(*self.coefficients())

    def to_dict(self) -> dict[str, float]:
        """Serializable form."""
        return {"theta": self.theta, "phi_q": self.phi_q, "eta": self.eta}


@dataclass(frozen=True)
class QfiPoint:
    """QFI of the battery occupation at one time."""

    t: float
    qfi: float
    conventional_qfi: float
    truncation_flag: bool = False


def qfi_pure(op: OperatorMatrix, state: QState) -> float:
    """QFI of a pure state for generator ``op`` in the variance convention.

    Raises:
        OperatorError: If ``op`` is not Hermitian
    """
    if not op.hermitian:
        raise OperatorError(f"QFI needs a Hermitian generator, got '{op.label}'")
    return variance(op, state)


def conventional_qfi(op: OperatorMatrix, state: QState) -> float:
    """``4 * qfi_pure``, the normalization common in metrology texts."""
    return 4.0 * qfi_pure(op, state)


def qfi_timeseries(
    params: BatteryModelParams, initial: QState, tgrid: Sequence[float]
) -> list[QfiPoint]:
    """QFI of ``n_b`` along the charging dynamics.

    Args:
        params: Battery model
        initial: State at t = 0
        tgrid: Sample times

    Returns:
        One :class:`QfiPoint` per grid time
    """
    basis = initial.basis
    hamiltonian = build_hamiltonian(params, 1, basis)
    n_b = number_operator(basis, "b")
    points = []
    for t, state in zip(tgrid, evolve_many(initial, hamiltonian, tgrid), strict=True):
        value = qfi_pure(n_b, state)
        points.append(QfiPoint(float(t), value, 4.0 * value, state.truncation_flag))
    return points


def short_time_var_nb(N_A: int, N_B: int, n: int, g_n: float, t: float) -> float:
    """Leading-order ``var(n_b)`` for a Fock initial state ``|N_A, N_B>``.

    ``n^2 g_n^2 t^2 [(N_A + 1) N_B! / (N_B - n)! + N_A (N_B + n)! / N_B!]``;
    the first term is absent when ``N_B < n``.
    """
    downward = (N_A + 1) * math.prod(range(N_B - n + 1, N_B + 1)) if N_B >= n else 0
    upward = N_A * math.prod(range(N_B + 1, N_B + n + 1))
    return float(n**2 * g_n**2 * t**2 * (downward + upward))


def short_time_var_quadratures(
    alpha: complex, beta: complex, n: int, g_n: float, t: float
) -> tuple[float, float]:
    """First-order ``(var x_b, var p_b)`` for a coherent initial state.

    Valid for ``|g_n t| << 1``. The slope is ``-/+ n(n-1)/2 g_n Im(alpha* beta^(n-2))``;
    both variances stay at 1/4 when that imaginary part vanishes.
    """
    slope = quadrature_slope(alpha, beta, n, g_n)
    return VACUUM_VARIANCE + slope * t, VACUUM_VARIANCE - slope * t


def quadrature_slope(alpha: complex, beta: complex, n: int, g_n: float) -> float:
    """Initial rate of change of ``var x_b`` for a coherent state."""
    if n < 2:
        return 0.0
    source = complex(alpha).conjugate() * complex(beta) ** (n - 2)
    return -0.5 * n * (n - 1) * g_n * source.imag


def _require_space(basis: Basis) -> TwoModeSpace:
    if not isinstance(basis, TwoModeSpace):
        raise BasisError("Quadratures change the charge and need a TwoModeSpace")
    return basis


def quadrature(
    space: TwoModeSpace, mode: Literal["a", "b"], kind: QuadratureKind
) -> OperatorMatrix:
    """Single-mode quadrature ``x = (m + m^dag)/2`` or ``p = (m - m^dag)/(2i)``."""
    ops = ladder_ops(_require_space(space))
    lower, creation = (ops.a, ops.a_dag) if mode == "a" else (ops.b, ops.b_dag)
    if kind == "x":
        matrix = sp.csr_array((lower.matrix + creation.matrix) * 0.5)
    else:
        matrix = sp.csr_array((lower.matrix - creation.matrix) * (-0.5j))
    return OperatorMatrix(space, matrix, hermitian=True, label=f"{kind}_{mode}")


@lru_cache(maxsize=8)
def quadrature_set(space: TwoModeSpace) -> tuple[OperatorMatrix, ...]:
    """``(x_a, x_b, p_a, p_b)`` of a space, built once per space."""
    return tuple(quadrature(space, mode, kind) for mode, kind in _QUADRATURE_PARTS)


def quadrature_op(angles: QuadratureAngles, space: TwoModeSpace) -> OperatorMatrix:
    """Generalized two-mode quadrature ``X_{theta, phi_q, eta}``."""
    ops = ladder_ops(_require_space(space))
    u_a, u_b = angles.coefficients()
    forward = ops.a.matrix * u_a + ops.b.matrix * u_b
    matrix = sp.csr_array((forward + forward.conj().T) * 0.5)
    return OperatorMatrix(space, matrix, hermitian=True, label="X")


def quadrature_variance(angles: QuadratureAngles, state: QState) -> float:
    """``<X^2> - <X>^2`` with ``X^2`` assembled as an explicit matrix product."""
    x = quadrature_op(angles, _require_space(state.basis))
    mean = expectation(x, state).real
    return max(expectation(x @ x, state).real - mean**2, 0.0)


@dataclass(frozen=True)
class QuadratureCovariance:
    """Covariance of ``(x_a, x_b, p_a, p_b)`` in one state.

    Any generalized quadrature is ``r . R`` for a unit ``r``, so its variance is
    ``r^T C r`` and the minimum over all angles is the smallest eigenvalue of ``C``.
    """

    matrix: NDArray[np.float64]
    means: NDArray[np.float64]

    def variance(self, angles: QuadratureAngles) -> float:
        """Variance of the quadrature with the given angles."""
        r = angles.direction()
        return float(r @ self.matrix @ r)

    def variances(self, directions: NDArray[np.float64]) -> NDArray[np.float64]:
        """Variances for a stack of direction vectors of shape ``(k, 4)``."""
        return np.einsum("ki,ij,kj->k", directions, self.matrix, directions)

    def min_eigenvalue(self) -> float:
        """Exact minimum variance over all quadratures."""
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def single_mode_variances(self) -> dict[str, float]:
        """Variances of ``x_a, x_b, p_a, p_b``."""
        return {
            name: float(self.matrix[i, i]) for i, name in enumerate(QUADRATURE_ORDER)
        }


def quadrature_covariance(state: QState) -> QuadratureCovariance:
    """Symmetrized covariance of the four single-mode quadratures.

    ``C_ij = Re <R_i R_j> - <R_i><R_j>`` with products taken in the truncated space.

    Raises:
        BasisError: If the state lives in a charge sector
    """
    space = _require_space(state.basis)
    psi = np.asarray(state.amplitudes)
    images = np.stack([op.apply(psi) for op in quadrature_set(space)])
    means = np.real(images.conj() @ psi)
    second = np.real(images.conj() @ images.T)
    matrix = 0.5 * (second + second.T) - np.outer(means, means)
    return QuadratureCovariance(matrix=matrix, means=means)
