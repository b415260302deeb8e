"""Battery Hamiltonian of two commensurate bosonic modes.

``H(t) = n w0 a^dag a + w0 b^dag b + lambda(t) g_n (a^dag b^n + h.c.)`` with
``hbar = 1``; times are in units of inverse energy. ``lambda`` is a square pulse,
described by a list of :class:`ScheduleSegment`.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from itertools import pairwise
from typing import Any, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import gammaln

from .exceptions import DomainError
from .fockspace import (
    Basis,
    ChargeSector,
    OperatorMatrix,
    TwoModeSpace,
    conversion_operator,
    diagonal_operator,
    number_operator,
)

logger = logging.getLogger(__name__)

EXACT_BINOMIAL_LIMIT = 20

Provenance = Literal["direct", "qsl", "circuit"]
SegmentLabel = Literal["charging_on", "charging_off", "sensing"]


def binomial(Q: int, n: int) -> float:
    """Binomial coefficient ``C(Q, n)``.

    Exact integer arithmetic up to ``Q = 20``, log-gamma beyond.
    """
    if n < 0 or n > Q:
        return 0.0
    if Q <= EXACT_BINOMIAL_LIMIT:
        return float(math.comb(Q, n))
    return float(np.exp(gammaln(Q + 1) - gammaln(n + 1) - gammaln(Q - n + 1)))


def factorial(n: int) -> float:
    """``n!`` as a float, exact up to ``n = 20``."""
    if n <= EXACT_BINOMIAL_LIMIT:
        return float(math.factorial(n))
    return float(np.exp(gammaln(n + 1)))


@dataclass(frozen=True)
class ScheduleSegment:
    """One piece of the piecewise-constant coupling schedule.

    Attributes:
        t_start: Segment start time
        t_end: Segment end time (strictly after ``t_start``)
        label: Generator active during the segment
        phi: Sensed frequency shift, only for ``sensing`` segments
    """

    t_start: float
    t_end: float
    label: SegmentLabel
    phi: float | None = None

    def __post_init__(self) -> None:
        """Validate ordering and the sensing parameter."""
        if not self.t_start < self.t_end:
            raise DomainError(
                f"Segment needs t_start < t_end, got [{self.t_start}, {self.t_end}]"
            )
        if (self.label == "sensing") != (self.phi is not None):
            raise DomainError("phi must be given exactly for sensing segments")

    @property
    def duration(self) -> float:
        """Length of the segment."""
        return self.t_end - self.t_start


def validate_schedule(segments: tuple[ScheduleSegment, ...]) -> tuple[ScheduleSegment, ...]:
    """Check that segments are contiguous and non-overlapping.

    Raises:
        DomainError: On a gap or overlap between consecutive segments
    """
    for previous, current in pairwise(segments):
        if current.t_start != previous.t_end:
            raise DomainError(
                f"Schedule not contiguous: segment ends at {previous.t_end}, "
                f"next starts at {current.t_start}"
            )
    return segments


def charging_schedule(t_c: float) -> tuple[ScheduleSegment, ...]:
    """Coupling on for ``[0, t_c]``."""
    return (ScheduleSegment(0.0, t_c, "charging_on"),)


@dataclass(frozen=True)
class CircuitParams:
    """Two LC resonators coupled through a Josephson junction.

    Attributes:
        e_j: Josephson energy
        lambda1: Zero-point flux amplitude of the charger resonator
        lambda2: Zero-point flux amplitude of the battery resonator
        n: Order of the resonant conversion term
    """

    e_j: float
    lambda1: float
    lambda2: float
    n: int


@dataclass(frozen=True)
class BatteryModelParams:
    """Parameters of the two-mode battery Hamiltonian.

    Attributes:
        n: Nonlinearity order (>= 1)
        omega0: Battery mode frequency (> 0)
        g_n: Nonlinear coupling
        provenance: How ``g_n`` was obtained
        g: Linear reference coupling (QSL-derived couplings only)
        charge: Charge used in the QSL derivation
        cutoff_a: Optional A-mode truncation for full-space runs
        cutoff_b: Optional B-mode truncation for full-space runs
        lambda_schedule: Coupling schedule
    """

    n: int
    omega0: float
    g_n: float
    provenance: Provenance = "direct"
    g: float | None = None
    charge: int | None = None
    cutoff_a: int | None = None
    cutoff_b: int | None = None
    lambda_schedule: tuple[ScheduleSegment, ...] = field(default=())

    def __post_init__(self) -> None:
        """Validate the parameter record."""
        if self.n < 1:
            raise DomainError(f"Nonlinearity order must be >= 1, got {self.n}")
        if not self.omega0 > 0:
            raise DomainError(f"omega0 must be positive, got {self.omega0}")
        if not math.isfinite(self.g_n):
            raise DomainError(f"g_n must be finite, got {self.g_n}")
        if self.provenance == "qsl" and (self.g is None or self.charge is None):
            raise DomainError("QSL-derived couplings must record g and the charge Q")
        validate_schedule(self.lambda_schedule)

    @classmethod
    def from_qsl(
        cls, g: float, n: int, Q: int, omega0: float = 1.0, **kwargs: Any
    ) -> "BatteryModelParams":
        """Model whose ``g_n`` matches the linear model's speed-limit time."""
        return cls(
            n=n,
            omega0=omega0,
            g_n=coupling_from_qsl(g, n, Q),
            provenance="qsl",
            g=g,
            charge=Q,
            **kwargs,
        )

    @classmethod
    def from_circuit(
        cls, circuit: CircuitParams, omega0: float = 1.0, **kwargs: Any
    ) -> "BatteryModelParams":
        """Model whose ``|g_n|`` follows from the junction parameters."""
        return cls(
            n=circuit.n,
            omega0=omega0,
            g_n=coupling_from_circuit(circuit),
            provenance="circuit",
            **kwargs,
        )

    def with_schedule(self, schedule: tuple[ScheduleSegment, ...]) -> "BatteryModelParams":
        """Copy with a different coupling schedule."""
        return replace(self, lambda_schedule=validate_schedule(schedule))

    def to_dict(self) -> dict[str, Any]:
        """Serializable snapshot, including ``g_n`` provenance."""
        return {
            "n": self.n,
            "omega0": self.omega0,
            "g_n": self.g_n,
            "g_n_provenance": self.provenance,
            "g": self.g,
            "charge": self.charge,
            "cutoff_a": self.cutoff_a,
            "cutoff_b": self.cutoff_b,
            "lambda_schedule": [
                {"t_start": s.t_start, "t_end": s.t_end, "label": s.label, "phi": s.phi}
                for s in self.lambda_schedule
            ],
        }


def coupling_from_qsl(g: float, n: int, Q: int) -> float:
    """Nonlinear coupling giving the same speed-limit time as the linear model.

    ``g_n = g * sqrt((n + (2n + 1)(Q - n)) / (n! C(Q, n)))``.

    Raises:
        DomainError: If ``Q < n``, ``n < 1`` or ``g <= 0``
    """
    if n < 1 or Q < n:
        raise DomainError(f"No charging transition for n={n}, Q={Q}: need Q >= n >= 1")
    if not g > 0:
        raise DomainError(f"Linear reference coupling must be positive, got {g}")
    numerator = n + (2 * n + 1) * (Q - n)
    return g * math.sqrt(numerator / (factorial(n) * binomial(Q, n)))


def coupling_from_circuit(c: CircuitParams) -> float:
    """Leading resonant coupling ``|g_n| = E_J lambda1 lambda2^n / n!``.

    Raises:
        DomainError: If any circuit parameter is non-positive
    """
    if c.e_j <= 0 or c.lambda1 <= 0 or c.lambda2 <= 0 or c.n < 1:
        raise DomainError(f"Circuit parameters must be positive, got {c}")
    for name, value in (("lambda1", c.lambda1), ("lambda2", c.lambda2)):
        if value >= 1:
            logger.warning("%s = %g is outside the weak-flux regime (0, 1)", name, value)
    return c.e_j * c.lambda1 * c.lambda2**c.n / factorial(c.n)


@dataclass(frozen=True)
class RabiConstants:
    """Two-level charging constants of one charge sector.

    Attributes:
        omega_q: Rabi frequency between uncharged and charged states
        energy_q: Sector energy ``w0 * Q``
        t_c: Full-charge time ``pi / (2 omega_q)``
        t_1: QFI-peak time ``t_c / 2``
    """

    omega_q: float
    energy_q: float
    t_c: float
    t_1: float


def rabi_frequency(n: int, Q: int, g_n: float, omega0: float = 1.0) -> RabiConstants:
    """Rabi frequency ``sqrt(n!) sqrt(C(Q, n)) |g_n|`` and derived times.

    Raises:
        DomainError: If ``Q < n`` or ``n < 1``
    """
    if n < 1 or Q < n:
        raise DomainError(f"No charging transition for n={n}, Q={Q}: need Q >= n >= 1")
    omega_q = math.sqrt(factorial(n)) * math.sqrt(binomial(Q, n)) * abs(g_n)
    t_c = math.pi / (2.0 * omega_q) if omega_q > 0 else math.inf
    return RabiConstants(omega_q=omega_q, energy_q=omega0 * Q, t_c=t_c, t_1=t_c / 2.0)


def qsl_rabi_frequency(g: float, n: int, Q: int) -> float:
    """Closed form ``g sqrt(n + (2n + 1)(Q - n))`` of the QSL-matched Rabi frequency."""
    if n < 1 or Q < n:
        raise DomainError(f"No charging transition for n={n}, Q={Q}: need Q >= n >= 1")
    return g * math.sqrt(n + (2 * n + 1) * (Q - n))


def two_level_populations(
    n: int, Q: int, g_n: float, t: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Analytic populations of the uncharged and charged states (``N_B < n``)."""
    omega_q = rabi_frequency(n, Q, g_n).omega_q
    phase = omega_q * np.asarray(t, dtype=np.float64)
    return np.cos(phase) ** 2, np.sin(phase) ** 2


def _check_compatible(p: BatteryModelParams, basis: Basis) -> None:
    if isinstance(basis, ChargeSector) and basis.n != p.n:
        raise DomainError(f"Charge sector built for n={basis.n}, model has n={p.n}")
    if isinstance(basis, TwoModeSpace):
        for name, wanted, actual in (
            ("cutoff_a", p.cutoff_a, basis.cutoff_a),
            ("cutoff_b", p.cutoff_b, basis.cutoff_b),
        ):
            if wanted is not None and wanted != actual:
                raise DomainError(f"Space has {name}={actual}, model requires {wanted}")


def charge_operator(n: int, basis: Basis) -> OperatorMatrix:
    """Conserved charge ``n a^dag a + b^dag b``."""
    n_a, n_b = basis.occupation_arrays
    return diagonal_operator(basis, (n * n_a + n_b).astype(np.float64), label="Q")


def bare_hamiltonian(p: BatteryModelParams, basis: Basis) -> OperatorMatrix:
    """Charger plus battery energy ``H_A + H_B``."""
    _check_compatible(p, basis)
    n_a, n_b = basis.occupation_arrays
    return diagonal_operator(
        basis, p.omega0 * (p.n * n_a + n_b).astype(np.float64), label="H_A+H_B"
    )


def coupling_hamiltonian(p: BatteryModelParams, basis: Basis) -> OperatorMatrix:
    """Charging interaction ``g_n (a^dag b^n + h.c.)``."""
    _check_compatible(p, basis)
    return conversion_operator(basis, p.n).scaled(p.g_n)


def build_hamiltonian(p: BatteryModelParams, lam: int, basis: Basis) -> OperatorMatrix:
    """Full Hamiltonian with the coupling switched off (0) or on (1).

    Raises:
        DomainError: If ``lam`` is not 0 or 1, or the basis does not fit the model
    """
    if lam not in (0, 1):
        raise DomainError(f"lambda must be 0 or 1, got {lam}")
    bare = bare_hamiltonian(p, basis)
    if lam == 0:
        return bare
    return bare + coupling_hamiltonian(p, basis)


def sensing_hamiltonian(phi: float, basis: Basis) -> OperatorMatrix:
    """Frequency-shift generator ``-phi b^dag b``."""
    return number_operator(basis, "b").scaled(-phi)


def segment_hamiltonian(
    p: BatteryModelParams, segment: ScheduleSegment, basis: Basis
) -> OperatorMatrix:
    """Generator active during one schedule segment."""
    match segment.label:
        case "charging_on":
            return build_hamiltonian(p, 1, basis)
        case "charging_off":
            return build_hamiltonian(p, 0, basis)
        case "sensing":
            return build_hamiltonian(p, 0, basis) + sensing_hamiltonian(
                float(segment.phi or 0.0), basis
            )
        case _:
            raise DomainError(f"Unknown schedule segment label: {segment.label}")
