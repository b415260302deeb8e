"""Charge, sense, recharge: the battery as a frequency-shift sensor.

The battery is charged for ``t_1`` (the QFI peak), picks up a phase ``phi n t_s`` on its
charged branch while a frequency shift ``-phi b^dag b`` acts, and is charged again for
``t_1``. Finding the charger still full has probability ``sin^2(phi n t_s / 2)``.
"""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .exceptions import DomainError, NumericalContractError
from .fockspace import OperatorMatrix, enumerate_sector, number_operator
from .model import (
    BatteryModelParams,
    ScheduleSegment,
    build_hamiltonian,
    rabi_frequency,
    segment_hamiltonian,
)
from .propagate import QState, evolve_schedule, expectation, fock_state

logger = logging.getLogger(__name__)

ANALYTIC_TOLERANCE = 1e-9
PROBABILITY_SLACK = 1e-12


@dataclass(frozen=True)
class ProtocolParams:
    """One protocol run.

    Attributes:
        model: Battery model; the run uses the ``Q = n`` sector from ``|1, 0>``
        phi: Frequency shift to be sensed
        t_s: Sensing duration
        shots: Number of simulated measurements
        seed: Seed of the measurement sampler
    """

    model: BatteryModelParams
    phi: float
    t_s: float
    shots: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate the run settings."""
        if self.t_s < 0:
            raise DomainError(f"Sensing time must be >= 0, got {self.t_s}")
        if self.shots < 0:
            raise DomainError(f"shots must be >= 0, got {self.shots}")

    @property
    def non_identifiable(self) -> bool:
        """Whether ``phi`` lies beyond the estimator's principal branch."""
        return abs(self.phi) * self.model.n * self.t_s / 2 > math.pi / 2


@dataclass(frozen=True)
class PhiEstimate:
    """Point estimate of ``phi`` with its delta-method standard error."""

    phi_hat: float
    stderr: float


@dataclass(frozen=True)
class ProtocolResult:
    """Outcome of one protocol run.

    Attributes:
        params: Run settings
        t_1: Duration of each charging stage
        p0: Probability of finding the battery charged
        p1: Probability of finding the charger full again
        counts: Sampled ``(k0, k1)``
        estimate: Estimate of ``phi`` (``None`` without shots or sensing time)
        residual_energy: Mean battery energy after the measurement
        energy_if_charged: Battery energy on outcome 0
        energy_if_uncharged: Battery energy on outcome 1
        state_trace: States after each stage, keyed ``psi_i``, ``psi_1``, ``psi_s``, ``psi_m``
        model: The battery model carrying the executed coupling schedule
    """

    params: ProtocolParams
    t_1: float
    p0: float
    p1: float
    counts: tuple[int, int]
    estimate: PhiEstimate | None
    residual_energy: float
    energy_if_charged: float
    energy_if_uncharged: float
    state_trace: dict[str, QState] = field(repr=False)
    model: BatteryModelParams | None = field(default=None, repr=False)

    def to_dict(self) -> dict[str, Any]:
        """Flat record for output files (states are omitted)."""
        return {
            "phi": self.params.phi,
            "t_s": self.params.t_s,
            "t_1": self.t_1,
            "p0": self.p0,
            "p1": self.p1,
            "k0": self.counts[0],
            "k1": self.counts[1],
            "phi_hat": self.estimate.phi_hat if self.estimate else None,
            "phi_stderr": self.estimate.stderr if self.estimate else None,
            "residual_energy": self.residual_energy,
            "energy_if_charged": self.energy_if_charged,
            "energy_if_uncharged": self.energy_if_uncharged,
            "non_identifiable": self.params.non_identifiable,
            "seed": self.params.seed,
            "shots": self.params.shots,
        }


def protocol_schedule(t_1: float, t_s: float, phi: float) -> tuple[ScheduleSegment, ...]:
    """Charging, optional sensing, charging."""
    segments = [ScheduleSegment(0.0, t_1, "charging_on")]
    if t_s > 0:
        segments.append(ScheduleSegment(t_1, t_1 + t_s, "sensing", phi=phi))
    segments.append(ScheduleSegment(t_1 + t_s, 2 * t_1 + t_s, "charging_on"))
    return tuple(segments)


def run_protocol(p: ProtocolParams) -> ProtocolResult:
    """Simulate one protocol run and sample its measurement record.

    Raises:
        DomainError: If the model cannot charge (``g_n = 0``)
        NumericalContractError: If the simulated probability departs from
            ``sin^2(phi n t_s / 2)`` by more than 1e-9
    """
    model = p.model
    n = model.n
    sector = enumerate_sector(n, n)
    rabi = rabi_frequency(n, n, model.g_n, model.omega0)
    if not math.isfinite(rabi.t_c):
        raise DomainError("Protocol needs a non-zero coupling g_n")
    if p.non_identifiable:
        logger.warning(
            "phi=%g with n=%d, t_s=%g lies outside the principal branch; estimates alias",
            p.phi,
            n,
            p.t_s,
        )

    model = model.with_schedule(protocol_schedule(rabi.t_1, p.t_s, p.phi))
    charging = build_hamiltonian(model, 1, sector)
    initial = fock_state(1, 0, sector)

    def generator(segment: ScheduleSegment) -> OperatorMatrix:
        if segment.label == "charging_on":
            return charging
        return segment_hamiltonian(model, segment, sector)

    trace = evolve_schedule(initial, model.lambda_schedule, generator)
    final = trace[-1]
    states = {
        "psi_i": initial,
        "psi_1": trace[0],
        "psi_s": trace[1] if p.t_s > 0 else trace[0],
        "psi_m": final,
    }

    p1 = final.probability(1, 0)
    p0 = final.probability(0, n)
    analytic = math.sin(p.phi * n * p.t_s / 2) ** 2
    if abs(p1 - analytic) > ANALYTIC_TOLERANCE:
        raise NumericalContractError(
            f"Simulated p1={p1:.12g} disagrees with sin^2(phi n t_s / 2)={analytic:.12g}"
        )
    residual = n * model.omega0 * p0
    battery_energy = model.omega0 * expectation(number_operator(sector, "b"), final).real
    if abs(battery_energy - residual) > ANALYTIC_TOLERANCE:
        raise NumericalContractError(
            f"Mean battery energy {battery_energy:.12g} differs from n w0 p0 = {residual:.12g}"
        )

    counts = sample_measurements(p0, p.shots, p.seed)
    estimate = None
    if p.shots > 0 and p.t_s > 0:
        estimate = estimate_phi(counts[1], p.shots, n, p.t_s)
    logger.debug("Protocol phi=%g: p1=%.6f counts=%s", p.phi, p1, counts)
    return ProtocolResult(
        params=p,
        t_1=rabi.t_1,
        p0=p0,
        p1=p1,
        counts=counts,
        estimate=estimate,
        residual_energy=residual,
        energy_if_charged=n * model.omega0,
        energy_if_uncharged=0.0,
        state_trace=states,
        model=model,
    )


def sample_measurements(p0: float, shots: int, seed: int) -> tuple[int, int]:
    """Binomial record ``(k0, k1)`` of ``shots`` charger measurements.

    Raises:
        DomainError: If ``p0`` is not a probability or ``shots < 0``
    """
    if not -PROBABILITY_SLACK <= p0 <= 1 + PROBABILITY_SLACK:
        raise DomainError(f"p0 must lie in [0, 1], got {p0}")
    if shots < 0:
        raise DomainError(f"shots must be >= 0, got {shots}")
    rng = np.random.default_rng(seed)
    k0 = int(rng.binomial(shots, min(max(p0, 0.0), 1.0)))
    return k0, shots - k0


def estimate_phi(k1: int, shots: int, n: int, t_s: float) -> PhiEstimate:
    """Principal-branch estimate ``(2 / (n t_s)) arcsin(sqrt(k1 / shots))``.

    Raises:
        DomainError: If ``shots < 1``, ``k1`` is out of range or ``n t_s = 0``
    """
    if shots < 1:
        raise DomainError(f"Estimation needs at least one shot, got {shots}")
    if not 0 <= k1 <= shots:
        raise DomainError(f"k1 must lie in [0, {shots}], got {k1}")
    scale = n * t_s
    if scale == 0:
        raise DomainError("phi is not identifiable when n * t_s = 0")
    phi_hat = 2.0 / scale * math.asin(math.sqrt(k1 / shots))
    return PhiEstimate(phi_hat=phi_hat, stderr=1.0 / (abs(scale) * math.sqrt(shots)))


def sweep_phi(
    params: ProtocolParams,
    phis: Sequence[float],
    concurrent: bool = False,
    workers: int | None = None,
) -> list[ProtocolResult]:
    """Independent runs over a grid of shifts; run ``i`` uses seed ``seed + i``."""
    runs = [replace(params, phi=float(phi), seed=params.seed + i) for i, phi in enumerate(phis)]
    if not concurrent:
        return [run_protocol(run) for run in runs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_protocol, runs))
