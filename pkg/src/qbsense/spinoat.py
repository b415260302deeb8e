"""One-axis-twisting spin battery.

``N`` spin-1/2 particles start fully polarized against ``H_B = -omega S_z`` and are
charged by ``chi J_x^2``. Each spin keeps ``<sigma_z> = cos^(N-1)(chi t)``, so the
injected energy is ``omega N (1 - cos^(N-1)(chi T))``. At the squeezing time
``chi T = N^(-2/3)`` the charging power grows as ``N^(4/3)``.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray
from scipy.stats import linregress

from .exceptions import DomainError

logger = logging.getLogger(__name__)

ORACLE_MAX_SPINS = 14
MIN_FIT_SPINS = 100
MIN_FIT_DECADES = 2.0


@dataclass(frozen=True)
class SpinBatteryParams:
    """Collective spin battery.

    Attributes:
        N: Number of spins
        chi: Twisting strength
        omega: Level splitting of each spin
        kac_normalized: Scale the twisting as ``chi / N``
    """

    N: int
    chi: float
    omega: float = 1.0
    kac_normalized: bool = False

    def __post_init__(self) -> None:
        """Validate the parameter record."""
        if self.N < 1:
            raise DomainError(f"Need at least one spin, got N={self.N}")
        if not self.chi > 0:
            raise DomainError(f"chi must be positive, got {self.chi}")
        if not self.omega > 0:
            raise DomainError(f"omega must be positive, got {self.omega}")

    @property
    def effective_chi(self) -> float:
        """Twisting strength after the optional Kac scaling."""
        return self.chi / self.N if self.kac_normalized else self.chi


@dataclass(frozen=True)
class PowerLawFit:
    """Least-squares fit of ``log(y) = exponent * log(N) + intercept``."""

    exponent: float
    intercept: float
    residual: float
    stderr: float


@dataclass(frozen=True)
class ScalingRow:
    """Charging figures of one battery size."""

    N: int
    delta_e: float
    T: float
    power: float


def sigma_z_analytic(N: int, chi: float, t: ArrayLike) -> NDArray[np.float64]:
    """Per-spin polarization ``cos^(N-1)(chi t)``."""
    if N < 1:
        raise DomainError(f"Need at least one spin, got N={N}")
    return np.cos(chi * np.asarray(t, dtype=np.float64)) ** (N - 1)


def _depolarization(N: int, phase: float) -> float:
    """``1 - cos^(N-1)(phase)`` without cancellation for small phases."""
    c = math.cos(phase)
    if c <= 0.5:  # noqa: PLR2004
        return 1.0 - c ** (N - 1)
    return -math.expm1((N - 1) * math.log1p(-2.0 * math.sin(phase / 2) ** 2))


def injected_energy(params: SpinBatteryParams, T: float) -> float:
    """Battery energy gained after charging for time ``T``."""
    if T < 0:
        raise DomainError(f"Charging time must be >= 0, got {T}")
    return params.omega * params.N * _depolarization(params.N, params.effective_chi * T)


def squeezing_time(N: int, chi: float) -> float:
    """Charging time ``N^(-2/3) / chi``."""
    return N ** (-2.0 / 3.0) / chi


def fit_power_law(N_list: Sequence[int], values: ArrayLike) -> PowerLawFit:
    """Fit ``values ~ N^exponent`` on log-log axes.

    Raises:
        DomainError: If the sizes span less than two decades
    """
    sizes = np.asarray(N_list, dtype=np.float64)
    if sizes.size < 2 or np.log10(sizes.max() / sizes.min()) < MIN_FIT_DECADES:
        raise DomainError(
            f"Power-law fit needs N spanning >= {MIN_FIT_DECADES:g} decades, "
            f"got {sizes.min():g}..{sizes.max():g}"
        )
    x = np.log(sizes)
    y = np.log(np.asarray(values, dtype=np.float64))
    fit = linregress(x, y)
    residual = float(np.sqrt(np.mean((y - (fit.slope * x + fit.intercept)) ** 2)))
    return PowerLawFit(
        exponent=float(fit.slope),
        intercept=float(fit.intercept),
        residual=residual,
        stderr=float(fit.stderr),
    )


def scaling_rows(
    N_list: Sequence[int], omega: float, chi: float, kac: bool = False
) -> list[ScalingRow]:
    """Energy and power at the squeezing time for every size."""
    rows = []
    for N in N_list:
        params = SpinBatteryParams(N=int(N), chi=chi, omega=omega, kac_normalized=kac)
        T = squeezing_time(params.N, chi)
        delta_e = injected_energy(params, T)
        rows.append(ScalingRow(N=params.N, delta_e=delta_e, T=T, power=delta_e / T))
    return rows


def charging_power_exponent(
    N_list: Sequence[int], omega: float, chi: float, kac: bool = False
) -> PowerLawFit:
    """Fitted exponent of the charging power ``Delta E / T`` against ``N``.

    Raises:
        DomainError: If any ``N < 100`` or the sizes span less than two decades
    """
    if not N_list or min(N_list) < MIN_FIT_SPINS:
        raise DomainError(f"Scaling fit needs every N >= {MIN_FIT_SPINS}")
    rows = scaling_rows(N_list, omega, chi, kac)
    fit = fit_power_law([r.N for r in rows], [r.power for r in rows])
    logger.debug("Charging power exponent %.4f (residual %.2e)", fit.exponent, fit.residual)
    return fit


def parallel_control(N_list: Sequence[int], omega: float, chi: float) -> list[ScalingRow]:
    """Independent spins flipped by a local field in the fixed time ``pi / (2 chi)``."""
    T = math.pi / (2.0 * chi)
    return [
        ScalingRow(N=int(N), delta_e=2.0 * omega * N, T=T, power=2.0 * omega * N / T)
        for N in N_list
    ]


def dicke_operators(N: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """``(J_x, J_z)`` on the symmetric subspace, basis ``m = N/2, ..., -N/2``."""
    j = N / 2.0
    m = j - np.arange(N + 1)
    j_z = np.diag(m)
    # <m+1|J_+|m> sits just above the diagonal in descending-m order
    raising = np.diag(np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1)), k=1)
    j_x = 0.5 * (raising + raising.T)
    return j_x, j_z


def exact_small_N_oracle(params: SpinBatteryParams, t: ArrayLike) -> NDArray[np.float64]:
    """Per-spin ``<sigma_z>`` from brute-force evolution in the Dicke subspace.

    Evolves the fully polarized state under ``chi J_x^2`` and returns ``2 <J_z> / N``.

    Raises:
        DomainError: If ``N`` exceeds 14
    """
    if params.N > ORACLE_MAX_SPINS:
        raise DomainError(f"Exact oracle is limited to N <= {ORACLE_MAX_SPINS}, got {params.N}")
    j_x, j_z = dicke_operators(params.N)
    energies, vectors = scipy.linalg.eigh(params.effective_chi * (j_x @ j_x))
    initial = np.zeros(params.N + 1, dtype=np.complex128)
    initial[0] = 1.0
    coefficients = vectors.T @ initial
    times = np.atleast_1d(np.asarray(t, dtype=np.float64))
    states = vectors @ (np.exp(-1j * np.outer(energies, times)) * coefficients[:, None])
    j_z_mean = np.real(np.einsum("it,i,it->t", states.conj(), np.diag(j_z), states))
    return 2.0 * j_z_mean / params.N
