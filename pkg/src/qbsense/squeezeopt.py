"""Search for the least noisy generalized quadrature along the charging dynamics.

Each time point is scanned on a coarse ``(theta, phi_q, eta)`` grid and then refined
with Nelder-Mead. Along a trajectory the search warm-starts from the previous optimum
and falls back to a full scan every ``rescan_every`` points.
"""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import pairwise
from typing import Any, Literal

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize

from .exceptions import DomainError
from .fockspace import TwoModeSpace
from .metrics import QuadratureAngles, QuadratureCovariance, quadrature_covariance
from .model import BatteryModelParams, build_hamiltonian, coupling_hamiltonian
from .propagate import QState, coherent_cutoffs, coherent_state, evolve_iter

logger = logging.getLogger(__name__)

GRID_SIZE = 24
RESCAN_EVERY = 10
TIE_TOLERANCE = 1e-12
IMPROVEMENT_THRESHOLD = 1e-12
DEFAULT_POINTS = 400
WINDOW_IN_COUPLING_TIMES = 0.5

OptimizerStatus = Literal["converged", "grid_only"]
Frame = Literal["lab", "rotating"]


@dataclass(frozen=True)
class SqueezePoint:
    """Optimal quadrature at one time.

    Attributes:
        t: Evolution time
        var_min: Smallest quadrature variance found
        angles: Canonical angles of that quadrature
        optimizer_status: ``converged`` after a successful refinement, else ``grid_only``
        truncation_flag: Leakage flag of the evolved state
        boundary_population: Population on the cutoff edge
    """

    t: float
    var_min: float
    angles: QuadratureAngles
    optimizer_status: OptimizerStatus
    truncation_flag: bool = False
    boundary_population: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        """Flat record for output files."""
        return {
            "t": self.t,
            "var_min": self.var_min,
            **self.angles.to_dict(),
            "optimizer_status": self.optimizer_status,
            "truncation_flag": self.truncation_flag,
            "boundary_population": self.boundary_population,
        }


@dataclass(frozen=True)
class SqueezeTrajectory:
    """Optimal quadratures along a time grid."""

    params: BatteryModelParams
    alpha: complex
    beta: complex
    frame: Frame
    space: TwoModeSpace
    points: tuple[SqueezePoint, ...]

    def __post_init__(self) -> None:
        """Require strictly increasing times."""
        times = [p.t for p in self.points]
        if any(later <= earlier for earlier, later in pairwise(times)):
            raise DomainError("Squeezing trajectory times must be strictly increasing")

    @property
    def times(self) -> NDArray[np.float64]:
        """Sample times."""
        return np.array([p.t for p in self.points])

    @property
    def variances(self) -> NDArray[np.float64]:
        """``var_min`` per time."""
        return np.array([p.var_min for p in self.points])

    @property
    def leakage_flagged(self) -> bool:
        """Whether any point exceeded the leakage threshold."""
        return any(p.truncation_flag for p in self.points)

    def minimum(self) -> SqueezePoint:
        """Point with the smallest variance (first on ties)."""
        return self.points[int(np.argmin(self.variances))]


@dataclass(frozen=True)
class SqueezePreset:
    """Named parameter set of a reference squeezing run."""

    name: str
    n: int
    g_n: float
    alpha: complex
    beta: complex
    note: str = ""

    def params(self, omega0: float = 1.0) -> BatteryModelParams:
        """Battery model of the preset."""
        return BatteryModelParams(n=self.n, omega0=omega0, g_n=self.g_n)

    def default_tgrid(self, points: int = DEFAULT_POINTS) -> NDArray[np.float64]:
        """Uniform grid over ``[0, 0.5 / g_n]``."""
        return default_tgrid(self.g_n, points)


SQUEEZE_PRESETS: dict[str, SqueezePreset] = {
    "fig2": SqueezePreset("fig2", n=4, g_n=1 / math.sqrt(6), alpha=-4j, beta=2),
    "appd-n3": SqueezePreset("appd-n3", n=3, g_n=1 / math.sqrt(2), alpha=-4j, beta=2),
    "appd-n6": SqueezePreset(
        "appd-n6",
        n=6,
        g_n=1 / math.sqrt(120),
        alpha=2,
        beta=-4j,
        note="amplitude magnitudes exchanged; phase assignment alpha=2, beta=-4i is a default",
    ),
}


@dataclass(frozen=True)
class SqueezeOptions:
    """Optimizer settings.

    Attributes:
        grid_size: Points per angle in the coarse scan
        rescan_every: Full re-scan period along a trajectory
        frame: ``lab`` evolves under the full Hamiltonian, ``rotating`` under the
            coupling only (same variances, angles differ by the free rotation)
        concurrent: Optimize time points on a thread pool without warm starts
        workers: Thread pool size (``None`` lets the executor decide)
    """

    grid_size: int = GRID_SIZE
    rescan_every: int = RESCAN_EVERY
    frame: Frame = "lab"
    concurrent: bool = False
    workers: int | None = field(default=None)

    def __post_init__(self) -> None:
        """Validate the settings."""
        if self.grid_size < 2:
            raise DomainError(f"grid_size must be >= 2, got {self.grid_size}")
        if self.rescan_every < 1:
            raise DomainError(f"rescan_every must be >= 1, got {self.rescan_every}")
        if self.frame not in ("lab", "rotating"):
            raise DomainError(f"frame must be 'lab' or 'rotating', got {self.frame!r}")


def default_tgrid(g_n: float, points: int = DEFAULT_POINTS) -> NDArray[np.float64]:
    """Uniform grid over ``[0, 0.5 / g_n]``."""
    if g_n == 0:
        raise DomainError("Default squeezing window needs g_n != 0; pass an explicit grid")
    return np.linspace(0.0, WINDOW_IN_COUPLING_TIMES / abs(g_n), points)


@lru_cache(maxsize=4)
def _angle_grid(size: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Grid angles (``ij`` order, theta slowest) and their direction vectors."""
    theta = np.linspace(0.0, math.pi / 2, size)
    phase = np.arange(size) * (2 * math.pi / size)
    t, p, e = np.meshgrid(theta, phase, phase, indexing="ij")
    t, p, e = t.ravel(), p.ravel(), e.ravel()
    directions = np.stack(
        [
            np.cos(t) * np.cos(p),
            np.sin(t) * np.cos(p + e),
            -np.cos(t) * np.sin(p),
            -np.sin(t) * np.sin(p + e),
        ],
        axis=1,
    )
    return np.stack([t, p, e], axis=1), directions


def _grid_search(cov: QuadratureCovariance, size: int) -> tuple[NDArray[np.float64], float]:
    angles, directions = _angle_grid(size)
    values = cov.variances(directions)
    best = float(values.min())
    index = int(np.flatnonzero(values <= best + TIE_TOLERANCE)[0])
    return angles[index], float(values[index])


def _refine(
    cov: QuadratureCovariance, start: NDArray[np.float64], start_value: float
) -> tuple[NDArray[np.float64], float, OptimizerStatus]:
    result = minimize(
        lambda x: cov.variance(QuadratureAngles(*x)),
        start,
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000},
    )
    status: OptimizerStatus = "converged" if result.success else "grid_only"
    if result.success and result.fun < start_value - IMPROVEMENT_THRESHOLD:
        return np.asarray(result.x), float(result.fun), status
    return start, start_value, status


def min_variance(
    state: QState,
    t: float = 0.0,
    start: QuadratureAngles | None = None,
    grid_size: int = GRID_SIZE,
) -> SqueezePoint:
    """Minimize the quadrature variance of one state over all angles.

    Args:
        state: Pure state in a TwoModeSpace
        t: Time recorded on the result
        start: Warm-start angles; a full grid scan is done when omitted
        grid_size: Points per angle of the grid scan

    Returns:
        SqueezePoint with canonical angles
    """
    cov = quadrature_covariance(state)
    if start is None:
        x0, value = _grid_search(cov, grid_size)
    else:
        x0 = np.array([start.theta, start.phi_q, start.eta])
        value = cov.variance(start)
    x, _, status = _refine(cov, x0, value)
    angles = QuadratureAngles(*(float(v) for v in x)).canonical()
    return SqueezePoint(
        t=float(t),
        var_min=cov.variance(angles),
        angles=angles,
        optimizer_status=status,
        truncation_flag=state.truncation_flag,
        boundary_population=state.boundary_population,
    )


def squeeze_trajectory(
    params: BatteryModelParams,
    alpha: complex,
    beta: complex,
    tgrid: Sequence[float],
    options: SqueezeOptions | None = None,
    space: TwoModeSpace | None = None,
) -> SqueezeTrajectory:
    """Optimal squeezing along the evolution of a coherent state.

    Args:
        params: Battery model
        alpha: Initial charger amplitude
        beta: Initial battery amplitude
        tgrid: Strictly increasing sample times
        options: Optimizer settings
        space: Truncated space; charge-complete tail-rule cutoffs when omitted

    Returns:
        SqueezeTrajectory with per-point leakage flags
    """
    options = options or SqueezeOptions()
    times = [float(t) for t in tgrid]
    if any(later <= earlier for earlier, later in pairwise(times)):
        raise DomainError("Squeezing time grid must be strictly increasing")
    basis = space or TwoModeSpace(*coherent_cutoffs(alpha, beta, params.n))
    initial = coherent_state(alpha, beta, space=basis)
    if options.frame == "lab":
        hamiltonian = build_hamiltonian(params, 1, basis)
    else:
        hamiltonian = coupling_hamiltonian(params, basis)
    logger.debug(
        "Squeezing run n=%d, cutoffs=(%d, %d), %d times, frame=%s",
        params.n,
        basis.cutoff_a,
        basis.cutoff_b,
        len(times),
        options.frame,
    )

    states = evolve_iter(initial, hamiltonian, times)
    if options.concurrent:
        with ThreadPoolExecutor(max_workers=options.workers) as pool:
            points = list(
                pool.map(
                    lambda item: min_variance(item[1], item[0], grid_size=options.grid_size),
                    zip(times, states, strict=True),
                )
            )
    else:
        points = []
        previous: QuadratureAngles | None = None
        for index, (t, state) in enumerate(zip(times, states, strict=True)):
            start = None if index % options.rescan_every == 0 else previous
            point = min_variance(state, t, start=start, grid_size=options.grid_size)
            points.append(point)
            previous = point.angles

    flagged = sum(p.truncation_flag for p in points)
    if flagged:
        logger.warning(
            "Truncation contamination at %d of %d squeezing points", flagged, len(points)
        )
    return SqueezeTrajectory(
        params=params,
        alpha=complex(alpha),
        beta=complex(beta),
        frame=options.frame,
        space=basis,
        points=tuple(points),
    )
