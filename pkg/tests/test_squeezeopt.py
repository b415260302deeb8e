"""Tests for the squeezing optimizer."""

import math

import numpy as np
import pytest

from qbsense.exceptions import DomainError
from qbsense.fockspace import TwoModeSpace
from qbsense.metrics import QuadratureAngles, quadrature_covariance
from qbsense.model import BatteryModelParams, build_hamiltonian
from qbsense.propagate import coherent_state, evolve, fock_state
from qbsense.squeezeopt import (
    SQUEEZE_PRESETS,
    SqueezeOptions,
    SqueezePoint,
    SqueezeTrajectory,
    default_tgrid,
    min_variance,
    squeeze_trajectory,
)

SMALL_PARAMS = BatteryModelParams(n=2, omega0=1.0, g_n=0.3)
SMALL_GRID = np.linspace(0.0, 0.5, 6)


def test_vacuum_is_not_squeezed(small_space: TwoModeSpace) -> None:
    """Test that the vacuum sits at the 1/4 bound for every quadrature."""
    point = min_variance(fock_state(0, 0, small_space))

    assert point.var_min == pytest.approx(0.25, abs=1e-12)
    assert 0.0 <= point.angles.phi_q < math.pi


def test_optimizer_reaches_covariance_minimum() -> None:
    """Test the refined variance against the smallest covariance eigenvalue."""
    initial = coherent_state(-1j, 1.0, n=2)
    state = evolve(initial, build_hamiltonian(SMALL_PARAMS, 1, initial.basis), 0.4)

    point = min_variance(state, 0.4)

    assert point.t == 0.4
    assert point.var_min == pytest.approx(quadrature_covariance(state).min_eigenvalue(), abs=1e-8)
    assert point.var_min < 0.25


def test_warm_start_matches_grid_start() -> None:
    """Test that a warm start converges to the grid-start optimum."""
    initial = coherent_state(-1j, 1.0, n=2)
    state = evolve(initial, build_hamiltonian(SMALL_PARAMS, 1, initial.basis), 0.3)

    cold = min_variance(state)
    warm = min_variance(state, start=QuadratureAngles(theta=1.0, phi_q=0.2, eta=0.1))

    assert warm.var_min == pytest.approx(cold.var_min, abs=1e-8)


def test_small_trajectory_squeezes() -> None:
    """Test that a quadratic coupling squeezes a coherent state at short times."""
    trajectory = squeeze_trajectory(SMALL_PARAMS, -1j, 1.0, SMALL_GRID)

    assert len(trajectory.points) == 6
    assert trajectory.variances[0] == pytest.approx(0.25, abs=1e-9)
    assert trajectory.variances[1] < 0.25
    assert trajectory.minimum().var_min == trajectory.variances.min()
    assert not trajectory.leakage_flagged


def test_zero_coupling_stays_coherent() -> None:
    """Test that without coupling every point stays at 1/4."""
    params = BatteryModelParams(n=2, omega0=1.0, g_n=0.0)

    trajectory = squeeze_trajectory(params, -1j, 1.0, SMALL_GRID)

    np.testing.assert_allclose(trajectory.variances, 0.25, atol=1e-9)


def test_frames_agree_on_variance() -> None:
    """Test that the free rotation does not change the minimum variance."""
    lab = squeeze_trajectory(SMALL_PARAMS, -1j, 1.0, SMALL_GRID)
    rotating = squeeze_trajectory(
        SMALL_PARAMS, -1j, 1.0, SMALL_GRID, SqueezeOptions(frame="rotating")
    )

    assert rotating.frame == "rotating"
    np.testing.assert_allclose(lab.variances, rotating.variances, atol=1e-7)


def test_concurrent_matches_sequential() -> None:
    """Test the thread-pool path against warm-started optimization."""
    sequential = squeeze_trajectory(SMALL_PARAMS, -1j, 1.0, SMALL_GRID)
    concurrent = squeeze_trajectory(
        SMALL_PARAMS, -1j, 1.0, SMALL_GRID, SqueezeOptions(concurrent=True, workers=2)
    )

    np.testing.assert_allclose(sequential.variances, concurrent.variances, atol=1e-7)


def test_trajectory_rejects_unsorted_grid() -> None:
    """Test that time grids must be strictly increasing."""
    with pytest.raises(DomainError, match="strictly increasing"):
        squeeze_trajectory(SMALL_PARAMS, -1j, 1.0, [0.0, 0.2, 0.2])


def test_trajectory_dataclass_rejects_unsorted_points() -> None:
    """Test the invariant on a hand-built trajectory."""
    angles = QuadratureAngles(0.0, 0.0, 0.0)
    points = (
        SqueezePoint(0.5, 0.25, angles, "converged"),
        SqueezePoint(0.1, 0.25, angles, "converged"),
    )

    with pytest.raises(DomainError):
        SqueezeTrajectory(SMALL_PARAMS, 0j, 0j, "lab", TwoModeSpace(1, 1), points)


def test_point_record_fields() -> None:
    """Test the flat output record."""
    point = SqueezePoint(0.1, 0.2, QuadratureAngles(0.3, 0.4, 0.5), "grid_only")

    assert point.to_dict() == {
        "t": 0.1,
        "var_min": 0.2,
        "theta": 0.3,
        "phi_q": 0.4,
        "eta": 0.5,
        "optimizer_status": "grid_only",
        "truncation_flag": False,
        "boundary_population": 0.0,
    }


@pytest.mark.parametrize(
    ("kwargs", "message"),
    [
        ({"grid_size": 1}, "grid_size"),
        ({"rescan_every": 0}, "rescan_every"),
        ({"frame": "interaction"}, "frame"),
    ],
)
def test_options_validation(kwargs: dict, message: str) -> None:
    """Test optimizer setting validation."""
    with pytest.raises(DomainError, match=message):
        SqueezeOptions(**kwargs)


def test_default_tgrid() -> None:
    """Test the default window ``[0, 0.5 / g_n]``."""
    grid = default_tgrid(0.25, 5)

    np.testing.assert_allclose(grid, [0.0, 0.5, 1.0, 1.5, 2.0])
    with pytest.raises(DomainError, match="explicit grid"):
        default_tgrid(0.0)


def test_presets() -> None:
    """Test the reference parameter sets."""
    fig2 = SQUEEZE_PRESETS["fig2"]

    assert fig2.params().g_n == pytest.approx(1 / math.sqrt(6))
    assert (fig2.alpha, fig2.beta) == (-4j, 2)
    assert SQUEEZE_PRESETS["appd-n3"].g_n == pytest.approx(1 / math.sqrt(2))
    assert SQUEEZE_PRESETS["appd-n6"].g_n == pytest.approx(1 / math.sqrt(120))
    assert len(fig2.default_tgrid()) == 400


@pytest.mark.slow
@pytest.mark.parametrize("name", ["fig2", "appd-n3", "appd-n6"])
def test_preset_squeezing_has_finite_time_minimum(name: str) -> None:
    """Test immediate squeezing and a minimum inside the default window."""
    preset = SQUEEZE_PRESETS[name]
    rate = 0.5 * preset.n * (preset.n - 1) * preset.g_n * abs(preset.alpha)
    rate *= abs(preset.beta) ** (preset.n - 2)
    early = np.linspace(0.0, 2.0 / rate, 81)
    tgrid = np.union1d(np.concatenate([[0.01 / rate], early]), preset.default_tgrid(80))

    trajectory = squeeze_trajectory(preset.params(), preset.alpha, preset.beta, tgrid)
    variances = trajectory.variances

    assert variances[1] < 0.25
    assert variances.min() < 0.25
    assert 0 < int(np.argmin(variances)) < len(variances) - 1
    assert not trajectory.leakage_flagged


@pytest.mark.slow
def test_fig2_optimal_quadrature_angles() -> None:
    """Test the angles of the best quadrature on the default 400-point window."""
    preset = SQUEEZE_PRESETS["fig2"]

    trajectory = squeeze_trajectory(
        preset.params(), preset.alpha, preset.beta, preset.default_tgrid()
    )
    best = trajectory.minimum()

    assert 0.0 < best.t <= 0.05
    assert best.var_min < 0.25
    window = (trajectory.times > 0.0) & (trajectory.times <= best.t)
    assert np.all(trajectory.variances[window] < 0.25)
    assert abs(best.angles.phi_q - math.pi / 2) < 0.2
    assert abs(best.angles.eta - 3 * math.pi / 2) < 0.3
    assert 1.0 < best.angles.theta < math.pi / 2
    assert not trajectory.leakage_flagged
