"""Tests for the charge-sense-recharge protocol."""

import logging
import math

import numpy as np
import pytest

from qbsense.exceptions import DomainError
from qbsense.model import BatteryModelParams
from qbsense.protocol import (
    ProtocolParams,
    estimate_phi,
    protocol_schedule,
    run_protocol,
    sample_measurements,
    sweep_phi,
)


def qsl_params(
    n: int, phi: float, t_s: float = 1.0, shots: int = 0, seed: int = 0
) -> ProtocolParams:
    """Protocol run on a QSL-matched battery with ``g = 1``."""
    return ProtocolParams(
        model=BatteryModelParams.from_qsl(1.0, n, n), phi=phi, t_s=t_s, shots=shots, seed=seed
    )


def test_no_shift_recharges_fully() -> None:
    """Test that phi = 0 leaves the battery charged."""
    result = run_protocol(qsl_params(4, 0.0))

    assert result.p0 == pytest.approx(1.0, abs=1e-12)
    assert result.p1 == pytest.approx(0.0, abs=1e-12)
    assert result.residual_energy == pytest.approx(4.0, abs=1e-12)


def test_reference_probability() -> None:
    """Test ``p1 = sin^2(0.2)`` for n = 4, phi = 0.1, t_s = 1."""
    result = run_protocol(qsl_params(4, 0.1))

    assert result.p1 == pytest.approx(math.sin(0.2) ** 2, abs=1e-9)
    assert result.p0 + result.p1 == pytest.approx(1.0, abs=1e-12)
    assert result.t_1 == pytest.approx(math.pi / 8)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 6])
@pytest.mark.parametrize("phi", [0.05, 0.3, -0.2])
@pytest.mark.parametrize("t_s", [0.5, 2.0])
def test_probability_matches_closed_form(n: int, phi: float, t_s: float) -> None:
    """Test ``p1 = sin^2(phi n t_s / 2)`` across orders and shifts."""
    result = run_protocol(qsl_params(n, phi, t_s))

    assert result.p1 == pytest.approx(math.sin(phi * n * t_s / 2) ** 2, abs=1e-9)


def test_n_fold_phase_enhancement() -> None:
    """Test that order n senses phi like a linear battery senses n * phi."""
    nonlinear = run_protocol(qsl_params(4, 0.07))
    linear = run_protocol(qsl_params(1, 0.28))

    assert nonlinear.p1 == pytest.approx(linear.p1, abs=1e-9)


def test_outcome_energies() -> None:
    """Test the energies attached to the two measurement outcomes."""
    result = run_protocol(qsl_params(3, 0.4))

    assert result.energy_if_charged == pytest.approx(3.0)
    assert result.energy_if_uncharged == 0.0
    assert result.residual_energy == pytest.approx(3.0 * result.p0)


def test_state_trace_keys() -> None:
    """Test the recorded intermediate states."""
    result = run_protocol(qsl_params(4, 0.1))

    assert list(result.state_trace) == ["psi_i", "psi_1", "psi_s", "psi_m"]
    assert result.state_trace["psi_1"].probability(0, 4) == pytest.approx(0.5, abs=1e-12)


def test_zero_sensing_time() -> None:
    """Test that t_s = 0 skips sensing and gives no estimate."""
    params = qsl_params(4, 0.3, t_s=0.0, shots=100)

    result = run_protocol(params)

    assert len(protocol_schedule(result.t_1, 0.0, 0.3)) == 2
    assert result.p1 == pytest.approx(0.0, abs=1e-12)
    assert result.estimate is None
    assert result.state_trace["psi_s"] is result.state_trace["psi_1"]


def test_schedule_layout() -> None:
    """Test the charge, sense, recharge segments."""
    schedule = protocol_schedule(0.5, 2.0, 0.1)

    assert [s.label for s in schedule] == ["charging_on", "sensing", "charging_on"]
    assert schedule[-1].t_end == pytest.approx(3.0)
    assert schedule[1].phi == 0.1


def test_non_identifiable_flag(caplog: pytest.LogCaptureFixture) -> None:
    """Test the principal-branch warning."""
    params = qsl_params(4, 1.0)

    with caplog.at_level(logging.WARNING, logger="qbsense.protocol"):
        result = run_protocol(params)

    assert params.non_identifiable
    assert result.to_dict()["non_identifiable"] is True
    assert "principal branch" in caplog.text
    assert not qsl_params(4, 0.1).non_identifiable


def test_zero_coupling_rejected() -> None:
    """Test that a battery without coupling cannot run the protocol."""
    params = ProtocolParams(model=BatteryModelParams(n=2, omega0=1.0, g_n=0.0), phi=0.1, t_s=1.0)

    with pytest.raises(DomainError, match="non-zero coupling"):
        run_protocol(params)


@pytest.mark.parametrize(("t_s", "shots"), [(-1.0, 0), (1.0, -5)])
def test_params_validation(t_s: float, shots: int) -> None:
    """Test run setting validation."""
    with pytest.raises(DomainError):
        qsl_params(4, 0.1, t_s=t_s, shots=shots)


def test_sampling_is_deterministic() -> None:
    """Test that a seed fixes the measurement record."""
    first = sample_measurements(0.3, 1000, seed=7)

    assert first == sample_measurements(0.3, 1000, seed=7)
    assert sum(first) == 1000
    assert sample_measurements(1.0, 50, seed=1) == (50, 0)
    assert sample_measurements(0.5, 0, seed=1) == (0, 0)


def test_sampling_validation() -> None:
    """Test sampler preconditions."""
    with pytest.raises(DomainError):
        sample_measurements(1.5, 10, seed=0)
    with pytest.raises(DomainError):
        sample_measurements(0.5, -1, seed=0)


def test_estimate_reference_value() -> None:
    """Test ``phi_hat = pi/8`` and its standard error for k1 = 50 of 100."""
    estimate = estimate_phi(50, 100, 4, 1.0)

    assert estimate.phi_hat == pytest.approx(math.pi / 8)
    assert estimate.stderr == pytest.approx(0.025)


@pytest.mark.parametrize(
    ("k1", "shots", "t_s", "message"),
    [(1, 0, 1.0, "at least one shot"), (11, 10, 1.0, "k1"), (1, 10, 0.0, "not identifiable")],
)
def test_estimate_validation(k1: int, shots: int, t_s: float, message: str) -> None:
    """Test estimator preconditions."""
    with pytest.raises(DomainError, match=message):
        estimate_phi(k1, shots, 4, t_s)


def test_estimate_is_consistent() -> None:
    """Test that many shots recover phi within a few standard errors."""
    result = run_protocol(qsl_params(4, 0.1, shots=100_000, seed=3))

    assert result.estimate is not None
    assert abs(result.estimate.phi_hat - 0.1) < 5 * result.estimate.stderr
    record = result.to_dict()
    assert record["k0"] + record["k1"] == 100_000
    assert record["phi_hat"] == result.estimate.phi_hat


def test_estimate_consistency_over_seeds() -> None:
    """Test that at least 99% of seeded runs land within 5 standard errors."""
    hits = 0
    for seed in range(200):
        estimate = run_protocol(qsl_params(4, 0.1, shots=1000, seed=seed)).estimate
        assert estimate is not None
        hits += abs(estimate.phi_hat - 0.1) < 5 * estimate.stderr

    assert hits >= 198


def test_run_drives_model_schedule() -> None:
    """Test that the returned model carries the executed coupling schedule."""
    result = run_protocol(qsl_params(4, 0.2))

    assert result.model is not None
    assert result.model.lambda_schedule == protocol_schedule(result.t_1, 1.0, 0.2)
    assert result.model.lambda_schedule[1].label == "sensing"


def test_sweep_seeds_and_monotonicity() -> None:
    """Test per-run seeds and increasing p1 on the principal branch."""
    phis = np.linspace(0.0, math.pi / 4, 9)

    results = sweep_phi(qsl_params(4, 0.0, shots=10, seed=20), phis)

    assert [r.params.seed for r in results] == list(range(20, 29))
    assert np.all(np.diff([r.p1 for r in results]) > 0)


def test_sweep_concurrent_matches_sequential() -> None:
    """Test the thread-pool sweep."""
    params = qsl_params(3, 0.0, shots=200, seed=5)
    phis = [0.1, 0.2, 0.3]

    sequential = sweep_phi(params, phis)
    concurrent = sweep_phi(params, phis, concurrent=True, workers=2)

    assert [r.to_dict() for r in sequential] == [r.to_dict() for r in concurrent]
