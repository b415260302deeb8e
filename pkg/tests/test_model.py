"""Tests for the battery Hamiltonian and its charging constants."""

import logging
import math

import numpy as np
import pytest

from qbsense.exceptions import DomainError
from qbsense.fockspace import TwoModeSpace, enumerate_sector, number_operator
from qbsense.model import (
    BatteryModelParams,
    CircuitParams,
    ScheduleSegment,
    bare_hamiltonian,
    binomial,
    build_hamiltonian,
    charge_operator,
    charging_schedule,
    coupling_from_circuit,
    coupling_from_qsl,
    coupling_hamiltonian,
    factorial,
    qsl_rabi_frequency,
    rabi_frequency,
    segment_hamiltonian,
    two_level_populations,
    validate_schedule,
)

CHARGING_CASES = [(2, 2), (3, 3), (4, 4), (6, 6), (4, 7)]


def test_binomial_exact_and_large() -> None:
    """Test binomial coefficients in both arithmetic regimes."""
    assert binomial(5, 2) == 10.0
    assert binomial(3, 5) == 0.0
    assert binomial(30, 4) == pytest.approx(27405.0, rel=1e-12)


def test_factorial() -> None:
    """Test factorial in both arithmetic regimes."""
    assert factorial(4) == 24.0
    assert factorial(25) == pytest.approx(float(math.factorial(25)), rel=1e-12)


def test_qsl_coupling_reference_value() -> None:
    """Test ``g_4 = 1/sqrt(6)`` for the n = Q = 4 reference run."""
    assert coupling_from_qsl(1.0, 4, 4) == pytest.approx(1 / math.sqrt(6))


def test_reference_rabi_constants() -> None:
    """Test ``Omega_Q = 2`` and ``t_c = pi/4`` for n = Q = 4, g = 1."""
    rabi = rabi_frequency(4, 4, coupling_from_qsl(1.0, 4, 4))

    assert rabi.omega_q == pytest.approx(2.0)
    assert rabi.t_c == pytest.approx(math.pi / 4)
    assert rabi.t_1 == pytest.approx(math.pi / 8)
    assert rabi.energy_q == 4.0


@pytest.mark.parametrize(("n", "Q"), CHARGING_CASES)
def test_qsl_closed_form_matches(n: int, Q: int) -> None:
    """Test the closed-form QSL Rabi frequency against the general formula."""
    g_n = coupling_from_qsl(1.0, n, Q)

    assert qsl_rabi_frequency(1.0, n, Q) == pytest.approx(rabi_frequency(n, Q, g_n).omega_q)


def test_qsl_coupling_preconditions() -> None:
    """Test that Q < n and non-positive g are rejected."""
    with pytest.raises(DomainError, match="Q >= n"):
        coupling_from_qsl(1.0, 4, 3)
    with pytest.raises(DomainError, match="positive"):
        coupling_from_qsl(0.0, 2, 2)
    with pytest.raises(DomainError):
        rabi_frequency(4, 3, 1.0)


def test_zero_coupling_never_charges() -> None:
    """Test that g_n = 0 gives an infinite charging time."""
    rabi = rabi_frequency(2, 2, 0.0)

    assert rabi.omega_q == 0.0
    assert math.isinf(rabi.t_c)


def test_circuit_coupling() -> None:
    """Test ``|g_n| = E_J lambda1 lambda2^n / n!``."""
    circuit = CircuitParams(e_j=2.0, lambda1=0.5, lambda2=0.5, n=2)

    assert coupling_from_circuit(circuit) == pytest.approx(0.125)
    params = BatteryModelParams.from_circuit(circuit)
    assert params.provenance == "circuit"
    assert params.g_n == pytest.approx(0.125)


def test_circuit_coupling_warns_outside_weak_flux(caplog: pytest.LogCaptureFixture) -> None:
    """Test the warning for lambda >= 1."""
    with caplog.at_level(logging.WARNING, logger="qbsense.model"):
        coupling_from_circuit(CircuitParams(e_j=1.0, lambda1=1.5, lambda2=0.5, n=2))

    assert "weak-flux" in caplog.text


def test_circuit_coupling_rejects_non_positive() -> None:
    """Test circuit parameter validation."""
    with pytest.raises(DomainError):
        coupling_from_circuit(CircuitParams(e_j=0.0, lambda1=0.5, lambda2=0.5, n=2))


def test_params_validation() -> None:
    """Test model parameter validation."""
    with pytest.raises(DomainError):
        BatteryModelParams(n=0, omega0=1.0, g_n=1.0)
    with pytest.raises(DomainError):
        BatteryModelParams(n=2, omega0=0.0, g_n=1.0)
    with pytest.raises(DomainError):
        BatteryModelParams(n=2, omega0=1.0, g_n=math.nan)
    with pytest.raises(DomainError, match="QSL"):
        BatteryModelParams(n=2, omega0=1.0, g_n=1.0, provenance="qsl")


def test_params_to_dict_records_provenance(qsl_model_n4: BatteryModelParams) -> None:
    """Test the serializable snapshot."""
    data = qsl_model_n4.to_dict()

    assert data["g_n_provenance"] == "qsl"
    assert data["g"] == 1.0
    assert data["charge"] == 4
    assert data["lambda_schedule"] == []


def test_schedule_segment_validation() -> None:
    """Test segment ordering and the sensing parameter."""
    with pytest.raises(DomainError, match="t_start < t_end"):
        ScheduleSegment(1.0, 1.0, "charging_on")
    with pytest.raises(DomainError, match="phi"):
        ScheduleSegment(0.0, 1.0, "sensing")
    with pytest.raises(DomainError, match="phi"):
        ScheduleSegment(0.0, 1.0, "charging_on", phi=0.1)

    assert ScheduleSegment(0.5, 2.0, "charging_off").duration == 1.5


def test_validate_schedule_rejects_gap() -> None:
    """Test that schedules must be contiguous."""
    segments = (
        ScheduleSegment(0.0, 1.0, "charging_on"),
        ScheduleSegment(1.5, 2.0, "charging_off"),
    )

    with pytest.raises(DomainError, match="not contiguous"):
        validate_schedule(segments)


def test_with_schedule(qsl_model_n4: BatteryModelParams) -> None:
    """Test attaching a charging schedule."""
    params = qsl_model_n4.with_schedule(charging_schedule(math.pi / 4))

    assert params.lambda_schedule[0].label == "charging_on"
    assert qsl_model_n4.lambda_schedule == ()


def test_build_hamiltonian_rejects_lambda(qsl_model_n4: BatteryModelParams) -> None:
    """Test that lambda must be 0 or 1."""
    with pytest.raises(DomainError, match="lambda"):
        build_hamiltonian(qsl_model_n4, 2, enumerate_sector(4, 4))


def test_sector_must_match_model(qsl_model_n4: BatteryModelParams) -> None:
    """Test that a sector of another order is rejected."""
    with pytest.raises(DomainError, match="n=3"):
        build_hamiltonian(qsl_model_n4, 1, enumerate_sector(3, 4))


def test_space_must_match_model_cutoffs() -> None:
    """Test that recorded cutoffs are enforced."""
    params = BatteryModelParams(n=2, omega0=1.0, g_n=0.5, cutoff_a=3, cutoff_b=6)

    with pytest.raises(DomainError, match="cutoff_b"):
        bare_hamiltonian(params, TwoModeSpace(3, 5))


def test_hamiltonian_conserves_charge() -> None:
    """Test ``[H, Q] = 0`` and ``[H_A + H_B, H_AB] = 0`` on a truncated space."""
    params = BatteryModelParams(n=3, omega0=1.0, g_n=0.3)
    space = TwoModeSpace(4, 12)

    hamiltonian = build_hamiltonian(params, 1, space)
    charge = charge_operator(3, space)

    assert hamiltonian.hermitian
    assert hamiltonian.commutator(charge).max_abs() < 1e-12
    bare = bare_hamiltonian(params, space)
    assert bare.commutator(coupling_hamiltonian(params, space)).max_abs() < 1e-12


def test_sector_hamiltonian_two_level(sector_n4, qsl_model_n4: BatteryModelParams) -> None:
    """Test the 2x2 charging Hamiltonian of the reference sector."""
    dense = build_hamiltonian(qsl_model_n4, 1, sector_n4).to_dense()

    np.testing.assert_allclose(np.diag(dense), [4.0, 4.0])
    assert dense[0, 1] == pytest.approx(2.0)


def test_coupling_off_is_bare(qsl_model_n4: BatteryModelParams, sector_n4) -> None:
    """Test that lambda = 0 leaves only H_A + H_B."""
    off = build_hamiltonian(qsl_model_n4, 0, sector_n4)

    assert (off - bare_hamiltonian(qsl_model_n4, sector_n4)).max_abs() == 0.0


def test_sensing_segment_hamiltonian(qsl_model_n4: BatteryModelParams, sector_n4) -> None:
    """Test that sensing adds ``-phi n_b`` to the bare energy."""
    segment = ScheduleSegment(0.0, 1.0, "sensing", phi=0.25)

    generator = segment_hamiltonian(qsl_model_n4, segment, sector_n4)
    n_b = number_operator(sector_n4, "b")
    expected = bare_hamiltonian(qsl_model_n4, sector_n4) - n_b.scaled(0.25)

    assert generator.hermitian
    assert (generator - expected).max_abs() < 1e-15


def test_two_level_populations_sum_to_one() -> None:
    """Test the analytic Rabi solution."""
    t = np.linspace(0.0, 2.0, 11)
    p_initial, p_final = two_level_populations(4, 4, 1 / math.sqrt(6), t)

    np.testing.assert_allclose(p_initial + p_final, 1.0)
    assert p_final[0] == 0.0
    assert two_level_populations(4, 4, 1 / math.sqrt(6), math.pi / 4)[1] == pytest.approx(1.0)
