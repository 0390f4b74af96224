import math

import numpy as np
import pytest

from nmrgrover.config import ExperimentConfig
from nmrgrover.dynamics import IntegrationPolicy, propagate_const
from nmrgrover.experiment import (PHASE_CYCLES, CalibrationError, CycleError, PipelineError, calibrate_amplitude,
                                  calibrate_grover_pulse, dq_pulse, effective_grover, envelope, envelope_area,
                                  grover_propagator, grover_pulse, ideal_rotation, prepare_pseudopure,
                                  prepare_pseudopure_detailed, run_pipeline, selective_pulse, transfer_fidelity)
from nmrgrover.hamiltonians import DQ_COEFFICIENT, DQ_COEFFICIENT_RESIDUAL, fenner_hamiltonian, fenner_time
from nmrgrover.spin_ops import basis_state, equilibrium, fidelity, pseudopure, uniform_state

TWO_PI = 2 * np.pi
PP = {k: pseudopure(basis_state(4, k)) for k in range(4)}
PP_S = pseudopure(uniform_state(4))


# -------------------------------------------------------------- shapes

def test_gaussian_area_closed_form():
    t = np.linspace(0, 2e-3, 200001)
    g = envelope("gaussian", 2e-3, t)
    assert g[0] == pytest.approx(math.exp(-4.5))
    assert envelope_area("gaussian", 2e-3) == pytest.approx(np.trapezoid(g, t), rel=1e-8)
    assert envelope_area("gaussian", 2e-3, 2) == pytest.approx(np.trapezoid(g**2, t), rel=1e-8)
    assert envelope_area("rectangular", 2e-3) == 2e-3


# -------------------------------------------------------------- pseudopure

def test_ideal_dq90_averages_the_outer_pair(field):
    eq = equilibrium()
    single = ideal_rotation((1, 3), np.pi / 2) @ eq @ ideal_rotation((1, 3), np.pi / 2).conj().T
    assert np.allclose(np.diag(single).real, [1.5, -0.5, -0.5, -0.5])
    assert abs(single[1, 3]) == pytest.approx(1.0)
    rho = prepare_pseudopure(eq, field, 2, "effective")
    assert np.allclose(rho, np.diag([1.5, -0.5, -0.5, -0.5]), atol=1e-12)
    assert np.allclose(rho, PP[0], atol=1e-12)


def test_dq_coherence_phase_doubles(field):
    eq = equilibrium()
    a = dq_pulse(eq, (1, 3), np.pi / 2, 2e-3, field, 0.0, "effective")
    b = dq_pulse(eq, (1, 3), np.pi / 2, 2e-3, field, np.pi / 2, "effective")
    assert b[1, 3] == pytest.approx(-a[1, 3])
    assert abs((a + b)[1, 3]) < 1e-15


def test_uncycled_preparation_is_reported(field):
    with pytest.raises(CycleError):
        prepare_pseudopure(equilibrium(), field, 1, "effective")
    with pytest.raises(ValueError):
        prepare_pseudopure(equilibrium(), field, 3, "effective")
    with pytest.raises(ValueError):
        prepare_pseudopure(PP[0], field, 2, "effective")


@pytest.mark.parametrize("cycle", [2, 4])
def test_shaped_pseudopure_preparation(field, cycle):
    res = prepare_pseudopure_detailed(equilibrium(), field, cycle, "exact")
    rho = res.state
    assert res.fidelity >= 0.99
    assert np.max(np.abs(rho - rho.conj().T)) < 1e-12
    assert abs(np.trace(rho)) < 1e-12
    assert res.dq_residual < 1e-3
    if cycle == 4:
        assert res.sq_residual < 1e-3
    assert len(res.cycle) == cycle == len(PHASE_CYCLES[cycle])


# -------------------------------------------------------------- selective pulses

def test_selective_pi_swaps_populations(field):
    out = selective_pulse(PP[0], (0, 1), np.pi, 1.5e-3, field, mode="effective")
    assert np.allclose(out, PP[1], atol=1e-12)
    assert np.allclose(selective_pulse(PP[0], (0, 1), 0.0, 1.5e-3, field), PP[0])


def test_shaped_selective_pi_is_selective(field):
    out = selective_pulse(PP[0], (0, 1), np.pi, 1.5e-3, field, mode="exact")
    pops = np.real(np.diag(out))
    assert pops[0] == pytest.approx(-0.5, abs=0.02) and pops[1] == pytest.approx(1.5, abs=0.02)
    # off-transition levels disturbed by less than 1% of the population excess
    assert np.all(np.abs(pops[2:] - (-0.5)) < 0.01 * 2)
    assert fidelity(out, PP[1]) > 0.99


def test_selective_pulse_errors(field):
    with pytest.raises(ValueError, match="too short"):
        selective_pulse(PP[0], (0, 1), np.pi, 0.1e-3, field)
    with pytest.raises(ValueError):
        selective_pulse(PP[0], (0, 2), np.pi, 1.5e-3, field)
    with pytest.raises(ValueError):
        selective_pulse(PP[0], (0, 1), np.pi, 1.5e-3, field, mode="fast")


# -------------------------------------------------------------- calibration

@pytest.fixture(scope="module")
def calibrated(field):
    return {tr: calibrate_amplitude(tr, 2e-3, field) for tr in [(1, 2), (2, 3), (0, 2)]}


def test_single_quantum_calibration(calibrated):
    assert calibrated[(1, 2)] / TWO_PI == pytest.approx(62.5, rel=1e-3)
    assert calibrated[(2, 3)] / TWO_PI == pytest.approx(72.17, rel=1e-3)


def test_double_quantum_calibration(calibrated, field):
    lab = calibrated[(0, 2)] / TWO_PI
    assert 300 < lab < 600
    predicted = DQ_COEFFICIENT * calibrated[(0, 2)] ** 2 / field.omega_q
    assert abs(predicted / (np.pi / (4 * 2e-3)) - 1) <= DQ_COEFFICIENT_RESIDUAL


def test_calibration_is_idempotent(calibrated, field):
    again = calibrate_amplitude((1, 2), 2e-3, field, guess=calibrated[(1, 2)])
    assert again == pytest.approx(calibrated[(1, 2)], rel=1e-3)


def test_calibration_without_bracket(field):
    with pytest.raises(CalibrationError):
        # far below the first 90 degree point; odd multiples (187.5, 312.5 Hz ...) would bracket
        calibrate_amplitude((1, 2), 2e-3, field, guess=TWO_PI * 10, span=0.2)
    with pytest.raises(ValueError):
        calibrate_amplitude((0, 3), 2e-3, field)


# -------------------------------------------------------------- Fenner time

def test_fenner_time_for_large_database(omega_f):
    # oracle: dense scan of the transfer probability with the full 1024-level Hamiltonian
    n = 1024
    x = 1 / math.sqrt(n)
    t_est = fenner_time(omega_f, x)
    w, v = np.linalg.eigh(fenner_hamiltonian(n, 5, omega_f))
    a = v.conj().T @ uniform_state(n)
    b = v.conj().T @ basis_state(n, 5)
    t = np.linspace(0, 1.2 * t_est, 120001)
    p = np.abs(np.exp(-1j * np.outer(t, w)) @ (b.conj() * a)) ** 2
    # the scan stops before the second maximum, so the global one is the first
    k = int(np.argmax(p))
    # vertex of the parabola through the three samples around the maximum
    y0, y1, y2 = p[k - 1], p[k], p[k + 1]
    peak = t[k] + (t[1] - t[0]) * 0.5 * (y0 - y2) / (y0 - 2 * y1 + y2)
    assert p[k] > 1 - 1e-6
    assert t_est == pytest.approx(peak, rel=1e-6)


# -------------------------------------------------------------- Grover pulses

@pytest.mark.parametrize("target", [1, 2])
def test_effective_grover_equals_fenner_propagation(field, omega_f, target):
    pulse = effective_grover(target, omega_f, field)
    a = grover_pulse(PP_S, pulse, field, "effective")
    b = propagate_const(PP_S, fenner_hamiltonian(4, target, omega_f), fenner_time(omega_f))
    assert np.max(np.abs(a - b)) < 1e-12
    assert fidelity(a, PP[target]) >= 1 - 1e-9


def test_inverse_grover_reaches_uniform_state(field, omega_f):
    pulse = effective_grover(1, omega_f, field, "inverse")
    out = grover_pulse(PP[1], pulse, field, "effective")
    assert fidelity(out, PP_S) >= 1 - 1e-9
    assert np.max(np.abs(out - np.diag(np.diag(out)))) > 0.4


@pytest.mark.parametrize("target", [1, 2])
def test_inverse_then_direct_is_identity(field, omega_f, target):
    u = grover_propagator(effective_grover(target, omega_f, field), field)
    v = grover_propagator(effective_grover(target, omega_f, field, "inverse"), field)
    assert np.max(np.abs(u @ v - np.eye(4))) < 1e-9


def test_grover_mode_validation(field, omega_f):
    with pytest.raises(ValueError):
        grover_pulse(PP_S, effective_grover(2, omega_f, field), field, "lab")
    with pytest.raises(ValueError, match="triple-quantum"):
        effective_grover(3, omega_f, field)


def test_exact_grover_pulse_calibration(field, omega_f):
    pulse = calibrate_grover_pulse(2, omega_f, field)
    assert pulse.meta["fidelity"] >= 0.95
    assert pulse.meta["fidelity"] >= pulse.meta["analytic_fidelity"]
    assert transfer_fidelity(pulse, field) == pytest.approx(pulse.meta["fidelity"])
    # SQ amplitudes and duration untouched by the calibration
    amps = {h.levels: h.amplitude for h in pulse.harmonics}
    assert amps[(1, 2)] == pytest.approx(omega_f)
    assert amps[(2, 3)] == pytest.approx(2 * omega_f / math.sqrt(3))
    assert pulse.duration == pytest.approx(fenner_time(omega_f))


def test_frame_correction_matters_for_uniform_target(field, omega_f):
    from nmrgrover.dynamics import time_ordered_propagator
    from nmrgrover.hamiltonians import interaction_frame_rf

    pulse = calibrate_grover_pulse(1, omega_f, field, direction="inverse")
    pol = IntegrationPolicy.for_field(field)
    bare = time_ordered_propagator(lambda t: interaction_frame_rf(pulse, field, t), 0.0, pulse.duration, pol.dt)
    s, w = uniform_state(4), basis_state(4, 1)
    with_frame = fidelity(grover_propagator(pulse, field, "exact", pol) @ w, s)
    assert with_frame == pytest.approx(pulse.meta["fidelity"])
    assert with_frame > fidelity(bare @ w, s) + 0.01


# -------------------------------------------------------------- pipeline

def test_effective_pipeline():
    report = run_pipeline(ExperimentConfig())
    assert [s.name for s in report.steps] == ["a", "b", "c", "d", "e"]
    assert [s.label for s in report.steps] == ["thermal", "|00>", "|01>", "|s>", "|10>"]
    assert all(f >= 0.99 for f in report.fidelities)
    assert np.max(np.abs(report.final.state - PP[2])) < 1e-6
    assert report.steps[3].state[0, 3] != 0
    rec = report.to_dict()
    assert rec["final_label"] == "|10>"
    assert rec["steps"][4]["peak_integrals"] == pytest.approx([0, -2, 1.5], abs=1e-9)


def test_alternate_pipeline_ends_in_01():
    report = run_pipeline(ExperimentConfig(final_target=1))
    assert report.final.label == "|01>"
    assert np.max(np.abs(report.final.state - PP[1])) < 1e-6
    assert np.allclose(report.final.sticks.integrals, report.steps[2].sticks.integrals, atol=1e-9)


def test_pipeline_relaxation_bookkeeping():
    report = run_pipeline(ExperimentConfig(relaxation=True))
    total = (2.0 + 1.5) * 1e-3 + 2 * fenner_time(TWO_PI * 62.5)
    assert report.final.elapsed == pytest.approx(total)
    assert report.final.relaxation_factor == pytest.approx(math.exp(-total / 16e-3))
    assert report.final.relaxation_factor == pytest.approx(0.663, abs=1e-3)
    # the marked-state pattern survives with reduced intensity
    sticks = report.final.sticks.integrals
    assert sticks[1] < 0 < sticks[2]
    assert abs(sticks[1]) < 2


def test_pipeline_floor_aborts_with_diagnostics():
    cfg = ExperimentConfig(relaxation=True, delay_ms=50.0, fidelity_floor=0.9)
    with pytest.raises(PipelineError) as info:
        run_pipeline(cfg)
    steps = info.value.report.steps
    assert steps and steps[-1].fidelity < 0.9


def test_exact_pipeline():
    report = run_pipeline(ExperimentConfig(mode="exact"))
    assert report.pseudopure_fidelity >= 0.99
    assert report.final.fidelity >= 0.95
