import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmrgrover.config import ExperimentConfig
from nmrgrover.dynamics import RelaxationParams, relax_between_steps
from nmrgrover.experiment import effective_grover, grover_pulse, run_pipeline
from nmrgrover.hamiltonians import IX, IZ
from nmrgrover.spectra import (DEFAULT_MONITOR, IPLUS, LINES, Fid, monitor_pulse, observe, peak_fwhm, spectrum,
                               stick_spectrum, synthesize_fid)
from nmrgrover.spin_ops import basis_state, equilibrium, pseudopure, uniform_state

TWO_PI = 2 * np.pi
PP = {k: pseudopure(basis_state(4, k)) for k in range(4)}
PP_S = pseudopure(uniform_state(4))
RELAX = RelaxationParams(16e-3, 16e-3, 4.5e-3)


@pytest.fixture(scope="module")
def pipeline_states():
    return [r.state for r in run_pipeline(ExperimentConfig()).steps]


def _exact_readout(state, angle=DEFAULT_MONITOR):
    # line amplitudes of the exactly rotated state, in stick normalisation
    rho = monitor_pulse(state, angle)
    return np.array([np.real(IPLUS[k, k + 1] * rho[k + 1, k]) for k in range(3)]) / (2 * math.sin(angle))


# -------------------------------------------------------------- monitor pulse

def test_monitor_zero_angle_is_identity():
    assert np.allclose(monitor_pulse(PP_S, 0.0), PP_S)


def test_monitor_rotates_iz_into_ix():
    theta = DEFAULT_MONITOR
    out = monitor_pulse(equilibrium(), theta)
    assert np.allclose(out, math.cos(theta) * IZ + math.sin(theta) * IX, atol=1e-12)


def test_monitor_rejects_large_angle():
    with pytest.raises(ValueError):
        monitor_pulse(equilibrium(), np.pi / 4)


# -------------------------------------------------------------- stick spectra

@pytest.mark.parametrize("state,expected", [
    (equilibrium(), (0.75, 1.0, 0.75)),
    (PP[0], (1.5, 0.0, 0.0)),
    (PP[1], (-1.5, 2.0, 0.0)),
    (PP[2], (0.0, -2.0, 1.5)),
])
def test_stick_patterns(state, expected):
    got = stick_spectrum(state).integrals
    assert np.allclose(got, expected, atol=1e-12)
    assert [p.line for p in stick_spectrum(state).lines] == list(LINES)


def test_stick_offsets(field):
    assert np.allclose(stick_spectrum(equilibrium(), field).offsets, [field.omega_q / 2, 0, -field.omega_q / 2])


def test_uniform_state_has_coherence_signal():
    # populations of |s> are equal; every line comes from single-quantum coherence
    assert np.all(np.abs(stick_spectrum(PP_S).integrals) > 1.0)


def test_monitor_matches_stick_for_pipeline_states(pipeline_states):
    # small-angle linearity of the exact rotation, compared with the first-order formula
    for state in pipeline_states:
        stick = stick_spectrum(state).integrals
        exact = _exact_readout(state)
        assert np.max(np.abs(exact - stick)) <= 0.02 * np.max(np.abs(stick))


def test_monitor_nonlinearity_is_second_order():
    # deviation of the exact rotation from the first-order sticks scales as angle^2
    errs = [np.max(np.abs(_exact_readout(PP[1], a) - stick_spectrum(PP[1], angle=a).integrals))
            for a in (np.pi / 20, np.pi / 40, np.pi / 80)]
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


# -------------------------------------------------------------- FID

def test_central_coherence_gives_single_tone(field):
    rho = np.zeros((4, 4), complex)
    rho[2, 1] = 1.0
    fid = synthesize_fid(rho, field, 8e-3, 10e-6, RELAX)
    t = np.arange(len(fid.samples)) * fid.dt
    assert np.allclose(fid.samples, IPLUS[1, 2] * np.exp(-t / 16e-3), atol=1e-12)


def test_equilibrium_tones_3_4_3(field):
    fid = synthesize_fid(monitor_pulse(equilibrium()), field)
    # least-squares fit of the FID onto the three tones
    t = np.arange(len(fid.samples)) * fid.dt
    basis = np.exp(-1j * np.outer(t, [field.omega_q / 2, 0, -field.omega_q / 2]))
    amps = np.abs(np.linalg.lstsq(basis, fid.samples, rcond=None)[0])
    assert np.allclose(amps / amps[1], [0.75, 1, 0.75], rtol=1e-9)


def test_relaxation_half_lives(field):
    rho = monitor_pulse(equilibrium())
    fid = synthesize_fid(rho, field, 8e-3, 10e-6, RELAX)
    assert fid.t2 == (4.5e-3, 16e-3, 4.5e-3)
    sat = synthesize_fid(_only(rho, 0), field, 40e-3, 10e-6, RELAX)
    env = np.abs(sat.samples)
    k = np.argmax(env < env[0] / 2)
    assert k * sat.dt == pytest.approx(4.5e-3 * math.log(2), abs=2 * sat.dt)
    cen = synthesize_fid(_only(rho, 1), field, 40e-3, 10e-6, RELAX)
    env = np.abs(cen.samples)
    k = np.argmax(env < env[0] / 2)
    assert k * cen.dt == pytest.approx(16e-3 * math.log(2), abs=2 * cen.dt)


def _only(rho, k):
    out = np.zeros_like(rho)
    out[k + 1, k] = rho[k + 1, k]
    out[k, k + 1] = rho[k, k + 1]
    return out


def test_coarse_dt_rejected(field):
    with pytest.raises(ValueError, match="coarse"):
        synthesize_fid(equilibrium(), field, 8e-3, 100e-6)


def test_fid_validation():
    with pytest.raises(ValueError):
        Fid(1e-5, np.zeros(1), 1.0)


# -------------------------------------------------------------- spectrum and integrals

def test_single_tone_peak(field):
    rho = np.zeros((4, 4), complex)
    rho[1, 0] = 0.3
    spec = spectrum(synthesize_fid(rho, field))
    k = np.argmax(np.abs(spec.values))
    assert spec.freqs_hz[k] == pytest.approx(field.omega_q / 2 / TWO_PI, abs=1 / 8e-3)
    ints = spec.peaks.integrals
    assert ints[0] == pytest.approx(IPLUS[0, 1] * 0.3, rel=0.02)
    # only truncation tails of the undamped tone leak into the other windows
    assert np.all(np.abs(ints[1:]) < 0.02 * ints[0])


@pytest.mark.parametrize("relax", [None, RELAX])
def test_equilibrium_integrals_3_4_3(field, relax):
    ints = observe(equilibrium(), field, relax=relax).peaks.integrals
    assert np.allclose(ints / ints[1], [0.75, 1, 0.75], rtol=0.02)


def test_spectrum_matches_exact_readout(pipeline_states, field):
    for state in pipeline_states:
        ints = observe(state, field).peaks.integrals
        exact = _exact_readout(state)
        assert np.max(np.abs(ints - exact)) <= 0.02 * np.max(np.abs(exact))


def test_spectrum_matches_stick_for_pipeline_states(pipeline_states, field):
    for state in pipeline_states:
        ints = observe(state, field).peaks.integrals
        stick = stick_spectrum(state).integrals
        assert np.max(np.abs(ints - stick)) <= 0.02 * np.max(np.abs(stick))


def test_overlapping_windows_rejected(field):
    broad = RelaxationParams(16e-3, 16e-3, 0.1e-3)
    with pytest.raises(ValueError, match="overlap"):
        observe(equilibrium(), field, relax=broad)


def test_zero_fill_minimum(field):
    with pytest.raises(ValueError):
        spectrum(synthesize_fid(equilibrium(), field), zero_fill=1)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 3))
def test_integrals_are_linear(alpha, beta, k):
    from nmrgrover.hamiltonians import StaticField
    field = StaticField.from_hz(105.79e6, 10840.0)
    a, b = equilibrium(), PP_S if k == 0 else PP[k]
    combo = observe(alpha * a + beta * b, field, relax=RELAX).peaks.integrals
    sep = alpha * observe(a, field, relax=RELAX).peaks.integrals + beta * observe(b, field, relax=RELAX).peaks.integrals
    assert np.max(np.abs(combo - sep)) <= 1e-6 * max(1.0, np.max(np.abs(sep)))


def test_t1_factor_composes_with_sticks(field):
    t, f = 7.04e-3, math.exp(-7.04e-3 / 16e-3)
    relaxed = relax_between_steps(PP[2], t, RELAX, equilibrium())
    expected = f * stick_spectrum(PP[2]).integrals + (1 - f) * stick_spectrum(equilibrium()).integrals
    assert np.allclose(stick_spectrum(relaxed).integrals, expected, atol=1e-12)
    ints = observe(relaxed, field).peaks.integrals
    composed = f * observe(PP[2], field).peaks.integrals + (1 - f) * observe(equilibrium(), field).peaks.integrals
    assert np.allclose(ints, composed, atol=1e-12)


def test_relaxed_pipeline_final_spectrum_scaled_by_t1_factor(field):
    report = run_pipeline(ExperimentConfig(relaxation=True))
    final = report.steps[-1]
    expected = final.relaxation_factor * stick_spectrum(PP[2]).integrals
    got = stick_spectrum(final.state).integrals
    assert np.max(np.abs(got - expected)) <= 0.02 * np.max(np.abs(expected))


def test_satellite_to_central_linewidth_ratio(field):
    spec = observe(equilibrium(), field, duration=256e-3, dt=20e-6, relax=RELAX)
    q = field.omega_q / 2 / TWO_PI
    central = peak_fwhm(spec, 0.0, 500)
    sat = [peak_fwhm(spec, s * q, 500) for s in (1, -1)]
    assert central == pytest.approx(1 / (math.pi * 16e-3), rel=0.05)
    for w in sat:
        assert w / central == pytest.approx(16 / 4.5, rel=0.05)
    # broader satellites have lower peak heights than the central line
    heights = [np.max(np.abs(spec.values.real[np.abs(spec.freqs_hz - s * q) < 500])) for s in (1, 0, -1)]
    assert heights[0] < heights[1] and heights[2] < heights[1]


@pytest.mark.parametrize("target", [1, 2])
def test_uniform_total_integral_independent_of_target(field, omega_f, target):
    pulse = effective_grover(target, omega_f, field, "inverse")
    s_state = grover_pulse(PP[target], pulse, field, "effective")
    total = observe(s_state, field).peaks.integrals.sum()
    ref = observe(PP_S, field).peaks.integrals.sum()
    assert total == pytest.approx(ref, rel=1e-9)


# -------------------------------------------------------------- serialisation

def test_csv_and_json(field):
    spec = observe(equilibrium(), field)
    lines = spec.to_csv().splitlines()
    assert lines[0] == "offset_hz,real,imag"
    assert len(lines) == 1 + len(spec.freqs_hz)
    f, re, im = (float(x) for x in lines[1].split(","))
    assert (f, re, im) == (spec.freqs_hz[0], spec.values[0].real, spec.values[0].imag)
    rec = json.loads(spec.peaks_json())
    assert [p["line"] for p in rec["lines"]] == ["01", "12", "23"]
    assert rec["lines"][1]["offset_hz"] == 0.0
