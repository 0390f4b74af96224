"""Pulse-sequence engine: pseudopure preparation, selective and Grover pulses,
amplitude calibration and the four-step search experiment.

Two propagation modes are offered throughout.  ``effective`` uses ideal
rotations and the secular Hamiltonian; ``exact`` integrates the
interaction-frame RF Hamiltonian of shaped or rectangular pulses.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
from scipy.optimize import brentq, minimize

from .config import ExperimentConfig
from .dynamics import IntegrationPolicy, apply, dq_nutation_rate, relax_between_steps, time_ordered_propagator
from .hamiltonians import (DIM, DQ_COEFFICIENT, IY_ABS, GroverPulse, Harmonic, StaticField,
                           compensate_offsets, dq_lab_amplitude, fenner_time, frame_energies,
                           grover_harmonics, interaction_frame_rf, secular_average, transition_table)
from .spectra import PeakTable, stick_spectrum
from .spin_ops import basis_state, check_deviation, equilibrium, expm_generator, fidelity, pseudopure, uniform_state

MODES = ("effective", "exact")
PHASE_CYCLES = {
    1: (0.0,),  # no cycling; leaves the double-quantum coherence in place
    2: (0.0, np.pi / 2),
    4: (0.0, np.pi / 2, np.pi, 3 * np.pi / 2),
}
PSEUDOPURE_LEVELS = (1, 3)
COHERENCE_TOL = 1e-3


class CalibrationError(RuntimeError):
    pass


class CycleError(RuntimeError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------- pulse shapes

@dataclass(frozen=True)
class PulseSegment:
    shape: str
    duration: float
    harmonics: tuple[Harmonic, ...]
    nominal_angle: float | None = None
    phase_cycle: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if self.shape not in ("gaussian", "rectangular"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    @property
    def sigma(self) -> float:
        return self.duration / 6

    def envelope(self, t):
        return envelope(self.shape, self.duration, t)


def envelope(shape: str, duration: float, t):
    t = np.asarray(t, dtype=float)
    if shape == "rectangular":
        return np.ones_like(t)
    sigma = duration / 6
    return np.exp(-0.5 * ((t - duration / 2) / sigma) ** 2)


def envelope_area(shape: str, duration: float, power: int = 1) -> float:
    """Integral of ``envelope**power`` over the pulse (closed form)."""
    if shape == "rectangular":
        return duration
    sigma = duration / 6 / math.sqrt(power)
    half = duration / 2
    return sigma * math.sqrt(2 * math.pi) * math.erf(half / (sigma * math.sqrt(2)))


def _segment_sampler(seg: PulseSegment, field: StaticField):
    def sampler(t):
        h = interaction_frame_rf(seg.harmonics, field, t)
        return h * seg.envelope(t)[:, None, None]
    return sampler


def segment_propagator(seg: PulseSegment, field: StaticField, policy: IntegrationPolicy) -> np.ndarray:
    return time_ordered_propagator(_segment_sampler(seg, field), 0.0, seg.duration, policy.dt)


def ideal_rotation(levels, angle: float, phase: float = 0.0) -> np.ndarray:
    """Rotation by ``angle`` of the effective spin-1/2 on ``levels``.

    Uses the same matrix-element convention as the secular Hamiltonian, so a
    pulse phase ``phase`` acts as ``order * phase`` on the coherence.
    """
    a, b = levels
    order = b - a
    h = np.zeros((DIM, DIM), dtype=complex)
    h[a, b] = (angle / 2) * (-1j * np.exp(-1j * phase) if order == 1 else -np.exp(-2j * phase))
    h = h + h.conj().T
    return expm_generator(h, 1.0)


def _check_bandwidth(duration: float, shape: str, field: StaticField) -> None:
    if shape == "gaussian" and 3 / (duration / 6) > field.omega_q / 2:
        raise ValueError("pulse too short: its bandwidth overlaps the neighbouring transitions")


def _mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    return mode


# ---------------------------------------------------------------- selective pulses

def shaped_amplitude(levels, angle: float, duration: float, field: StaticField, shape: str = "gaussian") -> float:
    """Lab amplitude whose integrated envelope gives ``angle`` on the effective spin-1/2.

    Double-quantum pulses use the second-order law, so the area is taken
    over the squared envelope.
    """
    order = levels[1] - levels[0]
    if order == 1:
        return angle / (2 * IY_ABS[levels] * envelope_area(shape, duration))
    if order == 2:
        return math.sqrt(angle * field.omega_q / (2 * DQ_COEFFICIENT * envelope_area(shape, duration, 2)))
    raise ValueError("only single- and double-quantum pulses are supported")


def selective_segment(levels, angle: float, duration: float, field: StaticField, phase: float = 0.0,
                      shape: str = "gaussian", amplitude: float | None = None) -> PulseSegment:
    levels = tuple(sorted(levels))
    _check_bandwidth(duration, shape, field)
    tr = transition_table(field)[levels]
    amp = shaped_amplitude(levels, angle, duration, field, shape) if amplitude is None else amplitude
    hm = Harmonic(levels, tr.offset, amp, phase, tr.order)
    return PulseSegment(shape, duration, (hm,), nominal_angle=angle)


def selective_pulse(state: np.ndarray, transition, angle: float, duration: float, field: StaticField,
                    phase: float = 0.0, mode: str = "exact", policy: IntegrationPolicy | None = None,
                    amplitude: float | None = None) -> np.ndarray:
    """Gaussian pulse on one single-quantum transition.

    ``mode="effective"`` applies the ideal rotation instead of integrating
    the shaped pulse.
    """
    levels = tuple(sorted(transition))
    if levels[1] - levels[0] != 1:
        raise ValueError("selective_pulse addresses single-quantum transitions; use dq_pulse for 2Q")
    return _transition_pulse(state, levels, angle, duration, field, phase, mode, policy, amplitude)


def dq_pulse(state, levels, angle, duration, field, phase=0.0, mode="exact", policy=None, amplitude=None):
    levels = tuple(sorted(levels))
    if levels[1] - levels[0] != 2:
        raise ValueError("dq_pulse addresses double-quantum transitions")
    return _transition_pulse(state, levels, angle, duration, field, phase, mode, policy, amplitude)


def _transition_pulse(state, levels, angle, duration, field, phase, mode, policy, amplitude):
    _check_bandwidth(duration, "gaussian", field)
    if angle == 0:
        return np.array(state, dtype=complex)
    if _mode(mode) == "effective":
        return apply(state, ideal_rotation(levels, angle, phase))
    policy = policy or IntegrationPolicy.for_field(field)
    seg = selective_segment(levels, angle, duration, field, phase, amplitude=amplitude)
    return apply(state, segment_propagator(seg, field, policy))


# ---------------------------------------------------------------- calibration

def _population_difference(levels, amplitude, duration, field, policy, shape):
    seg = selective_segment(levels, np.pi / 2, duration, field, shape=shape, amplitude=amplitude)
    rho = apply(equilibrium(), segment_propagator(seg, field, policy))
    a, b = levels
    return float(np.real(rho[a, a] - rho[b, b]))


def calibrate_amplitude(transition, duration: float, field: StaticField, guess: float | None = None,
                        policy: IntegrationPolicy | None = None, shape: str = "rectangular",
                        span: float = 0.5) -> float:
    """Lab amplitude (rad/s) of a single-frequency pulse that acts as a 90 degree pulse.

    Starting from equilibrium, the transverse signal of the addressed pair is
    largest where its population difference crosses zero.  The amplitude is
    bracketed within ``+-span`` of ``guess`` (default: the nominal area or
    second-order estimate) and located by Brent's method on the exact
    propagation.
    """
    levels = tuple(sorted(transition))
    if levels[1] - levels[0] not in (1, 2):
        raise ValueError("only single- and double-quantum transitions can be calibrated")
    policy = policy or IntegrationPolicy.for_field(field)
    centre = guess if guess is not None else shaped_amplitude(levels, np.pi / 2, duration, field, shape)
    lo, hi = centre * (1 - span), centre * (1 + span)
    f = functools.partial(_population_difference, levels, duration=duration, field=field, policy=policy, shape=shape)
    flo, fhi = f(lo), f(hi)
    if np.sign(flo) == np.sign(fhi):
        raise CalibrationError(
            f"no 90-degree point on {levels} between {lo / (2 * np.pi):.4g} and {hi / (2 * np.pi):.4g} Hz")
    return float(brentq(f, lo, hi, xtol=1e-9 * centre, rtol=1e-12))


# ---------------------------------------------------------------- pseudopure state

@dataclass(frozen=True)
class PseudopureResult:
    state: np.ndarray
    fidelity: float
    dq_residual: float  # largest multiple-quantum element / diagonal excess
    sq_residual: float  # largest single-quantum element / diagonal excess
    cycle: tuple[float, ...]


def _residuals(rho: np.ndarray) -> tuple[float, float]:
    excess = np.real(rho[0, 0] - rho[1, 1])
    i, j = np.triu_indices(DIM, 1)
    sq = np.abs(rho[i, j])[j - i == 1].max()
    mq = np.abs(rho[i, j])[j - i > 1].max()
    return float(mq / excess), float(sq / excess)


def prepare_pseudopure_detailed(eq: np.ndarray, field: StaticField, cycle_size: int = 2, mode: str = "effective",
                                duration: float = 2.0e-3, policy: IntegrationPolicy | None = None,
                                amplitude: float | None = None) -> PseudopureResult:
    if cycle_size not in PHASE_CYCLES:
        raise ValueError(f"cycle_size must be one of {sorted(PHASE_CYCLES)}")
    eq = np.asarray(eq, dtype=complex)
    if np.max(np.abs(eq - equilibrium())) > 1e-12:
        raise ValueError("pseudopure preparation starts from the equilibrium deviation Iz")
    cycle = PHASE_CYCLES[cycle_size]
    if _mode(mode) == "exact":
        policy = policy or IntegrationPolicy.for_field(field)
        if amplitude is None:
            amplitude = dq90_amplitude(field, duration, policy)
    runs = [dq_pulse(eq, PSEUDOPURE_LEVELS, np.pi / 2, duration, field, ph, mode, policy, amplitude)
            for ph in cycle]
    rho = sum(runs) / len(runs)
    rho = (rho + rho.conj().T) / 2
    check_deviation(rho, 1e-12)
    dq_res, sq_res = _residuals(rho)
    if dq_res >= COHERENCE_TOL:
        raise CycleError(f"phase cycle leaves multiple-quantum coherence {dq_res:.2e} of the diagonal excess")
    target = pseudopure(basis_state(DIM, 0))
    return PseudopureResult(rho, fidelity(rho, target), dq_res, sq_res, cycle)


def prepare_pseudopure(eq, field, cycle_size=2, mode="effective", duration=2.0e-3, policy=None):
    """Equilibrium to the ``|00>`` pseudopure deviation by a cycled DQ 90 on levels 1 and 3."""
    return prepare_pseudopure_detailed(eq, field, cycle_size, mode, duration, policy).state


@functools.lru_cache(maxsize=32)
def dq90_amplitude(field: StaticField, duration: float, policy: IntegrationPolicy) -> float:
    """Peak amplitude of the Gaussian DQ 90 on levels 1,3, refined on the exact propagation."""
    guess = shaped_amplitude(PSEUDOPURE_LEVELS, np.pi / 2, duration, field)
    return calibrate_amplitude(PSEUDOPURE_LEVELS, duration, field, guess, policy, shape="gaussian", span=0.3)


# ---------------------------------------------------------------- Grover pulses

def grover_pulse(state: np.ndarray, pulse: GroverPulse, field: StaticField, mode: str = "effective",
                 policy: IntegrationPolicy | None = None, dq_effective: float | None = None) -> np.ndarray:
    """Apply a Grover pulse.

    ``effective`` propagates under the secular Hamiltonian.  ``exact``
    integrates the interaction-frame Hamiltonian and then removes the phase
    ramp of any carrier moved off its nominal offset (a frame change that a
    spectrometer performs by shifting subsequent pulse and receiver phases).
    """
    return apply(state, grover_propagator(pulse, field, mode, policy, dq_effective))


def grover_propagator(pulse: GroverPulse, field: StaticField, mode: str = "effective",
                      policy: IntegrationPolicy | None = None, dq_effective: float | None = None) -> np.ndarray:
    if _mode(mode) == "effective":
        nominal = _nominal(pulse, field)
        return expm_generator(secular_average(nominal, field, dq_effective), pulse.duration)
    policy = policy or IntegrationPolicy.for_field(field)
    u = time_ordered_propagator(lambda t: interaction_frame_rf(pulse, field, t), 0.0, pulse.duration, policy.dt)
    frame = np.exp(1j * frame_energies(pulse, field) * pulse.duration)
    return frame[:, None] * u


def _nominal(pulse: GroverPulse, field: StaticField) -> GroverPulse:
    table = transition_table(field)
    return replace(pulse, harmonics=tuple(replace(h, offset=table[h.levels].offset) for h in pulse.harmonics))


def effective_grover(target: int, omega_f: float, field: StaticField, direction: str = "direct",
                     duration: float | None = None) -> GroverPulse:
    """Pulse whose second-order DQ law yields exactly ``omega_f``."""
    return grover_harmonics(target, omega_f, transition_table(field), dq_lab_amplitude(omega_f, field),
                            direction, duration)


def _endpoints(target: int, direction: str):
    s = uniform_state(DIM)
    w = basis_state(DIM, target)
    return (s, w) if direction == "direct" else (w, s)


def transfer_fidelity(pulse: GroverPulse, field: StaticField, mode: str = "exact",
                      policy: IntegrationPolicy | None = None) -> float:
    start, goal = _endpoints(pulse.target, pulse.direction)
    return fidelity(grover_propagator(pulse, field, mode, policy) @ start, goal)


def _with_params(base: GroverPulse, x) -> GroverPulse:
    d_off = iter(x[:2])
    out = []
    for h in base.harmonics:
        if h.order == 1:
            out.append(replace(h, offset=h.offset + next(d_off)))
        else:
            out.append(replace(h, amplitude=h.amplitude * (1 + x[2]), phase=h.phase + x[3]))
    return replace(base, harmonics=tuple(out))


def _refine(pulse: GroverPulse, field: StaticField, policy: IntegrationPolicy, omega_f: float) -> np.ndarray:
    cost = lambda x: 1 - transfer_fidelity(_with_params(pulse, x), field, "exact", policy)
    step = np.diag([0.05 * omega_f, 0.05 * omega_f, 0.02, 0.05])
    simplex = np.vstack([np.zeros(4), step])
    res = minimize(cost, np.zeros(4), method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": 1e-6, "fatol": 1e-9, "maxiter": 400})
    return res.x if res.fun < cost(np.zeros(4)) else np.zeros(4)


@functools.lru_cache(maxsize=64)
def calibrate_grover_pulse(target: int, omega_f: float, field: StaticField, duration: float | None = None,
                           direction: str = "direct", policy: IntegrationPolicy | None = None,
                           refine: bool = True) -> GroverPulse:
    """Grover pulse tuned for exact propagation.

    1. DQ amplitude chosen so the exact (Floquet) nutation rate equals
       ``omega_f``.
    2. Carriers moved onto the Stark-shifted resonances.
    3. If ``refine``, the two single-quantum offsets and the DQ amplitude and
       phase are polished by Nelder-Mead on the transfer fidelity.  The
       single-quantum amplitudes and the duration stay at their nominal values.
    """
    policy = policy or IntegrationPolicy.for_field(field)
    duration = duration or fenner_time(omega_f)
    levels = (0, 2) if target == 2 else (1, 3)
    guess = dq_lab_amplitude(omega_f, field)
    rate = lambda a: dq_nutation_rate(a, field, levels) - omega_f
    lab = brentq(rate, 0.5 * guess, 1.5 * guess, xtol=1e-10 * guess)
    pulse = compensate_offsets(grover_harmonics(target, omega_f, transition_table(field), lab, direction, duration),
                               field)
    # phi and phi + pi give the same secular DQ element but opposite signs on the
    # DQ harmonic's off-resonant single-quantum couplings; both branches are tried
    branches = [pulse, _with_params(pulse, [0.0, 0.0, 0.0, np.pi])]
    scores = [transfer_fidelity(p, field, "exact", policy) for p in branches]
    meta = {"dq_lab": lab, "analytic_fidelity": max(scores), "refined": refine}
    if refine:
        for k, base in enumerate(branches):
            x = _refine(base, field, policy, omega_f)
            branches[k] = _with_params(base, x)
            scores[k] = max(scores[k], transfer_fidelity(branches[k], field, "exact", policy))
    best = int(np.argmax(scores))
    pulse = branches[best]
    meta["dq_branch"] = best
    meta["fidelity"] = transfer_fidelity(pulse, field, "exact", policy)
    return replace(pulse, meta=meta)


def grover_for_mode(target, config: ExperimentConfig, direction: str) -> GroverPulse:
    if config.mode == "effective":
        return effective_grover(target, config.omega_f, config.field, direction, config.grover_duration)
    return calibrate_grover_pulse(target, config.omega_f, config.field, config.grover_duration, direction,
                                  config.policy)


# ---------------------------------------------------------------- pipeline

STEP_NAMES = ("a", "b", "c", "d", "e")


@dataclass
class StepRecord:
    name: str
    label: str
    state: np.ndarray
    target: np.ndarray
    fidelity: float
    sticks: PeakTable
    elapsed: float
    relaxation_factor: float

    def to_dict(self) -> dict:
        return {
            "step": self.name,
            "label": self.label,
            "fidelity": self.fidelity,
            "peak_integrals": [float(v) for v in self.sticks.integrals],
            "elapsed_s": self.elapsed,
            "relaxation_factor": self.relaxation_factor,
            "state_real": np.real(self.state).tolist(),
            "state_imag": np.imag(self.state).tolist(),
        }


@dataclass
class PipelineReport:
    config: ExperimentConfig
    steps: list[StepRecord] = dc_field(default_factory=list)
    pseudopure_fidelity: float | None = None
    sq_residual: float | None = None
    notes: list[str] = dc_field(default_factory=list)

    @property
    def final(self) -> StepRecord:
        return self.steps[-1]

    @property
    def fidelities(self) -> list[float]:
        return [s.fidelity for s in self.steps]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_mapping(),
            "phase_cycle": list(PHASE_CYCLES[self.config.phase_cycle]),
            "pseudopure_fidelity": self.pseudopure_fidelity,
            "sq_residual": self.sq_residual,
            "final_label": self.final.label if self.steps else None,
            "notes": list(self.notes),
            "steps": [s.to_dict() for s in self.steps],
        }


def _ket_label(index: int) -> str:
    return "|{:02b}>".format(index)


def run_pipeline(config: ExperimentConfig | None = None) -> PipelineReport:
    """Equilibrium, |00>, |01>, |s>, then the marked state of ``final_target``."""
    config = config or ExperimentConfig()
    field = config.field
    policy = config.policy
    relax = config.relax
    eq = equilibrium()
    report = PipelineReport(config)
    report.notes.append("phase cycle {} steps (design choice)".format(config.phase_cycle))
    clock = 0.0

    def record(name, label, state, target):
        factor = math.exp(-clock / relax.t1) if relax.enabled else 1.0
        fid = fidelity(state, target)
        rec = StepRecord(name, label, state, target, fid, stick_spectrum(state, field, config.monitor_angle),
                         clock, factor)
        report.steps.append(rec)
        if fid < config.fidelity_floor:
            raise PipelineError(f"step {name} ({label}) fidelity {fid:.4f} below floor {config.fidelity_floor}",
                                report)

    def relax_for(state, duration):
        nonlocal clock
        elapsed = duration + config.delay_ms * 1e-3
        clock += elapsed
        return relax_between_steps(state, elapsed, relax, eq)

    record("a", "thermal", eq.copy(), eq)

    pp = prepare_pseudopure_detailed(eq, field, config.phase_cycle, config.mode, config.dq90_ms * 1e-3, policy)
    report.pseudopure_fidelity = pp.fidelity
    report.sq_residual = pp.sq_residual
    state = relax_for(pp.state, config.dq90_ms * 1e-3)
    record("b", _ket_label(0), state, pseudopure(basis_state(DIM, 0)))

    state = selective_pulse(state, (0, 1), np.pi, config.sq180_ms * 1e-3, field, mode=config.mode, policy=policy)
    state = relax_for(state, config.sq180_ms * 1e-3)
    record("c", _ket_label(1), state, pseudopure(basis_state(DIM, 1)))

    inverse = grover_for_mode(1, config, "inverse")
    state = relax_for(grover_pulse(state, inverse, field, config.mode, policy), inverse.duration)
    record("d", "|s>", state, pseudopure(uniform_state(DIM)))

    direct = grover_for_mode(config.final_target, config, "direct")
    state = relax_for(grover_pulse(state, direct, field, config.mode, policy), direct.duration)
    record("e", _ket_label(config.final_target), state, pseudopure(basis_state(DIM, config.final_target)))
    return report


__all__ = [
    "PulseSegment", "PseudopureResult", "PipelineReport", "StepRecord", "CalibrationError", "CycleError",
    "PipelineError", "envelope", "envelope_area", "ideal_rotation", "selective_pulse", "dq_pulse",
    "calibrate_amplitude", "prepare_pseudopure", "prepare_pseudopure_detailed", "fenner_time", "grover_pulse",
    "grover_propagator", "effective_grover", "calibrate_grover_pulse", "transfer_fidelity", "run_pipeline",
]
