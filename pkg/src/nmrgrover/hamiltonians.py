"""Hamiltonians of a spin-3/2 quadrupolar nucleus and of continuous search.

All frequencies are angular (rad/s) and hbar = 1.  RF harmonics are
described by their offset from the Zeeman carrier; the counter-rotating
terms at twice the Zeeman frequency are dropped analytically unless a lab
frame evaluation is requested explicitly (only sensible for artificially
small Zeeman frequencies).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .spin_ops import spin_matrices, uniform_state, basis_state

DIM = 4
TWO_PI = 2 * np.pi
IX, IY, IZ = spin_matrices(1.5)
IY_ABS = np.abs(IY)

# Second-order double-quantum law: effective rate = DQ_COEFFICIENT * lab**2 / omega_q.
# Least-squares fit (relative residuals) of the exact Floquet nutation rate at 17
# lab amplitudes spanning 100..500 Hz, omega_q/2pi = 10840 Hz; see
# dynamics.fit_dq_coefficient.  Second-order perturbation theory gives
# 2*sqrt(3) = 3.4641, approached by the exact rate as the amplitude shrinks.
DQ_COEFFICIENT = 3.38528
DQ_COEFFICIENT_RESIDUAL = 0.0298  # max relative deviation over the fit range

# Harmonic phase grids used for synthesis, in units of the harmonic's own phase.
_PHASE_STEPS = {1: 4, 2: 8}


@dataclass(frozen=True)
class StaticField:
    """Zeeman and quadrupole angular frequencies (rad/s)."""

    omega_z: float
    omega_q: float
    artificial: bool = False

    def __post_init__(self):
        if self.omega_z <= 0 or self.omega_q <= 0:
            raise ValueError("omega_z and omega_q must be positive")
        if not self.artificial and self.omega_z < 100 * self.omega_q:
            raise ValueError("omega_z must be >= 100 * omega_q (pass artificial=True for convergence studies)")

    @classmethod
    def from_hz(cls, omega_z_hz=105.79e6, omega_q_hz=10840.0, artificial=False):
        return cls(TWO_PI * omega_z_hz, TWO_PI * omega_q_hz, artificial)

    def scaled(self, factor: float) -> "StaticField":
        """Same Zeeman field, quadrupole splitting multiplied by ``factor``."""
        return replace(self, omega_q=self.omega_q * factor)

    @property
    def quadrupole_levels(self) -> np.ndarray:
        return self.omega_q / 4 * np.array([1.0, -1.0, -1.0, 1.0])

    @property
    def energies(self) -> np.ndarray:
        m = np.real(np.diag(IZ))
        return -self.omega_z * m + self.quadrupole_levels

    @property
    def sq_offsets(self) -> np.ndarray:
        """Offsets of the adjacent single-quantum transitions 01, 12, 23."""
        e = self.energies
        return e[:-1] - e[1:] + self.omega_z


def static_hamiltonian(field: StaticField) -> np.ndarray:
    return np.diag(field.energies).astype(complex)


@dataclass(frozen=True)
class Transition:
    levels: tuple[int, int]
    order: int
    offset: float  # rad/s relative to the Zeeman carrier


@dataclass(frozen=True)
class TransitionTable:
    transitions: tuple[Transition, ...]

    def __getitem__(self, levels) -> Transition:
        levels = tuple(sorted(levels))
        for tr in self.transitions:
            if tr.levels == levels:
                return tr
        raise KeyError(levels)

    def __iter__(self):
        return iter(self.transitions)

    def __len__(self):
        return len(self.transitions)


def transition_table(field: StaticField) -> TransitionTable:
    e = field.energies
    out = []
    for i, j in itertools.combinations(range(DIM), 2):
        order = j - i
        out.append(Transition((i, j), order, (e[i] - e[j]) / order + field.omega_z))
    return TransitionTable(tuple(out))


@dataclass(frozen=True)
class Harmonic:
    """One RF carrier component, ``2*amplitude*cos(w t + phase)`` times ``Iy``."""

    levels: tuple[int, int]
    offset: float
    amplitude: float
    phase: float = 0.0
    order: int = 1

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        i, j = self.levels
        if j - i != self.order:
            raise ValueError(f"order {self.order} does not match levels {self.levels}")


@dataclass(frozen=True)
class GroverPulse:
    harmonics: tuple[Harmonic, ...]
    duration: float
    target: int
    direction: str = "direct"
    meta: dict = dc_field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.target not in (1, 2):
            raise ValueError("target must be 1 or 2")
        if self.direction not in ("direct", "inverse"):
            raise ValueError("direction must be 'direct' or 'inverse'")
        if sum(h.order == 2 for h in self.harmonics) != 1:
            raise ValueError("a Grover pulse has exactly one double-quantum harmonic")


def _harmonics(pulse) -> tuple[Harmonic, ...]:
    return tuple(pulse.harmonics) if isinstance(pulse, GroverPulse) else tuple(pulse)


def fenner_hamiltonian(dim: int, target: int, omega_f: float) -> np.ndarray:
    """``2 omega_f i (|w><s| - |s><w|)`` on ``dim`` levels."""
    if not 0 <= target < dim:
        raise ValueError("target out of range")
    s = uniform_state(dim)
    w = basis_state(dim, target)
    return 2j * omega_f * (np.outer(w, s.conj()) - np.outer(s, w.conj()))


def fenner_time(omega_f: float, overlap: float = 0.5) -> float:
    """Time for the Fenner evolution to carry ``|s>`` onto ``|w>``.

    ``overlap`` is ``<s|w>``; the evolution is a rotation at rate
    ``2 omega_f sqrt(1 - x^2)`` through the angle ``arccos(x)``.
    """
    if omega_f <= 0:
        raise ValueError("omega_f must be positive")
    if not 0 < overlap <= 1:
        raise ValueError("overlap must lie in (0, 1]")
    if overlap == 1:
        return 0.0
    return float(np.arccos(overlap) / (2 * omega_f * np.sqrt(1 - overlap**2)))


def dq_effective_amplitude(dq_lab: float, field: StaticField) -> float:
    """Second-order double-quantum nutation rate for a lab amplitude."""
    if dq_lab > field.omega_q / 4:
        raise ValueError("double-quantum amplitude outside the perturbative regime (> omega_q/4)")
    return DQ_COEFFICIENT * dq_lab**2 / field.omega_q


def dq_lab_amplitude(dq_effective: float, field: StaticField) -> float:
    """Inverse of :func:`dq_effective_amplitude`."""
    return float(np.sqrt(dq_effective * field.omega_q / DQ_COEFFICIENT))


def _realized_transitions(target: int):
    if target == 2:
        return [(0, 2), (1, 2), (2, 3)]
    if target == 1:
        return [(0, 1), (1, 2), (1, 3)]
    if target in (0, 3):
        raise ValueError(f"target {target} requires triple-quantum excitation")
    raise ValueError(f"target {target} out of range")


def _secular_element(levels, order, amplitude, phase, dq_effective):
    i, j = levels
    if order == 1:
        return amplitude * IY[i, j] * np.exp(-1j * phase)
    # second-order path through the intermediate level; the phase enters twice
    return -dq_effective * np.exp(-2j * phase)


def grover_harmonics(target: int, omega_f: float, table: TransitionTable, dq_lab_amplitude: float,
                     direction: str = "direct", duration: float | None = None) -> GroverPulse:
    """Three-harmonic pulse whose secular Hamiltonian is the Fenner Hamiltonian.

    Single-quantum amplitudes are ``omega_f / |Iy(i,j)|``.  Phases are found
    by exhaustive search over quarter turns of each harmonic's effective
    phase (``pi/2`` steps for single-quantum, ``pi/4`` for double-quantum).
    """
    levels = _realized_transitions(target)
    goal = fenner_hamiltonian(DIM, target, omega_f)
    amps = []
    for lv in levels:
        order = lv[1] - lv[0]
        amps.append(dq_lab_amplitude if order == 2 else omega_f / IY_ABS[lv])
    grids = [np.arange(_PHASE_STEPS[lv[1] - lv[0]]) * np.pi / (_PHASE_STEPS[lv[1] - lv[0]] / 2) for lv in levels]
    for phases in itertools.product(*grids):
        h = np.zeros((DIM, DIM), dtype=complex)
        for lv, amp, ph in zip(levels, amps, phases):
            h[lv] += _secular_element(lv, lv[1] - lv[0], amp, ph, omega_f)
        h = h + h.conj().T
        if np.max(np.abs(h - goal)) < 1e-12 * max(1.0, omega_f):
            break
    else:  # pragma: no cover - the grid always contains a solution
        raise RuntimeError("no phase combination reproduces the Fenner Hamiltonian")
    harmonics = tuple(
        Harmonic(lv, table[lv].offset, amp, float(ph), lv[1] - lv[0])
        for lv, amp, ph in zip(levels, amps, phases)
    )
    pulse = GroverPulse(harmonics, duration or fenner_time(omega_f), target)
    return invert(pulse) if direction == "inverse" else pulse


def invert(pulse: GroverPulse) -> GroverPulse:
    """Reverse the sense of a Grover pulse.

    A shift of ``pi/order`` flips the sign of an order-``n`` harmonic's
    effective matrix element, so the secular Hamiltonian changes sign.
    """
    flipped = tuple(replace(h, phase=(h.phase + np.pi / h.order) % (2 * np.pi)) for h in pulse.harmonics)
    direction = "inverse" if pulse.direction == "direct" else "direct"
    return replace(pulse, harmonics=flipped, direction=direction)


def interaction_frame_rf(pulse, field: StaticField, t, rwa: bool = True) -> np.ndarray:
    """RF Hamiltonian in the interaction frame of the static Hamiltonian.

    ``t`` may be a scalar or a 1-D array; an array returns a stack of
    matrices.  With ``rwa=True`` the terms oscillating at about twice the
    Zeeman frequency are dropped; otherwise the full lab-frame
    ``2 A cos(w t + phi) Iy`` is transformed, with carrier ``w = -omega_z +
    offset``.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    h = np.zeros((t.size, DIM, DIM), dtype=complex)
    e = field.energies
    delta = field.sq_offsets
    for hm in _harmonics(pulse):
        if hm.amplitude == 0:
            continue
        for i in range(DIM - 1):
            if rwa:
                term = hm.amplitude * IY[i, i + 1] * np.exp(-1j * hm.phase) * np.exp(1j * (delta[i] - hm.offset) * t)
            else:
                carrier = -field.omega_z + hm.offset
                term = 2 * hm.amplitude * np.cos(carrier * t + hm.phase) * IY[i, i + 1] * np.exp(1j * (e[i] - e[i + 1]) * t)
            h[:, i, i + 1] += term
    h = h + np.conj(np.swapaxes(h, 1, 2))
    return h[0] if scalar else h


def secular_average(pulse, field: StaticField, dq_effective: float | None = None) -> np.ndarray:
    """Time-independent part of the interaction-frame RF Hamiltonian.

    The double-quantum element is supplied as ``dq_effective`` (rad/s);
    when omitted it is estimated from the lab amplitude with
    :func:`dq_effective_amplitude`.
    """
    table = transition_table(field)
    h = np.zeros((DIM, DIM), dtype=complex)
    for hm in _harmonics(pulse):
        nominal = table[hm.levels].offset
        if abs(hm.offset - nominal) > 1e-6 * field.omega_q:
            raise ValueError(f"harmonic on {hm.levels} is off resonance by {hm.offset - nominal:.6g} rad/s")
        if hm.amplitude == 0:
            continue
        if hm.order > 2:
            raise ValueError("triple-quantum harmonics are not supported")
        eff = dq_effective
        if hm.order == 2 and eff is None:
            eff = dq_effective_amplitude(hm.amplitude, field)
        h[hm.levels] += _secular_element(hm.levels, hm.order, hm.amplitude, hm.phase, eff)
    return h + h.conj().T


def _harmonic_frame(hm: Harmonic, field: StaticField) -> np.ndarray:
    """Level energies of the frame in which a lone harmonic is static."""
    delta = field.sq_offsets
    e = np.zeros(DIM)
    for i in range(DIM - 1):
        e[i + 1] = e[i] - (hm.offset - delta[i])
    return e


def stark_shifts(pulse, field: StaticField) -> np.ndarray:
    """Second-order level shifts (rad/s) from the non-resonant couplings.

    Each harmonic is treated in its own rotating frame; couplings between
    levels that the harmonic connects resonantly are excluded.  Cross terms
    between harmonics oscillate and are neglected.
    """
    shifts = np.zeros(DIM)
    for hm in _harmonics(pulse):
        e = _harmonic_frame(hm, field)
        c = hm.amplitude * IY_ABS
        for i in range(DIM):
            for j in (i - 1, i + 1):
                if 0 <= j < DIM:
                    gap = e[j] - e[i]
                    if abs(gap) > 1e-9 * field.omega_q:
                        shifts[i] += c[i, j] ** 2 / gap
    return shifts


def compensate_offsets(pulse: GroverPulse, field: StaticField) -> GroverPulse:
    """Move each carrier onto the Stark-shifted resonance of its transition."""
    table = transition_table(field)
    shifts = stark_shifts(pulse, field)
    out = []
    for hm in pulse.harmonics:
        i, j = hm.levels
        out.append(replace(hm, offset=table[hm.levels].offset + (shifts[i] - shifts[j]) / hm.order))
    return replace(pulse, harmonics=tuple(out))


def frame_energies(pulse, field: StaticField) -> np.ndarray:
    """Level energies of the frame in which every harmonic of ``pulse`` is static.

    Zero for on-resonance harmonics.  Harmonics must form a tree over the
    levels they touch; levels not touched keep energy zero.
    """
    table = transition_table(field)
    e = np.zeros(DIM)
    known = {}
    edges = [(hm.levels, hm.order * (hm.offset - table[hm.levels].offset)) for hm in _harmonics(pulse)]
    start = edges[0][0][0] if edges else 0
    known[start] = 0.0
    changed = True
    while changed:
        changed = False
        for (a, b), gap in edges:
            if a in known and b not in known:
                known[b] = known[a] - gap
                changed = True
            elif b in known and a not in known:
                known[a] = known[b] + gap
                changed = True
    for k, v in known.items():
        e[k] = v
    return e - e.mean()
