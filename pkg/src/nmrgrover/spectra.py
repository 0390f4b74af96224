"""Monitoring pulse, FID synthesis and peak integration.

Line order throughout is 01, 12, 23, i.e. offsets ``+omega_q/2, 0,
-omega_q/2``.  Integrals are normalised so that the equilibrium deviation
``Iz`` gives ``(3/4, 1, 3/4)``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .dynamics import RelaxationParams
from .hamiltonians import DIM, IY, StaticField
from .spin_ops import expm_generator, raising

LINES = ("01", "12", "23")
DEFAULT_MONITOR = np.pi / 20
IPLUS = raising(1.5)


@dataclass(frozen=True)
class PeakLine:
    line: str
    offset: float  # rad/s
    integral: float
    t2: float | None = None


@dataclass(frozen=True)
class PeakTable:
    lines: tuple[PeakLine, ...]

    @property
    def integrals(self) -> np.ndarray:
        return np.array([p.integral for p in self.lines])

    @property
    def offsets(self) -> np.ndarray:
        return np.array([p.offset for p in self.lines])

    def record(self) -> dict:
        return {
            "lines": [
                {"line": p.line, "offset_hz": p.offset / (2 * np.pi), "integral": p.integral, "t2_s": p.t2}
                for p in self.lines
            ]
        }


def _line_offsets(omega_q: float) -> np.ndarray:
    return np.array([omega_q / 2, 0.0, -omega_q / 2])


def monitor_pulse(state: np.ndarray, angle: float = DEFAULT_MONITOR) -> np.ndarray:
    """Hard non-selective rotation ``exp(-i angle Iy)`` of the deviation."""
    if abs(angle) > np.pi / 10 + 1e-12:
        raise ValueError("monitor angle must be small (<= pi/10) for a linear readout")
    u = expm_generator(IY, angle)
    return u @ state @ u.conj().T


def stick_spectrum(state: np.ndarray, field: StaticField | None = None,
                   angle: float = DEFAULT_MONITOR) -> PeakTable:
    """First-order line intensities after a small monitoring pulse.

    Populations contribute ``|Iy(i,j)|^2 (p_i - p_j)``.  Single-quantum
    coherences already present add their own signal, scaled by
    ``1 / (2 angle)`` relative to the population terms.
    """
    rho = np.asarray(state, dtype=complex)
    first = rho - 1j * angle * (IY @ rho - rho @ IY)
    omega_q = field.omega_q if field is not None else 1.0
    offsets = _line_offsets(omega_q)
    lines = []
    for k, name in enumerate(LINES):
        amp = IPLUS[k, k + 1] * first[k + 1, k] / (2 * angle)
        lines.append(PeakLine(name, float(offsets[k]), float(np.real(amp))))
    return PeakTable(tuple(lines))


@dataclass(frozen=True)
class Fid:
    dt: float
    samples: np.ndarray
    omega_q: float
    t2: tuple[float | None, float | None, float | None] = (None, None, None)
    scale: float = 1.0  # integrals are divided by this

    def __post_init__(self):
        if len(self.samples) < 2 or self.dt <= 0:
            raise ValueError("a FID needs at least two samples and dt > 0")


def synthesize_fid(state: np.ndarray, field: StaticField, duration: float = 8e-3, dt: float = 10e-6,
                   relax: RelaxationParams | None = None, scale: float = 1.0) -> Fid:
    """``s(t) = Tr(rho(t) I+)`` under the quadrupole Hamiltonian in the rotating frame."""
    if field.omega_q / 2 >= np.pi / dt:
        raise ValueError("dt too coarse: satellites at +-omega_q/2 would alias")
    n = int(round(duration / dt))
    t = np.arange(n) * dt
    q = field.quadrupole_levels
    rho = np.asarray(state, dtype=complex)
    t2s = relax.t2_matrix() if relax is not None and relax.enabled else None
    sig = np.zeros(n, dtype=complex)
    line_t2 = []
    for k in range(DIM - 1):
        amp = IPLUS[k, k + 1] * rho[k + 1, k]
        tone = amp * np.exp(-1j * (q[k + 1] - q[k]) * t)
        if t2s is not None:
            tone = tone * np.exp(-t / t2s[k + 1, k])
            line_t2.append(float(t2s[k + 1, k]))
        else:
            line_t2.append(None)
        sig += tone
    return Fid(dt, sig, field.omega_q, tuple(line_t2), scale)


@dataclass(frozen=True)
class Spectrum:
    freqs_hz: np.ndarray
    values: np.ndarray
    peaks: PeakTable

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["offset_hz", "real", "imag"])
        for f, v in zip(self.freqs_hz, self.values):
            writer.writerow([repr(float(f)), repr(float(v.real)), repr(float(v.imag))])
        return buf.getvalue()

    def peaks_json(self) -> str:
        return json.dumps(self.peaks.record(), indent=2, sort_keys=True)


def spectrum(fid: Fid, zero_fill: int = 2, phase: float = 0.0) -> Spectrum:
    """Fourier transform and integrate the three lines.

    The first point is halved and the FID zero-filled (at least twofold) so
    that the absorption tails of lines truncated by the acquisition window
    alternate in sign and cancel.  Each line is then integrated over the bins
    closer to it than to any other line (half the line spacing,
    ``omega_q/4``, on either side).  With bins scaled by ``1/n`` an isolated
    line integrates to half its initial amplitude, so the real part is
    doubled.  Raises if any line is broader than a third of its window.
    """
    if zero_fill < 2:
        raise ValueError("zero_fill must be at least 2")
    x = np.array(fid.samples, dtype=complex) * np.exp(-1j * phase)
    x[0] /= 2
    n = len(x) * zero_fill
    values = np.fft.fftshift(np.fft.fft(x, n)) / n
    freqs = np.fft.fftshift(np.fft.fftfreq(n, fid.dt))
    half = fid.omega_q / 4 / (2 * np.pi)
    for t2 in fid.t2:
        if t2 is not None and 3 / (np.pi * t2) > half:
            raise ValueError("peak windows overlap: lines broader than a third of the window")
    offsets = _line_offsets(fid.omega_q)
    lines = []
    for k, name in enumerate(LINES):
        mask = np.abs(freqs - offsets[k] / (2 * np.pi)) < half
        total = 2 * values[mask].real.sum() / fid.scale
        lines.append(PeakLine(name, float(offsets[k]), float(total), fid.t2[k]))
    return Spectrum(freqs, values, PeakTable(tuple(lines)))


def observe(state: np.ndarray, field: StaticField, angle: float = DEFAULT_MONITOR, duration: float = 8e-3,
            dt: float = 10e-6, relax: RelaxationParams | None = None, zero_fill: int = 2) -> Spectrum:
    """Monitoring pulse, acquisition and transform, normalised to the stick convention."""
    after = monitor_pulse(state, angle)
    fid = synthesize_fid(after, field, duration, dt, relax, scale=2 * np.sin(angle))
    return spectrum(fid, zero_fill)


def peak_fwhm(spec: Spectrum, offset_hz: float, search_hz: float) -> float:
    """Full width at half maximum (Hz) of the absorption peak nearest ``offset_hz``."""
    f = spec.freqs_hz
    y = np.real(spec.values)
    sel = np.flatnonzero(np.abs(f - offset_hz) < search_hz)
    k = sel[np.argmax(np.abs(y[sel]))]
    sign = np.sign(y[k])
    y = sign * y
    half = y[k] / 2
    lo = k
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = k
    while hi < len(y) - 1 and y[hi] > half:
        hi += 1
    left = f[lo] + (half - y[lo]) * (f[lo + 1] - f[lo]) / (y[lo + 1] - y[lo])
    right = f[hi - 1] + (half - y[hi - 1]) * (f[hi] - f[hi - 1]) / (y[hi] - y[hi - 1])
    return float(right - left)
