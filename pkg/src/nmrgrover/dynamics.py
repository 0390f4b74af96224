"""Propagation of state vectors and deviation matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .hamiltonians import DIM, Harmonic, StaticField, interaction_frame_rf, transition_table
from .spin_ops import conjugate, expm_generator, fidelity


@dataclass(frozen=True)
class RelaxationParams:
    """Phenomenological relaxation times in seconds."""

    t1: float = 16e-3
    t2_central: float = 16e-3
    t2_satellite: float = 4.5e-3
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and min(self.t1, self.t2_central, self.t2_satellite) <= 0:
            raise ValueError("relaxation times must be positive")

    def t2_matrix(self, dim: int = DIM) -> np.ndarray:
        """T2 of each coherence; only the central 1<->2 line uses ``t2_central``."""
        t2 = np.full((dim, dim), self.t2_satellite)
        mid = dim // 2
        t2[mid - 1, mid] = t2[mid, mid - 1] = self.t2_central
        return t2


@dataclass(frozen=True)
class IntegrationPolicy:
    dt: float
    scheme: str = "midpoint"
    convergence_check: bool = False
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.scheme != "midpoint":
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @classmethod
    def for_field(cls, field: StaticField, samples_per_period: int = 400, **kw) -> "IntegrationPolicy":
        """Step of ``1/samples_per_period`` of a quadrupole period (0.23 us at 10.84 kHz)."""
        return cls(dt=2 * np.pi / (field.omega_q * samples_per_period), **kw)

    def max_dt(self, field: StaticField) -> float:
        # fastest interaction-frame term: a satellite harmonic acting on the opposite satellite
        return 1 / (50 * field.omega_q / (2 * np.pi))


class ConvergenceError(RuntimeError):
    def __init__(self, message, coarse, fine):
        super().__init__(message)
        self.coarse = coarse
        self.fine = fine


def apply(state: np.ndarray, u: np.ndarray) -> np.ndarray:
    state = np.asarray(state)
    if state.shape[0] != u.shape[0]:
        raise ValueError(f"dimension mismatch: state {state.shape} vs operator {u.shape}")
    return u @ state if state.ndim == 1 else conjugate(u, state)


def propagate_const(state: np.ndarray, h: np.ndarray, t: float) -> np.ndarray:
    h = np.asarray(h)
    if np.asarray(state).shape[0] != h.shape[0]:
        raise ValueError("dimension mismatch")
    return apply(state, expm_generator(h, t))


def constant_sampler(h: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    h = np.asarray(h, dtype=complex)
    return lambda t: np.broadcast_to(h, (np.size(t),) + h.shape)


def _ordered_product(us: np.ndarray) -> np.ndarray:
    """``us[n-1] @ ... @ us[1] @ us[0]`` by pairwise reduction."""
    while len(us) > 1:
        tail = us[-1:] if len(us) % 2 else None
        if tail is not None:
            us = us[:-1]
        us = us[1::2] @ us[0::2]
        if tail is not None:
            us = np.concatenate([us, tail])
    return us[0]


def time_ordered_propagator(sampler, t0: float, t1: float, dt: float) -> np.ndarray:
    """Product of midpoint exponentials over ``[t0, t1]``.

    ``sampler`` maps a 1-D array of times to a stack of Hermitian matrices.
    The step is shrunk so that an integer number of steps spans the interval.
    """
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    n = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    step = (t1 - t0) / n
    t_mid = t0 + (np.arange(n) + 0.5) * step
    h = np.asarray(sampler(t_mid))
    w, v = np.linalg.eigh(h)
    us = (v * np.exp(-1j * w * step)[:, None, :]) @ np.conj(np.swapaxes(v, 1, 2))
    return _ordered_product(us)


def propagate_timedep(state, sampler, t0: float, t1: float, policy: IntegrationPolicy):
    u = time_ordered_propagator(sampler, t0, t1, policy.dt)
    out = apply(state, u)
    if policy.convergence_check:
        fine = apply(state, time_ordered_propagator(sampler, t0, t1, policy.dt / 2))
        change = 1 - fidelity(out, fine)
        if abs(change) >= policy.tolerance:
            raise ConvergenceError(f"dt halving changed the final-state fidelity by {change:.3e}", out, fine)
    return out


def relax_between_steps(state: np.ndarray, duration: float, params: RelaxationParams,
                        equilibrium: np.ndarray) -> np.ndarray:
    """Populations recover toward ``equilibrium`` with T1; coherences decay with their T2."""
    state = np.asarray(state, dtype=complex)
    if not params.enabled or duration == 0:
        return state.copy()
    dim = state.shape[0]
    decay = np.exp(-duration / params.t2_matrix(dim))
    out = state * decay
    f1 = math.exp(-duration / params.t1)
    eq = np.real(np.diag(equilibrium))
    np.fill_diagonal(out, eq + (np.real(np.diag(state)) - eq) * f1)
    return out


def dq_nutation_rate(dq_lab: float, field: StaticField, levels=(0, 2), steps: int = 2048) -> float:
    """Exact double-quantum nutation rate (rad/s) of a lone resonant harmonic.

    The rotating-wave interaction-frame Hamiltonian of one harmonic is
    periodic with period ``8 pi / omega_q``; the rate is half the splitting
    of the two Floquet quasi-energies whose states live on ``levels``.
    """
    hm = Harmonic(tuple(levels), transition_table(field)[levels].offset, dq_lab, 0.0, 2)
    period = 8 * np.pi / field.omega_q
    u = time_ordered_propagator(lambda t: interaction_frame_rf([hm], field, t), 0.0, period, period / steps)
    vals, vecs = np.linalg.eig(u)
    weight = np.abs(vecs[levels[0]]) ** 2 + np.abs(vecs[levels[1]]) ** 2
    a, b = np.argsort(weight)[-2:]
    split = abs(np.angle(vals[a] / vals[b])) / period
    return float(split / 2)


def fit_dq_coefficient(amplitudes, field: StaticField, levels=(0, 2)):
    """Least-squares coefficient of ``rate = k * lab**2 / omega_q`` (relative residuals).

    Returns ``(k, max_relative_residual, exact_rates)``.
    """
    amps = np.asarray(amplitudes, dtype=float)
    rates = np.array([dq_nutation_rate(a, field, levels) for a in amps])
    basis = amps**2 / field.omega_q
    # minimise sum((k*basis - rate)/rate)^2
    ratio = basis / rates
    k = float(np.sum(ratio) / np.sum(ratio**2))
    resid = np.abs(k * basis - rates) / rates
    return k, float(resid.max()), rates


def is_policy_compliant(policy: IntegrationPolicy, field: StaticField) -> bool:
    return policy.dt <= policy.max_dt(field)


__all__ = [
    "RelaxationParams", "IntegrationPolicy", "ConvergenceError", "apply", "propagate_const",
    "constant_sampler", "time_ordered_propagator", "propagate_timedep", "relax_between_steps",
    "dq_nutation_rate", "fit_dq_coefficient", "is_policy_compliant",
]
