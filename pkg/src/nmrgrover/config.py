"""Experiment configuration: a flat ``key = value`` namespace in user units."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .dynamics import IntegrationPolicy, RelaxationParams
from .hamiltonians import StaticField, fenner_time


@dataclass
class ExperimentConfig:
    omega_q_hz: float = 10840.0
    omega_z_hz: float = 105.79e6
    omega_f_hz: float = 62.5
    t_pi2_us: float = 2000.0
    dq90_ms: float = 2.00
    sq180_ms: float = 1.50
    # None: use the computed Fenner time (1.5396 ms at the defaults)
    grover_ms: float | None = None
    t1_ms: float = 16.0
    t2_central_ms: float = 16.0
    t2_satellite_ms: float = 4.5
    mode: str = "effective"
    relaxation: bool = False
    # None: 400 steps per quadrupole period
    dt_us: float | None = None
    delay_ms: float = 0.0
    phase_cycle: int = 2
    final_target: int = 2
    monitor_angle_deg: float = 9.0
    acq_ms: float = 8.0
    acq_dt_us: float = 10.0
    fidelity_floor: float = 0.5

    def __post_init__(self):
        positive = ["omega_q_hz", "omega_z_hz", "omega_f_hz", "t_pi2_us", "dq90_ms", "sq180_ms", "t1_ms",
                    "t2_central_ms", "t2_satellite_ms", "monitor_angle_deg", "acq_ms", "acq_dt_us"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("grover_ms", "dt_us"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.delay_ms < 0:
            raise ValueError("delay_ms must be non-negative")
        if self.mode not in ("effective", "exact"):
            raise ValueError("mode must be 'effective' or 'exact'")
        if self.phase_cycle not in (2, 4):
            raise ValueError("phase_cycle must be 2 or 4")
        if self.final_target not in (1, 2):
            raise ValueError("final_target must be 1 or 2")

    # derived quantities in internal units

    @property
    def field(self) -> StaticField:
        return StaticField.from_hz(self.omega_z_hz, self.omega_q_hz)

    @property
    def omega_f(self) -> float:
        return 2 * np.pi * self.omega_f_hz

    @property
    def grover_duration(self) -> float:
        return self.grover_ms * 1e-3 if self.grover_ms is not None else fenner_time(self.omega_f)

    @property
    def relax(self) -> RelaxationParams:
        return RelaxationParams(self.t1_ms * 1e-3, self.t2_central_ms * 1e-3, self.t2_satellite_ms * 1e-3,
                                enabled=self.relaxation)

    @property
    def policy(self) -> IntegrationPolicy:
        if self.dt_us is None:
            return IntegrationPolicy.for_field(self.field)
        return IntegrationPolicy(self.dt_us * 1e-6)

    @property
    def monitor_angle(self) -> float:
        return np.deg2rad(self.monitor_angle_deg)

    # flat key = value serialisation

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, known[key].default)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_mapping(parse_flat(Path(path).read_text()))

    def to_mapping(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        lines = []
        for key, value in self.to_mapping().items():
            if value is None:
                text = "auto"
            elif isinstance(value, bool):
                text = "on" if value else "off"
            elif isinstance(value, str):
                text = value
            else:
                text = repr(value)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())


def parse_flat(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


_BOOL = {"on": True, "true": True, "yes": True, "1": True, "off": False, "false": False, "no": False, "0": False}


def _coerce(key, raw, default):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if key in ("grover_ms", "dt_us"):
        return None if text.lower() in ("auto", "none", "") else float(text)
    if isinstance(default, bool):
        try:
            return _BOOL[text.lower()]
        except KeyError:
            raise ValueError(f"{key}: expected on/off, got {raw!r}") from None
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text
