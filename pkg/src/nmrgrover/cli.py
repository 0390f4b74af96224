"""Command-line entry point: ``nmrgrover <subcommand> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, _coerce
from .experiment import STEP_NAMES, calibrate_amplitude, calibrate_grover_pulse, run_pipeline
from .search import FAMILIES, scaling_study
from .spectra import observe


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value configuration file")
    group = parser.add_argument_group("configuration overrides")
    for f in dataclasses.fields(ExperimentConfig):
        group.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar="VALUE")


def _load_config(args) -> ExperimentConfig:
    values = {}
    if args.config is not None:
        values.update(ExperimentConfig.load(args.config).to_mapping())
    for f in dataclasses.fields(ExperimentConfig):
        raw = getattr(args, "cfg_" + f.name, None)
        if raw is not None:
            values[f.name] = _coerce(f.name, raw, f.default)
    return ExperimentConfig.from_mapping(values)


def _out_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _spectrum_for(state, config: ExperimentConfig):
    return observe(state, config.field, config.monitor_angle, config.acq_ms * 1e-3, config.acq_dt_us * 1e-6,
                   config.relax if config.relaxation else None)


def cmd_pipeline(args) -> int:
    config = _load_config(args)
    report = run_pipeline(config)
    out = _out_dir(args.out)
    peaks = {}
    for rec in report.steps:
        spec = _spectrum_for(rec.state, config)
        (out / f"step_{rec.name}.csv").write_text(spec.to_csv())
        peaks[rec.name] = spec.peaks.record()
    (out / "peaks.json").write_text(_dump(peaks))
    (out / "report.json").write_text(_dump(report.to_dict()))
    summary = ", ".join(f"{r.name}:{r.label} {r.fidelity:.4f}" for r in report.steps)
    print(f"pipeline ({config.mode}) -> {out}  [{summary}]")
    return 0


_TRANSITIONS = {"01": (0, 1), "12": (1, 2), "23": (2, 3), "02": (0, 2), "13": (1, 3)}


def cmd_calibrate(args) -> int:
    config = _load_config(args)
    levels = _TRANSITIONS[args.transition]
    duration = config.t_pi2_us * 1e-6
    amp = calibrate_amplitude(levels, duration, config.field, policy=config.policy)
    record = {"transition": args.transition, "duration_s": duration, "amplitude_rad_s": amp,
              "amplitude_hz": amp / (2 * np.pi)}
    sys.stdout.write(_dump(record))
    return 0


def _load_state(path: Path, step: str | None) -> np.ndarray:
    data = json.loads(path.read_text())
    if "steps" in data:
        if step is None:
            raise ValueError("--step is required when reading a pipeline report")
        matches = [s for s in data["steps"] if s["step"] == step]
        if not matches:
            raise ValueError(f"no step {step!r} in {path}")
        data = matches[0]
    return np.array(data["state_real"]) + 1j * np.array(data["state_imag"])


def cmd_spectrum(args) -> int:
    config = _load_config(args)
    state = _load_state(args.state, args.step)
    spec = _spectrum_for(state, config)
    out = _out_dir(args.out)
    stem = args.step or args.state.stem
    (out / f"{stem}.csv").write_text(spec.to_csv())
    (out / f"{stem}_peaks.json").write_text(spec.peaks_json() + "\n")
    sys.stdout.write(spec.peaks_json() + "\n")
    return 0


def cmd_scaling(args) -> int:
    dims = [int(n) for n in args.dims.split(",")]
    result = scaling_study(dims, 2 * np.pi * args.strength_hz, args.family)
    if args.out is not None:
        out = _out_dir(args.out)
        (out / f"scaling_{args.family}.csv").write_text(result.to_csv())
        (out / f"scaling_{args.family}.json").write_text(result.to_json() + "\n")
    sys.stdout.write(result.to_json() + "\n")
    return 0


def cmd_rwa_check(args) -> int:
    config = _load_config(args)
    scales = [float(s) for s in args.scales.split(",")]
    rows = []
    for s in scales:
        field = config.field.scaled(s)
        pulse = calibrate_grover_pulse(args.target, config.omega_f, field, config.grover_duration,
                                       refine=args.refine)
        rows.append({"scale": s, "fidelity": pulse.meta["fidelity"], "dq_lab_hz": pulse.meta["dq_lab"] / (2 * np.pi)})
    infid = [1 - r["fidelity"] for r in rows]
    monotone = all(b < a for a, b in zip(infid, infid[1:]))
    sys.stdout.write(_dump({"target": args.target, "refine": args.refine, "rows": rows, "monotone": monotone}))
    if not monotone:
        print("infidelity does not decrease monotonically with omega_q", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmrgrover", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run the four-step search experiment")
    _config_flags(p)
    p.add_argument("--out", type=Path, default=Path("run"))
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("calibrate", help="calibrate a 90 degree amplitude")
    _config_flags(p)
    p.add_argument("--transition", choices=sorted(_TRANSITIONS), required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("spectrum", help="spectrum of a saved deviation matrix")
    _config_flags(p)
    p.add_argument("--state", type=Path, required=True, help="report.json or a JSON with state_real/state_imag")
    p.add_argument("--step", choices=STEP_NAMES)
    p.add_argument("--out", type=Path, default=Path("."))
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("scaling", help="time-to-target scaling with N")
    p.add_argument("--family", choices=FAMILIES, default="fenner")
    p.add_argument("--dims", default="4,16,64,256,1024")
    p.add_argument("--strength-hz", type=float, default=250.0, help="c (or E) divided by 2 pi")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("rwa-check", help="exact vs secular Grover pulse as omega_q grows")
    _config_flags(p)
    p.add_argument("--scales", default="1,3,10")
    p.add_argument("--target", type=int, choices=(1, 2), default=2)
    p.add_argument("--refine", action="store_true", help="polish each pulse numerically (slow)")
    p.set_defaults(func=cmd_rwa_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"nmrgrover {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
