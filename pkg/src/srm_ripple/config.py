"""Run configuration: one INI file, one section per package module.

Every default lives here and in ``configs/default.ini``; the two are kept
identical by a test.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .drive import CommutationSpec, HysteresisSpec, PiController, run_closed_loop, steady_current_estimate
from .errors import ConfigError
from .fuzzy import SHAPES
from .machine import LoadSpec, MachineParams


@dataclass(frozen=True)
class SimulationSettings:
    dt: float = 1e-5
    decimation: int = 1
    settle_time: float = 0.75
    initial_integrator: float | None = None  # None: steady-state estimate

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("dt", "must be > 0")
        if self.dt > 1e-4:
            raise ConfigError("dt", "steps above 1e-4 s do not resolve hysteresis switching")
        if self.decimation < 1:
            raise ConfigError("decimation", "must be >= 1")
        if not self.settle_time >= 0:
            raise ConfigError("settle_time", "must be >= 0")


@dataclass(frozen=True)
class FuzzySettings:
    shape: str = "triangular"
    iref_max: float = 12.0
    lse_damping: float = 1e-8

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigError("shape", f"unknown shape {self.shape!r}; choose from {', '.join(SHAPES)}")
        if not self.iref_max > 0:
            raise ConfigError("iref_max", "must be > 0")
        if not self.lse_damping >= 0:
            raise ConfigError("lse_damping", "must be >= 0")


@dataclass(frozen=True)
class TrainingSettings:
    max_iters: int = 10
    ripple_limit: float = 0.5  # % of mean torque, stroke harmonic
    gain: float | None = None  # A per N m; None: 1 / (dT/di) at the operating point
    bins: int = 64

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters", "must be >= 1")
        if not self.ripple_limit >= 0:
            raise ConfigError("ripple_limit", "must be >= 0")
        if self.gain is not None and not self.gain > 0:
            raise ConfigError("gain", "must be > 0")
        if self.bins < 4:
            raise ConfigError("bins", "must be >= 4")


@dataclass(frozen=True)
class SpectrumSettings:
    revolutions: int = 4
    samples_per_rev: int = 4096
    n_max: int = 96

    def __post_init__(self):
        if self.revolutions < 2:
            raise ConfigError("revolutions", "ripple extraction needs >= 2 revolutions")
        if self.samples_per_rev < 2 * self.n_max + 2:
            raise ConfigError("samples_per_rev", "too few samples for n_max")


@dataclass(frozen=True)
class RunConfig:
    machine: MachineParams = field(default_factory=MachineParams)
    load: LoadSpec = field(default_factory=LoadSpec)
    commutation: CommutationSpec = field(default_factory=CommutationSpec)
    pi_gains: tuple = (0.5, 4.0)
    pi_limits: tuple = (0.0, 12.0)
    hysteresis: HysteresisSpec = field(default_factory=HysteresisSpec)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    fuzzy: FuzzySettings = field(default_factory=FuzzySettings)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    spectrum: SpectrumSettings = field(default_factory=SpectrumSettings)
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        try:
            self.commutation.validate_for(self.machine)
        except ConfigError as exc:
            raise ConfigError(f"drive_control.{exc.field}", str(exc).split(": ", 1)[1]) from None
        self.controller()

    @property
    def revolution_period(self):
        return 60.0 / self.load.target_speed

    @property
    def duration(self):
        # a small margin keeps the analysed revolutions clear of the settle time
        return self.simulation.settle_time + (self.spectrum.revolutions + 0.25) * self.revolution_period

    def controller(self):
        integ = self.simulation.initial_integrator
        if integ is None:
            integ = min(steady_current_estimate(self.machine, self.load), self.pi_limits[1])
        try:
            return PiController(kp=self.pi_gains[0], ki=self.pi_gains[1], integrator_state=integ, output_limits=tuple(self.pi_limits))
        except ConfigError as exc:
            raise ConfigError(f"drive_control.{exc.field}", str(exc).split(": ", 1)[1]) from None

    def simulate(self, compensator=None, duration=None):
        return run_closed_loop(
            self.machine,
            self.commutation,
            self.controller(),
            self.hysteresis,
            self.load,
            compensator=compensator,
            duration=self.duration if duration is None else duration,
            dt=self.simulation.dt,
            decimation=self.simulation.decimation,
        )

    def analysis_kwargs(self):
        return dict(
            revolutions=self.spectrum.revolutions,
            settle_time=self.simulation.settle_time,
            samples_per_rev=self.spectrum.samples_per_rev,
            n_max=self.spectrum.n_max,
        )

    def with_overrides(self, shape=None, max_iters=None, ripple_limit=None, output_dir=None):
        fz, tr = self.fuzzy, self.training
        if shape is not None:
            fz = _section("neurofuzzy", FuzzySettings, **{**fz.__dict__, "shape": shape})
        if max_iters is not None or ripple_limit is not None:
            kw = dict(tr.__dict__)
            if max_iters is not None:
                kw["max_iters"] = max_iters
            if ripple_limit is not None:
                kw["ripple_limit"] = ripple_limit
            tr = _section("ripple_trainer", TrainingSettings, **kw)
        return replace(self, fuzzy=fz, training=tr, output_dir=self.output_dir if output_dir is None else output_dir)


def _section(name, cls, **kw):
    try:
        return cls(**kw)
    except ConfigError as exc:
        raise ConfigError(f"{name}.{exc.field}", str(exc).split(": ", 1)[1]) from None


def _angles(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _auto(text, conv=float):
    return None if text.strip().lower() in ("auto", "") else conv(text)


_SCHEMA = {
    "srm_model": {
        "n_phases": int,
        "n_rotor_poles": int,
        "aligned_inductance": float,
        "unaligned_inductance": float,
        "phase_resistance": float,
        "pole_overlap_angles": _angles,
        "fringe_width": float,
        "inertia": float,
        "viscous_friction": float,
        "dc_link_voltage": float,
        "rated_current": float,
        "load_torque": float,
        "target_speed": float,
    },
    "drive_control": {
        "turn_on_angle": float,
        "turn_off_angle": float,
        "kp": float,
        "ki": float,
        "pi_output_min": float,
        "pi_output_max": float,
        "initial_integrator": _auto,
        "hysteresis_band": float,
        "dt": float,
        "decimation": int,
        "settle_time": float,
    },
    "neurofuzzy": {"shape": str, "iref_max": float, "lse_damping": float},
    "ripple_trainer": {"max_iters": int, "ripple_limit": float, "gain": _auto, "bins": int},
    "spectrum": {"revolutions": int, "samples_per_rev": int, "n_max": int},
    "cli": {"output_dir": str, "seed": int},
}


def _fmt(v):
    if v is None:
        return "auto"
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_sections(cfg):
    m, ld = cfg.machine, cfg.load
    return {
        "srm_model": {
            "n_phases": m.n_phases,
            "n_rotor_poles": m.n_rotor_poles,
            "aligned_inductance": m.aligned_inductance,
            "unaligned_inductance": m.unaligned_inductance,
            "phase_resistance": m.phase_resistance,
            "pole_overlap_angles": m.pole_overlap_angles,
            "fringe_width": m.fringe_width,
            "inertia": m.inertia,
            "viscous_friction": m.viscous_friction,
            "dc_link_voltage": m.dc_link_voltage,
            "rated_current": m.rated_current,
            "load_torque": ld.load_torque,
            "target_speed": ld.target_speed,
        },
        "drive_control": {
            "turn_on_angle": cfg.commutation.turn_on_angle,
            "turn_off_angle": cfg.commutation.turn_off_angle,
            "kp": cfg.pi_gains[0],
            "ki": cfg.pi_gains[1],
            "pi_output_min": cfg.pi_limits[0],
            "pi_output_max": cfg.pi_limits[1],
            "initial_integrator": cfg.simulation.initial_integrator,
            "hysteresis_band": cfg.hysteresis.band,
            "dt": cfg.simulation.dt,
            "decimation": cfg.simulation.decimation,
            "settle_time": cfg.simulation.settle_time,
        },
        "neurofuzzy": dict(cfg.fuzzy.__dict__),
        "ripple_trainer": dict(cfg.training.__dict__),
        "spectrum": dict(cfg.spectrum.__dict__),
        "cli": {"output_dir": cfg.output_dir, "seed": cfg.seed},
    }


def dumps(cfg):
    lines = []
    for name, values in to_sections(cfg).items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in values.items())
        lines.append("")
    return "\n".join(lines)


def save(cfg, path):
    path = Path(path)
    path.write_text(dumps(cfg))
    return path


def from_sections(sections):
    """Build a RunConfig from {section: {key: raw string}}; missing keys keep defaults."""
    base = to_sections(RunConfig())
    parsed = {}
    for name, values in sections.items():
        if name not in _SCHEMA:
            raise ConfigError(name, "unknown section")
        for key, raw in values.items():
            if key not in _SCHEMA[name]:
                raise ConfigError(f"{name}.{key}", "unknown key")
            try:
                parsed.setdefault(name, {})[key] = _SCHEMA[name][key](raw)
            except ValueError as exc:
                raise ConfigError(f"{name}.{key}", f"cannot parse {raw!r} ({exc})") from None
    merged = {name: {**base[name], **parsed.get(name, {})} for name in base}

    sm = dict(merged["srm_model"])
    load_kw = {"load_torque": sm.pop("load_torque"), "target_speed": sm.pop("target_speed")}
    machine = _section("srm_model", MachineParams, **sm)
    load = _section("srm_model", LoadSpec, **load_kw)
    dc = merged["drive_control"]
    comm = _section("drive_control", CommutationSpec, turn_on_angle=dc["turn_on_angle"], turn_off_angle=dc["turn_off_angle"])
    hyst = _section("drive_control", HysteresisSpec, band=dc["hysteresis_band"])
    sim = _section(
        "drive_control",
        SimulationSettings,
        dt=dc["dt"],
        decimation=dc["decimation"],
        settle_time=dc["settle_time"],
        initial_integrator=dc["initial_integrator"],
    )
    return RunConfig(
        machine=machine,
        load=load,
        commutation=comm,
        pi_gains=(dc["kp"], dc["ki"]),
        pi_limits=(dc["pi_output_min"], dc["pi_output_max"]),
        hysteresis=hyst,
        simulation=sim,
        fuzzy=_section("neurofuzzy", FuzzySettings, **merged["neurofuzzy"]),
        training=_section("ripple_trainer", TrainingSettings, **merged["ripple_trainer"]),
        spectrum=_section("spectrum", SpectrumSettings, **merged["spectrum"]),
        output_dir=merged["cli"]["output_dir"],
        seed=merged["cli"]["seed"],
    )


def loads(text):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", f"unreadable: {exc}") from None
    return from_sections({s: dict(cp[s]) for s in cp.sections()})


def load(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return loads(path.read_text())
