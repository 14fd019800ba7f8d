"""Dynamic model of a three-phase 6/4 switched reluctance motor.

Phase flux linkage is the integrated electrical state; currents follow from the
rotor-angle dependent inductance. Torque comes from the coenergy of each
(magnetically linear) phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError


@dataclass(frozen=True)
class MachineParams:
    """Electrical and mechanical description of the machine.

    Angles are in mechanical degrees. ``pole_overlap_angles`` gives the
    start of the inductance rise, start of the flat top, start of the fall and
    end of the fall within one rotor pole pitch. ``fringe_width`` rounds the
    trapezoid corners (moving average of that width); 0 gives the sharp
    trapezoid.
    """

    n_phases: int = 3
    n_rotor_poles: int = 4
    aligned_inductance: float = 0.060
    unaligned_inductance: float = 0.008
    phase_resistance: float = 1.3
    pole_overlap_angles: tuple = (0.0, 30.0, 45.0, 75.0)
    fringe_width: float = 16.0
    inertia: float = 0.0013
    viscous_friction: float = 0.01
    dc_link_voltage: float = 300.0
    rated_current: float = 12.0

    def __post_init__(self):
        object.__setattr__(self, "pole_overlap_angles", tuple(float(a) for a in self.pole_overlap_angles))
        if self.n_phases != 3:
            raise ConfigError("n_phases", "only three-phase machines are modelled")
        if self.n_rotor_poles != 4:
            raise ConfigError("n_rotor_poles", "only the 6/4 geometry is modelled")
        for name in (
            "aligned_inductance",
            "unaligned_inductance",
            "phase_resistance",
            "inertia",
            "dc_link_voltage",
            "rated_current",
        ):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(name, f"must be a positive finite number, got {v!r}")
        if not (math.isfinite(self.viscous_friction) and self.viscous_friction >= 0):
            raise ConfigError("viscous_friction", "must be >= 0")
        if not self.aligned_inductance > self.unaligned_inductance:
            raise ConfigError(
                "aligned_inductance",
                f"must exceed unaligned_inductance ({self.aligned_inductance} <= {self.unaligned_inductance})",
            )
        a = self.pole_overlap_angles
        if len(a) != 4:
            raise ConfigError("pole_overlap_angles", "needs exactly four angles")
        if not all(x < y for x, y in zip(a, a[1:])):
            raise ConfigError("pole_overlap_angles", f"must be strictly increasing, got {a}")
        if a[0] < 0 or a[3] > self.pole_pitch_deg:
            raise ConfigError("pole_overlap_angles", f"must lie within one pole pitch [0, {self.pole_pitch_deg}]")
        if not (0 <= self.fringe_width < min(a[1] - a[0], a[3] - a[2])):
            raise ConfigError("fringe_width", "must be >= 0 and shorter than both inductance ramps")

    @property
    def pole_pitch_deg(self):
        return 360.0 / self.n_rotor_poles

    @property
    def stroke_deg(self):
        return 360.0 / (self.n_phases * self.n_rotor_poles)

    @property
    def pole_pitch(self):
        return math.radians(self.pole_pitch_deg)

    @property
    def stroke(self):
        return math.radians(self.stroke_deg)

    @property
    def strokes_per_rev(self):
        return self.n_phases * self.n_rotor_poles

    def packed(self):
        mp = np.zeros(kernels.M_SIZE)
        mp[kernels.M_LU] = self.unaligned_inductance
        mp[kernels.M_LA] = self.aligned_inductance
        mp[kernels.M_R] = self.phase_resistance
        mp[kernels.M_J] = self.inertia
        mp[kernels.M_B] = self.viscous_friction
        mp[kernels.M_VDC] = self.dc_link_voltage
        mp[kernels.M_A0 : kernels.M_A3 + 1] = np.radians(self.pole_overlap_angles)
        mp[kernels.M_PITCH] = self.pole_pitch
        mp[kernels.M_STROKE] = self.stroke
        mp[kernels.M_NPH] = self.n_phases
        mp[kernels.M_FRINGE] = math.radians(self.fringe_width)
        return mp


@dataclass(frozen=True)
class LoadSpec:
    load_torque: float = 4.0
    target_speed: float = 500.0  # rpm

    def __post_init__(self):
        if not (math.isfinite(self.load_torque) and self.load_torque >= 0):
            raise ConfigError("load_torque", "must be >= 0")
        if not (math.isfinite(self.target_speed) and self.target_speed > 0):
            raise ConfigError("target_speed", "must be > 0")

    @property
    def omega_ref(self):
        return self.target_speed * 2.0 * math.pi / 60.0


@dataclass(frozen=True)
class MachineState:
    theta: float = 0.0
    omega: float = 0.0
    phase_currents: tuple = (0.0, 0.0, 0.0)
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phase_currents", tuple(float(i) for i in self.phase_currents))
        if any(i < 0 for i in self.phase_currents):
            raise ValueError("phase currents must be >= 0")

    def folded_theta(self, params):
        return kernels.fold(self.theta, params.pole_pitch)


_packed_cache: dict = {}


def _mp(params):
    mp = _packed_cache.get(params)
    if mp is None:
        mp = _packed_cache[params] = params.packed()
    return mp


def phase_inductance(params, theta_phase):
    """Inductance (H) of one phase at a folded phase angle (rad)."""
    mp = _mp(params)
    if np.ndim(theta_phase) == 0:
        return kernels.inductance(mp, kernels.fold(float(theta_phase), params.pole_pitch))
    th = np.mod(np.asarray(theta_phase, dtype=float), params.pole_pitch)
    return np.array([kernels.inductance(mp, x) for x in th.ravel()]).reshape(th.shape)


def inductance_slope(params, theta_phase):
    mp = _mp(params)
    return kernels.dinductance(mp, kernels.fold(float(theta_phase), params.pole_pitch))


def phase_torque(params, theta_phase, i):
    """Torque 0.5 i^2 dL/dtheta of one phase."""
    if i < 0:
        raise ValueError("phase current must be >= 0")
    return 0.5 * i * i * inductance_slope(params, theta_phase)


def total_torque(params, state):
    """Sum of the phase torques, phase k shifted back by k strokes."""
    currents = np.asarray(state.phase_currents, dtype=float)
    return kernels.electromagnetic_torque(_mp(params), float(state.theta), currents)


def torque_per_amp(params, current, theta_phase=None):
    """Central secant dT/di of one phase at ``current`` (default: mid rising ramp)."""
    if theta_phase is None:
        a = params.pole_overlap_angles
        theta_phase = math.radians(0.5 * (a[0] + a[1]))
    h = 0.1 * current
    return (phase_torque(params, theta_phase, current + h) - phase_torque(params, theta_phase, current - h)) / (2 * h)


def step_dynamics(params, state, phase_voltages, load, dt, locked=False):
    """Advance ``state`` by one RK4 step of length ``dt``.

    ``locked`` holds the rotor still (mechanical equations frozen).
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    if not (math.isfinite(state.theta) and math.isfinite(state.omega) and all(map(math.isfinite, state.phase_currents))):
        raise ValueError("state contains non-finite values")
    mp = _mp(params)
    lam = np.array(
        [
            i * kernels.inductance(mp, kernels.phase_angle(mp, state.theta, k))
            for k, i in enumerate(state.phase_currents)
        ]
    )
    v = np.asarray(phase_voltages, dtype=float)
    th, om, lam = kernels.rk4_step(mp, float(state.theta), float(state.omega), lam, v, float(load.load_torque), float(dt), locked)
    currents = tuple(lam[k] / kernels.inductance(mp, kernels.phase_angle(mp, th, k)) for k in range(params.n_phases))
    return MachineState(theta=th, omega=om, phase_currents=currents, time=state.time + dt)
