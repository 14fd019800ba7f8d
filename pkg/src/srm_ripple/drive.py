"""Converter and speed-control layer of the drive.

PI speed controller -> (+ compensating current) -> per-phase hysteresis
regulation of the asymmetric half-bridge -> machine. ``run_closed_loop`` runs
the whole loop inside one compiled kernel.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import ConfigError, SimulationError
from .machine import LoadSpec, MachineParams

TRACE_COLUMNS = (
    "time_s",
    "theta_mech_rad",
    "omega_rad_s",
    "iref_A",
    "dIcomp_A",
    "i1_A",
    "i2_A",
    "i3_A",
    "torque_Nm",
)


@dataclass(frozen=True)
class CommutationSpec:
    """Firing angles in degrees of a phase's own pole pitch."""

    turn_on_angle: float = 0.0
    turn_off_angle: float = 30.0

    def __post_init__(self):
        if not self.turn_on_angle < self.turn_off_angle:
            raise ConfigError("turn_on_angle", "must be smaller than turn_off_angle")

    def validate_for(self, params):
        a = params.pole_overlap_angles
        if self.turn_on_angle < 0 or self.turn_off_angle > params.pole_pitch_deg:
            raise ConfigError("turn_off_angle", "firing angles must lie within one pole pitch")
        # motoring: conduction inside the region where dL/dtheta > 0
        lo = a[0] - 0.5 * params.fringe_width
        hi = a[1] + 0.5 * params.fringe_width
        if self.turn_on_angle < lo or self.turn_off_angle > hi:
            raise ConfigError(
                "turn_on_angle", f"conduction [{self.turn_on_angle}, {self.turn_off_angle}] leaves the rising region [{lo}, {hi}]"
            )


@dataclass(frozen=True)
class PiController:
    kp: float = 0.5
    ki: float = 4.0
    integrator_state: float = 0.0
    output_limits: tuple = (0.0, 12.0)

    def __post_init__(self):
        lo, hi = self.output_limits
        if not lo < hi:
            raise ConfigError("output_limits", "lower limit must be below upper limit")
        if self.kp < 0 or self.ki < 0:
            raise ConfigError("kp", "gains must be >= 0")


@dataclass(frozen=True)
class HysteresisSpec:
    band: float = 0.1

    def __post_init__(self):
        if not self.band > 0:
            raise ConfigError("band", "must be > 0")


def active_phases(comm, theta, n_phases=3, n_rotor_poles=4):
    """Indices of phases whose shifted, folded angle lies in [turn_on, turn_off)."""
    pitch = 2 * math.pi / n_rotor_poles
    stroke = pitch / n_phases
    on = math.radians(comm.turn_on_angle)
    off = math.radians(comm.turn_off_angle)
    out = set()
    for k in range(n_phases):
        th = kernels.fold(theta - k * stroke, pitch)
        if on <= th < off:
            out.add(k)
    return out


def hysteresis_voltage(spec, i_ref, i, active, prev_switch_state, v_dc):
    """Returns (phase voltage, switch state in {+1, 0, -1})."""
    if i < 0:
        raise ValueError("phase current must be >= 0")
    state = kernels.hysteresis_state(spec.band, i_ref, i, active, prev_switch_state)
    return state * v_dc, state


def pi_step(ctrl, speed_error, dt):
    """One PI update with clamping and conditional integration."""
    if not math.isfinite(speed_error):
        raise ValueError("speed error must be finite")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    lo, hi = ctrl.output_limits
    u, integ = kernels.pi_update(ctrl.kp, ctrl.ki, lo, hi, ctrl.integrator_state, speed_error, dt)
    return u, replace(ctrl, integrator_state=integ)


def compose_reference(i_ref, delta_comp):
    return max(0.0, i_ref + delta_comp)


def steady_current_estimate(params, load):
    """Current giving the load torque with one phase at mid-ramp slope."""
    a = params.pole_overlap_angles
    slope = (params.aligned_inductance - params.unaligned_inductance) / math.radians(a[1] - a[0])
    t_needed = load.load_torque + params.viscous_friction * load.omega_ref
    return math.sqrt(2 * t_needed / slope)


@dataclass
class SimulationTrace:
    """Sampled closed-loop run; ``data`` columns follow ``TRACE_COLUMNS``."""

    data: np.ndarray
    dt: float
    decimation: int = 1
    omega_ref: float = float("nan")
    n_phases: int = 3
    n_rotor_poles: int = 4
    turn_on_angle: float = 0.0
    turn_off_angle: float = 30.0

    @property
    def time(self):
        return self.data[:, 0]

    @property
    def theta(self):
        return self.data[:, 1]

    @property
    def omega(self):
        return self.data[:, 2]

    @property
    def i_ref(self):
        return self.data[:, 3]

    @property
    def delta_comp(self):
        return self.data[:, 4]

    @property
    def currents(self):
        return self.data[:, 5 : 5 + self.n_phases]

    @property
    def torque(self):
        return self.data[:, 8]

    @property
    def i_comp(self):
        return np.maximum(self.i_ref + self.delta_comp, 0.0)

    @property
    def stroke(self):
        return 2 * math.pi / (self.n_phases * self.n_rotor_poles)

    @property
    def pole_pitch(self):
        return 2 * math.pi / self.n_rotor_poles

    def __len__(self):
        return self.data.shape[0]

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in self.data:
                w.writerow([repr(float(x)) for x in row])
        return path

    @classmethod
    def from_csv(cls, path, **meta):
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header {rows[0]}")
        data = np.array([[float(x) for x in r] for r in rows[1:]])
        if "dt" not in meta:
            meta["dt"] = float(data[1, 0] - data[0, 0]) if len(data) > 1 else float("nan")
        return cls(data=data, **meta)


def run_closed_loop(
    params: MachineParams,
    comm: CommutationSpec,
    pi: PiController,
    hyst: HysteresisSpec,
    load: LoadSpec,
    compensator=None,
    duration: float = 1.0,
    dt: float = 1e-5,
    decimation: int = 1,
    theta0: float = 0.0,
    omega0: float | None = None,
) -> SimulationTrace:
    """Simulate the speed-controlled drive for ``duration`` seconds.

    The rotor starts at ``omega0`` (default: the target speed) with all phases
    de-energised and the PI integrator at ``pi.integrator_state``. The
    compensator, if given, sees the folded stroke angle and the PI output
    averaged over the previous stroke.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not duration > 0:
        raise ValueError("duration must be > 0")
    comm.validate_for(params)
    n_steps = int(round(duration / dt))
    decimation = int(decimation)
    out = np.zeros((n_steps // decimation + 1, len(TRACE_COLUMNS)))
    omega_ref = load.omega_ref
    if omega0 is None:
        omega0 = omega_ref
    lo, hi = pi.output_limits

    if compensator is None:
        use_fc = False
        kind, th_mf, i_mf, cons = 0, np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((1, 1))
        th_lo = th_hi = fi_lo = fi_hi = 0.0
    else:
        use_fc = True
        kind, th_mf, i_mf, cons = compensator.kernel_args()
        th_lo, th_hi = compensator.theta_range
        fi_lo, fi_hi = compensator.iref_range

    status, step = kernels.simulate_loop(
        params.packed(),
        math.radians(comm.turn_on_angle),
        math.radians(comm.turn_off_angle),
        float(pi.kp),
        float(pi.ki),
        float(lo),
        float(hi),
        float(pi.integrator_state),
        float(hyst.band),
        float(load.load_torque),
        float(omega_ref),
        float(theta0),
        float(omega0),
        float(dt),
        n_steps,
        decimation,
        use_fc,
        kind,
        th_mf,
        i_mf,
        cons,
        float(th_lo),
        float(th_hi),
        float(fi_lo),
        float(fi_hi),
        out,
    )
    if status != kernels.SIM_OK:
        raise SimulationError(f"non-finite state at t = {step * dt:.6g} s", time=step * dt)
    return SimulationTrace(
        data=out,
        dt=dt,
        decimation=decimation,
        omega_ref=omega_ref,
        n_phases=params.n_phases,
        n_rotor_poles=params.n_rotor_poles,
        turn_on_angle=comm.turn_on_angle,
        turn_off_angle=comm.turn_off_angle,
    )


class PulseShape(NamedTuple):
    first_mean: float  # first quarter of the conduction interval
    last_mean: float  # last quarter
    mid_mean: float  # middle half
    profile: np.ndarray  # mean per bin across the interval

    @property
    def edge_mean(self):
        return 0.5 * (self.first_mean + self.last_mean)


def pulse_shape(trace, settle_time=0.0, bins=4, values=None):
    """Average of a per-pulse signal (default: the compensated phase reference)
    against position within the conduction interval, pooled over all phases.

    ``values`` may be a (n, n_phases) array to profile each phase's own
    quantity, e.g. ``trace.currents``.
    """
    if bins % 4:
        raise ValueError("bins must be a multiple of 4")
    keep = trace.time >= settle_time
    theta = trace.theta[keep]
    on = math.radians(trace.turn_on_angle)
    width = math.radians(trace.turn_off_angle) - on
    sums = np.zeros(bins)
    counts = np.zeros(bins)
    for k in range(trace.n_phases):
        pos = (np.mod(theta - k * trace.stroke, trace.pole_pitch) - on) / width
        inside = (pos >= 0) & (pos < 1)
        if values is None:
            v = trace.i_comp[keep][inside]
        else:
            v = np.asarray(values)[keep][inside, k]
        idx = np.minimum((pos[inside] * bins).astype(np.int64), bins - 1)
        sums += np.bincount(idx, weights=v, minlength=bins)
        counts += np.bincount(idx, minlength=bins)
    if np.any(counts == 0):
        raise ValueError("trace does not cover every part of the conduction interval")
    prof = sums / counts
    q = bins // 4
    first = sums[:q].sum() / counts[:q].sum()
    last = sums[-q:].sum() / counts[-q:].sum()
    mid = sums[q:-q].sum() / counts[q:-q].sum()
    return PulseShape(float(first), float(last), float(mid), prof)
