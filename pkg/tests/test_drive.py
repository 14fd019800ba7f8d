import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srm_ripple import (
    CommutationSpec,
    ConfigError,
    HysteresisSpec,
    PiController,
    SimulationTrace,
    active_phases,
    compose_reference,
    hysteresis_voltage,
    pi_step,
)
from srm_ripple.drive import TRACE_COLUMNS, pulse_shape, run_closed_loop
from srm_ripple.errors import SimulationError
from srm_ripple.machine import LoadSpec, MachineParams


def test_one_phase_conducts_at_a_time_and_twelve_pulses_per_turn():
    comm = CommutationSpec(0.0, 30.0)
    theta = np.linspace(0, 2 * math.pi, 7201, endpoint=False) + 1e-9
    act = [active_phases(comm, t) for t in theta]
    assert all(len(a) == 1 for a in act)
    rising = 0
    for k in range(3):
        on = np.array([k in a for a in act])
        rising += int(np.sum(on & ~np.roll(on, 1)))
    assert rising == 12


def test_short_dwell_leaves_gaps():
    comm = CommutationSpec(2.0, 28.0)
    assert active_phases(comm, math.radians(1.0)) == set()
    assert active_phases(comm, math.radians(10.0)) == {0}
    assert active_phases(comm, math.radians(40.0)) == {1}


def test_hysteresis_switching():
    spec = HysteresisSpec(band=0.2)
    assert hysteresis_voltage(spec, 10.0, 9.0, True, 0, 300.0) == (300.0, 1)
    # hard chopping: above the band both switches open
    assert hysteresis_voltage(spec, 10.0, 10.25, True, 1, 300.0) == (-300.0, -1)
    # inside the band the previous state is kept
    assert hysteresis_voltage(spec, 10.0, 10.05, True, 1, 300.0) == (300.0, 1)
    assert hysteresis_voltage(spec, 10.0, 9.95, True, -1, 300.0) == (-300.0, -1)
    # inactive phase demagnetises while current flows
    assert hysteresis_voltage(spec, 10.0, 3.0, False, 1, 300.0) == (-300.0, -1)
    assert hysteresis_voltage(spec, 10.0, 0.0, False, 1, 300.0)[0] == 0.0
    with pytest.raises(ValueError):
        hysteresis_voltage(spec, 10.0, -0.1, True, 0, 300.0)


@given(st.floats(-5, 5), st.integers(1, 200))
def test_pi_closed_form_without_saturation(err, n):
    ctrl = PiController(kp=0.5, ki=4.0, integrator_state=0.0, output_limits=(-1e9, 1e9))
    dt = 1e-3
    for _ in range(n):
        u, ctrl = pi_step(ctrl, err, dt)
    assert ctrl.integrator_state == pytest.approx(4.0 * err * dt * n, rel=1e-9, abs=1e-12)
    assert u == pytest.approx(0.5 * err + 4.0 * err * dt * n, rel=1e-9, abs=1e-12)


def test_pi_anti_windup_freezes_integrator():
    ctrl = PiController(kp=0.5, ki=4.0, integrator_state=11.9, output_limits=(0.0, 12.0))
    for _ in range(100):
        u, ctrl = pi_step(ctrl, 10.0, 1e-3)
        assert u <= 12.0
    assert u == 12.0
    assert ctrl.integrator_state < 12.0
    # recovers immediately when the error reverses
    u, ctrl = pi_step(ctrl, -1.0, 1e-3)
    assert u < 12.0


def test_pi_input_validation():
    with pytest.raises(ValueError):
        pi_step(PiController(), float("nan"), 1e-3)
    with pytest.raises(ValueError):
        pi_step(PiController(), 1.0, 0.0)
    with pytest.raises(ConfigError):
        PiController(output_limits=(5.0, 1.0))


@given(st.floats(0, 12), st.floats(-20, 20))
def test_compose_reference_clamps(i_ref, d):
    assert compose_reference(i_ref, d) == max(0.0, i_ref + d)


def test_commutation_validation():
    with pytest.raises(ConfigError):
        CommutationSpec(20.0, 10.0)
    with pytest.raises(ConfigError):
        CommutationSpec(30.0, 60.0).validate_for(MachineParams())


def test_closed_loop_regulates_speed_and_balances_torque(baseline, config):
    trace, _ = baseline
    steady = trace.time >= config.simulation.settle_time
    w = trace.omega[steady].mean()
    assert abs(w - config.load.omega_ref) / config.load.omega_ref < 0.005
    expected = config.load.load_torque + config.machine.viscous_friction * w
    assert abs(trace.torque[steady].mean() - expected) / expected < 0.01


def test_current_follows_reference_inside_band(baseline, config):
    trace, _ = baseline
    keep = trace.time >= config.simulation.settle_time
    band = config.hysteresis.band
    # slack for one integration step of current rise at full voltage
    slack = config.machine.dc_link_voltage * config.simulation.dt / config.machine.unaligned_inductance
    phase_pos = np.mod(trace.theta[keep][:, None] - np.arange(3) * trace.stroke, trace.pole_pitch)
    mid = (phase_pos > math.radians(10)) & (phase_pos < math.radians(25))
    err = np.abs(trace.currents[keep] - trace.i_comp[keep][:, None])[mid]
    assert err.max() <= band + slack


def test_trace_csv_round_trip(tmp_path, config):
    trace = config.simulate(None, duration=0.01)
    path = trace.to_csv(tmp_path / "trace.csv")
    assert path.read_text().splitlines()[0] == ",".join(TRACE_COLUMNS)
    back = SimulationTrace.from_csv(path, dt=trace.dt)
    assert np.array_equal(back.data, trace.data)


def test_decimation_subsamples(config):
    full = config.simulate(None, duration=0.01)
    dec = run_closed_loop(
        config.machine, config.commutation, config.controller(), config.hysteresis, config.load, duration=0.01, decimation=10
    )
    assert np.array_equal(dec.data, full.data[::10])


def test_pulse_shape_of_constant_reference():
    trace, _ = _flat_trace()
    ps = pulse_shape(trace, bins=8)
    assert ps.edge_mean == pytest.approx(7.0) and ps.mid_mean == pytest.approx(7.0)


def _flat_trace():
    n = 12001
    data = np.zeros((n, 9))
    data[:, 0] = np.linspace(0, 0.12, n)
    data[:, 1] = np.linspace(0, 4 * math.pi, n)
    data[:, 3] = 7.0
    return SimulationTrace(data=data, dt=1e-5), n


def test_unstable_integration_is_reported():
    with pytest.raises(SimulationError) as exc:
        run_closed_loop(
            MachineParams(), CommutationSpec(), PiController(), HysteresisSpec(), LoadSpec(), duration=0.01, omega0=float("inf")
        )
    assert exc.value.time is not None and "t =" in str(exc.value)


def test_active_set_advances_with_the_stroke():
    comm = CommutationSpec()
    for th in np.linspace(0.01, 2 * math.pi, 50):
        (k,) = active_phases(comm, th)
        assert active_phases(comm, th + math.pi / 6) == {(k + 1) % 3}


def test_simple_reference_and_pi_cases():
    assert hysteresis_voltage(HysteresisSpec(), 5.0, 0.0, True, 0, 300.0)[0] == 300.0
    assert pi_step(PiController(), 0.0, 1e-3)[0] == 0.0
    assert compose_reference(5.0, 0.0) == 5.0
    assert compose_reference(5.0, -1.2) == pytest.approx(3.8)
    assert compose_reference(0.5, -2.0) == 0.0


def test_simulation_is_bit_deterministic(config):
    a = config.simulate(None, duration=0.05)
    b = config.simulate(None, duration=0.05)
    assert a.data.tobytes() == b.data.tobytes()
