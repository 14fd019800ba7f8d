"""Switched reluctance motor torque-ripple laboratory.

Closed-loop simulation of a three-phase 6/4 SRM drive, a zero-order Sugeno
fuzzy compensator trained off-line against the simulator, and angle-domain
harmonic analysis of the resulting torque.
"""

from ._jit import backend_name
from .config import RunConfig
from .drive import (
    CommutationSpec,
    HysteresisSpec,
    PiController,
    SimulationTrace,
    active_phases,
    compose_reference,
    hysteresis_voltage,
    pi_step,
    run_closed_loop,
)
from .errors import (
    CompensatorFileError,
    ConfigError,
    DegeneratePartitionError,
    InsufficientDataError,
    RankDeficiencyError,
    SimulationError,
    SteadyStateError,
    TrainingAborted,
    TrainingDivergedError,
)
from .fuzzy import SHAPES, FuzzyCompensator, MembershipFunction, build_partition, fit_consequents_gd, fit_consequents_lse
from .machine import (
    LoadSpec,
    MachineParams,
    MachineState,
    inductance_slope,
    phase_inductance,
    phase_torque,
    step_dynamics,
    total_torque,
)
from .spectrum import HarmonicSpectrum, ripple_metrics, torque_spectrum
from .sweep import compare_shapes
from .trainer import extract_ripple_table, train, train_iteration

__version__ = "0.1.0"
