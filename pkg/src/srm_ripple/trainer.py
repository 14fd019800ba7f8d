"""Off-line iterative training of the ripple compensator against the simulator.

Each iteration tabulates the DC-free torque ripple of a steady-state run
against stroke angle and the mean PI reference, turns it into current
corrections on top of the present compensator output, refits the rule
consequents by least squares, strips the compensator's mean over a stroke and
re-simulates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, SteadyStateError, TrainingAborted
from .fuzzy import FuzzyCompensator, fit_consequents_lse
from .machine import torque_per_amp
from .spectrum import ripple_metrics, steady_window, torque_spectrum

REPORT_COLUMNS = ("iteration", "ptp_ripple_Nm", "rms_ripple_Nm", "h12_pct", "mean_torque_Nm", "iref_mean_A")


@dataclass
class RippleTable:
    theta: np.ndarray  # bin centres, rad in [0, stroke)
    ripple: np.ndarray  # N m, zero mean
    i_ref_mean: float
    revolutions: int
    mean_torque: float
    counts: np.ndarray = None

    @property
    def rows(self):
        return [(float(t), self.i_ref_mean, float(r)) for t, r in zip(self.theta, self.ripple)]


def extract_ripple_table(trace, strokes_per_rev=12, bins=64, settle_time=0.0, revolutions=None):
    """Bin-average torque by folded stroke angle over whole steady revolutions."""
    window = steady_window(trace, revolutions, settle_time)
    if window.revolutions < 2:
        raise InsufficientDataError("ripple extraction needs at least two steady revolutions")
    stroke = 2 * math.pi / strokes_per_rev
    sl = slice(window.start, None)
    theta = trace.theta[sl]
    keep = theta >= window.theta_start
    theta = theta[keep]
    torque = trace.torque[sl][keep]
    pos = np.mod(theta, stroke) / stroke
    idx = np.minimum((pos * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    if np.any(counts == 0):
        raise InsufficientDataError(f"{int(np.sum(counts == 0))} of {bins} angle bins received no samples")
    binned = np.bincount(idx, weights=torque, minlength=bins) / counts
    mean = binned.mean()
    return RippleTable(
        theta=(np.arange(bins) + 0.5) * stroke / bins,
        ripple=binned - mean,
        i_ref_mean=float(trace.i_ref[sl][keep].mean()),
        revolutions=window.revolutions,
        mean_torque=float(mean),
        counts=counts,
    )


def ripple_to_targets(table, fc, gain):
    """Training rows (theta, i_ref, target): present output minus gain * ripple."""
    if not gain > 0:
        raise ValueError("gain must be > 0")
    i_ref = np.full_like(table.theta, table.i_ref_mean)
    current = fc.evaluate(table.theta, i_ref)
    return np.column_stack([table.theta, i_ref, current - gain * table.ripple])


def remove_dc(fc, theta_samples, i_ref_mean):
    """Shift all consequents so the mean output over ``theta_samples`` is zero.

    The weighted-average output moves by exactly the shift, whatever the input.
    """
    theta_samples = np.asarray(theta_samples, dtype=float)
    offset = float(np.mean(fc.evaluate(theta_samples, np.full_like(theta_samples, i_ref_mean))))
    out = fc.with_consequents(fc.consequents - offset)
    # one correction pass absorbs rounding in the first subtraction
    resid = float(np.mean(out.evaluate(theta_samples, np.full_like(theta_samples, i_ref_mean))))
    out.consequents -= resid
    return out


def stroke_mean_output(fc, theta_samples, i_ref):
    theta_samples = np.asarray(theta_samples, dtype=float)
    return float(np.mean(fc.evaluate(theta_samples, np.full_like(theta_samples, i_ref))))


def revolution_means(trace, values, window):
    """Mean of ``values`` over each whole revolution in ``window``."""
    theta = trace.theta[window.start :]
    v = values[window.start :]
    rev = np.floor((theta - window.theta_start) / (2 * math.pi)).astype(np.int64)
    keep = (rev >= 0) & (rev < window.revolutions)
    return np.bincount(rev[keep], weights=v[keep], minlength=window.revolutions) / np.bincount(
        rev[keep], minlength=window.revolutions
    )


@dataclass
class IterationRecord:
    iteration: int
    ptp_ripple: float
    rms_ripple: float
    h12_pct: float
    mean_torque: float
    iref_mean: float
    # not exported to CSV
    dc_residual: float = 0.0
    training_iref: float = float("nan")
    gain: float = float("nan")
    pi_variation: float = float("nan")

    def csv_row(self):
        return [
            self.iteration,
            repr(self.ptp_ripple),
            repr(self.rms_ripple),
            repr(self.h12_pct),
            repr(self.mean_torque),
            repr(self.iref_mean),
        ]


@dataclass
class TrainingReport:
    shape: str
    baseline: IterationRecord
    records: list = field(default_factory=list)
    termination: str = ""

    @property
    def final(self):
        return self.records[-1] if self.records else self.baseline

    def best(self):
        return min(self.records, key=lambda r: r.h12_pct) if self.records else self.baseline

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            for r in self.records:
                w.writerow(r.csv_row())
        return path

    @staticmethod
    def read_csv(path):
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != REPORT_COLUMNS:
            raise ValueError(f"unexpected report header {rows[0]}")
        return [(int(r[0]), *map(float, r[1:])) for r in rows[1:]]


def measure(config, trace, iteration=0):
    """Ripple metrics and PI statistics of one steady-state run."""
    kw = config.analysis_kwargs()
    m = ripple_metrics(trace, **kw)
    window = steady_window(trace, kw["revolutions"], kw["settle_time"])
    per_rev = revolution_means(trace, trace.i_ref, window)
    variation = float(np.max(np.abs(np.diff(per_rev))) / np.mean(per_rev)) if len(per_rev) > 1 else 0.0
    return IterationRecord(
        iteration=iteration,
        ptp_ripple=m.peak_to_peak,
        rms_ripple=m.rms_ripple,
        h12_pct=m.h12_pct,
        mean_torque=m.mean_torque,
        iref_mean=float(per_rev.mean()),
        pi_variation=variation,
    )


def new_compensator(config, shape=None):
    return FuzzyCompensator.create(
        shape=shape or config.fuzzy.shape,
        stroke=config.machine.stroke,
        i_max=config.fuzzy.iref_max,
    )


def training_gain(config, i_ref_mean):
    if config.training.gain is not None:
        return config.training.gain
    return 1.0 / torque_per_amp(config.machine, max(i_ref_mean, 1e-3))


def train_iteration(config, fc, trace=None, iteration=1, previous=None):
    """One pass: tabulate ripple of ``trace`` (simulated with ``fc`` if not
    given), fit, remove DC, re-simulate and measure.

    Returns (new compensator, record, new trace).
    """
    if trace is None:
        trace = config.simulate(fc)
    table = extract_ripple_table(
        trace,
        strokes_per_rev=config.machine.strokes_per_rev,
        bins=config.training.bins,
        settle_time=config.simulation.settle_time,
        revolutions=config.spectrum.revolutions,
    )
    gain = training_gain(config, table.i_ref_mean)
    samples = ripple_to_targets(table, fc, gain)
    fitted = fit_consequents_lse(fc, samples, damping=config.fuzzy.lse_damping)
    fitted = remove_dc(fitted, table.theta, table.i_ref_mean)
    new_trace = config.simulate(fitted)
    try:
        rec = measure(config, new_trace, iteration)
    except (InsufficientDataError, SteadyStateError) as exc:
        # the new compensator knocked the drive out of steady state
        raise TrainingAborted(f"iteration {iteration}: {exc}", compensator=fitted) from exc
    rec.dc_residual = stroke_mean_output(fitted, table.theta, table.i_ref_mean)
    rec.training_iref = table.i_ref_mean
    rec.gain = gain
    if previous is not None and rec.rms_ripple > 2.0 * previous.rms_ripple:
        raise TrainingAborted(
            f"iteration {iteration}: RMS ripple grew from {previous.rms_ripple:.4g} to {rec.rms_ripple:.4g} N m",
            compensator=fitted,
        )
    return fitted, rec, new_trace


@dataclass
class TrainingResult:
    compensator: FuzzyCompensator
    report: TrainingReport
    baseline_trace: object
    final_trace: object
    history: list = field(default_factory=list)  # compensator after each iteration

    def spectra(self, config):
        kw = config.analysis_kwargs()
        return torque_spectrum(self.baseline_trace, **kw), torque_spectrum(self.final_trace, **kw)


def train(config, shape=None, max_iters=None, ripple_limit=None, initial=None, baseline_trace=None, on_iteration=None):
    """Repeat ``train_iteration`` until the stroke harmonic is below
    ``ripple_limit`` (% of mean) or ``max_iters`` is reached.
    """
    max_iters = config.training.max_iters if max_iters is None else int(max_iters)
    ripple_limit = config.training.ripple_limit if ripple_limit is None else float(ripple_limit)
    fc = initial.copy() if initial is not None else new_compensator(config, shape)
    if shape is not None and fc.shape != shape:
        raise ValueError(f"initial compensator has shape {fc.shape!r}, requested {shape!r}")
    if baseline_trace is None:
        baseline_trace = config.simulate(None)
    report = TrainingReport(shape=fc.shape, baseline=measure(config, baseline_trace, 0))
    trace = baseline_trace if initial is None else config.simulate(fc)
    previous = report.baseline if initial is None else measure(config, trace, 0)
    history = []
    for it in range(1, max_iters + 1):
        try:
            fc, rec, trace = train_iteration(config, fc, trace, iteration=it, previous=previous)
        except TrainingAborted as exc:
            report.termination = "unstable"
            exc.report = report
            raise
        report.records.append(rec)
        history.append(fc)
        if on_iteration is not None:
            on_iteration(rec, fc)
        previous = rec
        if rec.h12_pct < ripple_limit:
            report.termination = "ripple_limit"
            break
    else:
        report.termination = "max_iters"
    return TrainingResult(compensator=fc, report=report, baseline_trace=baseline_trace, final_trace=trace, history=history)
