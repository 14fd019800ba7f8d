"""Harmonic analysis of steady-state torque in the rotor-angle domain.

Torque is resampled uniformly in mechanical angle over an integer number of
revolutions, so harmonic order n means n cycles per revolution regardless of
residual speed ripple. Magnitudes are percentages of the mean torque.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import InsufficientDataError, SteadyStateError

TWO_PI = 2.0 * math.pi
SPECTRUM_COLUMNS = ("order", "magnitude_pct")


@dataclass(frozen=True)
class SteadyWindow:
    start: int  # first sample index used for interpolation
    theta_start: float
    revolutions: int


def steady_window(trace, revolutions=None, settle_time=0.0, max_drift=0.01):
    """The last ``revolutions`` complete revolutions after ``settle_time``.

    With ``revolutions=None`` every complete revolution after the settle time
    is used. Raises if the window is not covered or the speed drifts by more
    than ``max_drift`` between its two halves.
    """
    theta = trace.theta
    t = trace.time
    if len(theta) < 2 or np.any(np.diff(theta) <= 0):
        raise InsufficientDataError("rotor angle must increase monotonically over the trace")
    i_settle = int(np.searchsorted(t, settle_time))
    if i_settle >= len(t) - 1:
        raise InsufficientDataError(f"trace ends before the settle time {settle_time} s")
    available = (theta[-1] - theta[i_settle]) / TWO_PI
    if revolutions is None:
        revolutions = int(math.floor(available + 1e-9))
    revolutions = int(revolutions)
    if revolutions < 1 or available + 1e-9 < revolutions:
        raise InsufficientDataError(
            f"need {max(revolutions, 1)} steady revolution(s) after t = {settle_time} s, trace covers {available:.3f}"
        )
    theta_start = theta[-1] - revolutions * TWO_PI
    start = max(int(np.searchsorted(theta, theta_start, side="right")) - 1, 0)
    if max_drift is not None:
        w = trace.omega[start:]
        h = len(w) // 2
        m1, m2 = w[:h].mean(), w[h:].mean()
        drift = abs(m2 - m1) / abs(0.5 * (m1 + m2))
        if drift > max_drift:
            raise SteadyStateError(f"speed drifts by {100 * drift:.2f}% across the analysis window")
    return SteadyWindow(start=start, theta_start=float(theta_start), revolutions=revolutions)


def resample_by_angle(trace, window, samples_per_rev=4096, values=None):
    """Linear interpolation of ``values`` (default torque) on a uniform angle grid."""
    if values is None:
        values = trace.torque
    n = samples_per_rev * window.revolutions
    grid = window.theta_start + np.arange(n) * (TWO_PI * window.revolutions / n)
    return grid, np.interp(grid, trace.theta[window.start :], values[window.start :])


@dataclass
class HarmonicSpectrum:
    mean_torque: float
    magnitudes: np.ndarray  # % of mean, index 0 is order 1

    @property
    def orders(self):
        return np.arange(1, len(self.magnitudes) + 1)

    @property
    def n_max(self):
        return len(self.magnitudes)

    def magnitude(self, order):
        if not 1 <= order <= self.n_max:
            raise IndexError(f"order {order} outside 1..{self.n_max}")
        return float(self.magnitudes[order - 1])

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SPECTRUM_COLUMNS)
            for n, m in zip(self.orders, self.magnitudes):
                w.writerow([int(n), repr(float(m))])
        return path

    @classmethod
    def from_csv(cls, path, mean_torque=float("nan")):
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != SPECTRUM_COLUMNS:
            raise ValueError(f"unexpected spectrum header {rows[0]}")
        return cls(mean_torque=mean_torque, magnitudes=np.array([float(r[1]) for r in rows[1:]]))


def spectrum_from_samples(samples, revolutions, n_max=96):
    """Spectrum of a signal sampled uniformly over ``revolutions`` revolutions."""
    x = np.asarray(samples, dtype=float)
    n = len(x)
    coeffs = np.fft.rfft(x) / n
    mean = coeffs[0].real
    if abs(mean) <= 1e-12 * max(np.abs(x).max(), 1e-300):
        raise ValueError("mean torque is zero; magnitudes relative to the mean are undefined")
    idx = np.arange(1, n_max + 1) * revolutions
    if idx[-1] >= len(coeffs):
        raise ValueError(f"sampling too coarse for order {n_max}")
    mags = 2.0 * np.abs(coeffs[idx]) / abs(mean) * 100.0
    return HarmonicSpectrum(mean_torque=float(mean), magnitudes=mags)


def torque_spectrum(trace, revolutions=None, settle_time=0.0, samples_per_rev=4096, n_max=96):
    window = steady_window(trace, revolutions, settle_time)
    _, torque = resample_by_angle(trace, window, samples_per_rev)
    return spectrum_from_samples(torque, window.revolutions, n_max)


class RippleMetrics(NamedTuple):
    peak_to_peak: float
    rms_ripple: float
    h12_pct: float
    mean_torque: float


def ripple_metrics(trace, revolutions=None, settle_time=0.0, samples_per_rev=4096, n_max=96, stroke_order=12):
    """Peak-to-peak and RMS ripple (N m) and stroke-harmonic magnitude (%)."""
    window = steady_window(trace, revolutions, settle_time)
    _, torque = resample_by_angle(trace, window, samples_per_rev)
    spec = spectrum_from_samples(torque, window.revolutions, n_max)
    return RippleMetrics(
        peak_to_peak=float(torque.max() - torque.min()),
        rms_ripple=float(np.sqrt(np.mean((torque - torque.mean()) ** 2))),
        h12_pct=spec.magnitude(stroke_order),
        mean_torque=spec.mean_torque,
    )


def stroke_harmonic_orders(spectrum, strokes_per_rev=12):
    return [n for n in spectrum.orders if n % strokes_per_rev == 0]
