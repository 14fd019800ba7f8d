"""Two-input zero-order Sugeno system used as the ripple compensator.

Inputs are the rotor angle folded into one stroke and the PI reference current.
Each input has five fixed membership functions; the 25 rule consequents are
the only trained parameters. Rule strength is the product of the two
memberships and the output is the strength-weighted average of consequents.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from . import kernels
from .errors import (
    CompensatorFileError,
    DegeneratePartitionError,
    RankDeficiencyError,
    TrainingDivergedError,
)

SHAPES = ("triangular", "bell", "gaussian_normal", "gaussian_open")
FILE_FORMAT = "srm-ripple-compensator"
FILE_VERSION = 1

_KIND_CODE = {
    "triangular": kernels.MF_TRIANGULAR,
    "bell": kernels.MF_BELL,
    "gaussian_normal": kernels.MF_GAUSSIAN,
    "gaussian_open": kernels.MF_GAUSSIAN,
}

BELL_SLOPE = 2.0


def _check_shape(shape):
    if shape not in SHAPES:
        raise ValueError(f"unknown membership shape {shape!r}; expected one of {SHAPES}")


@dataclass(frozen=True)
class MembershipFunction:
    """One fuzzy set.

    ``params`` layout per kind: triangular (left, peak, right); bell
    (width a, slope b, center c); gaussian kinds (center, sigma, 0).
    """

    kind: str
    params: tuple

    def __post_init__(self):
        _check_shape(self.kind)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    @property
    def center(self):
        if self.kind == "triangular":
            return self.params[1]
        if self.kind == "bell":
            return self.params[2]
        return self.params[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        p0, p1, p2 = self.params
        if self.kind == "triangular":
            up = np.where(x > p0, (x - p0) / (p1 - p0), 0.0)
            down = np.where(x < p2, (p2 - x) / (p2 - p1), 0.0)
            return np.where(x == p1, 1.0, np.where(x < p1, up, down))
        if self.kind == "bell":
            return 1.0 / (1.0 + np.abs((x - p2) / p0) ** (2.0 * p1))
        d = (x - p0) / p1
        return np.exp(-0.5 * d * d)


def build_partition(lo, hi, n=5, shape="triangular"):
    """``n`` membership functions with uniformly spaced centers on [lo, hi].

    Neighbours overlap: triangles reach the adjacent peaks, bells and normal
    gaussians cross their neighbours at 0.5, open gaussians are twice as wide.
    """
    _check_shape(shape)
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise ValueError(f"invalid range [{lo}, {hi}]")
    if n < 2:
        raise ValueError("need at least two membership functions")
    centers = np.linspace(lo, hi, n)
    h = centers[1] - centers[0]
    mfs = []
    for c in centers:
        if shape == "triangular":
            p = (c - h, c, c + h)
        elif shape == "bell":
            p = (0.5 * h, BELL_SLOPE, c)
        else:
            sigma = 0.5 * h / math.sqrt(2.0 * math.log(2.0))
            if shape == "gaussian_open":
                sigma *= 2.0
            p = (c, sigma, 0.0)
        mfs.append(MembershipFunction(shape, p))
    return mfs


@dataclass
class FuzzyCompensator:
    """Delta-I = f(stroke angle, I_ref) as a 5x5 zero-order Sugeno system."""

    shape: str
    theta_range: tuple
    iref_range: tuple
    theta_mfs: list
    iref_mfs: list
    consequents: np.ndarray = field(default=None)

    def __post_init__(self):
        _check_shape(self.shape)
        self.theta_range = tuple(float(x) for x in self.theta_range)
        self.iref_range = tuple(float(x) for x in self.iref_range)
        n_t, n_i = len(self.theta_mfs), len(self.iref_mfs)
        if self.consequents is None:
            self.consequents = np.zeros((n_t, n_i))
        self.consequents = np.array(self.consequents, dtype=float).reshape(n_t, n_i)
        if not np.all(np.isfinite(self.consequents)):
            raise ValueError("consequents must be finite")

    @classmethod
    def create(cls, shape="triangular", stroke=math.radians(30.0), i_max=12.0, n=5):
        return cls(
            shape=shape,
            theta_range=(0.0, stroke),
            iref_range=(0.0, i_max),
            theta_mfs=build_partition(0.0, stroke, n, shape),
            iref_mfs=build_partition(0.0, i_max, n, shape),
        )

    @property
    def n_rules(self):
        return self.consequents.size

    def copy(self):
        return replace(self, theta_mfs=list(self.theta_mfs), iref_mfs=list(self.iref_mfs), consequents=self.consequents.copy())

    def with_consequents(self, c):
        out = self.copy()
        out.consequents = np.array(c, dtype=float).reshape(self.consequents.shape)
        return out

    def kernel_args(self):
        th = np.array([mf.params for mf in self.theta_mfs])
        ir = np.array([mf.params for mf in self.iref_mfs])
        return _KIND_CODE[self.shape], th, ir, np.ascontiguousarray(self.consequents)

    def _clamp(self, theta, i_ref):
        t = np.clip(np.asarray(theta, dtype=float), *self.theta_range)
        i = np.clip(np.asarray(i_ref, dtype=float), *self.iref_range)
        return np.broadcast_arrays(t, i)

    def rule_strengths(self, theta, i_ref):
        """Raw product strengths, shape (..., 25) in row-major (theta, iref) order."""
        t, i = self._clamp(theta, i_ref)
        mt = np.stack([mf(t) for mf in self.theta_mfs], axis=-1)
        mi = np.stack([mf(i) for mf in self.iref_mfs], axis=-1)
        w = mt[..., :, None] * mi[..., None, :]
        return w.reshape(w.shape[:-2] + (-1,))

    def normalized_strengths(self, theta, i_ref):
        w = self.rule_strengths(theta, i_ref)
        s = w.sum(axis=-1, keepdims=True)
        if np.any(s < 1e-12):
            raise DegeneratePartitionError("rule strengths sum below 1e-12; membership functions do not cover the input")
        return w / s

    def evaluate(self, theta, i_ref):
        """Compensating current for folded stroke angle(s) and reference current(s)."""
        if np.ndim(theta) == 0 and np.ndim(i_ref) == 0:
            kind, th, ir, c = self.kernel_args()
            v = kernels.fuzzy_eval(kind, th, ir, c, *self.theta_range, *self.iref_range, float(theta), float(i_ref))
            if math.isnan(v):
                raise DegeneratePartitionError("rule strengths sum below 1e-12")
            return v
        return self.normalized_strengths(theta, i_ref) @ self.consequents.ravel()

    # persistence

    def to_dict(self):
        return {
            "format": FILE_FORMAT,
            "version": FILE_VERSION,
            "shape": self.shape,
            "theta_range": list(self.theta_range),
            "iref_range": list(self.iref_range),
            "theta_mfs": [list(mf.params) for mf in self.theta_mfs],
            "iref_mfs": [list(mf.params) for mf in self.iref_mfs],
            "consequents": self.consequents.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FILE_FORMAT:
            raise CompensatorFileError(f"not a compensator file (format={d.get('format')!r})")
        if d.get("version") != FILE_VERSION:
            raise CompensatorFileError(f"unsupported compensator file version {d.get('version')!r}, expected {FILE_VERSION}")
        try:
            shape = d["shape"]
            return cls(
                shape=shape,
                theta_range=tuple(d["theta_range"]),
                iref_range=tuple(d["iref_range"]),
                theta_mfs=[MembershipFunction(shape, p) for p in d["theta_mfs"]],
                iref_mfs=[MembershipFunction(shape, p) for p in d["iref_mfs"]],
                consequents=np.array(d["consequents"], dtype=float),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CompensatorFileError(f"malformed compensator file: {exc}") from exc

    def save(self, path):
        path = Path(path)
        # json writes floats with repr(), so the round trip is exact
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise CompensatorFileError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(d, dict):
            raise CompensatorFileError(f"{path}: expected a JSON object")
        return cls.from_dict(d)


def _samples_array(samples):
    s = np.asarray(samples, dtype=float)
    if s.ndim != 2 or s.shape[1] != 3:
        raise ValueError("samples must be rows of (theta, i_ref, target)")
    return s


def fit_consequents_lse(fc, samples, damping=1e-8):
    """Least-squares consequents for fixed premises.

    Minimises ||A c - y||^2 + damping ||c||^2 with A the normalised rule
    strengths, solved by QR of the stacked system.
    """
    s = _samples_array(samples)
    a = fc.normalized_strengths(s[:, 0], s[:, 1])
    y = s[:, 2]
    n = a.shape[1]
    if damping <= 0:
        rank = np.linalg.matrix_rank(a)
        if rank < n:
            raise RankDeficiencyError(f"design matrix has rank {rank} < {n} and damping is disabled")
        a_aug, y_aug = a, y
    else:
        a_aug = np.vstack([a, math.sqrt(damping) * np.eye(n)])
        y_aug = np.concatenate([y, np.zeros(n)])
    q, r = np.linalg.qr(a_aug)
    c = scipy.linalg.solve_triangular(r, q.T @ y_aug)
    return fc.with_consequents(c)


def squared_error(fc, samples):
    s = _samples_array(samples)
    r = fc.evaluate(s[:, 0], s[:, 1]) - s[:, 2]
    return 0.5 * float(r @ r)


def consequent_gradient(fc, samples):
    """Gradient of ``squared_error`` with respect to the 25 consequents."""
    s = _samples_array(samples)
    a = fc.normalized_strengths(s[:, 0], s[:, 1])
    r = a @ fc.consequents.ravel() - s[:, 2]
    return (a.T @ r).reshape(fc.consequents.shape)


def fit_consequents_gd(fc, samples, learning_rate, epochs):
    """Batch gradient descent on the mean squared error."""
    if not learning_rate >= 0:
        raise ValueError("learning_rate must be >= 0")
    s = _samples_array(samples)
    a = fc.normalized_strengths(s[:, 0], s[:, 1])
    y = s[:, 2]
    c = fc.consequents.ravel().copy()
    n = len(y)
    r = a @ c - y
    loss0 = float(r @ r) / n
    for _ in range(int(epochs)):
        c -= learning_rate * (a.T @ r) / n
        r = a @ c - y
        loss = float(r @ r) / n
        if not math.isfinite(loss) or loss > 1e6 * max(loss0, 1e-300):
            raise TrainingDivergedError(f"loss grew from {loss0:.3g} to {loss:.3g}; reduce the learning rate")
    return fc.with_consequents(c)
