"""Membership-shape sensitivity study: train every shape under the same budget
and rank the resulting torque spectra."""

from __future__ import annotations

import csv
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .fuzzy import SHAPES
from .spectrum import torque_spectrum
from .trainer import train

log = logging.getLogger(__name__)

COMPARISON_COLUMNS = ("shape", "h12", "h24", "h36", "h48", "aggregate", "rank")
RANK_ORDERS = (12, 24, 36, 48)


class ShapeRankingWarning(UserWarning):
    pass


@dataclass
class ShapeOutcome:
    shape: str
    spectrum: object = None
    report: object = None
    compensator: object = None
    error: str | None = None
    rank: int | None = None

    @property
    def ok(self):
        return self.error is None

    def harmonics(self):
        return {n: self.spectrum.magnitude(n) for n in RANK_ORDERS}

    @property
    def aggregate(self):
        return sum(self.harmonics().values())


@dataclass
class ShapeComparison:
    outcomes: list
    baseline_spectrum: object = None
    bell_best: bool = False
    bell_dominates_triangular: bool = False
    notes: list = field(default_factory=list)

    def ranking(self):
        return sorted((o for o in self.outcomes if o.ok), key=lambda o: o.rank)

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COMPARISON_COLUMNS)
            for o in self.outcomes:
                if o.ok:
                    h = o.harmonics()
                    w.writerow([o.shape, *(repr(h[n]) for n in RANK_ORDERS), repr(o.aggregate), o.rank])
                else:
                    w.writerow([o.shape, "", "", "", "", "", ""])
        return path


def _train_one(config, shape, max_iters):
    try:
        # ripple_limit 0 keeps every shape on the full iteration budget
        result = train(config, shape=shape, max_iters=max_iters, ripple_limit=0.0)
        spec = torque_spectrum(result.final_trace, **config.analysis_kwargs())
        return ShapeOutcome(shape=shape, spectrum=spec, report=result.report, compensator=result.compensator)
    except Exception as exc:  # one failing shape must not stop the others
        return ShapeOutcome(shape=shape, error=f"{type(exc).__name__}: {exc}")


def compare_shapes(config, shapes=SHAPES, max_iters=None, workers=None):
    max_iters = config.training.max_iters if max_iters is None else max_iters
    shapes = list(shapes)
    if workers is None:
        workers = min(4, len(shapes), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_train_one, [config] * len(shapes), shapes, [max_iters] * len(shapes)))
    else:
        outcomes = [_train_one(config, s, max_iters) for s in shapes]

    ok = sorted((o for o in outcomes if o.ok), key=lambda o: (o.aggregate, o.shape))
    for rank, o in enumerate(ok, start=1):
        o.rank = rank
    cmp = ShapeComparison(outcomes=outcomes)
    for o in outcomes:
        if not o.ok:
            cmp.notes.append(f"{o.shape} failed: {o.error}")
            log.error("shape %s failed: %s", o.shape, o.error)

    by_shape = {o.shape: o for o in ok}
    if "bell" in by_shape:
        cmp.bell_best = ok[0].shape == "bell"
        if "triangular" in by_shape:
            hb, ht = by_shape["bell"].harmonics(), by_shape["triangular"].harmonics()
            cmp.bell_dominates_triangular = all(hb[n] < ht[n] for n in RANK_ORDERS)
        if not cmp.bell_best:
            msg = f"bell membership functions ranked {by_shape['bell'].rank} of {len(ok)}, not first"
            cmp.notes.append(msg)
            warnings.warn(msg, ShapeRankingWarning, stacklevel=2)
        if "triangular" in by_shape and not cmp.bell_dominates_triangular:
            msg = "bell does not lower every stroke harmonic (12..48) below the triangular result"
            cmp.notes.append(msg)
            warnings.warn(msg, ShapeRankingWarning, stacklevel=2)
    return cmp
