"""Command-line front end.

    srm-ripple baseline       [--config PATH] [--out DIR]
    srm-ripple train          [--config PATH] [--out DIR] [--shape NAME] [--max-iters N] [--ripple-limit PCT] [--resume FILE]
    srm-ripple sweep-shapes   [--config PATH] [--out DIR] [--max-iters N]
    srm-ripple replay         --compensator FILE [--config PATH] [--out DIR]
    srm-ripple validate-config [--config PATH] [--dump]

Exit codes: 0 success, 1 validation error, 2 runtime or numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import config as cfgmod
from ._jit import backend_name
from .errors import CompensatorFileError, ConfigError, SimulationError, TrainingAborted
from .fuzzy import SHAPES, FuzzyCompensator
from .spectrum import torque_spectrum
from .trainer import measure, train

log = logging.getLogger("srm_ripple")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class ValidationFailure(Exception):
    pass


def _load_config(args):
    if args.config is None:
        cfg = cfgmod.RunConfig()
    else:
        try:
            cfg = cfgmod.load(args.config)
        except FileNotFoundError as exc:
            raise ValidationFailure(str(exc)) from None
    return cfg.with_overrides(
        shape=getattr(args, "shape", None),
        max_iters=getattr(args, "max_iters", None),
        ripple_limit=getattr(args, "ripple_limit", None),
        output_dir=getattr(args, "out", None),
    )


def _outdir(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _metrics_dict(rec):
    return {
        "ptp_ripple_Nm": rec.ptp_ripple,
        "rms_ripple_Nm": rec.rms_ripple,
        "h12_pct": rec.h12_pct,
        "mean_torque_Nm": rec.mean_torque,
        "iref_mean_A": rec.iref_mean,
        "pi_variation": rec.pi_variation,
    }


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n")


def cmd_baseline(cfg):
    out = _outdir(cfg)
    trace = cfg.simulate(None)
    trace.to_csv(out / "trace.csv")
    torque_spectrum(trace, **cfg.analysis_kwargs()).to_csv(out / "spectrum.csv")
    rec = measure(cfg, trace)
    _write_json(out / "metrics.json", _metrics_dict(rec))
    print(f"baseline: h12 = {rec.h12_pct:.3f} % of mean, ptp = {rec.ptp_ripple:.4f} N m, mean = {rec.mean_torque:.4f} N m")
    return rec


def cmd_train(cfg, resume=None):
    out = _outdir(cfg)
    initial = FuzzyCompensator.load(resume) if resume else None

    def on_iteration(rec, fc):
        fc.save(out / f"compensator_iter{rec.iteration:02d}.json")
        print(f"iteration {rec.iteration:2d}: h12 = {rec.h12_pct:7.4f} %  rms = {rec.rms_ripple:.4f} N m  ptp = {rec.ptp_ripple:.4f} N m")

    result = train(cfg, shape=cfg.fuzzy.shape if initial is None else None, initial=initial, on_iteration=on_iteration)
    result.compensator.save(out / "compensator.json")
    result.report.to_csv(out / "training_report.csv")
    before, after = result.spectra(cfg)
    before.to_csv(out / "spectrum_before.csv")
    after.to_csv(out / "spectrum_after.csv")
    result.final_trace.to_csv(out / "trace_after.csv")
    base = result.report.baseline
    fin = result.report.final
    _write_json(
        out / "metrics.json",
        {
            "baseline": _metrics_dict(base),
            "final": _metrics_dict(fin),
            "iterations": len(result.report.records),
            "termination": result.report.termination,
            "h12_reduction_pct": 100.0 * (1 - fin.h12_pct / base.h12_pct),
        },
    )
    print(
        f"{result.report.termination}: h12 {base.h12_pct:.3f} % -> {fin.h12_pct:.4f} % "
        f"({100 * (1 - fin.h12_pct / base.h12_pct):.2f} % reduction) after {len(result.report.records)} iteration(s)"
    )
    return result


def cmd_sweep_shapes(cfg):
    from .sweep import compare_shapes

    out = _outdir(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cmp = compare_shapes(cfg)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    cmp.to_csv(out / "shape_comparison.csv")
    for o in cmp.ranking():
        o.spectrum.to_csv(out / f"spectrum_{o.shape}.csv")
        o.compensator.save(out / f"compensator_{o.shape}.json")
        print(f"{o.rank}. {o.shape:16s} aggregate(12..48) = {o.aggregate:.4f} %  h12 = {o.spectrum.magnitude(12):.4f} %")
    for o in cmp.outcomes:
        if not o.ok:
            print(f"-  {o.shape:16s} FAILED: {o.error}")
    if not any(o.ok for o in cmp.outcomes):
        raise RuntimeError("every shape failed")
    return cmp


def cmd_replay(cfg, compensator_path):
    out = _outdir(cfg)
    fc = FuzzyCompensator.load(compensator_path)
    trace = cfg.simulate(fc)
    trace.to_csv(out / "trace.csv")
    torque_spectrum(trace, **cfg.analysis_kwargs()).to_csv(out / "spectrum.csv")
    rec = measure(cfg, trace)
    _write_json(out / "metrics.json", _metrics_dict(rec))
    print(f"replay: h12 = {rec.h12_pct:.4f} % of mean, ptp = {rec.ptp_ripple:.4f} N m")
    return rec


def build_parser():
    p = argparse.ArgumentParser(prog="srm-ripple", description="SRM torque-ripple compensation laboratory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="INI run configuration (default: built-in defaults)")
        sp.add_argument("--out", help="output directory (overrides [cli] output_dir)")

    common(sub.add_parser("baseline", help="simulate the uncompensated drive"))
    t = sub.add_parser("train", help="train the compensator")
    common(t)
    t.add_argument("--shape", choices=SHAPES)
    t.add_argument("--max-iters", type=int)
    t.add_argument("--ripple-limit", type=float, help="stop once the 12th harmonic is below PCT %% of mean")
    t.add_argument("--resume", type=Path, help="start from a stored compensator file")
    s = sub.add_parser("sweep-shapes", help="compare membership-function shapes")
    common(s)
    s.add_argument("--max-iters", type=int)
    r = sub.add_parser("replay", help="simulate with a stored compensator")
    common(r)
    r.add_argument("--compensator", type=Path, required=True)
    v = sub.add_parser("validate-config", help="check a configuration file")
    v.add_argument("--config", type=Path)
    v.add_argument("--dump", action="store_true", help="print the effective configuration")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    log.info("kernel backend: %s", backend_name())
    try:
        cfg = _load_config(args)
        if args.command == "validate-config":
            print(cfgmod.dumps(cfg) if args.dump else "configuration ok")
        elif args.command == "baseline":
            cmd_baseline(cfg)
        elif args.command == "train":
            cmd_train(cfg, resume=args.resume)
        elif args.command == "sweep-shapes":
            cmd_sweep_shapes(cfg)
        elif args.command == "replay":
            cmd_replay(cfg, args.compensator)
    except (ValidationFailure, ConfigError, CompensatorFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SimulationError, TrainingAborted, RuntimeError, ArithmeticError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
