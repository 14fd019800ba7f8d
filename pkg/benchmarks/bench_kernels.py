"""Compare the numba-compiled kernels with the pure-Python fallback.

Each backend runs in its own interpreter because the choice is made at import
time from SRM_RIPPLE_DISABLE_NUMBA.

    python benchmarks/bench_kernels.py [--duration 0.05] [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from srm_ripple import RunConfig, FuzzyCompensator, backend_name
from srm_ripple import kernels

duration, repeat = float(sys.argv[1]), int(sys.argv[2])
cfg = RunConfig()
fc = FuzzyCompensator.create("bell").with_consequents(np.linspace(-1, 1, 25))
mp = cfg.machine.packed()
kind, th_mf, i_mf, cons = fc.kernel_args()

def best(fn):
    fn()  # warm-up (numba compile or cache load)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)

def sim():
    cfg.simulate(fc, duration=duration)

def fuzzy():
    for x in np.linspace(0.0, 0.5, 2000):
        kernels.fuzzy_eval(kind, th_mf, i_mf, cons, 0.0, 0.5236, 0.0, 12.0, x, 9.5)

def torque():
    cur = np.array([9.0, 4.0, 0.0])
    for x in np.linspace(0.0, 6.28, 2000):
        kernels.electromagnetic_torque(mp, x, cur)

steps = int(round(duration / cfg.simulation.dt))
json.dump({
    "backend": backend_name(),
    "closed_loop_s": best(sim),
    "steps": steps,
    "fuzzy_2000_s": best(fuzzy),
    "torque_2000_s": best(torque),
}, sys.stdout)
"""


def run(disable, duration, repeat):
    env = dict(os.environ)
    env.pop("SRM_RIPPLE_DISABLE_NUMBA", None)
    if disable:
        env["SRM_RIPPLE_DISABLE_NUMBA"] = "1"
    out = subprocess.run(
        [sys.executable, "-c", WORKER, str(duration), str(repeat)], env=env, capture_output=True, text=True, check=True
    )
    return json.loads(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=0.05, help="simulated seconds per closed-loop run")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    fast = run(False, args.duration, args.repeat)
    slow = run(True, args.duration, args.repeat)
    print(f"closed loop: {fast['steps']} RK4 steps, best of {args.repeat}")
    print(f"{'kernel':<22}{fast['backend']:>12}{slow['backend']:>12}{'speed-up':>10}")
    for key, label in (("closed_loop_s", "closed loop"), ("fuzzy_2000_s", "fuzzy eval x2000"), ("torque_2000_s", "torque x2000")):
        a, b = fast[key], slow[key]
        print(f"{label:<22}{a * 1e3:>10.2f}ms{b * 1e3:>10.2f}ms{b / a:>9.1f}x")
    if fast["backend"] != "numba":
        print("note: numba is not installed, both columns use the Python kernels")


if __name__ == "__main__":
    main()
