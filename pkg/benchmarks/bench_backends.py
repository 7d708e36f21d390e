#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Runs each workload in a subprocess with LOSSFLUID_BACKEND pinned, so the
two paths never share a process.  Also checks that the backends agree:
the VIE trajectories to 1e-10 (summation order differs by rounding) and
the simulation event logs bit-exactly.

Usage: python benchmarks/bench_backends.py [--quick]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, time
import numpy as np
from lossfluid._backend import BACKEND
from lossfluid.model import RateFunction, ServiceDistribution, SystemConfig, Grid
from lossfluid import vie_zero, vie_finite, simulator
from lossfluid import _kernels

quick = {quick}
points = 2000 if quick else 10000
n_sim = 500 if quick else 5000
reps = 5 if quick else 50

rate = RateFunction.periodic_sinusoid(2/3, 1.0, 10.0, 10.0)
serv = ServiceDistribution.lognormal(-0.5, 2.0)
cfg = SystemConfig(rate=rate, service=serv, horizon=10.0)
cfgf = SystemConfig(rate=rate, service=serv, horizon=10.0, buffer_ratio=0.3)
grid = Grid.from_count(10.0, points)

_kernels.warm_up()

out = {{"backend": BACKEND}}
t0 = time.perf_counter()
traj = vie_zero.solve_zero_buffer(cfg, grid)
out["zero_vie_s"] = time.perf_counter() - t0
t0 = time.perf_counter()
trajf = vie_finite.solve_finite_buffer(cfgf, grid)
out["finite_vie_s"] = time.perf_counter() - t0
t0 = time.perf_counter()
reps_set = simulator.run_replications(cfg, n_sim, reps, 1234, grid)
out["sim_s"] = time.perf_counter() - t0

out["zero_rho_tail"] = float(traj.rho[-1])
out["finite_eta_tail"] = float(trajf.eta[-1])
out["zero_rho"] = traj.rho[:: max(1, points // 50)].tolist()
out["finite_z3"] = trajf.z3[:: max(1, points // 50)].tolist()
path = simulator.simulate_zero_buffer(cfg, 200, 99)
out["event_fingerprint"] = [float(path.times.sum()), int(path.kinds.sum()), int(path.servers.sum())]
print(json.dumps(out))
"""


def run_backend(backend: str, quick: bool) -> dict:
    env = dict(os.environ, LOSSFLUID_BACKEND=backend)
    code = WORKLOAD.format(quick=quick)
    res = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    if res.returncode != 0:
        raise RuntimeError(f"{backend} run failed:\n{res.stderr}")
    return json.loads(res.stdout.strip().splitlines()[-1])


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="small sizes for smoke runs")
    args = ap.parse_args()

    results = {b: run_backend(b, args.quick) for b in ("numba", "numpy")}
    print(f"{'workload':<14}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
    for key, label in (
        ("zero_vie_s", "zero VIE"),
        ("finite_vie_s", "finite VIE"),
        ("sim_s", "simulation"),
    ):
        a, b = results["numba"][key], results["numpy"][key]
        print(f"{label:<14}{a:>12.3f}{b:>12.3f}{b / a:>10.1f}x")

    import numpy as np

    for key, tol in (("zero_rho", 1e-10), ("finite_z3", 1e-10)):
        gap = np.max(
            np.abs(np.array(results["numba"][key]) - np.array(results["numpy"][key]))
        )
        status = "ok" if gap <= tol else "MISMATCH"
        print(f"agreement {key}: {gap:.3e} ({status})")
        if gap > tol:
            return 1
    if results["numba"]["event_fingerprint"] != results["numpy"]["event_fingerprint"]:
        print("event logs differ across backends (MISMATCH)")
        return 1
    print("event logs bit-identical across backends (ok)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
