"""Compare the numba and pure-Python step kernels on the preset sweeps.

    python3 benchmarks/bench_kernel.py [--repeat N]
"""

import argparse
import time

import numpy as np

from offloadsim import _kernel
from offloadsim.calibration import MB, PRESET_NAMES, preset
from offloadsim.simulator import Chunked, WholeLayer, _layer_arrays, chunk_layout, simulate_step
from offloadsim.workload import WorkloadPoint


def workloads():
    for name in PRESET_NAMES:
        hw, m = preset(name)
        for v in m.sweep_values:
            yield m, WorkloadPoint.at(m, v, hw), hw


def time_path(jit: bool, repeat: int, policies) -> float:
    cases = list(workloads())
    # Warm up (compiles the jit kernel once).
    simulate_step(*cases[0], policies[0], jit=jit)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for m, w, hw in cases:
            for pol in policies:
                simulate_step(m, w, hw, pol, jit=jit)
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_inputs(chunk_bytes):
    """Pre-built arrays so only the event loop is timed."""
    out = []
    for m, w, hw in workloads():
        kinds, durs = _layer_arrays(m, w, hw)
        sizes = chunk_layout(m.b_pref, chunk_bytes, 0.0).sizes()
        chunks = np.array([hw.t_dma + s / hw.h2d_rate for s in sizes])
        cap = _kernel.capacity(kinds.shape[0], kinds.shape[1], len(sizes))
        bufs = (np.empty(cap), np.empty(cap), np.empty(cap, np.int64), np.empty(cap, np.int64),
                np.empty(cap, np.int64))
        out.append((kinds, durs, chunks, True, hw.t_pause_resume, 0.0) + bufs)
    return out


def time_kernel(kernel, cases, repeat: int) -> float:
    kernel(*cases[0])
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for args in cases:
            kernel(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    policies = [WholeLayer(), Chunked(16 * MB), Chunked(4 * MB), Chunked(1 * MB)]
    py = time_path(False, args.repeat, policies)
    print(f"python : {py * 1e3:9.2f} ms per sweep")
    if not _kernel.HAVE_NUMBA:
        print("numba  : not installed")
        return
    nb = time_path(True, args.repeat, policies)
    print(f"numba  : {nb * 1e3:9.2f} ms per sweep")
    print(f"speedup: {py / nb:9.2f}x (end to end, includes trace assembly)")
    cases = kernel_inputs(1 * MB)
    kpy = time_kernel(_kernel.step_kernel_py, cases, args.repeat)
    knb = time_kernel(_kernel.step_kernel_jit, cases, args.repeat)
    print(f"kernel only, 1 MB chunks: python {kpy * 1e3:.2f} ms, numba {knb * 1e3:.3f} ms, {kpy / knb:.1f}x")


if __name__ == "__main__":
    main()
