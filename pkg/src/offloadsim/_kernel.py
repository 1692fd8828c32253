"""Event loop for one denoising step over flat arrays.

The same function body runs either as a numba ``@njit`` kernel or as plain
Python.  Set ``OFFLOADSIM_DISABLE_JIT=1`` to force the pure-Python path;
it is also used when numba is not importable.  Both paths perform the same
IEEE operations in the same order and give bit-identical traces.
"""

import os

import numpy as np

CAT_COMPUTE = 0
CAT_COLLECTIVE = 1
CAT_PREFETCH_STALL = 2
CAT_CONTENTION_STALL = 3
CAT_OVERHEAD = 4
CAT_H2D = 5

CATEGORY_NAMES = ("compute", "collective", "prefetch_stall", "contention_stall", "overhead", "h2d_chunk")

PHASE_PAD = -1
PHASE_COMPUTE = 0
PHASE_COLLECTIVE = 1


def _step_kernel(phase_kind, phase_dur, chunk_dur, pausing, overhead, issue_offset,
                 out_t0, out_t1, out_cat, out_layer, out_idx):
    """Simulate one step; returns ``(n_events, step_time)``.

    ``phase_kind``/``phase_dur`` are (layers, phases); ``chunk_dur`` holds the
    service times of the non-resident chunks every layer prefetches.  Layer 0
    is resident at step start (its prefetch ran during the previous step) and
    the last layer prefetches the next step's layer 0, whose arrival closes
    the step.
    """
    n_layers = phase_kind.shape[0]
    n_phases = phase_kind.shape[1]
    n_ch = chunk_dur.shape[0]
    inf = np.inf
    ne = 0
    t = 0.0
    rx_free = 0.0
    enq = 0.0
    next_chunk = n_ch
    pref_layer = 0
    last_end = -1.0
    for layer in range(n_layers + 1):
        for ph in range(-1, n_phases):
            if layer == n_layers and ph >= 0:
                break
            limit = inf
            if ph >= 0:
                kind = phase_kind[layer, ph]
                if kind == PHASE_PAD:
                    continue
                if kind == PHASE_COMPUTE:
                    dur = phase_dur[layer, ph]
                    out_t0[ne] = t
                    out_t1[ne] = t + dur
                    out_cat[ne] = CAT_COMPUTE
                    out_layer[ne] = layer
                    out_idx[ne] = ph
                    ne += 1
                    t = t + dur
                    continue
                if overhead > 0.0:
                    out_t0[ne] = t
                    out_t1[ne] = t + overhead
                    out_cat[ne] = CAT_OVERHEAD
                    out_layer[ne] = layer
                    out_idx[ne] = ph
                    ne += 1
                    t = t + overhead
                if pausing:
                    # Pause flag: only a chunk already on the wire precedes us.
                    limit = t
                elif enq <= t:
                    # FIFO: every chunk enqueued before the collective goes first.
                    limit = inf
                else:
                    limit = -inf
            while next_chunk < n_ch:
                s = rx_free if rx_free > enq else enq
                if s >= limit:
                    break
                e = s + chunk_dur[next_chunk]
                out_t0[ne] = s
                out_t1[ne] = e
                out_cat[ne] = CAT_H2D
                out_layer[ne] = pref_layer
                out_idx[ne] = next_chunk
                ne += 1
                rx_free = e
                last_end = e
                next_chunk += 1
            if ph == -1:
                # Block-start barrier on this layer's non-resident chunks.
                if layer > 0 and last_end > t:
                    out_t0[ne] = t
                    out_t1[ne] = last_end
                    out_cat[ne] = CAT_PREFETCH_STALL
                    out_layer[ne] = layer
                    out_idx[ne] = -1
                    ne += 1
                    t = last_end
                if layer < n_layers and n_ch > 0:
                    enq = t + issue_offset
                    next_chunk = 0
                    pref_layer = layer + 1
            else:
                start = rx_free if rx_free > t else t
                if start > t:
                    out_t0[ne] = t
                    out_t1[ne] = start
                    out_cat[ne] = CAT_CONTENTION_STALL
                    out_layer[ne] = layer
                    out_idx[ne] = ph
                    ne += 1
                end = start + phase_dur[layer, ph]
                out_t0[ne] = start
                out_t1[ne] = end
                out_cat[ne] = CAT_COLLECTIVE
                out_layer[ne] = layer
                out_idx[ne] = ph
                ne += 1
                rx_free = end
                t = end
    return ne, t


step_kernel_py = _step_kernel

try:
    from numba import njit

    step_kernel_jit = njit(cache=True, nogil=True)(_step_kernel)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    step_kernel_jit = None
    HAVE_NUMBA = False

JIT_ENABLED = HAVE_NUMBA and os.environ.get("OFFLOADSIM_DISABLE_JIT", "").lower() not in ("1", "true", "yes")


def get_kernel(jit: bool | None = None):
    """Kernel for the requested path; ``None`` follows the environment flag."""
    if jit is None:
        jit = JIT_ENABLED
    if jit and not HAVE_NUMBA:
        raise RuntimeError("numba is not available")
    return step_kernel_jit if jit else step_kernel_py


def capacity(n_layers: int, n_phases: int, n_chunks: int) -> int:
    return (n_layers + 1) * (3 * n_phases + 2) + n_layers * n_chunks + 8
