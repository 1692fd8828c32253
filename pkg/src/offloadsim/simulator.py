"""Discrete-event simulation of one denoising step under an offload policy.

The p symmetric GPUs collapse onto one timeline.  A GPU's PCIe receive port
is a non-preemptive FIFO shared by host-to-device chunk copies and incoming
collective traffic; the compute stream walks the layers' phase plans.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np

from offloadsim import _kernel
from offloadsim.calibration import HardwareProfile, ModelSpec
from offloadsim.errors import SimulationError
from offloadsim.workload import Collective, Compute, WorkloadPoint, block_sequence, phase_plans

CATEGORIES = ("compute", "collective", "prefetch_stall", "contention_stall", "overhead")


@dataclass(frozen=True)
class NoOffload:
    name = "no-offload"


@dataclass(frozen=True)
class WholeLayer:
    # Delay between layer-compute start and the next layer's prefetch issue.
    issue_offset_s: float = 0.0
    name = "whole-layer"


@dataclass(frozen=True)
class Chunked:
    chunk_bytes: int = 16_000_000
    residency: float = 0.0
    pausing: bool = True
    name = "chunked"

    def __post_init__(self):
        if not self.chunk_bytes > 0:
            raise SimulationError("chunk_bytes must be > 0")
        if not 0.0 <= self.residency <= 1.0:
            raise SimulationError("residency must lie in [0, 1]")


OffloadPolicy = Union[NoOffload, WholeLayer, Chunked]


def parse_policy(name: str, chunk_bytes: int = 16_000_000, residency: float = 0.0) -> OffloadPolicy:
    key = name.lower().replace("_", "-")
    if key in ("no-offload", "none", "nooffload"):
        return NoOffload()
    if key in ("whole-layer", "layerwise", "wholelayer"):
        return WholeLayer()
    if key == "chunked":
        return Chunked(chunk_bytes, residency)
    raise SimulationError(f"unknown policy {name!r}")


@dataclass(frozen=True)
class ChunkLayout:
    """How one layer's ``b_pref`` bytes split into chunks and which stay resident."""

    n_chunks: int
    k_res: int
    chunk_bytes: float
    last_bytes: float
    resident_bytes: float
    offloaded_bytes: float

    def sizes(self) -> list[float]:
        return [self.chunk_bytes] * (self.n_chunks - 1) + [self.last_bytes]


def chunk_layout(b_pref, chunk_bytes, residency: float) -> ChunkLayout:
    n = max(1, math.ceil(b_pref / chunk_bytes))
    c = min(chunk_bytes, b_pref)
    last = b_pref - (n - 1) * c
    # Round half up: the resident fraction tracks the target symmetrically.
    k = min(n, int(math.floor(residency * n + 0.5)))
    resident = b_pref if k == n else k * c
    return ChunkLayout(n, k, c, last, resident, b_pref - resident)


class TraceEvent(NamedTuple):
    t_start: float
    t_end: float
    category: str
    layer: int
    label: str


@dataclass
class StepBreakdown:
    compute_s: float
    collective_s: float
    prefetch_stall_s: float
    contention_stall_s: float
    overhead_s: float
    step_time_s: float
    peak_param_bytes: float
    total_h2d_bytes: float
    policy: str = ""
    residency_effective: float = 0.0
    # Longest queueing delay the policy allows a collective.
    contention_bound_s: float = math.inf
    trace: list = field(default_factory=list, repr=False)

    def categories(self) -> dict[str, float]:
        return {c: getattr(self, f"{c}_s") for c in CATEGORIES}


def _layer_arrays(model: ModelSpec, w: WorkloadPoint, hw: HardwareProfile):
    plans = phase_plans(model, w)
    seq = block_sequence(model)
    if not seq:
        raise SimulationError("model has no blocks")
    rows = {}
    for kind, plan in plans.items():
        row = []
        for ph in plan.phases:
            if isinstance(ph, Compute):
                row.append((_kernel.PHASE_COMPUTE, float(ph.flops) / hw.compute_rate))
            elif isinstance(ph, Collective) and ph.bytes > 0:
                row.append((_kernel.PHASE_COLLECTIVE, hw.t_coll_latency + float(ph.bytes) / hw.bw_coll))
        rows[kind] = row
    width = max(len(r) for r in rows.values())
    kinds = np.full((len(seq), width), _kernel.PHASE_PAD, dtype=np.int64)
    durs = np.zeros((len(seq), width), dtype=np.float64)
    for i, kind in enumerate(seq):
        for j, (k, dur) in enumerate(rows[kind]):
            kinds[i, j] = k
            durs[i, j] = dur
    return kinds, durs


def simulate_step(model: ModelSpec, workload: WorkloadPoint, hw: HardwareProfile,
                  policy: OffloadPolicy, *, jit: bool | None = None) -> StepBreakdown:
    kinds, durs = _layer_arrays(model, workload, hw)
    n_layers = kinds.shape[0]
    b_pref = model.b_pref
    pausing, overhead, offset = False, 0.0, 0.0
    if isinstance(policy, NoOffload):
        layout = chunk_layout(b_pref, b_pref, 1.0)
        sizes: list[float] = []
    elif isinstance(policy, WholeLayer):
        layout = chunk_layout(b_pref, b_pref, 0.0)
        sizes = [b_pref]
        offset = policy.issue_offset_s
    elif isinstance(policy, Chunked):
        layout = chunk_layout(b_pref, policy.chunk_bytes, policy.residency)
        sizes = layout.sizes()[layout.k_res:]
        pausing = policy.pausing
        if sizes and pausing:
            overhead = hw.t_pause_resume
    else:
        raise SimulationError(f"unknown policy {policy!r}")
    chunk_dur = np.array([hw.t_dma + float(s) / hw.h2d_rate for s in sizes], dtype=np.float64)

    cap = _kernel.capacity(n_layers, kinds.shape[1], len(sizes))
    t0 = np.empty(cap)
    t1 = np.empty(cap)
    cat = np.empty(cap, dtype=np.int64)
    lay = np.empty(cap, dtype=np.int64)
    idx = np.empty(cap, dtype=np.int64)
    kernel = _kernel.get_kernel(jit)
    ne, step = kernel(kinds, durs, chunk_dur, pausing, overhead, offset, t0, t1, cat, lay, idx)
    ne = int(ne)
    if not step > 0:
        raise SimulationError("zero-duration step")

    seq = block_sequence(model)
    cat, lay, idx = cat[:ne], lay[:ne], idx[:ne]
    dur = t1[:ne] - t0[:ne]
    # fsum is exact, so the per-category order does not matter.
    sums = {c: math.fsum(dur[cat == k].tolist()) for k, c in enumerate(_kernel.CATEGORY_NAMES)}
    trace = []
    for a, b, k, L, j in zip(t0[:ne].tolist(), t1[:ne].tolist(), cat.tolist(), lay.tolist(), idx.tolist()):
        c = _kernel.CATEGORY_NAMES[k]
        if k == _kernel.CAT_H2D:
            label = f"chunk {layout.k_res + j} -> layer {L % n_layers}"
        elif k == _kernel.CAT_PREFETCH_STALL:
            label = f"wait layer {L % n_layers}"
        else:
            label = f"{seq[L]} phase {j}"
        if L == n_layers:
            label += " (next step)"
        trace.append(TraceEvent(a, b, c, L, label))

    if isinstance(policy, NoOffload):
        peak = n_layers * b_pref
    else:
        peak = n_layers * layout.resident_bytes + 2 * layout.offloaded_bytes
    bound = math.inf
    if len(chunk_dur):
        bound = float(chunk_dur.max()) if pausing else float(chunk_dur.sum())
    return StepBreakdown(
        compute_s=sums["compute"],
        collective_s=sums["collective"],
        prefetch_stall_s=sums["prefetch_stall"],
        contention_stall_s=sums["contention_stall"],
        overhead_s=sums["overhead"],
        step_time_s=float(step),
        peak_param_bytes=peak + model.activation_overhead,
        total_h2d_bytes=n_layers * layout.offloaded_bytes if sizes else 0,
        policy=policy.name,
        residency_effective=layout.resident_bytes / b_pref,
        contention_bound_s=bound,
        trace=trace,
    )


@dataclass
class SweepRow:
    model: str
    sweep_var: str
    value: int
    policy: OffloadPolicy
    breakdown: StepBreakdown


def simulate_sweep(model: ModelSpec, hw: HardwareProfile, policies, values, *,
                   jit: bool | None = None) -> list[SweepRow]:
    """One row per (value, policy), values outermost, in the given order."""
    rows = []
    for v in values:
        w = WorkloadPoint.at(model, v, hw)
        for pol in policies:
            rows.append(SweepRow(model.name, model.sweep_var, v, pol, simulate_step(model, w, hw, pol, jit=jit)))
    return rows


def validate_trace(bd: StepBreakdown, tol: float = 1e-9) -> list[str]:
    """Check a breakdown's invariants; returns human-readable violations."""
    problems = []
    parts = bd.categories()
    if any(v < 0 for v in parts.values()):
        problems.append("negative breakdown component")
    total = math.fsum(parts.values())
    if abs(total - bd.step_time_s) > tol:
        problems.append(f"categories sum to {total!r}, step time is {bd.step_time_s!r}")

    rx = sorted((e for e in bd.trace if e.category in ("h2d_chunk", "collective")), key=lambda e: (e.t_start, e.t_end))
    for a, b in zip(rx, rx[1:]):
        if b.t_start < a.t_end - tol:
            problems.append(f"overlapping Rx occupancies at t={b.t_start!r}: {a.label!r} / {b.label!r}")
            break

    crit = sorted((e for e in bd.trace if e.category != "h2d_chunk"), key=lambda e: e.t_start)
    for a, b in zip(crit, crit[1:]):
        if b.t_start < a.t_end - tol:
            problems.append(f"overlapping timeline events at t={b.t_start!r}")
            break

    ends = {e.t_end for e in bd.trace if e.category == "h2d_chunk"}
    for e in bd.trace:
        if e.category != "contention_stall":
            continue
        if e.t_end - e.t_start > bd.contention_bound_s + tol:
            problems.append(f"collective queued {e.t_end - e.t_start!r}s > bound {bd.contention_bound_s!r}s")
            break
        if e.t_end not in ends:
            problems.append(f"contention stall at t={e.t_start!r} does not end at a transfer completion")
            break
    return problems


def write_trace_jsonl(bd: StepBreakdown, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in bd.trace:
            fh.write(json.dumps({
                "t_start": e.t_start,
                "t_end": e.t_end,
                "category": e.category,
                "layer": e.layer,
                "label": e.label,
            }) + "\n")
