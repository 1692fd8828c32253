"""First-order prefetch/compute overlap model and its roofline view.

A block hides the next layer's prefetch when its per-GPU compute time is at
least the prefetch service time.  ``f_star`` is the per-GPU FLOP count at
which the two are equal; ``i_star`` is the same threshold per prefetched byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from offloadsim.calibration import Affine, HardwareProfile, ModelSpec
from offloadsim.errors import ConfigError
from offloadsim.workload import WorkloadPoint, block_flops, flops_block_avg, per_gpu_flops

ADMISSIBLE_RANGE = (1.0, 1e6)


def t_comp(flops, hw: HardwareProfile) -> float:
    return float(flops) / hw.compute_rate


def t_pref(nbytes, hw: HardwareProfile) -> float:
    return float(nbytes) / hw.h2d_rate


def f_star(hw: HardwareProfile, b_pref) -> float:
    return hw.compute_rate * float(b_pref) / hw.h2d_rate


def i_star(hw: HardwareProfile) -> float:
    return hw.compute_rate / hw.h2d_rate


def attainable(hw: HardwareProfile, intensity: float) -> float:
    # Branch on the kink so attainable(i_star) is the compute roof exactly.
    if intensity >= i_star(hw):
        return hw.compute_rate
    return intensity * hw.h2d_rate


def roofline_points(hw: HardwareProfile, intensities) -> list[tuple[float, float]]:
    out = []
    for i in intensities:
        if i < 0:
            raise ValueError("operational intensity must be >= 0")
        out.append((float(i), attainable(hw, i)))
    return out


def chunk_tail_stall(chunk_bytes, hw: HardwareProfile) -> float:
    """Longest a collective can queue behind one in-flight chunk."""
    if chunk_bytes <= 0:
        raise ValueError("chunk size must be > 0")
    return hw.t_dma + float(chunk_bytes) / hw.h2d_rate


@dataclass(frozen=True)
class OverlapReport:
    f_block: float
    f_per_gpu: float
    t_comp: float
    t_pref: float
    f_star: float
    i_block: float
    i_star: float
    hidden: bool
    exposed: float


def _hidden_exact(f_per_gpu, prefetch_bytes, hw: HardwareProfile) -> bool:
    # F / (ec*P) >= b / (ep*BW), cross-multiplied in exact rationals.
    lhs = Fraction(f_per_gpu) * Fraction(hw.eta_pref) * Fraction(hw.bw_h2d)
    rhs = Fraction(prefetch_bytes) * Fraction(hw.eta_comp) * Fraction(hw.p_peak)
    return lhs >= rhs


def overlap_report(model: ModelSpec, workload: WorkloadPoint, hw: HardwareProfile,
                   prefetch_bytes=None) -> OverlapReport:
    nbytes = model.b_pref if prefetch_bytes is None else prefetch_bytes
    fb = block_flops(model, workload)
    fg = per_gpu_flops(fb, workload.sp_degree)
    tc, tp = t_comp(fg, hw), t_pref(nbytes, hw)
    return OverlapReport(
        f_block=float(fb),
        f_per_gpu=float(fg),
        t_comp=tc,
        t_pref=tp,
        f_star=f_star(hw, nbytes),
        i_block=float(fg) / float(nbytes) if nbytes else math.inf,
        i_star=i_star(hw),
        hidden=_hidden_exact(fg, nbytes, hw),
        exposed=max(0.0, tp - tc),
    )


@dataclass(frozen=True)
class CriticalConfig:
    """Threshold of the sweep variable where prefetch becomes hidden.

    ``status`` is ``"crossing"`` when a threshold exists inside the admissible
    range, otherwise ``"always-hidden"`` or ``"never-hidden"`` with ``value``
    and ``rounded`` set to ``None``.
    """

    sweep_var: str
    status: str
    value: float | None
    rounded: int | None


def _per_gpu_at(model: ModelSpec, sweep_var: str, x: float, p: int) -> float:
    if sweep_var == "frames":
        sf = model.seq_formula
        return float(flops_block_avg(model, 1, sf.scale * (x + sf.offset))) / p
    S = model.seq_formula.seq if not isinstance(model.seq_formula, Affine) else None
    if S is None:
        raise ConfigError("sweep_var", "batch sweep needs a fixed sequence model; pass frames")
    return float(flops_block_avg(model, x, S)) / p


def critical_config(model: ModelSpec, hw: HardwareProfile, sweep_var: str | None = None,
                    rel_tol: float = 1e-6) -> CriticalConfig:
    """Smallest real sweep value whose per-GPU block FLOPs reach ``f_star``.

    Bracketed bisection over ``[1, 1e6]``; FLOPs are monotone in both frames
    and batch so the bracket holds at most one crossing.
    """
    var = sweep_var or model.sweep_var
    if var == "frames" and not isinstance(model.seq_formula, Affine):
        raise ConfigError("sweep_var", f"{model.name} has no frame axis")
    if var not in ("frames", "batch"):
        raise ConfigError("sweep_var", f"unknown sweep variable {var!r}")
    p = hw.gpu_count
    target = f_star(hw, model.b_pref)
    g = lambda x: _per_gpu_at(model, var, x, p) - target  # noqa: E731
    lo, hi = ADMISSIBLE_RANGE
    if g(lo) >= 0:
        return CriticalConfig(var, "always-hidden", None, None)
    if g(hi) < 0:
        return CriticalConfig(var, "never-hidden", None, None)
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if g(mid) >= 0:
            hi = mid
        else:
            lo = mid
    x = 0.5 * (lo + hi)
    return CriticalConfig(var, "crossing", x, math.ceil(hi))


def min_residency(model: ModelSpec, workload: WorkloadPoint, hw: HardwareProfile) -> float:
    """Smallest resident fraction whose remaining prefetch fits in one block's compute."""
    fg = per_gpu_flops(block_flops(model, workload), workload.sp_degree)
    window = t_comp(fg, hw) * hw.h2d_rate
    r = 1.0 - window / float(model.b_pref)
    return min(1.0, max(0.0, r))


def nearest_grid_value(x: float, grid) -> int:
    """Nearest value of ``grid`` to ``x``; ties go to the larger value."""
    if not grid:
        raise ValueError("empty grid")
    return min(grid, key=lambda v: (abs(v - x), -v))
