"""Per-block FLOP counts, sequence lengths, collective volumes and phase plans.

FLOP counts are global (summed over every GPU).  Integer inputs give exact
integer terms; real-valued ``S`` or ``B`` (used by the threshold solver) give
floats through the same expressions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Real

from offloadsim.calibration import Affine, DiT, HardwareProfile, ModelSpec
from offloadsim.errors import ConfigError

DIT_TERMS = ("self_proj", "self_attn", "cross_proj", "cross_attn", "mlp")
DOUBLE_TERMS = ("img_proj", "txt_proj", "joint_attn", "img_mlp", "txt_mlp")
SINGLE_TERMS = ("lin1", "attn", "lin2")


@dataclass(frozen=True)
class FlopBreakdown:
    terms: dict

    @property
    def total(self):
        return sum(self.terms.values())

    def __getitem__(self, key):
        return self.terms[key]


def flops_dit_block(B, S, d, f, l_ctx) -> FlopBreakdown:
    return FlopBreakdown({
        "self_proj": 8 * B * S * d * d,
        "self_attn": 4 * B * S * S * d,
        "cross_proj": 4 * B * S * d * d + 4 * B * l_ctx * d * d,
        "cross_attn": 4 * B * S * l_ctx * d,
        "mlp": 4 * B * S * d * f,
    })


def flops_mmdit_double(B, S, d, f, l_ctx) -> FlopBreakdown:
    T = S + l_ctx
    return FlopBreakdown({
        "img_proj": 8 * B * S * d * d,
        "txt_proj": 8 * B * l_ctx * d * d,
        "joint_attn": 4 * B * T * T * d,
        "img_mlp": 4 * B * S * d * f,
        "txt_mlp": 4 * B * l_ctx * d * f,
    })


def flops_mmdit_single(B, S, d, f, l_ctx) -> FlopBreakdown:
    T = S + l_ctx
    return FlopBreakdown({
        "lin1": 2 * B * T * d * (3 * d + f),
        "attn": 4 * B * T * T * d,
        "lin2": 2 * B * T * (d + f) * d,
    })


def _exact_div(num, den):
    if isinstance(num, float) or isinstance(den, float):
        return num / den
    q = Fraction(num, den) if isinstance(num, int) else Fraction(num) / den
    return int(q) if q.denominator == 1 else q


def flops_block_avg(model: ModelSpec, B, S):
    """Block FLOPs for a DiT, or the block-count-weighted mean for an MM-DiT."""
    a = model.arch
    if isinstance(a, DiT):
        return flops_dit_block(B, S, model.d, model.f, model.l_ctx).total
    dbl = flops_mmdit_double(B, S, model.d, model.f, model.l_ctx).total
    sng = flops_mmdit_single(B, S, model.d, model.f, model.l_ctx).total
    return _exact_div(a.n_double * dbl + a.n_single * sng, a.n_double + a.n_single)


def per_gpu_flops(F, p: int):
    if p < 1:
        raise ValueError("sp degree must be >= 1")
    return _exact_div(F, p)


def seq_len(model: ModelSpec, n=None, B=1):
    """Token count for ``n`` frames; ``B`` does not enter the sequence length."""
    sf = model.seq_formula
    if isinstance(sf, Affine):
        if n is None:
            raise ConfigError("frames", f"{model.name} needs a frame count")
        return sf.scale * (n + sf.offset)
    if n is not None:
        raise ConfigError("frames", f"{model.name} has a fixed sequence length; frames not accepted")
    return sf.seq


def collective_bytes(B, S_eff, d, beta_act, p):
    """Per-GPU receive volume of one all-to-all: ``B*S_eff*d*beta_act*(p-1)/p``."""
    return _exact_div(B * S_eff * d * beta_act * (p - 1), p)


@dataclass(frozen=True)
class WorkloadPoint:
    batch: int = 1
    frames: int | None = None
    seq: Real = 0
    sp_degree: int = 2

    def __post_init__(self):
        if self.batch < 1:
            raise ConfigError("workload.batch", "batch must be >= 1")
        if self.frames is not None and self.frames < 1:
            raise ConfigError("workload.frames", "frames must be >= 1")
        if self.sp_degree < 1:
            raise ConfigError("workload.sp_degree", "sp degree must be >= 1")
        if self.seq < 1:
            raise ConfigError("workload.seq", "sequence length must be >= 1")

    @classmethod
    def for_model(cls, model: ModelSpec, *, frames=None, batch=1, sp_degree=2) -> "WorkloadPoint":
        return cls(batch=batch, frames=frames, seq=seq_len(model, frames, batch), sp_degree=sp_degree)

    @classmethod
    def at(cls, model: ModelSpec, value, hw: HardwareProfile | None = None) -> "WorkloadPoint":
        """Workload with the model's sweep variable set to ``value``."""
        p = hw.gpu_count if hw is not None else 2
        if model.sweep_var == "frames":
            return cls.for_model(model, frames=value, sp_degree=p)
        return cls.for_model(model, batch=value, sp_degree=p)


def block_flops(model: ModelSpec, w: WorkloadPoint):
    return flops_block_avg(model, w.batch, w.seq)


@dataclass(frozen=True)
class Compute:
    flops: Real


@dataclass(frozen=True)
class Collective:
    bytes: Real


@dataclass(frozen=True)
class BlockPhasePlan:
    kind: str
    phases: tuple

    @property
    def compute_flops(self):
        return sum(ph.flops for ph in self.phases if isinstance(ph, Compute))

    @property
    def collectives(self):
        return [ph for ph in self.phases if isinstance(ph, Collective)]


def _plan(kind, total, qkv, attn, coll, p, extra_split=None):
    pg = lambda x: per_gpu_flops(x, p)  # noqa: E731
    rest = total - qkv - attn
    phases = [Compute(pg(qkv)), Collective(coll), Compute(pg(attn)), Collective(coll)]
    if extra_split is None:
        phases.append(Compute(pg(rest)))
    else:
        phases += [Compute(pg(extra_split)), Collective(coll), Compute(pg(rest - extra_split))]
    return BlockPhasePlan(kind, tuple(phases))


def phase_plans(model: ModelSpec, w: WorkloadPoint) -> dict[str, BlockPhasePlan]:
    """Phase plan per block type: ``{"dit": ...}`` or ``{"double": ..., "single": ...}``.

    Each block runs QKV projection, an all-to-all, attention, an all-to-all,
    then the remaining operators.  Compute phases are per-GPU FLOPs.
    """
    B, S, d, f, L, p = w.batch, w.seq, model.d, model.f, model.l_ctx, w.sp_degree
    if isinstance(model.arch, DiT):
        fb = flops_dit_block(B, S, d, f, L)
        coll = collective_bytes(B, S, d, model.beta_act, p)
        # Self-attention output projection precedes the optional cross collective.
        extra = 2 * B * S * d * d if model.cross_attn_collective else None
        return {"dit": _plan("dit", fb.total, 6 * B * S * d * d, fb["self_attn"], coll, p, extra)}
    T = S + L
    coll = collective_bytes(B, T, d, model.beta_act, p)
    dbl = flops_mmdit_double(B, S, d, f, L)
    sng = flops_mmdit_single(B, S, d, f, L)
    plans = {}
    if model.arch.n_double:
        plans["double"] = _plan("double", dbl.total, 6 * B * T * d * d, dbl["joint_attn"], coll, p)
    if model.arch.n_single:
        # QKV share 3d/(3d+f) of the fused lin1.
        plans["single"] = _plan("single", sng.total, 6 * B * T * d * d, sng["attn"], coll, p)
    return plans


def phase_plan(model: ModelSpec, w: WorkloadPoint, hw: HardwareProfile | None = None) -> BlockPhasePlan:
    """Plan of the first block type (the only one for DiT)."""
    return next(iter(phase_plans(model, w).values()))


def block_sequence(model: ModelSpec) -> list[str]:
    """Block types in execution order: double-stream blocks, then single-stream."""
    if isinstance(model.arch, DiT):
        return ["dit"] * model.arch.num_blocks
    return ["double"] * model.arch.n_double + ["single"] * model.arch.n_single


__all__ = [
    "FlopBreakdown", "flops_dit_block", "flops_mmdit_double", "flops_mmdit_single",
    "flops_block_avg", "per_gpu_flops", "seq_len", "collective_bytes", "WorkloadPoint",
    "Compute", "Collective", "BlockPhasePlan", "phase_plan", "phase_plans",
    "block_sequence", "block_flops",
]
