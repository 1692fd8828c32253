"""Analytical and simulated cost model for overlapping weight prefetch with
compute in sequence-parallel diffusion transformer inference."""

from offloadsim.calibration import (
    MB, PRESET_NAMES, Affine, Config, DiT, Fixed, HardwareProfile, MMDiT, ModelSpec, RunDefaults,
    derive_b_pref, dump_config, load_config, load_config_file, preset, preset_hardware, preset_model,
)
from offloadsim.errors import ConfigError, OffloadSimError, SimulationError, UnknownModelError
from offloadsim.overlap import (
    CriticalConfig, OverlapReport, attainable, chunk_tail_stall, critical_config, f_star, i_star,
    min_residency, overlap_report, roofline_points, t_comp, t_pref,
)
from offloadsim.simulator import (
    Chunked, NoOffload, StepBreakdown, TraceEvent, WholeLayer, chunk_layout, simulate_step,
    simulate_sweep, validate_trace, write_trace_jsonl,
)
from offloadsim.workload import (
    WorkloadPoint, block_flops, collective_bytes, flops_block_avg, flops_dit_block, flops_mmdit_double,
    flops_mmdit_single, per_gpu_flops, phase_plan, phase_plans, seq_len,
)

__version__ = "0.1.0"
