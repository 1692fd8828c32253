import dataclasses
import json
import math

import pytest

from offloadsim import _kernel
from offloadsim.calibration import MB, preset
from offloadsim.errors import SimulationError
from offloadsim.overlap import overlap_report
from offloadsim.simulator import (
    Chunked, NoOffload, TraceEvent, WholeLayer, chunk_layout, parse_policy, simulate_step, simulate_sweep,
    validate_trace, write_trace_jsonl,
)
from offloadsim.workload import WorkloadPoint

HW, WAN = preset("wanvideo")
W81 = WorkloadPoint.at(WAN, 81, HW)


def run(policy, model=WAN, w=W81, hw=HW, **kw):
    return simulate_step(model, w, hw, policy, **kw)


def test_chunk_layout_rounding():
    lay = chunk_layout(520 * MB, 16 * MB, 0.6)
    assert (lay.n_chunks, lay.k_res) == (33, 20)
    assert lay.last_bytes == 520 * MB - 32 * 16 * MB
    assert sum(lay.sizes()) == 520 * MB
    assert chunk_layout(100, 40, 0.5).k_res == 2  # 1.5 rounds up
    big = chunk_layout(520 * MB, 1000 * MB, 0.0)
    assert big.n_chunks == 1 and big.last_bytes == 520 * MB


def test_policy_validation():
    with pytest.raises(SimulationError):
        Chunked(0)
    with pytest.raises(SimulationError):
        Chunked(16 * MB, 1.5)
    with pytest.raises(SimulationError):
        parse_policy("bogus")
    assert parse_policy("whole_layer") == WholeLayer()


def test_no_offload_breakdown():
    bd = run(NoOffload())
    assert bd.prefetch_stall_s == bd.contention_stall_s == bd.overhead_s == 0
    assert bd.total_h2d_bytes == 0
    assert bd.peak_param_bytes == 30 * 520 * MB
    assert not any(e.category == "h2d_chunk" for e in bd.trace)
    assert validate_trace(bd) == []


@pytest.mark.parametrize("c", [4 * MB, 16 * MB, 64 * MB, 256 * MB])
def test_identity_full_residency(c):
    a, b = run(Chunked(c, 1.0)), run(NoOffload())
    assert a.step_time_s == b.step_time_s
    assert a.categories() == b.categories()


def test_degeneracy_single_chunk():
    deg = run(Chunked(int(WAN.b_pref), 0.0, pausing=False))
    wl = run(WholeLayer())
    assert abs(deg.step_time_s - wl.step_time_s) <= HW.t_dma * WAN.n_layers
    assert deg.step_time_s == wl.step_time_s


@pytest.mark.parametrize("r", [0.0, 0.2, 0.45, 0.6])
def test_conservation(r):
    vals = set()
    for c in (4 * MB, 16 * MB, 64 * MB, 256 * MB):
        bd = run(Chunked(c, r))
        assert bd.total_h2d_bytes == pytest.approx(WAN.n_layers * (1 - bd.residency_effective) * WAN.b_pref,
                                                   rel=1e-12)
        vals.add(bd.total_h2d_bytes)
    if r == 0.0:
        assert vals == {WAN.n_layers * WAN.b_pref}


@pytest.mark.parametrize("name", ["wanvideo", "flux", "hunyuanvideo"])
def test_monotone_in_residency(name):
    hw, m = preset(name)
    w = WorkloadPoint.at(m, m.sweep_values[0], hw)
    rs = [k / 20 for k in range(21)]
    bds = [simulate_step(m, w, hw, Chunked(16 * MB, r)) for r in rs]
    steps = [b.step_time_s for b in bds]
    mems = [b.peak_param_bytes for b in bds]
    assert all(a >= b for a, b in zip(steps, steps[1:]))
    assert all(a <= b for a, b in zip(mems, mems[1:]))


@pytest.mark.parametrize("name", ["wanvideo", "flux", "hunyuanvideo"])
def test_sweep_ordering_and_validation(name):
    hw, m = preset(name)
    rows = simulate_sweep(m, hw, [NoOffload(), Chunked(), WholeLayer()], m.sweep_values)
    assert len(rows) == 3 * len(m.sweep_values)
    for i in range(0, len(rows), 3):
        no, ch, wl = (r.breakdown.step_time_s for r in rows[i:i + 3])
        assert no <= ch <= wl
    for r in rows:
        assert validate_trace(r.breakdown) == []
        assert r.breakdown.overhead_s <= 0.02 * r.breakdown.step_time_s


def test_empty_sweep():
    assert simulate_sweep(WAN, HW, [NoOffload()], []) == []


def test_flux_gap_shrinks_with_batch():
    hw, m = preset("flux")
    rows = simulate_sweep(m, hw, [NoOffload(), Chunked()], m.sweep_values)
    gaps = [rows[i + 1].breakdown.step_time_s / rows[i].breakdown.step_time_s for i in range(0, len(rows), 2)]
    assert all(a >= b for a, b in zip(gaps, gaps[1:]))


def test_regime_check_beyond_f_star():
    for name in ("wanvideo", "flux", "hunyuanvideo"):
        hw, m = preset(name)
        for v in m.sweep_values:
            w = WorkloadPoint.at(m, v, hw)
            if not overlap_report(m, w, hw).hidden:
                continue
            assert simulate_step(m, w, hw, Chunked()).step_time_s <= 1.05 * simulate_step(
                m, w, hw, NoOffload()).step_time_s


def test_contention_bounds_per_event():
    chunk = run(Chunked(16 * MB, 0.0))
    tail = HW.t_dma + 16 * MB / HW.h2d_rate
    stalls = [e for e in chunk.trace if e.category == "contention_stall"]
    assert stalls and max(e.t_end - e.t_start for e in stalls) <= tail + 1e-15
    wl = run(WholeLayer())
    h2d = [e for e in wl.trace if e.category == "h2d_chunk"]
    for e in (e for e in wl.trace if e.category == "contention_stall"):
        # The stall ends exactly when the whole-layer transfer in flight ends.
        owner = [x for x in h2d if x.t_start <= e.t_start < x.t_end]
        assert owner and e.t_end == owner[0].t_end


def test_rx_exclusive_and_categories_sum():
    for pol in (Chunked(4 * MB, 0.2), WholeLayer(), Chunked(64 * MB, 0.0, pausing=False)):
        bd = run(pol)
        rx = sorted((e for e in bd.trace if e.category in ("h2d_chunk", "collective")), key=lambda e: e.t_start)
        assert all(b.t_start >= a.t_end for a, b in zip(rx, rx[1:]))
        assert math.fsum(bd.categories().values()) == pytest.approx(bd.step_time_s, abs=1e-12)


def test_determinism():
    a, b = run(Chunked(16 * MB, 0.3)), run(Chunked(16 * MB, 0.3))
    assert a.trace == b.trace and a.step_time_s == b.step_time_s


@pytest.mark.skipif(not _kernel.HAVE_NUMBA, reason="numba missing")
@pytest.mark.parametrize("pol", [NoOffload(), WholeLayer(), Chunked(4 * MB, 0.0), Chunked(16 * MB, 0.4),
                                 Chunked(64 * MB, 0.0, pausing=False)])
def test_jit_matches_python(pol):
    _, flux = preset("flux")
    for model, value in ((WAN, 41), (flux, 8)):
        w = WorkloadPoint.at(model, value, HW)
        a = simulate_step(model, w, HW, pol, jit=True)
        b = simulate_step(model, w, HW, pol, jit=False)
        assert a.trace == b.trace
        assert a.step_time_s == b.step_time_s


def test_issue_offset_knob():
    late = run(WholeLayer(issue_offset_s=1e-3))
    assert late.step_time_s != run(WholeLayer()).step_time_s
    assert validate_trace(late) == []


def test_peak_memory_accounting():
    bd = run(Chunked(16 * MB, 0.6))
    lay = chunk_layout(WAN.b_pref, 16 * MB, 0.6)
    assert bd.peak_param_bytes == 30 * lay.resident_bytes + 2 * lay.offloaded_bytes
    act = dataclasses.replace(WAN, activation_overhead=123)
    assert run(NoOffload(), model=act).peak_param_bytes == 30 * WAN.b_pref + 123


def test_empty_model_errors(monkeypatch):
    from offloadsim import simulator
    monkeypatch.setattr(simulator, "block_sequence", lambda m: [])
    with pytest.raises(SimulationError):
        simulate_step(WAN, W81, HW, NoOffload())


def test_zero_duration_step_errors():
    # Single GPU drops the collectives; a zero-FLOP plan then has no duration.
    w = WorkloadPoint.for_model(WAN, frames=1, sp_degree=1)
    object.__setattr__(w, "batch", 0)
    with pytest.raises(SimulationError):
        simulate_step(WAN, w, HW, NoOffload())


def test_validate_trace_catches_rx_overlap():
    bd = run(NoOffload())
    bad = dataclasses.replace(bd, trace=bd.trace + [TraceEvent(0.0, 1.0, "h2d_chunk", 1, "fake")])
    problems = validate_trace(bad)
    assert len(problems) == 1 and "Rx" in problems[0]


def test_validate_trace_catches_bad_sum():
    bd = run(NoOffload())
    bad = dataclasses.replace(bd, step_time_s=bd.step_time_s + 1e-3)
    assert len(validate_trace(bad)) == 1


def test_validate_trace_catches_long_stall():
    bd = run(Chunked(16 * MB, 0.0))
    bad = dataclasses.replace(bd, contention_bound_s=1e-9)
    assert any("bound" in p for p in validate_trace(bad))


def test_trace_jsonl(tmp_path):
    bd = run(Chunked(64 * MB, 0.0))
    p = tmp_path / "t.jsonl"
    write_trace_jsonl(bd, p)
    lines = p.read_text().splitlines()
    assert len(lines) == len(bd.trace)
    first = json.loads(lines[0])
    assert set(first) == {"t_start", "t_end", "category", "layer", "label"}
    cats = {json.loads(x)["category"] for x in lines}
    assert cats <= {"compute", "collective", "prefetch_stall", "contention_stall", "overhead", "h2d_chunk"}
    assert "h2d_chunk" in cats


@pytest.mark.parametrize("flag,expect", [("1", "False"), ("", str(_kernel.HAVE_NUMBA))])
def test_env_flag_selects_kernel(flag, expect):
    import os
    import subprocess
    import sys
    env = dict(os.environ, OFFLOADSIM_DISABLE_JIT=flag)
    out = subprocess.run([sys.executable, "-c", "from offloadsim import _kernel; print(_kernel.JIT_ENABLED)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == expect
